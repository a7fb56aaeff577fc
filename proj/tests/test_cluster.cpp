#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cfbench/cluster.hpp"
#include "cfbench/errors.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace cfbench;

namespace {

ClusterModel one_item_model(double p1, double p2) {
  ClusterModel m;
  m.scale = VoteScale::implicit_scale();
  m.items = {"a"};
  m.class_prior = Eigen::Vector2d(0.5, 0.5);
  Eigen::MatrixXd c1(1, 2), c2(1, 2);
  c1 << 1.0 - p1, p1;
  c2 << 1.0 - p2, p2;
  m.cond = {c1, c2};
  return m;
}

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int classes) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t u = 0; u < labels.size(); ++u) r(static_cast<Eigen::Index>(u), labels[u]) = 1.0;
  return r;
}

void check_distributions(const ClusterModel& m) {
  CHECK(m.class_prior.sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK((m.class_prior.array() > 0.0).all());
  for (const auto& c : m.cond) {
    CHECK((c.array() > 0.0).all());
    for (Eigen::Index j = 0; j < c.rows(); ++j) CHECK(std::abs(c.row(j).sum() - 1.0) <= 1e-10);
  }
}

double select_best_restart(const VoteDatabase& db, EmOptions options, std::uint64_t seed) {
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < 6; ++r) best = std::max(best, em_fit(db, 2, seed * 16 + r, options).report.cs_score);
  return best;
}

}  // namespace

TEST_SUITE("cluster") {
  TEST_CASE("posterior examples") {
    const auto m = one_item_model(0.9, 0.1);
    const auto post = cluster_posterior(m, make_case("x", {{0, 1.0}}));
    CHECK(post(0) == doctest::Approx(0.9));
    CHECK(post(1) == doctest::Approx(0.1));
    const auto sym = cluster_posterior(one_item_model(0.3, 0.3), make_case("x", {{0, 1.0}}));
    CHECK(sym(0) == doctest::Approx(0.5));

    ClusterModel single = m;
    single.class_prior = Eigen::VectorXd::Ones(1);
    single.cond.resize(1);
    CHECK(cluster_posterior(single, make_case("x", {}))(0) == doctest::Approx(1.0));
  }

  TEST_CASE("expected vote examples") {
    const VoteScale s = VoteScale::explicit_scale(0, 5, 3);
    Eigen::VectorXd point = Eigen::VectorXd::Zero(7);
    point(s.state_of(4.0)) = 1.0;
    CHECK(expected_vote(s, point) == 4.0);
    Eigen::VectorXd uniform = Eigen::VectorXd::Constant(7, 1.0 / 6.0);
    uniform(kNoVote) = 0.0;
    CHECK(expected_vote(s, uniform) == doctest::Approx(2.5));
    Eigen::VectorXd none = Eigen::VectorXd::Zero(7);
    none(kNoVote) = 1.0;
    CHECK_THROWS_AS(expected_vote(s, none), DomainError);
  }

  TEST_CASE("prediction mixes class conditionals by the posterior") {
    ClusterModel m;
    m.scale = VoteScale::explicit_scale(0, 5, 3);
    m.items = {"e", "t"};
    m.class_prior = Eigen::Vector2d(0.5, 0.5);
    Eigen::MatrixXd c1 = Eigen::MatrixXd::Zero(2, 7), c2 = Eigen::MatrixXd::Zero(2, 7);
    c1.row(0).setConstant(0.55 / 6.0);
    c1(0, m.scale.state_of(3.0)) = 0.45;
    c2.row(0).setConstant(0.95 / 6.0);
    c2(0, m.scale.state_of(3.0)) = 0.05;
    c1(1, m.scale.state_of(1.0)) = 1.0;
    c2(1, m.scale.state_of(5.0)) = 1.0;
    m.cond = {c1, c2};
    const auto active = make_case("x", {{0, 3.0}});
    const auto post = cluster_posterior(m, make_case("x", {{0, 3.0}, {1, 1.0}}));
    CHECK(post.size() == 2);
    const auto p = cluster_predict(m, active, 1);
    CHECK(p.expected_vote == doctest::Approx(1.4));
    CHECK(p.distribution.sum() == doctest::Approx(1.0));
    CHECK_THROWS_AS(cluster_predict(m, active, 0), DomainError);
  }

  TEST_CASE("label permutation leaves predictions unchanged") {
    Rng rng(3);
    const auto db = testing::random_database(rng, 40, 6, VoteScale::explicit_scale(1, 5, 3), 0.4);
    const auto fit = em_fit(db, 3, 9);
    ClusterModel perm = fit.model;
    perm.class_prior = Eigen::Vector3d(fit.model.class_prior(2), fit.model.class_prior(0),
                                       fit.model.class_prior(1));
    perm.cond = {fit.model.cond[2], fit.model.cond[0], fit.model.cond[1]};
    const auto active = make_case("x", {{0, 4.0}, {2, 1.0}});
    for (int j : {1, 3, 4, 5}) {
      const auto a = cluster_predict(fit.model, active, j);
      const auto b = cluster_predict(perm, active, j);
      CHECK(a.expected_vote == doctest::Approx(b.expected_vote).epsilon(1e-12));
      CHECK(a.expected_vote >= 1.0);
      CHECK(a.expected_vote <= 5.0);
    }
  }

  TEST_CASE("one class: smoothed marginals in one iteration") {
    Rng rng(1);
    const auto db = testing::random_database(rng, 30, 5, VoteScale::explicit_scale(0, 2, 1), 0.5);
    const auto fit = em_fit(db, 1, 7);
    CHECK(fit.report.iterations == 1);
    CHECK(fit.report.converged);
    const int r = db.scale().num_states();
    for (int j = 0; j < db.item_count(); ++j) {
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(r);
      for (const Voter& v : db.voters(j)) counts(db.scale().state_of(v.value)) += 1.0;
      counts(kNoVote) = db.user_count() - counts.sum();
      for (int s = 0; s < r; ++s)
        CHECK(fit.model.cond[0](j, s) ==
              doctest::Approx((counts(s) + 1.0 / r) / (db.user_count() + 1.0)).epsilon(1e-12));
    }
  }

  TEST_CASE("complete-data M-step equals the smoothed frequencies") {
    Rng rng(2);
    const auto db = testing::random_database(rng, 25, 4, VoteScale::explicit_scale(1, 3, 2), 0.6);
    std::vector<int> labels;
    for (int u = 0; u < db.user_count(); ++u) labels.push_back(u % 3);
    const auto m = m_step(db, one_hot(labels, 3), 1.0);
    const int r = db.scale().num_states();
    for (int c = 0; c < 3; ++c) {
      double nc = 0.0;
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(db.item_count(), r);
      for (int u = 0; u < db.user_count(); ++u) {
        if (labels[u] != c) continue;
        nc += 1.0;
        std::vector<int> state(db.item_count(), kNoVote);
        for (const Vote& v : db.votes(u)) state[v.item] = db.scale().state_of(v.value);
        for (int j = 0; j < db.item_count(); ++j) counts(j, state[j]) += 1.0;
      }
      CHECK(m.class_prior(c) == (nc + 1.0 / 3.0) / (db.user_count() + 1.0));
      for (int j = 0; j < db.item_count(); ++j)
        for (int s = 0; s < r; ++s) CHECK(m.cond[c](j, s) == (counts(j, s) + 1.0 / r) / (nc + 1.0));
    }
  }

  TEST_CASE("EM objective is monotone and distributions stay valid") {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
      const auto db = testing::random_database(rng, 60, 8, t % 2 ? VoteScale::implicit_scale()
                                                                  : VoteScale::explicit_scale(0, 3, 1),
                                               0.3);
      const auto fit = em_fit(db, 2 + t % 3, 100 + t);
      CHECK(fit.report.monotone);
      for (std::size_t k = 1; k < fit.report.objective.size(); ++k)
        CHECK(fit.report.objective[k] >= fit.report.objective[k - 1] - 1e-9 * db.user_count());
      CHECK(fit.report.objective.back() ==
            doctest::Approx(map_objective(fit.model, db, 1.0)).epsilon(1e-9));
      check_distributions(fit.model);
    }
  }

  TEST_CASE("separable populations are recovered") {
    std::vector<int> labels;
    const auto db = testing::block_mixture(5, 2, 200, 10, 0.8, 0.02, &labels);
    const auto fit = em_fit(db, 2, 11);
    const Eigen::MatrixXd resp = e_step(fit.model, db);
    const int a = resp(0, 0) > 0.5 ? 0 : 1;
    int good = 0;
    for (int u = 0; u < db.user_count(); ++u)
      if (resp(u, labels[u] == labels[0] ? a : 1 - a) >= 0.99) ++good;
    CHECK(good >= db.user_count() - 2);
  }

  TEST_CASE("errors and warnings") {
    CHECK_THROWS_AS(em_fit(VoteDatabase{}, 2, 1), DomainError);
    Rng rng(6);
    const auto db = testing::random_database(rng, 3, 3, VoteScale::implicit_scale(), 0.5);
    CHECK_THROWS_AS(em_fit(db, 0, 1), DomainError);
    CHECK(em_fit(db, 5, 1).report.warnings.size() == 1);
    ClusterModel other = em_fit(db, 1, 1).model;
    other.items.push_back("extra");
    CHECK_THROWS_AS(cheeseman_stutz_score(other, db), DomainError);
  }

  TEST_CASE("Dirichlet-multinomial marginal") {
    CHECK(log_dirichlet_multinomial(Eigen::Vector2d(0, 0), Eigen::Vector2d(5, 5)) == 0.0);
    CHECK(log_dirichlet_multinomial(Eigen::Vector2d(1, 0), Eigen::Vector2d(5, 5)) ==
          doctest::Approx(std::log(0.5)));
    CHECK_THROWS_AS(log_dirichlet_multinomial(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 5)),
                    DomainError);
  }

  TEST_CASE("CS with one class is the exact marginal likelihood") {
    Rng rng(7);
    const auto db = testing::random_database(rng, 7, 3, VoteScale::explicit_scale(0, 2, 1), 0.5);
    const auto fit = em_fit(db, 1, 1);
    const double exact = testing::exact_mixture_log_marginal(db, 1, 1.0);
    CHECK(fit.report.cs_score == doctest::Approx(exact).epsilon(1e-10));
    CHECK(fit.report.cs_score < 0.0);
  }

  TEST_CASE("CS against the enumerated marginal with two classes") {
    // Tiny samples leave the class posterior diffuse: CS sits well below the
    // exact value under the default prior and tightens as the prior grows.
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto db = testing::block_mixture(seed, 2, 8, 2, 0.85, 0.15);
      EmOptions weak, strong;
      strong.prior_strength = 10.0;
      const double cs1 = select_best_restart(db, weak, seed);
      const double exact1 = testing::exact_mixture_log_marginal(db, 2, 1.0);
      CHECK(cs1 < exact1);
      CHECK(cs1 > 1.5 * exact1);
      const double cs10 = select_best_restart(db, strong, seed);
      const double exact10 = testing::exact_mixture_log_marginal(db, 2, 10.0);
      CHECK(std::abs(cs10 + std::log(2.0) - exact10) <= 0.05 * std::abs(exact10));
    }
  }

  TEST_CASE("selection with c_max = 1") {
    Rng rng(8);
    const auto db = testing::random_database(rng, 10, 3, VoteScale::implicit_scale(), 0.5);
    const auto sel = select_cluster_model(db, 1, 3);
    CHECK(sel.best.model.num_classes() == 1);
    CHECK(sel.table.size() == 1);
  }

  TEST_CASE("model json round trip is exact") {
    Rng rng(9);
    const auto db = testing::random_database(rng, 30, 5, VoteScale::explicit_scale(0, 3, 1), 0.4);
    const auto fit = em_fit(db, 3, 2);
    const auto back = cluster_model_from_json(nlohmann::json::parse(to_json(fit.model).dump()));
    CHECK(back.items == fit.model.items);
    CHECK(back.class_prior == fit.model.class_prior);
    for (int c = 0; c < 3; ++c) CHECK(back.cond[c] == fit.model.cond[c]);
    CHECK_THROWS_AS(cluster_model_from_json(nlohmann::json::parse(R"({"format":"x"})")), ParseError);
  }

  TEST_CASE("predictor agrees with the reference prediction") {
    Rng rng(11);
    const auto db = testing::random_database(rng, 50, 6, VoteScale::explicit_scale(1, 5, 3), 0.4);
    const auto fit = em_fit(db, 3, 4);
    const ClusterPredictor p(fit.model, db);
    for (int t = 0; t < 10; ++t) {
      const auto active = testing::random_active(rng, db, 3);
      for (int j = 0; j < db.item_count(); ++j) {
        if (active.is_observed(j)) continue;
        const std::vector<int> one{j};
        CHECK(p.predict(active, one)[0] ==
              doctest::Approx(cluster_predict(fit.model, active, j).expected_vote).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("predictor falls back to popularity outside the trained items") {
    Rng rng(10);
    const auto db = testing::random_database(rng, 40, 8, VoteScale::implicit_scale(), 0.4);
    const auto top = restrict_to_top_items(db, 4);
    const ClusterPredictor p(em_fit(top, 2, 1).model, db);
    const auto active = make_case("x", {{db.item_count() - 1, 1.0}});
    const auto ranked = p.rank(active);
    CHECK(ranked.size() == static_cast<std::size_t>(db.item_count() - 1));
    const auto pred = p.predict(active, std::vector<int>{0, 1});
    CHECK(pred.size() == 2);
  }
}
