#include <algorithm>
#include <cmath>
#include <sstream>

#include "cfbench/errors.hpp"
#include "cfbench/memory.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace cfbench;

namespace {

VoteDatabase csv_db(const std::string& csv, VoteScale scale = VoteScale::explicit_scale(0, 5, 3)) {
  std::istringstream in(csv);
  return read_votes_csv(in, scale);
}

ActiveCase case_of(const VoteDatabase& db, std::vector<std::pair<std::string, double>> votes,
                   std::string user = "active") {
  std::vector<Vote> observed;
  for (const auto& [item, v] : votes) observed.push_back({*db.find_item(item), v});
  return make_case(std::move(user), std::move(observed));
}

}  // namespace

TEST_SUITE("memory") {
  TEST_CASE("correlation: hand example cancels to zero") {
    const auto db = csv_db("i,j1,2\ni,j2,2\ni,j3,4\n");
    const auto a = case_of(db, {{"j1", 1}, {"j2", 5}, {"j3", 3}});
    const auto w = correlation_weight(a, 0, db, {});
    REQUIRE(w);
    CHECK(*w == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("correlation: identical vectors and constant voters") {
    const auto db = csv_db("i,j1,1\ni,j2,5\ni,j3,3\nk,j1,4\nk,j2,4\nk,j3,4\n");
    const auto a = case_of(db, {{"j1", 1}, {"j2", 5}, {"j3", 3}});
    CHECK(*correlation_weight(a, 0, db, {}) == doctest::Approx(1.0));
    CHECK(*correlation_weight(a, 1, db, {}) == 0.0);
  }

  TEST_CASE("correlation needs two common items without default voting") {
    const auto db = csv_db("i,j1,1\ni,j2,5\n");
    const auto a = case_of(db, {{"j1", 1}});
    CHECK_FALSE(correlation_weight(a, 0, db, {}));
    MemoryConfig dv;
    dv.default_voting = DefaultVoting{3.0, 5};
    CHECK(correlation_weight(a, 0, db, dv));
  }

  TEST_CASE("vector similarity examples") {
    const auto scale = VoteScale::implicit_scale();
    const auto db = csv_db("same,x,1\nsame,y,1\nshift,y,1\nshift,z,1\napart,w,1\n", scale);
    MemoryConfig cfg;
    cfg.weight = WeightKind::VectorSimilarity;
    const auto a = case_of(db, {{"x", 1}, {"y", 1}});
    CHECK(vector_similarity_weight(a, *db.find_user("same"), db, cfg) == doctest::Approx(1.0));
    CHECK(vector_similarity_weight(a, *db.find_user("shift"), db, cfg) == doctest::Approx(0.5));
    CHECK(vector_similarity_weight(a, *db.find_user("apart"), db, cfg) == 0.0);
  }

  TEST_CASE("inverse user frequency") {
    VoteDatabaseBuilder b(VoteScale::implicit_scale());
    b.declare_item("never");
    for (int u = 0; u < 100; ++u) {
      b.add("u" + std::to_string(u), "all", 1.0);
      if (u < 10) b.add("u" + std::to_string(u), "tenth", 1.0);
    }
    const auto db = b.build();
    CHECK(inverse_user_frequency(db, *db.find_item("all")) == 0.0);
    CHECK(inverse_user_frequency(db, *db.find_item("tenth")) == doctest::Approx(2.302585093));
    CHECK_THROWS_AS(inverse_user_frequency(db, *db.find_item("never")), DomainError);
  }

  TEST_CASE("case amplification") {
    CHECK(case_amplify(1.0, 2.5) == 1.0);
    CHECK(case_amplify(0.5, 2.5) == doctest::Approx(0.1767767));
    CHECK(case_amplify(-0.5, 2.5) == doctest::Approx(-0.1767767));
  }

  TEST_CASE("amplification preserves sign and the order of |w|") {
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
      const double a = 2.0 * rng.uniform01() - 1.0, b = 2.0 * rng.uniform01() - 1.0;
      const double p = 0.1 + 4.0 * rng.uniform01();
      CHECK((case_amplify(a, p) < 0) == (a < 0));
      if (std::abs(a) < std::abs(b)) CHECK(std::abs(case_amplify(a, p)) <= std::abs(case_amplify(b, p)));
    }
  }

  TEST_CASE("predict: single neighbor") {
    const auto db = csv_db("i,x,3\ni,y,4\ni,j,5\n");
    const auto a = case_of(db, {{"x", 2}, {"y", 4}});
    const auto p = predict_vote(a, *db.find_item("j"), db, {});
    CHECK(p.informed);
    CHECK(p.value == doctest::Approx(4.0));
  }

  TEST_CASE("predict: opposite deviations cancel") {
    // i has mean 7/3 (deviation +2/3 on j), k has mean 5/3 (deviation -2/3)
    const auto db = csv_db("i,x,1\ni,y,3\ni,j,3\nk,x,1\nk,y,3\nk,j,1\n");
    const auto a = case_of(db, {{"x", 2}, {"y", 4}});
    const MemoryPredictor m(db, {});
    const auto nw = m.neighbors(a);
    REQUIRE(nw.entries.size() == 2);
    CHECK(nw.kappa == doctest::Approx(0.5));
    const auto p = predict_vote(a, *db.find_item("j"), db, {});
    CHECK(p.informed);
    CHECK(p.value == doctest::Approx(3.0));
  }

  TEST_CASE("predict: no neighbor voted on the item") {
    const auto db = csv_db("i,x,3\ni,y,4\nk,j,5\n");
    const auto a = case_of(db, {{"x", 2}, {"y", 4}});
    const auto p = predict_vote(a, *db.find_item("j"), db, {});
    CHECK_FALSE(p.informed);
    CHECK(p.value == 3.0);
    CHECK_THROWS_AS(predict_vote(make_case("a", {}), 0, db, {}), DomainError);
  }

  TEST_CASE("predictions are clamped to the scale") {
    const auto db = csv_db("i,x,0\ni,y,1\ni,j,5\n");
    const auto a = case_of(db, {{"x", 4}, {"y", 5}});
    CHECK(predict_vote(a, *db.find_item("j"), db, {}).value == 5.0);
  }

  TEST_CASE("rank: order, exclusion and tie-break") {
    CHECK(order_by_score({{1, 4.2}, {0, 3.1}}) == std::vector<int>{1, 0});
    CHECK(order_by_score({{9, 3.0}, {2, 3.0}}) == std::vector<int>{2, 9});
    CHECK(order_by_score({{2, 3.0, false}, {9, 3.0, true}}) == std::vector<int>{9, 2});
    const auto db = csv_db("i,x,3\ni,y,4\ni,j,5\ni,k,1\n");
    const auto a = case_of(db, {{"x", 2}, {"y", 4}});
    const auto r = rank_items(a, db, {});
    CHECK(r.size() == 2);
    CHECK(std::find(r.begin(), r.end(), *db.find_item("x")) == r.end());
    CHECK(r.front() == *db.find_item("j"));
  }

  TEST_CASE("popularity rank") {
    const auto db = csv_db("a,i1,1\nb,i1,1\nc,i1,1\na,i2,1\nb,i3,1\n");
    const auto none = make_case("z", {});
    CHECK(popularity_rank(db, none) == std::vector<int>{0, 1, 2});
    const auto observed = make_case("z", {{0, 1.0}});
    CHECK(popularity_rank(db, observed) == std::vector<int>{1, 2});
  }

  TEST_CASE("correlation weight is symmetric and bounded") {
    Rng rng(21);
    for (int t = 0; t < 30; ++t) {
      const auto db = testing::random_database(rng, 12, 10, VoteScale::explicit_scale(0, 5, 3), 0.6);
      for (int a = 0; a < db.user_count(); ++a)
        for (int b = a + 1; b < db.user_count(); ++b) {
          const auto ca = make_case(db.user_id(a), {db.votes(a).begin(), db.votes(a).end()});
          const auto cb = make_case(db.user_id(b), {db.votes(b).begin(), db.votes(b).end()});
          const auto wab = correlation_weight(ca, b, db, {});
          const auto wba = correlation_weight(cb, a, db, {});
          REQUIRE(wab.has_value() == wba.has_value());
          if (!wab) continue;
          CHECK(*wab == doctest::Approx(*wba).epsilon(1e-12));
          CHECK(std::abs(*wab) <= 1.0);
          MemoryConfig vs;
          vs.weight = WeightKind::VectorSimilarity;
          const double v = vector_similarity_weight(ca, b, db, vs);
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
        }
    }
  }

  TEST_CASE("default voting makes correlation defined on binary data") {
    Rng rng(31);
    const auto db = testing::random_database(rng, 15, 10, VoteScale::implicit_scale(), 0.4);
    MemoryConfig cfg;
    cfg.default_voting = DefaultVoting{0.0, 0};
    for (int a = 0; a < db.user_count(); ++a) {
      const auto ca = make_case("probe", {db.votes(a).begin(), db.votes(a).end()});
      for (int b = 0; b < db.user_count(); ++b) {
        bool shared = false;
        for (const Vote& v : db.votes(b)) shared |= ca.is_observed(v.item);
        CHECK(correlation_weight(ca, b, db, cfg).has_value() == shared);
      }
    }
  }

  TEST_CASE("config json round trip and validation") {
    const VoteScale implicit = VoteScale::implicit_scale();
    const auto cfg = memory_config_from_json(
        nlohmann::json::parse(R"({"weight":"correlation","iuf":true,"default_voting":{"k":10},"case_amp":{"p":2.5}})"),
        implicit);
    CHECK(cfg.inverse_user_frequency);
    CHECK(cfg.default_voting->value == 0.0);
    CHECK(cfg.default_voting->extra_items == 10);
    CHECK(*cfg.case_amplification == 2.5);
    const auto back = memory_config_from_json(to_json(cfg), implicit);
    CHECK(to_json(back) == to_json(cfg));
    CHECK_THROWS_AS(memory_config_from_json(nlohmann::json::parse(R"({"case_amp":{"p":0}})"), implicit),
                    ConfigError);
    CHECK_THROWS_AS(memory_config_from_json(nlohmann::json::parse(R"({"weight":"vsim","default_voting":{}})"),
                                            VoteScale::explicit_scale(0, 5, 3)),
                    ConfigError);
    CHECK(memory_config_from_json(nlohmann::json::parse(R"({"default_voting":{}})"),
                                  VoteScale::explicit_scale(0, 5, 3))
              .default_voting->value == 3.0);
  }

  TEST_CASE("prediction matches the dense reference on random databases") {
    Rng rng(2024);
    int checked = 0;
    for (int t = 0; t < 40; ++t) {
      const VoteScale scale = t % 3 == 0 ? VoteScale::implicit_scale()
                              : t % 3 == 1 ? VoteScale::explicit_scale(0, 5, 3)
                                           : VoteScale::explicit_scale(1, 5, 3);
      const int users = 2 + static_cast<int>(rng.uniform_index(19));
      const int items = 2 + static_cast<int>(rng.uniform_index(14));
      const auto db = testing::random_database(rng, users, items, scale, 0.2 + 0.6 * rng.uniform01());
      const auto active = testing::random_active(rng, db, items);
      for (const MemoryConfig& cfg : testing::memory_config_grid(scale)) {
        const MemoryPredictor m(db, cfg);
        const auto all = m.predict_all(active);
        for (int j = 0; j < items; ++j) {
          const auto ref = testing::dense_predict(db, active, j, cfg);
          INFO("trial " << t << " item " << j << " config " << to_json(cfg).dump());
          CHECK(all[j].informed == ref.informed);
          CHECK(std::abs(all[j].value - ref.value) <= 1e-9);
          ++checked;
        }
      }
    }
    CHECK(checked > 1000);
  }
}
