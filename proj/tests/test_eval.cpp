#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cfbench/errors.hpp"
#include "cfbench/eval.hpp"
#include "cfbench/memory.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace cfbench;

namespace {

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hi - lo + 1)));
}

void shuffle(Rng& rng, std::vector<int>& v) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

class ThrowingPredictor : public Predictor {
 public:
  explicit ThrowingPredictor(std::string bad_user) : bad_user_(std::move(bad_user)) {}
  std::vector<double> predict(const ActiveCase& active, std::span<const int> items) const override {
    if (active.user == bad_user_) throw std::runtime_error("boom");
    return std::vector<double>(items.size(), 1.0);
  }
  std::vector<int> rank(const ActiveCase& active) const override {
    if (active.user == bad_user_) throw std::runtime_error("boom");
    return {};
  }

 private:
  std::string bad_user_;
};

struct Bench {
  VoteDatabase train;
  std::vector<ActiveCase> cases;
};

Bench small_bench(std::uint64_t seed) {
  Rng rng(seed);
  Bench b;
  b.train = testing::random_database(rng, 40, 10, VoteScale::implicit_scale(), 0.35);
  const auto test = testing::random_database(rng, 30, 10, VoteScale::implicit_scale(), 0.35);
  b.cases = generate_active_cases(test, Protocol::all_but_one(), seed);
  return b;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("ranked utility examples") {
    const RankedScoringConfig cfg;
    const std::vector<Vote> one{{7, 1.0}};
    CHECK(ranked_utility(std::vector<int>{7}, one, cfg) == 1.0);
    CHECK(ranked_utility(std::vector<int>{1, 2, 3, 4, 7}, one, cfg) == doctest::Approx(0.5));
    CHECK(ranked_utility(std::vector<int>{1, 7}, one, cfg) ==
          doctest::Approx(0.840896).epsilon(1e-6));
    CHECK(ranked_utility(std::vector<int>{1, 2}, one, cfg) == 0.0);
    CHECK(normalized_ranked_score(std::vector<double>{ranked_utility(std::vector<int>{1, 7}, one, cfg)},
                                  std::vector<double>{1.0}) ==
          doctest::Approx(84.0896).epsilon(1e-6));
  }

  TEST_CASE("neutral vote removes low votes") {
    RankedScoringConfig cfg;
    cfg.neutral = 3.0;
    const std::vector<Vote> actual{{0, 2.0}, {1, 5.0}, {2, 4.0}};
    CHECK(max_ranked_utility(actual, cfg) == doctest::Approx(2.0 + std::exp2(-0.25)));
    CHECK(ranked_utility(std::vector<int>{0, 1, 2}, actual, cfg) ==
          doctest::Approx(2.0 * std::exp2(-0.25) + std::exp2(-0.5)));
    cfg.half_life = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("ranked utility matches the brute-force sum") {
    Rng rng(31);
    for (int t = 0; t < 100; ++t) {
      std::vector<int> ranking(20);
      std::iota(ranking.begin(), ranking.end(), 0);
      shuffle(rng, ranking);
      ranking.resize(static_cast<std::size_t>(uniform_int(rng, 0, 20)));
      std::vector<Vote> actual;
      for (int j = 0; j < 20; ++j)
        if (rng.uniform01() < 0.3) actual.push_back({j, static_cast<double>(uniform_int(rng, 0, 5))});
      const RankedScoringConfig cfg{2.0 + 8.0 * rng.uniform01(), static_cast<double>(t % 3)};
      CHECK(std::abs(ranked_utility(ranking, actual, cfg) -
                     testing::brute_ranked_utility(ranking, actual, cfg.half_life, cfg.neutral)) <=
            1e-9);
    }
  }

  TEST_CASE("perfect lists score 100") {
    const RankedScoringConfig cfg;
    std::vector<double> util, max;
    for (int c = 0; c < 5; ++c) {
      std::vector<Vote> actual{{c, 1.0}, {c + 10, 1.0}};
      util.push_back(ranked_utility(std::vector<int>{c, c + 10, 99}, actual, cfg));
      max.push_back(max_ranked_utility(actual, cfg));
    }
    CHECK(normalized_ranked_score(util, max) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK_THROWS_AS(normalized_ranked_score(std::vector<double>{}, std::vector<double>{}),
                    DomainError);
    CHECK_THROWS_AS(normalized_ranked_score(std::vector<double>{0.0}, std::vector<double>{0.0}),
                    DomainError);
  }

  TEST_CASE("utility never exceeds the maximum") {
    Rng rng(32);
    const RankedScoringConfig cfg;
    for (int t = 0; t < 200; ++t) {
      std::vector<int> ranking(12);
      std::iota(ranking.begin(), ranking.end(), 0);
      shuffle(rng, ranking);
      std::vector<Vote> actual;
      for (int j = 0; j < 12; ++j)
        if (rng.uniform01() < 0.4) actual.push_back({j, static_cast<double>(uniform_int(rng, 0, 3))});
      CHECK(ranked_utility(ranking, actual, cfg) <= max_ranked_utility(actual, cfg) + 1e-12);
      CHECK(ranked_utility(ranking, actual, cfg) >= 0.0);
    }
  }

  TEST_CASE("absolute deviation examples") {
    CHECK(*absolute_deviation(std::vector<double>{3, 4}, std::vector<double>{5, 2}) == 2.0);
    CHECK(*absolute_deviation(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
    CHECK(!absolute_deviation(std::vector<double>{}, std::vector<double>{}).has_value());
    CHECK_THROWS_AS(absolute_deviation(std::vector<double>{1}, std::vector<double>{}), DomainError);
  }

  TEST_CASE("required difference on a hand-worked matrix") {
    Eigen::MatrixXd s(3, 2);
    s << 1, 2, 3, 5, 4, 4;
    CHECK(blocked_anova_mse(s) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(std::abs(bonferroni_required_difference(s, 0.9) - 2.91998558 * std::sqrt(1.0 / 3.0)) <=
          1e-8);
    Eigen::MatrixXd same(4, 3);
    same.col(0) << 1, 5, 2, 8;
    same.col(1) = same.col(0);
    same.col(2) = same.col(0);
    CHECK(bonferroni_required_difference(same, 0.9) == 0.0);
    CHECK_THROWS_AS(bonferroni_required_difference(s.topRows(1), 0.9), DomainError);
    CHECK_THROWS_AS(bonferroni_required_difference(s, 1.0), DomainError);
  }

  TEST_CASE("residual mean square matches the textbook decomposition") {
    Rng rng(33);
    for (int t = 0; t < 20; ++t) {
      const int b = uniform_int(rng, 2, 30), m = uniform_int(rng, 2, 6);
      Eigen::MatrixXd s(b, m);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < m; ++j) s(i, j) = static_cast<double>(i % 4) + rng.normal();
      CHECK(blocked_anova_mse(s) == doctest::Approx(testing::textbook_anova_mse(s)).epsilon(1e-10));
      const double rd = bonferroni_required_difference(s, 0.9);
      CHECK(rd > 0.0);
      CHECK(bonferroni_required_difference(s, 0.95) > rd);
      Eigen::MatrixXd shifted = s;
      shifted.col(0).array() += 3.0;
      CHECK(bonferroni_required_difference(shifted, 0.9) == doctest::Approx(rd).epsilon(1e-9));
    }
  }

  TEST_CASE("experiment scores every algorithm on the same cases") {
    const auto b = small_bench(1);
    const PopularityPredictor pop(b.train);
    const MemoryPredictor cr(b.train, MemoryConfig{});
    const std::vector<NamedPredictor> algos{{"POP", &pop}, {"CR", &cr}};
    ExperimentOptions opt;
    opt.protocol = "AllBut1";
    const auto rep = run_experiment(b.train, b.cases, algos, MetricKind::Ranked, opt);
    CHECK(rep.algorithms == std::vector<std::string>{"POP", "CR"});
    CHECK(rep.scores.cols() == 2);
    CHECK(rep.case_count() + rep.excluded_cases == static_cast<int>(b.cases.size()));
    const double total_max = std::accumulate(rep.max_utility.begin(), rep.max_utility.end(), 0.0);
    for (int a = 0; a < 2; ++a)
      CHECK(std::abs(rep.aggregates[a] - 100.0 * rep.scores.col(a).sum() / total_max) <= 1e-9);
    REQUIRE(rep.required_difference.has_value());
    CHECK(*rep.required_difference ==
          doctest::Approx(bonferroni_required_difference(rep.block_scores(), 0.9)));
    CHECK(rep.block_scores().colwise().mean()(0) == doctest::Approx(rep.aggregates[0]));

    opt.jobs = 4;
    const auto par = run_experiment(b.train, b.cases, algos, MetricKind::Ranked, opt);
    CHECK(to_json(par).dump() == to_json(rep).dump());
  }

  TEST_CASE("single algorithm has no required difference") {
    const auto b = small_bench(2);
    const PopularityPredictor pop(b.train);
    const std::vector<NamedPredictor> algos{{"POP", &pop}};
    const auto rep = run_experiment(b.train, b.cases, algos, MetricKind::Deviation, {});
    CHECK(!rep.required_difference.has_value());
    CHECK(render_table(std::span(&rep, 1), TableFormat::Csv).find("RD,n/a") != std::string::npos);
  }

  TEST_CASE("a failing algorithm drops the case for everyone") {
    const auto b = small_bench(3);
    const PopularityPredictor pop(b.train);
    const ThrowingPredictor bad(b.cases.front().user);
    const std::vector<NamedPredictor> algos{{"POP", &pop}, {"BAD", &bad}};
    const auto rep = run_experiment(b.train, b.cases, algos, MetricKind::Deviation, {});
    REQUIRE(rep.dropped.size() == 1);
    CHECK(rep.dropped.front().find(b.cases.front().user) == 0);
    CHECK(std::find(rep.case_users.begin(), rep.case_users.end(), b.cases.front().user) ==
          rep.case_users.end());
  }

  TEST_CASE("report json round trip and rendering") {
    const auto b = small_bench(4);
    const PopularityPredictor pop(b.train);
    MemoryConfig vcfg;
    vcfg.weight = WeightKind::VectorSimilarity;
    const MemoryPredictor vsim(b.train, vcfg);
    const std::vector<NamedPredictor> algos{{"POP", &pop}, {"VSIM", &vsim}};
    ExperimentOptions opt;
    opt.protocol = "AllBut1";
    const auto rep = run_experiment(b.train, b.cases, algos, MetricKind::Ranked, opt);
    const auto text = to_json(rep).dump();
    const auto back = report_from_json(nlohmann::json::parse(text));
    CHECK(to_json(back).dump() == text);
    CHECK(back.scores == rep.scores);

    const auto table = render_table(std::span(&back, 1), TableFormat::Text);
    std::vector<std::string> lines;
    std::istringstream in(table);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    REQUIRE(lines.size() == 6);
    CHECK(lines.back().rfind("RD", 0) == 0);
    CHECK(lines[lines.size() - 2].find_first_not_of('-') == std::string::npos);
    CHECK(lines[2].find(format_fixed(rep.aggregates[0], 2)) != std::string::npos);

    const auto csv = render_table(std::span(&back, 1), TableFormat::Csv);
    CHECK(csv.rfind("Algorithm,AllBut1\nPOP,", 0) == 0);
    CHECK(render_table(std::span(&back, 1), TableFormat::Markdown).find("| RD ") != std::string::npos);
    CHECK_THROWS_AS(report_from_json(nlohmann::json::parse(R"({"format":"cfbench-report"})")),
                    ParseError);
  }

  TEST_CASE("format and metric parsing") {
    CHECK(format_fixed(0.125, 2) == "0.12");
    CHECK(format_fixed(-0.0001, 2) == "0.00");
    CHECK(format_fixed(63.5949, 2) == "63.59");
    CHECK(parse_metric("absolute_deviation") == MetricKind::Deviation);
    CHECK_THROWS_AS(parse_metric("rmse"), ConfigError);
    CHECK(parse_table_format("md") == TableFormat::Markdown);
    CHECK_THROWS_AS(parse_table_format("xml"), ConfigError);
  }
}
