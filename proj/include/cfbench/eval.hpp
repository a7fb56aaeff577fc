#ifndef CFBENCH_EVAL_HPP_
#define CFBENCH_EVAL_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cfbench/predictor.hpp"
#include "cfbench/votedata.hpp"
#include "json.hpp"

namespace cfbench {

struct RankedScoringConfig {
  /// Rank at which an item has a 50% chance of being viewed.
  double half_life = 5.0;
  /// Votes at or below this carry no utility.
  double neutral = 0.0;

  void validate() const;
};

/// Mean |predicted - actual| over a case's targets; nullopt when there are
/// no targets (the case is excluded, not scored).
std::optional<double> absolute_deviation(std::span<const double> predicted,
                                         std::span<const double> actual);

/// Half-life utility of a ranked list. Items absent from `actual` count as
/// the neutral vote and contribute nothing.
double ranked_utility(std::span<const int> ranking, std::span<const Vote> actual,
                      const RankedScoringConfig& cfg);

/// Utility of the ideal list: the voted items first, by declining vote.
double max_ranked_utility(std::span<const Vote> actual, const RankedScoringConfig& cfg);

/// 100 * sum(utilities) / sum(maxima). DomainError on an empty set or a
/// non-positive maximum.
double normalized_ranked_score(std::span<const double> utilities,
                               std::span<const double> maxima);

/// Residual mean square of the two-way ANOVA of a cases x algorithms matrix
/// (cases are blocks, one observation per cell).
double blocked_anova_mse(const Eigen::Ref<const Eigen::MatrixXd>& scores);

/// Smallest difference between two algorithm means that is significant at
/// `confidence` for the whole experiment (Bonferroni over all pairs).
double bonferroni_required_difference(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                                      double confidence);

enum class MetricKind { Ranked, Deviation };

std::string to_string(MetricKind kind);
MetricKind parse_metric(const std::string& text);

struct NamedPredictor {
  std::string name;
  const Predictor* predictor;
};

struct ExperimentOptions {
  RankedScoringConfig ranked;
  double confidence = 0.9;
  int jobs = 1;
  std::uint64_t seed = 0;
  std::string protocol;
};

struct ExperimentReport {
  std::string protocol;
  MetricKind metric = MetricKind::Ranked;
  std::uint64_t seed = 0;
  double confidence = 0.9;
  RankedScoringConfig ranked;
  std::vector<std::string> algorithms;
  /// User id of each scored case, in case order.
  std::vector<std::string> case_users;
  /// cases x algorithms: R_a for ranked scoring, S_a for deviation.
  Eigen::MatrixXd scores;
  /// Per-case maximum utility (ranked scoring only).
  std::vector<double> max_utility;
  /// R per algorithm (ranked) or mean S_a (deviation).
  std::vector<double> aggregates;
  std::optional<double> required_difference;
  /// Cases with no targets or no positive-utility target.
  int excluded_cases = 0;
  /// One line per case removed because some algorithm failed on it.
  std::vector<std::string> dropped;
  /// Mean evidence usage per algorithm, where the model reports one.
  std::vector<std::optional<double>> evidence_usage;
  /// Wall time per algorithm; kept out of the JSON form.
  std::vector<double> seconds;

  int case_count() const { return static_cast<int>(scores.rows()); }
  /// Per-case scores on the scale of the aggregate, the unit the ANOVA uses.
  Eigen::MatrixXd block_scores() const;
};

/// Scores every algorithm on the same cases. A case on which any algorithm
/// throws is dropped for all of them. DataError when no case is scorable.
ExperimentReport run_experiment(const VoteDatabase& train, std::span<const ActiveCase> cases,
                                std::span<const NamedPredictor> algorithms, MetricKind metric,
                                const ExperimentOptions& options);

nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

enum class TableFormat { Text, Csv, Markdown };
TableFormat parse_table_format(const std::string& text);

/// Algorithms as rows, one column per report (protocol), RD as the last
/// row. All reports must share the metric and algorithm list.
std::string render_table(std::span<const ExperimentReport> reports, TableFormat format);

/// Half-even rounding to a fixed number of decimals, as text.
std::string format_fixed(double value, int decimals);

}  // namespace cfbench

#endif  // CFBENCH_EVAL_HPP_
