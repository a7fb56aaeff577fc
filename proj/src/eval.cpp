#include "cfbench/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "cfbench/errors.hpp"

namespace cfbench {

void RankedScoringConfig::validate() const {
  if (!(half_life > 1.0)) throw ConfigError("half_life must be greater than 1");
}

std::optional<double> absolute_deviation(std::span<const double> predicted,
                                         std::span<const double> actual) {
  if (predicted.size() != actual.size())
    throw DomainError("absolute_deviation: prediction and vote counts differ");
  if (actual.empty()) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) sum += std::abs(predicted[i] - actual[i]);
  return sum / static_cast<double>(actual.size());
}

namespace {

double rank_discount(std::size_t rank0, double half_life) {
  return std::exp2(-static_cast<double>(rank0) / (half_life - 1.0));
}

}  // namespace

double ranked_utility(std::span<const int> ranking, std::span<const Vote> actual,
                      const RankedScoringConfig& cfg) {
  cfg.validate();
  std::unordered_map<int, double> gain;
  for (const Vote& v : actual)
    if (v.value > cfg.neutral) gain[v.item] = v.value - cfg.neutral;
  double total = 0.0;
  for (std::size_t k = 0; k < ranking.size() && !gain.empty(); ++k) {
    const auto it = gain.find(ranking[k]);
    if (it == gain.end()) continue;
    total += it->second * rank_discount(k, cfg.half_life);
    gain.erase(it);
  }
  return total;
}

double max_ranked_utility(std::span<const Vote> actual, const RankedScoringConfig& cfg) {
  cfg.validate();
  std::vector<double> gains;
  for (const Vote& v : actual)
    if (v.value > cfg.neutral) gains.push_back(v.value - cfg.neutral);
  std::sort(gains.begin(), gains.end(), std::greater<>());
  double total = 0.0;
  for (std::size_t k = 0; k < gains.size(); ++k) total += gains[k] * rank_discount(k, cfg.half_life);
  return total;
}

double normalized_ranked_score(std::span<const double> utilities,
                               std::span<const double> maxima) {
  if (utilities.size() != maxima.size())
    throw DomainError("normalized_ranked_score: utility and maximum counts differ");
  if (utilities.empty()) throw DomainError("normalized_ranked_score: no cases");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    if (!(maxima[i] > 0.0))
      throw DomainError("normalized_ranked_score: case with no achievable utility");
    num += utilities[i];
    den += maxima[i];
  }
  return 100.0 * num / den;
}

double blocked_anova_mse(const Eigen::Ref<const Eigen::MatrixXd>& scores) {
  const auto b = scores.rows();
  const auto m = scores.cols();
  if (b < 2 || m < 2) throw DomainError("blocked ANOVA needs at least 2 cases and 2 algorithms");
  const double grand = scores.mean();
  const Eigen::VectorXd case_mean = scores.rowwise().mean();
  const Eigen::RowVectorXd algo_mean = scores.colwise().mean();
  double sse = 0.0;
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double e = scores(i, j) - case_mean(i) - algo_mean(j) + grand;
      sse += e * e;
    }
  return sse / static_cast<double>((b - 1) * (m - 1));
}

double bonferroni_required_difference(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                                      double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DomainError("confidence must lie in (0, 1)");
  const double mse = blocked_anova_mse(scores);
  const double scale = std::max(1.0, scores.cwiseAbs().maxCoeff());
  if (!(mse > 1e-24 * scale * scale)) return 0.0;
  const auto b = static_cast<double>(scores.rows());
  const auto m = static_cast<double>(scores.cols());
  const double alpha = (1.0 - confidence) / (m * (m - 1.0) / 2.0);
  const boost::math::students_t dist((m - 1.0) * (b - 1.0));
  const double t = boost::math::quantile(dist, 1.0 - alpha / 2.0);
  return t * std::sqrt(2.0 * mse / b);
}

std::string to_string(MetricKind kind) {
  return kind == MetricKind::Ranked ? "ranked" : "deviation";
}

MetricKind parse_metric(const std::string& text) {
  if (text == "ranked") return MetricKind::Ranked;
  if (text == "deviation" || text == "absolute_deviation") return MetricKind::Deviation;
  throw ConfigError("unknown metric '" + text + "' (expected ranked or deviation)");
}

std::string format_fixed(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  double rounded = std::nearbyint(value * scale) / scale;
  if (rounded == 0.0) rounded = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded);
  return buf;
}

}  // namespace cfbench
