#include "cfbench/memory.hpp"

#include <algorithm>
#include <cmath>

#include "cfbench/errors.hpp"

namespace cfbench {

void MemoryConfig::validate(const VoteScale& scale) const {
  if (case_amplification && !(*case_amplification > 0.0))
    throw ConfigError("case amplification power must be > 0");
  if (default_voting) {
    if (default_voting->extra_items < 0)
      throw ConfigError("default voting: extra item count must be >= 0");
    if (weight == WeightKind::VectorSimilarity && !scale.implicit)
      throw ConfigError(
          "default voting with vector similarity only completes implicit vote vectors");
    if (!std::isfinite(default_voting->value))
      throw ConfigError("default voting: default vote must be finite");
  }
}

MemoryConfig memory_config_from_json(const nlohmann::json& j, const VoteScale& scale) {
  MemoryConfig cfg;
  const std::string weight = j.value("weight", "correlation");
  if (weight == "correlation")
    cfg.weight = WeightKind::Correlation;
  else if (weight == "vector_similarity" || weight == "vsim")
    cfg.weight = WeightKind::VectorSimilarity;
  else
    throw ConfigError("unknown weight kind '" + weight + "'");
  if (j.contains("default_voting") && !j["default_voting"].is_null()) {
    const auto& dv = j["default_voting"];
    DefaultVoting d;
    d.value = dv.value("d", scale.implicit ? 0.0 : scale.neutral);
    d.extra_items = dv.value("k", 10000);
    cfg.default_voting = d;
  }
  cfg.inverse_user_frequency = j.value("iuf", false);
  if (j.contains("case_amp") && !j["case_amp"].is_null())
    cfg.case_amplification = j["case_amp"].value("p", 2.5);
  cfg.validate(scale);
  return cfg;
}

nlohmann::json to_json(const MemoryConfig& cfg) {
  nlohmann::json j;
  j["weight"] = cfg.weight == WeightKind::Correlation ? "correlation" : "vector_similarity";
  if (cfg.default_voting)
    j["default_voting"] = {{"d", cfg.default_voting->value},
                           {"k", cfg.default_voting->extra_items}};
  j["iuf"] = cfg.inverse_user_frequency;
  if (cfg.case_amplification) j["case_amp"] = {{"p", *cfg.case_amplification}};
  return j;
}

double inverse_user_frequency(const VoteDatabase& db, int item) {
  const int voters = db.item_vote_count(item);
  if (voters == 0)
    throw DomainError("inverse user frequency of item " + db.item_id(item) +
                      " without voters");
  return std::log(static_cast<double>(db.user_count()) / voters);
}

double case_amplify(double w, double p) {
  const double magnitude = std::pow(std::abs(w), p);
  return w < 0.0 ? -magnitude : magnitude;
}

struct MemoryPredictor::Accumulator {
  int user;
  int count = 0;
  double f = 0.0;     // sum f over the common items
  double fx = 0.0;    // sum f x'
  double fy = 0.0;    // sum f y'
  double fxx = 0.0;
  double fyy = 0.0;
  double fxy = 0.0;
  double ffxy = 0.0;  // sum f^2 x y, unshifted (vector similarity)
};

namespace {

// Votes are shifted by the default vote before forming sums, so filled-in
// entries vanish and large extra-item counts do not cost precision.
double shift_of(const MemoryConfig& cfg, const VoteScale& scale) {
  return cfg.default_voting ? cfg.default_voting->value : scale.neutral;
}

// A covariance this small next to its own terms is round-off of the one-pass sums.
constexpr double kCancellation = 1e-10;

bool degenerate(double variance, double weight_total, double second_moment) {
  return !(variance > 1e-10 * std::abs(weight_total * second_moment));
}

}  // namespace

MemoryPredictor::MemoryPredictor(const VoteDatabase& db, MemoryConfig cfg)
    : db_(db), cfg_(cfg), factor_(db.item_count(), 1.0), users_(db.user_count()) {
  cfg_.validate(db.scale());
  if (cfg_.inverse_user_frequency)
    for (int j = 0; j < db.item_count(); ++j)
      factor_[j] = db.item_vote_count(j) > 0 ? inverse_user_frequency(db, j) : 0.0;
  const double shift = shift_of(cfg_, db.scale());
  for (int u = 0; u < db.user_count(); ++u) {
    UserSummary& s = users_[u];
    s.mean = mean_vote(db, u);
    double sq = 0.0;
    for (const Vote& v : db.votes(u)) {
      const double f = factor_[v.item];
      const double y = v.value - shift;
      s.weight_sum += f;
      s.shifted_sum += f * y;
      s.shifted_sq += f * y * y;
      sq += f * f * v.value * v.value;
    }
    s.norm = std::sqrt(sq);
  }
}

int MemoryPredictor::self_index(const ActiveCase& active) const {
  const auto self = db_.find_user(active.user);
  return self ? *self : -1;
}

std::vector<MemoryPredictor::Accumulator> MemoryPredictor::accumulate(
    const ActiveCase& active) const {
  const double shift = shift_of(cfg_, db_.scale());
  std::vector<int> slot(db_.user_count(), -1);
  std::vector<Accumulator> out;
  for (const Vote& a : active.observed) {
    if (a.item < 0 || a.item >= db_.item_count())
      throw DomainError("active case references an unknown item");
    const double f = factor_[a.item];
    const double x = a.value - shift;
    for (const Voter& other : db_.voters(a.item)) {
      int& s = slot[other.user];
      if (s < 0) {
        s = static_cast<int>(out.size());
        out.push_back(Accumulator{other.user});
      }
      Accumulator& acc = out[s];
      const double y = other.value - shift;
      ++acc.count;
      acc.f += f;
      acc.fx += f * x;
      acc.fy += f * y;
      acc.fxx += f * x * x;
      acc.fyy += f * y * y;
      acc.fxy += f * x * y;
      acc.ffxy += f * f * a.value * other.value;
    }
  }
  return out;
}

MemoryPredictor::ActiveSummary MemoryPredictor::summarize(const ActiveCase& active) const {
  const double shift = shift_of(cfg_, db_.scale());
  ActiveSummary a;
  double sq = 0.0;
  for (const Vote& v : active.observed) {
    const double f = factor_[v.item];
    const double x = v.value - shift;
    a.weight_sum += f;
    a.shifted_sum += f * x;
    a.shifted_sq += f * x * x;
    sq += f * f * v.value * v.value;
  }
  a.norm = std::sqrt(sq);
  return a;
}

std::optional<double> MemoryPredictor::weight_from(const Accumulator& acc,
                                                   const ActiveSummary& a,
                                                   WeightKind kind) const {
  const UserSummary& o = users_[acc.user];
  if (kind == WeightKind::VectorSimilarity) {
    const double norms = a.norm * o.norm;
    if (!(norms > 0.0)) return 0.0;
    return std::clamp(acc.ffxy / norms, -1.0, 1.0);
  }

  double w, sx, sy, sxx, syy, sxy;
  if (cfg_.default_voting) {
    if (acc.count < 1) return std::nullopt;
    // union of both vote sets plus the extra agreed items, each at weight 1
    w = a.weight_sum + o.weight_sum - acc.f + cfg_.default_voting->extra_items;
    sx = a.shifted_sum;
    sxx = a.shifted_sq;
    sy = o.shifted_sum;
    syy = o.shifted_sq;
    sxy = acc.fxy;
  } else {
    if (acc.count < 2) return std::nullopt;
    w = acc.f;
    sx = acc.fx;
    sy = acc.fy;
    sxx = acc.fxx;
    syy = acc.fyy;
    sxy = acc.fxy;
  }
  if (!(w > 0.0)) return 0.0;
  const double var_x = w * sxx - sx * sx;
  const double var_y = w * syy - sy * sy;
  if (degenerate(var_x, w, sxx) || degenerate(var_y, w, syy)) return 0.0;
  const double cov = w * sxy - sx * sy;
  if (std::abs(cov) <= kCancellation * (std::abs(w * sxy) + std::abs(sx * sy))) return 0.0;
  return std::clamp(cov / std::sqrt(var_x * var_y), -1.0, 1.0);
}

std::optional<double> MemoryPredictor::correlation(const ActiveCase& active,
                                                   int other) const {
  if (other < 0 || other >= db_.user_count())
    throw DomainError("correlation: unknown user");
  const ActiveSummary a = summarize(active);
  for (const Accumulator& acc : accumulate(active))
    if (acc.user == other) return weight_from(acc, a, WeightKind::Correlation);
  return std::nullopt;
}

double MemoryPredictor::vector_similarity(const ActiveCase& active, int other) const {
  if (other < 0 || other >= db_.user_count())
    throw DomainError("vector similarity: unknown user");
  const ActiveSummary a = summarize(active);
  for (const Accumulator& acc : accumulate(active))
    if (acc.user == other) return *weight_from(acc, a, WeightKind::VectorSimilarity);
  return 0.0;
}

NeighborWeights MemoryPredictor::neighbors(const ActiveCase& active) const {
  NeighborWeights out;
  const int self = self_index(active);
  double total = 0.0;
  const ActiveSummary a = summarize(active);
  for (const Accumulator& acc : accumulate(active)) {
    if (acc.user == self) continue;
    const auto raw = weight_from(acc, a, cfg_.weight);
    if (!raw || *raw == 0.0) continue;
    const double w =
        cfg_.case_amplification ? case_amplify(*raw, *cfg_.case_amplification) : *raw;
    if (w == 0.0) continue;
    out.entries.push_back({acc.user, w});
    total += std::abs(w);
  }
  out.kappa = total > 0.0 ? 1.0 / total : 0.0;
  return out;
}

std::vector<VotePrediction> MemoryPredictor::predict_all(const ActiveCase& active,
                                                         std::vector<double>* raw) const {
  const VoteScale& scale = db_.scale();
  const int items = db_.item_count();
  std::vector<VotePrediction> out(items);
  if (raw) raw->assign(items, scale.neutral);
  if (active.observed.empty()) {
    for (auto& p : out) p = {scale.neutral, false};
    return out;
  }
  const double active_mean = mean_vote(active.observed);
  const NeighborWeights nw = neighbors(active);

  std::vector<double> numerator(items, 0.0);
  std::vector<double> denominator(items, 0.0);
  if (cfg_.default_voting) {
    const double d = cfg_.default_voting->value;
    double base = 0.0;
    for (const Neighbor& n : nw.entries) {
      base += n.weight * (d - users_[n.user].mean);
      for (const Vote& v : db_.votes(n.user)) numerator[v.item] += n.weight * (v.value - d);
    }
    for (int j = 0; j < items; ++j) {
      numerator[j] += base;
      denominator[j] = nw.entries.empty() ? 0.0 : 1.0 / nw.kappa;
    }
  } else {
    for (const Neighbor& n : nw.entries) {
      const double mean = users_[n.user].mean;
      for (const Vote& v : db_.votes(n.user)) {
        numerator[v.item] += n.weight * (v.value - mean);
        denominator[v.item] += std::abs(n.weight);
      }
    }
  }
  for (int j = 0; j < items; ++j) {
    if (denominator[j] > 0.0) {
      const double value = active_mean + numerator[j] / denominator[j];
      if (raw) (*raw)[j] = value;
      out[j] = {std::clamp(value, static_cast<double>(scale.min_vote),
                           static_cast<double>(scale.max_vote)),
                true};
    } else {
      if (raw) (*raw)[j] = active_mean;
      out[j] = {active_mean, false};
    }
  }
  return out;
}

VotePrediction MemoryPredictor::predict_one(const ActiveCase& active, int item) const {
  if (active.observed.empty())
    throw DomainError("predict_vote: the active case has no observed votes");
  if (item < 0 || item >= db_.item_count()) throw DomainError("predict_vote: unknown item");
  return predict_all(active)[item];
}

std::vector<double> MemoryPredictor::predict(const ActiveCase& active,
                                             std::span<const int> items) const {
  if (active.observed.empty())
    throw DomainError("predict_vote: the active case has no observed votes");
  const auto all = predict_all(active);
  std::vector<double> out;
  out.reserve(items.size());
  for (int j : items) out.push_back(all[j].value);
  return out;
}

std::vector<int> MemoryPredictor::rank(const ActiveCase& active) const {
  std::vector<double> raw;
  const auto all = predict_all(active, &raw);
  std::vector<ScoredItem> scored;
  for (int j = 0; j < db_.item_count(); ++j)
    if (!active.is_observed(j)) scored.push_back({j, raw[j], all[j].informed});
  return order_by_score(std::move(scored));
}

std::optional<double> correlation_weight(const ActiveCase& active, int other,
                                         const VoteDatabase& db, const MemoryConfig& cfg) {
  MemoryConfig c = cfg;
  c.weight = WeightKind::Correlation;
  return MemoryPredictor(db, c).correlation(active, other);
}

double vector_similarity_weight(const ActiveCase& active, int other,
                                const VoteDatabase& db, const MemoryConfig& cfg) {
  MemoryConfig c = cfg;
  c.weight = WeightKind::VectorSimilarity;
  if (!db.scale().implicit) c.default_voting.reset();
  return MemoryPredictor(db, c).vector_similarity(active, other);
}

VotePrediction predict_vote(const ActiveCase& active, int item, const VoteDatabase& db,
                            const MemoryConfig& cfg) {
  return MemoryPredictor(db, cfg).predict_one(active, item);
}

std::vector<int> rank_items(const ActiveCase& active, const VoteDatabase& db,
                            const MemoryConfig& cfg) {
  return MemoryPredictor(db, cfg).rank(active);
}

}  // namespace cfbench
