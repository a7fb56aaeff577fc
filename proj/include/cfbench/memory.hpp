#ifndef CFBENCH_MEMORY_HPP_
#define CFBENCH_MEMORY_HPP_

#include <optional>
#include <vector>

#include "cfbench/predictor.hpp"
#include "cfbench/votedata.hpp"
#include "json.hpp"

namespace cfbench {

enum class WeightKind { Correlation, VectorSimilarity };

/// Missing votes are filled with `value`; correlation additionally counts
/// `extra_items` items that neither user voted on and both hold at `value`.
struct DefaultVoting {
  double value = 0.0;
  int extra_items = 10000;
};

struct MemoryConfig {
  WeightKind weight = WeightKind::Correlation;
  std::optional<DefaultVoting> default_voting;
  bool inverse_user_frequency = false;
  /// Case-amplification power p.
  std::optional<double> case_amplification;

  void validate(const VoteScale& scale) const;
};

/// Reads keys `weight`, `default_voting.{d,k}`, `iuf`, `case_amp.p`. A missing
/// `d` takes 0 on implicit scales and the neutral vote otherwise.
MemoryConfig memory_config_from_json(const nlohmann::json& j, const VoteScale& scale);
nlohmann::json to_json(const MemoryConfig& cfg);

struct Neighbor {
  int user;
  double weight;
};

/// Neighbors with nonzero (post-amplification) weight and kappa = 1 / sum|w|.
struct NeighborWeights {
  std::vector<Neighbor> entries;
  double kappa = 0.0;
};

struct VotePrediction {
  double value;
  bool informed;
};

/// log(n / n_j) with the natural logarithm; DomainError when n_j = 0.
double inverse_user_frequency(const VoteDatabase& db, int item);

/// sign(w) * |w|^p.
double case_amplify(double w, double p);

/// Memory-based predictor: a weighted sum of other users' deviations from
/// their mean vote, with correlation or vector-similarity weights.
///
/// Per-item IUF factors and per-user summaries are computed once at
/// construction. Items nobody in the database voted on get an IUF factor of
/// zero, which removes them from every weight computation.
class MemoryPredictor : public Predictor {
 public:
  MemoryPredictor(const VoteDatabase& db, MemoryConfig cfg);

  const MemoryConfig& config() const { return cfg_; }
  const VoteDatabase& database() const { return db_; }
  double item_factor(int item) const { return factor_[item]; }

  /// Correlation weight before amplification; nullopt when the pair does not
  /// match on enough items (2 in the intersection, 1 with default voting).
  std::optional<double> correlation(const ActiveCase& active, int other) const;
  /// Vector-similarity weight before amplification.
  double vector_similarity(const ActiveCase& active, int other) const;

  NeighborWeights neighbors(const ActiveCase& active) const;

  /// Prediction for every item of the database. `raw` receives the unclamped
  /// values when non-null.
  std::vector<VotePrediction> predict_all(const ActiveCase& active,
                                          std::vector<double>* raw = nullptr) const;
  VotePrediction predict_one(const ActiveCase& active, int item) const;

  std::vector<double> predict(const ActiveCase& active,
                              std::span<const int> items) const override;
  std::vector<int> rank(const ActiveCase& active) const override;

 private:
  struct UserSummary {
    double mean = 0.0;
    double weight_sum = 0.0;   // sum f over the user's votes
    double shifted_sum = 0.0;  // sum f (v - d)
    double shifted_sq = 0.0;   // sum f (v - d)^2
    double norm = 0.0;         // || f v ||
  };
  struct ActiveSummary {
    double weight_sum = 0.0;
    double shifted_sum = 0.0;
    double shifted_sq = 0.0;
    double norm = 0.0;
  };
  struct Accumulator;

  ActiveSummary summarize(const ActiveCase& active) const;
  std::vector<Accumulator> accumulate(const ActiveCase& active) const;
  std::optional<double> weight_from(const Accumulator& acc, const ActiveSummary& active,
                                    WeightKind kind) const;
  int self_index(const ActiveCase& active) const;

  const VoteDatabase& db_;
  MemoryConfig cfg_;
  std::vector<double> factor_;
  std::vector<UserSummary> users_;
};

std::optional<double> correlation_weight(const ActiveCase& active, int other,
                                         const VoteDatabase& db, const MemoryConfig& cfg);
double vector_similarity_weight(const ActiveCase& active, int other,
                                const VoteDatabase& db, const MemoryConfig& cfg);
VotePrediction predict_vote(const ActiveCase& active, int item, const VoteDatabase& db,
                            const MemoryConfig& cfg);
std::vector<int> rank_items(const ActiveCase& active, const VoteDatabase& db,
                            const MemoryConfig& cfg);

}  // namespace cfbench

#endif  // CFBENCH_MEMORY_HPP_
