#ifndef CFBENCH_PREDICTOR_HPP_
#define CFBENCH_PREDICTOR_HPP_

#include <optional>
#include <span>
#include <vector>

#include "cfbench/votedata.hpp"

namespace cfbench {

/// A trained recommender over a fixed item universe (the training database's
/// item indices). Implementations are immutable after construction, so one
/// instance may serve many cases concurrently.
class Predictor {
 public:
  virtual ~Predictor() = default;

  /// Predicted vote for each requested item.
  virtual std::vector<double> predict(const ActiveCase& active,
                                      std::span<const int> items) const = 0;

  /// Every item not in active.observed, most recommended first.
  virtual std::vector<int> rank(const ActiveCase& active) const = 0;

  /// Fraction of the case's targets whose prediction was influenced by an
  /// observed vote, for models where that can fail to happen.
  virtual std::optional<double> evidence_usage(const ActiveCase&) const {
    return std::nullopt;
  }
};

struct ScoredItem {
  int item;
  double score;
  bool informed = true;
};

/// Sorts by score descending, informed before uninformed on equal score,
/// then by ascending item index.
std::vector<int> order_by_score(std::vector<ScoredItem> scored);

/// Items of db not observed in the case, sorted by vote count descending
/// (ties to the smaller item index). The "zero-order" baseline.
std::vector<int> popularity_rank(const VoteDatabase& db, const ActiveCase& active);

/// Share of users who voted on item, times the item's mean vote on explicit
/// scales. Ranks items a model was not trained on.
double popularity_score(const VoteDatabase& db, int item);

/// Mean vote on item, or the neutral vote when nobody voted on it.
double item_mean_vote(const VoteDatabase& db, int item);

class PopularityPredictor : public Predictor {
 public:
  explicit PopularityPredictor(const VoteDatabase& train);

  /// The item's mean training vote (the scale's neutral vote for unvoted items).
  std::vector<double> predict(const ActiveCase& active,
                              std::span<const int> items) const override;
  std::vector<int> rank(const ActiveCase& active) const override;

 private:
  const VoteDatabase& train_;
  std::vector<double> item_mean_;
};

}  // namespace cfbench

#endif  // CFBENCH_PREDICTOR_HPP_
