#include "cfbench/predictor.hpp"

#include <algorithm>

namespace cfbench {

std::vector<int> order_by_score(std::vector<ScoredItem> scored) {
  std::sort(scored.begin(), scored.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.informed != b.informed) return a.informed;
    return a.item < b.item;
  });
  std::vector<int> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.item);
  return out;
}

std::vector<int> popularity_rank(const VoteDatabase& db, const ActiveCase& active) {
  std::vector<ScoredItem> scored;
  for (int j = 0; j < db.item_count(); ++j)
    if (!active.is_observed(j))
      scored.push_back({j, static_cast<double>(db.item_vote_count(j))});
  return order_by_score(std::move(scored));
}

double popularity_score(const VoteDatabase& db, int item) {
  const auto voters = db.voters(item);
  if (voters.empty()) return 0.0;
  const double share = static_cast<double>(voters.size()) / db.user_count();
  return db.scale().implicit ? share : share * item_mean_vote(db, item);
}

double item_mean_vote(const VoteDatabase& db, int item) {
  const auto voters = db.voters(item);
  if (voters.empty()) return db.scale().neutral;
  double sum = 0.0;
  for (const Voter& v : voters) sum += v.value;
  return sum / static_cast<double>(voters.size());
}

PopularityPredictor::PopularityPredictor(const VoteDatabase& train)
    : train_(train), item_mean_(train.item_count()) {
  for (int j = 0; j < train.item_count(); ++j) item_mean_[j] = item_mean_vote(train, j);
}

std::vector<double> PopularityPredictor::predict(const ActiveCase&,
                                                 std::span<const int> items) const {
  std::vector<double> out;
  out.reserve(items.size());
  for (int j : items) out.push_back(item_mean_[j]);
  return out;
}

std::vector<int> PopularityPredictor::rank(const ActiveCase& active) const {
  return popularity_rank(train_, active);
}

}  // namespace cfbench
