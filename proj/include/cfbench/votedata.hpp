#ifndef CFBENCH_VOTEDATA_HPP_
#define CFBENCH_VOTEDATA_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace cfbench {

/// Index of the "no vote" state in every item's state set. Vote states follow
/// it in ascending vote order.
inline constexpr int kNoVote = 0;

/// Vote-value schema shared by a whole database.
///
/// Implicit scales carry presence-only votes: the only vote value is 1, so the
/// probabilistic models see two states per item ({no vote, 1}). Explicit
/// scales have one state per integer vote in [min_vote, max_vote] plus the
/// no-vote state.
struct VoteScale {
  int min_vote = 0;
  int max_vote = 1;
  double neutral = 0.0;
  bool implicit = true;

  static VoteScale implicit_scale() { return {}; }
  static VoteScale explicit_scale(int min_vote, int max_vote, double neutral) {
    return {min_vote, max_vote, neutral, false};
  }

  void validate() const;
  bool contains(double vote) const {
    return vote >= min_vote && vote <= max_vote;
  }
  int num_vote_states() const { return implicit ? 1 : max_vote - min_vote + 1; }
  int num_states() const { return 1 + num_vote_states(); }
  /// Vote value of a vote state (state >= 1).
  double state_value(int state) const;
  /// State of an integral vote value; throws DomainError otherwise.
  int state_of(double vote) const;

  bool operator==(const VoteScale&) const = default;
};

void to_json(nlohmann::json& j, const VoteScale& scale);
void from_json(const nlohmann::json& j, VoteScale& scale);

struct Vote {
  int item;
  double value;

  bool operator==(const Vote&) const = default;
};

struct Voter {
  int user;
  double value;
};

/// Orders ids numerically when both are integers, lexicographically
/// otherwise (integers first). Item indices follow this order.
bool id_less(const std::string& a, const std::string& b);

/// Sparse user x item vote matrix. Immutable once built.
///
/// Items are indexed in id_less order; users keep their insertion order.
/// Each user's votes are sorted by item index and every user has at least one
/// vote. A per-item voter index is kept alongside the per-user rows.
class VoteDatabase {
 public:
  VoteDatabase() = default;
  /// Throws DomainError on duplicate (user, item) pairs, out-of-scale votes,
  /// unknown item indices or users without votes. item_ids must already be
  /// sorted by id_less.
  VoteDatabase(VoteScale scale, std::vector<std::string> user_ids,
               std::vector<std::string> item_ids,
               std::vector<std::vector<Vote>> user_votes);

  const VoteScale& scale() const { return scale_; }
  int user_count() const { return static_cast<int>(user_ids_.size()); }
  int item_count() const { return static_cast<int>(item_ids_.size()); }
  std::size_t vote_count() const { return vote_count_; }
  bool empty() const { return user_ids_.empty(); }

  const std::string& user_id(int user) const { return user_ids_[user]; }
  const std::string& item_id(int item) const { return item_ids_[item]; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  std::optional<int> find_user(const std::string& id) const;
  std::optional<int> find_item(const std::string& id) const;

  std::span<const Vote> votes(int user) const { return rows_[user]; }
  std::span<const Voter> voters(int item) const { return columns_[item]; }
  int item_vote_count(int item) const {
    return static_cast<int>(columns_[item].size());
  }
  std::optional<double> vote(int user, int item) const;

 private:
  VoteScale scale_;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::vector<std::vector<Vote>> rows_;
  std::vector<std::vector<Voter>> columns_;
  std::unordered_map<std::string, int> user_index_;
  std::unordered_map<std::string, int> item_index_;
  std::size_t vote_count_ = 0;
};

/// Accumulates (user, item, vote) triples into a VoteDatabase. A repeated
/// (user, item) pair overwrites the earlier value (last wins).
class VoteDatabaseBuilder {
 public:
  explicit VoteDatabaseBuilder(VoteScale scale);

  /// Registers an item even if nobody votes on it.
  void declare_item(const std::string& item);
  /// Returns false when the pair already had a vote (which is replaced).
  bool add(const std::string& user, const std::string& item, double value);
  /// Users without votes are dropped.
  VoteDatabase build() const;

 private:
  VoteScale scale_;
  std::vector<std::string> users_;
  std::unordered_map<std::string, int> user_index_;
  std::map<std::string, bool> declared_items_;
  std::vector<std::map<std::string, double>> rows_;
};

double mean_vote(std::span<const Vote> votes);
/// Mean of the user's votes; DomainError when the user has none.
double mean_vote(const VoteDatabase& db, int user);

/// One test user's votes, split into the observed set and the targets to
/// predict. Item indices refer to the database the case was generated from.
struct ActiveCase {
  std::string user;
  std::vector<Vote> observed;
  std::vector<Vote> targets;

  bool is_observed(int item) const;
  bool operator==(const ActiveCase&) const = default;
};

/// Builds a case with the given observed votes and no targets.
ActiveCase make_case(std::string user, std::vector<Vote> observed);

struct Protocol {
  enum class Kind { AllBut1, Given };
  Kind kind = Kind::AllBut1;
  int given = 0;

  static Protocol all_but_one() { return {Kind::AllBut1, 0}; }
  static Protocol given_n(int n);
  /// Accepts "AllBut1" and "Given<n>" (case-insensitive).
  static Protocol parse(const std::string& text);
  std::string name() const;
  /// Smallest number of votes a user needs to produce a case.
  int min_votes() const { return kind == Kind::AllBut1 ? 2 : given + 1; }
};

/// Per test user: AllBut1 moves one random vote to the targets; Given(n)
/// keeps n random votes observed and targets the rest. Users with too few
/// votes are skipped. DataError when every user is skipped.
std::vector<ActiveCase> generate_active_cases(const VoteDatabase& test_db,
                                              const Protocol& protocol,
                                              std::uint64_t seed);

/// Keeps the k items with the most votes (ties to the smaller item id).
VoteDatabase restrict_to_top_items(const VoteDatabase& db, int k);

/// Drops users with fewer than min_votes votes.
VoteDatabase filter_min_votes(const VoteDatabase& db, int min_votes);

/// Re-expresses db over a different item list. Votes on items not in
/// item_ids are dropped (their count is written to dropped_votes).
VoteDatabase align_items(const VoteDatabase& db,
                         const std::vector<std::string>& item_ids,
                         std::size_t* dropped_votes = nullptr);

struct UserSplit {
  VoteDatabase train;
  VoteDatabase test;
};

/// Uniform user-level split; round(test_fraction * users) users go to test.
UserSplit split_users(const VoteDatabase& db, double test_fraction,
                      std::uint64_t seed);

// Ingestion.

/// Parses the published anonymous MS Web log (A/C/V lines). Produces an
/// implicit-scale database over the declared vroots. Item titles are written
/// to titles when given.
VoteDatabase load_msweb(const std::string& path,
                        std::map<std::string, std::string>* titles = nullptr);
VoteDatabase read_msweb(std::istream& in,
                        std::map<std::string, std::string>* titles = nullptr);

/// Reads `user,item,vote` rows (optional header). Duplicate pairs keep the
/// last value; each one adds a message to warnings.
VoteDatabase load_votes_csv(const std::string& path, const VoteScale& scale,
                            std::vector<std::string>* warnings = nullptr);
VoteDatabase read_votes_csv(std::istream& in, const VoteScale& scale,
                            std::vector<std::string>* warnings = nullptr);

void write_votes_csv(const VoteDatabase& db, std::ostream& out);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

// Split manifests.

/// Seed, protocol and per-user observed/target item ids as one JSON document.
nlohmann::json split_manifest(const VoteDatabase& db, const Protocol& protocol,
                              std::uint64_t seed,
                              const std::vector<ActiveCase>& cases);
/// Rebuilds the cases of a manifest, taking vote values from db.
std::vector<ActiveCase> cases_from_manifest(const nlohmann::json& manifest,
                                            const VoteDatabase& db);

}  // namespace cfbench

#endif  // CFBENCH_VOTEDATA_HPP_
