#include "cfbench/votedata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cfbench/errors.hpp"
#include "cfbench/random.hpp"

namespace cfbench {

void VoteScale::validate() const {
  if (min_vote > max_vote)
    throw DomainError("vote scale: min_vote exceeds max_vote");
  if (neutral < min_vote || neutral > max_vote)
    throw DomainError("vote scale: neutral vote outside [min_vote, max_vote]");
  if (implicit && (min_vote != 0 || max_vote != 1))
    throw DomainError("vote scale: implicit scales span exactly [0, 1]");
}

double VoteScale::state_value(int state) const {
  if (state < 1 || state > num_vote_states())
    throw DomainError("vote scale: no vote state " + std::to_string(state));
  return implicit ? 1.0 : static_cast<double>(min_vote + state - 1);
}

int VoteScale::state_of(double vote) const {
  const double rounded = std::round(vote);
  if (std::abs(rounded - vote) > 1e-9 || !contains(vote))
    throw DomainError("vote " + std::to_string(vote) +
                      " is not an integral value of the scale");
  if (implicit) {
    if (rounded != 1.0)
      throw DomainError("implicit scales only carry votes of 1");
    return 1;
  }
  return static_cast<int>(rounded) - min_vote + 1;
}

void to_json(nlohmann::json& j, const VoteScale& scale) {
  j = nlohmann::json{{"min", scale.min_vote},
                     {"max", scale.max_vote},
                     {"neutral", scale.neutral},
                     {"implicit", scale.implicit}};
}

void from_json(const nlohmann::json& j, VoteScale& scale) {
  scale.implicit = j.value("implicit", false);
  scale.min_vote = j.value("min", 0);
  scale.max_vote = j.value("max", scale.implicit ? 1 : 5);
  scale.neutral = j.value("neutral", scale.implicit ? 0.0 : 0.5 * (scale.min_vote + scale.max_vote));
  scale.validate();
}

namespace {

bool is_integer_id(const std::string& s) {
  if (s.empty() || s.size() > 18) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

}  // namespace

bool id_less(const std::string& a, const std::string& b) {
  const bool ia = is_integer_id(a);
  const bool ib = is_integer_id(b);
  if (ia && ib) {
    const long long x = std::stoll(a);
    const long long y = std::stoll(b);
    if (x != y) return x < y;
    return a < b;
  }
  if (ia != ib) return ia;
  return a < b;
}

VoteDatabase::VoteDatabase(VoteScale scale, std::vector<std::string> user_ids,
                           std::vector<std::string> item_ids,
                           std::vector<std::vector<Vote>> user_votes)
    : scale_(scale),
      user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      rows_(std::move(user_votes)) {
  scale_.validate();
  if (rows_.size() != user_ids_.size())
    throw DomainError("vote database: one vote row per user required");
  for (int j = 0; j < item_count(); ++j) {
    if (!item_index_.emplace(item_ids_[j], j).second)
      throw DomainError("vote database: duplicate item id " + item_ids_[j]);
    if (j > 0 && !id_less(item_ids_[j - 1], item_ids_[j]))
      throw DomainError("vote database: item ids out of order");
  }
  columns_.resize(item_ids_.size());
  for (int u = 0; u < user_count(); ++u) {
    if (!user_index_.emplace(user_ids_[u], u).second)
      throw DomainError("vote database: duplicate user id " + user_ids_[u]);
    auto& row = rows_[u];
    if (row.empty())
      throw DomainError("vote database: user " + user_ids_[u] + " has no votes");
    std::sort(row.begin(), row.end(),
              [](const Vote& a, const Vote& b) { return a.item < b.item; });
    for (std::size_t k = 0; k < row.size(); ++k) {
      const Vote& v = row[k];
      if (v.item < 0 || v.item >= item_count())
        throw DomainError("vote database: unknown item index");
      if (k > 0 && row[k - 1].item == v.item)
        throw DomainError("vote database: two votes by " + user_ids_[u] +
                          " on " + item_ids_[v.item]);
      if (!scale_.contains(v.value))
        throw DomainError("vote database: vote " + std::to_string(v.value) +
                          " outside the scale");
      columns_[v.item].push_back({u, v.value});
    }
    vote_count_ += row.size();
  }
}

std::optional<int> VoteDatabase::find_user(const std::string& id) const {
  auto it = user_index_.find(id);
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> VoteDatabase::find_item(const std::string& id) const {
  auto it = item_index_.find(id);
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> VoteDatabase::vote(int user, int item) const {
  const auto& row = rows_[user];
  auto it = std::lower_bound(
      row.begin(), row.end(), item,
      [](const Vote& v, int target) { return v.item < target; });
  if (it == row.end() || it->item != item) return std::nullopt;
  return it->value;
}

VoteDatabaseBuilder::VoteDatabaseBuilder(VoteScale scale) : scale_(scale) {
  scale_.validate();
}

void VoteDatabaseBuilder::declare_item(const std::string& item) {
  declared_items_.emplace(item, true);
}

bool VoteDatabaseBuilder::add(const std::string& user, const std::string& item,
                              double value) {
  if (!scale_.contains(value))
    throw DomainError("vote " + std::to_string(value) + " by " + user + " on " +
                      item + " is outside the scale");
  declare_item(item);
  auto [it, inserted] = user_index_.emplace(user, static_cast<int>(users_.size()));
  if (inserted) {
    users_.push_back(user);
    rows_.emplace_back();
  }
  auto& row = rows_[it->second];
  auto [slot, fresh] = row.insert_or_assign(item, value);
  (void)slot;
  return fresh;
}

VoteDatabase VoteDatabaseBuilder::build() const {
  std::vector<std::string> items;
  items.reserve(declared_items_.size());
  for (const auto& [id, unused] : declared_items_) items.push_back(id);
  std::sort(items.begin(), items.end(), id_less);
  std::unordered_map<std::string, int> index;
  for (int j = 0; j < static_cast<int>(items.size()); ++j) index[items[j]] = j;

  std::vector<std::string> users;
  std::vector<std::vector<Vote>> rows;
  for (std::size_t u = 0; u < users_.size(); ++u) {
    if (rows_[u].empty()) continue;
    std::vector<Vote> row;
    row.reserve(rows_[u].size());
    for (const auto& [item, value] : rows_[u]) row.push_back({index.at(item), value});
    users.push_back(users_[u]);
    rows.push_back(std::move(row));
  }
  return VoteDatabase(scale_, std::move(users), std::move(items), std::move(rows));
}

double mean_vote(std::span<const Vote> votes) {
  if (votes.empty()) throw DomainError("mean vote of an empty vote set");
  double sum = 0.0;
  for (const Vote& v : votes) sum += v.value;
  return sum / static_cast<double>(votes.size());
}

double mean_vote(const VoteDatabase& db, int user) {
  if (user < 0 || user >= db.user_count())
    throw DomainError("mean vote: unknown user");
  return mean_vote(db.votes(user));
}

bool ActiveCase::is_observed(int item) const {
  return std::binary_search(
      observed.begin(), observed.end(), Vote{item, 0.0},
      [](const Vote& a, const Vote& b) { return a.item < b.item; });
}

ActiveCase make_case(std::string user, std::vector<Vote> observed) {
  std::sort(observed.begin(), observed.end(),
            [](const Vote& a, const Vote& b) { return a.item < b.item; });
  return ActiveCase{std::move(user), std::move(observed), {}};
}

Protocol Protocol::given_n(int n) {
  if (n < 1) throw DomainError("Given(n) requires n >= 1");
  return {Kind::Given, n};
}

Protocol Protocol::parse(const std::string& text) {
  std::string lower;
  for (char c : text)
    if (c != '-' && c != '_' && c != ' ')
      lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "allbut1") return all_but_one();
  if (lower.rfind("given", 0) == 0 && lower.size() > 5) {
    const std::string digits = lower.substr(5);
    if (std::all_of(digits.begin(), digits.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) &&
        digits.size() < 9)
      return given_n(std::stoi(digits));
  }
  throw DomainError("unknown protocol '" + text + "'");
}

std::string Protocol::name() const {
  return kind == Kind::AllBut1 ? "AllBut1" : "Given" + std::to_string(given);
}

std::vector<ActiveCase> generate_active_cases(const VoteDatabase& test_db,
                                              const Protocol& protocol,
                                              std::uint64_t seed) {
  if (protocol.kind == Protocol::Kind::Given && protocol.given < 1)
    throw DomainError("Given(n) requires n >= 1");
  Rng rng(seed);
  std::vector<ActiveCase> cases;
  const auto by_item = [](const Vote& a, const Vote& b) { return a.item < b.item; };
  for (int u = 0; u < test_db.user_count(); ++u) {
    const auto votes = test_db.votes(u);
    const int count = static_cast<int>(votes.size());
    if (count < protocol.min_votes()) continue;

    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    const int keep = protocol.kind == Protocol::Kind::AllBut1 ? count - 1 : protocol.given;
    const int draws = protocol.kind == Protocol::Kind::AllBut1 ? 1 : keep;
    // partial Fisher-Yates: the first `draws` slots are the random picks
    for (int k = 0; k < draws; ++k) {
      const int pick = k + static_cast<int>(rng.uniform_index(count - k));
      std::swap(order[k], order[pick]);
    }
    ActiveCase c;
    c.user = test_db.user_id(u);
    for (int k = 0; k < count; ++k) {
      const bool picked = k < draws;
      const bool observed = protocol.kind == Protocol::Kind::AllBut1 ? !picked : picked;
      (observed ? c.observed : c.targets).push_back(votes[order[k]]);
    }
    std::sort(c.observed.begin(), c.observed.end(), by_item);
    std::sort(c.targets.begin(), c.targets.end(), by_item);
    cases.push_back(std::move(c));
  }
  if (cases.empty())
    throw DataError("protocol " + protocol.name() + " eliminates every test user");
  return cases;
}

namespace {

VoteDatabase keep_items(const VoteDatabase& db, const std::vector<int>& kept) {
  std::vector<int> remap(db.item_count(), -1);
  std::vector<std::string> items;
  for (int j : kept) {
    remap[j] = static_cast<int>(items.size());
    items.push_back(db.item_id(j));
  }
  std::vector<std::string> users;
  std::vector<std::vector<Vote>> rows;
  for (int u = 0; u < db.user_count(); ++u) {
    std::vector<Vote> row;
    for (const Vote& v : db.votes(u))
      if (remap[v.item] >= 0) row.push_back({remap[v.item], v.value});
    if (row.empty()) continue;
    users.push_back(db.user_id(u));
    rows.push_back(std::move(row));
  }
  return VoteDatabase(db.scale(), std::move(users), std::move(items), std::move(rows));
}

}  // namespace

VoteDatabase restrict_to_top_items(const VoteDatabase& db, int k) {
  if (k < 1) throw DomainError("restrict_to_top_items: k must be >= 1");
  std::vector<int> order(db.item_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return db.item_vote_count(a) > db.item_vote_count(b);
  });
  if (static_cast<int>(order.size()) > k) order.resize(k);
  std::sort(order.begin(), order.end());
  return keep_items(db, order);
}

VoteDatabase filter_min_votes(const VoteDatabase& db, int min_votes) {
  std::vector<std::string> users;
  std::vector<std::vector<Vote>> rows;
  for (int u = 0; u < db.user_count(); ++u) {
    const auto votes = db.votes(u);
    if (static_cast<int>(votes.size()) < min_votes) continue;
    users.push_back(db.user_id(u));
    rows.emplace_back(votes.begin(), votes.end());
  }
  return VoteDatabase(db.scale(), std::move(users), db.item_ids(), std::move(rows));
}

VoteDatabase align_items(const VoteDatabase& db,
                         const std::vector<std::string>& item_ids,
                         std::size_t* dropped_votes) {
  std::unordered_map<std::string, int> index;
  for (int j = 0; j < static_cast<int>(item_ids.size()); ++j) index[item_ids[j]] = j;
  std::vector<int> remap(db.item_count(), -1);
  for (int j = 0; j < db.item_count(); ++j) {
    auto it = index.find(db.item_id(j));
    if (it != index.end()) remap[j] = it->second;
  }
  std::size_t dropped = 0;
  std::vector<std::string> users;
  std::vector<std::vector<Vote>> rows;
  for (int u = 0; u < db.user_count(); ++u) {
    std::vector<Vote> row;
    for (const Vote& v : db.votes(u)) {
      if (remap[v.item] >= 0)
        row.push_back({remap[v.item], v.value});
      else
        ++dropped;
    }
    if (row.empty()) continue;
    users.push_back(db.user_id(u));
    rows.push_back(std::move(row));
  }
  if (dropped_votes) *dropped_votes = dropped;
  return VoteDatabase(db.scale(), std::move(users), item_ids, std::move(rows));
}

UserSplit split_users(const VoteDatabase& db, double test_fraction,
                      std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw DomainError("split_users: test fraction must lie in (0, 1)");
  const int n = db.user_count();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int k = n - 1; k > 0; --k)
    std::swap(order[k], order[rng.uniform_index(static_cast<std::size_t>(k) + 1)]);
  const int test_count = static_cast<int>(std::lround(test_fraction * n));
  std::vector<char> is_test(n, 0);
  for (int k = 0; k < test_count; ++k) is_test[order[k]] = 1;

  std::vector<std::string> users[2];
  std::vector<std::vector<Vote>> rows[2];
  for (int u = 0; u < n; ++u) {
    const int side = is_test[u];
    users[side].push_back(db.user_id(u));
    const auto votes = db.votes(u);
    rows[side].emplace_back(votes.begin(), votes.end());
  }
  return {VoteDatabase(db.scale(), std::move(users[0]), db.item_ids(), std::move(rows[0])),
          VoteDatabase(db.scale(), std::move(users[1]), db.item_ids(), std::move(rows[1]))};
}

nlohmann::json split_manifest(const VoteDatabase& db, const Protocol& protocol,
                              std::uint64_t seed,
                              const std::vector<ActiveCase>& cases) {
  nlohmann::json out;
  out["format"] = "cfbench-split";
  out["version"] = 1;
  out["rng"] = Rng::kAlgorithm;
  out["seed"] = seed;
  out["protocol"] = protocol.name();
  auto& list = out["cases"] = nlohmann::json::array();
  for (const ActiveCase& c : cases) {
    nlohmann::json entry;
    entry["user"] = c.user;
    auto& observed = entry["observed"] = nlohmann::json::array();
    for (const Vote& v : c.observed) observed.push_back(db.item_id(v.item));
    auto& targets = entry["targets"] = nlohmann::json::array();
    for (const Vote& v : c.targets) targets.push_back(db.item_id(v.item));
    list.push_back(std::move(entry));
  }
  return out;
}

std::vector<ActiveCase> cases_from_manifest(const nlohmann::json& manifest,
                                            const VoteDatabase& db) {
  if (manifest.value("format", "") != "cfbench-split")
    throw ParseError("not a split manifest", 0);
  std::vector<ActiveCase> cases;
  const auto by_item = [](const Vote& a, const Vote& b) { return a.item < b.item; };
  for (const auto& entry : manifest.at("cases")) {
    ActiveCase c;
    c.user = entry.at("user").get<std::string>();
    const auto user = db.find_user(c.user);
    if (!user) throw DataError("manifest user " + c.user + " not in the database");
    auto fill = [&](const nlohmann::json& ids, std::vector<Vote>& out) {
      for (const auto& id : ids) {
        const auto item = db.find_item(id.get<std::string>());
        const auto value = item ? db.vote(*user, *item) : std::nullopt;
        if (!value)
          throw DataError("manifest lists item " + id.get<std::string>() +
                          " without a vote by " + c.user);
        out.push_back({*item, *value});
      }
      std::sort(out.begin(), out.end(), by_item);
    };
    fill(entry.at("observed"), c.observed);
    fill(entry.at("targets"), c.targets);
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace cfbench
