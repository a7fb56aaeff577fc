#include "cfbench/bayesnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>

#include "cfbench/errors.hpp"

namespace cfbench {

void LearnConfig::validate() const {
  if (!(structure_penalty > 0.0 && structure_penalty < 1.0))
    throw ConfigError("structure_penalty must lie in (0, 1)");
  if (!(equivalent_sample_size > 0.0))
    throw ConfigError("equivalent_sample_size must be positive");
  if (max_parents && *max_parents < 0) throw ConfigError("max_parents must be non-negative");
}

double leaf_family_score(const Eigen::Ref<const Eigen::VectorXd>& counts,
                         const Eigen::Ref<const Eigen::VectorXd>& prior_counts,
                         double structure_penalty) {
  if (counts.size() != prior_counts.size())
    throw DomainError("leaf_family_score: counts and prior sizes differ");
  if (!(structure_penalty > 0.0 && structure_penalty <= 1.0))
    throw DomainError("leaf_family_score: structure penalty must lie in (0, 1]");
  return log_dirichlet_multinomial(counts, prior_counts) +
         static_cast<double>(counts.size() - 1) * std::log(structure_penalty);
}

namespace {

Eigen::VectorXd posterior_mean(const Eigen::VectorXd& counts, const Eigen::VectorXd& prior) {
  const Eigen::VectorXd sum = counts + prior;
  return sum / sum.sum();
}

}  // namespace

DecisionTreeCPD::DecisionTreeCPD(int target, Eigen::VectorXd counts, Eigen::VectorXd prior)
    : target_(target) {
  if (counts.size() != prior.size() || counts.size() < 2)
    throw DomainError("DecisionTreeCPD: counts and prior must share a size >= 2");
  Node root;
  root.probs = posterior_mean(counts, prior);
  root.counts = std::move(counts);
  root.prior = std::move(prior);
  nodes_.push_back(std::move(root));
}

int DecisionTreeCPD::leaf_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(),
                                        [](const Node& n) { return n.is_leaf(); }));
}

std::vector<int> DecisionTreeCPD::leaves() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
    if (nodes_[i].is_leaf()) out.push_back(i);
  return out;
}

bool DecisionTreeCPD::path_contains(int node, int item) const {
  for (int n = nodes_[node].parent; n >= 0; n = nodes_[n].parent)
    if (nodes_[n].split == item) return true;
  return false;
}

int DecisionTreeCPD::split(int leaf, int item, const std::vector<Eigen::VectorXd>& child_counts,
                           const std::vector<Eigen::VectorXd>& child_priors) {
  if (leaf < 0 || leaf >= static_cast<int>(nodes_.size()) || !nodes_[leaf].is_leaf())
    throw DomainError("DecisionTreeCPD::split: not a leaf");
  if (item == target_ || path_contains(leaf, item))
    throw DomainError("DecisionTreeCPD::split: item already on the path or is the target");
  const auto r = nodes_[leaf].counts.size();
  if (child_counts.size() != static_cast<std::size_t>(r) || child_priors.size() != child_counts.size())
    throw DomainError("DecisionTreeCPD::split: one child per state required");
  const int first = static_cast<int>(nodes_.size());
  for (std::size_t s = 0; s < child_counts.size(); ++s) {
    if (child_counts[s].size() != r || child_priors[s].size() != r)
      throw DomainError("DecisionTreeCPD::split: child distribution size mismatch");
    Node child;
    child.parent = leaf;
    child.counts = child_counts[s];
    child.prior = child_priors[s];
    child.probs = posterior_mean(child.counts, child.prior);
    nodes_.push_back(std::move(child));
  }
  Node& parent = nodes_[leaf];
  parent.split = item;
  for (std::size_t s = 0; s < child_counts.size(); ++s)
    parent.children.push_back(first + static_cast<int>(s));
  return first;
}

std::vector<int> DecisionTreeCPD::parents() const {
  std::vector<int> out;
  for (const Node& n : nodes_)
    if (!n.is_leaf()) out.push_back(n.split);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int DecisionTreeCPD::route(std::span<const int> evidence) const {
  if (nodes_.empty()) throw DomainError("DecisionTreeCPD::route: empty tree");
  int n = 0;
  while (!nodes_[n].is_leaf()) {
    const int item = nodes_[n].split;
    if (item >= static_cast<int>(evidence.size()) || evidence[item] < 0)
      throw DomainError("tree lookup: no evidence for split item " + std::to_string(item));
    const int state = evidence[item];
    if (state >= static_cast<int>(nodes_[n].children.size()))
      throw DomainError("tree lookup: evidence state out of range");
    n = nodes_[n].children[state];
  }
  return n;
}

DecisionTreeCPD DecisionTreeCPD::from_nodes(int target, std::vector<Node> nodes) {
  if (nodes.empty()) throw DomainError("decision tree without nodes");
  const int count = static_cast<int>(nodes.size());
  const auto r = nodes[0].counts.size();
  if (nodes[0].parent != -1) throw DomainError("decision tree root has a parent");
  std::vector<int> seen(count, 0);
  seen[0] = 1;
  for (int i = 0; i < count; ++i) {
    const Node& n = nodes[i];
    if (n.counts.size() != r || n.prior.size() != r || n.probs.size() != r)
      throw DomainError("decision tree node has the wrong state count");
    if (n.is_leaf()) {
      if (!n.children.empty()) throw DomainError("decision tree leaf has children");
      continue;
    }
    if (n.split == target) throw DomainError("decision tree splits on its own target");
    if (n.children.size() != static_cast<std::size_t>(r))
      throw DomainError("decision tree split needs one child per state");
    for (int c : n.children) {
      if (c <= i || c >= count || seen[c] || nodes[c].parent != i)
        throw DomainError("decision tree node links are inconsistent");
      seen[c] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw DomainError("decision tree has unreachable nodes");
  DecisionTreeCPD tree;
  tree.target_ = target;
  tree.nodes_ = std::move(nodes);
  for (int i = 0; i < count; ++i)
    if (!tree.nodes_[i].is_leaf() && tree.path_contains(i, tree.nodes_[i].split))
      throw DomainError("decision tree repeats an item on a path");
  return tree;
}

std::vector<std::pair<int, int>> BayesNetModel::parent_edges() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& cpd : cpds)
    for (int p : cpd.parents()) out.emplace_back(p, cpd.target());
  std::sort(out.begin(), out.end());
  return out;
}

bool BayesNetModel::is_acyclic() const {
  const int n = num_items();
  std::vector<std::vector<int>> children(n);
  std::vector<int> indegree(n, 0);
  for (const auto& [p, c] : parent_edges()) {
    children[p].push_back(c);
    ++indegree[c];
  }
  std::vector<int> ready;
  for (int j = 0; j < n; ++j)
    if (indegree[j] == 0) ready.push_back(j);
  int visited = 0;
  while (!ready.empty()) {
    const int j = ready.back();
    ready.pop_back();
    ++visited;
    for (int c : children[j])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  return visited == n;
}

namespace {

struct Candidate {
  int item;
  double delta;
  std::vector<Eigen::VectorXd> child_counts;
};

struct LeafState {
  int target;
  int node;
  std::vector<int> users;
  double score;
  /// Improving candidates, best first; invalid ones are popped lazily.
  std::vector<Candidate> candidates;
  std::size_t next = 0;
};

class NetworkSearch {
 public:
  NetworkSearch(const VoteDatabase& db, const LearnConfig& cfg)
      : db_(db),
        cfg_(cfg),
        items_(db.item_count()),
        users_(db.user_count()),
        r_(db.scale().num_states()),
        states_(static_cast<std::size_t>(users_) * items_, static_cast<std::uint8_t>(kNoVote)),
        reach_(static_cast<std::size_t>(items_) * items_, 0),
        parents_(items_) {
    for (int u = 0; u < users_; ++u)
      for (const Vote& v : db.votes(u))
        states_[index(u, v.item)] = static_cast<std::uint8_t>(db.scale().state_of(v.value));
  }

  LearnedNetwork run() {
    LearnedNetwork out;
    out.model.scale = db_.scale();
    out.model.items = db_.item_ids();
    std::vector<int> everyone(users_);
    for (int u = 0; u < users_; ++u) everyone[u] = u;
    const Eigen::VectorXd root_prior =
        Eigen::VectorXd::Constant(r_, cfg_.equivalent_sample_size / r_);
    double total = 0.0;
    for (int t = 0; t < items_; ++t) {
      const Eigen::VectorXd counts = target_counts(t, everyone);
      out.model.cpds.emplace_back(t, counts, root_prior);
      leaves_.push_back(make_leaf(t, 0, everyone, out.model.cpds[t]));
      total += leaves_.back().score;
    }
    out.report.score_trace.push_back(total);

    while (true) {
      int best = -1;
      for (int l = 0; l < static_cast<int>(leaves_.size()); ++l) {
        if (!advance_to_valid(leaves_[l])) continue;
        if (best < 0 || better(leaves_[l], leaves_[best])) best = l;
      }
      if (best < 0) break;
      const double before = total;
      total += apply(best, out.model);
      ++out.report.splits;
      out.report.score_trace.push_back(total);
      if (!(total > before)) out.report.invariants_held = false;
    }
    if (!out.model.is_acyclic()) out.report.invariants_held = false;
    return out;
  }

 private:
  std::size_t index(int u, int j) const { return static_cast<std::size_t>(u) * items_ + j; }
  int state(int u, int j) const { return states_[index(u, j)]; }
  bool reaches(int from, int to) const {
    return reach_[static_cast<std::size_t>(from) * items_ + to] != 0;
  }

  Eigen::VectorXd target_counts(int t, const std::vector<int>& users) const {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(r_);
    for (int u : users) counts(state(u, t)) += 1.0;
    return counts;
  }

  // Joint (split item state, target state) counts for every item over the
  // leaf's users; no-vote rows are completed from the target counts.
  LeafState make_leaf(int t, int node, std::vector<int> users, const DecisionTreeCPD& tree) {
    const auto& n = tree.node(node);
    LeafState leaf{t, node, std::move(users), leaf_family_score(n.counts, n.prior, cfg_.structure_penalty), {}, 0};

    const std::size_t block = static_cast<std::size_t>(r_) * r_;
    joint_.assign(block * items_, 0.0);
    for (int u : leaf.users) {
      const int st = state(u, t);
      for (const Vote& v : db_.votes(u)) {
        const int sv = state(u, v.item);
        joint_[v.item * block + static_cast<std::size_t>(sv) * r_ + st] += 1.0;
      }
    }
    const Eigen::VectorXd child_prior = n.prior / r_;
    std::vector<Eigen::VectorXd> child_counts(r_, Eigen::VectorXd(r_));
    for (int v = 0; v < items_; ++v) {
      if (v == t || tree.path_contains(node, v)) continue;
      const double* cell = &joint_[v * block];
      double gain = -leaf.score;
      Eigen::VectorXd voted = Eigen::VectorXd::Zero(r_);
      for (int sv = 1; sv < r_; ++sv) {
        for (int st = 0; st < r_; ++st) child_counts[sv](st) = cell[sv * r_ + st];
        voted += child_counts[sv];
      }
      child_counts[kNoVote] = n.counts - voted;
      for (int sv = 0; sv < r_; ++sv)
        gain += leaf_family_score(child_counts[sv], child_prior, cfg_.structure_penalty);
      if (gain > 0.0) leaf.candidates.push_back({v, gain, child_counts});
    }
    std::stable_sort(leaf.candidates.begin(), leaf.candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.delta > b.delta; });
    if (leaf.candidates.empty()) std::vector<int>().swap(leaf.users);
    return leaf;
  }

  bool valid(int t, int v) const {
    const auto& ps = parents_[t];
    if (std::binary_search(ps.begin(), ps.end(), v)) return true;
    if (reaches(t, v)) return false;
    if (cfg_.max_parents && static_cast<int>(ps.size()) >= *cfg_.max_parents) return false;
    return true;
  }

  bool advance_to_valid(LeafState& leaf) const {
    while (leaf.next < leaf.candidates.size() && !valid(leaf.target, leaf.candidates[leaf.next].item))
      ++leaf.next;
    return leaf.next < leaf.candidates.size();
  }

  static bool better(const LeafState& a, const LeafState& b) {
    const Candidate& ca = a.candidates[a.next];
    const Candidate& cb = b.candidates[b.next];
    if (ca.delta != cb.delta) return ca.delta > cb.delta;
    return std::tie(a.target, a.node, ca.item) < std::tie(b.target, b.node, cb.item);
  }

  void add_edge(int parent, int child) {
    auto& ps = parents_[child];
    const auto pos = std::lower_bound(ps.begin(), ps.end(), parent);
    if (pos != ps.end() && *pos == parent) return;
    ps.insert(pos, parent);
    // Everything reaching parent (and parent itself) now reaches child and
    // whatever child reaches.
    for (int a = 0; a < items_; ++a) {
      if (a != parent && !reaches(a, parent)) continue;
      std::uint8_t* row = &reach_[static_cast<std::size_t>(a) * items_];
      row[child] = 1;
      const std::uint8_t* from = &reach_[static_cast<std::size_t>(child) * items_];
      for (int k = 0; k < items_; ++k) row[k] |= from[k];
    }
  }

  double apply(int leaf_index, BayesNetModel& model) {
    LeafState leaf = std::move(leaves_[leaf_index]);
    leaves_.erase(leaves_.begin() + leaf_index);
    const Candidate& cand = leaf.candidates[leaf.next];
    DecisionTreeCPD& tree = model.cpds[leaf.target];
    const Eigen::VectorXd child_prior = tree.node(leaf.node).prior / r_;
    const std::vector<Eigen::VectorXd> priors(r_, child_prior);
    const int first = tree.split(leaf.node, cand.item, cand.child_counts, priors);
    add_edge(cand.item, leaf.target);

    std::vector<std::vector<int>> parts(r_);
    for (int u : leaf.users) parts[state(u, cand.item)].push_back(u);
    for (int s = 0; s < r_; ++s)
      leaves_.push_back(make_leaf(leaf.target, first + s, std::move(parts[s]), tree));
    return cand.delta;
  }

  const VoteDatabase& db_;
  const LearnConfig& cfg_;
  int items_;
  int users_;
  int r_;
  std::vector<std::uint8_t> states_;
  std::vector<std::uint8_t> reach_;
  std::vector<std::vector<int>> parents_;
  std::vector<LeafState> leaves_;
  std::vector<double> joint_;
};

}  // namespace

LearnedNetwork learn_network(const VoteDatabase& db, const LearnConfig& cfg) {
  cfg.validate();
  if (db.empty() || db.item_count() == 0) throw DataError("learn_network: empty vote database");
  return NetworkSearch(db, cfg).run();
}

const Eigen::VectorXd& tree_lookup(const BayesNetModel& model, int item,
                                   std::span<const int> evidence) {
  if (item < 0 || item >= model.num_items()) throw DomainError("tree_lookup: unknown item");
  const DecisionTreeCPD& tree = model.cpds[item];
  return tree.node(tree.route(evidence)).probs;
}

std::vector<int> case_evidence(const BayesNetModel& model, const ActiveCase& active) {
  std::vector<int> evidence(model.num_items(), kNoVote);
  for (const Vote& v : active.observed) {
    if (v.item < 0 || v.item >= model.num_items())
      throw DomainError("case references an item outside the network");
    evidence[v.item] = model.scale.state_of(v.value);
  }
  return evidence;
}

double bn_expected_vote(const BayesNetModel& model, const ActiveCase& active, int item) {
  const auto evidence = case_evidence(model, active);
  return expected_vote(model.scale, tree_lookup(model, item, evidence));
}

std::vector<int> bn_rank(const BayesNetModel& model, const ActiveCase& active) {
  const auto evidence = case_evidence(model, active);
  std::vector<ScoredItem> scored;
  for (int j = 0; j < model.num_items(); ++j)
    if (!active.is_observed(j))
      scored.push_back({j, ranking_score(model.scale, tree_lookup(model, j, evidence))});
  return order_by_score(std::move(scored));
}

NetworkStatistics network_statistics(const BayesNetModel& model) {
  NetworkStatistics out;
  if (model.cpds.empty()) return out;
  double parents = 0.0, leaves = 0.0;
  for (const auto& cpd : model.cpds) {
    const int p = static_cast<int>(cpd.parents().size());
    const int l = cpd.leaf_count();
    parents += p;
    leaves += l;
    out.max_parents = std::max(out.max_parents, p);
    out.max_leaves = std::max(out.max_leaves, l);
  }
  out.mean_parents = parents / static_cast<double>(model.cpds.size());
  out.mean_leaves = leaves / static_cast<double>(model.cpds.size());
  return out;
}

BayesNetPredictor::BayesNetPredictor(BayesNetModel model, const VoteDatabase& universe)
    : model_(std::move(model)), universe_(universe), to_model_(universe.item_count(), -1) {
  if (model_.scale != universe.scale())
    throw DomainError("network scale differs from the item universe");
  for (int j = 0; j < model_.num_items(); ++j) {
    const auto u = universe.find_item(model_.items[j]);
    if (u) to_model_[*u] = j;
  }
}

ActiveCase BayesNetPredictor::to_model(const ActiveCase& active) const {
  ActiveCase out;
  out.user = active.user;
  for (const Vote& v : active.observed)
    if (to_model_[v.item] >= 0) out.observed.push_back({to_model_[v.item], v.value});
  std::sort(out.observed.begin(), out.observed.end(),
            [](const Vote& a, const Vote& b) { return a.item < b.item; });
  return out;
}

std::vector<double> BayesNetPredictor::predict(const ActiveCase& active,
                                               std::span<const int> items) const {
  const auto evidence = case_evidence(model_, to_model(active));
  std::vector<double> out;
  out.reserve(items.size());
  for (int j : items) {
    const int m = to_model_[j];
    out.push_back(m >= 0 ? expected_vote(model_.scale, tree_lookup(model_, m, evidence))
                         : item_mean_vote(universe_, j));
  }
  return out;
}

std::vector<int> BayesNetPredictor::rank(const ActiveCase& active) const {
  const auto evidence = case_evidence(model_, to_model(active));
  std::vector<ScoredItem> scored;
  for (int j = 0; j < universe_.item_count(); ++j) {
    if (active.is_observed(j)) continue;
    const int m = to_model_[j];
    if (m >= 0)
      scored.push_back({j, ranking_score(model_.scale, tree_lookup(model_, m, evidence)), true});
    else
      scored.push_back({j, popularity_score(universe_, j), false});
  }
  return order_by_score(std::move(scored));
}

std::optional<double> BayesNetPredictor::evidence_usage(const ActiveCase& active) const {
  const ActiveCase model_case = to_model(active);
  const auto evidence = case_evidence(model_, model_case);
  int modelled = 0, informed = 0;
  for (const Vote& target : active.targets) {
    const int m = to_model_[target.item];
    if (m < 0) continue;
    ++modelled;
    const DecisionTreeCPD& tree = model_.cpds[m];
    for (int n = tree.node(tree.route(evidence)).parent; n >= 0; n = tree.node(n).parent) {
      if (model_case.is_observed(tree.node(n).split)) {
        ++informed;
        break;
      }
    }
  }
  if (modelled == 0) return std::nullopt;
  return static_cast<double>(informed) / modelled;
}

}  // namespace cfbench
