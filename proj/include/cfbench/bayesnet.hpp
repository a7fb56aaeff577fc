#ifndef CFBENCH_BAYESNET_HPP_
#define CFBENCH_BAYESNET_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cfbench/distribution.hpp"
#include "cfbench/predictor.hpp"
#include "cfbench/votedata.hpp"
#include "json.hpp"

namespace cfbench {

struct LearnConfig {
  /// Prior probability charged per free parameter of every leaf.
  double structure_penalty = 0.1;
  /// Strength of the uniform prior network.
  double equivalent_sample_size = 10.0;
  std::optional<int> max_parents;

  void validate() const;
};

/// Log Dirichlet-multinomial marginal likelihood of a leaf's counts plus the
/// structure prior (r - 1) * log(structure_penalty) for its free parameters.
double leaf_family_score(const Eigen::Ref<const Eigen::VectorXd>& counts,
                         const Eigen::Ref<const Eigen::VectorXd>& prior_counts,
                         double structure_penalty);

/// Decision-tree conditional distribution of one item given its parents.
///
/// Internal nodes split on another item's full state set, one child per
/// state in state order. Leaves hold the training counts, the Dirichlet
/// pseudo-counts they were scored with, and the posterior-mean distribution.
class DecisionTreeCPD {
 public:
  struct Node {
    int split = -1;
    int parent = -1;
    std::vector<int> children;
    Eigen::VectorXd counts;
    Eigen::VectorXd prior;
    Eigen::VectorXd probs;

    bool is_leaf() const { return split < 0; }
  };

  DecisionTreeCPD() = default;
  /// A single-leaf tree.
  DecisionTreeCPD(int target, Eigen::VectorXd counts, Eigen::VectorXd prior);

  int target() const { return target_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int index) const { return nodes_[index]; }
  int leaf_count() const;
  std::vector<int> leaves() const;

  /// Splits a leaf on item; children are appended in state order and the
  /// index of the first one is returned. DomainError if item is already on
  /// the leaf's path, is the target, or the sizes disagree.
  int split(int leaf, int item, const std::vector<Eigen::VectorXd>& child_counts,
            const std::vector<Eigen::VectorXd>& child_priors);

  bool path_contains(int node, int item) const;
  /// Distinct split items, ascending.
  std::vector<int> parents() const;

  /// Leaf reached by the evidence (one state per item, -1 = unknown).
  /// DomainError when a split item has no evidence.
  int route(std::span<const int> evidence) const;

  /// Rebuilds a tree from raw nodes (deserialization). Checks structure.
  static DecisionTreeCPD from_nodes(int target, std::vector<Node> nodes);

 private:
  int target_ = -1;
  std::vector<Node> nodes_;
};

struct BayesNetModel {
  VoteScale scale;
  std::vector<std::string> items;
  /// cpds[j].target() == j.
  std::vector<DecisionTreeCPD> cpds;

  int num_items() const { return static_cast<int>(items.size()); }
  int num_states() const { return scale.num_states(); }
  /// parent -> child edges implied by the splits, sorted.
  std::vector<std::pair<int, int>> parent_edges() const;
  bool is_acyclic() const;
};

struct LearnReport {
  /// Total network score before the first split and after each accepted one.
  std::vector<double> score_trace;
  int splits = 0;
  /// False if a split ever lowered the total score or closed a cycle.
  bool invariants_held = true;
};

struct LearnedNetwork {
  BayesNetModel model;
  LearnReport report;
};

/// Greedy structure search: starting from single-leaf trees, repeatedly
/// applies the best-scoring leaf split (over every item, leaf and split
/// item) that keeps the parent graph acyclic, until no split improves the
/// score. Ties go to the smallest (item, leaf, split item).
LearnedNetwork learn_network(const VoteDatabase& db, const LearnConfig& cfg);

/// Leaf distribution for item under a complete evidence assignment
/// (states indexed by item; the item's own entry is ignored).
const Eigen::VectorXd& tree_lookup(const BayesNetModel& model, int item,
                                   std::span<const int> evidence);

/// Evidence vector for a case: observed vote states, no-vote elsewhere.
std::vector<int> case_evidence(const BayesNetModel& model, const ActiveCase& active);

/// Expected vote for item with the no-vote probability clamped to zero.
double bn_expected_vote(const BayesNetModel& model, const ActiveCase& active, int item);

/// Unobserved items by ranking_score of their leaf distribution.
std::vector<int> bn_rank(const BayesNetModel& model, const ActiveCase& active);

struct NetworkStatistics {
  double mean_parents = 0.0;
  double mean_leaves = 0.0;
  int max_parents = 0;
  int max_leaves = 0;
};
NetworkStatistics network_statistics(const BayesNetModel& model);

nlohmann::json to_json(const BayesNetModel& model);
BayesNetModel bayes_net_from_json(const nlohmann::json& j);

/// BayesNetModel over a larger item universe; untrained items fall back to
/// training popularity like ClusterPredictor.
class BayesNetPredictor : public Predictor {
 public:
  BayesNetPredictor(BayesNetModel model, const VoteDatabase& universe);

  const BayesNetModel& model() const { return model_; }

  std::vector<double> predict(const ActiveCase& active,
                              std::span<const int> items) const override;
  std::vector<int> rank(const ActiveCase& active) const override;
  /// Share of modelled targets whose leaf was selected by at least one
  /// observed vote (as opposed to only no-vote entries).
  std::optional<double> evidence_usage(const ActiveCase& active) const override;

 private:
  ActiveCase to_model(const ActiveCase& active) const;

  BayesNetModel model_;
  const VoteDatabase& universe_;
  std::vector<int> to_model_;
};

}  // namespace cfbench

#endif  // CFBENCH_BAYESNET_HPP_
