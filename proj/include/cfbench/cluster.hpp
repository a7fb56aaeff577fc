#ifndef CFBENCH_CLUSTER_HPP_
#define CFBENCH_CLUSTER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cfbench/distribution.hpp"
#include "cfbench/predictor.hpp"
#include "cfbench/votedata.hpp"
#include "json.hpp"

namespace cfbench {

/// Multinomial mixture over complete vote vectors: a hidden class C and,
/// given C, independent per-item distributions over {no vote} + vote states.
struct ClusterModel {
  VoteScale scale;
  std::vector<std::string> items;
  /// Pr(C = c).
  Eigen::VectorXd class_prior;
  /// cond[c](j, s) = Pr(state of item j = s | C = c); rows sum to one.
  std::vector<Eigen::MatrixXd> cond;

  int num_classes() const { return static_cast<int>(class_prior.size()); }
  int num_items() const { return static_cast<int>(items.size()); }
  int num_states() const { return scale.num_states(); }
};

struct EmOptions {
  /// Stop when the per-user objective changes by less than tol (relative).
  double tol = 1e-6;
  int max_iter = 200;
  int restarts = 3;
  /// Total pseudo-count of each symmetric Dirichlet parameter prior.
  double prior_strength = 1.0;
  /// Concentration multiplier of the Dirichlet noise around the marginals.
  double noise_strength = 10.0;
};

struct FitReport {
  /// Penalized (MAP) log-likelihood, one entry per parameter state visited:
  /// entry 0 is the initialization, entry t follows iteration t.
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
  /// False if the per-user objective ever dropped by more than 1e-9.
  bool monotone = true;
  double cs_score = 0.0;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
};

struct ClusterFit {
  ClusterModel model;
  FitReport report;
};

/// Expected counts accumulated from class responsibilities.
struct ClusterStatistics {
  Eigen::VectorXd class_counts;
  std::vector<Eigen::MatrixXd> state_counts;
};

/// EM for a C-class mixture, initialized from the item marginals perturbed
/// by seeded Dirichlet noise. DomainError for an empty database or C < 1.
ClusterFit em_fit(const VoteDatabase& db, int classes, std::uint64_t seed,
                  const EmOptions& options = {});

/// Responsibilities (users x classes) of every database user under model.
/// Writes the data log-likelihood to log_likelihood when non-null.
Eigen::MatrixXd e_step(const ClusterModel& model, const VoteDatabase& db,
                       double* log_likelihood = nullptr);

ClusterStatistics expected_counts(const VoteDatabase& db,
                                  const Eigen::MatrixXd& responsibilities);

/// Posterior-mean parameters (N + a) / (N_total + strength) for the given
/// responsibilities, i.e. the maximizer of the penalized objective.
ClusterModel m_step(const VoteDatabase& db, const Eigen::MatrixXd& responsibilities,
                    double prior_strength);

/// Log-likelihood plus the log prior density terms sum a * log(theta).
double map_objective(const ClusterModel& model, const VoteDatabase& db,
                     double prior_strength);

/// Pr(C | observed votes, every other item unvoted).
Eigen::VectorXd cluster_posterior(const ClusterModel& model, const ActiveCase& active);

struct ClusterPrediction {
  double expected_vote;
  /// Mixture distribution over all states, no-vote included.
  Eigen::VectorXd distribution;
};

/// Mixes the class conditionals for item with the posterior given the
/// observed votes and no-vote on every item except the target. The expected
/// vote ignores the no-vote mass.
ClusterPrediction cluster_predict(const ClusterModel& model, const ActiveCase& active,
                                  int item);

/// Cheeseman-Stutz approximation to log p(db | number of classes).
double cheeseman_stutz_score(const ClusterModel& model, const VoteDatabase& db,
                             double prior_strength = 1.0);

struct ClusterScoreRow {
  int classes;
  double cs_score;
  double objective;
  int iterations;
  bool converged;
  int restarts;
  /// Restarts whose objective ever decreased.
  int non_monotone;
};

struct ClusterSelection {
  ClusterFit best;
  std::vector<ClusterScoreRow> table;
};

/// Fits C = 1..c_max (best of options.restarts EM runs each) and keeps the
/// class count with the highest Cheeseman-Stutz score (ties to fewer classes).
ClusterSelection select_cluster_model(const VoteDatabase& db, int c_max,
                                      std::uint64_t seed, const EmOptions& options = {});

nlohmann::json to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& j);

/// Scores items of a larger universe with a cluster model. Universe items
/// the model was not trained on are ranked by training popularity, below
/// every modelled item of equal score.
class ClusterPredictor : public Predictor {
 public:
  ClusterPredictor(ClusterModel model, const VoteDatabase& universe);

  const ClusterModel& model() const { return model_; }

  std::vector<double> predict(const ActiveCase& active,
                              std::span<const int> items) const override;
  std::vector<int> rank(const ActiveCase& active) const override;

 private:
  ActiveCase to_model(const ActiveCase& active) const;
  Eigen::MatrixXd target_distributions(const ActiveCase& model_case) const;

  ClusterModel model_;
  const VoteDatabase& universe_;
  std::vector<int> to_model_;
};

}  // namespace cfbench

#endif  // CFBENCH_CLUSTER_HPP_
