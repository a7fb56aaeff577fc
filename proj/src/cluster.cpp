#include "cfbench/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfbench/errors.hpp"
#include "cfbench/random.hpp"

namespace cfbench {

namespace {

struct StateEntry {
  int item;
  int state;
};

std::vector<std::vector<StateEntry>> user_states(const VoteDatabase& db) {
  std::vector<std::vector<StateEntry>> out(db.user_count());
  for (int u = 0; u < db.user_count(); ++u) {
    out[u].reserve(db.votes(u).size());
    for (const Vote& v : db.votes(u)) out[u].push_back({v.item, db.scale().state_of(v.value)});
  }
  return out;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double top = x.maxCoeff();
  return top + std::log((x.array() - top).exp().sum());
}

struct LogParameters {
  Eigen::VectorXd log_prior;
  std::vector<Eigen::MatrixXd> log_cond;
  Eigen::VectorXd no_vote_base;  // sum_j log Pr(no vote on j | c)
};

LogParameters log_parameters(const ClusterModel& model) {
  LogParameters lp;
  lp.log_prior = model.class_prior.array().log();
  lp.no_vote_base.resize(model.num_classes());
  for (int c = 0; c < model.num_classes(); ++c) {
    lp.log_cond.push_back(model.cond[c].array().log().matrix());
    lp.no_vote_base(c) = lp.log_cond.back().col(kNoVote).sum();
  }
  return lp;
}

Eigen::VectorXd log_joint(const LogParameters& lp, std::span<const StateEntry> votes) {
  Eigen::VectorXd out = lp.log_prior + lp.no_vote_base;
  for (const auto& e : votes)
    for (int c = 0; c < out.size(); ++c)
      out(c) += lp.log_cond[c](e.item, e.state) - lp.log_cond[c](e.item, kNoVote);
  return out;
}

std::vector<StateEntry> case_states(const ClusterModel& model, const ActiveCase& active) {
  std::vector<StateEntry> out;
  for (const Vote& v : active.observed) {
    if (v.item < 0 || v.item >= model.num_items())
      throw DomainError("case references an item outside the cluster model");
    out.push_back({v.item, model.scale.state_of(v.value)});
  }
  return out;
}

void check_compatible(const ClusterModel& model, const VoteDatabase& db) {
  if (model.scale != db.scale() || model.items != db.item_ids())
    throw DomainError("cluster model and database disagree on items or scale");
}

Eigen::VectorXd marginal_distribution(const VoteDatabase& db, int item, double prior_strength) {
  const int r = db.scale().num_states();
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(r);
  for (const Voter& v : db.voters(item)) counts(db.scale().state_of(v.value)) += 1.0;
  counts(kNoVote) = db.user_count() - counts.sum();
  return (counts.array() + prior_strength / r) / (db.user_count() + prior_strength);
}

}  // namespace

Eigen::MatrixXd e_step(const ClusterModel& model, const VoteDatabase& db,
                       double* log_likelihood) {
  check_compatible(model, db);
  const LogParameters lp = log_parameters(model);
  const auto states = user_states(db);
  Eigen::MatrixXd resp(db.user_count(), model.num_classes());
  double ll = 0.0;
  for (int u = 0; u < db.user_count(); ++u) {
    const Eigen::VectorXd joint = log_joint(lp, states[u]);
    const double norm = log_sum_exp(joint);
    ll += norm;
    resp.row(u) = (joint.array() - norm).exp().transpose();
  }
  if (log_likelihood) *log_likelihood = ll;
  return resp;
}

ClusterStatistics expected_counts(const VoteDatabase& db,
                                  const Eigen::MatrixXd& responsibilities) {
  const int classes = static_cast<int>(responsibilities.cols());
  const int r = db.scale().num_states();
  ClusterStatistics stats;
  stats.class_counts = responsibilities.colwise().sum().transpose();
  stats.state_counts.assign(classes, Eigen::MatrixXd::Zero(db.item_count(), r));
  for (int u = 0; u < db.user_count(); ++u)
    for (const Vote& v : db.votes(u)) {
      const int s = db.scale().state_of(v.value);
      for (int c = 0; c < classes; ++c)
        stats.state_counts[c](v.item, s) += responsibilities(u, c);
    }
  for (int c = 0; c < classes; ++c) {
    auto& counts = stats.state_counts[c];
    for (int j = 0; j < db.item_count(); ++j) {
      const double voted = counts.row(j).tail(r - 1).sum();
      counts(j, kNoVote) = std::max(0.0, stats.class_counts(c) - voted);
    }
  }
  return stats;
}

ClusterModel m_step(const VoteDatabase& db, const Eigen::MatrixXd& responsibilities,
                    double prior_strength) {
  const int classes = static_cast<int>(responsibilities.cols());
  const int r = db.scale().num_states();
  const ClusterStatistics stats = expected_counts(db, responsibilities);
  ClusterModel model;
  model.scale = db.scale();
  model.items = db.item_ids();
  model.class_prior = (stats.class_counts.array() + prior_strength / classes) /
                      (db.user_count() + prior_strength);
  for (int c = 0; c < classes; ++c)
    model.cond.push_back(((stats.state_counts[c].array() + prior_strength / r) /
                          (stats.class_counts(c) + prior_strength))
                             .matrix());
  return model;
}

double map_objective(const ClusterModel& model, const VoteDatabase& db,
                     double prior_strength) {
  double ll = 0.0;
  e_step(model, db, &ll);
  const double a_class = prior_strength / model.num_classes();
  const double a_state = prior_strength / model.num_states();
  double prior = a_class * model.class_prior.array().log().sum();
  for (const auto& cond : model.cond) prior += a_state * cond.array().log().sum();
  return ll + prior;
}

ClusterFit em_fit(const VoteDatabase& db, int classes, std::uint64_t seed,
                  const EmOptions& options) {
  if (db.empty()) throw DomainError("em_fit: empty database");
  if (classes < 1) throw DomainError("em_fit: need at least one class");
  if (!(options.prior_strength > 0.0)) throw DomainError("em_fit: prior strength must be > 0");
  const int r = db.scale().num_states();
  const int items = db.item_count();

  ClusterModel model;
  model.scale = db.scale();
  model.items = db.item_ids();
  Rng rng(seed);
  if (classes == 1) {
    // nothing hidden: the smoothed marginals are already the fixed point
    model.class_prior = Eigen::VectorXd::Ones(1);
    Eigen::MatrixXd cond(items, r);
    for (int j = 0; j < items; ++j)
      cond.row(j) = marginal_distribution(db, j, options.prior_strength).transpose();
    model.cond.push_back(std::move(cond));
  } else {
    const std::vector<double> uniform(classes, options.noise_strength);
    const auto prior = rng.dirichlet(uniform);
    model.class_prior = Eigen::Map<const Eigen::VectorXd>(prior.data(), classes);
    std::vector<Eigen::VectorXd> marginals;
    for (int j = 0; j < items; ++j)
      marginals.push_back(marginal_distribution(db, j, options.prior_strength));
    for (int c = 0; c < classes; ++c) {
      Eigen::MatrixXd cond(items, r);
      for (int j = 0; j < items; ++j) {
        std::vector<double> alpha(r);
        for (int s = 0; s < r; ++s) alpha[s] = options.noise_strength * marginals[j](s);
        auto draw = rng.dirichlet(alpha);
        double total = 0.0;
        for (double& p : draw) total += (p = std::max(p, 1e-6));
        for (int s = 0; s < r; ++s) cond(j, s) = draw[s] / total;
      }
      model.cond.push_back(std::move(cond));
    }
  }

  FitReport report;
  report.seed = seed;
  if (classes > db.user_count())
    report.warnings.push_back("more classes than users; some classes will collapse");
  const double a_class = options.prior_strength / classes;
  const double a_state = options.prior_strength / r;
  auto prior_term = [&](const ClusterModel& m) {
    double p = a_class * m.class_prior.array().log().sum();
    for (const auto& cond : m.cond) p += a_state * cond.array().log().sum();
    return p;
  };
  const double users = db.user_count();

  double ll = 0.0;
  Eigen::MatrixXd resp = e_step(model, db, &ll);
  double previous = ll + prior_term(model);
  report.objective.push_back(previous);
  for (int it = 1; it <= options.max_iter; ++it) {
    model = m_step(db, resp, options.prior_strength);
    resp = e_step(model, db, &ll);
    const double current = ll + prior_term(model);
    report.objective.push_back(current);
    report.iterations = it;
    if (current < previous - 1e-9 * users) report.monotone = false;
    if (std::abs(current - previous) <= options.tol * std::abs(previous)) {
      report.converged = true;
      break;
    }
    previous = current;
  }
  report.cs_score = cheeseman_stutz_score(model, db, options.prior_strength);
  return {std::move(model), std::move(report)};
}

namespace {

// log Pr(C = c, completed case) term by term, leaving out item skip. Unlike
// log_joint this tolerates zero probabilities in hand-built models.
Eigen::VectorXd direct_log_joint(const ClusterModel& model, const ActiveCase& active, int skip) {
  std::vector<int> state(model.num_items(), kNoVote);
  for (const StateEntry& e : case_states(model, active)) state[e.item] = e.state;
  Eigen::VectorXd out = model.class_prior.array().log();
  for (int c = 0; c < model.num_classes(); ++c)
    for (int j = 0; j < model.num_items(); ++j)
      if (j != skip) out(c) += std::log(model.cond[c](j, state[j]));
  return out;
}

Eigen::VectorXd normalize_log(const Eigen::VectorXd& joint) {
  return (joint.array() - log_sum_exp(joint)).exp();
}

}  // namespace

Eigen::VectorXd cluster_posterior(const ClusterModel& model, const ActiveCase& active) {
  return normalize_log(direct_log_joint(model, active, -1));
}

ClusterPrediction cluster_predict(const ClusterModel& model, const ActiveCase& active,
                                  int item) {
  if (item < 0 || item >= model.num_items()) throw DomainError("cluster_predict: unknown item");
  if (active.is_observed(item)) throw DomainError("cluster_predict: item already observed");
  const Eigen::VectorXd post = normalize_log(direct_log_joint(model, active, item));
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(model.num_states());
  for (int c = 0; c < model.num_classes(); ++c)
    dist += post(c) * model.cond[c].row(item).transpose();
  return {expected_vote(model.scale, dist), dist};
}

double cheeseman_stutz_score(const ClusterModel& model, const VoteDatabase& db,
                             double prior_strength) {
  check_compatible(model, db);
  double ll = 0.0;
  const Eigen::MatrixXd resp = e_step(model, db, &ll);
  const ClusterStatistics stats = expected_counts(db, resp);
  const int classes = model.num_classes();
  const int r = model.num_states();

  const Eigen::VectorXd class_alpha = Eigen::VectorXd::Constant(classes, prior_strength / classes);
  const Eigen::VectorXd state_alpha = Eigen::VectorXd::Constant(r, prior_strength / r);
  double complete_marginal = log_dirichlet_multinomial(stats.class_counts, class_alpha);
  double complete_at_map = (stats.class_counts.array() * model.class_prior.array().log()).sum();
  for (int c = 0; c < classes; ++c) {
    for (int j = 0; j < model.num_items(); ++j)
      complete_marginal += log_dirichlet_multinomial(stats.state_counts[c].row(j).transpose(),
                                                     state_alpha);
    complete_at_map += (stats.state_counts[c].array() * model.cond[c].array().log()).sum();
  }
  return complete_marginal - complete_at_map + ll;
}

ClusterSelection select_cluster_model(const VoteDatabase& db, int c_max, std::uint64_t seed,
                                      const EmOptions& options) {
  if (c_max < 1) throw DomainError("select_cluster_model: c_max must be >= 1");
  ClusterSelection out;
  bool have_best = false;
  for (int classes = 1; classes <= c_max; ++classes) {
    const int restarts = classes == 1 ? 1 : std::max(1, options.restarts);
    std::optional<ClusterFit> best_fit;
    int non_monotone = 0;
    for (int attempt = 0; attempt < restarts; ++attempt) {
      const std::uint64_t fit_seed =
          mix_seed(seed, static_cast<std::uint64_t>(classes) * 1000 + attempt);
      ClusterFit fit = em_fit(db, classes, fit_seed, options);
      if (!fit.report.monotone) ++non_monotone;
      if (!best_fit || fit.report.objective.back() > best_fit->report.objective.back())
        best_fit = std::move(fit);
    }
    out.table.push_back({classes, best_fit->report.cs_score, best_fit->report.objective.back(),
                         best_fit->report.iterations, best_fit->report.converged, restarts,
                         non_monotone});
    if (!have_best || best_fit->report.cs_score > out.best.report.cs_score) {
      out.best = std::move(*best_fit);
      have_best = true;
    }
  }
  return out;
}

ClusterPredictor::ClusterPredictor(ClusterModel model, const VoteDatabase& universe)
    : model_(std::move(model)), universe_(universe), to_model_(universe.item_count(), -1) {
  if (model_.scale != universe.scale())
    throw DomainError("cluster model scale differs from the item universe");
  for (int j = 0; j < model_.num_items(); ++j) {
    const auto u = universe.find_item(model_.items[j]);
    if (u) to_model_[*u] = j;
  }
}

ActiveCase ClusterPredictor::to_model(const ActiveCase& active) const {
  ActiveCase out;
  out.user = active.user;
  for (const Vote& v : active.observed)
    if (to_model_[v.item] >= 0) out.observed.push_back({to_model_[v.item], v.value});
  std::sort(out.observed.begin(), out.observed.end(),
            [](const Vote& a, const Vote& b) { return a.item < b.item; });
  return out;
}

// Column j: predictive distribution of model item j with j itself removed
// from the no-vote evidence.
Eigen::MatrixXd ClusterPredictor::target_distributions(const ActiveCase& model_case) const {
  const LogParameters lp = log_parameters(model_);
  const Eigen::VectorXd joint = log_joint(lp, case_states(model_, model_case));
  const int classes = model_.num_classes();
  Eigen::MatrixXd out(model_.num_states(), model_.num_items());
  Eigen::VectorXd adjusted(classes);
  for (int j = 0; j < model_.num_items(); ++j) {
    for (int c = 0; c < classes; ++c) adjusted(c) = joint(c) - lp.log_cond[c](j, kNoVote);
    const Eigen::VectorXd post = (adjusted.array() - log_sum_exp(adjusted)).exp();
    Eigen::VectorXd dist = Eigen::VectorXd::Zero(model_.num_states());
    for (int c = 0; c < classes; ++c) dist += post(c) * model_.cond[c].row(j).transpose();
    out.col(j) = dist;
  }
  return out;
}

std::vector<double> ClusterPredictor::predict(const ActiveCase& active,
                                              std::span<const int> items) const {
  const Eigen::MatrixXd dists = target_distributions(to_model(active));
  std::vector<double> out;
  out.reserve(items.size());
  for (int j : items) {
    const int m = to_model_[j];
    out.push_back(m >= 0 ? expected_vote(model_.scale, dists.col(m)) : item_mean_vote(universe_, j));
  }
  return out;
}

std::vector<int> ClusterPredictor::rank(const ActiveCase& active) const {
  const Eigen::MatrixXd dists = target_distributions(to_model(active));
  std::vector<ScoredItem> scored;
  for (int j = 0; j < universe_.item_count(); ++j) {
    if (active.is_observed(j)) continue;
    const int m = to_model_[j];
    if (m >= 0)
      scored.push_back({j, ranking_score(model_.scale, dists.col(m)), true});
    else
      scored.push_back({j, popularity_score(universe_, j), false});
  }
  return order_by_score(std::move(scored));
}

}  // namespace cfbench
