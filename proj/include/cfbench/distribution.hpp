#ifndef CFBENCH_DISTRIBUTION_HPP_
#define CFBENCH_DISTRIBUTION_HPP_

#include <Eigen/Core>

#include "cfbench/votedata.hpp"

namespace cfbench {

// Helpers over a predictive distribution indexed by item state: entry
// kNoVote first, then one entry per vote value.

/// Expected vote with the no-vote state clamped to zero and the rest
/// renormalized. DomainError when no vote state carries mass.
double expected_vote(const VoteScale& scale, const Eigen::Ref<const Eigen::VectorXd>& dist);

/// Score used to rank items: Pr(vote) on implicit scales, otherwise the
/// expected vote times Pr(vote).
double ranking_score(const VoteScale& scale, const Eigen::Ref<const Eigen::VectorXd>& dist);

/// Log Dirichlet-multinomial marginal likelihood of (possibly fractional)
/// counts under Dirichlet(alpha).
double log_dirichlet_multinomial(const Eigen::Ref<const Eigen::VectorXd>& counts,
                                 const Eigen::Ref<const Eigen::VectorXd>& alpha);

}  // namespace cfbench

#endif  // CFBENCH_DISTRIBUTION_HPP_
