#include "cfbench/distribution.hpp"

#include "cfbench/errors.hpp"

#include <cmath>

namespace cfbench {

double expected_vote(const VoteScale& scale, const Eigen::Ref<const Eigen::VectorXd>& dist) {
  double mass = 0.0, total = 0.0;
  for (int s = 1; s < dist.size(); ++s) {
    mass += dist(s);
    total += dist(s) * scale.state_value(s);
  }
  if (!(mass > 0.0)) throw DomainError("distribution has no mass on vote states");
  return total / mass;
}

double ranking_score(const VoteScale& scale, const Eigen::Ref<const Eigen::VectorXd>& dist) {
  const double voted = 1.0 - dist(kNoVote);
  if (scale.implicit) return voted;
  return expected_vote(scale, dist) * voted;
}

double log_dirichlet_multinomial(const Eigen::Ref<const Eigen::VectorXd>& counts,
                                 const Eigen::Ref<const Eigen::VectorXd>& alpha) {
  if ((alpha.array() <= 0.0).any())
    throw DomainError("Dirichlet pseudo-counts must be positive");
  double out = std::lgamma(alpha.sum()) - std::lgamma(alpha.sum() + counts.sum());
  for (int s = 0; s < counts.size(); ++s)
    out += std::lgamma(alpha(s) + counts(s)) - std::lgamma(alpha(s));
  return out;
}

}  // namespace cfbench
