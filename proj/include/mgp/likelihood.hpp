#ifndef MGP_LIKELIHOOD_HPP
#define MGP_LIKELIHOOD_HPP

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "mgp/common.hpp"
#include "mgp/kernels.hpp"
#include "mgp/linalg.hpp"
#include "mgp/partition.hpp"

namespace mgp {

/* J trials observed at shared ascending locations; one column per trial. */
struct TrialSet {
  Eigen::VectorXd locations;
  Eigen::MatrixXd trials;  // n x J

  TrialSet(Eigen::VectorXd locs, Eigen::MatrixXd y)
      : locations(std::move(locs)), trials(std::move(y)) {
    if (locations.size() < 2) throw DataError("need at least 2 locations");
    if (trials.rows() != locations.size()) throw DataError("trial length must match locations");
    if (trials.cols() < 1) throw DataError("need at least 1 trial");
    for (Eigen::Index i = 1; i < locations.size(); ++i)
      if (locations[i] < locations[i - 1]) throw DataError("locations must be ascending");
  }

  int n() const { return static_cast<int>(locations.size()); }
  int num_trials() const { return static_cast<int>(trials.cols()); }
  Eigen::VectorXd trial(int j) const { return trials.col(j); }
};

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/* log N(y; 0, sigma2*I + sum_l K_l) — the single-trial marginal. */
inline double single_trial_log_marginal(const Eigen::VectorXd& y, const Eigen::VectorXd& locs,
                                        const PartitionTree& tree, const Hyperparams& theta) {
  if (y.size() != locs.size()) throw DataError("observation/location size mismatch");
  return mvn_log_density(y, Eigen::VectorXd::Zero(y.size()), total_cov(locs, tree, theta));
}

/* log N(y; f^l(x), sigma2*I + sum_{l > level} K_l): likelihood conditioned on
 * the GP hierarchy realized down to `level`. */
inline double conditional_log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& locs,
                                         const PartitionTree& tree, const Hyperparams& theta,
                                         const Eigen::VectorXd& f_at_level, int level) {
  if (level < 0 || level >= tree.levels()) throw DataError("level out of range");
  if (y.size() != locs.size() || f_at_level.size() != locs.size())
    throw DataError("observation/location size mismatch");
  return mvn_log_density(y, f_at_level, cov_from_level(locs, tree, theta, level + 1));
}

/* Evaluates the multi-trial marginal likelihood for one dataset across many
 * candidate trees. K_0 never depends on the tree (level 0 is the whole
 * domain), so it is precomputed along with the per-trial sufficient
 * statistics; each tree only contributes its trial-conditional Sigma.
 *
 * The grouped determinant identity
 *   log|K_0| + log|J Sigma^-1 + K_0^-1| = log|Sigma + J K_0| - log|Sigma|
 * and the matching quadratic form
 *   (J Sigma^-1 + K_0^-1)^-1 = K_0 - J K_0 (Sigma + J K_0)^-1 K_0
 * let everything run off two Cholesky factors (Sigma and Sigma + J K_0)
 * without ever inverting K_0, so d^0 = 0 degrades to independent trials
 * with f^0 = 0 on the same code path. */
class MarginalLikelihoodEvaluator {
public:
  MarginalLikelihoodEvaluator(const TrialSet& data, Interval domain, Hyperparams theta)
      : theta_(std::move(theta)), locs_(data.locations), y_(data.trials) {
    theta_.check(theta_.levels());
    const double kappa0 = effective_bandwidth(theta_.kappa, domain, theta_.bandwidth_mode);
    k0_ = se_block(locs_, theta_.d.front(), kappa0);
    s_ = y_.rowwise().sum();
  }

  const Eigen::MatrixXd& k0() const { return k0_; }

  /* Eq-13-style log p(Y | A) given the trial-conditional covariance. */
  double log_marginal(const Eigen::MatrixXd& sigma) const {
    const double n = static_cast<double>(y_.rows());
    const double j = static_cast<double>(y_.cols());
    const auto chol_sigma = cholesky_with_jitter(sigma);
    const Eigen::MatrixXd m = sigma + j * k0_;
    const auto chol_m = cholesky_with_jitter(m);

    const Eigen::MatrixXd half = chol_sigma.llt.matrixL().solve(y_);
    const double quad_trials = half.squaredNorm();

    const Eigen::VectorXd u = chol_sigma.llt.solve(s_);
    const Eigen::VectorXd v = k0_ * u;
    const double quad_parent = u.dot(v) - j * v.dot(chol_m.llt.solve(v));

    return -0.5 * n * j * kLog2Pi - 0.5 * (j - 1.0) * chol_sigma.log_det() -
           0.5 * chol_m.log_det() - 0.5 * quad_trials + 0.5 * quad_parent;
  }

  /* Posterior over the shared parent f^0 given Sigma. */
  GaussianBelief posterior_parent(const Eigen::MatrixXd& sigma) const {
    if (!(theta_.d.front() > 0.0))
      throw NumericalError("K_0 is singular with d^0 = 0; the limiting model has f^0 = 0 and "
                           "independent trials, so there is no parent posterior to form");
    const double j = static_cast<double>(y_.cols());
    const auto chol_sigma = cholesky_with_jitter(sigma);
    const Eigen::MatrixXd mj = k0_ + sigma / j;
    const auto chol_mj = cholesky_with_jitter(mj);
    GaussianBelief belief;
    belief.cov = k0_ - k0_ * chol_mj.llt.solve(k0_);
    belief.cov = 0.5 * (belief.cov + belief.cov.transpose()).eval();
    belief.mean = belief.cov * chol_sigma.llt.solve(s_);
    return belief;
  }

private:
  Hyperparams theta_;
  Eigen::VectorXd locs_;
  Eigen::MatrixXd y_;
  Eigen::MatrixXd k0_;
  Eigen::VectorXd s_;
};

/* Joint marginal of all trials given the tree; does not decompose over
 * trials because of the shared parent. */
inline double multi_trial_log_marginal(const TrialSet& data, const PartitionTree& tree,
                                       const Hyperparams& theta) {
  MarginalLikelihoodEvaluator eval(data, tree.domain(), theta);
  return eval.log_marginal(trial_conditional_cov(data.locations, tree, theta));
}

inline GaussianBelief posterior_parent(const TrialSet& data, const PartitionTree& tree,
                                       const Hyperparams& theta) {
  MarginalLikelihoodEvaluator eval(data, tree.domain(), theta);
  return eval.posterior_parent(trial_conditional_cov(data.locations, tree, theta));
}

/* Predictive for a fresh trial: same mean as the parent posterior, covariance
 * widened by the trial-conditional Sigma. */
inline GaussianBelief predictive_new_trial(const TrialSet& data, const PartitionTree& tree,
                                           const Hyperparams& theta) {
  const Eigen::MatrixXd sigma = trial_conditional_cov(data.locations, tree, theta);
  MarginalLikelihoodEvaluator eval(data, tree.domain(), theta);
  GaussianBelief belief = eval.posterior_parent(sigma);
  belief.cov = (sigma + belief.cov).eval();
  return belief;
}

/* J = 0 degenerate predictive: no trials observed yet, so a new trial is
 * simply N(0, Sigma + K_0). */
inline GaussianBelief prior_predictive(const Eigen::VectorXd& locs, const PartitionTree& tree,
                                       const Hyperparams& theta) {
  GaussianBelief belief;
  belief.mean = Eigen::VectorXd::Zero(locs.size());
  belief.cov = total_cov(locs, tree, theta);
  return belief;
}

/* Gaussian conditioning of a joint belief on observed coordinates; returns
 * the belief over the complementary coordinates. */
inline GaussianBelief predictive_conditional(const GaussianBelief& belief,
                                             const std::vector<int>& observed_idx,
                                             const Eigen::VectorXd& observed_vals) {
  const int n = static_cast<int>(belief.mean.size());
  if (static_cast<Eigen::Index>(observed_idx.size()) != observed_vals.size())
    throw DataError("observed index/value size mismatch");
  if (observed_idx.empty()) return belief;

  std::vector<bool> is_obs(static_cast<std::size_t>(n), false);
  for (int i : observed_idx) {
    if (i < 0 || i >= n) throw DataError("observed index out of range");
    is_obs[static_cast<std::size_t>(i)] = true;
  }
  std::vector<int> unobs;
  for (int i = 0; i < n; ++i)
    if (!is_obs[static_cast<std::size_t>(i)]) unobs.push_back(i);
  if (unobs.empty()) throw DataError("conditioning needs a nonempty unobserved block");

  const auto no = static_cast<Eigen::Index>(observed_idx.size());
  const auto nu = static_cast<Eigen::Index>(unobs.size());
  Eigen::MatrixXd c_oo(no, no), c_uo(nu, no), c_uu(nu, nu);
  Eigen::VectorXd mu_o(no), mu_u(nu);
  for (Eigen::Index a = 0; a < no; ++a) {
    mu_o[a] = belief.mean[observed_idx[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < no; ++b)
      c_oo(a, b) = belief.cov(observed_idx[static_cast<std::size_t>(a)],
                              observed_idx[static_cast<std::size_t>(b)]);
  }
  for (Eigen::Index a = 0; a < nu; ++a) {
    mu_u[a] = belief.mean[unobs[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < no; ++b)
      c_uo(a, b) = belief.cov(unobs[static_cast<std::size_t>(a)],
                              observed_idx[static_cast<std::size_t>(b)]);
    for (Eigen::Index b = 0; b < nu; ++b)
      c_uu(a, b) = belief.cov(unobs[static_cast<std::size_t>(a)], unobs[static_cast<std::size_t>(b)]);
  }

  const auto chol = cholesky_with_jitter(c_oo);
  GaussianBelief out;
  out.mean = mu_u + c_uo * chol.llt.solve(observed_vals - mu_o);
  out.cov = c_uu - c_uo * chol.llt.solve(c_uo.transpose());
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

}  // namespace mgp

#endif
