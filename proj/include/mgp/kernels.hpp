#ifndef MGP_KERNELS_HPP
#define MGP_KERNELS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "mgp/common.hpp"
#include "mgp/partition.hpp"

namespace mgp {

enum class BandwidthMode { kFractal, kFixed };

/* Covariance hyperparameters: per-level scales d^0..d^{L-1}, base bandwidth
 * kappa, nugget sigma2. In fractal mode each partition set rescales kappa by
 * its squared length so children stay locally as smooth as their parent. */
struct Hyperparams {
  std::vector<double> d;
  double kappa = 1.0;
  double sigma2 = 0.0;
  BandwidthMode bandwidth_mode = BandwidthMode::kFractal;

  int levels() const { return static_cast<int>(d.size()); }

  double sum_d() const {
    double s = 0.0;
    for (double v : d) s += v;
    return s;
  }

  void check(int tree_levels) const {
    if (levels() != tree_levels) throw ConfigError("need one scale d per tree level");
    for (double v : d)
      if (!(v >= 0.0)) throw ConfigError("scales d must be nonnegative");
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    if (!(sigma2 >= 0.0)) throw ConfigError("sigma2 must be nonnegative");
  }
};

/* Sum of squared child-level scales; values >= 1 fall outside the
 * finite-variance recommendation and are worth a warning, not an error. */
inline bool variance_budget_exceeded(const Hyperparams& theta) {
  double s = 0.0;
  for (int l = 1; l < theta.levels(); ++l) s += theta.d[static_cast<std::size_t>(l)] *
                                                theta.d[static_cast<std::size_t>(l)];
  return s >= 1.0;
}

inline double sq_exp(double x, double xp, double d, double kappa_eff) {
  const double dx = x - xp;
  return d * std::exp(-kappa_eff * dx * dx);
}

inline double effective_bandwidth(double kappa, const Interval& set, BandwidthMode mode) {
  if (mode == BandwidthMode::kFixed) return kappa;
  const double len = set.length();
  if (!(len > 0.0)) throw DataError("degenerate partition set has zero length");
  return kappa / (len * len);
}

/* Squared-exponential Gram block over one partition set's locations. */
inline Eigen::MatrixXd se_block(const Eigen::VectorXd& pts, double d, double kappa_eff) {
  const auto m = pts.size();
  Eigen::MatrixXd diff = pts.replicate(1, m) - pts.transpose().replicate(m, 1);
  return d * (-kappa_eff * diff.array().square()).exp().matrix();
}

/* Location indices grouped by the level-l set that contains them; groups are
 * index-sorted for sorted location vectors, giving block-diagonal kernels. */
inline std::vector<std::vector<int>> group_by_set(const Eigen::VectorXd& locs,
                                                  const PartitionTree& tree, int level) {
  std::vector<std::vector<int>> groups(tree.level_sets(level).size());
  for (int i = 0; i < locs.size(); ++i)
    groups[static_cast<std::size_t>(tree.set_index(level, locs[i]))].push_back(i);
  return groups;
}

/* K_l: entry (i,j) is the level-l kernel when both locations share a level-l
 * set and exactly zero otherwise. */
inline Eigen::MatrixXd level_cov(const Eigen::VectorXd& locs, const PartitionTree& tree,
                                 const Hyperparams& theta, int level) {
  theta.check(tree.levels());
  const auto n = locs.size();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  const double d = theta.d[static_cast<std::size_t>(level)];
  if (d == 0.0) return k;
  const auto& sets = tree.level_sets(level);
  const auto groups = group_by_set(locs, tree, level);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& idx = groups[g];
    if (idx.empty()) continue;
    const double kappa_eff = effective_bandwidth(theta.kappa, sets[g], theta.bandwidth_mode);
    Eigen::VectorXd pts(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) pts[static_cast<Eigen::Index>(a)] = locs[idx[a]];
    const Eigen::MatrixXd block = se_block(pts, d, kappa_eff);
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b)
        k(idx[a], idx[b]) = block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return k;
}

/* sigma2*I + sum of K_l for l in [from_level, L). from_level = 0 is the full
 * observation covariance of Eq-style y | A; from_level = 1 is the
 * trial-conditional covariance Sigma given the shared parent. */
inline Eigen::MatrixXd cov_from_level(const Eigen::VectorXd& locs, const PartitionTree& tree,
                                      const Hyperparams& theta, int from_level) {
  theta.check(tree.levels());
  const auto n = locs.size();
  Eigen::MatrixXd total = theta.sigma2 * Eigen::MatrixXd::Identity(n, n);
  for (int l = from_level; l < tree.levels(); ++l) total += level_cov(locs, tree, theta, l);
  return total;
}

inline Eigen::MatrixXd total_cov(const Eigen::VectorXd& locs, const PartitionTree& tree,
                                 const Hyperparams& theta) {
  return cov_from_level(locs, tree, theta, 0);
}

inline Eigen::MatrixXd trial_conditional_cov(const Eigen::VectorXd& locs,
                                             const PartitionTree& tree,
                                             const Hyperparams& theta) {
  return cov_from_level(locs, tree, theta, 1);
}

/* Closed-form correlation of two observations: kernels summed over the
 * levels whose sets contain both locations, normalized by the total
 * marginal variance sigma2 + sum_l d^l. Returns 1 at x == x'. */
inline double mgp_correlation(double x, double xp, const PartitionTree& tree,
                              const Hyperparams& theta) {
  theta.check(tree.levels());
  if (x == xp) return 1.0;
  const int shared = tree.deepest_shared_level(x, xp);
  double numer = 0.0;
  for (int l = 0; l <= shared; ++l) {
    const Interval& set = tree.level_sets(l)[static_cast<std::size_t>(tree.set_index(l, x))];
    const double kappa_eff = effective_bandwidth(theta.kappa, set, theta.bandwidth_mode);
    numer += sq_exp(x, xp, theta.d[static_cast<std::size_t>(l)], kappa_eff);
  }
  return numer / (theta.sigma2 + theta.sum_d());
}

}  // namespace mgp

#endif
