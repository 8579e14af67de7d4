#ifndef MGP_TESTS_ORACLES_HPP
#define MGP_TESTS_ORACLES_HPP

/* Independent oracles for the test suite. Everything here deliberately
 * avoids the library's computational paths: densities go through an
 * eigendecomposition instead of Cholesky solves, covariances are assembled
 * entry by entry from interval membership, and small tree spaces are
 * enumerated exhaustively. */

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mgp/kernels.hpp"
#include "mgp/likelihood.hpp"
#include "mgp/mcmc.hpp"
#include "mgp/ncut.hpp"
#include "mgp/partition.hpp"

namespace oracle {

inline double mvn_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd lambda = es.eigenvalues();
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * (y - mean);
  double log_det = 0.0, quad = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    log_det += std::log(lambda[i]);
    quad += proj[i] * proj[i] / lambda[i];
  }
  return -0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI) - 0.5 * log_det -
         0.5 * quad;
}

/* Entrywise covariance build straight from the level-set definitions. */
inline Eigen::MatrixXd covariance_entrywise(const Eigen::VectorXd& locs,
                                            const mgp::PartitionTree& tree,
                                            const mgp::Hyperparams& theta, int from_level) {
  const auto n = locs.size();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double value = i == j ? theta.sigma2 : 0.0;
      for (int l = from_level; l < tree.levels(); ++l) {
        for (const mgp::Interval& set : tree.level_sets(l)) {
          const bool in_i = set.contains(locs[i]) ||
                            (locs[i] == tree.domain().hi && set.hi == tree.domain().hi);
          const bool in_j = set.contains(locs[j]) ||
                            (locs[j] == tree.domain().hi && set.hi == tree.domain().hi);
          if (!in_i || !in_j) continue;
          double kappa_eff = theta.kappa;
          if (theta.bandwidth_mode == mgp::BandwidthMode::kFractal)
            kappa_eff = theta.kappa / (set.length() * set.length());
          const double dx = locs[i] - locs[j];
          value += theta.d[static_cast<std::size_t>(l)] * std::exp(-kappa_eff * dx * dx);
        }
      }
      cov(i, j) = value;
    }
  }
  return cov;
}

/* Joint density of all trials stacked into one nJ vector: the shared parent
 * puts K_0 in every block, the trial-specific covariance on the diagonal. */
inline double stacked_joint_log_density(const Eigen::MatrixXd& trials,
                                        const Eigen::MatrixXd& k0, const Eigen::MatrixXd& sigma) {
  const auto n = trials.rows();
  const auto j = trials.cols();
  Eigen::MatrixXd cov(n * j, n * j);
  for (Eigen::Index a = 0; a < j; ++a)
    for (Eigen::Index b = 0; b < j; ++b)
      cov.block(a * n, b * n, n, n) = a == b ? (k0 + sigma).eval() : k0;
  Eigen::VectorXd stacked(n * j);
  for (Eigen::Index a = 0; a < j; ++a) stacked.segment(a * n, n) = trials.col(a);
  return mvn_log_density(stacked, Eigen::VectorXd::Zero(n * j), cov);
}

/* Gaussian conditioning through explicit inversion. */
inline mgp::GaussianBelief condition_explicit(const mgp::GaussianBelief& belief,
                                              const std::vector<int>& obs_idx,
                                              const Eigen::VectorXd& obs_vals) {
  const int n = static_cast<int>(belief.mean.size());
  std::vector<int> unobs;
  std::vector<bool> is_obs(static_cast<std::size_t>(n), false);
  for (int i : obs_idx) is_obs[static_cast<std::size_t>(i)] = true;
  for (int i = 0; i < n; ++i)
    if (!is_obs[static_cast<std::size_t>(i)]) unobs.push_back(i);

  const auto no = static_cast<Eigen::Index>(obs_idx.size());
  const auto nu = static_cast<Eigen::Index>(unobs.size());
  Eigen::MatrixXd c_oo(no, no), c_uo(nu, no), c_uu(nu, nu);
  Eigen::VectorXd mu_o(no), mu_u(nu);
  for (Eigen::Index a = 0; a < no; ++a) {
    mu_o[a] = belief.mean[obs_idx[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < no; ++b)
      c_oo(a, b) = belief.cov(obs_idx[static_cast<std::size_t>(a)],
                              obs_idx[static_cast<std::size_t>(b)]);
  }
  for (Eigen::Index a = 0; a < nu; ++a) {
    mu_u[a] = belief.mean[unobs[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < no; ++b)
      c_uo(a, b) = belief.cov(unobs[static_cast<std::size_t>(a)],
                              obs_idx[static_cast<std::size_t>(b)]);
    for (Eigen::Index b = 0; b < nu; ++b)
      c_uu(a, b) = belief.cov(unobs[static_cast<std::size_t>(a)],
                              unobs[static_cast<std::size_t>(b)]);
  }
  const Eigen::MatrixXd inv = c_oo.inverse();
  return {mu_u + c_uo * inv * (obs_vals - mu_o), c_uu - c_uo * inv * c_uo.transpose()};
}

/* --- exhaustive enumeration of small tree spaces ------------------------- */

/* All achievable trees for (locs, L) with cut values at gap midpoints. A
 * segment with fewer than two observations passes through untouched. */
inline void enumerate_rec(const Eigen::VectorXd& locs, mgp::Interval interval, int first,
                          int last, int level, int levels,
                          std::vector<std::vector<mgp::Cut>>& out,
                          std::vector<mgp::Cut>& current) {
  if (level >= levels || last - first < 2) {
    out.push_back(current);
    return;
  }
  for (int k = 1; k <= last - first - 1; ++k) {
    const double z = 0.5 * (locs[first + k - 1] + locs[first + k]);
    current.push_back({level, z});
    std::vector<std::vector<mgp::Cut>> left_out;
    std::vector<mgp::Cut> scratch;
    enumerate_rec(locs, {interval.lo, z}, first, first + k, level + 1, levels, left_out, scratch);
    for (const auto& left : left_out) {
      std::vector<mgp::Cut> with_left = current;
      with_left.insert(with_left.end(), left.begin(), left.end());
      std::vector<std::vector<mgp::Cut>> right_out;
      std::vector<mgp::Cut> scratch_r;
      enumerate_rec(locs, {z, interval.hi}, first + k, last, level + 1, levels, right_out,
                    scratch_r);
      for (const auto& right : right_out) {
        std::vector<mgp::Cut> whole = with_left;
        whole.insert(whole.end(), right.begin(), right.end());
        out.push_back(std::move(whole));
      }
    }
    current.pop_back();
  }
}

inline std::vector<mgp::PartitionTree> enumerate_trees(const Eigen::VectorXd& locs,
                                                       mgp::Interval domain, int levels) {
  std::vector<std::vector<mgp::Cut>> cut_sets;
  std::vector<mgp::Cut> scratch;
  enumerate_rec(locs, domain, 0, static_cast<int>(locs.size()), 1, levels, cut_sets, scratch);
  std::vector<mgp::PartitionTree> trees;
  for (auto& cuts : cut_sets)
    trees.push_back(mgp::PartitionTree::from_cuts(domain, levels, std::move(cuts)));
  return trees;
}

/* Canonical identity of a tree's gap combination: which inter-observation
 * gap each cut occupies, level by level. */
inline std::string combo_key(const mgp::PartitionTree& tree, const Eigen::VectorXd& locs) {
  std::string key;
  for (const mgp::Cut& c : tree.cuts()) {
    int k = 0;
    while (k < locs.size() && locs[k] < c.value) ++k;
    key += std::to_string(c.level) + ":" + std::to_string(k) + ";";
  }
  return key;
}

/* Sum of log gap widths over the tree's cuts: integrating the uniform
 * within-gap placement density over each gap contributes this factor. */
inline double log_gap_volume(const mgp::PartitionTree& tree, const Eigen::VectorXd& locs) {
  double total = 0.0;
  for (const mgp::Cut& c : tree.cuts()) {
    int k = 0;
    while (k < locs.size() && locs[k] < c.value) ++k;
    total += std::log(locs[k] - locs[k - 1]);
  }
  return total;
}

inline double total_variation(const std::map<std::string, double>& p,
                              const std::map<std::string, double>& q) {
  double tv = 0.0;
  for (const auto& [key, mass] : p) {
    const auto it = q.find(key);
    tv += std::abs(mass - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [key, mass] : q)
    if (p.find(key) == p.end()) tv += mass;
  return 0.5 * tv;
}

/* Exact posterior over gap combinations via exhaustive enumeration. Only
 * sound for fixed-bandwidth instances, where the likelihood is flat within
 * each gap and the within-gap placement integrates to the gap volume. */
inline std::map<std::string, double> exact_combo_posterior(const Eigen::VectorXd& locs,
                                                           mgp::Interval domain, int levels,
                                                           const mgp::TrialSet& data,
                                                           const mgp::Hyperparams& theta,
                                                           const mgp::PartitionPrior& prior) {
  const auto trees = enumerate_trees(locs, domain, levels);
  std::vector<double> log_w;
  std::vector<std::string> keys;
  for (const auto& tree : trees) {
    log_w.push_back(mgp::multi_trial_log_marginal(data, tree, theta) +
                    mgp::log_prior(tree, prior) + log_gap_volume(tree, locs));
    keys.push_back(combo_key(tree, locs));
  }
  const double m = *std::max_element(log_w.begin(), log_w.end());
  double z = 0.0;
  for (double lw : log_w) z += std::exp(lw - m);
  std::map<std::string, double> posterior;
  for (std::size_t t = 0; t < trees.size(); ++t)
    posterior[keys[t]] += std::exp(log_w[t] - m) / z;
  return posterior;
}

inline std::map<std::string, double> combo_distribution(
    const std::vector<mgp::PosteriorSample>& samples, const Eigen::VectorXd& locs) {
  std::map<std::string, double> dist;
  double total = 0.0;
  for (const auto& s : samples) {
    dist[combo_key(s.tree, locs)] += s.weight;
    total += s.weight;
  }
  for (auto& [key, mass] : dist) mass /= total;
  return dist;
}

/* --- random instances ----------------------------------------------------- */

inline Eigen::VectorXd random_locations(int n, mgp::Interval domain, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(domain.lo, domain.hi);
  std::vector<double> pts(static_cast<std::size_t>(n));
  for (double& p : pts) p = unif(rng);
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i] - pts[i - 1] < 1e-6 * domain.length()) pts[i] = pts[i - 1] + 1e-6 * domain.length();
  return Eigen::Map<Eigen::VectorXd>(pts.data(), n);
}

/* Random valid tree built by direct recursion over gaps (independent of the
 * library's proposal machinery). */
inline mgp::PartitionTree random_tree(const Eigen::VectorXd& locs, mgp::Interval domain,
                                      int levels, std::mt19937_64& rng) {
  std::vector<mgp::Cut> cuts;
  struct Node {
    mgp::Interval interval;
    int first, last;
  };
  std::vector<Node> frontier = {{domain, 0, static_cast<int>(locs.size())}};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int level = 1; level < levels; ++level) {
    std::vector<Node> next;
    for (const Node& node : frontier) {
      const int m = node.last - node.first;
      if (m < 2) {
        next.push_back(node);
        continue;
      }
      std::uniform_int_distribution<int> pick(1, m - 1);
      const int k = pick(rng);
      const double lo = locs[node.first + k - 1];
      const double hi = locs[node.first + k];
      const double z = lo + (0.2 + 0.6 * unif(rng)) * (hi - lo);
      cuts.push_back({level, z});
      next.push_back({{node.interval.lo, z}, node.first, node.first + k});
      next.push_back({{z, node.interval.hi}, node.first + k, node.last});
    }
    frontier = std::move(next);
  }
  return mgp::PartitionTree::from_cuts(domain, levels, std::move(cuts));
}

inline mgp::Hyperparams random_hyperparams(int levels, std::mt19937_64& rng,
                                           bool allow_zero_scale = true) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  mgp::Hyperparams theta;
  for (int l = 0; l < levels; ++l) {
    double d = 0.1 + 1.9 * unif(rng);
    if (allow_zero_scale && unif(rng) < 0.1) d = 0.0;
    theta.d.push_back(d);
  }
  theta.kappa = 1.0 + 29.0 * unif(rng);
  theta.sigma2 = 0.05 + 0.95 * unif(rng);
  theta.bandwidth_mode = unif(rng) < 0.5 ? mgp::BandwidthMode::kFractal
                                         : mgp::BandwidthMode::kFixed;
  return theta;
}

inline Eigen::MatrixXd random_trials(int n, int j, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd y(n, j);
  for (Eigen::Index a = 0; a < y.size(); ++a) y.data()[a] = gauss(rng);
  return y;
}

}  // namespace oracle

#endif
