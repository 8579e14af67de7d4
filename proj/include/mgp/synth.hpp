#ifndef MGP_SYNTH_HPP
#define MGP_SYNTH_HPP

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "mgp/common.hpp"
#include "mgp/kernels.hpp"
#include "mgp/likelihood.hpp"
#include "mgp/linalg.hpp"
#include "mgp/ncut.hpp"
#include "mgp/partition.hpp"

namespace mgp {

inline Eigen::VectorXd even_grid(int n, Interval domain) {
  Eigen::VectorXd locs(n);
  const double step = domain.length() / static_cast<double>(n);
  for (int i = 0; i < n; ++i) locs[i] = domain.lo + step * static_cast<double>(i);
  return locs;
}

struct SynthSpec {
  int n;
  int num_trials;
  int levels;
  Interval domain;
  Hyperparams theta;
  PartitionPrior prior;
  std::uint64_t seed = 0;

  SynthSpec(int n_, int num_trials_, int levels_, Interval domain_, Hyperparams theta_,
            PartitionPrior prior_, std::uint64_t seed_ = 0)
      : n(n_), num_trials(num_trials_), levels(levels_), domain(domain_),
        theta(std::move(theta_)), prior(std::move(prior_)), seed(seed_) {
    if (n < 2) throw ConfigError("need n >= 2 locations");
    if (num_trials < 1) throw ConfigError("need at least 1 trial");
    if (levels < 1) throw ConfigError("need at least 1 level");
    theta.check(levels);
  }
};

/* True when every cut of the tree separates at least one observed location
 * on each side within its parent segment (the support of the ncut proposal). */
inline bool cuts_separate_observations(const PartitionTree& tree, const Eigen::VectorXd& locs) {
  for (int level = 0; level + 1 < tree.levels(); ++level) {
    const auto& parents = tree.level_sets(level);
    for (const Interval& parent : parents) {
      std::optional<double> z;
      for (const Cut& c : tree.cuts())
        if (c.level == level + 1 && c.value > parent.lo && c.value < parent.hi) z = c.value;
      if (!z) continue;
      const Segment seg = locate_segment(locs, parent, tree.domain());
      int k = 0;
      while (seg.first + k < seg.last && locs[seg.first + k] < *z) ++k;
      if (k < 1 || k > seg.size() - 1) return false;
    }
  }
  return true;
}

namespace detail {

/* Median-first recursion assigning the sorted draws to tree levels. */
inline void assign_balanced(const std::vector<double>& sorted, int lo, int hi, int level,
                            std::vector<Cut>& out) {
  if (lo >= hi) return;
  const int mid = lo + (hi - lo) / 2;
  out.push_back({level, sorted[static_cast<std::size_t>(mid)]});
  assign_balanced(sorted, lo, mid, level + 1, out);
  assign_balanced(sorted, mid + 1, hi, level + 1, out);
}

}  // namespace detail

/* Generative tree draw: 2^{L-1}-1 i.i.d. partition points from F, sorted and
 * deterministically shaped into a balanced binary tree. Draws whose cuts fail
 * to separate observations anywhere are rejected and redrawn. */
inline PartitionTree sample_tree(const PartitionPrior& prior, int levels,
                                 const Eigen::VectorXd& locs, Interval domain, Rng& rng) {
  if (levels < 1) throw ConfigError("need at least 1 level");
  const int num_cuts = (1 << (levels - 1)) - 1;
  if (num_cuts == 0) return PartitionTree(domain, levels);

  constexpr int kBudget = 100000;
  for (int attempt = 0; attempt < kBudget; ++attempt) {
    std::vector<double> draws(static_cast<std::size_t>(num_cuts));
    for (double& z : draws) z = prior.sample(rng);
    std::sort(draws.begin(), draws.end());
    std::vector<Cut> cuts;
    detail::assign_balanced(draws, 0, num_cuts, 1, cuts);
    if (!PartitionTree::validate(domain, levels, cuts).ok) continue;
    PartitionTree tree = PartitionTree::from_cuts(domain, levels, std::move(cuts));
    if (cuts_separate_observations(tree, locs)) return tree;
  }
  throw DataError("infeasible spec: no tree with observation-separating cuts in 1e5 draws");
}

struct SynthTruth {
  PartitionTree tree;
  Eigen::VectorXd f0;                              // shared parent at the locations
  std::vector<Eigen::MatrixXd> trial_level_funcs;  // f^l per trial, l = 1..L-1
};

struct TrialDraws {
  Eigen::MatrixXd y;  // n x J
  Eigen::VectorXd f0;
  std::vector<Eigen::MatrixXd> level_funcs;
};

/* Draws J trials from the hierarchy on a given tree. Level deviations are
 * sampled blockwise with independent Cholesky factors per partition set,
 * which matches sampling from the block-diagonal K_l exactly. With
 * share_parent = false every trial gets its own f^0, giving i.i.d. draws
 * from the full marginal. */
inline TrialDraws sample_trials(const PartitionTree& tree, const Hyperparams& theta,
                                const Eigen::VectorXd& locs, int num_trials, Rng& rng,
                                bool share_parent = true) {
  theta.check(tree.levels());
  const int n = static_cast<int>(locs.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto draw_block = [&](const Eigen::MatrixXd& chol_l) {
    Eigen::VectorXd z(chol_l.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = gauss(rng);
    return (chol_l * z).eval();
  };

  Eigen::MatrixXd parent_chol;
  if (theta.d.front() > 0.0) {
    const double kappa0 =
        effective_bandwidth(theta.kappa, tree.domain(), theta.bandwidth_mode);
    parent_chol = cholesky_with_jitter(se_block(locs, theta.d.front(), kappa0)).llt.matrixL();
  }
  const auto draw_parent = [&] {
    return parent_chol.size() == 0 ? Eigen::VectorXd::Zero(n).eval()
                                   : draw_block(parent_chol);
  };

  // Per-level blockwise Cholesky factors, shared across trials.
  struct LevelBlocks {
    std::vector<std::vector<int>> groups;
    std::vector<Eigen::MatrixXd> chol_l;  // empty for empty groups or d^l = 0
  };
  std::vector<LevelBlocks> blocks;
  for (int l = 1; l < tree.levels(); ++l) {
    LevelBlocks lb;
    lb.groups = group_by_set(locs, tree, l);
    const double d = theta.d[static_cast<std::size_t>(l)];
    const auto& sets = tree.level_sets(l);
    for (std::size_t g = 0; g < lb.groups.size(); ++g) {
      const auto& idx = lb.groups[g];
      if (idx.empty() || d == 0.0) {
        lb.chol_l.emplace_back();
        continue;
      }
      Eigen::VectorXd pts(idx.size());
      for (std::size_t a = 0; a < idx.size(); ++a)
        pts[static_cast<Eigen::Index>(a)] = locs[idx[a]];
      const double kappa_eff =
          effective_bandwidth(theta.kappa, sets[g], theta.bandwidth_mode);
      lb.chol_l.push_back(cholesky_with_jitter(se_block(pts, d, kappa_eff)).llt.matrixL());
    }
    blocks.push_back(std::move(lb));
  }

  TrialDraws out;
  out.y.resize(n, num_trials);
  out.f0 = draw_parent();
  out.level_funcs.assign(static_cast<std::size_t>(tree.levels() - 1),
                         Eigen::MatrixXd::Zero(n, num_trials));
  const double noise_sd = std::sqrt(theta.sigma2);
  for (int j = 0; j < num_trials; ++j) {
    if (!share_parent && j > 0) out.f0 = draw_parent();
    Eigen::VectorXd f = out.f0;
    for (int l = 1; l < tree.levels(); ++l) {
      const LevelBlocks& lb = blocks[static_cast<std::size_t>(l - 1)];
      for (std::size_t g = 0; g < lb.groups.size(); ++g) {
        if (lb.chol_l[g].size() == 0) continue;
        const Eigen::VectorXd dev = draw_block(lb.chol_l[g]);
        for (std::size_t a = 0; a < lb.groups[g].size(); ++a)
          f[lb.groups[g][a]] += dev[static_cast<Eigen::Index>(a)];
      }
      out.level_funcs[static_cast<std::size_t>(l - 1)].col(j) = f;
    }
    for (int i = 0; i < n; ++i) out.y(i, j) = f[i] + noise_sd * gauss(rng);
  }
  return out;
}

/* Forward simulation of the full generative model: tree from the prior, one
 * shared parent, per-trial level deviations plus nugget noise. All latent
 * truth is returned for diagnostics. */
inline std::pair<TrialSet, SynthTruth> sample_dataset(const SynthSpec& spec) {
  Rng rng(spec.seed);
  const Eigen::VectorXd locs = even_grid(spec.n, spec.domain);
  PartitionTree tree = sample_tree(spec.prior, spec.levels, locs, spec.domain, rng);
  TrialDraws draws = sample_trials(tree, spec.theta, locs, spec.num_trials, rng, true);
  TrialSet data(locs, std::move(draws.y));
  SynthTruth truth{std::move(tree), std::move(draws.f0), std::move(draws.level_funcs)};
  return {std::move(data), std::move(truth)};
}

/* Pairwise closed-form correlation matrix (diagonal 1). */
inline Eigen::MatrixXd true_correlation_matrix(const PartitionTree& tree,
                                               const Hyperparams& theta,
                                               const Eigen::VectorXd& locs) {
  const auto n = locs.size();
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      corr(i, j) = mgp_correlation(locs[i], locs[j], tree, theta);
      corr(j, i) = corr(i, j);
    }
  return corr;
}

}  // namespace mgp

#endif
