#ifndef MGP_NCUT_HPP
#define MGP_NCUT_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mgp/common.hpp"
#include "mgp/likelihood.hpp"
#include "mgp/partition.hpp"

namespace mgp {

/* Nonnegative symmetric affinity over observed locations; entry (u,v) is the
 * magnitude of the empirical correlation of y_u and y_v across trials. */
using CostMatrix = Eigen::MatrixXd;

/* Contiguous run of observed-location indices [first, last). */
struct Segment {
  int first = 0;
  int last = 0;
  int size() const { return last - first; }
};

inline constexpr double kNcutFloor = 1e-12;

/* |Pearson correlation| across trials per location pair. */
inline CostMatrix empirical_cost_matrix(const TrialSet& data) {
  if (data.num_trials() < 2) throw DataError("cost matrix needs at least 2 trials");
  Eigen::MatrixXd centered = data.trials.colwise() - data.trials.rowwise().mean();
  Eigen::MatrixXd cov = centered * centered.transpose();
  for (int u = 0; u < data.n(); ++u) {
    if (!(cov(u, u) > 0.0))
      throw DataError("degenerate column: zero sample variance at location index " +
                      std::to_string(u));
  }
  CostMatrix w(data.n(), data.n());
  for (int u = 0; u < data.n(); ++u)
    for (int v = 0; v < data.n(); ++v)
      w(u, v) = std::min(1.0, std::abs(cov(u, v)) / std::sqrt(cov(u, u) * cov(v, v)));
  return w;
}

/* Normalized-cut objective for splitting the segment's first k locations
 * from the rest; cut and assoc sums run over the segment's submatrix,
 * self-weights included. Infinite when either side has zero association. */
inline double ncut_value(const CostMatrix& w, Segment seg, int k) {
  const int m = seg.size();
  if (k < 1 || k > m - 1) throw DataError("split index outside segment interior");
  double cut = 0.0, assoc_a = 0.0, assoc_b = 0.0;
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      const double wab = w(seg.first + a, seg.first + b);
      if (a < k)
        assoc_a += wab;
      else
        assoc_b += wab;
      if (a < k && b >= k) cut += wab;
    }
  }
  if (!(assoc_a > 0.0) || !(assoc_b > 0.0)) return std::numeric_limits<double>::infinity();
  return cut * (1.0 / assoc_a + 1.0 / assoc_b);
}

/* Proposal weights over the m-1 interior splits, proportional to 1/ncut with
 * the objective floored at kNcutFloor so zero-cut boundaries keep a proper
 * (if dominant) probability. Splits at zero-width gaps or with zero
 * association on a side are excluded. */
inline std::vector<double> cut_split_probabilities(const CostMatrix& w,
                                                   const Eigen::VectorXd& locs, Segment seg) {
  const int m = seg.size();
  if (m < 2) throw DataError("uncuttable segment: fewer than 2 observed locations");

  std::vector<double> rowsum(static_cast<std::size_t>(m), 0.0);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) rowsum[static_cast<std::size_t>(a)] += w(seg.first + a, seg.first + b);
  double total = 0.0;
  for (double r : rowsum) total += r;

  std::vector<double> weight(static_cast<std::size_t>(m - 1), 0.0);
  double assoc_a = 0.0;
  double within_a = 0.0;  // sum of W over the leading k-by-k block
  double cross = 0.0;     // running sum of W(k, 0..k-1)
  double norm = 0.0;
  for (int k = 1; k <= m - 1; ++k) {
    cross = 0.0;
    for (int b = 0; b < k - 1; ++b) cross += w(seg.first + k - 1, seg.first + b);
    within_a += 2.0 * cross + w(seg.first + k - 1, seg.first + k - 1);
    assoc_a += rowsum[static_cast<std::size_t>(k - 1)];
    const double assoc_b = total - assoc_a;
    const double gap = locs[seg.first + k] - locs[seg.first + k - 1];
    if (!(gap > 0.0) || !(assoc_a > 0.0) || !(assoc_b > 0.0)) continue;
    const double cut = std::max(assoc_a - within_a, 0.0);
    const double ncut = cut * (1.0 / assoc_a + 1.0 / assoc_b);
    const double wk = 1.0 / std::max(ncut, kNcutFloor);
    weight[static_cast<std::size_t>(k - 1)] = wk;
    norm += wk;
  }
  if (!(norm > 0.0)) throw DataError("no valid split in segment");
  for (double& wk : weight) wk /= norm;
  return weight;
}

/* Samples one interior split; returns (k, log probability). */
inline std::pair<int, double> cut_proposal(const CostMatrix& w, const Eigen::VectorXd& locs,
                                           Segment seg, Rng& rng) {
  const auto probs = cut_split_probabilities(w, locs, seg);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  int pick = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) {
      pick = static_cast<int>(i) + 1;
      break;
    }
  }
  if (pick < 0) {  // u landed in the rounding slack at the top
    for (std::size_t i = probs.size(); i-- > 0;) {
      if (probs[i] > 0.0) {
        pick = static_cast<int>(i) + 1;
        break;
      }
    }
  }
  return {pick, std::log(probs[static_cast<std::size_t>(pick - 1)])};
}

/* Indices of ascending locations inside the interval; the domain's upper
 * endpoint belongs to the rightmost set. */
inline Segment locate_segment(const Eigen::VectorXd& locs, Interval interval, Interval domain) {
  const double* begin = locs.data();
  const double* end = locs.data() + locs.size();
  int first = static_cast<int>(std::lower_bound(begin, end, interval.lo) - begin);
  int last = interval.hi == domain.hi
                 ? static_cast<int>(locs.size())
                 : static_cast<int>(std::lower_bound(begin, end, interval.hi) - begin);
  return {first, last};
}

struct SubtreeProposal {
  std::vector<Cut> cuts;
  double log_density = 0.0;
};

namespace detail {

struct PendingNode {
  Interval interval;
  Segment seg;
};

/* Top-down, level-by-level, left-to-right cut proposal below one node.
 * Cuttable segments are always split; segments with fewer than 2 observed
 * locations are carried down unchanged (a null cut, contributing nothing to
 * the density). The continuous cut value is uniform over the chosen
 * inter-observation gap and its 1/gap density is part of log q. */
template <typename ChooseSplit>
SubtreeProposal walk_subtree(Interval interval, Segment seg, int from_level, int levels,
                             ChooseSplit&& choose) {
  SubtreeProposal out;
  std::vector<PendingNode> frontier = {{interval, seg}};
  for (int level = from_level; level < levels; ++level) {
    std::vector<PendingNode> next;
    for (const PendingNode& node : frontier) {
      if (node.seg.size() < 2) {
        next.push_back(node);
        continue;
      }
      const auto [k, z, log_q] = choose(node, level);
      out.log_density += log_q;
      out.cuts.push_back({level, z});
      next.push_back({{node.interval.lo, z}, {node.seg.first, node.seg.first + k}});
      next.push_back({{z, node.interval.hi}, {node.seg.first + k, node.seg.last}});
    }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace detail

/* Proposes the cut sequence for the subtree rooted at (interval, seg),
 * filling levels [from_level, levels). */
inline SubtreeProposal propose_subtree(const CostMatrix& w, const Eigen::VectorXd& locs,
                                       Interval interval, Segment seg, int from_level,
                                       int levels, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return detail::walk_subtree(
      interval, seg, from_level, levels,
      [&](const detail::PendingNode& node, int) -> std::tuple<int, double, double> {
        auto [k, log_p] = cut_proposal(w, locs, node.seg, rng);
        const double lo = locs[node.seg.first + k - 1];
        const double hi = locs[node.seg.first + k];
        double z = lo + unif(rng) * (hi - lo);
        if (z <= lo) z = std::nextafter(lo, hi);
        if (z >= hi) z = std::nextafter(hi, lo);
        return {k, z, log_p - std::log(hi - lo)};
      });
}

/* Density of an existing subtree's cuts under the proposal; throws when a
 * cut does not sit strictly inside an inter-observation gap of its parent
 * (such trees have zero proposal density). */
inline double subtree_log_density(const PartitionTree& tree, const CostMatrix& w,
                                  const Eigen::VectorXd& locs, NodeRef node) {
  const Interval interval = tree.node_interval(node);
  const Segment seg = locate_segment(locs, interval, tree.domain());
  double total = 0.0;
  std::vector<detail::PendingNode> frontier = {{interval, seg}};
  for (int level = node.level + 1; level < tree.levels(); ++level) {
    std::vector<detail::PendingNode> next;
    for (const detail::PendingNode& nd : frontier) {
      std::optional<double> z;
      for (const Cut& c : tree.cuts())
        if (c.level == level && c.value > nd.interval.lo && c.value < nd.interval.hi)
          z = c.value;
      if (nd.seg.size() < 2) {
        if (z) throw DataError("zero proposal density: cut in an uncuttable segment");
        next.push_back(nd);
        continue;
      }
      if (!z) throw DataError("zero proposal density: cuttable segment left uncut");
      int k = 0;
      while (nd.seg.first + k < nd.seg.last && locs[nd.seg.first + k] < *z) ++k;
      if (k < 1 || k > nd.seg.size() - 1)
        throw DataError("zero proposal density: cut outside any inter-observation gap");
      const auto probs = cut_split_probabilities(w, locs, nd.seg);
      const double p = probs[static_cast<std::size_t>(k - 1)];
      if (!(p > 0.0))
        throw DataError("zero proposal density: cut at an excluded split");
      const double gap = locs[nd.seg.first + k] - locs[nd.seg.first + k - 1];
      total += std::log(p) - std::log(gap);
      next.push_back({{nd.interval.lo, *z}, {nd.seg.first, nd.seg.first + k}});
      next.push_back({{*z, nd.interval.hi}, {nd.seg.first + k, nd.seg.last}});
    }
    frontier = std::move(next);
  }
  return total;
}

struct TreeProposal {
  PartitionTree tree;
  double log_density = 0.0;
};

/* Draws a full L-level tree from the normalized-cut proposal. */
inline TreeProposal sample_tree_proposal(const CostMatrix& w, int levels,
                                         const Eigen::VectorXd& locs, Interval domain,
                                         Rng& rng) {
  Segment all{0, static_cast<int>(locs.size())};
  SubtreeProposal sub = propose_subtree(w, locs, domain, all, 1, levels, rng);
  return {PartitionTree::from_cuts(domain, levels, std::move(sub.cuts)), sub.log_density};
}

/* q(A | W): product of the conditional cut probabilities and placement
 * densities that sample_tree_proposal would have used. */
inline double proposal_log_density(const PartitionTree& tree, const CostMatrix& w,
                                   const Eigen::VectorXd& locs) {
  return subtree_log_density(tree, w, locs, {0, 0});
}

/* Deterministic recursive argmin-ncut segmentation; ties break toward the
 * smallest split index, cut values land mid-gap. */
inline PartitionTree greedy_ncut_tree(const CostMatrix& w, int levels,
                                      const Eigen::VectorXd& locs, Interval domain) {
  Segment all{0, static_cast<int>(locs.size())};
  SubtreeProposal sub = detail::walk_subtree(
      domain, all, 1, levels,
      [&](const detail::PendingNode& node, int) -> std::tuple<int, double, double> {
        int best = -1;
        double best_val = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= node.seg.size() - 1; ++k) {
          const double gap = locs[node.seg.first + k] - locs[node.seg.first + k - 1];
          if (!(gap > 0.0)) continue;
          const double val = ncut_value(w, node.seg, k);
          if (val < best_val) {
            best_val = val;
            best = k;
          }
        }
        if (best < 0) throw DataError("no valid split in segment");
        const double lo = locs[node.seg.first + best - 1];
        const double hi = locs[node.seg.first + best];
        return {best, 0.5 * (lo + hi), 0.0};
      });
  return PartitionTree::from_cuts(domain, levels, std::move(sub.cuts));
}

}  // namespace mgp

#endif
