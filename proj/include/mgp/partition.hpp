#ifndef MGP_PARTITION_HPP
#define MGP_PARTITION_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mgp/common.hpp"

namespace mgp {

/* One partition point. Level l in 1..L-1 is the level whose sets the cut
 * creates; the cut value is a real location strictly inside its parent set. */
struct Cut {
  int level = 0;
  double value = 0.0;

  friend bool operator==(const Cut& a, const Cut& b) {
    return a.level == b.level && a.value == b.value;
  }
};

struct NodeRef {
  int level = 0;  // 0..L-2 for internal nodes
  int index = 0;  // position within level_sets(level)
};

struct ValidationReport {
  bool ok = true;
  std::string violation;  // names the first violated invariant
};

/* Nested binary partition of a 1-D interval into L levels. Level 0 is the
 * whole domain; each set at level l-1 is either split in two by a cut at
 * level l or carried down unchanged (a set with too few observations to cut
 * is copied through the remaining levels). Immutable once built. */
class PartitionTree {
public:
  /* Tree with no cuts: every level is the whole domain. */
  PartitionTree(Interval domain, int levels) : domain_(domain), levels_(levels) {
    if (levels < 1) throw DataError("partition depth must be at least 1");
    if (!(domain.length() > 0.0)) throw DataError("empty domain");
    sets_.assign(static_cast<std::size_t>(levels), {domain});
  }

  static ValidationReport validate(Interval domain, int levels, std::vector<Cut> cuts);

  static PartitionTree from_cuts(Interval domain, int levels, std::vector<Cut> cuts) {
    auto report = validate(domain, levels, cuts);
    if (!report.ok) throw DataError("invalid partition tree: " + report.violation);
    PartitionTree tree(domain, levels);
    tree.apply_cuts(std::move(cuts));
    return tree;
  }

  int levels() const { return levels_; }
  const Interval& domain() const { return domain_; }

  const std::vector<Interval>& level_sets(int level) const {
    check_level(level);
    return sets_[static_cast<std::size_t>(level)];
  }

  /* Cuts sorted by (level, value). */
  const std::vector<Cut>& cuts() const { return cuts_; }

  const Interval& node_interval(NodeRef node) const {
    return level_sets(node.level).at(static_cast<std::size_t>(node.index));
  }

  /* Index r of the level-l set containing x; half-open convention, the
   * rightmost set also owns the domain's upper endpoint. */
  int set_index(int level, double x) const {
    check_level(level);
    if (!domain_.contains_closed(x)) throw DataError("location outside domain");
    const auto& sets = sets_[static_cast<std::size_t>(level)];
    if (x >= sets.back().lo) return static_cast<int>(sets.size()) - 1;
    auto it = std::upper_bound(sets.begin(), sets.end(), x,
                               [](double v, const Interval& s) { return v < s.lo; });
    return static_cast<int>(it - sets.begin()) - 1;
  }

  /* Largest level whose partition keeps x and x' in the same set. */
  int deepest_shared_level(double x, double xp) const {
    int shared = 0;
    for (int l = levels_ - 1; l >= 1; --l) {
      if (set_index(l, x) == set_index(l, xp)) {
        shared = l;
        break;
      }
    }
    if (shared == 0) {
      set_index(0, x);  // domain check on both arguments even when split at level 1
      set_index(0, xp);
    }
    return shared;
  }

  /* Internal nodes (sets that own a subtree), root first, level-major. */
  std::vector<NodeRef> internal_nodes() const {
    std::vector<NodeRef> nodes;
    for (int l = 0; l + 1 < levels_; ++l) {
      const int count = static_cast<int>(sets_[static_cast<std::size_t>(l)].size());
      for (int i = 0; i < count; ++i) nodes.push_back({l, i});
    }
    if (nodes.empty()) nodes.push_back({0, 0});  // L=1: root only
    return nodes;
  }

  /* Cuts strictly below the given node. */
  std::vector<Cut> cuts_below(NodeRef node) const {
    const Interval seg = node_interval(node);
    std::vector<Cut> below;
    for (const Cut& c : cuts_) {
      if (c.level > node.level && c.value > seg.lo && c.value < seg.hi) below.push_back(c);
    }
    return below;
  }

  /* New tree with the subtree below `node` replaced by `subtree_cuts`. */
  PartitionTree replace_subtree(NodeRef node, const std::vector<Cut>& subtree_cuts) const {
    const Interval seg = node_interval(node);
    std::vector<Cut> kept;
    for (const Cut& c : cuts_) {
      const bool below = c.level > node.level && c.value > seg.lo && c.value < seg.hi;
      if (!below) kept.push_back(c);
    }
    kept.insert(kept.end(), subtree_cuts.begin(), subtree_cuts.end());
    return from_cuts(domain_, levels_, std::move(kept));
  }

  friend bool operator==(const PartitionTree& a, const PartitionTree& b) {
    return a.domain_ == b.domain_ && a.levels_ == b.levels_ && a.cuts_ == b.cuts_;
  }

private:
  void check_level(int level) const {
    if (level < 0 || level >= levels_) throw DataError("level out of range");
  }

  /* Assumes cuts already validated. */
  void apply_cuts(std::vector<Cut> cuts) {
    std::sort(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) {
      return a.level != b.level ? a.level < b.level : a.value < b.value;
    });
    for (int l = 1; l < levels_; ++l) {
      std::vector<Interval> next;
      for (const Interval& parent : sets_[static_cast<std::size_t>(l - 1)]) {
        std::optional<double> z;
        for (const Cut& c : cuts) {
          if (c.level == l && c.value > parent.lo && c.value < parent.hi) z = c.value;
        }
        if (z) {
          next.push_back({parent.lo, *z});
          next.push_back({*z, parent.hi});
        } else {
          next.push_back(parent);
        }
      }
      sets_[static_cast<std::size_t>(l)] = std::move(next);
    }
    cuts_ = std::move(cuts);
  }

  Interval domain_;
  int levels_;
  std::vector<std::vector<Interval>> sets_;  // sets_[l] tiles the domain, sorted
  std::vector<Cut> cuts_;                    // sorted by (level, value)
};

inline ValidationReport PartitionTree::validate(Interval domain, int levels,
                                                std::vector<Cut> cuts) {
  if (levels < 1) return {false, "depth must be at least 1"};
  if (!(domain.length() > 0.0)) return {false, "empty domain"};
  std::sort(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) {
    return a.level != b.level ? a.level < b.level : a.value < b.value;
  });
  for (const Cut& c : cuts) {
    if (c.level < 1 || c.level > levels - 1) return {false, "cut level out of range"};
    if (!std::isfinite(c.value)) return {false, "cut value not finite"};
  }

  std::vector<Interval> current = {domain};
  for (int l = 1; l < levels; ++l) {
    std::vector<Interval> next;
    std::vector<int> claimed(current.size(), 0);
    for (const Cut& c : cuts) {
      if (c.level != l) continue;
      bool inside = false;
      for (std::size_t i = 0; i < current.size(); ++i) {
        if (c.value > current[i].lo && c.value < current[i].hi) {
          ++claimed[i];
          inside = true;
          break;
        }
      }
      if (!inside) return {false, "cut outside parent set"};
    }
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (claimed[i] > 1) return {false, "multiple cuts in one parent set"};
    }
    for (const Interval& parent : current) {
      std::optional<double> z;
      for (const Cut& c : cuts) {
        if (c.level == l && c.value > parent.lo && c.value < parent.hi) z = c.value;
      }
      if (z) {
        next.push_back({parent.lo, *z});
        next.push_back({*z, parent.hi});
      } else {
        next.push_back(parent);
      }
    }
    current = std::move(next);
  }
  return {};
}

/* Prior on partition points: a piecewise-constant density over the domain.
 * Covers both the uniform prior and kernel-smoothed elicited priors. */
class PartitionPrior {
public:
  static PartitionPrior uniform(Interval domain) {
    return PartitionPrior({domain.lo, domain.hi}, {1.0 / domain.length()});
  }

  /* Piecewise density on consecutive bins [edges[i], edges[i+1]); must be
   * nonnegative and integrate to 1 within 1e-9. */
  PartitionPrior(std::vector<double> edges, std::vector<double> density)
      : edges_(std::move(edges)), dens_(std::move(density)) {
    if (edges_.size() < 2 || dens_.size() + 1 != edges_.size())
      throw DataError("prior grid needs m+1 edges for m density values");
    double integral = 0.0;
    cdf_.assign(edges_.size(), 0.0);
    for (std::size_t i = 0; i < dens_.size(); ++i) {
      if (!(edges_[i + 1] > edges_[i])) throw DataError("prior edges must be increasing");
      if (dens_[i] < 0.0) throw DataError("prior density must be nonnegative");
      integral += dens_[i] * (edges_[i + 1] - edges_[i]);
      cdf_[i + 1] = integral;
    }
    if (std::abs(integral - 1.0) > 1e-9)
      throw DataError("prior density must integrate to 1 within 1e-9");
  }

  /* Normalizes bin weights into a density. */
  static PartitionPrior from_weights(std::vector<double> edges, std::vector<double> weights) {
    double mass = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size() && i < weights.size(); ++i)
      mass += weights[i] * (edges[i + 1] - edges[i]);
    if (!(mass > 0.0)) throw DataError("prior weights must carry positive mass");
    for (double& w : weights) w /= mass;
    return PartitionPrior(std::move(edges), std::move(weights));
  }

  Interval domain() const { return {edges_.front(), edges_.back()}; }

  double density(double x) const {
    if (x < edges_.front() || x > edges_.back()) return 0.0;
    auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    std::size_t bin = static_cast<std::size_t>(it - edges_.begin());
    bin = bin == 0 ? 0 : bin - 1;
    if (bin >= dens_.size()) bin = dens_.size() - 1;  // x at the right edge
    return dens_[bin];
  }

  double log_density(double x) const {
    const double f = density(x);
    return f > 0.0 ? std::log(f) : kNegInf;
  }

  /* Inverse-CDF draw. */
  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t bin = static_cast<std::size_t>(it - cdf_.begin());
    bin = bin == 0 ? 0 : bin - 1;
    if (bin >= dens_.size()) bin = dens_.size() - 1;
    if (dens_[bin] <= 0.0) {
      for (bin = 0; bin + 1 < dens_.size() && (dens_[bin] <= 0.0 || cdf_[bin + 1] < u); ++bin) {
      }
    }
    const double within = (u - cdf_[bin]) / std::max(dens_[bin], 1e-300);
    return std::min(edges_[bin] + within, edges_[bin + 1]);
  }

private:
  std::vector<double> edges_;
  std::vector<double> dens_;
  std::vector<double> cdf_;
};

/* log p(A) = sum_i log f(z_i); level assignment does not enter. Returns
 * -inf when any cut sits where the prior density vanishes. */
inline double log_prior(const PartitionTree& tree, const PartitionPrior& prior) {
  double total = 0.0;
  for (const Cut& c : tree.cuts()) total += prior.log_density(c.value);
  return total;
}

}  // namespace mgp

#endif
