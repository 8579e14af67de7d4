#ifndef MGP_MCMC_HPP
#define MGP_MCMC_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <thread>
#include <utility>
#include <vector>

#include "mgp/common.hpp"
#include "mgp/kernels.hpp"
#include "mgp/likelihood.hpp"
#include "mgp/ncut.hpp"
#include "mgp/partition.hpp"

namespace mgp {

struct SamplerConfig {
  int iterations = 3000;
  int burn_in = 1000;
  int thinning = 10;
  int num_chains = 1;
  std::uint64_t seed = 0;
  /* Fraction of iterations that use pure global (root) proposals before the
   * schedule tempers to uniform node selection. */
  double global_phase_fraction = 1.0 / 3.0;
  /* Extra root mass mixed into the uniform node distribution after the
   * switch; 0 means plain uniform over internal nodes. */
  double final_root_weight = 0.0;
  int threads = 1;

  void check() const {
    if (iterations < 1) throw ConfigError("iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations) throw ConfigError("burn-in must be < iterations");
    if (thinning < 1) throw ConfigError("thinning must be >= 1");
    if (num_chains < 1) throw ConfigError("need at least 1 chain");
    if (global_phase_fraction < 0.0 || global_phase_fraction > 1.0)
      throw ConfigError("global phase fraction must lie in [0, 1]");
    if (final_root_weight < 0.0 || final_root_weight > 1.0)
      throw ConfigError("final root weight must lie in [0, 1]");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }

  int switch_iteration() const {
    return static_cast<int>(global_phase_fraction * static_cast<double>(iterations));
  }
};

struct PosteriorSample {
  PartitionTree tree;
  std::shared_ptr<const Eigen::MatrixXd> sigma;  // cached trial-conditional covariance
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  double log_proposal = 0.0;
  double weight = 1.0;  // self-normalized importance weight; 1 for MCMC draws
};

struct NodeDistribution {
  bool root_only = true;
  double root_weight = 0.0;
};

/* Two-phase schedule: all mass on the root early, then tempered to (near-)
 * uniform proposals over the tree's internal nodes. */
inline NodeDistribution node_schedule(int iteration, const SamplerConfig& config) {
  if (iteration < config.switch_iteration()) return {true, 1.0};
  return {false, config.final_root_weight};
}

inline NodeRef select_node(const NodeDistribution& dist, const PartitionTree& tree, Rng& rng) {
  if (dist.root_only) return {0, 0};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (dist.root_weight > 0.0 && unif(rng) < dist.root_weight) return {0, 0};
  const auto nodes = tree.internal_nodes();
  std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
  return nodes[pick(rng)];
}

inline double node_selection_log_prob(const NodeDistribution& dist, const PartitionTree& tree,
                                      NodeRef node) {
  const bool is_root = node.level == 0;
  if (dist.root_only) return is_root ? 0.0 : kNegInf;
  const double n = static_cast<double>(tree.internal_nodes().size());
  const double p = (is_root ? dist.root_weight : 0.0) + (1.0 - dist.root_weight) / n;
  return std::log(p);
}

struct ChainState {
  PartitionTree tree;
  std::shared_ptr<const Eigen::MatrixXd> sigma;
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  double log_proposal = 0.0;
};

/* Shared immutable context for posterior sampling over trees: data, cost
 * matrix, prior, hyperparameters, and the precomputed likelihood evaluator.
 * All step functions are const; chains touch only their own state. */
class TreeSampler {
public:
  TreeSampler(const TrialSet& data, CostMatrix w, PartitionPrior prior, Hyperparams theta,
              int levels, Interval domain)
      : locs_(data.locations), w_(std::move(w)), prior_(std::move(prior)),
        theta_(std::move(theta)), levels_(levels), domain_(domain),
        eval_(data, domain, theta_) {
    theta_.check(levels_);
  }

  const Hyperparams& theta() const { return theta_; }
  const CostMatrix& cost_matrix() const { return w_; }
  const PartitionPrior& prior() const { return prior_; }
  int levels() const { return levels_; }
  Interval domain() const { return domain_; }
  const MarginalLikelihoodEvaluator& evaluator() const { return eval_; }

  double log_likelihood(const Eigen::MatrixXd& sigma) const { return eval_.log_marginal(sigma); }

  ChainState make_state(PartitionTree tree, double log_q) const {
    ChainState state{std::move(tree), nullptr, 0.0, 0.0, log_q};
    state.sigma = std::make_shared<const Eigen::MatrixXd>(
        trial_conditional_cov(locs_, state.tree, theta_));
    state.log_likelihood = eval_.log_marginal(*state.sigma);
    state.log_prior = log_prior(state.tree, prior_);
    return state;
  }

  ChainState init_state(Rng& rng) const {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      TreeProposal prop = sample_tree_proposal(w_, levels_, locs_, domain_, rng);
      ChainState state = make_state(std::move(prop.tree), prop.log_density);
      if (state.log_prior > kNegInf) return state;
    }
    throw NumericalError("could not initialize chain inside the prior's support");
  }

  /* Independence-chain move: propose a whole tree from q, accept with
   * min{1, p(Y|A')p(A')q(A) / p(Y|A)p(A)q(A')}. */
  bool global_step(ChainState& state, Rng& rng) const {
    TreeProposal prop = sample_tree_proposal(w_, levels_, locs_, domain_, rng);
    ChainState proposed = make_state(std::move(prop.tree), prop.log_density);
    const double log_r = proposed.log_likelihood + proposed.log_prior + state.log_proposal -
                         state.log_likelihood - state.log_prior - proposed.log_proposal;
    if (accept(log_r, rng)) {
      state = std::move(proposed);
      return true;
    }
    return false;
  }

  bool local_step(ChainState& state, const NodeDistribution& dist, Rng& rng) const {
    const NodeRef node = select_node(dist, state.tree, rng);
    return local_step_at(state, node, dist, rng);
  }

  /* Re-proposes the cut sequence below one node; the covariance update
   * subtracts the descendant kernel blocks and adds the re-proposed ones.
   * The ratio keeps only the factors the move touched, plus the node
   * selection probabilities (the internal-node count can change when
   * single-observation segments appear or vanish). */
  bool local_step_at(ChainState& state, NodeRef node, const NodeDistribution& dist,
                     Rng& rng) const {
    const Interval interval = state.tree.node_interval(node);
    const Segment seg = locate_segment(locs_, interval, domain_);

    const double log_q_sub_old = subtree_log_density(state.tree, w_, locs_, node);
    SubtreeProposal sub = propose_subtree(w_, locs_, interval, seg, node.level + 1, levels_, rng);
    PartitionTree proposed_tree = state.tree.replace_subtree(node, sub.cuts);

    Eigen::MatrixXd sigma = *state.sigma;
    for (int l = std::max(1, node.level + 1); l < levels_; ++l) {
      add_level_blocks(sigma, state.tree, l, interval, -1.0);
      add_level_blocks(sigma, proposed_tree, l, interval, +1.0);
    }

    const double log_lik = eval_.log_marginal(sigma);
    const double log_pri = log_prior(proposed_tree, prior_);
    const double sel_fwd = node_selection_log_prob(dist, state.tree, node);
    const double sel_rev = node_selection_log_prob(dist, proposed_tree, node);
    const double log_r = log_lik + log_pri + log_q_sub_old + sel_rev - state.log_likelihood -
                         state.log_prior - sub.log_density - sel_fwd;
    if (accept(log_r, rng)) {
      state.tree = std::move(proposed_tree);
      state.sigma = std::make_shared<const Eigen::MatrixXd>(std::move(sigma));
      state.log_likelihood = log_lik;
      state.log_prior = log_pri;
      state.log_proposal = proposal_log_density(state.tree, w_, locs_);
      return true;
    }
    return false;
  }

  const Eigen::VectorXd& locations() const { return locs_; }

private:
  static bool accept(double log_r, Rng& rng) {
    if (log_r >= 0.0) return true;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return std::log(unif(rng)) < log_r;
  }

  /* Adds sign * K_l blocks for the level-l sets inside `within`. Blocks are
   * rebuilt by the same deterministic kernel fill that produced them, so a
   * subtract exactly cancels an earlier add. */
  void add_level_blocks(Eigen::MatrixXd& sigma, const PartitionTree& tree, int level,
                        Interval within, double sign) const {
    const double d = theta_.d[static_cast<std::size_t>(level)];
    if (d == 0.0) return;
    for (const Interval& set : tree.level_sets(level)) {
      if (set.lo < within.lo || set.hi > within.hi) continue;
      const Segment seg = locate_segment(locs_, set, domain_);
      if (seg.size() == 0) continue;
      const double kappa_eff = effective_bandwidth(theta_.kappa, set, theta_.bandwidth_mode);
      const Eigen::VectorXd pts = locs_.segment(seg.first, seg.size());
      sigma.block(seg.first, seg.first, seg.size(), seg.size()) +=
          sign * se_block(pts, d, kappa_eff);
    }
  }

  Eigen::VectorXd locs_;
  CostMatrix w_;
  PartitionPrior prior_;
  Hyperparams theta_;
  int levels_;
  Interval domain_;
  MarginalLikelihoodEvaluator eval_;
};

struct ImportanceResult {
  std::vector<PosteriorSample> samples;
  double ess = 0.0;
};

/* Draws M trees from the ncut proposal and self-normalizes the weights
 * p(Y|A)p(A)/q(A). */
inline ImportanceResult importance_sample(const TrialSet& data, const CostMatrix& w,
                                          const PartitionPrior& prior, const Hyperparams& theta,
                                          int levels, int num_draws, Rng& rng) {
  if (num_draws < 1) throw ConfigError("need at least 1 importance draw");
  const Interval domain = prior.domain();
  TreeSampler sampler(data, w, prior, theta, levels, domain);
  ImportanceResult out;
  std::vector<double> log_w(static_cast<std::size_t>(num_draws));
  for (int m = 0; m < num_draws; ++m) {
    ChainState state = [&] {
      TreeProposal prop = sample_tree_proposal(w, levels, data.locations, domain, rng);
      return sampler.make_state(std::move(prop.tree), prop.log_density);
    }();
    log_w[static_cast<std::size_t>(m)] =
        state.log_likelihood + state.log_prior - state.log_proposal;
    out.samples.push_back({std::move(state.tree), std::move(state.sigma),
                           state.log_likelihood, state.log_prior, state.log_proposal, 0.0});
  }
  const double max_lw = *std::max_element(log_w.begin(), log_w.end());
  if (max_lw == kNegInf)
    throw NumericalError("degenerate posterior: all importance weights vanished");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t m = 0; m < log_w.size(); ++m) {
    const double wm = std::exp(log_w[m] - max_lw);
    out.samples[m].weight = wm;
    sum += wm;
  }
  for (auto& s : out.samples) {
    s.weight /= sum;
    sum_sq += s.weight * s.weight;
  }
  out.ess = 1.0 / sum_sq;
  return out;
}

struct ChainResult {
  std::vector<PosteriorSample> samples;
  std::vector<double> trace;  // log-likelihood at every iteration
  int accepted = 0;
};

/* Independent chains with per-chain rng streams at fixed seed offsets;
 * reruns with the same config reproduce traces exactly. */
inline std::vector<ChainResult> run_chains(const TrialSet& data, const CostMatrix& w,
                                           const PartitionPrior& prior, const Hyperparams& theta,
                                           int levels, const SamplerConfig& config) {
  config.check();
  const Interval domain = prior.domain();
  TreeSampler sampler(data, w, prior, theta, levels, domain);
  std::vector<ChainResult> results(static_cast<std::size_t>(config.num_chains));

  const auto run_one = [&](int chain) {
    Rng rng(config.seed + static_cast<std::uint64_t>(chain));
    ChainResult& res = results[static_cast<std::size_t>(chain)];
    ChainState state = sampler.init_state(rng);
    for (int it = 0; it < config.iterations; ++it) {
      const NodeDistribution dist = node_schedule(it, config);
      const bool accepted =
          dist.root_only ? sampler.global_step(state, rng) : sampler.local_step(state, dist, rng);
      if (accepted) ++res.accepted;
      res.trace.push_back(state.log_likelihood);
      if (it >= config.burn_in && (it - config.burn_in) % config.thinning == 0)
        res.samples.push_back({state.tree, state.sigma, state.log_likelihood, state.log_prior,
                               state.log_proposal, 1.0});
    }
  };

  if (config.threads <= 1 || config.num_chains == 1) {
    for (int c = 0; c < config.num_chains; ++c) run_one(c);
  } else {
    std::vector<std::thread> pool;
    const int width = std::min(config.threads, config.num_chains);
    for (int t = 0; t < width; ++t) pool.emplace_back([&, t] {
      for (int c = t; c < config.num_chains; c += width) run_one(c);
    });
    for (auto& th : pool) th.join();
  }
  return results;
}

/* Sampled tree maximizing log p(Y|A) + log p(A); first occurrence wins ties. */
inline const PosteriorSample& map_partition(const std::vector<PosteriorSample>& samples) {
  if (samples.empty()) throw DataError("map_partition needs a nonempty sample set");
  const PosteriorSample* best = &samples.front();
  for (const auto& s : samples) {
    if (s.log_likelihood + s.log_prior > best->log_likelihood + best->log_prior) best = &s;
  }
  return *best;
}

}  // namespace mgp

#endif
