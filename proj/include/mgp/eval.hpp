#ifndef MGP_EVAL_HPP
#define MGP_EVAL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mgp/common.hpp"
#include "mgp/kernels.hpp"
#include "mgp/likelihood.hpp"
#include "mgp/linalg.hpp"
#include "mgp/mcmc.hpp"
#include "mgp/ncut.hpp"
#include "mgp/partition.hpp"
#include "mgp/synth.hpp"

namespace mgp {

enum class BaselineKind { kGP, kHGP, kMGP };

inline std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kGP: return "gp";
    case BaselineKind::kHGP: return "hgp";
    default: return "mgp";
  }
}

/* Hyperparameter constraint coefficients tying kernel scales to the average
 * time-specific sample variance of the training data. */
struct BaselineSpec {
  BaselineKind kind = BaselineKind::kGP;
  double kappa = 1.0;
  double alpha0 = 1.0;  // top-level scale multiplier
  double alpha1 = 0.0;  // trial-specific scale multiplier (hGP, mGP)
  double beta = 1.0;    // nugget multiplier
  double rho = 0.0;     // mGP per-level decay
  int levels = 1;       // tree depth (1 for GP, 2 for hGP)
  BandwidthMode bandwidth_mode = BandwidthMode::kFractal;

  void check() const {
    if (!(kappa > 0.0)) throw ConfigError("baseline kappa must be positive");
    if (alpha0 < 0.0 || alpha1 < 0.0 || beta < 0.0 || rho < 0.0)
      throw ConfigError("baseline coefficients must be nonnegative");
    if (kind != BaselineKind::kGP && beta < 0.01)
      throw ConfigError("minimum allowable nugget for hGP/mGP is beta = 0.01");
    if (kind == BaselineKind::kGP && levels != 1) throw ConfigError("GP baseline has 1 level");
    if (kind == BaselineKind::kHGP && levels != 2) throw ConfigError("hGP baseline has 2 levels");
    if (levels < 1) throw ConfigError("baseline needs at least 1 level");
  }
};

/* Mean over locations of the sample variance across trials. */
inline double average_time_sample_variance(const TrialSet& data) {
  if (data.num_trials() < 2) throw DataError("sample variance needs at least 2 trials");
  const Eigen::MatrixXd centered = data.trials.colwise() - data.trials.rowwise().mean();
  return centered.rowwise().squaredNorm().mean() / static_cast<double>(data.num_trials() - 1);
}

inline Hyperparams hyperparams_from_baseline(const BaselineSpec& spec, double sigma_hat_sq) {
  spec.check();
  if (!(sigma_hat_sq > 0.0)) throw DataError("average sample variance must be positive");
  Hyperparams theta;
  theta.kappa = spec.kappa;
  theta.sigma2 = spec.beta * sigma_hat_sq;
  theta.bandwidth_mode = spec.bandwidth_mode;
  theta.d.push_back(spec.alpha0 * sigma_hat_sq);
  for (int l = 1; l < spec.levels; ++l)
    theta.d.push_back(spec.alpha1 * std::exp(-spec.rho * static_cast<double>(l)) * sigma_hat_sq);
  return theta;
}

/* The GP baseline is the L=1 model with independent trials: trial-to-trial
 * variability is absorbed by the nugget, so the joint marginal is a sum of
 * single-trial marginals. */
inline double gp_log_marginal(const TrialSet& data, const Hyperparams& theta, Interval domain) {
  const PartitionTree tree(domain, 1);
  double total = 0.0;
  for (int j = 0; j < data.num_trials(); ++j)
    total += single_trial_log_marginal(data.trial(j), data.locations, tree, theta);
  return total;
}

/* GP predictive for a new trial: training trials carry no information about
 * it, leaving the J = 0 prior predictive N(0, sigma2 I + K). */
inline GaussianBelief gp_predict(const Eigen::VectorXd& locs, const Hyperparams& theta,
                                 Interval domain) {
  return prior_predictive(locs, PartitionTree(domain, 1), theta);
}

/* The hGP baseline is exactly the mGP on the 2-level tree with no cut. */
inline double hgp_log_marginal(const TrialSet& data, const Hyperparams& theta, Interval domain) {
  return multi_trial_log_marginal(data, PartitionTree(domain, 2), theta);
}

inline GaussianBelief hgp_predict(const TrialSet& data, const Hyperparams& theta,
                                  Interval domain) {
  return predictive_new_trial(data, PartitionTree(domain, 2), theta);
}

/* Per-tree predictive beliefs with weights; posterior samples sharing a
 * cached covariance collapse into one entry. */
struct ModelPredictive {
  std::vector<GaussianBelief> beliefs;
  std::vector<double> weights;  // normalized
};

namespace detail {

struct TreeGroup {
  const PosteriorSample* rep;
  double weight;
};

inline std::vector<TreeGroup> group_samples(const std::vector<PosteriorSample>& samples) {
  if (samples.empty()) throw DataError("need a nonempty posterior sample set");
  std::vector<TreeGroup> groups;
  std::map<const void*, std::size_t> seen;
  double total = 0.0;
  for (const auto& s : samples) {
    total += s.weight;
    const void* key = s.sigma.get();
    if (key != nullptr) {
      auto it = seen.find(key);
      if (it != seen.end()) {
        groups[it->second].weight += s.weight;
        continue;
      }
      seen[key] = groups.size();
    }
    groups.push_back({&s, s.weight});
  }
  if (!(total > 0.0)) throw DataError("posterior sample weights sum to zero");
  for (auto& g : groups) g.weight /= total;
  return groups;
}

}  // namespace detail

inline ModelPredictive mgp_model_predictive(const std::vector<PosteriorSample>& samples,
                                            const TrialSet& train, const Hyperparams& theta) {
  ModelPredictive out;
  for (const auto& g : detail::group_samples(samples)) {
    out.beliefs.push_back(predictive_new_trial(train, g.rep->tree, theta));
    out.weights.push_back(g.weight);
  }
  return out;
}

/* Predictive log-density of a full heldout trial: log of the weighted mean
 * predictive density across tree samples. */
inline double heldout_log_likelihood(const ModelPredictive& pred, const Eigen::VectorXd& y_star) {
  std::vector<double> log_dens(pred.beliefs.size());
  for (std::size_t i = 0; i < pred.beliefs.size(); ++i)
    log_dens[i] = mvn_log_density(y_star, pred.beliefs[i].mean, pred.beliefs[i].cov);
  const double m = *std::max_element(log_dens.begin(), log_dens.end());
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t i = 0; i < log_dens.size(); ++i)
    acc += pred.weights[i] * std::exp(log_dens[i] - m);
  return m + std::log(acc);
}

/* Windowed predictive MSE: condition each tree's new-trial predictive on the
 * heldout prefix y*_{1:tau-1}, average the conditional means across trees,
 * then score the window tau..tau+h-1 (1-based, tau + h <= n). */
inline double predictive_mse(const ModelPredictive& pred, const Eigen::VectorXd& y_star, int tau,
                             int horizon) {
  const int n = static_cast<int>(y_star.size());
  if (horizon < 1) throw DataError("empty prediction window");
  if (tau < 1 || tau + horizon > n) throw DataError("prediction window out of range");

  std::vector<int> prefix;
  for (int i = 0; i < tau - 1; ++i) prefix.push_back(i);
  Eigen::VectorXd window_mean = Eigen::VectorXd::Zero(horizon);
  for (std::size_t t = 0; t < pred.beliefs.size(); ++t) {
    Eigen::VectorXd mean_unobs;
    if (prefix.empty()) {
      mean_unobs = pred.beliefs[t].mean;
    } else {
      const GaussianBelief cond =
          predictive_conditional(pred.beliefs[t], prefix, y_star.head(tau - 1));
      mean_unobs = cond.mean;  // coordinates tau-1 .. n-1 of the trial
    }
    window_mean += pred.weights[t] * mean_unobs.segment(prefix.empty() ? tau - 1 : 0, horizon);
  }
  return (window_mean - y_star.segment(tau - 1, horizon)).squaredNorm() /
         static_cast<double>(horizon);
}

struct PredictionRow {
  int index = 0;  // 1-based location index
  double x = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

/* Tree-averaged predictive mean and variance for the window tau..tau+h-1
 * (1-based), conditioned on the prefix values y*_{1:tau-1}. The variance is
 * the mixture variance across trees. */
inline std::vector<PredictionRow> predict_window(const ModelPredictive& pred,
                                                 const Eigen::VectorXd& locs, int tau,
                                                 int horizon,
                                                 const Eigen::VectorXd& prefix_values) {
  const int n = static_cast<int>(locs.size());
  if (tau < 1 || tau > n) throw ConfigError("tau out of range");
  if (horizon < 1) throw ConfigError("empty prediction window");
  if (tau + horizon > n) throw ConfigError("prediction window out of range");
  if (prefix_values.size() != tau - 1)
    throw DataError("prefix must hold the first tau-1 observations");

  std::vector<int> prefix_idx;
  for (int i = 0; i < tau - 1; ++i) prefix_idx.push_back(i);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(horizon);
  Eigen::VectorXd second_moment = Eigen::VectorXd::Zero(horizon);
  for (std::size_t t = 0; t < pred.beliefs.size(); ++t) {
    GaussianBelief belief = pred.beliefs[t];
    if (!prefix_idx.empty()) belief = predictive_conditional(belief, prefix_idx, prefix_values);
    const int offset = prefix_idx.empty() ? tau - 1 : 0;
    for (int i = 0; i < horizon; ++i) {
      const double mu = belief.mean[offset + i];
      const double var = belief.cov(offset + i, offset + i);
      mean[i] += pred.weights[t] * mu;
      second_moment[i] += pred.weights[t] * (var + mu * mu);
    }
  }
  std::vector<PredictionRow> rows;
  for (int i = 0; i < horizon; ++i) {
    const int global = tau - 1 + i;
    rows.push_back({global + 1, locs[global], mean[i], second_moment[i] - mean[i] * mean[i]});
  }
  return rows;
}

/* RMSE between the tree-averaged posterior mean of f^0 and the truth. */
inline double f0_error(const std::vector<PosteriorSample>& samples, const TrialSet& train,
                       const Hyperparams& theta, const Eigen::VectorXd& f0_truth) {
  Eigen::VectorXd averaged = Eigen::VectorXd::Zero(train.n());
  for (const auto& g : detail::group_samples(samples))
    averaged += g.weight * posterior_parent(train, g.rep->tree, theta).mean;
  return std::sqrt((averaged - f0_truth).squaredNorm() / static_cast<double>(train.n()));
}

struct Histogram {
  std::vector<double> edges;   // bins + 1
  std::vector<double> mass;    // normalized weights per bin
};

/* Weighted histogram of level-l cut locations across posterior samples. */
inline Histogram changepoint_histogram(const std::vector<PosteriorSample>& samples, int level,
                                       int bins, Interval domain) {
  if (samples.empty()) throw DataError("need a nonempty posterior sample set");
  if (bins < 1) throw ConfigError("need at least 1 histogram bin");
  Histogram h;
  const double step = domain.length() / static_cast<double>(bins);
  for (int b = 0; b <= bins; ++b) h.edges.push_back(domain.lo + step * static_cast<double>(b));
  h.mass.assign(static_cast<std::size_t>(bins), 0.0);
  double total = 0.0;
  for (const auto& s : samples) {
    for (const Cut& c : s.tree.cuts()) {
      if (c.level != level) continue;
      int b = static_cast<int>((c.value - domain.lo) / step);
      b = std::clamp(b, 0, bins - 1);
      h.mass[static_cast<std::size_t>(b)] += s.weight;
      total += s.weight;
    }
  }
  if (total > 0.0)
    for (double& m : h.mass) m /= total;
  return h;
}

/* Exhaustive grid maximization of the (multi-trial) training log-marginal.
 * The mGP objective averages the log-marginal over the provided tree
 * samples. Ties resolve to the first grid point visited. */
struct CoefficientGrid {
  std::vector<double> kappa{1.0};
  std::vector<double> alpha0{1.0};
  std::vector<double> alpha1{0.0};
  std::vector<double> beta{1.0};
  std::vector<double> rho{0.0};
};

struct GridResult {
  BaselineSpec best;
  double objective = kNegInf;
};

inline GridResult grid_optimize(const TrialSet& train, BaselineKind kind,
                                const CoefficientGrid& grid, int levels, BandwidthMode mode,
                                Interval domain,
                                const std::vector<PosteriorSample>& tree_samples = {}) {
  if (grid.kappa.empty() || grid.alpha0.empty() || grid.alpha1.empty() || grid.beta.empty() ||
      grid.rho.empty())
    throw ConfigError("empty coefficient grid");
  const double sig2 = average_time_sample_variance(train);
  GridResult out;
  bool any_finite = false;
  for (double kappa : grid.kappa)
    for (double a0 : grid.alpha0)
      for (double a1 : grid.alpha1)
        for (double beta : grid.beta)
          for (double rho : grid.rho) {
            BaselineSpec spec{kind, kappa, a0, a1, beta, rho, levels, mode};
            double value = kNegInf;
            try {
              const Hyperparams theta = hyperparams_from_baseline(spec, sig2);
              if (kind == BaselineKind::kGP) {
                value = gp_log_marginal(train, theta, domain);
              } else if (kind == BaselineKind::kHGP) {
                value = hgp_log_marginal(train, theta, domain);
              } else {
                if (tree_samples.empty())
                  throw ConfigError("mGP grid optimization needs tree samples");
                const auto groups = detail::group_samples(tree_samples);
                value = 0.0;
                for (const auto& g : groups)
                  value += g.weight * multi_trial_log_marginal(train, g.rep->tree, theta);
              }
            } catch (const NumericalError&) {
              value = kNegInf;  // NaN-with-reason: conditioning failure at this grid point
            }
            if (std::isfinite(value)) any_finite = true;
            if (value > out.objective) {
              out.objective = value;
              out.best = spec;
            }
          }
  if (!any_finite) throw NumericalError("grid optimization failed: no finite objective");
  return out;
}

}  // namespace mgp

#endif
