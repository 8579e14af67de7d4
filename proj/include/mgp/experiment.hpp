#ifndef MGP_EXPERIMENT_HPP
#define MGP_EXPERIMENT_HPP

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mgp/eval.hpp"
#include "mgp/io.hpp"
#include "mgp/mcmc.hpp"
#include "mgp/ncut.hpp"
#include "mgp/synth.hpp"

namespace mgp {

/* Simulation-study inference settings: nugget set to a third of the average
 * time-specific sample variance and scales decaying from that same value,
 * deliberately mismatched from the generator. */
inline Hyperparams mismatched_inference_hyperparams(double sigma_hat_sq, double kappa, int levels,
                                                    BandwidthMode mode) {
  Hyperparams theta;
  theta.kappa = kappa;
  theta.sigma2 = sigma_hat_sq / 3.0;
  theta.bandwidth_mode = mode;
  for (int l = 0; l < levels; ++l)
    theta.d.push_back((sigma_hat_sq / 3.0) * std::exp(-0.5 * static_cast<double>(l)));
  return theta;
}

/* GP comparison settings: top-level scale as in the mGP, remaining variance
 * treated as noise. */
inline Hyperparams gp_comparison_hyperparams(double sigma_hat_sq, double kappa,
                                             BandwidthMode mode) {
  Hyperparams theta;
  theta.kappa = kappa;
  theta.bandwidth_mode = mode;
  theta.d = {sigma_hat_sq / 3.0};
  theta.sigma2 = 2.0 * sigma_hat_sq / 3.0;
  return theta;
}

/* hGP comparison settings: total variance split evenly between the parent
 * level, the trial-specific level, and the nugget. */
inline Hyperparams hgp_comparison_hyperparams(double sigma_hat_sq, double kappa,
                                              BandwidthMode mode) {
  Hyperparams theta;
  theta.kappa = kappa;
  theta.bandwidth_mode = mode;
  theta.d = {sigma_hat_sq / 3.0, sigma_hat_sq / 3.0};
  theta.sigma2 = sigma_hat_sq / 3.0;
  return theta;
}

/* Per-level generator scales d^l = d0 * exp(-decay * l). */
inline Hyperparams generator_hyperparams(double d0, double decay, double kappa, double sigma2,
                                         int levels, BandwidthMode mode) {
  Hyperparams theta;
  theta.kappa = kappa;
  theta.sigma2 = sigma2;
  theta.bandwidth_mode = mode;
  for (int l = 0; l < levels; ++l)
    theta.d.push_back(d0 * std::exp(-decay * static_cast<double>(l)));
  return theta;
}

struct ExperimentConfig {
  // generation (used unless an external dataset is supplied)
  int n = 200;
  int train_trials = 100;
  int heldout_trials = 10;
  int true_levels = 5;
  Interval domain{0.0, 1.0};
  double true_sigma2 = 0.1;
  double true_kappa = 10.0;
  double true_d0 = 5.0;
  double decay = 0.5;
  BandwidthMode bandwidth_mode = BandwidthMode::kFractal;
  std::uint64_t seed = 1;

  // external dataset (optional; overrides generation)
  std::string dataset_path;
  std::string truth_path;

  // inference
  std::vector<int> mgp_levels{2, 5, 7, 10};
  SamplerConfig sampler;
  std::vector<std::string> models{"gp", "hgp", "mgp"};

  // metrics
  std::vector<int> taus{50, 100, 150};
  int horizon = 30;
  int histogram_bins = 40;

  void check() const {
    if (dataset_path.empty()) {
      if (n < 2 || train_trials < 1) throw ConfigError("need n >= 2 and at least 1 training trial");
      if (true_levels < 1) throw ConfigError("true_levels must be >= 1");
    }
    if (heldout_trials < 0) throw ConfigError("heldout_trials must be >= 0");
    if (mgp_levels.empty() && models_has("mgp")) throw ConfigError("no mGP levels configured");
    sampler.check();
    if (horizon < 0) throw ConfigError("horizon must be >= 0");
  }

  bool models_has(const std::string& m) const {
    for (const auto& s : models)
      if (s == m) return true;
    return false;
  }
};

struct ModelMetrics {
  std::string name;
  std::vector<double> heldout_loglik;  // one entry per heldout trial
  double heldout_loglik_mean = std::nan("");
  double heldout_loglik_se = std::nan("");
  double f0_rmse = std::nan("");
  std::string f0_note;  // reason when f0_rmse is NaN
  std::vector<std::vector<double>> mse;  // [tau][heldout trial]
};

struct MetricReport {
  std::vector<ModelMetrics> models;
  std::vector<int> taus;
  double true_tree_loglik = std::nan("");
  double greedy_tree_loglik = std::nan("");
  int map_cut_index_error = -1;  // level-1 cut: |grid index(MAP) - grid index(truth)|
  std::uint64_t seed = 0;
  std::string notes;

  const ModelMetrics* find(const std::string& name) const {
    for (const auto& m : models)
      if (m.name == name) return &m;
    return nullptr;
  }
};

namespace detail {

inline int grid_index(const Eigen::VectorXd& locs, double z) {
  int k = 0;
  while (k < locs.size() && locs[k] < z) ++k;
  return k;
}

inline void summarize(ModelMetrics& m) {
  if (m.heldout_loglik.empty()) return;
  double mean = 0.0;
  for (double v : m.heldout_loglik) mean += v;
  mean /= static_cast<double>(m.heldout_loglik.size());
  double var = 0.0;
  for (double v : m.heldout_loglik) var += (v - mean) * (v - mean);
  const auto k = static_cast<double>(m.heldout_loglik.size());
  m.heldout_loglik_mean = mean;
  m.heldout_loglik_se = k > 1 ? std::sqrt(var / (k - 1.0) / k) : 0.0;
}

inline ModelMetrics score_model(const std::string& name, const ModelPredictive& pred,
                                const TrialSet& heldout, const std::vector<int>& taus,
                                int horizon) {
  ModelMetrics m;
  m.name = name;
  for (int j = 0; j < heldout.num_trials(); ++j)
    m.heldout_loglik.push_back(heldout_log_likelihood(pred, heldout.trial(j)));
  summarize(m);
  for (int tau : taus) {
    std::vector<double> per_trial;
    for (int j = 0; j < heldout.num_trials(); ++j)
      per_trial.push_back(predictive_mse(pred, heldout.trial(j), tau, horizon));
    m.mse.push_back(std::move(per_trial));
  }
  return m;
}

}  // namespace detail

/* End-to-end synthetic study: generate (or load) trials, fit every
 * configured model, and score heldout predictions, f0 recovery, and
 * changepoints. Artifacts land in out_dir when given; the report is
 * deterministic for a fixed seed. */
inline MetricReport run_synthetic_experiment(const ExperimentConfig& config,
                                             const std::filesystem::path* out_dir = nullptr) {
  config.check();
  MetricReport report;
  report.seed = config.seed;
  report.taus = config.taus;

  // --- data -----------------------------------------------------------
  std::optional<TrialSet> all;
  std::optional<SynthTruth> truth;
  if (!config.dataset_path.empty()) {
    std::istringstream is(read_file(config.dataset_path));
    all.emplace(read_trials_csv(is));
    if (!config.truth_path.empty()) {
      const json tj = json::parse(read_file(config.truth_path));
      require_keys(tj, {"tree", "f0", "trial_level_funcs"}, "truth");
      PartitionTree tree = tree_from_json(tj.at("tree"));
      Eigen::VectorXd f0(all->n());
      const auto& f0j = tj.at("f0");
      if (static_cast<int>(f0j.size()) != all->n()) throw DataError("truth f0 length mismatch");
      for (int i = 0; i < all->n(); ++i) f0[i] = f0j.at(static_cast<std::size_t>(i)).get<double>();
      truth.emplace(SynthTruth{std::move(tree), std::move(f0), {}});
    }
  } else {
    const Hyperparams gen = generator_hyperparams(config.true_d0, config.decay, config.true_kappa,
                                                  config.true_sigma2, config.true_levels,
                                                  config.bandwidth_mode);
    const SynthSpec spec(config.n, config.train_trials + config.heldout_trials,
                         config.true_levels, config.domain, gen,
                         PartitionPrior::uniform(config.domain), config.seed);
    auto [data, tr] = sample_dataset(spec);
    all.emplace(std::move(data));
    truth.emplace(std::move(tr));
  }

  const int total_trials = all->num_trials();
  const int heldout_count = std::min(config.heldout_trials, total_trials - 1);
  const int train_count = total_trials - heldout_count;
  const TrialSet train(all->locations, all->trials.leftCols(train_count));
  std::optional<TrialSet> heldout;
  if (heldout_count > 0)
    heldout.emplace(all->locations, all->trials.rightCols(heldout_count));

  const Interval domain = truth ? truth->tree.domain()
                                : Interval{all->locations[0], all->locations[all->n() - 1] +
                                           (all->locations[all->n() - 1] - all->locations[0]) /
                                               std::max(1, all->n() - 1)};
  const double sigma_hat_sq = average_time_sample_variance(train);
  const CostMatrix w = empirical_cost_matrix(train);
  const PartitionPrior prior = PartitionPrior::uniform(domain);

  // --- fits -----------------------------------------------------------
  struct MgpFit {
    int levels;
    Hyperparams theta;
    std::vector<PosteriorSample> samples;
    std::vector<ChainResult> chains;
  };
  std::vector<MgpFit> fits;
  if (config.models_has("mgp")) {
    for (int levels : config.mgp_levels) {
      MgpFit fit;
      fit.levels = levels;
      fit.theta = mismatched_inference_hyperparams(sigma_hat_sq, config.true_kappa, levels,
                                                   config.bandwidth_mode);
      fit.chains = run_chains(train, w, prior, fit.theta, levels, config.sampler);
      for (const auto& c : fit.chains)
        fit.samples.insert(fit.samples.end(), c.samples.begin(), c.samples.end());
      fits.push_back(std::move(fit));
    }
  }

  const Hyperparams gp_theta =
      gp_comparison_hyperparams(sigma_hat_sq, config.true_kappa, config.bandwidth_mode);
  const Hyperparams hgp_theta =
      hgp_comparison_hyperparams(sigma_hat_sq, config.true_kappa, config.bandwidth_mode);

  // --- metrics ---------------------------------------------------------
  if (heldout) {
    if (config.models_has("gp")) {
      ModelPredictive pred{{gp_predict(train.locations, gp_theta, domain)}, {1.0}};
      auto m = detail::score_model("gp", pred, *heldout, config.taus, config.horizon);
      std::vector<PosteriorSample> one;
      one.push_back({PartitionTree(domain, 1), nullptr, 0.0, 0.0, 0.0, 1.0});
      if (truth)
        m.f0_rmse = f0_error(one, train, gp_theta, truth->f0);
      else
        m.f0_note = "no ground-truth f0 available";
      report.models.push_back(std::move(m));
    }
    if (config.models_has("hgp")) {
      ModelPredictive pred{{hgp_predict(train, hgp_theta, domain)}, {1.0}};
      auto m = detail::score_model("hgp", pred, *heldout, config.taus, config.horizon);
      std::vector<PosteriorSample> one;
      one.push_back({PartitionTree(domain, 2), nullptr, 0.0, 0.0, 0.0, 1.0});
      if (truth)
        m.f0_rmse = f0_error(one, train, hgp_theta, truth->f0);
      else
        m.f0_note = "no ground-truth f0 available";
      report.models.push_back(std::move(m));
    }
    for (const auto& fit : fits) {
      const ModelPredictive pred = mgp_model_predictive(fit.samples, train, fit.theta);
      auto m = detail::score_model("mgp_L" + std::to_string(fit.levels), pred, *heldout,
                                   config.taus, config.horizon);
      if (truth)
        m.f0_rmse = f0_error(fit.samples, train, fit.theta, truth->f0);
      else
        m.f0_note = "no ground-truth f0 available";
      report.models.push_back(std::move(m));
    }
  }

  // --- partition diagnostics -------------------------------------------
  const PartitionTree greedy =
      greedy_ncut_tree(w, fits.empty() ? 2 : fits.front().levels, train.locations, domain);
  for (const auto& fit : fits) {
    if (!truth || fit.levels < 2) continue;
    report.true_tree_loglik =
        truth->tree.levels() == fit.levels
            ? multi_trial_log_marginal(train, truth->tree, fit.theta)
            : report.true_tree_loglik;
    const PosteriorSample& map = map_partition(fit.samples);
    double map_cut = std::nan(""), true_cut = std::nan("");
    for (const Cut& c : map.tree.cuts())
      if (c.level == 1) map_cut = c.value;
    for (const Cut& c : truth->tree.cuts())
      if (c.level == 1) true_cut = c.value;
    if (truth->tree.levels() == fit.levels && !std::isnan(map_cut) && !std::isnan(true_cut))
      report.map_cut_index_error = std::abs(detail::grid_index(train.locations, map_cut) -
                                            detail::grid_index(train.locations, true_cut));
  }
  if (!fits.empty() && fits.front().levels >= 2)
    report.greedy_tree_loglik = multi_trial_log_marginal(
        train,
        greedy_ncut_tree(w, fits.front().levels, train.locations, domain),
        fits.front().theta);

  // --- artifacts ---------------------------------------------------------
  if (out_dir != nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(*out_dir);
    std::vector<std::string> artifacts;
    const auto emit = [&](const std::string& name, const std::string& contents) {
      write_file(*out_dir / name, contents);
      artifacts.push_back(name);
    };

    std::ostringstream data_csv;
    write_trials_csv(data_csv, *all);
    emit("data.csv", data_csv.str());
    if (truth) emit("truth.json", truth_to_json(*truth).dump(2) + "\n");

    std::ostringstream emp_corr;
    Eigen::MatrixXd emp = w;
    write_matrix_csv(emp_corr, emp);
    emit("corr_empirical.csv", emp_corr.str());
    if (truth) {
      const Hyperparams gen =
          generator_hyperparams(config.true_d0, config.decay, config.true_kappa,
                                config.true_sigma2, truth->tree.levels(), config.bandwidth_mode);
      if (gen.levels() == truth->tree.levels()) {
        std::ostringstream tc;
        write_matrix_csv(tc, true_correlation_matrix(truth->tree, gen, train.locations));
        emit("corr_true.csv", tc.str());
      }
    }

    std::ostringstream bounds;
    write_boundaries_csv(bounds, greedy);
    emit("ncut_boundaries.csv", bounds.str());
    emit("ncut_tree.json", tree_to_json(greedy).dump(2) + "\n");

    for (const auto& fit : fits) {
      const std::string tag = "L" + std::to_string(fit.levels);
      std::ostringstream trace;
      write_trace_csv(trace, fit.chains);
      emit("trace_" + tag + ".csv", trace.str());
      std::ostringstream samples;
      write_samples_jsonl(samples, fit.samples);
      emit("samples_" + tag + ".jsonl", samples.str());
      if (fit.levels >= 2) {
        std::ostringstream hist;
        write_histogram_csv(hist,
                            changepoint_histogram(fit.samples, 1, config.histogram_bins, domain));
        emit("changepoints_" + tag + ".csv", hist.str());
        emit("map_tree_" + tag + ".json",
             tree_to_json(map_partition(fit.samples).tree).dump(2) + "\n");
      }
    }

    json report_json{{"seed", report.seed},
                     {"taus", report.taus},
                     {"map_cut_index_error", report.map_cut_index_error},
                     {"true_tree_loglik", report.true_tree_loglik},
                     {"greedy_tree_loglik", report.greedy_tree_loglik}};
    json models = json::array();
    for (const auto& m : report.models) {
      json mj{{"name", m.name},
              {"heldout_loglik", m.heldout_loglik},
              {"heldout_loglik_mean", m.heldout_loglik_mean},
              {"heldout_loglik_se", m.heldout_loglik_se}};
      if (std::isnan(m.f0_rmse))
        mj["f0_rmse"] = nullptr, mj["f0_note"] = m.f0_note;
      else
        mj["f0_rmse"] = m.f0_rmse;
      json mses = json::array();
      for (std::size_t t = 0; t < m.mse.size(); ++t)
        mses.push_back(json{{"tau", report.taus[t]}, {"per_trial", m.mse[t]}});
      mj["mse"] = std::move(mses);
      // percent decrease vs the GP baseline, both aggregations
      const ModelMetrics* gp = report.find("gp");
      if (gp != nullptr && m.name != "gp" && !m.mse.empty()) {
        json pct = json::array();
        for (std::size_t t = 0; t < m.mse.size(); ++t) {
          double gp_mean = 0.0, m_mean = 0.0, ratio_mean = 0.0;
          for (std::size_t j = 0; j < m.mse[t].size(); ++j) {
            gp_mean += gp->mse[t][j];
            m_mean += m.mse[t][j];
            ratio_mean += 100.0 * (gp->mse[t][j] - m.mse[t][j]) / gp->mse[t][j];
          }
          const auto cnt = static_cast<double>(m.mse[t].size());
          pct.push_back(json{{"tau", report.taus[t]},
                             {"ratio_of_means", 100.0 * (gp_mean - m_mean) / gp_mean},
                             {"mean_of_ratios", ratio_mean / cnt}});
        }
        mj["pct_mse_decrease_vs_gp"] = std::move(pct);
      }
      models.push_back(std::move(mj));
    }
    report_json["models"] = std::move(models);
    emit("report.json", report_json.dump(2) + "\n");

    json manifest{{"command", "evaluate"},
                  {"version", kVersion},
                  {"seed", report.seed},
                  {"config_hash", fnv1a_hex(json{{"n", config.n},
                                                 {"train_trials", config.train_trials},
                                                 {"heldout_trials", config.heldout_trials},
                                                 {"true_levels", config.true_levels},
                                                 {"mgp_levels", config.mgp_levels},
                                                 {"seed", config.seed}}
                                                .dump())},
                  {"artifacts", artifacts}};
    write_file(*out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return report;
}

}  // namespace mgp

#endif
