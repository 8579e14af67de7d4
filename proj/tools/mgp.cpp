/* mgp: command-line front end for the multiresolution GP library.
 *
 * Subcommands: simulate | ncut-segment | fit | predict | evaluate.
 * Every subcommand is deterministic given --seed; output directories get a
 * manifest recording the config hash, seed, and version.
 * Exit codes: 0 ok, 2 config/schema, 3 data, 4 numerical. */

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mgp/mgp.hpp"

namespace fs = std::filesystem;
using mgp::json;

namespace {

int env_default_threads() {
  const char* v = std::getenv("MGP_THREADS");
  if (v == nullptr) return 1;
  const int t = std::atoi(v);
  return t >= 1 ? t : 1;
}

mgp::Interval interval_from_json(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 2) throw mgp::ConfigError(context + " must be [lo, hi]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

mgp::Interval default_domain(const Eigen::VectorXd& locs) {
  const double lo = locs[0];
  const double hi = locs[locs.size() - 1];
  const double gap = (hi - lo) / std::max<double>(1.0, static_cast<double>(locs.size() - 1));
  return {lo, hi + gap};
}

mgp::SamplerConfig sampler_from_json(const json& j) {
  mgp::require_keys(j,
                    {"iterations", "burn_in", "thinning", "chains", "seed",
                     "global_phase_fraction", "final_root_weight", "threads"},
                    "sampler");
  mgp::SamplerConfig config;
  config.iterations = j.value("iterations", config.iterations);
  config.burn_in = j.value("burn_in", config.burn_in);
  config.thinning = j.value("thinning", config.thinning);
  config.num_chains = j.value("chains", config.num_chains);
  config.seed = j.value("seed", config.seed);
  config.global_phase_fraction = j.value("global_phase_fraction", config.global_phase_fraction);
  config.final_root_weight = j.value("final_root_weight", config.final_root_weight);
  config.threads = j.value("threads", config.threads);
  config.check();
  return config;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& config_bytes, std::uint64_t seed,
                    const std::vector<std::string>& artifacts) {
  json manifest{{"command", command},
                {"version", mgp::kVersion},
                {"seed", seed},
                {"config_hash", mgp::fnv1a_hex(config_bytes)},
                {"artifacts", artifacts}};
  mgp::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const fs::path& out_dir) {
  const std::string bytes = mgp::read_file(config_path);
  const json j = json::parse(bytes);
  mgp::require_keys(j, {"n", "trials", "levels", "domain", "seed", "hyperparams", "prior"},
                    "simulate config");
  for (const char* key : {"n", "trials", "levels", "hyperparams"})
    if (!j.contains(key)) throw mgp::ConfigError(std::string("simulate config needs ") + key);

  const mgp::Interval domain = j.contains("domain")
                                   ? interval_from_json(j.at("domain"), "domain")
                                   : mgp::Interval{0.0, 1.0};
  mgp::Hyperparams theta = mgp::hyperparams_from_json(j.at("hyperparams"));
  mgp::PartitionPrior prior = j.contains("prior")
                                  ? mgp::prior_from_json(j.at("prior"), domain)
                                  : mgp::PartitionPrior::uniform(domain);
  const std::uint64_t use_seed = seed.value_or(j.value("seed", std::uint64_t{0}));
  const mgp::SynthSpec spec(j.at("n").get<int>(), j.at("trials").get<int>(),
                            j.at("levels").get<int>(), domain, std::move(theta),
                            std::move(prior), use_seed);
  auto [data, truth] = mgp::sample_dataset(spec);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  mgp::write_trials_csv(csv, data);
  mgp::write_file(out_dir / "data.csv", csv.str());
  mgp::write_file(out_dir / "truth.json", mgp::truth_to_json(truth).dump(2) + "\n");
  write_manifest(out_dir, "simulate", bytes, use_seed, {"data.csv", "truth.json"});
  std::cerr << "wrote " << (out_dir / "data.csv").string() << " (" << data.num_trials()
            << " trials x " << data.n() << " locations)\n";
  return 0;
}

int cmd_ncut(const std::string& data_path, int levels, const fs::path& out_dir) {
  std::istringstream is(mgp::read_file(data_path));
  const mgp::TrialSet data = mgp::read_trials_csv(is);
  const mgp::CostMatrix w = mgp::empirical_cost_matrix(data);
  const mgp::Interval domain = default_domain(data.locations);
  const mgp::PartitionTree tree = mgp::greedy_ncut_tree(w, levels, data.locations, domain);

  fs::create_directories(out_dir);
  mgp::write_file(out_dir / "ncut_tree.json", mgp::tree_to_json(tree).dump(2) + "\n");
  std::ostringstream bounds;
  mgp::write_boundaries_csv(bounds, tree);
  mgp::write_file(out_dir / "ncut_boundaries.csv", bounds.str());
  write_manifest(out_dir, "ncut-segment", data_path + ":" + std::to_string(levels), 0,
                 {"ncut_tree.json", "ncut_boundaries.csv"});
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& config_path,
            const std::string& method, std::optional<std::uint64_t> seed, int threads,
            const fs::path& out_dir) {
  const std::string bytes = mgp::read_file(config_path);
  const json j = json::parse(bytes);
  mgp::require_keys(j, {"levels", "domain", "hyperparams", "sampler", "prior", "draws"},
                    "fit config");
  if (!j.contains("levels") || !j.contains("hyperparams"))
    throw mgp::ConfigError("fit config needs levels and hyperparams");

  std::istringstream is(mgp::read_file(data_path));
  const mgp::TrialSet data = mgp::read_trials_csv(is);
  const mgp::Interval domain = j.contains("domain")
                                   ? interval_from_json(j.at("domain"), "domain")
                                   : default_domain(data.locations);
  const int levels = j.at("levels").get<int>();
  const mgp::Hyperparams theta = mgp::hyperparams_from_json(j.at("hyperparams"));
  const mgp::PartitionPrior prior = j.contains("prior")
                                        ? mgp::prior_from_json(j.at("prior"), domain)
                                        : mgp::PartitionPrior::uniform(domain);
  const mgp::CostMatrix w = mgp::empirical_cost_matrix(data);

  fs::create_directories(out_dir);
  std::vector<std::string> artifacts;
  std::uint64_t used_seed = 0;
  if (method == "mh") {
    mgp::SamplerConfig config =
        j.contains("sampler") ? sampler_from_json(j.at("sampler")) : mgp::SamplerConfig{};
    if (seed) config.seed = *seed;
    config.threads = threads;
    used_seed = config.seed;
    std::cerr << "fit: " << config.num_chains << " chains x " << config.iterations
              << " iterations (L=" << levels << ")\n";
    const auto chains = mgp::run_chains(data, w, prior, theta, levels, config);
    std::vector<mgp::PosteriorSample> samples;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      samples.insert(samples.end(), chains[c].samples.begin(), chains[c].samples.end());
      std::cerr << "chain " << c << ": " << chains[c].samples.size() << " samples, "
                << chains[c].accepted << "/" << config.iterations << " accepted\n";
    }
    std::ostringstream samples_os, trace_os;
    mgp::write_samples_jsonl(samples_os, samples);
    mgp::write_trace_csv(trace_os, chains);
    mgp::write_file(out_dir / "samples.jsonl", samples_os.str());
    mgp::write_file(out_dir / "trace.csv", trace_os.str());
    artifacts = {"samples.jsonl", "trace.csv"};
  } else if (method == "is") {
    const int draws = j.value("draws", 1000);
    used_seed = seed.value_or(j.contains("sampler") ? j.at("sampler").value("seed", 0) : 0);
    mgp::Rng rng(used_seed);
    std::cerr << "fit: importance sampling with " << draws << " draws (L=" << levels << ")\n";
    const mgp::ImportanceResult result =
        mgp::importance_sample(data, w, prior, theta, levels, draws, rng);
    std::cerr << "effective sample size: " << result.ess << "\n";
    std::ostringstream samples_os;
    mgp::write_samples_jsonl(samples_os, result.samples);
    mgp::write_file(out_dir / "samples.jsonl", samples_os.str());
    artifacts = {"samples.jsonl"};
  } else {
    throw mgp::ConfigError("--method must be mh or is");
  }
  write_manifest(out_dir, "fit", bytes, used_seed, artifacts);
  return 0;
}

int cmd_predict(const std::string& data_path, const std::string& samples_path,
                const std::string& config_path, int tau, int horizon,
                const std::string& heldout_path, int heldout_trial, const fs::path& out_dir) {
  const std::string bytes = mgp::read_file(config_path);
  const json j = json::parse(bytes);
  mgp::require_keys(j, {"levels", "domain", "hyperparams", "sampler", "prior", "draws"},
                    "fit config");
  if (!j.contains("hyperparams")) throw mgp::ConfigError("predict config needs hyperparams");

  std::istringstream is(mgp::read_file(data_path));
  const mgp::TrialSet train = mgp::read_trials_csv(is);
  const mgp::Hyperparams theta = mgp::hyperparams_from_json(j.at("hyperparams"));
  std::istringstream samples_is(mgp::read_file(samples_path));
  const auto samples = mgp::read_samples_jsonl(samples_is);

  const int n = train.n();
  if (tau < 1 || tau > n) throw mgp::ConfigError("tau out of range");
  if (horizon < 1) throw mgp::ConfigError("empty prediction window");
  if (tau + horizon > n) throw mgp::ConfigError("prediction window out of range");

  Eigen::VectorXd prefix_values(0);
  if (tau > 1) {
    if (heldout_path.empty())
      throw mgp::ConfigError("tau > 1 needs --heldout with the trial being predicted");
    std::istringstream heldout_is(mgp::read_file(heldout_path));
    const mgp::TrialSet heldout = mgp::read_trials_csv(heldout_is);
    if (heldout.n() != n) throw mgp::DataError("heldout locations do not match training data");
    if (heldout_trial < 0 || heldout_trial >= heldout.num_trials())
      throw mgp::DataError("heldout trial index out of range");
    prefix_values = heldout.trial(heldout_trial).head(tau - 1);
  }

  const mgp::ModelPredictive pred = mgp::mgp_model_predictive(samples, train, theta);
  const auto rows = mgp::predict_window(pred, train.locations, tau, horizon, prefix_values);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "index,x,mean,variance\n";
  for (const auto& row : rows)
    csv << row.index << ',' << mgp::format_double(row.x) << ',' << mgp::format_double(row.mean)
        << ',' << mgp::format_double(row.variance) << '\n';
  mgp::write_file(out_dir / "predictions.csv", csv.str());
  write_manifest(out_dir, "predict", bytes, 0, {"predictions.csv"});
  return 0;
}

mgp::ExperimentConfig experiment_config_from_json(const json& j) {
  mgp::require_keys(j, {"synth", "dataset", "inference", "sampler", "models", "metrics"},
                    "evaluate config");
  if (!j.contains("synth") && !j.contains("dataset"))
    throw mgp::ConfigError("evaluate config needs a 'synth' spec or a 'dataset' path");
  mgp::ExperimentConfig config;
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    mgp::require_keys(s,
                      {"n", "train_trials", "heldout_trials", "levels", "domain", "sigma2",
                       "kappa", "d0", "decay", "bandwidth_mode", "seed"},
                      "synth");
    config.n = s.value("n", config.n);
    config.train_trials = s.value("train_trials", config.train_trials);
    config.heldout_trials = s.value("heldout_trials", config.heldout_trials);
    config.true_levels = s.value("levels", config.true_levels);
    if (s.contains("domain")) config.domain = interval_from_json(s.at("domain"), "domain");
    config.true_sigma2 = s.value("sigma2", config.true_sigma2);
    config.true_kappa = s.value("kappa", config.true_kappa);
    config.true_d0 = s.value("d0", config.true_d0);
    config.decay = s.value("decay", config.decay);
    config.seed = s.value("seed", config.seed);
    if (s.value("bandwidth_mode", "fractal") == std::string("fixed"))
      config.bandwidth_mode = mgp::BandwidthMode::kFixed;
  } else {
    const json& d = j.at("dataset");
    mgp::require_keys(d, {"data", "truth", "heldout_trials"}, "dataset");
    if (!d.contains("data")) throw mgp::ConfigError("dataset config needs a 'data' path");
    config.dataset_path = d.at("data").get<std::string>();
    config.truth_path = d.value("truth", "");
    config.heldout_trials = d.value("heldout_trials", config.heldout_trials);
  }
  if (j.contains("inference")) {
    mgp::require_keys(j.at("inference"), {"mgp_levels"}, "inference");
    if (j.at("inference").contains("mgp_levels"))
      config.mgp_levels = j.at("inference").at("mgp_levels").get<std::vector<int>>();
  }
  if (j.contains("sampler")) config.sampler = sampler_from_json(j.at("sampler"));
  if (j.contains("models")) config.models = j.at("models").get<std::vector<std::string>>();
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    mgp::require_keys(m, {"taus", "horizon", "histogram_bins"}, "metrics");
    if (m.contains("taus")) config.taus = m.at("taus").get<std::vector<int>>();
    config.horizon = m.value("horizon", config.horizon);
    config.histogram_bins = m.value("histogram_bins", config.histogram_bins);
  }
  return config;
}

int cmd_evaluate(const std::string& config_path, std::optional<std::uint64_t> seed, int threads,
                 const fs::path& out_dir) {
  const std::string bytes = mgp::read_file(config_path);
  mgp::ExperimentConfig config = experiment_config_from_json(json::parse(bytes));
  if (seed) {
    config.seed = *seed;
    config.sampler.seed = *seed;
  }
  config.sampler.threads = threads;
  const mgp::MetricReport report = mgp::run_synthetic_experiment(config, &out_dir);
  std::cerr << "report written to " << (out_dir / "report.json").string() << "\n";
  for (const auto& m : report.models)
    std::cerr << m.name << ": heldout loglik " << m.heldout_loglik_mean << " (se "
              << m.heldout_loglik_se << "), f0 rmse " << m.f0_rmse << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiresolution Gaussian process toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_path, samples_path, heldout_path, method = "mh";
  std::string out_dir = ".";
  int levels = 2, tau = 1, horizon = 1, heldout_trial = 0;
  int threads = env_default_threads();
  std::optional<std::uint64_t> seed;
  std::uint64_t seed_raw = 0;
  bool seed_set = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads (default: MGP_THREADS or 1)");
    sub->add_flag_callback("--version", [] { std::cout << mgp::kVersion << "\n"; });
    auto* opt = sub->add_option("--seed", seed_raw, "seed override");
    opt->each([&](const std::string&) { seed_set = true; });
  };

  auto* simulate = app.add_subcommand("simulate", "draw a synthetic dataset");
  simulate->add_option("--config", config_path, "JSON spec")->required();
  add_common(simulate);

  auto* ncut = app.add_subcommand("ncut-segment", "greedy normalized-cut segmentation");
  ncut->add_option("--data", data_path, "trial CSV")->required();
  ncut->add_option("--levels", levels, "tree depth")->required();
  add_common(ncut);

  auto* fit = app.add_subcommand("fit", "sample partition trees from the posterior");
  fit->add_option("--data", data_path, "trial CSV")->required();
  fit->add_option("--config", config_path, "JSON fit config")->required();
  fit->add_option("--method", method, "mh or is")->check(CLI::IsMember({"mh", "is"}));
  add_common(fit);

  auto* predict = app.add_subcommand("predict", "tree-averaged predictive for a window");
  predict->add_option("--data", data_path, "training trial CSV")->required();
  predict->add_option("--samples", samples_path, "samples JSONL")->required();
  predict->add_option("--config", config_path, "JSON config with hyperparams")->required();
  predict->add_option("--tau", tau, "1-based window start")->required();
  predict->add_option("--horizon", horizon, "window length")->required();
  predict->add_option("--heldout", heldout_path, "CSV with the trial being predicted");
  predict->add_option("--heldout-trial", heldout_trial, "row in --heldout (default 0)");
  add_common(predict);

  auto* evaluate = app.add_subcommand("evaluate", "run the synthetic comparison study");
  evaluate->add_option("--config", config_path, "JSON experiment config")->required();
  add_common(evaluate);

  try {
    app.parse(argc, argv);
    if (seed_set) seed = seed_raw;
    if (simulate->parsed()) return cmd_simulate(config_path, seed, out_dir);
    if (ncut->parsed()) return cmd_ncut(data_path, levels, out_dir);
    if (fit->parsed()) return cmd_fit(data_path, config_path, method, seed, threads, out_dir);
    if (predict->parsed())
      return cmd_predict(data_path, samples_path, config_path, tau, horizon, heldout_path,
                         heldout_trial, out_dir);
    if (evaluate->parsed()) return cmd_evaluate(config_path, seed, threads, out_dir);
    return 2;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  } catch (const mgp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mgp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const mgp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
