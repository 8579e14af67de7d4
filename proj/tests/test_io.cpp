#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "mgp/io.hpp"
#include "oracles.hpp"

using mgp::json;
using mgp::PartitionTree;
using mgp::TrialSet;

TEST_CASE("doubles format to shortest round-trip decimals", "[io]") {
  std::mt19937_64 rng(401);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, 0.0, -0.0, 5.0}) {
    CHECK(mgp::parse_double(mgp::format_double(v), "test") == v);
  }
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(gauss(rng), static_cast<int>(rng() % 64) - 32);
    CHECK(mgp::parse_double(mgp::format_double(v), "test") == v);
  }
  CHECK(mgp::format_double(0.1) == "0.1");
  CHECK_THROWS_AS(mgp::parse_double("1.2x", "test"), mgp::DataError);
}

TEST_CASE("tree json round trip is exact", "[io]") {
  std::mt19937_64 rng(403);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd locs = oracle::random_locations(8, {0.0, 1.0}, rng);
    const auto tree = oracle::random_tree(locs, {0.0, 1.0}, 3, rng);
    const json j = json::parse(mgp::tree_to_json(tree).dump());
    CHECK(mgp::tree_from_json(j) == tree);
  }
  CHECK_THROWS_AS(mgp::tree_from_json(json{{"L", 2}, {"domain", {0.0, 1.0}}}),
                  mgp::ConfigError);
  CHECK_THROWS_AS(mgp::tree_from_json(json{{"L", 2},
                                           {"domain", {0.0, 1.0}},
                                           {"cuts", json::array()},
                                           {"extra", 1}}),
                  mgp::ConfigError);
}

TEST_CASE("hyperparams json round trip and schema", "[io]") {
  mgp::Hyperparams theta;
  theta.d = {1.25, 0.375};
  theta.kappa = 10.0;
  theta.sigma2 = 0.1;
  theta.bandwidth_mode = mgp::BandwidthMode::kFixed;
  const auto back = mgp::hyperparams_from_json(json::parse(mgp::hyperparams_to_json(theta).dump()));
  CHECK(back.d == theta.d);
  CHECK(back.kappa == theta.kappa);
  CHECK(back.sigma2 == theta.sigma2);
  CHECK(back.bandwidth_mode == theta.bandwidth_mode);

  json bad = mgp::hyperparams_to_json(theta);
  bad["bandwidth_mode"] = "banana";
  CHECK_THROWS_AS(mgp::hyperparams_from_json(bad), mgp::ConfigError);
  json extra = mgp::hyperparams_to_json(theta);
  extra["unknown"] = 1;
  CHECK_THROWS_AS(mgp::hyperparams_from_json(extra), mgp::ConfigError);
}

TEST_CASE("trial csv round trip", "[io]") {
  std::mt19937_64 rng(405);
  const Eigen::VectorXd locs = oracle::random_locations(6, {0.0, 1.0}, rng);
  const TrialSet data(locs, oracle::random_trials(6, 4, rng));
  std::ostringstream os;
  mgp::write_trials_csv(os, data);
  std::istringstream is(os.str());
  const TrialSet back = mgp::read_trials_csv(is);
  CHECK(back.locations == data.locations);
  CHECK(back.trials == data.trials);

  std::istringstream bad_header("y,1,2\ntrial_1,0,0\n");
  CHECK_THROWS_AS(mgp::read_trials_csv(bad_header), mgp::DataError);
  std::istringstream ragged("x,0.1,0.2\ntrial_1,1.0\n");
  CHECK_THROWS_AS(mgp::read_trials_csv(ragged), mgp::DataError);
  std::istringstream no_rows("x,0.1,0.2\n");
  CHECK_THROWS_AS(mgp::read_trials_csv(no_rows), mgp::DataError);
}

TEST_CASE("samples jsonl round trip", "[io]") {
  std::mt19937_64 rng(407);
  const Eigen::VectorXd locs = oracle::random_locations(6, {0.0, 1.0}, rng);
  std::vector<mgp::PosteriorSample> samples;
  for (int i = 0; i < 5; ++i) {
    const auto tree = oracle::random_tree(locs, {0.0, 1.0}, 2, rng);
    samples.push_back({tree, nullptr, -12.5 + i, -1.0, -3.5, 0.2});
  }
  std::ostringstream os;
  mgp::write_samples_jsonl(os, samples);
  std::istringstream is(os.str());
  const auto back = mgp::read_samples_jsonl(is);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].tree == samples[i].tree);
    CHECK(back[i].log_likelihood == samples[i].log_likelihood);
    CHECK(back[i].weight == samples[i].weight);
  }
}

TEST_CASE("prior json forms", "[io]") {
  const auto uniform = mgp::prior_from_json(json{{"type", "uniform"}}, {0.0, 2.0});
  CHECK(uniform.density(1.0) == Catch::Approx(0.5));
  const auto piecewise = mgp::prior_from_json(
      json{{"type", "piecewise"}, {"edges", {0.0, 0.5, 1.0}}, {"weights", {3.0, 1.0}}},
      {0.0, 1.0});
  CHECK(piecewise.density(0.1) == Catch::Approx(1.5));
  CHECK_THROWS_AS(mgp::prior_from_json(json{{"type", "unknown"}}, {0.0, 1.0}),
                  mgp::ConfigError);
  CHECK_THROWS_AS(mgp::prior_from_json(json{{"type", "uniform"}, {"oops", 1}}, {0.0, 1.0}),
                  mgp::ConfigError);
}

TEST_CASE("histogram and boundary writers", "[io]") {
  mgp::Histogram h;
  h.edges = {0.0, 0.5, 1.0};
  h.mass = {0.25, 0.75};
  std::ostringstream os;
  mgp::write_histogram_csv(os, h);
  CHECK(os.str() == "bin_lo,bin_hi,mass\n0,0.5,0.25\n0.5,1,0.75\n");

  const auto tree = PartitionTree::from_cuts({0.0, 1.0}, 2, {{1, 0.5}});
  std::ostringstream bs;
  mgp::write_boundaries_csv(bs, tree);
  CHECK(bs.str() == "level,set_index,lo,hi\n0,0,0,1\n1,0,0,0.5\n1,1,0.5,1\n");
}

TEST_CASE("config hashing is deterministic", "[io]") {
  CHECK(mgp::fnv1a_hex("abc") == mgp::fnv1a_hex("abc"));
  CHECK(mgp::fnv1a_hex("abc") != mgp::fnv1a_hex("abd"));
  CHECK(mgp::fnv1a_hex("").size() == 16);
}
