#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "difflab/harness.hpp"
#include "difflab/instances.hpp"
#include "difflab/numerics.hpp"
#include "difflab/oracle.hpp"

using namespace difflab;

namespace {

double answer_set_mass(const TabularJoint& model, const std::vector<Sequence>& answers) {
  double mass = 0.0;
  for (const Sequence& a : answers) mass += std::exp(model.log_prob(a));
  return mass;
}

}  // namespace

TEST_CASE("dilemma task construction is deterministic and ordered") {
  const PlantedTask a = make_dilemma_task(Vocab(6), 4, 4, 0.85, 7);
  const PlantedTask b = make_dilemma_task(Vocab(6), 4, 4, 0.85, 7);
  CHECK((a.model.log_table() - b.model.log_table()).abs().maxCoeff() == 0.0);
  CHECK(a.answers == b.answers);
  REQUIRE(a.answers.size() == 4);

  const double dominant = std::exp(a.model.log_prob(a.answers[0]));
  double min_answer = dominant;
  for (int j = 1; j < 4; ++j) {
    const double m = std::exp(a.model.log_prob(a.answers[static_cast<std::size_t>(j)]));
    CHECK(m < dominant);
    min_answer = std::min(min_answer, m);
  }
  double max_other = 0.0;
  for (std::int64_t idx = 0; idx < a.model.log_table().size(); ++idx) {
    const Sequence x = Sequence::from_flat(idx, Vocab(6), 4);
    if (a.is_answer(x)) continue;
    max_other = std::max(max_other, std::exp(a.model.log_table()(idx)));
  }
  CHECK(min_answer > max_other);
}

TEST_CASE("two planted answers at high sharpness give a dominant mode above one half") {
  const PlantedTask t = make_dilemma_task(Vocab(6), 4, 2, 0.98, 11);
  const double first = std::exp(t.model.log_prob(t.answers[0]));
  const double second = std::exp(t.model.log_prob(t.answers[1]));
  CHECK(first > 0.5);
  CHECK(0.5 > second);
  CHECK(second > 0.0);
}

TEST_CASE("degenerate single-answer task flattens the pass@k curve") {
  const PlantedTask t = make_dilemma_task(Vocab(4), 3, 1, 0.9, 3);
  REQUIRE(t.answers.size() == 1);

  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.task = TaskSpec{4, 3, 1, 0.9, 3};
  cfg.samples_per_problem = 8;
  cfg.k_grid = {1, 2, 4, 8};
  PolicyConfig conf{"confidence", "confidence", std::nullopt, {0.05}, {}, {}, {}, {}};
  cfg.policies = {conf};
  const ExperimentReport report = run_experiment(cfg);
  const ReportRow& row = report.rows.front();
  // near-deterministic sampling: all samples identical, curve flat
  CHECK(row.empirical_entropy == 0.0);
  for (double v : row.passk.aggregate)
    CHECK(v == doctest::Approx(row.passk.aggregate.front()).epsilon(1e-12));
}

TEST_CASE("infeasible mass allocations are rejected") {
  CHECK_THROWS_AS(make_dilemma_task(Vocab(6), 4, 4, 0.3, 7), std::invalid_argument);
  CHECK_THROWS_AS(make_dilemma_task(Vocab(6), 4, 0, 0.9, 7), std::invalid_argument);
  CHECK_THROWS_AS(make_dilemma_task(Vocab(6), 4, 4, 1.0, 7), std::invalid_argument);
}

TEST_CASE("tempering shifts answer-set mass monotonically, down to uniform") {
  const PlantedTask t = make_dilemma_task(Vocab(6), 4, 4, 0.85, 7);
  const double at_zero = answer_set_mass(temper(t.model, 0.0).tempered, t.answers);
  CHECK(at_zero == doctest::Approx(4.0 / 1296.0).epsilon(1e-10));
  double prev = at_zero;
  for (double alpha : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double mass = answer_set_mass(temper(t.model, alpha).tempered, t.answers);
    CHECK(mass > prev);
    prev = mass;
  }
}

TEST_CASE("config parsing is strict and round-trips") {
  const nlohmann::json good = {
      {"schema_version", 1},
      {"seed", 9},
      {"task", {{"vocab", 5}, {"length", 3}, {"answers", 2}, {"sharpness", 0.9}, {"seed", 2}}},
      {"problems", "per-answer"},
      {"samples_per_problem", 16},
      {"k_grid", {1, 4, 16}},
      {"policies",
       {{{"name", "rnd"}, {"kind", "random"}, {"tau", {1.0}}},
        {{"name", "imh"}, {"kind", "imh"}, {"alpha", {0.5, 2.0}}, {"proposals", {4}}}}}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(good);
  CHECK(cfg.task.vocab == 5);
  CHECK(cfg.policies.size() == 2);
  const ExperimentConfig round = ExperimentConfig::from_json(cfg.to_json());
  CHECK(round.to_json().dump() == cfg.to_json().dump());

  nlohmann::json unknown_top = good;
  unknown_top["extra"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(unknown_top), std::invalid_argument);

  nlohmann::json unknown_task = good;
  unknown_task["task"]["mystery"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(unknown_task), std::invalid_argument);

  nlohmann::json unknown_policy = good;
  unknown_policy["policies"][0]["oops"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(unknown_policy), std::invalid_argument);

  nlohmann::json k_too_big = good;
  k_too_big["k_grid"] = {1, 32};
  CHECK_THROWS_AS(ExperimentConfig::from_json(k_too_big), std::invalid_argument);

  nlohmann::json bad_mode = good;
  bad_mode["policies"][0]["mode"] = "sample-then-filter";  // random has no mode
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad_mode), std::invalid_argument);
}

TEST_CASE("experiments are deterministic across thread counts") {
  ExperimentConfig cfg;
  cfg.seed = 31;
  cfg.task = TaskSpec{5, 3, 3, 0.85, 13};
  cfg.samples_per_problem = 12;
  cfg.k_grid = {1, 4, 8};
  PolicyConfig rnd{"random", "random", std::nullopt, {1.0}, {}, {}, {}, {}};
  PolicyConfig imh{"imh", "imh", std::nullopt, {}, {}, {1.5}, {4}, {}};
  cfg.policies = {rnd, imh};

  const ExperimentReport a = run_experiment(cfg, 1);
  const ExperimentReport b = run_experiment(cfg, 4);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.config_hash == config_hash(cfg));

  // pass@k curves nondecreasing in k for every row
  for (const ReportRow& row : a.rows)
    for (std::size_t i = 1; i < row.passk.aggregate.size(); ++i)
      CHECK(row.passk.aggregate[i] >= row.passk.aggregate[i - 1] - 1e-15);
}

TEST_CASE("union-mode pass@1 recovers the answer-set mass of the joint") {
  ExperimentConfig cfg;
  cfg.seed = 77;
  cfg.task = TaskSpec{6, 4, 4, 0.85, 7};
  cfg.problems = "union";
  cfg.samples_per_problem = 64;
  cfg.k_grid = {1};
  PolicyConfig rnd{"random", "random", std::nullopt, {1.0}, {}, {}, {}, {}};
  cfg.policies = {rnd};
  const ExperimentReport report = run_experiment(cfg, 2);

  const PlantedTask task = make_dilemma_task(Vocab(6), 4, 4, 0.85, 7);
  const double mass = answer_set_mass(task.model, task.answers);
  const double margin = worst_case_margin(1, 64, 1);
  CHECK(std::abs(report.rows.front().passk.value_at(1) - mass) <= margin);
}

TEST_CASE("gated policies keep empirical entropy under the cap on gateable models") {
  RngStream gen(41);
  const double delta = 0.15;
  const TabularJoint model = gateable_mixture(Vocab(4), 3, delta, gen);
  const double cap = 3 * gate_entropy(delta, Vocab(4));

  std::map<std::int64_t, int> counts;
  RngStream root(42);
  const int runs = 5000;
  for (int i = 0; i < runs; ++i) {
    RngStream rng = root.split(static_cast<std::uint64_t>(i));
    const DecodeResult res = gated_decode(model, delta, rng);
    REQUIRE_FALSE(res.trajectory.gate_violated());
    ++counts[res.sequence.flat_index(Vocab(4))];
  }
  double h = 0.0;
  for (const auto& [idx, c] : counts) {
    (void)idx;
    const double f = static_cast<double>(c) / runs;
    h -= f * std::log(f);
  }
  const double mc_error = static_cast<double>(counts.size() - 1) / (2.0 * runs);
  CHECK(h <= cap + mc_error);
}

TEST_CASE("experiment outputs land on disk and parse back") {
  ExperimentConfig cfg;
  cfg.seed = 51;
  cfg.task = TaskSpec{4, 3, 2, 0.9, 19};
  cfg.samples_per_problem = 6;
  cfg.k_grid = {1, 2};
  PolicyConfig rnd{"random", "random", std::nullopt, {1.0}, {}, {}, {}, {}};
  cfg.policies = {rnd};

  std::vector<SampleRecord> trajectories;
  const ExperimentReport report = run_experiment(cfg, 1, &trajectories);
  CHECK(trajectories.size() == 2u * 6u);

  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "difflab_test_outputs";
  std::filesystem::remove_all(dir);
  write_experiment_outputs(dir, cfg, report, &trajectories);
  CHECK(std::filesystem::exists(dir / "config.json"));
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "passk.csv"));
  CHECK(std::filesystem::exists(dir / "trajectories.jsonl"));

  std::ifstream f(dir / "report.json");
  nlohmann::json parsed;
  f >> parsed;
  CHECK(parsed.at("schema_version").get<int>() == 1);
  CHECK(parsed.at("rows").size() == report.rows.size());

  std::ifstream csv(dir / "passk.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "policy,problem_id,n,c,k,pass_at_k");
  std::filesystem::remove_all(dir);
}

TEST_CASE("config hashes separate distinct configs") {
  ExperimentConfig a;
  a.seed = 1;
  a.task = TaskSpec{4, 3, 2, 0.9, 1};
  a.samples_per_problem = 4;
  a.k_grid = {1};
  PolicyConfig rnd{"random", "random", std::nullopt, {1.0}, {}, {}, {}, {}};
  a.policies = {rnd};
  ExperimentConfig b = a;
  b.seed = 2;
  CHECK(config_hash(a) == config_hash(a));
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("validation suite passes on a fresh build and serializes") {
  const ValidationReport report = validate_suite();
  for (const ValidationCheck& c : report.checks) {
    INFO(c.name, " measured=", c.measured);
    CHECK(c.pass);
  }
  CHECK(report.all_pass());
  const nlohmann::json j = report.to_json();
  CHECK(j.at("all_pass").get<bool>());
  CHECK(j.at("checks").size() == report.checks.size());
  std::ostringstream out;
  report.print(out);
  CHECK(out.str().find("all checks passed") != std::string::npos);
}
