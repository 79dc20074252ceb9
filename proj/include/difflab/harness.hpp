#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "difflab/decoding.hpp"
#include "difflab/metrics.hpp"
#include "difflab/model.hpp"
#include "difflab/tempering.hpp"

namespace difflab {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Synthetic task: a tabular joint with a planted set of correct sequences.
/// The first answer carries a dominant single mode; the rest carry moderate
/// mass, so mode-seeking decoders look strong at Pass@1 but starve Pass@k.
struct PlantedTask {
  TabularJoint model;
  std::vector<Sequence> answers;  // answers[0] is the dominant one
  nlohmann::json params;

  bool is_answer(const Sequence& x) const;
};

PlantedTask make_dilemma_task(Vocab vocab, int length, int num_answers, double sharpness,
                              std::uint64_t seed);

struct TaskSpec {
  int vocab = 6;
  int length = 4;
  int num_answers = 4;
  double sharpness = 0.85;
  std::uint64_t seed = 7;
};

/// One configured policy with its parameter sweep grid.
struct PolicyConfig {
  std::string name;
  std::string kind;  // random | confidence | entropy | margin | gated | imh
  std::optional<std::string> mode;  // sample-then-filter | rank-then-sample
  std::vector<double> tau{1.0};     // baselines
  std::vector<double> delta;        // gated
  std::vector<double> alpha{1.0};   // imh
  std::vector<int> proposals{8};    // imh chain length
  std::optional<int> window;        // imh correction window
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  TaskSpec task;
  std::string problems = "per-answer";  // per-answer | union
  int samples_per_problem = 64;
  std::vector<int> k_grid{1, 2, 4, 8, 16};
  std::vector<PolicyConfig> policies;

  /// Strict parse: unknown keys anywhere are errors.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig dilemma_default();
  nlohmann::json to_json() const;
  void validate() const;
};

/// One policy at one parameter point.
struct ReportRow {
  std::string policy;
  std::string kind;
  nlohmann::json params;
  PassAtKReport passk;
  double genppl_value;
  double empirical_entropy;      // plug-in entropy of the sampled sequences
  double entropy_mc_error;       // Miller-Madow bias bound recorded alongside
  double b_eff;                  // exp(empirical_entropy / L)
  nlohmann::json diagnostics;    // IMH rows only, null otherwise
};

struct ExperimentReport {
  std::string artifact_version;
  std::string config_hash;
  std::uint64_t seed;
  nlohmann::json task_summary;
  std::vector<ReportRow> rows;

  const ReportRow& row(const std::string& policy_name) const;
  nlohmann::json to_json() const;
};

/// Optional per-sample capture for trajectory emission.
struct SampleRecord {
  std::string policy;
  int problem;
  int sample;
  nlohmann::json line;
};

ExperimentReport run_experiment(const ExperimentConfig& config, int jobs = 1,
                                std::vector<SampleRecord>* trajectory_sink = nullptr);

/// Writes config.json, report.json, passk.csv and (optionally)
/// trajectories.jsonl into out_dir.
void write_experiment_outputs(const std::filesystem::path& out_dir,
                              const ExperimentConfig& config, const ExperimentReport& report,
                              const std::vector<SampleRecord>* trajectories);

/// 64-bit FNV-1a of the canonical config serialization, as hex.
std::string config_hash(const ExperimentConfig& config);

struct ValidationCheck {
  std::string name;
  double measured;
  double threshold;
  std::string relation;  // e.g. "<=", ">=", "in [2.09, 2.10]"
  bool pass;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool all_pass() const;
  nlohmann::json to_json() const;
  void print(std::ostream& out) const;
};

/// Runs the fast oracle-vs-method consistency suite.
ValidationReport validate_suite();

}  // namespace difflab
