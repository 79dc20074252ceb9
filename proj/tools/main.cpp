#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "difflab/decoding.hpp"
#include "difflab/gating.hpp"
#include "difflab/harness.hpp"
#include "difflab/metrics.hpp"
#include "difflab/model.hpp"
#include "difflab/tempering.hpp"

namespace {

using namespace difflab;

int run_validate(const std::string& json_path) {
  const ValidationReport report = validate_suite();
  report.print(std::cout);
  if (!json_path.empty()) {
    std::ofstream f(json_path);
    f << report.to_json().dump(2) << '\n';
  }
  return report.all_pass() ? 0 : 2;
}

struct BoundsOptions {
  std::vector<double> deltas, epsilons, gammas;
  int vocab = 0;
  int length = 1;
  bool csv = false;
  bool bits = false;
};

int run_bounds(const BoundsOptions& opt) {
  const Vocab vocab(opt.vocab);
  struct Row {
    const char* kind;
    double input;
    double delta;
  };
  std::vector<Row> rows;
  for (double d : opt.deltas) rows.push_back({"delta", d, d});
  for (double e : opt.epsilons) rows.push_back({"epsilon", e, delta_from_entropy(e, vocab)});
  for (double g : opt.gammas) rows.push_back({"gamma", g, delta_from_margin(g, vocab)});
  if (rows.empty()) throw std::invalid_argument("bounds: provide --delta, --epsilon or --gamma values");

  const double scale = opt.bits ? 1.0 / std::log(2.0) : 1.0;
  const char* unit = opt.bits ? "bits" : "nats";
  if (opt.csv) {
    std::cout << "input_kind,input,delta,h_v_" << unit << ",entropy_cap_" << unit << ",b_eff_bound\n";
    for (const Row& r : rows) {
      const GateBounds b = entropy_cap(opt.length, r.delta, vocab);
      std::cout << r.kind << ',' << r.input << ',' << r.delta << ',' << b.h_gate * scale << ','
                << b.entropy_cap * scale << ',' << b.b_eff_bound << '\n';
    }
  } else {
    std::cout << std::left << std::setw(10) << "input" << std::setw(12) << "value"
              << std::setw(12) << "delta" << std::setw(14) << (std::string("h_V (") + unit + ")")
              << std::setw(16) << (std::string("cap (") + unit + ")") << "B_eff bound\n";
    for (const Row& r : rows) {
      const GateBounds b = entropy_cap(opt.length, r.delta, vocab);
      std::cout << std::left << std::setw(10) << r.kind << std::setw(12) << r.input
                << std::setw(12) << r.delta << std::setw(14) << b.h_gate * scale << std::setw(16)
                << b.entropy_cap * scale << b.b_eff_bound << '\n';
    }
  }
  return 0;
}

struct DecodeOptions {
  std::string model_path;
  TaskSpec task;
  std::string policy = "entropy";
  std::string mode;
  double tau = 1.0;
  double delta = 0.1;
  double alpha = 1.0;
  int proposals = 8;
  std::optional<int> window;
  std::uint64_t seed = 1;
};

int run_decode(const DecodeOptions& opt) {
  std::optional<TabularJoint> model;
  if (!opt.model_path.empty()) {
    std::ifstream f(opt.model_path);
    if (!f) throw std::invalid_argument("decode: cannot open model file " + opt.model_path);
    nlohmann::json j;
    f >> j;
    model = TabularJoint::from_json(j);
  } else {
    model = make_dilemma_task(Vocab(opt.task.vocab), opt.task.length, opt.task.num_answers,
                              opt.task.sharpness, opt.task.seed)
                .model;
  }
  RngStream rng = RngStream(opt.seed).split("decode-cli");

  nlohmann::json out;
  if (opt.policy == "imh") {
    const TemperingParams params{opt.alpha, opt.proposals, opt.window};
    const ImhDecodeResult res = imh_decode(*model, params, rng);
    out = {{"sequence", res.sequence.tokens()},
           {"trajectory", res.trajectory.to_json()},
           {"diagnostics", res.diagnostics.to_json()}};
  } else {
    DecodePolicy policy;
    if (opt.policy == "random") {
      policy = DecodePolicy::random(opt.tau);
    } else if (opt.policy == "confidence") {
      policy = DecodePolicy::confidence(opt.tau);
    } else if (opt.policy == "entropy") {
      policy = DecodePolicy::entropy(opt.tau);
    } else if (opt.policy == "margin") {
      policy = DecodePolicy::margin(opt.tau);
    } else if (opt.policy == "gated") {
      policy = DecodePolicy::gated(opt.delta);
    } else {
      throw std::invalid_argument("decode: unknown policy '" + opt.policy + "'");
    }
    if (!opt.mode.empty()) {
      if (opt.mode == "sample-then-filter")
        policy.mode = SelectionMode::kSampleThenFilter;
      else if (opt.mode == "rank-then-sample")
        policy.mode = SelectionMode::kRankThenSample;
      else
        throw std::invalid_argument("decode: unknown mode '" + opt.mode + "'");
    }
    const DecodeResult res = decode(policy, *model, rng);
    out = {{"sequence", res.sequence.tokens()}, {"trajectory", res.trajectory.to_json()}};
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct SweepOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool emit_trajectories = false;
};

int run_sweep(const SweepOptions& opt) {
  std::ifstream f(opt.config_path);
  if (!f) throw std::invalid_argument("sweep: cannot open config " + opt.config_path);
  nlohmann::json j;
  f >> j;
  ExperimentConfig config = ExperimentConfig::from_json(j);
  if (opt.seed.has_value()) config.seed = *opt.seed;

  std::vector<SampleRecord> trajectories;
  ExperimentReport report =
      run_experiment(config, opt.jobs, opt.emit_trajectories ? &trajectories : nullptr);
  write_experiment_outputs(opt.out_dir, config, report,
                           opt.emit_trajectories ? &trajectories : nullptr);

  std::cout << "wrote " << opt.out_dir << " (" << report.rows.size() << " policy rows, config hash "
            << report.config_hash << ")\n";
  for (const ReportRow& row : report.rows) {
    std::cout << "  " << std::left << std::setw(28) << row.policy;
    for (std::size_t i = 0; i < row.passk.k_grid.size(); ++i)
      std::cout << " pass@" << row.passk.k_grid[i] << "=" << std::setprecision(4)
                << row.passk.aggregate[i];
    std::cout << '\n';
  }
  return 0;
}

int run_passk_bounds(bool csv) {
  struct Entry {
    int m, n, k;
  };
  const Entry entries[] = {{974, 128, 32}, {500, 128, 32}, {164, 128, 32}, {30, 128, 32},
                           {974, 32, 16},  {500, 32, 16},  {164, 32, 16}};
  if (csv) {
    std::cout << "problems,n,k,margin_pct\n";
    for (const Entry& e : entries)
      std::cout << e.m << ',' << e.n << ',' << e.k << ','
                << 100.0 * worst_case_margin(e.m, e.n, e.k) << '\n';
  } else {
    std::cout << std::left << std::setw(10) << "problems" << std::setw(7) << "n" << std::setw(7)
              << "k" << "worst-case 95% margin\n";
    for (const Entry& e : entries)
      std::cout << std::left << std::setw(10) << e.m << std::setw(7) << e.n << std::setw(7) << e.k
                << "+/- " << std::setprecision(3) << 100.0 * worst_case_margin(e.m, e.n, e.k)
                << "%\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale decoding laboratory for masked sequence models"};
  app.require_subcommand(1);

  std::string validate_json;
  CLI::App* validate = app.add_subcommand("validate", "run the invariant suite");
  validate->add_option("--json", validate_json, "also write the report as JSON");

  BoundsOptions bounds;
  CLI::App* bounds_cmd = app.add_subcommand("bounds", "gate thresholds and entropy caps");
  bounds_cmd->add_option("--delta", bounds.deltas, "confidence thresholds");
  bounds_cmd->add_option("--epsilon", bounds.epsilons, "entropy thresholds (nats)");
  bounds_cmd->add_option("--gamma", bounds.gammas, "margin thresholds");
  bounds_cmd->add_option("--vocab", bounds.vocab, "vocabulary size")->required();
  bounds_cmd->add_option("--length", bounds.length, "sequence length for the cap");
  bounds_cmd->add_flag("--csv", bounds.csv, "emit CSV");
  bounds_cmd->add_flag("--bits", bounds.bits, "display entropies in bits");

  DecodeOptions dec;
  CLI::App* decode_cmd = app.add_subcommand("decode", "run one decode and print the trajectory");
  decode_cmd->add_option("--model", dec.model_path, "model JSON (table or markov shape)");
  decode_cmd->add_option("--vocab", dec.task.vocab, "dilemma task vocabulary");
  decode_cmd->add_option("--length", dec.task.length, "dilemma task length");
  decode_cmd->add_option("--answers", dec.task.num_answers, "dilemma planted answers");
  decode_cmd->add_option("--sharpness", dec.task.sharpness, "dilemma sharpness");
  decode_cmd->add_option("--task-seed", dec.task.seed, "dilemma construction seed");
  decode_cmd->add_option("--policy", dec.policy, "random|confidence|entropy|margin|gated|imh");
  decode_cmd->add_option("--mode", dec.mode, "sample-then-filter|rank-then-sample");
  decode_cmd->add_option("--tau", dec.tau, "local temperature");
  decode_cmd->add_option("--delta", dec.delta, "gate threshold (gated policy)");
  decode_cmd->add_option("--alpha", dec.alpha, "global exponent (imh)");
  decode_cmd->add_option("--T", dec.proposals, "chain length (imh)");
  int window_flag = 0;
  CLI::Option* window_opt = decode_cmd->add_option("--window", window_flag, "correction window (imh)");
  decode_cmd->add_option("--seed", dec.seed, "random seed");

  SweepOptions sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a configured experiment");
  sweep_cmd->add_option("--config", sweep.config_path, "experiment config JSON")->required();
  std::uint64_t sweep_seed = 0;
  CLI::Option* seed_opt = sweep_cmd->add_option("--seed", sweep_seed, "override the config seed");
  sweep_cmd->add_option("--out", sweep.out_dir, "output directory")->required();
  sweep_cmd->add_option("--jobs", sweep.jobs, "worker threads");
  sweep_cmd->add_flag("--emit-trajectories", sweep.emit_trajectories, "write trajectories.jsonl");

  bool passk_csv = false;
  CLI::App* passk_cmd = app.add_subcommand("passk-bounds", "worst-case estimator margins");
  passk_cmd->add_flag("--csv", passk_csv, "emit CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (validate->parsed()) return run_validate(validate_json);
    if (bounds_cmd->parsed()) return run_bounds(bounds);
    if (decode_cmd->parsed()) {
      if (window_opt->count() > 0) dec.window = window_flag;
      return run_decode(dec);
    }
    if (sweep_cmd->parsed()) {
      if (seed_opt->count() > 0) sweep.seed = sweep_seed;
      return run_sweep(sweep);
    }
    if (passk_cmd->parsed()) return run_passk_bounds(passk_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
