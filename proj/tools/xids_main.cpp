// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>

#include "xids/config.hpp"
#include "xids/errors.hpp"
#include "xids/pipeline.hpp"
#include "xids/synthetic.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::optional<int> steps;
  std::optional<std::size_t> top_k;
  std::string work_dir;
  std::string input;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Run config (JSON)");
  cmd->add_option("--seed", f.seed, "Override the run seed");
  cmd->add_option("--work-dir", f.work_dir, "Override the work directory");
}

xids::RunConfig resolve(const Flags& f) {
  xids::RunConfig cfg = f.config.empty() ? xids::RunConfig{} : xids::load_run_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.work_dir.empty()) cfg.work_dir = f.work_dir;
  if (!f.input.empty()) cfg.input_csv = f.input;
  if (!f.variant.empty()) cfg.variants = {xids::attention_variant_from_string(f.variant)};
  if (f.steps) cfg.attribution.steps = *f.steps;
  if (f.top_k) cfg.report.top_k = *f.top_k;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer intrusion-detection pipeline with integrated-gradients attribution"};
  app.require_subcommand(1);
  Flags f;

  auto* prepare = app.add_subcommand("prepare", "Parse, deduplicate, split, and audit the input CSV");
  add_common(prepare, f);
  prepare->add_option("--input", f.input, "Input flow CSV (overrides input_csv)");

  auto* train = app.add_subcommand("train", "Train one or all configured attention variants");
  auto* evaluate = app.add_subcommand("evaluate", "Test-split metrics for trained checkpoints");
  auto* explain = app.add_subcommand("explain", "Integrated-gradients heatmaps over the test split");
  for (auto* cmd : {train, evaluate, explain}) {
    add_common(cmd, f);
    cmd->add_option("--variant", f.variant, "absolute or disentangled (default: all configured)")
        ->check(CLI::IsMember({"absolute", "disentangled"}));
  }
  explain->add_option("--steps", f.steps, "Integration steps");
  explain->add_option("--top-k", f.top_k, "Heatmap columns");

  auto* report = app.add_subcommand("report", "Combine stage artifacts into report.md");
  add_common(report, f);

  auto* run = app.add_subcommand("run", "prepare, train, evaluate, explain, and report in sequence");
  add_common(run, f);
  run->add_option("--input", f.input, "Input flow CSV (overrides input_csv)");
  run->add_option("--variant", f.variant, "absolute or disentangled (default: all configured)")
      ->check(CLI::IsMember({"absolute", "disentangled"}));
  run->add_option("--steps", f.steps, "Integration steps");
  run->add_option("--top-k", f.top_k, "Heatmap columns");

  auto* synth = app.add_subcommand("synth", "Write the synthetic test fixture as a flow CSV");
  std::string synth_out;
  xids::SyntheticOptions synth_opts;
  synth->add_option("--out", synth_out, "Output CSV path")->required();
  synth->add_option("--flows", synth_opts.flows, "Number of flows")->capture_default_str();
  synth->add_option("--seed", synth_opts.seed, "Fixture seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : xids::exit_code(xids::ErrorKind::Config);
  }

  const xids::Style style = xids::Style::detect();
  try {
    if (synth->parsed()) {
      const auto fx = xids::generate_synthetic_flows(synth_opts);
      std::ofstream out(synth_out, std::ios::binary | std::ios::trunc);
      if (!out) throw xids::IoError("cannot write " + synth_out);
      xids::write_flow_csv(out, fx.dataset);
      if (!out) throw xids::IoError("write failed: " + synth_out);
      std::cout << "wrote " << fx.dataset.size() << " synthetic flows to " << synth_out << "\n";
      return 0;
    }
    const xids::RunConfig cfg = resolve(f);
    auto& out = std::cout;
    if (prepare->parsed() || run->parsed()) xids::cmd_prepare(cfg, out, style);
    if (train->parsed() || run->parsed()) {
      for (auto v : cfg.variants) xids::cmd_train(cfg, v, out, style);
    }
    if (evaluate->parsed() || run->parsed()) {
      for (auto v : cfg.variants) xids::cmd_evaluate(cfg, v, out, style);
    }
    if (explain->parsed() || run->parsed()) {
      for (auto v : cfg.variants) xids::cmd_explain(cfg, v, out, style);
    }
    if (report->parsed() || run->parsed()) xids::cmd_report(cfg, out, style);
    return 0;
  } catch (const xids::Error& e) {
    std::cerr << "xids: " << style.bad("error") << ": " << e.what() << "\n";
    return xids::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "xids: internal error: " << e.what() << "\n";
    return 1;
  }
}
