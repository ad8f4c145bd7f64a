// SPDX-License-Identifier: Apache-2.0
// Command-line driver: one subcommand per pipeline stage plus run-all and
// export-plots. Errors are printed to stderr as a single JSON line.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pmu_sentinel/pipeline.hpp"

namespace {

using pmu::pipeline::Json;
using pmu::pipeline::RunConfig;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const Options& o) {
  if (o.config.empty()) throw pmu::ParameterError("--config is required");
  RunConfig cfg = RunConfig::from_json(pmu::pipeline::read_json(o.config));
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output = o.out;
  if (cfg.output.empty()) throw pmu::ParameterError("no output directory (--out or config.output)");
  return cfg;
}

void print_error(const std::string& kind, const std::string& command, const std::string& msg) {
  std::cerr << Json{{"error", kind}, {"command", command}, {"message", msg}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PMU anomaly detection pipeline"};
  app.require_subcommand(1);

  Options opts;
  std::string run_dir;
  using Stage = std::function<void(const RunConfig&, const std::filesystem::path&)>;
  const std::vector<std::pair<std::string, Stage>> stages{
      {"synth", pmu::pipeline::stage_synth},
      {"ingest", pmu::pipeline::stage_ingest},
      {"preprocess", pmu::pipeline::stage_preprocess},
      {"inject", pmu::pipeline::stage_inject},
      {"train", pmu::pipeline::stage_train},
      {"detect", pmu::pipeline::stage_detect},
      {"eval", pmu::pipeline::stage_eval},
      {"run-all", [](const RunConfig& c, const std::filesystem::path& d) {
         pmu::pipeline::run_all(c, d);
       }}};

  std::string selected;
  Stage action;
  for (const auto& [name, fn] : stages) {
    CLI::App* sub = app.add_subcommand(name, "Run the " + name + " stage");
    sub->add_option("--config", opts.config, "Run config (JSON) or a manifest.json")->required();
    sub->add_option("--seed", opts.seed, "Override the master seed");
    sub->add_option("--out", opts.out, "Run directory");
    sub->callback([&, name = name, fn = fn] {
      selected = name;
      action = fn;
    });
  }
  CLI::App* plots = app.add_subcommand("export-plots", "Write plot-ready CSVs for a run");
  plots->add_option("run_dir", run_dir, "Run directory")->required();
  plots->callback([&] { selected = "export-plots"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", selected, e.what());
    return 2;
  }

  try {
    if (selected == "export-plots") {
      pmu::pipeline::export_plots(run_dir);
      std::cout << Json{{"command", selected}, {"out", run_dir + "/plots"}}.dump() << "\n";
      return 0;
    }
    const RunConfig cfg = load_config(opts);
    action(cfg, cfg.output);
    std::cout << Json{{"command", selected}, {"out", cfg.output}}.dump() << "\n";
    return 0;
  } catch (const pmu::Error& e) {
    print_error(e.kind(), selected, e.what());
  } catch (const std::exception& e) {
    print_error("internal", selected, e.what());
  }
  return 1;
}
