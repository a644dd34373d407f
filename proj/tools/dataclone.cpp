#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <vector>

#include "dataclone/config.hpp"
#include "dataclone/errors.hpp"
#include "dataclone/pipeline.hpp"
#include "dataclone/report.hpp"

namespace {

using dataclone::Error;
using dataclone::ErrorCode;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingDep = 3;
constexpr int kExitRuntime = 4;

int exit_code_for(const Error& err) {
  switch (err.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidRate:
    case ErrorCode::UnresolvedSpec:
    case ErrorCode::InvalidProfile:
    case ErrorCode::EmptyProfile:
    case ErrorCode::InvalidFraction:
    case ErrorCode::InvalidHParams:
      return kExitConfig;
    case ErrorCode::MissingDependency:
      return kExitMissingDep;
    default:
      return kExitRuntime;
  }
}

std::map<std::string, uint64_t> parse_seed_overrides(const std::vector<std::string>& raw) {
  std::map<std::string, uint64_t> overrides;
  for (const std::string& entry : raw) {
    const size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= entry.size())
      dataclone::fail(ErrorCode::ConfigError,
                      "--seed-override wants stage=u64, got '" + entry + "'");
    const std::string stage = entry.substr(0, eq);
    const std::string value = entry.substr(eq + 1);
    uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seed);
    if (ec != std::errc() || ptr != value.data() + value.size())
      dataclone::fail(ErrorCode::ConfigError, "bad seed value '" + value + "'");
    overrides[stage] = seed;
  }
  return overrides;
}

int run_pipeline_stage(const std::string& stage_name, const std::string& config_path,
                       const std::string& out_dir, const std::vector<std::string>& seed_raw) {
  const dataclone::pipeline::Stage stage = dataclone::pipeline::stage_from_string(stage_name);
  dataclone::config::Config cfg = dataclone::config::Config::load(config_path);
  std::string out = out_dir;
  if (out.empty()) out = cfg.get_string("output.dir", "out");

  dataclone::pipeline::Pipeline pipe(std::move(cfg), out, parse_seed_overrides(seed_raw));
  const dataclone::pipeline::StageResult result = pipe.run_stage(stage);

  if (result.skipped) {
    std::fprintf(stderr, "%s: up to date, skipped\n", stage_name.c_str());
  } else {
    std::fprintf(stderr, "%s: wrote %zu artifact(s) under %s\n", stage_name.c_str(),
                 result.outputs.size(), pipe.out_dir().string().c_str());
  }
  if (!result.missing_cells.empty()) {
    for (const std::string& cell : result.missing_cells)
      std::fprintf(stderr, "%s: missing %s\n", stage_name.c_str(), cell.c_str());
    return kExitMissingDep;
  }
  return kExitOk;
}

int run_report(const std::string& results_dir, const std::string& format) {
  const dataclone::report::Report rep = dataclone::report::build(results_dir);
  if (format == "md") {
    std::fputs(rep.markdown.c_str(), stdout);
  } else if (format == "json") {
    const std::string text = rep.json.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
  } else {
    dataclone::fail(ErrorCode::ConfigError, "--format must be md or json, got '" + format + "'");
  }
  if (!rep.missing.empty()) {
    for (const std::string& item : rep.missing)
      std::fprintf(stderr, "report: missing %s\n", item.c_str());
    return kExitMissingDep;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dataclone: synthesize, privately clone, and evaluate a clinical-note corpus"};
  app.require_subcommand(1);

  struct StageArgs {
    std::string config;
    std::string out;
    std::vector<std::string> seeds;
  };
  std::map<std::string, StageArgs> stage_args;

  for (dataclone::pipeline::Stage stage : dataclone::pipeline::kStages) {
    const std::string name = dataclone::pipeline::to_string(stage);
    StageArgs& args = stage_args[name];
    CLI::App* sub = app.add_subcommand(name, "Run the " + name + " stage");
    CLI::Option* config_opt =
        sub->add_option("--config", args.config, "TOML run configuration");
    sub->add_option("--out", args.out, "Output directory (default: output.dir from the config)");
    sub->add_option("--seed-override", args.seeds, "Replace one stage seed, e.g. train=42")
        ->take_all();
    if (name != "report") config_opt->required();
  }

  // Standalone renderer: reads a finished (or partial) results directory and
  // prints the report instead of running the pipeline stage.
  std::string results_dir;
  std::string format = "md";
  CLI::App* report_cmd = app.get_subcommand("report");
  report_cmd->add_option("--results", results_dir, "Render an existing results directory");
  report_cmd->add_option("--format", format, "Output format: md or json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "report" && !results_dir.empty()) return run_report(results_dir, format);
    if (name == "report" && stage_args[name].config.empty())
      dataclone::fail(ErrorCode::ConfigError, "report wants --results <dir> or --config <path>");
    const StageArgs& args = stage_args[name];
    return run_pipeline_stage(name, args.config, args.out, args.seeds);
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitRuntime;
  }
}
