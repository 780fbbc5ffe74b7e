// mirrorcbx command line: run, sweep, validate and list-optimizers.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include "mirrorcbx/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace mirrorcbx;

std::vector<json> parse_values(const std::string& csv) {
  std::vector<json> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("empty value in --values");
    try {
      out.push_back(json::parse(item));
    } catch (const json::parse_error&) {
      out.push_back(item);
    }
  }
  return out;
}

void print_summary(const ExperimentResult& r, std::ostream& os) {
  os << r.config.experiment << ": success_rate=" << r.summary.success_rate << " n_runs=" << r.summary.n_runs
     << " n_failed=" << r.summary.n_failed << " mean_l0=" << r.summary.mean_l0;
  if (!r.summary.mean_curve.empty()) os << " final_mean_dist=" << r.summary.mean_curve.back();
  os << "\n";
  for (const auto& run : r.runs)
    if (!run.ok) os << "  run " << run.run << " failed: " << run.error << "\n";
}

std::filesystem::path output_dir(const ExperimentConfig& c, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!c.output_dir.empty()) return c.base_dir / c.output_dir;
  return std::filesystem::path("results") / c.experiment;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mirror consensus-based optimization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;

  auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
  run_cmd->add_option("config", config_path, "Experiment JSON file")->required();
  run_cmd->add_option("--seed", seed, "Override the base seed");
  run_cmd->add_option("--runs", runs, "Override the number of runs");
  run_cmd->add_option("--out", out_dir, "Output directory");

  std::string param;
  std::string values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a config once per value of one parameter");
  sweep_cmd->add_option("config", config_path, "Experiment JSON file")->required();
  sweep_cmd->add_option("--param", param, "Dotted parameter path, e.g. optimizer.sigma")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required();
  sweep_cmd->add_option("--seed", seed, "Override the base seed");
  sweep_cmd->add_option("--runs", runs, "Override the number of runs");
  sweep_cmd->add_option("--out", out_dir, "Output directory");

  auto* validate_cmd = app.add_subcommand("validate", "Check a config without running it");
  validate_cmd->add_option("config", config_path, "Experiment JSON file")->required();

  auto* list_cmd = app.add_subcommand("list-optimizers", "Print the available optimizer kinds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (list_cmd->parsed()) {
      for (auto k : all_optimizer_kinds()) std::cout << kind_name(k) << "\n";
      std::cout << "wirtinger_flow\nmirror_descent\n";
      return 0;
    }
    if (validate_cmd->parsed()) {
      const ExperimentConfig c = load_config(config_path);
      std::cout << config_path << ": ok (" << c.experiment << ")\n";
      return 0;
    }
    if (run_cmd->parsed()) {
      ExperimentConfig c = load_config(config_path);
      if (seed) c.seed = *seed;
      if (runs) {
        if (*runs < 1) throw ConfigError("--runs must be >= 1");
        c.n_runs = *runs;
      }
      const ExperimentResult r = run_experiment(c);
      const auto dir = output_dir(c, out_dir);
      write_outputs(r, dir);
      print_summary(r, std::cout);
      std::cout << "wrote " << dir.string() << "\n";
      return 0;
    }
    if (sweep_cmd->parsed()) {
      json base = read_json_file(config_path);
      if (seed) base["seed"] = *seed;
      if (runs) base["n_runs"] = *runs;
      const auto base_dir = std::filesystem::path(config_path).parent_path();
      const ExperimentConfig c = parse_config(base, base_dir);
      const auto vals = parse_values(values);
      const auto results = run_sweep(base, base_dir, param, vals);
      const auto dir = output_dir(c, out_dir);
      write_sweep(results, param, vals, dir);
      for (std::size_t i = 0; i < results.size(); ++i) {
        std::cout << param << "=" << vals[i].dump() << "  ";
        print_summary(results[i], std::cout);
      }
      std::cout << "wrote " << dir.string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
