// cplab: run experiments from config files, check gradients, export fixtures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "cplab/config.hpp"
#include "cplab/dataset.hpp"
#include "cplab/dispatch.hpp"
#include "cplab/error.hpp"
#include "cplab/gradcheck.hpp"
#include "cplab/rng.hpp"
#include "cplab/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cplab;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kRuntime = 3, kIo = 4 };

int report_error(const char* kind, const std::string& message, int code, const std::string& key = {}) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  if (!key.empty()) j["key"] = key;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return code;
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

int cmd_run(const RunArgs& a) {
  std::map<std::string, std::string> overrides;
  if (a.seed) {
    overrides["seed"] = std::to_string(*a.seed);
    overrides["train.seed"] = std::to_string(derive_seed(*a.seed, "train"));
  }
  if (!a.out.empty()) overrides["output.dir"] = a.out;
  const ExperimentConfig cfg = parse_config(read_text(a.config), overrides);
  std::cout << run_experiment(cfg, a.force) << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, std::size_t trials) {
  const auto results = run_gradcheck_suite(seed, trials);
  double worst = 0.0;
  std::size_t failed = 0;
  nlohmann::ordered_json ops = nlohmann::ordered_json::object();
  for (const auto& r : results) {
    const bool ok = r.max_rel_error < tolerance;
    failed += !ok;
    worst = std::max(worst, r.max_rel_error);
    std::printf("%-28s %.3e  %s\n", r.name.c_str(), r.max_rel_error, ok ? "ok" : "FAIL");
    ops[r.name] = r.max_rel_error;
  }
  nlohmann::ordered_json j;
  j["command"] = "gradcheck";
  j["seed"] = seed;
  j["trials"] = trials;
  j["tolerance"] = tolerance;
  j["max_rel_error"] = worst;
  j["failed"] = failed;
  j["ops"] = ops;
  std::cout << j.dump() << '\n';
  return failed == 0 ? kOk : kRuntime;
}

int cmd_export(const std::string& name, std::uint64_t seed, const std::string& out, bool force) {
  const LabeledDataset ds = fixture_by_name(name, derive_seed(seed, "data"));
  if (out.empty()) {
    write_csv(std::cout, ds);
    return kOk;
  }
  prepare_output_dir(out, force);
  const fs::path path = fs::path(out) / (name + ".csv");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(os, ds);
  if (!os.flush()) throw IoError("write failed: " + path.string());
  nlohmann::ordered_json j;
  j["command"] = "export-fixture";
  j["fixture"] = name;
  j["seed"] = seed;
  j["records"] = ds.size();
  j["path"] = path.generic_string();
  std::cout << j.dump() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Center prediction loss laboratory"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
  run_cmd->add_option("config", run.config, "Config file (key = value lines)")->required();
  run_cmd->add_option("--seed", run.seed, "Override seed (and the derived train.seed)");
  run_cmd->add_option("--out", run.out, "Override output.dir");
  run_cmd->add_flag("--force", run.force, "Write into a non-empty output directory");

  std::uint64_t gc_seed = 0;
  double gc_tolerance = 1e-4;
  std::size_t gc_trials = 20;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss and layer");
  gc_cmd->add_option("--seed", gc_seed, "Base seed");
  gc_cmd->add_option("--tolerance", gc_tolerance, "Maximum relative error");
  gc_cmd->add_option("--trials", gc_trials, "Seeded instances per op")->check(CLI::PositiveNumber);

  std::string fx_name, fx_out;
  std::uint64_t fx_seed = 0;
  bool fx_force = false;
  auto* fx_cmd = app.add_subcommand("export-fixture", "Write a synthetic fixture as CSV");
  fx_cmd->add_option("name", fx_name, "Fixture name")->required()->check(CLI::IsMember(fixture_names()));
  fx_cmd->add_option("--seed", fx_seed, "Config-level seed (data stream is derived from it)");
  fx_cmd->add_option("--out", fx_out, "Directory for <name>.csv (default: stdout)");
  fx_cmd->add_flag("--force", fx_force, "Write into a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kConfig);
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_tolerance, gc_trials);
    if (*fx_cmd) return cmd_export(fx_name, fx_seed, fx_out, fx_force);
  } catch (const ConfigError& e) {
    return report_error("config", e.what(), kConfig, e.key());
  } catch (const IoError& e) {
    return report_error("io", e.what(), kIo);
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), kRuntime);
  }
  return kOk;
}
