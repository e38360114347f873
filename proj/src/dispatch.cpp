#include "cplab/dispatch.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cplab/checkpoint.hpp"
#include "cplab/error.hpp"
#include "cplab/experiments.hpp"
#include "json.hpp"

namespace cplab {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << content;
  if (!os.flush()) throw IoError("write failed: " + path.string());
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.ckpt", epoch);
  return buf;
}

void run_train(const ExperimentConfig& cfg, const fs::path& out, nlohmann::ordered_json& summary) {
  const LabeledDataset ds = load_dataset(cfg);
  TrainResult r = train_run(ds, cfg.train, [&](const TrainState& st, std::size_t epoch) {
    StateDict state;
    st.model.export_state(state);
    write_file(out / "checkpoints" / epoch_name(epoch), render([&](std::ostream& os) { write_state(os, state); }));
  });
  write_file(out / "timeline.csv", render([&](std::ostream& os) { write_timeline_csv(os, r.timeline, cfg.train.losses); }));
  summary["train_accuracy"] = train_accuracy(r.state.model, ds);
  summary["steps"] = r.timeline.size();
  for (const auto& [name, v] : r.timeline.front().parts) summary["initial_" + name] = v;
  for (const auto& [name, v] : r.timeline.back().parts) summary["final_" + name] = v;
}

void run_surface(const ExperimentConfig& cfg, const fs::path& out, nlohmann::ordered_json& summary) {
  const LabeledDataset ds = load_dataset(cfg);
  const SurfaceResult r = run_loss_surface(ds, cfg.surface_loss, cfg.train.seed, cfg.refit, cfg.refit_hidden);
  write_file(out / "surface.csv", render([&](std::ostream& os) { write_surface_csv(os, r.grid); }));
  const auto means = class_mean_errors(r.grid);
  write_file(out / "timeline.csv", render([&](std::ostream& os) {
               os << "step," << cfg.surface_loss << '\n';
               if (cfg.surface_loss == "cpl") {
                 for (std::size_t i = 0; i < r.refit.history.size(); ++i)
                   os << i << ',' << format_double(r.refit.history[i]) << '\n';
               } else {
                 double total = 0.0;
                 for (const auto& [label, m] : means) total += m;
                 os << "0," << format_double(total) << '\n';
               }
             }));
  summary["loss"] = cfg.surface_loss;
  nlohmann::ordered_json per_class;
  for (const auto& [label, m] : means) per_class[std::to_string(label)] = m;
  summary["class_mean_e"] = per_class;
  if (cfg.surface_loss == "cpl") {
    summary["refit_initial_cpl"] = r.refit.initial_cpl;
    summary["refit_final_cpl"] = r.refit.final_cpl;
  }
}

void run_boundary(const ExperimentConfig& cfg, const fs::path& out, nlohmann::ordered_json& summary) {
  const BoundaryResult r = run_boundary_experiment(load_dataset(cfg), cfg);
  write_file(out / "surface.csv", render([&](std::ostream& os) { write_surface_csv(os, r.grid); }));
  write_file(out / "timeline.csv", render([&](std::ostream& os) { write_timeline_csv(os, r.timeline, cfg.train.losses); }));
  summary["train_accuracy"] = r.accuracy;
  summary["boundary_mean_e"] = r.boundary_mean;
  summary["interior_mean_e"] = r.interior_mean;
  summary["ratio"] = r.ratio;
}

void run_ablation(const ExperimentConfig& cfg, const fs::path& out, nlohmann::ordered_json& summary) {
  const AblationReport r =
      cfg.kind == ExperimentKind::kAblationTarget ? run_target_ablation(cfg) : run_bn_ablation(cfg);
  write_file(out / "report.csv", render([&](std::ostream& os) { write_report_csv(os, r); }));
  const auto variants = cfg.kind == ExperimentKind::kAblationTarget ? target_ablation_variants(cfg)
                                                                     : bn_ablation_variants(cfg);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::string combined;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const AblationRow& row = r.rows[i];
    const std::string timeline =
        render([&](std::ostream& os) { write_timeline_csv(os, row.timeline, variants[i].second.train.losses); });
    write_file(out / "variants" / (row.variant + ".config"), row.config_text);
    write_file(out / "variants" / (row.variant + ".timeline.csv"), timeline);
    std::istringstream lines(timeline);
    std::string line;
    std::getline(lines, line);
    if (i == 0) combined = "variant," + line + "\n";
    while (std::getline(lines, line)) combined += row.variant + "," + line + "\n";
    rows.push_back({{"variant", row.variant}, {"mAP", row.map}, {"rank1", row.rank1}, {"config_hash", row.config_hash}});
  }
  write_file(out / "timeline.csv", combined);
  summary["rows"] = rows;
}

}  // namespace

void prepare_output_dir(const std::string& dir, bool force) {
  if (dir.empty()) throw IoError("output directory is empty");
  std::error_code ec;
  const fs::path p(dir);
  if (fs::exists(p, ec)) {
    if (!fs::is_directory(p, ec)) throw IoError(dir + " exists and is not a directory");
    if (!fs::is_empty(p, ec) && !force)
      throw IoError(dir + " is not empty (pass --force to write into it)");
  }
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

std::string run_experiment(const ExperimentConfig& cfg, bool force) {
  validate_config(cfg);
  prepare_output_dir(cfg.output_dir, force);
  const fs::path out(cfg.output_dir);
  const std::string resolved = echo_config(cfg);
  write_file(out / "config.resolved", resolved);

  nlohmann::ordered_json summary;
  summary["experiment"] = std::string(to_string(cfg.kind));
  summary["seed"] = cfg.seed;
  summary["config_hash"] = config_hash(echo_config(cfg, false));
  switch (cfg.kind) {
    case ExperimentKind::kTrain: run_train(cfg, out, summary); break;
    case ExperimentKind::kSurface: run_surface(cfg, out, summary); break;
    case ExperimentKind::kBoundary: run_boundary(cfg, out, summary); break;
    case ExperimentKind::kAblationTarget:
    case ExperimentKind::kAblationBn: run_ablation(cfg, out, summary); break;
  }
  const std::string line = summary.dump();
  write_file(out / "metrics.json", line + "\n");
  return line;
}

std::vector<std::string> list_outputs(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cplab
