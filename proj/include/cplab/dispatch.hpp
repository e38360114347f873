#ifndef CPLAB_DISPATCH_HPP_
#define CPLAB_DISPATCH_HPP_

#include <string>
#include <vector>

#include "cplab/config.hpp"

namespace cplab {

// Creates cfg.output_dir. Throws IoError if it exists and is not an empty
// directory, unless force is set.
void prepare_output_dir(const std::string& dir, bool force);

// Runs the experiment named by cfg.kind and writes its artifacts below
// cfg.output_dir:
//   config.resolved    echo_config(cfg), re-runnable as is
//   timeline.csv       loss timeline (refit history for the surface kind)
//   metrics.json       the summary record
//   surface.csv        surface and boundary kinds
//   checkpoints/       train kind, one per snapshot epoch
//   report.csv         ablation kinds, plus variants/<name>.config and
//                      variants/<name>.timeline.csv
// Returns the summary as a single-line JSON object.
std::string run_experiment(const ExperimentConfig& cfg, bool force);

// Every regular file below dir, relative and sorted.
std::vector<std::string> list_outputs(const std::string& dir);

}  // namespace cplab

#endif  // CPLAB_DISPATCH_HPP_
