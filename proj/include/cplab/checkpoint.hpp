#ifndef CPLAB_CHECKPOINT_HPP_
#define CPLAB_CHECKPOINT_HPP_

#include <iosfwd>
#include <string>

#include "cplab/nn.hpp"

namespace cplab {

// Text checkpoint format, version 1:
//
//   cplab-checkpoint 1
//   entries <count>
//   <name> <rows> <cols>
//   <rows*cols values, row-major, %.17g, space separated>
//   ... (one name line + one value line per entry, sorted by name)
//
// %.17g round-trips every double exactly.
inline constexpr const char* kCheckpointTag = "cplab-checkpoint";
inline constexpr int kCheckpointVersion = 1;

void write_state(std::ostream& os, const StateDict& state);
StateDict read_state(std::istream& is);

void save_checkpoint(const std::string& path, const StateDict& state);
StateDict load_checkpoint(const std::string& path);

}  // namespace cplab

#endif  // CPLAB_CHECKPOINT_HPP_
