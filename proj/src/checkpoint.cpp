#include "cplab/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cplab/error.hpp"

namespace cplab {

void write_state(std::ostream& os, const StateDict& state) {
  os << kCheckpointTag << ' ' << kCheckpointVersion << '\n';
  os << "entries " << state.size() << '\n';
  char buf[32];
  for (const auto& [name, m] : state) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw ContractError("checkpoint entry names must be non-empty and whitespace-free");
    }
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", m[i]);
      if (i) os << ' ';
      os << buf;
    }
    os << '\n';
  }
}

StateDict read_state(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != kCheckpointTag) {
    throw IoError("not a cplab checkpoint (missing header tag)");
  }
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string word;
  std::size_t count = 0;
  if (!(is >> word >> count) || word != "entries") throw IoError("malformed checkpoint header");
  StateDict out;
  for (std::size_t e = 0; e < count; ++e) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(is >> name >> rows >> cols)) throw IoError("truncated checkpoint entry header");
    std::vector<double> data(rows * cols);
    for (double& v : data) {
      std::string tok;
      if (!(is >> tok)) throw IoError("truncated checkpoint values for '" + name + "'");
      try {
        v = std::stod(tok);
      } catch (const std::exception&) {
        throw IoError("bad checkpoint value '" + tok + "' in '" + name + "'");
      }
    }
    out.emplace(name, Matrix(rows, cols, std::move(data)));
  }
  return out;
}

void save_checkpoint(const std::string& path, const StateDict& state) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_state(os, state);
  if (!os) throw IoError("failed writing '" + path + "'");
}

StateDict load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_state(is);
}

}  // namespace cplab
