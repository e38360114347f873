#include "cplab/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cplab/error.hpp"

namespace cplab {

LabeledDataset::LabeledDataset(Matrix features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (features_.cols() != labels_.size()) {
    throw ShapeError("dataset has " + std::to_string(features_.cols()) + " records but " +
                     std::to_string(labels_.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) index_[labels_[i]].push_back(i);
}

std::vector<int> LabeledDataset::identities() const {
  std::vector<int> ids;
  ids.reserve(index_.size());
  for (const auto& [id, _] : index_) ids.push_back(id);
  return ids;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> records) const {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (std::size_t r : records) {
    if (r >= size()) throw ContractError("record index out of range");
    labels.push_back(labels_[r]);
  }
  return LabeledDataset(select_cols(features_, records), std::move(labels));
}

LabeledBatch as_batch(const LabeledDataset& ds) {
  LabeledBatch b{ds.features(), ds.labels(), {}};
  b.records.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) b.records[i] = i;
  return b;
}

std::vector<std::vector<std::size_t>> group_by_label(std::span<const int> labels) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = slot.try_emplace(labels[i], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

std::vector<int> dense_labels(std::span<const int> labels, std::size_t* num_classes) {
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
  }
  if (num_classes) *num_classes = ids.size();
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& os, const LabeledDataset& ds) {
  for (std::size_t r = 0; r < ds.dim(); ++r) os << 'f' << r << ',';
  os << "label\n";
  for (std::size_t c = 0; c < ds.size(); ++c) {
    for (std::size_t r = 0; r < ds.dim(); ++r) os << format_double(ds.features()(r, c)) << ',';
    os << ds.labels()[c] << '\n';
  }
}

LabeledDataset read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty CSV");
  const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw IoError("CSV needs at least one feature column and a label column");
  const std::size_t dim = columns - 1;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        if (k < dim) {
          values.push_back(std::stod(cell));
        } else if (k == dim) {
          labels.push_back(std::stoi(cell));
        }
      } catch (const std::exception&) {
        throw IoError("CSV line " + std::to_string(line_no) + ": bad cell '" + cell + "'");
      }
      ++k;
    }
    if (k != columns) {
      throw IoError("CSV line " + std::to_string(line_no) + " has " + std::to_string(k) +
                    " cells, expected " + std::to_string(columns));
    }
  }
  // Values were read record-major; the dataset stores records as columns.
  Matrix rows(labels.size(), dim, std::move(values));
  return LabeledDataset(rows.transpose(), std::move(labels));
}

void save_csv(const std::string& path, const LabeledDataset& ds) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_csv(os, ds);
}

LabeledDataset load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_csv(is);
}

}  // namespace cplab
