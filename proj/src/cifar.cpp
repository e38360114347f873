#include "cplab/cifar.hpp"

#include <fstream>
#include <iterator>
#include <map>

#include "cplab/error.hpp"

namespace cplab {

std::vector<double> downsample_flatten(std::span<const double> pixels, std::size_t factor) {
  if (pixels.size() != kCifarPixels)
    throw ShapeError("expected " + std::to_string(kCifarPixels) + " pixels, got " +
                     std::to_string(pixels.size()));
  if (factor == 0 || kCifarSide % factor != 0)
    throw ContractError("downsample factor " + std::to_string(factor) + " does not divide 32");
  const std::size_t side = kCifarSide / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  std::vector<double> out(3 * side * side, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    const double* plane = pixels.data() + c * kCifarSide * kCifarSide;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t q = 0; q < side; ++q) {
        double s = 0.0;
        for (std::size_t dr = 0; dr < factor; ++dr)
          for (std::size_t dq = 0; dq < factor; ++dq)
            s += plane[(r * factor + dr) * kCifarSide + q * factor + dq];
        out[(c * side + r) * side + q] = s * inv;
      }
    }
  }
  return out;
}

LabeledDataset parse_cifar_bin(std::span<const std::uint8_t> bytes, const CifarOptions& opts) {
  if (bytes.size() % kCifarRecord != 0)
    throw IoError("CIFAR file truncated: " + std::to_string(bytes.size()) +
                  " bytes is not a multiple of " + std::to_string(kCifarRecord));
  for (int c : opts.classes)
    if (c < 0 || c > 9) throw ContractError("CIFAR class filter entry " + std::to_string(c) + " not in 0..9");
  if (opts.downsample == 0 || kCifarSide % opts.downsample != 0)
    throw ContractError("downsample factor " + std::to_string(opts.downsample) + " does not divide 32");

  std::map<int, int> remap;
  if (opts.classes.empty()) {
    for (int c = 0; c < 10; ++c) remap[c] = c;
  } else {
    int next = 0;
    for (int c : opts.classes) remap[c] = next++;
  }

  const std::size_t side = kCifarSide / opts.downsample;
  const std::size_t dim = 3 * side * side;
  std::vector<std::vector<double>> columns;
  std::vector<int> labels;
  std::map<int, std::size_t> taken;
  std::vector<double> pixels(kCifarPixels);
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
    const int label = bytes[off];
    if (label >= 10)
      throw IoError("corrupt CIFAR record " + std::to_string(off / kCifarRecord) + ": label byte " +
                    std::to_string(label));
    auto it = remap.find(label);
    if (it == remap.end() || taken[label] >= opts.max_per_class) continue;
    ++taken[label];
    for (std::size_t i = 0; i < kCifarPixels; ++i) pixels[i] = bytes[off + 1 + i] / 255.0;
    columns.push_back(opts.downsample == 1 ? pixels : downsample_flatten(pixels, opts.downsample));
    labels.push_back(it->second);
  }
  Matrix features(dim, columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) features.set_col(j, Matrix(dim, 1, std::move(columns[j])));
  return LabeledDataset(std::move(features), std::move(labels));
}

LabeledDataset load_cifar_bin(const std::string& path, const CifarOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return parse_cifar_bin(bytes, opts);
}

}  // namespace cplab
