#ifndef CPLAB_CIFAR_HPP_
#define CPLAB_CIFAR_HPP_

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cplab/dataset.hpp"

namespace cplab {

// CIFAR-10 binary layout: 1 label byte, then 1024 red, 1024 green, 1024 blue.
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

struct CifarOptions {
  std::set<int> classes;  // empty = all ten
  std::size_t max_per_class = SIZE_MAX;
  std::size_t downsample = 1;  // box-pooling factor, must divide 32
};

// Records in file order; labels remapped densely (ascending) over the filter,
// pixels scaled to [0, 1] and then downsampled.
LabeledDataset load_cifar_bin(const std::string& path, const CifarOptions& opts = {});
LabeledDataset parse_cifar_bin(std::span<const std::uint8_t> bytes, const CifarOptions& opts = {});

// Per-channel box average over factor x factor blocks of a channel-planar
// 3x32x32 image; output is the three pooled planes concatenated.
std::vector<double> downsample_flatten(std::span<const double> pixels, std::size_t factor);

}  // namespace cplab

#endif  // CPLAB_CIFAR_HPP_
