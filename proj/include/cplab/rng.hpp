#ifndef CPLAB_RNG_HPP_
#define CPLAB_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cplab {

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view text);

// Named sub-stream seed: splitmix64(seed ^ fnv1a64(purpose)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

// Seeded generator with fully specified derived distributions, so other
// implementations can reproduce the streams from the same mt19937_64 output:
//   uniform01  = (next() >> 11) * 2^-53
//   below(n)   = rejection sampling on next() against the largest multiple of n
//   normal     = Box-Muller, u1 = 1 - uniform01(), u2 = uniform01(),
//                both outputs used (cos first, then sin)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cplab

#endif  // CPLAB_RNG_HPP_
