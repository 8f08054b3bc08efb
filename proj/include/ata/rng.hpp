#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace ata {

// Counter-based generator: every output is a pure function of (seed, counter),
// so identical seeds replay identical streams on any platform.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();                             // standard Gaussian, Box-Muller
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n), n > 0

  // Independent child stream; forking does not advance this stream.
  RngState fork(std::uint64_t tag) const;
  RngState fork(std::string_view tag) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, n), returned sorted.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace ata
