#include "ata/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ata/error.hpp"

namespace ata {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t splitmix(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::uint64_t RngState::next_u64() {
  return splitmix(seed_ ^ splitmix(counter_++));
}

double RngState::uniform() {
  // 53 high bits -> double in [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngState::normal() {
  double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t RngState::uniform_int(std::uint64_t n) {
  require(n > 0, ErrorKind::InvalidBudget, "uniform_int needs n > 0");
  return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
}

RngState RngState::fork(std::uint64_t tag) const {
  RngState child(splitmix(seed_ ^ splitmix(tag ^ 0xA5A5A5A5A5A5A5A5ull)));
  return child;
}

RngState RngState::fork(std::string_view tag) const { return fork(fnv1a(tag)); }

std::vector<std::size_t> RngState::sample_without_replacement(std::size_t n, std::size_t k) {
  require(k <= n, ErrorKind::InvalidBudget, "sample_without_replacement needs k <= n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace ata
