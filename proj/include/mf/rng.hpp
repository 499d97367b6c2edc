#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace mf {

// xoshiro256** seeded through splitmix64. Normals use the Box-Muller
// transform so that streams are identical across standard libraries (the
// std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n); n > 0. Lemire-style rejection, unbiased.
  std::uint64_t below(std::uint64_t n);
  double normal();
  void fill_normal(Eigen::Ref<Eigen::MatrixXd> out);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a of `purpose`, folded into `seed` through splitmix64. Used to derive
// independent sub-seeds from the single user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

// Fisher-Yates with Rng::below; reproducible everywhere.
template <class It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    using std::swap;
    swap(first[i - 1], first[j]);
  }
}

}  // namespace mf
