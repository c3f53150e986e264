#ifndef UQEVAL_CORE_RNG_HPP_
#define UQEVAL_CORE_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace uqeval {

// Seed mixer for deriving independent sub-streams (member seeds, mask
// streams) from one run seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Deterministic random source. mt19937_64 output is pinned by the standard
// and every transform below is explicit arithmetic, so sequences are
// identical across platforms and standard libraries (std::shuffle and the
// std distributions are not, which is why they are not used here).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller. The spare is cached, so draws come in
  // deterministic pairs.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates using below().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uqeval

#endif  // UQEVAL_CORE_RNG_HPP_
