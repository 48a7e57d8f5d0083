#pragma once

#include <cstdint>
#include <vector>

namespace ckd {

// Deterministic 64-bit generator: xoshiro256** seeded through splitmix64.
//
// State update (xoshiro256**):
//   result = rotl(s1 * 5, 7) * 9
//   t = s1 << 17
//   s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
//
// Seeding (splitmix64, applied four times to fill the state):
//   z = (x += 0x9E3779B97F4A7C15)
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// This is the only entropy source in the project; an identical seed yields a
// bit-identical run on a given platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0,1): top 53 bits of next_u64 scaled by 2^-53.
    double next_double();

    double uniform(double lo, double hi);

    // Box-Muller; the spare draw is cached so each call consumes a
    // deterministic amount of state.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Uniform integer in [0, n); rejection sampling, n > 0.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates.
    template <typename T> void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream, e.g. one per worker or per epoch.
    std::uint64_t fork_seed();

  private:
    std::uint64_t state_[4];
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

} // namespace ckd
