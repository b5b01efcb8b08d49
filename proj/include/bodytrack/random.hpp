// Counter-based random generation: every draw is a pure function of
// (seed, stream, frame, counter), so frames are reproducible in isolation
// and per-pixel work can be parallelized without changing the output.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

namespace bodytrack {

enum class RngStream : std::uint64_t {
  depth_noise = 1,
  pixel_noise = 2,
  scene_pose = 3,
  dropout = 4,
  trajectory = 5,
  body_script = 6,
  generic = 7,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, RngStream stream, std::uint64_t frame = 0)
      : key_(detail::splitmix64(
            detail::splitmix64(seed ^ 0xa076bb1c54505au) ^
            detail::splitmix64(static_cast<std::uint64_t>(stream) * 0x9e3779b9u ^
                               frame))) {}

  std::uint64_t bits(std::uint64_t counter) const {
    return detail::splitmix64(key_ ^ detail::splitmix64(counter));
  }

  // Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; each counter yields one deviate.
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(counter * 2 + 0);  // in (0, 1]
    const double u2 = uniform(counter * 2 + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::Vector3d normal3(std::uint64_t counter) const {
    return {normal(counter * 3 + 0), normal(counter * 3 + 1),
            normal(counter * 3 + 2)};
  }

  // Uniformly distributed unit vector.
  Eigen::Vector3d unit_vector(std::uint64_t counter) const {
    for (std::uint64_t k = 0;; ++k) {
      const Eigen::Vector3d v = normal3(counter + (k << 40));
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

 private:
  std::uint64_t key_;
};

}  // namespace bodytrack
