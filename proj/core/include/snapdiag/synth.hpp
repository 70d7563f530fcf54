#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "snapdiag/index.hpp"

namespace snapdiag {

struct SynthConfig {
  std::size_t classes = 89;
  std::size_t per_class = 20;
  std::size_t dim = kDefaultDim;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

/// Gaussian source fixed for reproducible fixtures: std::mt19937_64 seeded
/// with the seed, 53-bit uniforms (x >> 11) * 2^-53, Box-Muller pairs
///   z0 = sqrt(-2 ln(1 - u1)) cos(2 pi u2),  z1 = ... sin(2 pi u2)
/// emitted z0 then z1. The standard library's distributions are avoided
/// because their output is implementation-defined.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed);
  double next();

 private:
  double uniform();

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Class-separable gallery: one random unit mean per class, items
/// normalize(mean + noise * N(0, I)). Classes are "class_NNN", ids
/// "cNNN_iNNNN", all records image modality. Row order is class-major.
IndexSnapshot synthesize_gallery(const SynthConfig& config);

}  // namespace snapdiag
