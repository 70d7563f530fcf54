#include "snapdiag/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace snapdiag {

GaussianStream::GaussianStream(std::uint64_t seed) : engine_(seed) {}

double GaussianStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

namespace {

std::vector<double> unit_gaussian(GaussianStream& g, std::size_t dim) {
  std::vector<double> v(dim);
  double sq = 0.0;
  for (auto& x : v) {
    x = g.next();
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

IndexSnapshot synthesize_gallery(const SynthConfig& config) {
  if (config.classes == 0 || config.per_class == 0 || config.dim == 0) {
    throw Error(ErrorCode::InvalidConfig, "classes, per_class and dim must be positive");
  }
  if (!(config.noise >= 0.0) || !std::isfinite(config.noise)) {
    throw Error(ErrorCode::InvalidConfig, "noise must be finite and non-negative");
  }

  GaussianStream gauss(config.seed);
  std::vector<std::vector<double>> means;
  means.reserve(config.classes);
  for (std::size_t c = 0; c < config.classes; ++c) means.push_back(unit_gaussian(gauss, config.dim));

  const std::size_t n = config.classes * config.per_class;
  std::vector<GalleryRecord> records;
  records.reserve(n);
  std::vector<float> block;
  block.reserve(n * config.dim);
  std::vector<double> item(config.dim);
  char label[32];
  char id[48];

  for (std::size_t c = 0; c < config.classes; ++c) {
    std::snprintf(label, sizeof label, "class_%03zu", c);
    for (std::size_t i = 0; i < config.per_class; ++i) {
      double sq = 0.0;
      for (std::size_t d = 0; d < config.dim; ++d) {
        item[d] = means[c][d] + config.noise * gauss.next();
        sq += item[d] * item[d];
      }
      const double norm = std::sqrt(sq);
      for (std::size_t d = 0; d < config.dim; ++d) block.push_back(static_cast<float>(item[d] / norm));

      std::snprintf(id, sizeof id, "c%03zu_i%04zu", c, i);
      records.push_back({id, label, Modality::Image, records.size(), std::string("synthetic://") + id, std::nullopt});
    }
  }
  return build_snapshot(std::move(records), std::move(block), config.dim);
}

}  // namespace snapdiag
