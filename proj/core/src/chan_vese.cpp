#include "rlseg/chan_vese.hpp"

#include <cmath>
#include <fstream>

#include "rlseg/errors.hpp"

namespace rlseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_same_shape(const Field& a, const Field& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": got " + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

void validate(const ChanVeseConfig& cfg) {
  if (cfg.mu < 0 || cfg.nu < 0) throw ConfigError("mu/nu must be >= 0");
  if (cfg.lambda1 <= 0 || cfg.lambda2 <= 0)
    throw ConfigError("lambda1/lambda2 must be > 0");
  if (cfg.epsilon <= 0) throw ConfigError("epsilon must be > 0");
  if (cfg.eta <= 0) throw ConfigError("eta must be > 0");
  if (cfg.max_iters < 0) throw ConfigError("max_iters must be >= 0");
  if (cfg.tol <= 0) throw ConfigError("tol must be > 0");
  if (cfg.checker_period < 2) throw ConfigError("checker_period must be >= 2");
}

}  // namespace

Field checkerboard_init(int height, int width, int period) {
  if (period < 2) throw ConfigError("checker_period must be >= 2");
  Field phi(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      phi.at(i, j) = std::sin(kPi * i / period) * std::sin(kPi * j / period);
    }
  }
  return phi;
}

std::pair<double, double> region_means(const Field& image, const Field& phi,
                                       double eps) {
  require_same_shape(image, phi, "region_means");
  double in_mass = 0.0, in_sum = 0.0, out_mass = 0.0, out_sum = 0.0;
  for (int k = 0; k < image.size(); ++k) {
    const double h = heaviside(phi.values[k], eps);
    in_mass += h;
    in_sum += image.values[k] * h;
    out_mass += 1.0 - h;
    out_sum += image.values[k] * (1.0 - h);
  }
  return {in_sum / in_mass, out_sum / out_mass};
}

Field evolution_step(const Field& image, const Field& phi,
                     const ChanVeseConfig& cfg) {
  require_same_shape(image, phi, "evolution_step");
  const auto [c1, c2] = region_means(image, phi, cfg.epsilon);
  const Field kappa = curvature(phi);
  Field next(phi.height, phi.width);
  for (int k = 0; k < phi.size(); ++k) {
    const double d1 = image.values[k] - c1;
    const double d2 = image.values[k] - c2;
    const double force = cfg.nu * kappa.values[k] - cfg.mu -
                         cfg.lambda1 * d1 * d1 + cfg.lambda2 * d2 * d2;
    next.values[k] =
        phi.values[k] + cfg.eta * dirac(phi.values[k], cfg.epsilon) * force;
  }
  return next;
}

double energy(const Field& image, const Field& phi, const ChanVeseConfig& cfg) {
  require_same_shape(image, phi, "energy");
  const auto [c1, c2] = region_means(image, phi, cfg.epsilon);
  const Field grad = gradient_magnitude(phi);
  double total = 0.0;
  for (int k = 0; k < phi.size(); ++k) {
    const double h = heaviside(phi.values[k], cfg.epsilon);
    const double d1 = image.values[k] - c1;
    const double d2 = image.values[k] - c2;
    total += cfg.mu * h;
    total += cfg.nu * dirac(phi.values[k], cfg.epsilon) * grad.values[k];
    total += cfg.lambda1 * d1 * d1 * h;
    total += cfg.lambda2 * d2 * d2 * (1.0 - h);
  }
  return total;
}

SegmentResult segment_cls(const Field& image, const ChanVeseConfig& cfg) {
  validate(cfg);
  Field phi = checkerboard_init(image.height, image.width, cfg.checker_period);
  SegmentResult result;
  result.energy_trace.push_back(energy(image, phi, cfg));
  for (int it = 0; it < cfg.max_iters; ++it) {
    Field next = evolution_step(image, phi, cfg);
    double delta = 0.0;
    for (int k = 0; k < phi.size(); ++k) {
      delta += std::abs(next.values[k] - phi.values[k]);
    }
    delta /= phi.size();
    phi = std::move(next);
    ++result.iters;
    result.energy_trace.push_back(energy(image, phi, cfg));
    if (delta < cfg.tol) break;
  }
  result.mask = Field(image.height, image.width);
  for (int k = 0; k < phi.size(); ++k) {
    result.mask.values[k] = phi.values[k] > 0.0 ? 1.0 : 0.0;
  }
  return result;
}

void write_energy_trace_csv(const std::vector<double>& trace,
                            const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "iter,energy\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace rlseg
