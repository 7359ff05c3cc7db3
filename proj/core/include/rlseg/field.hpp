#pragma once

#include <cstddef>
#include <vector>

namespace rlseg {

// Dense H x W grid of doubles, row-major. Holds images, level-set functions
// and binary masks alike. Grid spacing is one pixel in both axes.
struct Field {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Field() = default;
  Field(int h, int w, double fill = 0.0)
      : height(h), width(w),
        values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

  double& at(int i, int j) {
    return values[static_cast<std::size_t>(i) * width + j];
  }
  double at(int i, int j) const {
    return values[static_cast<std::size_t>(i) * width + j];
  }
  int size() const { return height * width; }
  bool same_shape(const Field& o) const {
    return height == o.height && width == o.width;
  }
};

// Smoothed unit step 1/2 (1 + 2/pi atan(t/eps)); strictly inside (0,1) and
// increasing in t. eps > 0 controls the transition width.
double heaviside(double t, double eps);

// Derivative of heaviside: eps / (pi (eps^2 + t^2)). Positive, even in t.
double dirac(double t, double eps);

// Curvature of the level lines of phi: central differences with replicate
// boundary padding, denominator regularized so flat regions yield 0 rather
// than NaN. Requires at least a 3x3 grid.
Field curvature(const Field& phi);

// Transpose of the curvature Jacobian applied to `upstream`: returns
// d(sum_p upstream_p * kappa_p) / dphi with the exact stencil and padding
// used by curvature().
Field curvature_adjoint(const Field& phi, const Field& upstream);

// |grad phi| by the same central differences and padding as curvature().
Field gradient_magnitude(const Field& phi);

}  // namespace rlseg
