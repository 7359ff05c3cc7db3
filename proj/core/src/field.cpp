#include "rlseg/field.hpp"

#include <cassert>
#include <cmath>

namespace rlseg {

namespace {

constexpr double kPi = 3.14159265358979323846;
// Keeps the curvature denominator away from zero where |grad phi| vanishes.
constexpr double kCurvReg = 1e-8;

inline int clampi(int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); }

// Central-difference stencil values at (i,j) under replicate padding.
struct Stencil {
  double px, py, pxx, pyy, pxy;
};

inline Stencil stencil_at(const Field& phi, int i, int j) {
  const int hi = phi.height - 1, wj = phi.width - 1;
  const int im = clampi(i - 1, hi), ip = clampi(i + 1, hi);
  const int jm = clampi(j - 1, wj), jp = clampi(j + 1, wj);
  const double c = phi.at(i, j);
  Stencil s;
  s.px = 0.5 * (phi.at(i, jp) - phi.at(i, jm));
  s.py = 0.5 * (phi.at(ip, j) - phi.at(im, j));
  s.pxx = phi.at(i, jp) - 2.0 * c + phi.at(i, jm);
  s.pyy = phi.at(ip, j) - 2.0 * c + phi.at(im, j);
  s.pxy = 0.25 * (phi.at(ip, jp) - phi.at(ip, jm) - phi.at(im, jp) + phi.at(im, jm));
  return s;
}

}  // namespace

double heaviside(double t, double eps) {
  assert(eps > 0.0);
  return 0.5 * (1.0 + (2.0 / kPi) * std::atan(t / eps));
}

double dirac(double t, double eps) {
  assert(eps > 0.0);
  return eps / (kPi * (eps * eps + t * t));
}

Field curvature(const Field& phi) {
  assert(phi.height >= 3 && phi.width >= 3);
  Field out(phi.height, phi.width);
  for (int i = 0; i < phi.height; ++i) {
    for (int j = 0; j < phi.width; ++j) {
      const Stencil s = stencil_at(phi, i, j);
      const double g = s.px * s.px + s.py * s.py;
      const double num =
          s.pxx * s.py * s.py - 2.0 * s.px * s.py * s.pxy + s.pyy * s.px * s.px;
      const double den = (g + kCurvReg) * std::sqrt(g + kCurvReg);
      out.at(i, j) = num / den;
    }
  }
  return out;
}

Field curvature_adjoint(const Field& phi, const Field& upstream) {
  assert(phi.same_shape(upstream));
  assert(phi.height >= 3 && phi.width >= 3);
  Field out(phi.height, phi.width);
  const int hi = phi.height - 1, wj = phi.width - 1;
  for (int i = 0; i < phi.height; ++i) {
    const int im = clampi(i - 1, hi), ip = clampi(i + 1, hi);
    for (int j = 0; j < phi.width; ++j) {
      const int jm = clampi(j - 1, wj), jp = clampi(j + 1, wj);
      const double v = upstream.at(i, j);
      if (v == 0.0) continue;
      const Stencil s = stencil_at(phi, i, j);
      const double g = s.px * s.px + s.py * s.py;
      const double gr = g + kCurvReg;
      const double den = gr * std::sqrt(gr);
      const double num =
          s.pxx * s.py * s.py - 2.0 * s.px * s.py * s.pxy + s.pyy * s.px * s.px;

      // d kappa / d {px, py, pxx, pyy, pxy}; the px/py terms also hit the
      // regularized denominator.
      const double d_px =
          (-2.0 * s.py * s.pxy + 2.0 * s.pyy * s.px) / den - 3.0 * num * s.px / (gr * gr * std::sqrt(gr));
      const double d_py =
          (2.0 * s.pxx * s.py - 2.0 * s.px * s.pxy) / den - 3.0 * num * s.py / (gr * gr * std::sqrt(gr));
      const double d_pxx = s.py * s.py / den;
      const double d_pyy = s.px * s.px / den;
      const double d_pxy = -2.0 * s.px * s.py / den;

      // Scatter through the transposed stencils (clamped indices mirror the
      // replicate-padded gathers).
      out.at(i, jp) += v * (0.5 * d_px + d_pxx);
      out.at(i, jm) += v * (-0.5 * d_px + d_pxx);
      out.at(ip, j) += v * (0.5 * d_py + d_pyy);
      out.at(im, j) += v * (-0.5 * d_py + d_pyy);
      out.at(i, j) += v * (-2.0 * d_pxx - 2.0 * d_pyy);
      out.at(ip, jp) += v * 0.25 * d_pxy;
      out.at(ip, jm) -= v * 0.25 * d_pxy;
      out.at(im, jp) -= v * 0.25 * d_pxy;
      out.at(im, jm) += v * 0.25 * d_pxy;
    }
  }
  return out;
}

Field gradient_magnitude(const Field& phi) {
  assert(phi.height >= 3 && phi.width >= 3);
  Field out(phi.height, phi.width);
  for (int i = 0; i < phi.height; ++i) {
    for (int j = 0; j < phi.width; ++j) {
      const Stencil s = stencil_at(phi, i, j);
      out.at(i, j) = std::sqrt(s.px * s.px + s.py * s.py);
    }
  }
  return out;
}

}  // namespace rlseg
