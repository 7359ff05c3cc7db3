#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rlseg/field.hpp"

namespace rlseg {

// Two-phase region-based active-contour solver: a level-set function evolves
// under area, length and intensity-fitting forces until the update stalls.
// Defaults were fixed by the acceptance suite on the clean-disk fixture: the
// explicit update with the regularized curvature stencil is energy-unstable
// for nu > 0 at step sizes that converge within 500 iterations, so the
// default flow is pure region fitting with a larger step.
struct ChanVeseConfig {
  double mu = 0.0;        // area weight
  double nu = 0.0;        // length weight
  double lambda1 = 1.0;   // inside fitting weight
  double lambda2 = 1.0;   // outside fitting weight
  double epsilon = 1.0;   // heaviside/dirac regularization width
  double eta = 0.2;       // evolution step size
  int max_iters = 500;
  double tol = 1e-5;      // stop when mean |delta phi| drops below this
  int checker_period = 5;
};

// phi0(i,j) = sin(pi i / period) sin(pi j / period); many zero crossings so a
// contour can emerge anywhere.
Field checkerboard_init(int height, int width, int period);

// Intensity averages weighted by H(phi) and 1-H(phi). Both land inside
// [min I, max I]; denominators never vanish since H is strictly in (0,1).
std::pair<double, double> region_means(const Field& image, const Field& phi,
                                       double eps);

// One explicit descent step with the region means held fixed:
// phi + eta * dirac(phi) * [nu kappa(phi) - mu - l1 (I-c1)^2 + l2 (I-c2)^2].
Field evolution_step(const Field& image, const Field& phi,
                     const ChanVeseConfig& cfg);

// mu sum H(phi) + nu sum dirac(phi)|grad phi|
//   + l1 sum (I-c1)^2 H(phi) + l2 sum (I-c2)^2 (1-H(phi)).
double energy(const Field& image, const Field& phi, const ChanVeseConfig& cfg);

struct SegmentResult {
  Field mask;                        // 1 where phi > 0, else 0
  int iters = 0;                     // evolution steps taken
  std::vector<double> energy_trace;  // energy_trace[k] = energy after k steps
};

// Full solve from the checkerboard initialization. Deterministic.
SegmentResult segment_cls(const Field& image, const ChanVeseConfig& cfg);

// CSV rows "iter,energy", one per trace entry.
void write_energy_trace_csv(const std::vector<double>& trace,
                            const std::string& path);

}  // namespace rlseg
