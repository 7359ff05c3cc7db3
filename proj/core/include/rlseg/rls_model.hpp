#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rlseg/field.hpp"
#include "rlseg/param_blocks.hpp"

namespace rlseg {

// Foreground/background only.
inline constexpr int kNumClasses = 2;

// Recurrent level-set model: the vectorized level-set function is the hidden
// state of a gated recurrent cell whose per-step input is the image-driven
// force field (curvature plus weighted fitting terms).
struct RlsConfig {
  int height = 16;
  int width = 16;
  int steps = 5;           // recurrence unroll length
  double epsilon = 1.0;    // heaviside width for the region means
  int checker_period = 5;  // phi0 checkerboard period
  double init_scale = 1.0; // weights drawn uniform(+-init_scale/sqrt(N))
  bool diagonal = false;   // elementwise (length-N) parameterization
  std::uint64_t seed = 0;

  int size() const { return height * width; }
};

// Trainable parameters. Gate and force matrices are N x N dense, or N x 1
// acting elementwise in diagonal mode; the output map V is (K N) x N dense
// or (K N) x 1 diagonal-per-class. Block order below is the container order.
struct ParamSet {
  int height = 0;
  int width = 0;
  bool diagonal = false;

  Eigen::MatrixXd Ug, Wg;          // force control, inside/outside
  Eigen::MatrixXd Uz, Wz;          // update gate
  Eigen::MatrixXd Ur, Wr;          // reset gate
  Eigen::MatrixXd Uo, Wo;          // candidate content
  Eigen::VectorXd bz, br, bo;
  Eigen::MatrixXd V;               // hidden state -> per-pixel class logits
  Eigen::VectorXd bV;

  int size() const { return height * width; }

  std::array<FlatBlock, 13> blocks();
  std::array<ConstFlatBlock, 13> blocks() const;
};

// Same-shape zero blocks; used for gradients and optimizer state.
ParamSet zeros_like(const ParamSet& p);

// Seeded uniform(-init_scale/sqrt(N), +init_scale/sqrt(N)) weights, zero biases.
ParamSet init_params(const RlsConfig& cfg);

// Geometry of the current contour: everything the force input needs from
// (image, phi).
struct ForceInput {
  Eigen::VectorXd kappa;  // curvature of phi, vectorized
  Eigen::VectorXd a;      // (I - c1)^2
  Eigen::VectorXd b;      // (I - c2)^2
  double c1 = 0.0, c2 = 0.0;
  double in_mass = 0.0, out_mass = 0.0;  // sum H(phi), sum (1 - H(phi))
};

ForceInput force_input(const Eigen::VectorXd& image,
                       const Eigen::VectorXd& phi_prev, double eps, int height,
                       int width);

// x_t = kappa(phi_{t-1}) - Ug (I - c1)^2 + Wg (I - c2)^2.
Eigen::VectorXd gen_input(const ForceInput& g, const ParamSet& params);
Eigen::VectorXd gen_input(const Eigen::VectorXd& image,
                          const Eigen::VectorXd& phi_prev,
                          const ParamSet& params, double eps);

struct Gates {
  Eigen::VectorXd z, r, o;
};

// z = sigmoid(Uz x + Wz phi + bz); r likewise; o = tanh(Uo x + Wo (phi.*r) + bo);
// phi_t = z .* phi + (1 - z) .* o (computed in a form that cannot escape the
// [min(phi,o), max(phi,o)] interval in floating point).
Eigen::VectorXd rls_step(const Eigen::VectorXd& x,
                         const Eigen::VectorXd& phi_prev,
                         const ParamSet& params, Gates* gates = nullptr);

// Everything the backward pass needs from one step.
struct StepCache {
  ForceInput geom;
  Eigen::VectorXd x, z, r, o, phi;
};

struct ForwardCache {
  double epsilon = 1.0;
  Eigen::VectorXd phi0;
  std::vector<StepCache> steps;
  Eigen::VectorXd logits;  // length K*N, logits[n*K + k]
  Eigen::MatrixXd yhat;    // N x K, each row sums to 1
};

// Unrolls the recurrence from the checkerboard initialization and applies the
// per-pixel softmax head.
ForwardCache forward(const Field& image, const ParamSet& params,
                     const RlsConfig& cfg);

// As forward(), but the per-step geometry (kappa, fitting residuals, means)
// is taken from `frozen` instead of being recomputed from the evolving state.
// This is the objective whose exact gradient truncated backpropagation
// computes, so the finite-difference check evaluates it.
ForwardCache forward_frozen_geometry(const Field& image, const ParamSet& params,
                                     const RlsConfig& cfg,
                                     const std::vector<ForceInput>& frozen);

// Per-pixel argmax; an exact tie goes to background.
Field predict_mask(const Eigen::MatrixXd& yhat, int height, int width);

// Flat binary container: "RLS1", then height, width, K, steps, flags as
// little-endian int32, then all blocks row-major as little-endian doubles.
void save_params(const ParamSet& params, int steps, const std::string& path);

struct LoadedParams {
  ParamSet params;
  int steps = 0;
};

LoadedParams load_params(const std::string& path);

// Row-major flatten / unflatten.
Eigen::VectorXd to_vector(const Field& f);
Field to_field(const Eigen::VectorXd& v, int height, int width);

}  // namespace rlseg
