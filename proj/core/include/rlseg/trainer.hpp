#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rlseg/rls_model.hpp"
#include "rlseg/synth_data.hpp"

namespace rlseg {

enum class BpttMode { truncated, full };

BpttMode bptt_mode_from_name(const std::string& name);
const char* bptt_mode_name(BpttMode mode);

struct TrainConfig {
  double eta0 = 1e-3;       // initial learning rate
  double eta_floor = 1e-5;  // schedule floor
  int halve_every = 200;    // epochs between halvings
  int epochs = 500;
  double rho_m = 0.9;       // momentum on the preconditioned step
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  double grad_clip = 1.0;   // per-block L2 cap, <= 0 disables
  int batch_size = 1;
  std::uint64_t seed = 0;
};

// Sum over pixels and classes of -y log(yhat), with yhat clipped to
// [1e-12, 1] before the log. y is one-hot per pixel.
double cross_entropy(const Eigen::MatrixXd& yhat, const Eigen::MatrixXd& y);

// N x K one-hot targets from a {0,1} mask (class 1 = foreground).
Eigen::MatrixXd one_hot_targets(const Field& mask);

// Reverse-mode gradients of the loss through the output head, the gates and,
// across steps, the hidden-state paths. In truncated mode the per-step
// geometry (curvature, region means) is treated as constant data; in full
// mode its dependence on the previous state is differentiated too.
ParamSet backward(const ForwardCache& cache, const Field& image,
                  const Eigen::MatrixXd& y, const ParamSet& params,
                  BpttMode mode);

// RMSProp with momentum over flat blocks:
//   g <- g * min(1, clip/|g|2)   (per block)
//   s <- d s + (1-d) g.*g
//   m <- rho m + lr g / sqrt(s + eps)
//   theta <- theta - m
struct OptState {
  std::vector<Eigen::VectorXd> rms, momentum;
  int epoch = 0;
};

void opt_state_init(OptState& st, std::span<const ConstFlatBlock> blocks);
void rmsprop_step(std::span<FlatBlock> params, std::span<const ConstFlatBlock> grads,
                  OptState& st, double lr, const TrainConfig& cfg);
void rmsprop_update(ParamSet& params, const ParamSet& grads, OptState& st,
                    double lr, const TrainConfig& cfg);

// max(eta_floor, eta0 * 0.5^floor(epoch / halve_every)).
double lr_schedule(int epoch, const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double val_fmeasure = 0.0;
  bool has_val = false;
};

struct TrainResult {
  ParamSet params;
  OptState opt;
  std::vector<EpochStats> history;
};

struct TrainOptions {
  BpttMode mode = BpttMode::truncated;
  int start_epoch = 0;  // epoch numbering offset (resumed runs)
  const std::vector<const Sample*>* validation = nullptr;
  std::function<void(const EpochStats&)> on_epoch;
  const ParamSet* initial = nullptr;  // defaults to init_params(rls_cfg)
};

// Per-epoch, per-sample: forward, loss, backward, optimizer step at the
// scheduled rate. Deterministic given seeds. batch_size > 1 averages
// gradients over consecutive samples before each update.
TrainResult train(const std::vector<const Sample*>& train_set,
                  const RlsConfig& rls_cfg, const TrainConfig& train_cfg,
                  const TrainOptions& opts = {});

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::string& path);

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double tol = 0.0;
  bool pass = false;
  double max_rel_err() const;
};

// Central finite differences against backward() on a random instance, block
// by block. Truncated mode differentiates (and difference-checks) the
// frozen-geometry objective that truncated backpropagation targets.
// Per-entry relative error |ga-gn| / max(|ga|+|gn|, 1e-3); entries below the
// floor are effectively compared absolutely, keeping the check meaningful
// where finite differences run out of precision.
GradCheckReport grad_check(const RlsConfig& cfg, BpttMode mode, double h,
                           double tol, std::uint64_t seed);

// Shared FD comparison harness, also used for the feedforward baseline.
GradCheckReport finite_diff_check(std::span<FlatBlock> params,
                                  std::span<const ConstFlatBlock> analytic,
                                  const std::function<double()>& loss_fn,
                                  double h, double tol);

}  // namespace rlseg
