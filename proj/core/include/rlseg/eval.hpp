#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rlseg/chan_vese.hpp"
#include "rlseg/param_blocks.hpp"
#include "rlseg/rls_model.hpp"
#include "rlseg/synth_data.hpp"
#include "rlseg/trainer.hpp"

namespace rlseg {

// Two fully-connected layers with a ReLU between: raw pixels in, per-pixel
// class logits out. The reference learned baseline.
struct FcnParams {
  int height = 0, width = 0, hidden = 0;
  Eigen::MatrixXd W1;  // hidden x N
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;  // (K N) x hidden
  Eigen::VectorXd b2;

  int size() const { return height * width; }
  std::array<FlatBlock, 4> blocks();
  std::array<ConstFlatBlock, 4> blocks() const;
};

FcnParams init_fcn(int height, int width, int hidden, double init_scale,
                   std::uint64_t seed);
FcnParams zeros_like(const FcnParams& p);

struct FcnCache {
  Eigen::VectorXd pre;     // W1 x + b1
  Eigen::VectorXd hidden;  // relu(pre)
  Eigen::VectorXd logits;  // length K*N, logits[n*K + k]
  Eigen::MatrixXd yhat;    // N x K
};

FcnCache fcn_forward(const Field& image, const FcnParams& params);
FcnParams fcn_backward(const FcnCache& cache, const Field& image,
                       const Eigen::MatrixXd& y, const FcnParams& params);

struct FcnTrainResult {
  FcnParams params;
  std::vector<EpochStats> history;
};

// Same optimizer, schedule and loss as the recurrent trainer.
FcnTrainResult train_fcn(const std::vector<const Sample*>& train_set, int height,
                         int width, int hidden, double init_scale,
                         const TrainConfig& cfg,
                         const std::vector<const Sample*>* validation = nullptr,
                         std::function<void(const EpochStats&)> on_epoch = {});

GradCheckReport grad_check_fcn(int height, int width, double h, double tol,
                               std::uint64_t seed);

// Binary PGM container for the baseline: "FCN1", then height, width, K,
// hidden as little-endian int32, then blocks row-major little-endian doubles.
void save_fcn(const FcnParams& params, const std::string& path);
FcnParams load_fcn(const std::string& path);

struct Prf {
  double precision = 0.0, recall = 0.0, f = 0.0;
};

// Foreground F1. Conventions: no predicted foreground -> P = 0; no true
// foreground -> R = 0; F = 0 when P + R = 0.
Prf f_measure(const Field& pred, const Field& gt);

// TP / (TP + FP + FN); 1.0 when both masks are empty.
double iou(const Field& pred, const Field& gt);

struct MethodReport {
  std::string method;
  double precision = 0.0, recall = 0.0, fmeasure = 0.0, iou = 0.0;
  double mean_time_s = 0.0, median_time_s = 0.0;
};

struct BenchReport {
  std::vector<MethodReport> methods;
  std::string dataset_id;
  std::string config_digest;
};

// Runs one segmentation function over the samples: per image, one warm-up
// run (first image only) plus `runs` timed runs whose median is that image's
// time. Metrics come from the (deterministic) predicted mask, which is also
// written to out_dir when given.
MethodReport evaluate_method(const std::string& name,
                             const std::function<Field(const Field&)>& segment_fn,
                             const std::vector<const Sample*>& samples,
                             const std::string& out_dir = "", int runs = 3);

struct BenchConfig {
  std::vector<std::string> methods = {"cls", "rls", "fcn"};
  int runs_per_image = 3;
};

struct BenchInputs {
  ChanVeseConfig cls;
  const ParamSet* rls_params = nullptr;
  RlsConfig rls;
  const FcnParams* fcn_params = nullptr;
};

// Evaluates each requested method on the samples and writes
// out_dir/results.csv plus per-image masks under out_dir/masks/.
BenchReport run_benchmark(const std::vector<const Sample*>& samples,
                          const BenchConfig& bench, const BenchInputs& inputs,
                          const std::string& out_dir);

std::string bench_csv_header();
void write_bench_csv(const BenchReport& report, const std::string& path);

}  // namespace rlseg
