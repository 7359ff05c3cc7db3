#include "rlseg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "rlseg/errors.hpp"
#include "rlseg/pgm.hpp"
#include "rlseg/rng.hpp"

namespace fs = std::filesystem;

namespace rlseg {

namespace {

void softmax_rows(const Eigen::VectorXd& logits, Eigen::MatrixXd& yhat) {
  const Eigen::Index n = logits.size() / kNumClasses;
  yhat.resize(n, kNumClasses);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = logits(i * kNumClasses);
    for (int k = 1; k < kNumClasses; ++k) m = std::max(m, logits(i * kNumClasses + k));
    double sum = 0.0;
    for (int k = 0; k < kNumClasses; ++k) {
      const double e = std::exp(logits(i * kNumClasses + k) - m);
      yhat(i, k) = e;
      sum += e;
    }
    for (int k = 0; k < kNumClasses; ++k) yhat(i, k) /= sum;
  }
}

void require_binary(const Field& f, const char* what) {
  for (double v : f.values) {
    if (v != 0.0 && v != 1.0) {
      throw ConfigError(std::string(what) + ": mask is not binary");
    }
  }
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::array<FlatBlock, 4> FcnParams::blocks() {
  return {{{"W1", W1.data(), W1.rows(), W1.cols()},
           {"b1", b1.data(), b1.size(), 1},
           {"W2", W2.data(), W2.rows(), W2.cols()},
           {"b2", b2.data(), b2.size(), 1}}};
}

std::array<ConstFlatBlock, 4> FcnParams::blocks() const {
  return {{{"W1", W1.data(), W1.rows(), W1.cols()},
           {"b1", b1.data(), b1.size(), 1},
           {"W2", W2.data(), W2.rows(), W2.cols()},
           {"b2", b2.data(), b2.size(), 1}}};
}

FcnParams init_fcn(int height, int width, int hidden, double init_scale,
                   std::uint64_t seed) {
  if (height < 1 || width < 1) throw ConfigError("fcn grid must be positive");
  const int n = height * width;
  if (hidden < 1) hidden = n;
  FcnParams p;
  p.height = height;
  p.width = width;
  p.hidden = hidden;
  p.W1.resize(hidden, n);
  p.b1 = Eigen::VectorXd::Zero(hidden);
  p.W2.resize(kNumClasses * n, hidden);
  p.b2 = Eigen::VectorXd::Zero(kNumClasses * n);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U1(-init_scale / std::sqrt(static_cast<double>(n)),
                                            init_scale / std::sqrt(static_cast<double>(n)));
  std::uniform_real_distribution<double> U2(-init_scale / std::sqrt(static_cast<double>(hidden)),
                                            init_scale / std::sqrt(static_cast<double>(hidden)));
  for (Eigen::Index r = 0; r < p.W1.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.W1.cols(); ++c) p.W1(r, c) = U1(rng);
  }
  for (Eigen::Index r = 0; r < p.W2.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.W2.cols(); ++c) p.W2(r, c) = U2(rng);
  }
  return p;
}

FcnParams zeros_like(const FcnParams& p) {
  FcnParams z = p;
  z.W1.setZero();
  z.b1.setZero();
  z.W2.setZero();
  z.b2.setZero();
  return z;
}

FcnCache fcn_forward(const Field& image, const FcnParams& params) {
  if (image.size() != params.size()) {
    throw ShapeError("fcn_forward: image does not match params");
  }
  FcnCache c;
  const Eigen::VectorXd x = to_vector(image);
  c.pre = params.W1 * x + params.b1;
  c.hidden = c.pre.cwiseMax(0.0);
  c.logits = params.W2 * c.hidden + params.b2;
  softmax_rows(c.logits, c.yhat);
  return c;
}

FcnParams fcn_backward(const FcnCache& cache, const Field& image,
                       const Eigen::MatrixXd& y, const FcnParams& params) {
  const int n = params.size();
  if (y.rows() != n || y.cols() != kNumClasses) {
    throw ShapeError("fcn_backward: target shape mismatch");
  }
  FcnParams g = zeros_like(params);
  Eigen::VectorXd dlogits(kNumClasses * n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < kNumClasses; ++k) {
      dlogits(i * kNumClasses + k) = cache.yhat(i, k) - y(i, k);
    }
  }
  g.W2.noalias() = dlogits * cache.hidden.transpose();
  g.b2 = dlogits;
  Eigen::VectorXd dh = params.W2.transpose() * dlogits;
  for (Eigen::Index k = 0; k < dh.size(); ++k) {
    if (cache.pre(k) <= 0.0) dh(k) = 0.0;
  }
  g.W1.noalias() = dh * to_vector(image).transpose();
  g.b1 = dh;
  return g;
}

FcnTrainResult train_fcn(const std::vector<const Sample*>& train_set, int height,
                         int width, int hidden, double init_scale,
                         const TrainConfig& cfg,
                         const std::vector<const Sample*>* validation,
                         std::function<void(const EpochStats&)> on_epoch) {
  if (train_set.empty()) throw ConfigError("training set is empty");
  for (const Sample* s : train_set) {
    if (s->image.height != height || s->image.width != width) {
      throw ShapeError("sample " + s->id + " does not match the configured grid");
    }
  }
  FcnTrainResult result;
  result.params = init_fcn(height, width, hidden, init_scale, cfg.seed);
  OptState opt;
  opt_state_init(opt, static_cast<const FcnParams&>(result.params).blocks());

  std::vector<Eigen::MatrixXd> targets;
  for (const Sample* s : train_set) targets.push_back(one_hot_targets(s->mask));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      const FcnCache cache = fcn_forward(train_set[i]->image, result.params);
      loss_sum += cross_entropy(cache.yhat, targets[i]);
      const FcnParams grad =
          fcn_backward(cache, train_set[i]->image, targets[i], result.params);
      auto pb = result.params.blocks();
      auto gb = static_cast<const FcnParams&>(grad).blocks();
      rmsprop_step(std::span<FlatBlock>(pb), std::span<const ConstFlatBlock>(gb),
                   opt, lr, cfg);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.mean_loss = loss_sum / static_cast<double>(train_set.size());
    if (validation && !validation->empty()) {
      double f_sum = 0.0;
      for (const Sample* s : *validation) {
        const FcnCache cache = fcn_forward(s->image, result.params);
        f_sum += f_measure(predict_mask(cache.yhat, height, width), s->mask).f;
      }
      stats.val_fmeasure = f_sum / static_cast<double>(validation->size());
      stats.has_val = true;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

GradCheckReport grad_check_fcn(int height, int width, double h, double tol,
                               std::uint64_t seed) {
  FcnParams params = init_fcn(height, width, 0, 1.0, derive_seed(seed, "fcn/params"));
  std::mt19937_64 rng(derive_seed(seed, "fcn/data"));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Field image(height, width);
  for (double& v : image.values) v = U(rng);
  Field mask(height, width);
  for (double& v : mask.values) v = U(rng) < 0.5 ? 0.0 : 1.0;
  const Eigen::MatrixXd y = one_hot_targets(mask);

  const FcnCache cache = fcn_forward(image, params);
  const FcnParams analytic = fcn_backward(cache, image, y, params);

  auto loss_fn = [&]() { return cross_entropy(fcn_forward(image, params).yhat, y); };
  auto pb = params.blocks();
  auto ab = static_cast<const FcnParams&>(analytic).blocks();
  return finite_diff_check(std::span<FlatBlock>(pb),
                           std::span<const ConstFlatBlock>(ab), loss_fn, h, tol);
}

namespace {

void append_le32(std::string& out, std::int32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff));
  }
}

std::int32_t read_le32(const std::string& bytes, std::size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += 4;
  return static_cast<std::int32_t>(v);
}

}  // namespace

void save_fcn(const FcnParams& params, const std::string& path) {
  std::string bytes;
  bytes += "FCN1";
  append_le32(bytes, params.height);
  append_le32(bytes, params.width);
  append_le32(bytes, kNumClasses);
  append_le32(bytes, params.hidden);
  for (ConstFlatBlock blk : params.blocks()) {
    for (std::ptrdiff_t r = 0; r < blk.rows; ++r) {
      for (std::ptrdiff_t c = 0; c < blk.cols; ++c) {
        const double v = blk.data[c * blk.rows + r];
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
          bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

FcnParams load_fcn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 20 || bytes.compare(0, 4, "FCN1") != 0) {
    throw FormatError("fcn container magic: expected FCN1 in " + path);
  }
  std::size_t pos = 4;
  const int height = read_le32(bytes, pos);
  const int width = read_le32(bytes, pos);
  const int classes = read_le32(bytes, pos);
  const int hidden = read_le32(bytes, pos);
  if (height < 1 || width < 1 || hidden < 1) {
    throw FormatError("fcn container header: bad dimensions in " + path);
  }
  if (classes != kNumClasses) {
    throw FormatError("fcn container classes: expected 2 in " + path);
  }
  FcnParams p = init_fcn(height, width, hidden, 0.0, 0);
  for (FlatBlock blk : p.blocks()) {
    const std::size_t need = static_cast<std::size_t>(blk.size()) * 8;
    if (bytes.size() - pos < need) {
      throw FormatError("fcn container payload: truncated at block " +
                        std::string(blk.name) + " in " + path);
    }
    for (std::ptrdiff_t r = 0; r < blk.rows; ++r) {
      for (std::ptrdiff_t c = 0; c < blk.cols; ++c) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
          bits |= static_cast<std::uint64_t>(
                      static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)]))
                  << (8 * i);
        }
        pos += 8;
        std::memcpy(&blk.data[c * blk.rows + r], &bits, sizeof(double));
      }
    }
  }
  if (pos != bytes.size()) {
    throw FormatError("fcn container payload: trailing bytes in " + path);
  }
  return p;
}

Prf f_measure(const Field& pred, const Field& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("f_measure: shape mismatch");
  require_binary(pred, "f_measure pred");
  require_binary(gt, "f_measure gt");
  long tp = 0, fp = 0, fn = 0;
  for (int k = 0; k < pred.size(); ++k) {
    const bool p = pred.values[static_cast<std::size_t>(k)] != 0.0;
    const bool g = gt.values[static_cast<std::size_t>(k)] != 0.0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  Prf out;
  out.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  out.f = out.precision + out.recall > 0
              ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
              : 0.0;
  return out;
}

double iou(const Field& pred, const Field& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("iou: shape mismatch");
  require_binary(pred, "iou pred");
  require_binary(gt, "iou gt");
  long tp = 0, uni = 0;
  for (int k = 0; k < pred.size(); ++k) {
    const bool p = pred.values[static_cast<std::size_t>(k)] != 0.0;
    const bool g = gt.values[static_cast<std::size_t>(k)] != 0.0;
    tp += p && g;
    uni += p || g;
  }
  return uni > 0 ? static_cast<double>(tp) / uni : 1.0;
}

MethodReport evaluate_method(const std::string& name,
                             const std::function<Field(const Field&)>& segment_fn,
                             const std::vector<const Sample*>& samples,
                             const std::string& out_dir, int runs) {
  if (samples.empty()) throw ConfigError("no samples to evaluate");
  runs = std::max(1, runs);
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
  }
  // Warm-up pass, excluded from the statistics.
  (void)segment_fn(samples.front()->image);

  MethodReport report;
  report.method = name;
  std::vector<double> times;
  times.reserve(samples.size());
  for (const Sample* s : samples) {
    Field mask;
    std::vector<double> run_times(static_cast<std::size_t>(runs));
    for (int r = 0; r < runs; ++r) {
      const double t0 = now_seconds();
      mask = segment_fn(s->image);
      run_times[static_cast<std::size_t>(r)] = now_seconds() - t0;
    }
    std::sort(run_times.begin(), run_times.end());
    times.push_back(run_times[run_times.size() / 2]);

    const Prf prf = f_measure(mask, s->mask);
    report.precision += prf.precision;
    report.recall += prf.recall;
    report.fmeasure += prf.f;
    report.iou += iou(mask, s->mask);
    if (!out_dir.empty()) {
      write_pgm(mask, (fs::path(out_dir) / ("pred_" + name + "_" + s->id + ".pgm")).string());
    }
  }
  const double count = static_cast<double>(samples.size());
  report.precision /= count;
  report.recall /= count;
  report.fmeasure /= count;
  report.iou /= count;
  report.mean_time_s = 0.0;
  for (double t : times) report.mean_time_s += t;
  report.mean_time_s /= count;
  std::sort(times.begin(), times.end());
  report.median_time_s = times[times.size() / 2];
  return report;
}

BenchReport run_benchmark(const std::vector<const Sample*>& samples,
                          const BenchConfig& bench, const BenchInputs& inputs,
                          const std::string& out_dir) {
  BenchReport report;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string mask_dir = (fs::path(out_dir) / "masks").string();

  for (const std::string& method : bench.methods) {
    std::function<Field(const Field&)> fn;
    if (method == "cls") {
      const ChanVeseConfig cfg = inputs.cls;
      fn = [cfg](const Field& img) { return segment_cls(img, cfg).mask; };
    } else if (method == "rls") {
      if (!inputs.rls_params) throw ConfigError("rls evaluation needs trained params");
      const ParamSet* p = inputs.rls_params;
      const RlsConfig cfg = inputs.rls;
      fn = [p, cfg](const Field& img) {
        return predict_mask(forward(img, *p, cfg).yhat, cfg.height, cfg.width);
      };
    } else if (method == "fcn") {
      if (!inputs.fcn_params) throw ConfigError("fcn evaluation needs trained params");
      const FcnParams* p = inputs.fcn_params;
      fn = [p](const Field& img) {
        return predict_mask(fcn_forward(img, *p).yhat, p->height, p->width);
      };
    } else {
      throw ConfigError("unknown method '" + method + "' (valid: cls, rls, fcn)");
    }
    report.methods.push_back(
        evaluate_method(method, fn, samples, mask_dir, bench.runs_per_image));
  }
  return report;
}

std::string bench_csv_header() {
  return "method,precision,recall,fmeasure,iou,mean_time_s,median_time_s";
}

void write_bench_csv(const BenchReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << bench_csv_header() << "\n";
  for (const MethodReport& m : report.methods) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.6g,%.6g\n",
                  m.method.c_str(), m.precision, m.recall, m.fmeasure, m.iou,
                  m.mean_time_s, m.median_time_s);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace rlseg
