#include "rlseg/trainer.hpp"

#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "rlseg/chan_vese.hpp"
#include "rlseg/errors.hpp"
#include "rlseg/eval.hpp"
#include "rlseg/rng.hpp"

namespace rlseg {

namespace {

// dM accumulation and M^T products, honoring the elementwise parameterization.
void add_outer(Eigen::MatrixXd& grad, const Eigen::VectorXd& out_side,
               const Eigen::VectorXd& in_side, bool diagonal) {
  if (!diagonal) {
    grad.noalias() += out_side * in_side.transpose();
  } else {
    grad.col(0) += out_side.cwiseProduct(in_side);
  }
}

Eigen::VectorXd apply_transpose(const Eigen::MatrixXd& M,
                                const Eigen::VectorXd& v, bool diagonal) {
  if (!diagonal) return M.transpose() * v;
  return M.col(0).cwiseProduct(v);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.eta_floor > 0) || cfg.eta0 < cfg.eta_floor) {
    throw ConfigError("need 0 < eta_floor <= eta0");
  }
  if (cfg.halve_every < 1) throw ConfigError("halve_every must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.rho_m < 0 || cfg.rho_m >= 1 || cfg.rms_decay < 0 || cfg.rms_decay >= 1) {
    throw ConfigError("need 0 <= rho_m, rms_decay < 1");
  }
  if (cfg.rms_eps <= 0) throw ConfigError("rms_eps must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

}  // namespace

BpttMode bptt_mode_from_name(const std::string& name) {
  if (name == "truncated") return BpttMode::truncated;
  if (name == "full") return BpttMode::full;
  throw ConfigError("unknown backprop mode '" + name + "' (truncated|full)");
}

const char* bptt_mode_name(BpttMode mode) {
  return mode == BpttMode::truncated ? "truncated" : "full";
}

double cross_entropy(const Eigen::MatrixXd& yhat, const Eigen::MatrixXd& y) {
  if (yhat.rows() != y.rows() || yhat.cols() != y.cols()) {
    throw ShapeError("cross_entropy: prediction/target shape mismatch");
  }
  double loss = 0.0;
  for (Eigen::Index n = 0; n < yhat.rows(); ++n) {
    for (Eigen::Index k = 0; k < yhat.cols(); ++k) {
      if (y(n, k) == 0.0) continue;
      double p = yhat(n, k);
      p = p < 1e-12 ? 1e-12 : (p > 1.0 ? 1.0 : p);
      loss -= y(n, k) * std::log(p);
    }
  }
  return loss;
}

Eigen::MatrixXd one_hot_targets(const Field& mask) {
  Eigen::MatrixXd y(mask.size(), kNumClasses);
  for (int k = 0; k < mask.size(); ++k) {
    const bool fg = mask.values[static_cast<std::size_t>(k)] > 0.5;
    y(k, 0) = fg ? 0.0 : 1.0;
    y(k, 1) = fg ? 1.0 : 0.0;
  }
  return y;
}

ParamSet backward(const ForwardCache& cache, const Field& image,
                  const Eigen::MatrixXd& y, const ParamSet& params,
                  BpttMode mode) {
  const int n = params.size();
  const int t_count = static_cast<int>(cache.steps.size());
  if (t_count == 0) throw ShapeError("backward: empty cache");
  if (image.size() != n || cache.phi0.size() != n) {
    throw ShapeError("backward: cache/params size mismatch");
  }
  if (y.rows() != n || y.cols() != kNumClasses) {
    throw ShapeError("backward: target shape mismatch");
  }
  const bool diag = params.diagonal;
  const Eigen::VectorXd I = to_vector(image);
  ParamSet g = zeros_like(params);

  // Softmax + cross-entropy collapse to (yhat - y) on the logits.
  Eigen::VectorXd dlogits(kNumClasses * n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < kNumClasses; ++k) {
      dlogits(i * kNumClasses + k) = cache.yhat(i, k) - y(i, k);
    }
  }

  const Eigen::VectorXd& phi_last = cache.steps.back().phi;
  if (!diag) {
    g.V.noalias() += dlogits * phi_last.transpose();
  } else {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < kNumClasses; ++k) {
        g.V(i * kNumClasses + k, 0) += dlogits(i * kNumClasses + k) * phi_last(i);
      }
    }
  }
  g.bV += dlogits;

  Eigen::VectorXd dphi(n);
  if (!diag) {
    dphi.noalias() = params.V.transpose() * dlogits;
  } else {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = 0; k < kNumClasses; ++k) {
        acc += params.V(i * kNumClasses + k, 0) * dlogits(i * kNumClasses + k);
      }
      dphi(i) = acc;
    }
  }

  for (int t = t_count - 1; t >= 0; --t) {
    const StepCache& s = cache.steps[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& phi_prev =
        t == 0 ? cache.phi0 : cache.steps[static_cast<std::size_t>(t - 1)].phi;

    // phi_t = z .* phi_prev + (1-z) .* o
    const Eigen::VectorXd dz = dphi.cwiseProduct(phi_prev - s.o);
    const Eigen::VectorXd do_ = dphi.cwiseProduct(Eigen::VectorXd::Ones(n) - s.z);
    Eigen::VectorXd dphi_prev = dphi.cwiseProduct(s.z);

    // o = tanh(Uo x + Wo (phi_prev .* r) + bo)
    const Eigen::VectorXd dso =
        do_.cwiseProduct(Eigen::VectorXd::Ones(n) - s.o.cwiseProduct(s.o));
    add_outer(g.Uo, dso, s.x, diag);
    add_outer(g.Wo, dso, phi_prev.cwiseProduct(s.r), diag);
    g.bo += dso;
    Eigen::VectorXd dx = apply_transpose(params.Uo, dso, diag);
    const Eigen::VectorXd dpr = apply_transpose(params.Wo, dso, diag);
    dphi_prev += dpr.cwiseProduct(s.r);
    const Eigen::VectorXd dr = dpr.cwiseProduct(phi_prev);

    // r = sigmoid(Ur x + Wr phi_prev + br)
    const Eigen::VectorXd dsr =
        dr.cwiseProduct(s.r).cwiseProduct(Eigen::VectorXd::Ones(n) - s.r);
    add_outer(g.Ur, dsr, s.x, diag);
    add_outer(g.Wr, dsr, phi_prev, diag);
    g.br += dsr;
    dx += apply_transpose(params.Ur, dsr, diag);
    dphi_prev += apply_transpose(params.Wr, dsr, diag);

    // z = sigmoid(Uz x + Wz phi_prev + bz)
    const Eigen::VectorXd dsz =
        dz.cwiseProduct(s.z).cwiseProduct(Eigen::VectorXd::Ones(n) - s.z);
    add_outer(g.Uz, dsz, s.x, diag);
    add_outer(g.Wz, dsz, phi_prev, diag);
    g.bz += dsz;
    dx += apply_transpose(params.Uz, dsz, diag);
    dphi_prev += apply_transpose(params.Wz, dsz, diag);

    // x = kappa - Ug a + Wg b
    add_outer(g.Ug, -dx, s.geom.a, diag);
    add_outer(g.Wg, dx, s.geom.b, diag);

    if (mode == BpttMode::full) {
      // Geometry paths: a, b through the region means, kappa through the
      // difference stencil.
      const Eigen::VectorXd da = -apply_transpose(params.Ug, dx, diag);
      const Eigen::VectorXd db = apply_transpose(params.Wg, dx, diag);
      double dc1 = 0.0, dc2 = 0.0;
      for (int k = 0; k < n; ++k) {
        dc1 += da(k) * -2.0 * (I(k) - s.geom.c1);
        dc2 += db(k) * -2.0 * (I(k) - s.geom.c2);
      }
      for (int k = 0; k < n; ++k) {
        const double d = dirac(phi_prev(k), cache.epsilon);
        dphi_prev(k) += dc1 * d * (I(k) - s.geom.c1) / s.geom.in_mass;
        dphi_prev(k) -= dc2 * d * (I(k) - s.geom.c2) / s.geom.out_mass;
      }
      const Field adj = curvature_adjoint(to_field(phi_prev, params.height, params.width),
                                          to_field(dx, params.height, params.width));
      dphi_prev += to_vector(adj);
    }

    dphi = std::move(dphi_prev);
  }
  return g;
}

void opt_state_init(OptState& st, std::span<const ConstFlatBlock> blocks) {
  st.rms.clear();
  st.momentum.clear();
  for (const ConstFlatBlock& b : blocks) {
    st.rms.push_back(Eigen::VectorXd::Zero(b.size()));
    st.momentum.push_back(Eigen::VectorXd::Zero(b.size()));
  }
}

void rmsprop_step(std::span<FlatBlock> params, std::span<const ConstFlatBlock> grads,
                  OptState& st, double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("rmsprop: block count mismatch");
  if (st.rms.size() != params.size()) {
    throw ShapeError("rmsprop: optimizer state not initialized for these blocks");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    const Eigen::Index count = grads[b].size();
    if (params[b].size() != count || st.rms[b].size() != count) {
      throw ShapeError("rmsprop: block size mismatch at " + std::string(params[b].name));
    }
    Eigen::Map<const Eigen::ArrayXd> g(grads[b].data, count);
    Eigen::Map<Eigen::ArrayXd> theta(params[b].data, count);
    double scale = 1.0;
    if (cfg.grad_clip > 0) {
      const double nrm = std::sqrt((g * g).sum());
      if (nrm > cfg.grad_clip) scale = cfg.grad_clip / nrm;
    }
    Eigen::ArrayXd geff = g * scale;
    st.rms[b].array() = cfg.rms_decay * st.rms[b].array() + (1.0 - cfg.rms_decay) * geff.square();
    st.momentum[b].array() =
        cfg.rho_m * st.momentum[b].array() +
        lr * geff / (st.rms[b].array() + cfg.rms_eps).sqrt();
    theta -= st.momentum[b].array();
  }
}

void rmsprop_update(ParamSet& params, const ParamSet& grads, OptState& st,
                    double lr, const TrainConfig& cfg) {
  auto pb = params.blocks();
  auto gb = static_cast<const ParamSet&>(grads).blocks();
  if (st.rms.empty()) opt_state_init(st, gb);
  rmsprop_step(std::span<FlatBlock>(pb), std::span<const ConstFlatBlock>(gb), st, lr, cfg);
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  const double lr = cfg.eta0 * std::pow(0.5, epoch / cfg.halve_every);
  return std::max(cfg.eta_floor, lr);
}

TrainResult train(const std::vector<const Sample*>& train_set,
                  const RlsConfig& rls_cfg, const TrainConfig& train_cfg,
                  const TrainOptions& opts) {
  validate(train_cfg);
  if (train_set.empty()) throw ConfigError("training set is empty");
  for (const Sample* s : train_set) {
    if (s->image.height != rls_cfg.height || s->image.width != rls_cfg.width) {
      throw ShapeError("sample " + s->id + " does not match the configured grid");
    }
  }

  TrainResult result;
  result.params = opts.initial ? *opts.initial : init_params(rls_cfg);
  opt_state_init(result.opt, static_cast<const ParamSet&>(result.params).blocks());
  result.opt.epoch = opts.start_epoch;

  std::vector<Eigen::MatrixXd> targets;
  targets.reserve(train_set.size());
  for (const Sample* s : train_set) targets.push_back(one_hot_targets(s->mask));

  for (int e = 0; e < train_cfg.epochs; ++e) {
    const int epoch = opts.start_epoch + e;
    const double lr = lr_schedule(epoch, train_cfg);
    double loss_sum = 0.0;
    int in_batch = 0;
    ParamSet batch_grad = zeros_like(result.params);
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      const ForwardCache cache = forward(train_set[i]->image, result.params, rls_cfg);
      loss_sum += cross_entropy(cache.yhat, targets[i]);
      ParamSet grad =
          backward(cache, train_set[i]->image, targets[i], result.params, opts.mode);
      if (train_cfg.batch_size == 1) {
        rmsprop_update(result.params, grad, result.opt, lr, train_cfg);
        continue;
      }
      auto bb = batch_grad.blocks();
      auto gb = static_cast<const ParamSet&>(grad).blocks();
      for (std::size_t b = 0; b < bb.size(); ++b) {
        Eigen::Map<Eigen::ArrayXd>(bb[b].data, bb[b].size()) +=
            Eigen::Map<const Eigen::ArrayXd>(gb[b].data, gb[b].size());
      }
      ++in_batch;
      if (in_batch == train_cfg.batch_size || i + 1 == train_set.size()) {
        for (FlatBlock blk : batch_grad.blocks()) {
          Eigen::Map<Eigen::ArrayXd>(blk.data, blk.size()) /= in_batch;
        }
        rmsprop_update(result.params, batch_grad, result.opt, lr, train_cfg);
        batch_grad = zeros_like(result.params);
        in_batch = 0;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.mean_loss = loss_sum / static_cast<double>(train_set.size());
    if (opts.validation && !opts.validation->empty()) {
      double f_sum = 0.0;
      for (const Sample* s : *opts.validation) {
        const ForwardCache cache = forward(s->image, result.params, rls_cfg);
        const Field mask = predict_mask(cache.yhat, rls_cfg.height, rls_cfg.width);
        f_sum += f_measure(mask, s->mask).f;
      }
      stats.val_fmeasure = f_sum / static_cast<double>(opts.validation->size());
      stats.has_val = true;
    }
    result.history.push_back(stats);
    result.opt.epoch = epoch + 1;
    if (opts.on_epoch) opts.on_epoch(stats);
  }
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,lr,mean_loss,val_fmeasure\n";
  for (const EpochStats& s : history) {
    char buf[128];
    if (s.has_val) {
      std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g\n", s.epoch, s.lr,
                    s.mean_loss, s.val_fmeasure);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,\n", s.epoch, s.lr,
                    s.mean_loss);
    }
    out << buf;
  }
  if (!out) throw IoError("short write to " + path);
}

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const GradCheckBlock& b : blocks) m = std::max(m, b.max_rel_err);
  return m;
}

GradCheckReport finite_diff_check(std::span<FlatBlock> params,
                                  std::span<const ConstFlatBlock> analytic,
                                  const std::function<double()>& loss_fn,
                                  double h, double tol) {
  if (h <= 0) throw ConfigError("finite-difference step must be > 0");
  // Entries below the floor are compared absolutely; central differences on a
  // loss of this scale resolve entries down to ~1e-8.
  constexpr double kDenomFloor = 1e-3;
  GradCheckReport report;
  report.tol = tol;
  for (std::size_t b = 0; b < params.size(); ++b) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < params[b].size(); ++k) {
      const double saved = params[b].data[k];
      params[b].data[k] = saved + h;
      const double lp = loss_fn();
      params[b].data[k] = saved - h;
      const double lm = loss_fn();
      params[b].data[k] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double ga = analytic[b].data[k];
      const double rel =
          std::abs(ga - fd) / std::max(std::abs(ga) + std::abs(fd), kDenomFloor);
      worst = std::max(worst, rel);
    }
    report.blocks.push_back({params[b].name, worst});
  }
  report.pass = report.max_rel_err() <= tol;
  return report;
}

GradCheckReport grad_check(const RlsConfig& cfg, BpttMode mode, double h,
                           double tol, std::uint64_t seed) {
  RlsConfig rc = cfg;
  rc.seed = derive_seed(seed, "gradcheck/params");
  ParamSet params = init_params(rc);

  // Random image and target mask.
  std::mt19937_64 rng(derive_seed(seed, "gradcheck/data"));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Field image(rc.height, rc.width);
  for (double& v : image.values) v = U(rng);
  Field mask(rc.height, rc.width);
  for (double& v : mask.values) v = U(rng) < 0.5 ? 0.0 : 1.0;
  const Eigen::MatrixXd y = one_hot_targets(mask);

  const ForwardCache cache = forward(image, params, rc);
  const ParamSet analytic = backward(cache, image, y, params, mode);

  std::vector<ForceInput> frozen;
  if (mode == BpttMode::truncated) {
    for (const StepCache& s : cache.steps) frozen.push_back(s.geom);
  }
  auto loss_fn = [&]() {
    const ForwardCache c = mode == BpttMode::full
                               ? forward(image, params, rc)
                               : forward_frozen_geometry(image, params, rc, frozen);
    return cross_entropy(c.yhat, y);
  };

  auto pb = params.blocks();
  auto ab = static_cast<const ParamSet&>(analytic).blocks();
  return finite_diff_check(std::span<FlatBlock>(pb),
                           std::span<const ConstFlatBlock>(ab), loss_fn, h, tol);
}

}  // namespace rlseg
