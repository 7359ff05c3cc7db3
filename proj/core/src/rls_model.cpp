#include "rlseg/rls_model.hpp"

#include <cassert>
#include <limits>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "rlseg/chan_vese.hpp"
#include "rlseg/errors.hpp"

namespace rlseg {

namespace {

void require_consistent(const ParamSet& p, const RlsConfig& cfg) {
  if (p.height != cfg.height || p.width != cfg.width || p.diagonal != cfg.diagonal) {
    throw ShapeError("params built for " + std::to_string(p.height) + "x" +
                     std::to_string(p.width) +
                     (p.diagonal ? " (diagonal)" : " (dense)") +
                     " do not match config " + std::to_string(cfg.height) + "x" +
                     std::to_string(cfg.width));
  }
}

// Saturated activations round to the closed bounds in double precision; the
// true values never reach them, so clamp back into the open interval. This
// keeps the gate-range and convex-combination invariants exact.
inline double sigmoid(double v) {
  static const double kAlmostOne = std::nextafter(1.0, 0.0);
  const double s = 1.0 / (1.0 + std::exp(-v));
  if (s >= 1.0) return kAlmostOne;
  if (s <= 0.0) return std::numeric_limits<double>::denorm_min();
  return s;
}

inline double tanh_open(double v) {
  static const double kAlmostOne = std::nextafter(1.0, 0.0);
  const double t = std::tanh(v);
  if (t >= 1.0) return kAlmostOne;
  if (t <= -1.0) return -kAlmostOne;
  return t;
}

// M v, honoring the elementwise parameterization.
Eigen::VectorXd apply(const Eigen::MatrixXd& M, const Eigen::VectorXd& v,
                      bool diagonal) {
  if (!diagonal) return M * v;
  return M.col(0).cwiseProduct(v);
}

// Output head: logits[n*K + k] = row (n*K + k) of V applied to phi.
Eigen::VectorXd apply_output(const Eigen::MatrixXd& V, const Eigen::VectorXd& phi,
                             bool diagonal) {
  if (!diagonal) return V * phi;
  const Eigen::Index n = phi.size();
  Eigen::VectorXd out(kNumClasses * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < kNumClasses; ++k) {
      out(i * kNumClasses + k) = V(i * kNumClasses + k, 0) * phi(i);
    }
  }
  return out;
}

void softmax_rows(const Eigen::VectorXd& logits, Eigen::MatrixXd& yhat) {
  const Eigen::Index n = logits.size() / kNumClasses;
  yhat.resize(n, kNumClasses);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = logits(i * kNumClasses);
    for (int k = 1; k < kNumClasses; ++k) {
      m = std::max(m, logits(i * kNumClasses + k));
    }
    double sum = 0.0;
    for (int k = 0; k < kNumClasses; ++k) {
      const double e = std::exp(logits(i * kNumClasses + k) - m);
      yhat(i, k) = e;
      sum += e;
    }
    for (int k = 0; k < kNumClasses; ++k) yhat(i, k) /= sum;
  }
}

ForwardCache run_forward(const Field& image, const ParamSet& params,
                         const RlsConfig& cfg,
                         const std::vector<ForceInput>* frozen) {
  require_consistent(params, cfg);
  if (image.height != cfg.height || image.width != cfg.width) {
    throw ShapeError("image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " does not match config " +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (frozen && static_cast<int>(frozen->size()) != cfg.steps) {
    throw ShapeError("frozen geometry length does not match steps");
  }

  const Eigen::VectorXd I = to_vector(image);
  ForwardCache cache;
  cache.epsilon = cfg.epsilon;
  cache.phi0 =
      to_vector(checkerboard_init(cfg.height, cfg.width, cfg.checker_period));
  cache.steps.reserve(static_cast<std::size_t>(cfg.steps));

  Eigen::VectorXd phi = cache.phi0;
  for (int t = 0; t < cfg.steps; ++t) {
    StepCache s;
    s.geom = frozen ? (*frozen)[static_cast<std::size_t>(t)]
                    : force_input(I, phi, cfg.epsilon, cfg.height, cfg.width);
    s.x = gen_input(s.geom, params);
    Gates gates;
    s.phi = rls_step(s.x, phi, params, &gates);
    s.z = std::move(gates.z);
    s.r = std::move(gates.r);
    s.o = std::move(gates.o);
    phi = s.phi;
    cache.steps.push_back(std::move(s));
  }

  cache.logits = apply_output(params.V, phi, params.diagonal) + params.bV;
  softmax_rows(cache.logits, cache.yhat);
  return cache;
}

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

std::array<FlatBlock, 13> ParamSet::blocks() {
  return {{{"Ug", Ug.data(), Ug.rows(), Ug.cols()},
           {"Wg", Wg.data(), Wg.rows(), Wg.cols()},
           {"Uz", Uz.data(), Uz.rows(), Uz.cols()},
           {"Wz", Wz.data(), Wz.rows(), Wz.cols()},
           {"Ur", Ur.data(), Ur.rows(), Ur.cols()},
           {"Wr", Wr.data(), Wr.rows(), Wr.cols()},
           {"Uo", Uo.data(), Uo.rows(), Uo.cols()},
           {"Wo", Wo.data(), Wo.rows(), Wo.cols()},
           {"bz", bz.data(), bz.size(), 1},
           {"br", br.data(), br.size(), 1},
           {"bo", bo.data(), bo.size(), 1},
           {"V", V.data(), V.rows(), V.cols()},
           {"bV", bV.data(), bV.size(), 1}}};
}

std::array<ConstFlatBlock, 13> ParamSet::blocks() const {
  return {{{"Ug", Ug.data(), Ug.rows(), Ug.cols()},
           {"Wg", Wg.data(), Wg.rows(), Wg.cols()},
           {"Uz", Uz.data(), Uz.rows(), Uz.cols()},
           {"Wz", Wz.data(), Wz.rows(), Wz.cols()},
           {"Ur", Ur.data(), Ur.rows(), Ur.cols()},
           {"Wr", Wr.data(), Wr.rows(), Wr.cols()},
           {"Uo", Uo.data(), Uo.rows(), Uo.cols()},
           {"Wo", Wo.data(), Wo.rows(), Wo.cols()},
           {"bz", bz.data(), bz.size(), 1},
           {"br", br.data(), br.size(), 1},
           {"bo", bo.data(), bo.size(), 1},
           {"V", V.data(), V.rows(), V.cols()},
           {"bV", bV.data(), bV.size(), 1}}};
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z;
  z.height = p.height;
  z.width = p.width;
  z.diagonal = p.diagonal;
  z.Ug = Eigen::MatrixXd::Zero(p.Ug.rows(), p.Ug.cols());
  z.Wg = Eigen::MatrixXd::Zero(p.Wg.rows(), p.Wg.cols());
  z.Uz = Eigen::MatrixXd::Zero(p.Uz.rows(), p.Uz.cols());
  z.Wz = Eigen::MatrixXd::Zero(p.Wz.rows(), p.Wz.cols());
  z.Ur = Eigen::MatrixXd::Zero(p.Ur.rows(), p.Ur.cols());
  z.Wr = Eigen::MatrixXd::Zero(p.Wr.rows(), p.Wr.cols());
  z.Uo = Eigen::MatrixXd::Zero(p.Uo.rows(), p.Uo.cols());
  z.Wo = Eigen::MatrixXd::Zero(p.Wo.rows(), p.Wo.cols());
  z.bz = Eigen::VectorXd::Zero(p.bz.size());
  z.br = Eigen::VectorXd::Zero(p.br.size());
  z.bo = Eigen::VectorXd::Zero(p.bo.size());
  z.V = Eigen::MatrixXd::Zero(p.V.rows(), p.V.cols());
  z.bV = Eigen::VectorXd::Zero(p.bV.size());
  return z;
}

ParamSet init_params(const RlsConfig& cfg) {
  if (cfg.height < 3 || cfg.width < 3) throw ConfigError("grid must be >= 3x3");
  if (cfg.init_scale < 0) throw ConfigError("init_scale must be >= 0");
  const int n = cfg.size();
  ParamSet p;
  p.height = cfg.height;
  p.width = cfg.width;
  p.diagonal = cfg.diagonal;
  const Eigen::Index cols = cfg.diagonal ? 1 : n;

  p.Ug.resize(n, cols);
  p.Wg.resize(n, cols);
  p.Uz.resize(n, cols);
  p.Wz.resize(n, cols);
  p.Ur.resize(n, cols);
  p.Wr.resize(n, cols);
  p.Uo.resize(n, cols);
  p.Wo.resize(n, cols);
  p.bz = Eigen::VectorXd::Zero(n);
  p.br = Eigen::VectorXd::Zero(n);
  p.bo = Eigen::VectorXd::Zero(n);
  p.V.resize(kNumClasses * n, cols);
  p.bV = Eigen::VectorXd::Zero(kNumClasses * n);

  const double bound = cfg.init_scale / std::sqrt(static_cast<double>(n));
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(-bound, bound);
  // Weight matrices only; biases stay zero. Row-major fill so the draw order
  // matches the serialized layout.
  for (FlatBlock blk : p.blocks()) {
    const std::string_view name(blk.name);
    if (name[0] == 'b') continue;
    for (std::ptrdiff_t r = 0; r < blk.rows; ++r) {
      for (std::ptrdiff_t c = 0; c < blk.cols; ++c) {
        blk.data[c * blk.rows + r] = U(rng);
      }
    }
  }
  return p;
}

ForceInput force_input(const Eigen::VectorXd& image,
                       const Eigen::VectorXd& phi_prev, double eps, int height,
                       int width) {
  if (image.size() != phi_prev.size() ||
      image.size() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("force_input: image/phi/grid size mismatch");
  }
  ForceInput g;
  double in_sum = 0.0, out_sum = 0.0;
  g.in_mass = 0.0;
  g.out_mass = 0.0;
  for (Eigen::Index k = 0; k < phi_prev.size(); ++k) {
    const double h = heaviside(phi_prev(k), eps);
    g.in_mass += h;
    in_sum += image(k) * h;
    g.out_mass += 1.0 - h;
    out_sum += image(k) * (1.0 - h);
  }
  g.c1 = in_sum / g.in_mass;
  g.c2 = out_sum / g.out_mass;
  g.kappa = to_vector(curvature(to_field(phi_prev, height, width)));
  g.a = (image.array() - g.c1).square();
  g.b = (image.array() - g.c2).square();
  return g;
}

Eigen::VectorXd gen_input(const ForceInput& g, const ParamSet& params) {
  return g.kappa - apply(params.Ug, g.a, params.diagonal) +
         apply(params.Wg, g.b, params.diagonal);
}

Eigen::VectorXd gen_input(const Eigen::VectorXd& image,
                          const Eigen::VectorXd& phi_prev,
                          const ParamSet& params, double eps) {
  return gen_input(force_input(image, phi_prev, eps, params.height, params.width),
                   params);
}

Eigen::VectorXd rls_step(const Eigen::VectorXd& x,
                         const Eigen::VectorXd& phi_prev,
                         const ParamSet& params, Gates* gates) {
  if (x.size() != phi_prev.size() ||
      x.size() != static_cast<Eigen::Index>(params.size())) {
    throw ShapeError("rls_step: vector/param size mismatch");
  }
  const bool diag = params.diagonal;
  Eigen::VectorXd z =
      (apply(params.Uz, x, diag) + apply(params.Wz, phi_prev, diag) + params.bz)
          .unaryExpr([](double v) { return sigmoid(v); });
  Eigen::VectorXd r =
      (apply(params.Ur, x, diag) + apply(params.Wr, phi_prev, diag) + params.br)
          .unaryExpr([](double v) { return sigmoid(v); });
  Eigen::VectorXd o = (apply(params.Uo, x, diag) +
                       apply(params.Wo, phi_prev.cwiseProduct(r), diag) + params.bo)
                          .unaryExpr([](double v) { return tanh_open(v); });
  // o + z (phi - o): stays inside [min(phi,o), max(phi,o)] even after rounding.
  Eigen::VectorXd phi = o + z.cwiseProduct(phi_prev - o);
#ifndef NDEBUG
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    assert(z(k) > 0.0 && z(k) < 1.0);
    assert(r(k) > 0.0 && r(k) < 1.0);
    assert(o(k) > -1.0 && o(k) < 1.0);
  }
#endif
  if (gates) {
    gates->z = std::move(z);
    gates->r = std::move(r);
    gates->o = std::move(o);
  }
  return phi;
}

ForwardCache forward(const Field& image, const ParamSet& params,
                     const RlsConfig& cfg) {
  return run_forward(image, params, cfg, nullptr);
}

ForwardCache forward_frozen_geometry(const Field& image, const ParamSet& params,
                                     const RlsConfig& cfg,
                                     const std::vector<ForceInput>& frozen) {
  return run_forward(image, params, cfg, &frozen);
}

Field predict_mask(const Eigen::MatrixXd& yhat, int height, int width) {
  if (yhat.rows() != static_cast<Eigen::Index>(height) * width ||
      yhat.cols() != kNumClasses) {
    throw ShapeError("predict_mask: yhat size mismatch");
  }
  Field mask(height, width);
  for (Eigen::Index k = 0; k < yhat.rows(); ++k) {
    mask.values[static_cast<std::size_t>(k)] = yhat(k, 1) > yhat(k, 0) ? 1.0 : 0.0;
  }
  return mask;
}

void save_params(const ParamSet& params, int steps, const std::string& path) {
  std::string bytes;
  bytes += "RLS1";
  append_le32(bytes, params.height);
  append_le32(bytes, params.width);
  append_le32(bytes, kNumClasses);
  append_le32(bytes, steps);
  append_le32(bytes, params.diagonal ? 1 : 0);
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

LoadedParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();

  if (bytes.size() < 24 || bytes.compare(0, 4, "RLS1") != 0) {
    throw FormatError("param container magic: expected RLS1 in " + path);
  }
  std::size_t pos = 4;
  const std::int32_t height = read_le32(bytes, pos);
  const std::int32_t width = read_le32(bytes, pos);
  const std::int32_t classes = read_le32(bytes, pos);
  const std::int32_t steps = read_le32(bytes, pos);
  const std::int32_t flags = read_le32(bytes, pos);
  if (height < 3 || width < 3) {
    throw FormatError("param container grid: bad dimensions in " + path);
  }
  if (classes != kNumClasses) {
    throw FormatError("param container classes: expected 2 in " + path);
  }
  if (steps < 1) throw FormatError("param container steps: must be >= 1 in " + path);
  if (flags != 0 && flags != 1) {
    throw FormatError("param container flags: unknown value in " + path);
  }

  RlsConfig cfg;
  cfg.height = height;
  cfg.width = width;
  cfg.diagonal = flags == 1;
  cfg.init_scale = 0.0;
  LoadedParams lp;
  lp.params = init_params(cfg);
  lp.steps = steps;

  for (FlatBlock blk : lp.params.blocks()) {
    const std::size_t need = static_cast<std::size_t>(blk.size()) * 8;
    if (bytes.size() - pos < need) {
      throw FormatError("param container payload: truncated at block " +
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
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        blk.data[c * blk.rows + r] = v;
      }
    }
  }
  if (pos != bytes.size()) {
    throw FormatError("param container payload: trailing bytes in " + path);
  }
  return lp;
}

Eigen::VectorXd to_vector(const Field& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.values.data(), f.size());
}

Field to_field(const Eigen::VectorXd& v, int height, int width) {
  if (v.size() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("to_field: size mismatch");
  }
  Field f(height, width);
  Eigen::Map<Eigen::VectorXd>(f.values.data(), v.size()) = v;
  return f;
}

}  // namespace rlseg
