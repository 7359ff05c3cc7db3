#include "rlseg/synth_data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rlseg/errors.hpp"
#include "rlseg/pgm.hpp"
#include "rlseg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rlseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

inline int clampi(int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); }

bool inside_shape(const ShapeSpec& spec, double x, double y) {
  switch (spec.kind) {
    case ShapeKind::disk: {
      const double u = (x - spec.cx) / spec.rx;
      const double v = (y - spec.cy) / spec.ry;
      return u * u + v * v <= 1.0;
    }
    case ShapeKind::rectangle:
      return std::abs(x - spec.cx) <= spec.rx && std::abs(y - spec.cy) <= spec.ry;
    case ShapeKind::multi_blob:
      for (const Blob& b : spec.blobs) {
        const double u = x - b.cx, v = y - b.cy;
        if (u * u + v * v <= b.r * b.r) return true;
      }
      return false;
  }
  return false;
}

void validate(const ShapeSpec& spec) {
  if (spec.fg == spec.bg) throw ConfigError("shape fg and bg must differ");
  if (spec.kind == ShapeKind::multi_blob) {
    if (spec.blobs.empty()) throw ConfigError("multi_blob needs at least one blob");
    for (const Blob& b : spec.blobs) {
      if (b.r <= 0) throw ConfigError("blob radius must be > 0");
    }
  } else if (spec.rx <= 0 || spec.ry <= 0) {
    throw ConfigError("shape extent must be > 0");
  }
}

double bilinear_sample(const Field& f, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  const int x0c = clampi(x0, f.width - 1), x1c = clampi(x0 + 1, f.width - 1);
  const int y0c = clampi(y0, f.height - 1), y1c = clampi(y0 + 1, f.height - 1);
  return f.at(y0c, x0c) * (1 - fx) * (1 - fy) + f.at(y0c, x1c) * fx * (1 - fy) +
         f.at(y1c, x0c) * (1 - fx) * fy + f.at(y1c, x1c) * fx * fy;
}

struct Affine2 {
  // p_src = M p_out + t
  double m00, m01, m10, m11, tx, ty;
};

// Inverse of: translate by (dx,dy), then rotate/scale/flip about the center.
Affine2 inverse_map(const AffineSpec& spec, int height, int width) {
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const double th = spec.rotation_deg * kPi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double inv_s = 1.0 / spec.scale;
  const double fx = spec.flip_h ? -1.0 : 1.0;
  const double fy = spec.flip_v ? -1.0 : 1.0;
  // inverse = flip . scale^-1 . rot(-th), applied to (p - center - t)
  Affine2 a;
  a.m00 = fx * inv_s * c;
  a.m01 = fx * inv_s * s;
  a.m10 = -fy * inv_s * s;
  a.m11 = fy * inv_s * c;
  const double px = -cx - spec.dx, py = -cy - spec.dy;
  a.tx = a.m00 * px + a.m01 * py + cx;
  a.ty = a.m10 * px + a.m11 * py + cy;
  return a;
}

std::string kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::disk: return "disk";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::multi_blob: return "multi_blob";
  }
  return "?";
}

ShapeKind kind_from_name(const std::string& s) {
  if (s == "disk") return ShapeKind::disk;
  if (s == "rectangle") return ShapeKind::rectangle;
  if (s == "multi_blob") return ShapeKind::multi_blob;
  throw FormatError("manifest shape kind: unknown '" + s + "'");
}

json shape_to_json(const ShapeSpec& s) {
  json j{{"kind", kind_name(s.kind)}, {"fg", s.fg}, {"bg", s.bg}};
  if (s.kind == ShapeKind::multi_blob) {
    json blobs = json::array();
    for (const Blob& b : s.blobs) {
      blobs.push_back({{"cx", b.cx}, {"cy", b.cy}, {"r", b.r}});
    }
    j["blobs"] = blobs;
  } else {
    j["cx"] = s.cx;
    j["cy"] = s.cy;
    j["rx"] = s.rx;
    j["ry"] = s.ry;
  }
  return j;
}

ShapeSpec shape_from_json(const json& j) {
  ShapeSpec s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  s.fg = j.at("fg").get<double>();
  s.bg = j.at("bg").get<double>();
  if (s.kind == ShapeKind::multi_blob) {
    for (const json& b : j.at("blobs")) {
      s.blobs.push_back({b.at("cx").get<double>(), b.at("cy").get<double>(),
                         b.at("r").get<double>()});
    }
  } else {
    s.cx = j.at("cx").get<double>();
    s.cy = j.at("cy").get<double>();
    s.rx = j.at("rx").get<double>();
    s.ry = j.at("ry").get<double>();
  }
  return s;
}

// Draws one sample spec and produces its pixel data at the target size.
Sample make_sample(const GenConfig& cfg, int index) {
  Sample smp;
  {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    smp.id = buf;
  }
  smp.seed = derive_seed(cfg.seed, smp.id);
  std::mt19937_64 rng(smp.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  auto in_range = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };

  ShapeSpec& sh = smp.shape;
  const int kind_draw = static_cast<int>(U(rng) * 3.0);
  sh.kind = static_cast<ShapeKind>(kind_draw > 2 ? 2 : kind_draw);
  if (sh.kind == ShapeKind::multi_blob) {
    const int count = 2 + static_cast<int>(U(rng) * 3.0);  // 2..4
    for (int b = 0; b < count; ++b) {
      Blob blob;
      blob.r = in_range(0.08, 0.16);
      blob.cx = in_range(blob.r, 1.0 - blob.r);
      blob.cy = in_range(blob.r, 1.0 - blob.r);
      sh.blobs.push_back(blob);
    }
  } else {
    sh.rx = in_range(0.12, 0.30);
    sh.ry = sh.kind == ShapeKind::disk ? sh.rx * in_range(0.7, 1.3) : in_range(0.12, 0.30);
    sh.ry = std::min(sh.ry, 0.45);
    sh.rx = std::min(sh.rx, 0.45);
    sh.cx = in_range(sh.rx, 1.0 - sh.rx);
    sh.cy = in_range(sh.ry, 1.0 - sh.ry);
  }
  sh.fg = in_range(cfg.fg_min, cfg.fg_max);
  sh.bg = in_range(cfg.bg_min, cfg.bg_max);

  const int rh = cfg.height * cfg.render_scale;
  const int rw = cfg.width * cfg.render_scale;

  AffineSpec& af = smp.affine;
  af.rotation_deg = in_range(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  af.dx = in_range(-cfg.translate_max, cfg.translate_max) * rw;
  af.dy = in_range(-cfg.translate_max, cfg.translate_max) * rh;
  af.scale = in_range(cfg.scale_min, cfg.scale_max);
  af.flip_h = cfg.allow_flips && U(rng) < 0.5;
  af.flip_v = cfg.allow_flips && U(rng) < 0.5;

  DegradeSpec& dg = smp.degrade_spec;
  dg.gaussian_sigma = in_range(cfg.sigma_min, cfg.sigma_max);
  dg.salt_pepper_frac = in_range(cfg.salt_pepper_min, cfg.salt_pepper_max);
  dg.blur_radius =
      cfg.blur_max > 0 ? static_cast<int>(U(rng) * (cfg.blur_max + 1)) : 0;
  dg.blur_radius = std::min(dg.blur_radius, cfg.blur_max);

  auto [image, mask] = render_shape(sh, rh, rw);
  std::tie(image, mask) = augment(image, mask, af, sh.bg);
  image = degrade(image, dg, derive_seed(smp.seed, "noise"));
  image = resize_bilinear(image, cfg.height, cfg.width);
  mask = resize_nearest(mask, cfg.height, cfg.width);

  // Store what the files will hold so in-memory and reloaded runs agree.
  smp.image = decode_pgm(encode_pgm(image));
  smp.mask = mask;
  return smp;
}

}  // namespace

std::vector<const Sample*> Dataset::split(const std::string& tag) const {
  std::vector<const Sample*> out;
  for (const Sample& s : samples) {
    if (s.split == tag) out.push_back(&s);
  }
  return out;
}

std::pair<Field, Field> render_shape(const ShapeSpec& spec, int height,
                                     int width) {
  validate(spec);
  Field image(height, width), mask(height, width);
  for (int i = 0; i < height; ++i) {
    const double y = (i + 0.5) / height;
    for (int j = 0; j < width; ++j) {
      const double x = (j + 0.5) / width;
      const bool in = inside_shape(spec, x, y);
      mask.at(i, j) = in ? 1.0 : 0.0;
      image.at(i, j) = in ? spec.fg : spec.bg;
    }
  }
  return {std::move(image), std::move(mask)};
}

Field degrade(const Field& image, const DegradeSpec& spec, std::uint64_t seed) {
  if (spec.gaussian_sigma < 0 || spec.blur_radius < 0 ||
      spec.salt_pepper_frac < 0 || spec.salt_pepper_frac >= 1) {
    throw ConfigError("bad degrade spec");
  }
  Field out = image;
  if (spec.blur_radius > 0) {
    const int k = spec.blur_radius;
    Field blurred(image.height, image.width);
    const double inv = 1.0 / ((2 * k + 1) * (2 * k + 1));
    for (int i = 0; i < image.height; ++i) {
      for (int j = 0; j < image.width; ++j) {
        double sum = 0.0;
        for (int di = -k; di <= k; ++di) {
          for (int dj = -k; dj <= k; ++dj) {
            sum += image.at(clampi(i + di, image.height - 1),
                            clampi(j + dj, image.width - 1));
          }
        }
        blurred.at(i, j) = sum * inv;
      }
    }
    out = std::move(blurred);
  }
  std::mt19937_64 rng(seed);
  if (spec.gaussian_sigma > 0) {
    std::normal_distribution<double> N(0.0, spec.gaussian_sigma);
    for (double& v : out.values) v += N(rng);
  }
  if (spec.salt_pepper_frac > 0) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (double& v : out.values) {
      if (U(rng) < spec.salt_pepper_frac) v = U(rng) < 0.5 ? 0.0 : 1.0;
    }
  }
  for (double& v : out.values) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return out;
}

std::pair<Field, Field> augment(const Field& image, const Field& mask,
                                const AffineSpec& spec, double fill_value) {
  if (!image.same_shape(mask)) throw ShapeError("augment: image/mask mismatch");
  if (spec.scale < 0.5 || spec.scale > 2.0) {
    throw ConfigError("affine scale must be in [0.5, 2]");
  }
  const Affine2 a = inverse_map(spec, image.height, image.width);
  Field img_out(image.height, image.width), mask_out(image.height, image.width);
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      const double xs = a.m00 * j + a.m01 * i + a.tx;
      const double ys = a.m10 * j + a.m11 * i + a.ty;
      if (xs < 0.0 || xs > image.width - 1 || ys < 0.0 || ys > image.height - 1) {
        img_out.at(i, j) = fill_value;
        mask_out.at(i, j) = 0.0;
        continue;
      }
      img_out.at(i, j) = bilinear_sample(image, xs, ys);
      const int xn = static_cast<int>(std::lround(xs));
      const int yn = static_cast<int>(std::lround(ys));
      mask_out.at(i, j) =
          mask.at(clampi(yn, image.height - 1), clampi(xn, image.width - 1));
    }
  }
  return {std::move(img_out), std::move(mask_out)};
}

Field resize_bilinear(const Field& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  Field out(height, width);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int i = 0; i < height; ++i) {
    double ys = (i + 0.5) * sy - 0.5;
    ys = std::min(std::max(ys, 0.0), static_cast<double>(src.height - 1));
    for (int j = 0; j < width; ++j) {
      double xs = (j + 0.5) * sx - 0.5;
      xs = std::min(std::max(xs, 0.0), static_cast<double>(src.width - 1));
      out.at(i, j) = bilinear_sample(src, xs, ys);
    }
  }
  return out;
}

Field resize_nearest(const Field& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  Field out(height, width);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int i = 0; i < height; ++i) {
    const int ys = clampi(static_cast<int>((i + 0.5) * sy), src.height - 1);
    for (int j = 0; j < width; ++j) {
      const int xs = clampi(static_cast<int>((j + 0.5) * sx), src.width - 1);
      out.at(i, j) = src.at(ys, xs);
    }
  }
  return out;
}

GenConfig GenConfig::desk() { return GenConfig{}; }

GenConfig GenConfig::paper_scale() {
  GenConfig cfg;
  cfg.count = 6000;
  cfg.height = 64;
  cfg.width = 64;
  return cfg;
}

Dataset build_dataset(const GenConfig& cfg, const std::string& out_dir,
                      int threads) {
  if (cfg.count < 1) throw ConfigError("dataset count must be >= 1");
  if (cfg.height < 3 || cfg.width < 3) throw ConfigError("dataset grid too small");
  if (cfg.render_scale < 1) throw ConfigError("render_scale must be >= 1");

  Dataset ds;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.seed = cfg.seed;
  ds.samples.resize(static_cast<std::size_t>(cfg.count));

  threads = std::max(1, threads);
  if (threads == 1) {
    for (int i = 0; i < cfg.count; ++i) ds.samples[static_cast<std::size_t>(i)] = make_sample(cfg, i);
  } else {
    std::vector<std::future<void>> jobs;
    std::atomic<int> next{0};
    for (int w = 0; w < threads; ++w) {
      jobs.push_back(std::async(std::launch::async, [&]() {
        for (int i = next.fetch_add(1); i < cfg.count; i = next.fetch_add(1)) {
          ds.samples[static_cast<std::size_t>(i)] = make_sample(cfg, i);
        }
      }));
    }
    for (auto& j : jobs) j.get();
  }

  // 50/50 split by seeded shuffle.
  std::vector<int> order(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 split_rng(derive_seed(cfg.seed, "split"));
  std::shuffle(order.begin(), order.end(), split_rng);
  const int n_train = cfg.count / 2;
  for (int pos = 0; pos < cfg.count; ++pos) {
    ds.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])].split =
        pos < n_train ? "train" : "test";
  }

  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "train", ec);
  fs::create_directories(root / "test", ec);
  if (!fs::is_directory(root / "train") || !fs::is_directory(root / "test")) {
    throw IoError("cannot create dataset directories under " + out_dir);
  }

  json manifest;
  manifest["height"] = cfg.height;
  manifest["width"] = cfg.width;
  manifest["count"] = cfg.count;
  manifest["seed"] = cfg.seed;
  json entries = json::array();
  for (const Sample& s : ds.samples) {
    const std::string img_rel = s.split + "/img_" + s.id + ".pgm";
    const std::string mask_rel = s.split + "/mask_" + s.id + ".pgm";
    const std::string img_bytes = encode_pgm(s.image);
    const std::string mask_bytes = encode_pgm(s.mask);
    for (const auto& [rel, bytes] :
         {std::pair{img_rel, img_bytes}, std::pair{mask_rel, mask_bytes}}) {
      std::ofstream out(root / rel, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + (root / rel).string());
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw IoError("short write to " + (root / rel).string());
    }
    char img_sum[32], mask_sum[32];
    std::snprintf(img_sum, sizeof(img_sum), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(img_bytes.data(), img_bytes.size())));
    std::snprintf(mask_sum, sizeof(mask_sum), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(mask_bytes.data(), mask_bytes.size())));
    json e;
    e["id"] = s.id;
    e["split"] = s.split;
    e["seed"] = s.seed;
    e["shape"] = shape_to_json(s.shape);
    e["affine"] = {{"rotation_deg", s.affine.rotation_deg}, {"dx", s.affine.dx},
                   {"dy", s.affine.dy},       {"scale", s.affine.scale},
                   {"flip_h", s.affine.flip_h}, {"flip_v", s.affine.flip_v}};
    e["degrade"] = {{"gaussian_sigma", s.degrade_spec.gaussian_sigma},
                    {"salt_pepper_frac", s.degrade_spec.salt_pepper_frac},
                    {"blur_radius", s.degrade_spec.blur_radius}};
    e["files"] = {{"image", img_rel}, {"mask", mask_rel}};
    e["checksums"] = {{"image", img_sum}, {"mask", mask_sum}};
    entries.push_back(e);
  }
  manifest["samples"] = entries;

  std::ofstream mf(root / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw IoError("cannot write " + (root / "manifest.json").string());
  mf << manifest.dump(2) << "\n";
  if (!mf) throw IoError("short write to manifest.json");
  return ds;
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream mf(root / "manifest.json");
  if (!mf) throw IoError("cannot open " + (root / "manifest.json").string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }

  Dataset ds;
  try {
    ds.height = manifest.at("height").get<int>();
    ds.width = manifest.at("width").get<int>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    for (const json& e : manifest.at("samples")) {
      Sample s;
      s.id = e.at("id").get<std::string>();
      s.split = e.at("split").get<std::string>();
      s.seed = e.at("seed").get<std::uint64_t>();
      s.shape = shape_from_json(e.at("shape"));
      const json& af = e.at("affine");
      s.affine = {af.at("rotation_deg").get<double>(), af.at("dx").get<double>(),
                  af.at("dy").get<double>(),           af.at("scale").get<double>(),
                  af.at("flip_h").get<bool>(),         af.at("flip_v").get<bool>()};
      const json& dg = e.at("degrade");
      s.degrade_spec = {dg.at("gaussian_sigma").get<double>(),
                        dg.at("salt_pepper_frac").get<double>(),
                        dg.at("blur_radius").get<int>()};
      for (const auto& [key, field] :
           {std::pair<const char*, Field Sample::*>{"image", &Sample::image},
            std::pair<const char*, Field Sample::*>{"mask", &Sample::mask}}) {
        const std::string rel = e.at("files").at(key).get<std::string>();
        std::ifstream in(root / rel, std::ios::binary);
        if (!in) throw IoError("cannot open " + (root / rel).string());
        std::ostringstream ss;
        ss << in.rdbuf();
        const std::string bytes = ss.str();
        char sum[32];
        std::snprintf(sum, sizeof(sum), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
        if (e.at("checksums").at(key).get<std::string>() != sum) {
          throw FormatError("checksum mismatch for " + (root / rel).string());
        }
        s.*field = decode_pgm(bytes, (root / rel).string());
      }
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace rlseg
