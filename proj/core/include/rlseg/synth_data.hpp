#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rlseg/field.hpp"

namespace rlseg {

enum class ShapeKind { disk, rectangle, multi_blob };

struct Blob {
  double cx = 0.5, cy = 0.5, r = 0.1;
};

// Normalized [0,1]^2 geometry; intensities in [0,1].
struct ShapeSpec {
  ShapeKind kind = ShapeKind::disk;
  double cx = 0.5, cy = 0.5;   // center
  double rx = 0.25, ry = 0.25; // radius / half-extent per axis
  std::vector<Blob> blobs;     // multi_blob only
  double fg = 1.0, bg = 0.0;
};

struct DegradeSpec {
  double gaussian_sigma = 0.0;
  double salt_pepper_frac = 0.0;
  int blur_radius = 0;  // box blur, pixels
};

struct AffineSpec {
  double rotation_deg = 0.0;
  double dx = 0.0, dy = 0.0;  // translation, pixels
  double scale = 1.0;
  bool flip_h = false, flip_v = false;
};

struct Sample {
  std::string id;
  std::string split;  // "train" or "test"
  Field image;
  Field mask;  // values in {0,1}
  ShapeSpec shape;
  AffineSpec affine;
  DegradeSpec degrade_spec;
  std::uint64_t seed = 0;
};

struct Dataset {
  int height = 0, width = 0;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;

  std::vector<const Sample*> split(const std::string& tag) const;
};

// Analytic point-membership at pixel centers; image = bg + (fg-bg) * mask.
std::pair<Field, Field> render_shape(const ShapeSpec& spec, int height, int width);

// Box blur, then additive gaussian noise, then salt-pepper, then clamp to
// [0,1]. Deterministic per seed.
Field degrade(const Field& image, const DegradeSpec& spec, std::uint64_t seed);

// One affine map applied to both grids by inverse mapping: bilinear for the
// image (out-of-frame reads fill_value), nearest for the mask (fills 0).
std::pair<Field, Field> augment(const Field& image, const Field& mask,
                                const AffineSpec& spec, double fill_value = 0.0);

Field resize_bilinear(const Field& src, int height, int width);
Field resize_nearest(const Field& src, int height, int width);

// Generation ranges for the randomized samples. Shapes are rendered at
// render_scale times the target size, augmented and degraded, then resized.
struct GenConfig {
  int count = 400;
  int height = 32, width = 32;
  int render_scale = 2;
  double sigma_min = 0.0, sigma_max = 0.2;
  double salt_pepper_min = 0.0, salt_pepper_max = 0.1;
  int blur_max = 1;
  double rotation_max_deg = 30.0;
  double translate_max = 0.06;  // fraction of the render size
  double scale_min = 0.8, scale_max = 1.25;
  bool allow_flips = true;
  double fg_min = 0.6, fg_max = 0.95;
  double bg_min = 0.05, bg_max = 0.4;
  std::uint64_t seed = 0;

  static GenConfig desk();         // 200 train / 200 test at 32x32
  static GenConfig paper_scale();  // 3000 train / 3000 test at 64x64
};

// Draws every sample from the seeded generator, splits 50/50 by a seeded
// shuffle, writes  <dir>/{train,test}/img_<id>.pgm + mask_<id>.pgm  and
// <dir>/manifest.json with per-file checksums. Returned samples hold the
// same quantized pixel data as the files.
Dataset build_dataset(const GenConfig& cfg, const std::string& out_dir,
                      int threads = 1);

// Reads a manifest written by build_dataset and all referenced files,
// verifying checksums.
Dataset load_dataset(const std::string& dir);

}  // namespace rlseg
