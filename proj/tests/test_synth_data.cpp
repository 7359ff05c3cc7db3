#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rlseg/errors.hpp"
#include "rlseg/synth_data.hpp"
#include "test_util.hpp"

using namespace rlseg;

TEST_CASE("render_shape: disk area matches the analytic value") {
  ShapeSpec spec;
  spec.kind = ShapeKind::disk;
  spec.cx = spec.cy = 0.5;
  spec.rx = spec.ry = 0.25;
  const auto [image, mask] = render_shape(spec, 64, 64);
  double count = 0;
  for (double v : mask.values) count += v;
  const double expected = 3.14159265358979 * 16.0 * 16.0;  // (0.25*64)^2 pi
  CHECK(std::abs(count - expected) <= 0.03 * expected);
}

TEST_CASE("render_shape: unit-intensity image equals the mask") {
  ShapeSpec spec;
  spec.kind = ShapeKind::multi_blob;
  spec.blobs = {{0.3, 0.3, 0.15}, {0.7, 0.6, 0.2}};
  spec.fg = 1.0;
  spec.bg = 0.0;
  const auto [image, mask] = render_shape(spec, 32, 32);
  CHECK(image.values == mask.values);
}

TEST_CASE("render_shape: rectangle covering the unit square") {
  ShapeSpec spec;
  spec.kind = ShapeKind::rectangle;
  spec.cx = spec.cy = 0.5;
  spec.rx = spec.ry = 0.5;
  const auto [image, mask] = render_shape(spec, 16, 16);
  for (double v : mask.values) CHECK(v == 1.0);
}

TEST_CASE("render_shape: invalid specs") {
  ShapeSpec spec;
  spec.fg = spec.bg = 0.5;
  CHECK_THROWS_AS(render_shape(spec, 8, 8), ConfigError);
  ShapeSpec blob;
  blob.kind = ShapeKind::multi_blob;
  CHECK_THROWS_AS(render_shape(blob, 8, 8), ConfigError);
}

TEST_CASE("degrade: all-zero spec is the identity") {
  const Field img = testutil::random_field(16, 16, 3);
  const Field out = degrade(img, DegradeSpec{}, 99);
  CHECK(out.values == img.values);
}

TEST_CASE("degrade: salt-pepper corruption count near expectation") {
  const Field img(64, 64, 0.5);
  DegradeSpec spec;
  spec.salt_pepper_frac = 0.1;
  const Field out = degrade(img, spec, 1234);
  int corrupted = 0;
  for (double v : out.values) corrupted += v != 0.5;
  CHECK(corrupted >= 410 * 0.8);
  CHECK(corrupted <= 410 * 1.2);
}

TEST_CASE("degrade: determinism and clamping") {
  const Field img = testutil::random_field(20, 20, 5);
  DegradeSpec spec;
  spec.gaussian_sigma = 0.3;
  spec.salt_pepper_frac = 0.05;
  spec.blur_radius = 1;
  const Field a = degrade(img, spec, 42);
  const Field b = degrade(img, spec, 42);
  CHECK(a.values == b.values);
  for (double v : a.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const Field c = degrade(img, spec, 43);
  CHECK(c.values != a.values);
}

TEST_CASE("augment: identity spec leaves both grids unchanged") {
  const Field img = testutil::random_field(12, 12, 6);
  Field mask(12, 12, 0.0);
  mask.at(4, 5) = 1.0;
  const auto [i2, m2] = augment(img, mask, AffineSpec{}, 0.25);
  CHECK(i2.values == img.values);
  CHECK(m2.values == mask.values);
}

TEST_CASE("augment: horizontal flip is an involution") {
  const Field img = testutil::random_field(9, 14, 7);
  Field mask(9, 14, 0.0);
  mask.at(2, 3) = 1.0;
  mask.at(7, 11) = 1.0;
  AffineSpec flip;
  flip.flip_h = true;
  const auto [i1, m1] = augment(img, mask, flip, 0.0);
  const auto [i2, m2] = augment(i1, m1, flip, 0.0);
  CHECK(i2.values == img.values);
  CHECK(m2.values == mask.values);
}

TEST_CASE("augment: 90-degree rotation transposes a rectangle") {
  ShapeSpec spec;
  spec.kind = ShapeKind::rectangle;
  spec.cx = spec.cy = 0.5;
  spec.rx = 0.35;
  spec.ry = 0.15;
  const auto [img, mask] = render_shape(spec, 48, 48);
  AffineSpec rot;
  rot.rotation_deg = 90.0;
  const auto [i2, m2] = augment(img, mask, rot, spec.bg);

  double before = 0, after = 0;
  for (double v : mask.values) before += v;
  for (double v : m2.values) after += v;
  CHECK(std::abs(after - before) <= 0.02 * before);

  // Extents swap: the rotated mask must be taller than wide.
  int min_i = 48, max_i = -1, min_j = 48, max_j = -1;
  for (int i = 0; i < 48; ++i) {
    for (int j = 0; j < 48; ++j) {
      if (m2.at(i, j) > 0.5) {
        min_i = std::min(min_i, i);
        max_i = std::max(max_i, i);
        min_j = std::min(min_j, j);
        max_j = std::max(max_j, j);
      }
    }
  }
  CHECK(max_i - min_i > max_j - min_j);
}

TEST_CASE("augment: mask follows the same map as the image") {
  // Coordinate ramp: after any affine map, image values at mask-interior
  // pixels track the x coordinate of the inverse-mapped point; comparing the
  // two outputs pins the mask transform to the image transform.
  Field rampx(20, 20), rampy(20, 20);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      rampx.at(i, j) = j / 19.0;
      rampy.at(i, j) = i / 19.0;
    }
  }
  Field mask(20, 20, 1.0);
  AffineSpec spec;
  spec.dx = 3.0;
  spec.dy = -2.0;
  const auto [ax, mx] = augment(rampx, mask, spec, -1.0);
  const auto [ay, my] = augment(rampy, mask, spec, -1.0);
  CHECK(mx.values == my.values);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      if (mx.at(i, j) != 1.0) continue;  // out-of-frame region
      CHECK(ax.at(i, j) == doctest::Approx((j - 3.0) / 19.0).epsilon(1e-9));
      CHECK(ay.at(i, j) == doctest::Approx((i + 2.0) / 19.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("augment: scale outside [0.5, 2] is rejected") {
  AffineSpec spec;
  spec.scale = 0.3;
  CHECK_THROWS_AS(augment(Field(8, 8), Field(8, 8), spec, 0.0), ConfigError);
}

TEST_CASE("resize: nearest keeps masks binary, bilinear interpolates") {
  const Field big = testutil::random_field(40, 40, 9);
  const Field small = resize_bilinear(big, 20, 20);
  CHECK(small.height == 20);
  Field mask(40, 40, 0.0);
  for (int i = 10; i < 30; ++i) {
    for (int j = 14; j < 22; ++j) mask.at(i, j) = 1.0;
  }
  const Field msmall = resize_nearest(mask, 20, 20);
  for (double v : msmall.values) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("build_dataset: deterministic manifests, balanced split, binary masks") {
  testutil::TempDir dir("ds");
  GenConfig cfg;
  cfg.count = 10;
  cfg.height = 16;
  cfg.width = 16;
  cfg.seed = 7;
  const Dataset a = build_dataset(cfg, dir.str("a"));
  const Dataset b = build_dataset(cfg, dir.str("b"));
  CHECK(a.split("train").size() == 5);
  CHECK(a.split("test").size() == 5);
  CHECK(testutil::read_file_bytes(dir.str("a/manifest.json")) ==
        testutil::read_file_bytes(dir.str("b/manifest.json")));

  for (const Sample& s : a.samples) {
    for (double v : s.mask.values) CHECK((v == 0.0 || v == 1.0));
    for (double v : s.image.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  // Mask files hold only {0,255}.
  const std::string mask_bytes = testutil::read_file_bytes(
      dir.str("a/" + a.samples[0].split + "/mask_" + a.samples[0].id + ".pgm"));
  bool only_binary = true;
  for (std::size_t k = mask_bytes.size() - 256; k < mask_bytes.size(); ++k) {
    const unsigned char v = static_cast<unsigned char>(mask_bytes[k]);
    only_binary = only_binary && (v == 0 || v == 255);
  }
  CHECK(only_binary);
}

TEST_CASE("build_dataset: 100 samples split 50/50") {
  testutil::TempDir dir("ds100");
  GenConfig cfg;
  cfg.count = 100;
  cfg.height = 8;
  cfg.width = 8;
  cfg.render_scale = 1;
  cfg.seed = 3;
  const Dataset ds = build_dataset(cfg, dir.str("d"));
  CHECK(ds.split("train").size() == 50);
  CHECK(ds.split("test").size() == 50);
}

TEST_CASE("build_dataset: threaded generation matches sequential") {
  testutil::TempDir dir("dsmt");
  GenConfig cfg;
  cfg.count = 12;
  cfg.height = 12;
  cfg.width = 12;
  cfg.seed = 21;
  build_dataset(cfg, dir.str("seq"), 1);
  build_dataset(cfg, dir.str("par"), 4);
  CHECK(testutil::read_file_bytes(dir.str("seq/manifest.json")) ==
        testutil::read_file_bytes(dir.str("par/manifest.json")));
}

TEST_CASE("load_dataset: round trip and checksum validation") {
  testutil::TempDir dir("dsload");
  GenConfig cfg;
  cfg.count = 6;
  cfg.height = 10;
  cfg.width = 10;
  cfg.seed = 17;
  const Dataset built = build_dataset(cfg, dir.str("d"));
  const Dataset loaded = load_dataset(dir.str("d"));
  REQUIRE(loaded.samples.size() == built.samples.size());
  for (std::size_t k = 0; k < built.samples.size(); ++k) {
    CHECK(loaded.samples[k].id == built.samples[k].id);
    CHECK(loaded.samples[k].split == built.samples[k].split);
    CHECK(loaded.samples[k].image.values == built.samples[k].image.values);
    CHECK(loaded.samples[k].mask.values == built.samples[k].mask.values);
  }

  // Tamper with one image file: the checksum must catch it.
  const std::string rel = built.samples[0].split + "/img_" + built.samples[0].id + ".pgm";
  std::string bytes = testutil::read_file_bytes(dir.str("d/" + rel));
  bytes[bytes.size() - 1] ^= 0x01;
  {
    FILE* f = std::fopen(dir.str("d/" + rel).c_str(), "wb");
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_dataset(dir.str("d")), FormatError);
}
