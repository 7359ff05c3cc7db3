#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rlseg/errors.hpp"
#include "rlseg/eval.hpp"
#include "test_util.hpp"

using namespace rlseg;

namespace {

Field random_mask(int h, int w, std::uint64_t seed, double p = 0.5) {
  Field m(h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (double& v : m.values) v = U(rng) < p ? 1.0 : 0.0;
  return m;
}

Sample gt_sample(int h, int w, std::uint64_t seed) {
  Sample s;
  s.id = "e" + std::to_string(seed);
  s.split = "test";
  s.mask = random_mask(h, w, seed, 0.3);
  s.image = s.mask;
  return s;
}

}  // namespace

TEST_CASE("f_measure: exact match, half cover, degenerate cases") {
  Field gt(4, 4, 0.0);
  gt.at(1, 1) = gt.at(1, 2) = gt.at(2, 1) = gt.at(2, 2) = 1.0;
  const Prf perfect = f_measure(gt, gt);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f == 1.0);

  Field half = gt;
  half.at(1, 1) = half.at(1, 2) = 0.0;  // half the true foreground, no FPs
  const Prf p = f_measure(half, gt);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 0.5);
  CHECK(p.f == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  const Field empty(4, 4, 0.0);
  CHECK(f_measure(empty, gt).f == 0.0);     // no predicted foreground
  CHECK(f_measure(gt, empty).f == 0.0);     // no true foreground
  CHECK(f_measure(empty, empty).f == 0.0);  // both empty, no NaN
  const Field full(4, 4, 1.0);
  const Prf q = f_measure(full, gt);
  CHECK(q.recall == 1.0);
  CHECK(q.precision == doctest::Approx(0.25).epsilon(1e-15));

  CHECK_THROWS_AS(f_measure(Field(4, 4), Field(4, 5)), ShapeError);
  Field bad(4, 4, 0.0);
  bad.at(0, 0) = 0.5;
  CHECK_THROWS_AS(f_measure(bad, gt), ConfigError);
}

TEST_CASE("iou relates to f-measure as F = 2 IoU / (1 + IoU)") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Field a = random_mask(9, 7, 3000 + seed);
    const Field b = random_mask(9, 7, 4000 + seed);
    const double i = iou(a, b);
    const double f = f_measure(a, b).f;
    CHECK(i <= f + 1e-15);
    if (i > 0.0) {
      CHECK(f == doctest::Approx(2.0 * i / (1.0 + i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("fcn_forward: zero parameters give uniform predictions") {
  const FcnParams p = init_fcn(4, 4, 0, 0.0, 1);
  const FcnCache c = fcn_forward(testutil::random_field(4, 4, 2), p);
  for (Eigen::Index n = 0; n < c.yhat.rows(); ++n) {
    CHECK(c.yhat(n, 0) == 0.5);
    CHECK(c.yhat(n, 1) == 0.5);
  }
}

TEST_CASE("fcn_forward: ReLU kills saturated-negative preactivations") {
  FcnParams p = init_fcn(3, 3, 0, 1.0, 3);
  p.b1.setConstant(-1e6);  // hidden = 0 -> logits = b2
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (Eigen::Index k = 0; k < p.b2.size(); ++k) p.b2(k) = U(rng);
  const FcnCache c = fcn_forward(testutil::random_field(3, 3, 5), p);
  for (Eigen::Index k = 0; k < c.logits.size(); ++k) {
    CHECK(c.logits(k) == p.b2(k));
  }
}

TEST_CASE("fcn_forward matches the scalar oracle") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const FcnParams p = init_fcn(3, 3, 5, 1.0, 600 + seed);
    const Field img = testutil::random_field(3, 3, 700 + seed);
    const FcnCache c = fcn_forward(img, p);
    const auto ref = oracle::fcn_forward(
        img.values, oracle::from_eigen(p.W1), oracle::from_eigen_vec(p.b1),
        oracle::from_eigen(p.W2), oracle::from_eigen_vec(p.b2));
    for (Eigen::Index n = 0; n < c.yhat.rows(); ++n) {
      CHECK(std::abs(c.yhat(n, 0) - ref[static_cast<std::size_t>(2 * n)]) <= 1e-12);
      CHECK(std::abs(c.yhat(n, 1) - ref[static_cast<std::size_t>(2 * n + 1)]) <= 1e-12);
    }
  }
}

TEST_CASE("fcn gradient check") {
  const GradCheckReport report = grad_check_fcn(8, 8, 1e-6, 1e-4, 42);
  INFO("fcn max rel err ", report.max_rel_err());
  CHECK(report.pass);
  CHECK(report.blocks.size() == 4);
}

TEST_CASE("train_fcn: loss decreases on one sample, zero epochs is identity") {
  Sample s = gt_sample(8, 8, 20);
  const std::vector<const Sample*> set{&s};
  TrainConfig tc;
  tc.epochs = 50;
  tc.seed = 2;
  const FcnTrainResult r = train_fcn(set, 8, 8, 0, 1.0, tc);
  REQUIRE(r.history.size() == 50);
  CHECK(r.history.back().mean_loss < r.history.front().mean_loss);

  TrainConfig none = tc;
  none.epochs = 0;
  const FcnTrainResult r0 = train_fcn(set, 8, 8, 0, 1.0, none);
  const FcnParams fresh = init_fcn(8, 8, 0, 1.0, none.seed);
  CHECK(testutil::same_bits(r0.params.W1, fresh.W1));
  CHECK(testutil::same_bits(r0.params.W2, fresh.W2));
}

TEST_CASE("fcn container round trip") {
  testutil::TempDir dir("fcn");
  const FcnParams p = init_fcn(5, 4, 7, 1.0, 77);
  save_fcn(p, dir.str("f.bin"));
  const FcnParams q = load_fcn(dir.str("f.bin"));
  CHECK(q.height == 5);
  CHECK(q.width == 4);
  CHECK(q.hidden == 7);
  CHECK(testutil::same_bits(q.W1, p.W1));
  CHECK(testutil::same_bits(q.b2, p.b2));
  std::string bytes = testutil::read_file_bytes(dir.str("f.bin"));
  bytes[2] = 'X';
  {
    FILE* f = std::fopen(dir.str("bad.bin").c_str(), "wb");
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_fcn(dir.str("bad.bin")), FormatError);
}

TEST_CASE("evaluate_method: an oracle returning the ground truth scores F = 1") {
  std::vector<Sample> storage;
  for (std::uint64_t k = 0; k < 5; ++k) storage.push_back(gt_sample(10, 10, 30 + k));
  std::vector<const Sample*> samples;
  for (const Sample& s : storage) samples.push_back(&s);

  // The image of these samples IS the mask, so thresholding reproduces gt.
  auto fn = [](const Field& img) {
    Field m = img;
    for (double& v : m.values) v = v > 0.5 ? 1.0 : 0.0;
    return m;
  };
  const MethodReport r = evaluate_method("oracle", fn, samples, "", 3);
  CHECK(r.fmeasure == 1.0);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.iou == 1.0);
  CHECK(r.mean_time_s >= 0.0);
  CHECK(r.median_time_s >= 0.0);
}

TEST_CASE("run_benchmark: metric determinism and CSV header") {
  CHECK(bench_csv_header() ==
        "method,precision,recall,fmeasure,iou,mean_time_s,median_time_s");

  std::vector<Sample> storage;
  for (std::uint64_t k = 0; k < 4; ++k) storage.push_back(gt_sample(12, 12, 50 + k));
  std::vector<const Sample*> samples;
  for (const Sample& s : storage) samples.push_back(&s);

  testutil::TempDir dir("bench");
  BenchConfig bench;
  bench.methods = {"cls"};
  bench.runs_per_image = 1;
  BenchInputs inputs;
  inputs.cls.max_iters = 40;
  const BenchReport a = run_benchmark(samples, bench, inputs, dir.str("a"));
  const BenchReport b = run_benchmark(samples, bench, inputs, dir.str("b"));
  REQUIRE(a.methods.size() == 1);
  CHECK(a.methods[0].fmeasure == b.methods[0].fmeasure);
  CHECK(a.methods[0].precision == b.methods[0].precision);
  CHECK(a.methods[0].iou == b.methods[0].iou);

  CHECK_THROWS_AS(
      run_benchmark(samples, BenchConfig{{"bogus"}, 1}, inputs, dir.str("c")),
      ConfigError);
  CHECK_THROWS_AS(
      run_benchmark(samples, BenchConfig{{"rls"}, 1}, inputs, dir.str("d")),
      ConfigError);

  write_bench_csv(a, dir.str("r.csv"));
  const std::string csv = testutil::read_file_bytes(dir.str("r.csv"));
  CHECK(csv.substr(0, csv.find('\n')) == bench_csv_header());
}
