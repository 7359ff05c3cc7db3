#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rlseg/errors.hpp"
#include "rlseg/field.hpp"
#include "rlseg/pgm.hpp"
#include "test_util.hpp"

using namespace rlseg;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("heaviside known values and symmetry") {
  CHECK(heaviside(0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(heaviside(1.0, 1.0) == doctest::Approx(0.75).epsilon(1e-15));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> T(-50.0, 50.0);
  std::uniform_real_distribution<double> E(0.01, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const double t = T(rng), e = E(rng);
    CHECK(std::abs(heaviside(t, e) + heaviside(-t, e) - 1.0) <= 1e-15);
  }
}

TEST_CASE("heaviside bounded in (0,1) and monotone over 1e6 draws") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> T(-1e6, 1e6);
  std::uniform_real_distribution<double> E(1e-3, 1e3);
  long violations = 0;
  for (int k = 0; k < 1000000; ++k) {
    const double e = E(rng);
    double t1 = T(rng), t2 = T(rng);
    if (t1 > t2) std::swap(t1, t2);
    const double h1 = heaviside(t1, e), h2 = heaviside(t2, e);
    violations += !(h1 > 0.0 && h1 < 1.0 && h2 > 0.0 && h2 < 1.0 && h1 <= h2);
  }
  CHECK(violations == 0);
}

TEST_CASE("dirac known values, evenness, and derivative relation") {
  CHECK(dirac(0.0, 1.0) == doctest::Approx(1.0 / kPi).epsilon(1e-15));
  CHECK(dirac(1.0, 1.0) == doctest::Approx(1.0 / (2.0 * kPi)).epsilon(1e-15));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> T(0.0, 20.0);
  for (int k = 0; k < 1000; ++k) {
    const double t = T(rng);
    CHECK(dirac(t, 1.3) == dirac(-t, 1.3));  // exact: even in t
  }

  // Central difference of heaviside at h=1e-5 reproduces dirac to O(h^2).
  const double h = 1e-5;
  for (double t = -3.0; t <= 3.0; t += 0.17) {
    const double fd = (heaviside(t + h, 1.0) - heaviside(t - h, 1.0)) / (2.0 * h);
    CHECK(std::abs(dirac(t, 1.0) - fd) <= 1e-9);
  }
}

TEST_CASE("dirac integrates to ~1") {
  const double eps = 0.7;
  const double lo = -100.0 * eps, hi = 100.0 * eps;
  const int n = 200001;
  const double dt = (hi - lo) / (n - 1);
  double sum = 0.5 * (dirac(lo, eps) + dirac(hi, eps));
  for (int k = 1; k + 1 < n; ++k) sum += dirac(lo + k * dt, eps);
  sum *= dt;
  CHECK(std::abs(sum - 1.0) <= 1e-2);
}

TEST_CASE("curvature of affine and constant fields") {
  Field plane(9, 7);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 7; ++j) plane.at(i, j) = 0.3 * i - 1.7 * j + 0.5;
  }
  const Field k = curvature(plane);
  for (int i = 1; i < 8; ++i) {
    for (int j = 1; j < 6; ++j) CHECK(std::abs(k.at(i, j)) <= 1e-12);
  }

  const Field flat(6, 6, 4.2);
  const Field kf = curvature(flat);
  for (double v : kf.values) CHECK(v == 0.0);
}

namespace {

Field circle_sdf(int n, double r) {
  Field phi(n, n);
  const double c = (n - 1) / 2.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      phi.at(i, j) = std::hypot(i - c, j - c) - r;
    }
  }
  return phi;
}

double circle_curvature_error(int n, double r, double rho_lo, double rho_hi) {
  const Field phi = circle_sdf(n, r);
  const Field k = curvature(phi);
  const double c = (n - 1) / 2.0;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double rho = std::hypot(i - c, j - c);
      if (rho < rho_lo || rho > rho_hi) continue;
      worst = std::max(worst, std::abs(k.at(i, j) - 1.0 / rho));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("curvature of circle level lines is 1/rho") {
  CHECK(circle_curvature_error(64, 10.0, 5.0, 15.0) <= 0.02);

  // Negating phi flips the sign.
  Field phi = circle_sdf(64, 10.0);
  Field neg = phi;
  for (double& v : neg.values) v = -v;
  const Field k1 = curvature(phi), k2 = curvature(neg);
  double worst = 0.0;
  for (int idx = 0; idx < k1.size(); ++idx) {
    worst = std::max(worst, std::abs(k1.values[idx] + k2.values[idx]));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("curvature error decays with resolution (order >= 1)") {
  const double coarse = circle_curvature_error(64, 10.0, 5.0, 15.0);
  const double fine = circle_curvature_error(128, 20.0, 10.0, 30.0);
  CHECK(fine <= coarse / 2.0);
}

TEST_CASE("curvature matches the scalar oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Field phi = testutil::random_field(5, 5, 900 + seed, -1.0, 1.0);
    const Field k = curvature(phi);
    const auto ref = oracle::curvature(phi.values, 5, 5);
    for (int idx = 0; idx < k.size(); ++idx) {
      CHECK(std::abs(k.values[idx] - ref[idx]) <= 1e-12);
    }
  }
}

TEST_CASE("curvature_adjoint is the transpose of the curvature Jacobian") {
  const int h = 5, w = 6;
  const Field phi = testutil::smooth_field(h, w, 33);
  const Field up = testutil::random_field(h, w, 34, -1.0, 1.0);
  const Field adj = curvature_adjoint(phi, up);

  // <up, J delta> by finite differences, entry by entry.
  const double step = 1e-6;
  for (int idx = 0; idx < phi.size(); ++idx) {
    Field p = phi;
    p.values[idx] += step;
    const Field kp = curvature(p);
    p.values[idx] -= 2 * step;
    const Field km = curvature(p);
    double dot = 0.0;
    for (int q = 0; q < phi.size(); ++q) {
      dot += up.values[q] * (kp.values[q] - km.values[q]) / (2 * step);
    }
    CHECK(std::abs(dot - adj.values[idx]) <=
          1e-5 * std::max(1.0, std::abs(adj.values[idx])));
  }
}

TEST_CASE("pgm round trip quantizes once") {
  Field ramp(4, 4);
  for (int k = 0; k < 16; ++k) ramp.values[k] = k / 15.0;
  testutil::TempDir dir("pgm");
  write_pgm(ramp, dir.str("ramp.pgm"));
  const Field back = read_pgm(dir.str("ramp.pgm"));
  REQUIRE(back.same_shape(ramp));
  for (int k = 0; k < 16; ++k) {
    const double q = std::lround(ramp.values[k] * 255.0) / 255.0;
    CHECK(back.values[k] == q);
  }
  // Second trip is exact.
  write_pgm(back, dir.str("ramp2.pgm"));
  const Field back2 = read_pgm(dir.str("ramp2.pgm"));
  for (int k = 0; k < 16; ++k) CHECK(back2.values[k] == back.values[k]);
}

TEST_CASE("pgm rejects bad headers") {
  CHECK_THROWS_WITH_AS(decode_pgm("P2\n4 4\n255\n"), doctest::Contains("magic"),
                       FormatError);
  CHECK_THROWS_WITH_AS(decode_pgm("P5\n4 4\n128\n"), doctest::Contains("maxval"),
                       FormatError);
  CHECK_THROWS_WITH_AS(decode_pgm("P5\n4 x\n255\n"), doctest::Contains("height"),
                       FormatError);
  CHECK_THROWS_WITH_AS(decode_pgm("P5\n4 4\n255\nabc"), doctest::Contains("payload"),
                       FormatError);
  CHECK_THROWS_AS(read_pgm("/nonexistent/nope.pgm"), IoError);
}

TEST_CASE("pgm file layout: header text plus one byte per pixel") {
  const Field zero(64, 64, 0.0);
  const std::string bytes = encode_pgm(zero);
  const std::string header = "P5\n64 64\n255\n";  // the exact header we write
  REQUIRE(bytes.size() == header.size() + 64 * 64);
  CHECK(bytes.compare(0, header.size(), header) == 0);
  for (std::size_t k = header.size(); k < bytes.size(); ++k) {
    CHECK(bytes[k] == '\0');
  }
}

TEST_CASE("pgm masks stay {0,255} on disk") {
  Field mask(5, 5, 0.0);
  mask.at(2, 2) = 1.0;
  mask.at(1, 3) = 1.0;
  const std::string bytes = encode_pgm(mask);
  for (std::size_t k = bytes.size() - 25; k < bytes.size(); ++k) {
    const unsigned char b = static_cast<unsigned char>(bytes[k]);
    CHECK((b == 0 || b == 255));
  }
}
