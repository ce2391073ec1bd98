#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "certiflight/sector_bounds.hpp"

using namespace cfl;

TEST_CASE("DomainBox construction, scaling, and max norm") {
  DomainBox S = DomainBox::quad(1.5, 0.2, 1.5, 0.2);
  REQUIRE(S.dim() == 12);
  REQUIRE(S.num_groups() == 4);
  CHECK(S.lower(0) == -1.5);
  CHECK(S.upper(4) == 0.2);
  S.scale_group(0, 2.0);
  CHECK(S.upper(0) == 3.0);
  CHECK(S.upper(3) == 0.2);  // other groups untouched
  const double expect =
      std::sqrt(3 * 3.0 * 3.0 + 3 * 0.04 + 3 * 2.25 + 3 * 0.04);
  CHECK(S.max_norm() == doctest::Approx(expect).epsilon(1e-12));

  DomainBox bad = S;
  bad.lower(0) = 0.1;  // origin no longer interior
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("input_domain covers exactly the Lipschitz ball") {
  const DomainBox S = DomainBox::quad(1.0, 0.1, 1.0, 0.1);
  const DomainBox U = input_domain(2.0, S, 4);
  REQUIRE(U.dim() == 4);
  for (int j = 0; j < 4; ++j) {
    CHECK(U.upper(j) == doctest::Approx(2.0 * S.max_norm()).epsilon(1e-12));
    CHECK(U.lower(j) == -U.upper(j));
  }
}

TEST_CASE("quad NPV residual vanishes to second order at the origin") {
  const QuadParams p;
  const NominalGains g;
  const NpvSystem sys = quad_npv_system(p, g);
  REQUIRE(sys.n == 12);
  REQUIRE(sys.m == 4);

  CHECK(npv_residual(sys, VectorXd::Zero(12), VectorXd::Zero(4),
                     VectorXd::Zero(4))
            .lpNorm<Eigen::Infinity>() < 1e-12);

  // The residual's Jacobian is zero at the origin, so along any fixed
  // direction the residual is O(h^2): halving h should quarter it.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  VectorXd ds(12), du(4);
  for (int i = 0; i < 12; ++i) ds(i) = unif(rng);
  for (int i = 0; i < 4; ++i) du(i) = unif(rng);
  const double r1 =
      npv_residual(sys, 0.02 * ds, 0.02 * du, VectorXd::Zero(4)).norm();
  const double r2 =
      npv_residual(sys, 0.01 * ds, 0.01 * du, VectorXd::Zero(4)).norm();
  CHECK(r1 / r2 > 3.5);
  CHECK(r1 / r2 < 4.5);
}

TEST_CASE("sector bounds bracket sampled NPV Jacobians") {
  const QuadParams p;
  const NominalGains g;
  const NpvSystem sys = quad_npv_system(p, g);
  const DomainBox S = DomainBox::quad(1.5, 0.2, 1.5, 0.2);
  const double L = 1.0;
  const VectorXd alo = VectorXd::Constant(4, -0.05);
  const VectorXd ahi = VectorXd::Constant(4, 0.05);
  const SectorBounds sb = estimate_sector_bounds(sys, S, L, alo, ahi);
  REQUIRE(sb.rows() == 12);
  REQUIRE(sb.cols() == 16);

  // All sectors straddle zero (the Jacobian vanishes at the origin).
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 16; ++j) {
      CHECK(sb.lower(i, j) <= 0.0);
      CHECK(sb.upper(i, j) >= 0.0);
    }

  // x <-> y structural symmetry of the closed loop: the sector widths for
  // the paired rows agree.
  auto width = [&](int i, int j) { return sb.upper(i, j) - sb.lower(i, j); };
  CHECK(width(kVx, kX) == doctest::Approx(width(kVy, kY)).epsilon(1e-6));
  CHECK(width(kP, kPhi) == doctest::Approx(width(kQ, kTheta)).epsilon(1e-6));

  // Random interior finite-difference slopes stay inside the (inflated)
  // bounds. This is the soundness property everything downstream leans on.
  const DomainBox U = input_domain(L, S, 4);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    VectorXd s(12), u(4), a(4);
    for (int i = 0; i < 12; ++i)
      s(i) = S.lower(i) + unif(rng) * (S.upper(i) - S.lower(i));
    for (int i = 0; i < 4; ++i)
      u(i) = U.lower(i) + unif(rng) * (U.upper(i) - U.lower(i));
    for (int i = 0; i < 4; ++i) a(i) = -0.05 + 0.1 * unif(rng);
    s *= 0.999;  // keep the central difference stencil inside the box
    u *= 0.999;

    const int j = static_cast<int>(unif(rng) * 16) % 16;
    VectorXd sp = s, sm = s, up = u, um = u;
    if (j < 12) {
      sp(j) += h;
      sm(j) -= h;
    } else {
      up(j - 12) += h;
      um(j - 12) -= h;
    }
    const VectorXd slope =
        (npv_residual(sys, sp, up, a) - npv_residual(sys, sm, um, a)) /
        (2 * h);
    for (int i = 0; i < 12; ++i) {
      CHECK(slope(i) >= sb.lower(i, j) - 1e-9);
      CHECK(slope(i) <= sb.upper(i, j) + 1e-9);
    }
    ++checked;
  }
  CHECK(checked == 2000);
}

TEST_CASE("1-D cubic system sector matches the analytic slope range") {
  // s' = -s + s^3, one pass-through input with B0 = 1: the NPV residual is
  // exactly s^3, whose derivative over |s| <= r spans [0, 3 r^2].
  NpvSystem sys;
  sys.n = 1;
  sys.m = 1;
  sys.d = 1;
  sys.A_K = MatrixXd::Constant(1, 1, -1.0);
  sys.B0 = MatrixXd::Constant(1, 1, 1.0);
  sys.rhs = [](const VectorXd& s, const VectorXd& u, const VectorXd&) {
    VectorXd f(1);
    f(0) = -s(0) + s(0) * s(0) * s(0) + u(0);
    return f;
  };

  DomainBox S;
  S.lower = VectorXd::Constant(1, -0.5);
  S.upper = VectorXd::Constant(1, 0.5);
  S.group_start = {0, 1};

  SectorGridSpec grid;
  grid.inflation = 1.0;
  grid.inflation_abs = 0.0;
  const SectorBounds sb =
      estimate_sector_bounds(sys, S, 1.0, VectorXd::Zero(1), VectorXd::Zero(1),
                             grid);
  // d(s^3)/ds over [-0.5, 0.5] is [0, 0.75]; the input column is exactly 0.
  CHECK(std::abs(sb.lower(0, 0)) < 1e-6);
  CHECK(sb.upper(0, 0) == doctest::Approx(0.75).epsilon(1e-3));
  CHECK(std::abs(sb.lower(0, 1)) < 1e-9);
  CHECK(std::abs(sb.upper(0, 1)) < 1e-9);
}

TEST_CASE("sector CSV dump has the documented schema") {
  SectorBounds sb;
  sb.lower = MatrixXd::Constant(2, 3, -1.25);
  sb.upper = MatrixXd::Constant(2, 3, 0.5);
  const std::string path = "sector_dump_test.csv";
  write_sector_bounds_csv(sb, path);
  std::ifstream is(path);
  REQUIRE(is.good());
  std::string header;
  std::getline(is, header);
  CHECK(header == "row,col,lower,upper");
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 6);
  is.close();
  std::remove(path.c_str());
}
