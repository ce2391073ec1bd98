#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <random>

#include "certiflight/lmi_certify.hpp"

using namespace cfl;

namespace {

LmiInstance scalar_instance(double a, double state_lo, double state_hi,
                            double in_lo, double in_hi, double L) {
  LmiInstance inst;
  inst.A_K = MatrixXd::Constant(1, 1, a);
  inst.sector.lower = MatrixXd::Zero(1, 2);
  inst.sector.upper = MatrixXd::Zero(1, 2);
  inst.sector.lower(0, 0) = state_lo;
  inst.sector.upper(0, 0) = state_hi;
  inst.sector.lower(0, 1) = in_lo;
  inst.sector.upper(0, 1) = in_hi;
  inst.L = L;
  inst.n = 1;
  inst.m = 1;
  return inst;
}

// Hand-expanded 4x4 LMI for n = m = 1, written independently from the
// quadratic-form derivation: outer vector (s, chi, xi_s, xi_u).
MatrixXd hand_lmi_1x1(const LmiInstance& inst, double p, double lam_s,
                      double lam_u, double gam) {
  auto mid = [](double lo, double hi) { return 0.5 * (lo + hi); };
  auto wgt = [&](double lo, double hi) {
    const double cbar = std::max(std::abs(lo), std::abs(hi));
    return cbar * cbar - mid(lo, hi) * mid(lo, hi);
  };
  const double c_s = mid(inst.sector.lower(0, 0), inst.sector.upper(0, 0));
  const double w_s = wgt(inst.sector.lower(0, 0), inst.sector.upper(0, 0));
  const double c_u = mid(inst.sector.lower(0, 1), inst.sector.upper(0, 1));
  const double w_u = wgt(inst.sector.lower(0, 1), inst.sector.upper(0, 1));

  MatrixXd M = MatrixXd::Zero(4, 4);
  M(0, 0) = 2.0 * p * inst.A_K(0, 0) + w_s * lam_s + inst.L * inst.L * gam;
  M(1, 1) = w_u * lam_u - gam;
  M(2, 2) = -lam_s;
  M(3, 3) = -lam_u;
  M(2, 0) = M(0, 2) = p + c_s * lam_s;
  M(3, 0) = M(0, 3) = p;
  M(3, 1) = M(1, 3) = c_u * lam_u;
  return M;
}

}  // namespace

TEST_CASE("1x1 LMI matches the hand expansion entrywise") {
  const LmiInstance inst = scalar_instance(-0.7, -0.3, 0.5, -0.1, 0.2, 1.3);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> unif(0.05, 2.0);
  for (int k = 0; k < 20; ++k) {
    const double p = unif(rng), lam_s = unif(rng), lam_u = unif(rng),
                 gam = unif(rng);
    MatrixXd Lam(1, 2);
    Lam << lam_s, lam_u;
    const MatrixXd M =
        assemble_lmi(inst, MatrixXd::Constant(1, 1, p), Lam,
                     MatrixXd::Constant(1, 1, gam));
    const MatrixXd H = hand_lmi_1x1(inst, p, lam_s, lam_u, gam);
    CHECK((M - H).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("quadcopter LMI is 252x252, symmetric, and affine in multipliers") {
  const QuadParams p;
  const NominalGains g;
  const NpvSystem sys = quad_npv_system(p, g);
  const DomainBox S = DomainBox::quad(1.5, 0.2, 1.5, 0.2);
  const SectorBounds sb = estimate_sector_bounds(
      sys, S, 1.0, VectorXd::Constant(4, -0.05), VectorXd::Constant(4, 0.05));

  LmiInstance inst;
  inst.A_K = sys.A_K;
  inst.sector = sb;
  inst.L = 1.0;
  inst.n = 12;
  inst.m = 4;
  REQUIRE(inst.size() == 252);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  auto rand_vars = [&](MatrixXd* P, MatrixXd* Lam, MatrixXd* Gam) {
    *P = MatrixXd::NullaryExpr(12, 12, [&]() { return unif(rng); });
    *P = 0.5 * (*P + P->transpose()).eval();
    *Lam = MatrixXd::NullaryExpr(12, 16, [&]() { return unif(rng); });
    *Gam = MatrixXd::NullaryExpr(4, 12, [&]() { return unif(rng); });
  };

  MatrixXd P1, L1, G1, P2, L2, G2;
  rand_vars(&P1, &L1, &G1);
  rand_vars(&P2, &L2, &G2);
  const MatrixXd M1 = assemble_lmi(inst, P1, L1, G1);
  const MatrixXd M2 = assemble_lmi(inst, P2, L2, G2);
  CHECK(M1.rows() == 252);
  CHECK((M1 - M1.transpose()).lpNorm<Eigen::Infinity>() == 0.0);

  // Two-point interpolation: M is affine (in fact linear) in (P, Lambda,
  // gamma) jointly, so it commutes with convex combinations.
  const double t = 0.37;
  const MatrixXd Mt = assemble_lmi(inst, (1 - t) * P1 + t * P2,
                                   (1 - t) * L1 + t * L2, (1 - t) * G1 + t * G2);
  CHECK((Mt - ((1 - t) * M1 + t * M2)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(assemble_lmi(inst, 0 * P1, 0 * L1, 0 * G1).lpNorm<Eigen::Infinity>() ==
        0.0);
}

TEST_CASE("scalar feasibility: stable plant accepted, unstable rejected") {
  // Zero sector widths decouple the nonlinearity: feasibility then reduces
  // to A being Hurwitz.
  const LmiInstance stable = scalar_instance(-1.0, 0, 0, 0, 0, 1.0);
  const FeasibilityResult r = check_feasible(stable);
  CHECK(r.feasible);
  CHECK(r.margin < -1e-7);
  CHECK(r.P(0, 0) > 0.0);

  // Witness replay: the returned multipliers really do make the original
  // LMI negative definite.
  const MatrixXd M = assemble_lmi(stable, r.P, r.Lambda, r.gamma);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  CHECK(es.eigenvalues().maxCoeff() < 0.0);
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(r.margin).epsilon(1e-9));

  const LmiInstance unstable = scalar_instance(0.5, 0, 0, 0, 0, 1.0);
  CHECK_FALSE(check_feasible(unstable).feasible);
}

TEST_CASE("synthetic gate search recovers the analytic threshold") {
  // sdot = -0.5 s + zeta with |dzeta/ds| <= 0.25 L: absolute stability holds
  // exactly for L < 2, so the bisection/growth search should land on 2.
  const MatrixXd A_K = MatrixXd::Constant(1, 1, -0.5);
  SectorProvider prov = [](double L, const DomainBox&) {
    SectorBounds sec;
    sec.lower = MatrixXd::Zero(1, 2);
    sec.upper = MatrixXd::Zero(1, 2);
    sec.lower(0, 0) = -0.25 * L;
    sec.upper(0, 0) = 0.25 * L;
    return sec;
  };
  DomainBox S;
  S.lower = VectorXd::Constant(1, -1.0);
  S.upper = VectorXd::Constant(1, 1.0);
  S.group_start = {0, 1};
  SearchSchedule sched;
  sched.grow_group = {false};

  SearchTrace trace;
  const Certificate cert = maximize_L_S(A_K, MatrixXd::Zero(1, 1), prov, 1.0,
                                        S, sched, {}, &trace);
  CHECK(std::abs(cert.L_star - 2.0) / 2.0 < 1e-3);
  CHECK(cert.margin < -1e-7);
  CHECK(trace.feasibility_checks > 0);
}

TEST_CASE("infeasible initial point raises InitialInfeasibleError") {
  const MatrixXd A_K = MatrixXd::Constant(1, 1, -0.5);
  SectorProvider prov = [](double L, const DomainBox&) {
    SectorBounds sec;
    sec.lower = MatrixXd::Zero(1, 2);
    sec.upper = MatrixXd::Zero(1, 2);
    sec.lower(0, 0) = -0.25 * L;
    sec.upper(0, 0) = 0.25 * L;
    return sec;
  };
  DomainBox S;
  S.lower = VectorXd::Constant(1, -1.0);
  S.upper = VectorXd::Constant(1, 1.0);
  S.group_start = {0, 1};
  CHECK_THROWS_AS(
      maximize_L_S(A_K, MatrixXd::Zero(1, 1), prov, 5.0, S, {}, {}, nullptr),
      InitialInfeasibleError);
}

TEST_CASE("certificate file round trip") {
  Certificate cert;
  cert.P = MatrixXd::Identity(2, 2) * 1.5;
  cert.Lambda = MatrixXd::Constant(2, 3, 0.25);
  cert.gamma = MatrixXd::Constant(1, 2, 0.125);
  cert.K = MatrixXd::Constant(1, 2, -0.3);
  cert.L_star = 1.2613;
  cert.margin = -4.2e-6;
  cert.attenuation = 3.5e-3;
  cert.alpha_lo = VectorXd::Constant(4, -1.75e-4);
  cert.alpha_hi = VectorXd::Constant(4, 1.75e-4);
  cert.config_hash = 0xdeadbeefcafe1234ull;
  cert.S_star.lower = VectorXd::Constant(2, -1.0);
  cert.S_star.upper = VectorXd::Constant(2, 1.0);
  cert.S_star.group_start = {0, 2};

  const std::string path = "cert_roundtrip_test.txt";
  write_certificate(cert, path);
  const Certificate back = read_certificate(path);
  CHECK(back.L_star == cert.L_star);
  CHECK(back.margin == cert.margin);
  CHECK(back.attenuation == cert.attenuation);
  CHECK(back.config_hash == cert.config_hash);
  CHECK((back.P - cert.P).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((back.Lambda - cert.Lambda).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((back.gamma - cert.gamma).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((back.K - cert.K).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((back.alpha_lo - cert.alpha_lo).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((back.S_star.lower - cert.S_star.lower).norm() < 1e-15);
  CHECK(back.S_star.group_start == cert.S_star.group_start);
  std::remove(path.c_str());

  CHECK_THROWS(read_certificate("no_such_certificate_file.txt"));
}

TEST_CASE("crossed sector bounds are rejected") {
  LmiInstance inst = scalar_instance(-1.0, 0.5, -0.5, 0, 0, 1.0);
  CHECK_THROWS_AS(inst.validate(), std::invalid_argument);
}
