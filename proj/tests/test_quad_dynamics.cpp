#include <doctest.h>

#include <cmath>
#include <random>

#include "certiflight/quad_dynamics.hpp"

using namespace cfl;

namespace {

// Independent re-derivation of the closed-loop right-hand side, written as
// twelve scalar formulas straight from the model equations. Deliberately
// shares no code (and no intermediate structure) with dynamics_rhs so the two
// implementations can serve as oracles for each other.
Vec12 oracle_rhs(const Vec12& s, const Vec4& u, const Vec4& al,
                 const QuadParams& pp, const NominalGains& gg) {
  const double x = s[0], y = s[1], z = s[2];
  const double phi = s[3], th = s[4], psi = s[5];
  const double vx = s[6], vy = s[7], vz = s[8];
  const double p = s[9], q = s[10], r = s[11];

  const double sp = std::sin(phi), cp = std::cos(phi);
  const double st = std::sin(th), ct = std::cos(th);
  const double ss = std::sin(psi), cs = std::cos(psi);

  // Attitude kinematics (body rates -> Euler-angle rates).
  const double phid = p + sp * (st / ct) * q + cp * (st / ct) * r;
  const double thd = cp * q - st * r;
  const double psid = (sp / ct) * q + (cp / ct) * r;

  // Nominal wrench with the NN thrust increments folded through the mixer.
  const double T = pp.m * pp.g - gg.Kz * z + (u[0] + u[1] + u[2] + u[3]);
  const double arm = pp.l / std::sqrt(2.0);
  const double tau_phi = gg.Kphi * (gg.Ky * y - phi) +
                         gg.Kphid * (gg.Ky * vy - phid) +
                         arm * (-u[0] - u[1] + u[2] + u[3]);
  const double tau_th = -gg.Ktheta * (gg.Kx * x + th) -
                        gg.Kthetad * (gg.Kx * vx + thd) +
                        arm * (-u[0] + u[1] + u[2] - u[3]);
  const double tau_psi = -gg.Kpsi * psi - gg.Kpsid * psid +
                         pp.kd_over_kt * (u[0] - u[1] + u[2] - u[3]);

  const double Tm = (1.0 + al[0]) * T / pp.m;
  Vec12 f;
  f[0] = vx;
  f[1] = vy;
  f[2] = vz;
  f[3] = phid;
  f[4] = thd;
  f[5] = psid;
  f[6] = Tm * (cs * st * cp + ss * sp) - pp.Dx / pp.m * vx;
  f[7] = Tm * (ss * st * cp - cs * sp) - pp.Dy / pp.m * vy;
  f[8] = -pp.g + Tm * ct * cp - pp.Dz / pp.m * vz;
  f[9] = ((pp.Iyy - pp.Izz) * q * r + (1.0 + al[1]) * tau_phi) / pp.Ixx;
  f[10] = ((pp.Izz - pp.Ixx) * p * r + (1.0 + al[2]) * tau_th) / pp.Iyy;
  f[11] = ((pp.Ixx - pp.Iyy) * p * q + (1.0 + al[3]) * tau_psi) / pp.Izz;
  return f;
}

}  // namespace

TEST_CASE("origin is an exact equilibrium") {
  const QuadParams p;
  const NominalGains g;
  const Vec12 f = dynamics_rhs(Vec12::Zero(), Vec4::Zero(), Vec4::Zero(), p, g);
  CHECK(f.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("rhs matches independent oracle on random points") {
  const QuadParams p;
  const NominalGains g;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    Vec12 s;
    for (int i = 0; i < 12; ++i) s[i] = 2.0 * unif(rng);
    s[kTheta] = 1.2 * unif(rng);  // stay away from the attitude singularity
    Vec4 u, al;
    for (int i = 0; i < 4; ++i) {
      u[i] = 3.0 * unif(rng);
      al[i] = 0.05 * unif(rng);
    }
    const Vec12 f = dynamics_rhs(s, u, al, p, g);
    const Vec12 fo = oracle_rhs(s, u, al, p, g);
    const double scale = std::max(1.0, fo.lpNorm<Eigen::Infinity>());
    CHECK((f - fo).lpNorm<Eigen::Infinity>() / scale < 1e-10);
  }
}

TEST_CASE("rotation matrix is a proper rotation") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.4, 1.4);
  for (int k = 0; k < 100; ++k) {
    const Vec3 att(unif(rng), unif(rng), unif(rng));
    const Mat3 R = rotation_matrix(att);
    CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Identity at zero attitude.
  CHECK((rotation_matrix(Vec3::Zero()) - Mat3::Identity()).norm() < 1e-15);
}

TEST_CASE("euler_rates identity at level attitude, singular near theta=pi/2") {
  const Vec3 w(0.3, -0.2, 0.1);
  CHECK((euler_rates(Vec3::Zero(), w) - w).norm() < 1e-15);
  CHECK_THROWS_AS(euler_rates(Vec3(0.0, M_PI / 2.0, 0.0), w),
                  SingularAttitudeError);
}

TEST_CASE("nominal control hand values") {
  const QuadParams p;
  const NominalGains g;

  Vec12 s = Vec12::Zero();
  Vec4 w = nominal_control(s, g, p);
  CHECK(w[0] == doctest::Approx(14.7105).epsilon(1e-12));  // hover thrust m*g
  CHECK(w.tail<3>().norm() < 1e-15);

  s[kZ] = 1.0;  // 1 m above the reference: thrust backs off by Kz
  CHECK(nominal_control(s, g, p)[0] == doctest::Approx(14.6105).epsilon(1e-12));

  s = Vec12::Zero();
  s[kX] = 1.0;  // pitch command theta_d = Kx * (0 - x) -> tau_theta
  CHECK(nominal_control(s, g, p)[2] ==
        doctest::Approx(-g.Ktheta * g.Kx).epsilon(1e-12));

  s = Vec12::Zero();
  s[kPsi] = 0.3;
  CHECK(nominal_control(s, g, p)[3] ==
        doctest::Approx(-g.Kpsi * 0.3).epsilon(1e-12));
}

TEST_CASE("mixer and allocation invert each other") {
  const QuadParams p;
  const Mat4 M = mixer(p);

  // Pure hover wrench splits evenly over the four motors.
  const Vec4 thr = allocate(Vec4(p.m * p.g, 0, 0, 0), p);
  for (int i = 0; i < 4; ++i)
    CHECK(thr[i] == doctest::Approx(p.m * p.g / 4.0).epsilon(1e-12));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Vec4 wrench(10 * unif(rng), unif(rng), unif(rng), unif(rng));
    CHECK((M * allocate(wrench, p) - wrench).norm() < 1e-10);
  }
}

TEST_CASE("step is one explicit Euler step of the rhs") {
  const QuadParams p;
  const NominalGains g;
  Vec12 s;
  s << 0.3, -0.2, 0.1, 0.05, -0.04, 0.2, 0.1, 0, -0.1, 0.02, 0.01, -0.03;
  const Vec4 u(0.1, -0.2, 0.05, 0.0), al(0.01, -0.02, 0.03, 0.0);
  const double dt = 0.01;
  const Vec12 expect = s + dt * oracle_rhs(s, u, al, p, g);
  CHECK((step(s, u, al, dt, p, g) - expect).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK_THROWS_AS(step(s, u, al, 0.0, p, g), std::invalid_argument);
}

TEST_CASE("simulate is deterministic and converges under the nominal law") {
  const QuadParams p;
  const NominalGains g;
  Vec12 s0 = Vec12::Zero();
  s0[kX] = 0.5;
  s0[kZ] = -0.4;

  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-0.05, 0.05);
    AlphaSampler al = [&rng, &unif]() {
      return Vec4(unif(rng), unif(rng), unif(rng), unif(rng));
    };
    Policy zero = [](const Vec12&) { return Vec4::Zero(); };
    return simulate(zero, s0, al, 60.0, 0.01, p, g);
  };

  const Trajectory a = run(5), b = run(5);
  REQUIRE(a.state.size() == b.state.size());
  for (size_t i = 0; i < a.state.size(); ++i)
    CHECK((a.state[i] - b.state[i]).norm() == 0.0);
  CHECK(a.state.back().head<3>().norm() < 0.05 * s0.head<3>().norm());
}

TEST_CASE("linearization matches oracle finite differences and is Hurwitz") {
  const QuadParams p;
  const NominalGains g;
  const LinearizedSystem lin = linearize(p, g);

  const double h = 1e-6;
  for (int j = 0; j < 12; ++j) {
    Vec12 e = Vec12::Zero();
    e[j] = h;
    const Vec12 col = (oracle_rhs(e, Vec4::Zero(), Vec4::Zero(), p, g) -
                       oracle_rhs(-e, Vec4::Zero(), Vec4::Zero(), p, g)) /
                      (2 * h);
    CHECK((lin.A_K.col(j) - col).lpNorm<Eigen::Infinity>() < 1e-6);
  }
  for (int j = 0; j < 4; ++j) {
    Vec4 e = Vec4::Zero();
    e[j] = h;
    const Vec12 col = (oracle_rhs(Vec12::Zero(), e, Vec4::Zero(), p, g) -
                       oracle_rhs(Vec12::Zero(), -e, Vec4::Zero(), p, g)) /
                      (2 * h);
    CHECK((lin.B0.col(j) - col).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  const Eigen::EigenSolver<Eigen::MatrixXd> es(lin.A_K);
  for (int i = 0; i < 12; ++i) CHECK(es.eigenvalues()[i].real() < 0.0);
}

TEST_CASE("parameter validation rejects nonpositive values") {
  QuadParams p;
  p.m = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
