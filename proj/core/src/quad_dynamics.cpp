#include "certiflight/quad_dynamics.hpp"

#include <cmath>

namespace cfl {

void QuadParams::validate() const {
  auto chk = [](double v, const char* name) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(std::string("QuadParams: ") + name +
                                  " must be strictly positive");
    }
  };
  chk(Ixx, "Ixx"); chk(Iyy, "Iyy"); chk(Izz, "Izz");
  chk(g, "g"); chk(m, "m"); chk(l, "l");
  chk(kd_over_kt, "kd_over_kt");
  chk(Dx, "Dx"); chk(Dy, "Dy"); chk(Dz, "Dz");
}

Mat3 rotation_matrix(const Vec3& att) {
  const double sphi = std::sin(att[0]), cphi = std::cos(att[0]);
  const double sth = std::sin(att[1]), cth = std::cos(att[1]);
  const double spsi = std::sin(att[2]), cpsi = std::cos(att[2]);
  Mat3 R;
  R << cpsi * cth, cpsi * sth * sphi - spsi * cphi, cpsi * sth * cphi + spsi * sphi,
       spsi * cth, spsi * sth * sphi + cpsi * cphi, spsi * sth * cphi - cpsi * sphi,
       -sth,       cth * sphi,                      cth * cphi;
  return R;
}

Vec3 euler_rates(const Vec3& att, const Vec3& w) {
  const double cth = std::cos(att[1]);
  if (!(cth > kSingularCosTheta)) {
    throw SingularAttitudeError("attitude kinematics singular: cos(theta) <= 1e-3");
  }
  const double sphi = std::sin(att[0]), cphi = std::cos(att[0]);
  const double sth = std::sin(att[1]);
  const double tth = sth / cth;
  Vec3 rates;
  rates[0] = w[0] + sphi * tth * w[1] + cphi * tth * w[2];
  rates[1] = cphi * w[1] - sth * w[2];
  rates[2] = (sphi / cth) * w[1] + (cphi / cth) * w[2];
  return rates;
}

Vec4 nominal_control(const Vec12& s, const NominalGains& g, const QuadParams& p) {
  const Vec3 att = s.segment<3>(kPhi);
  const Vec3 w = s.segment<3>(kP);
  const Vec3 er = euler_rates(att, w);  // (phi_dot, theta_dot, psi_dot)

  const double Td = p.m * p.g - g.Kz * s[kZ];
  const double tau_phi = g.Kphi * (g.Ky * s[kY] - s[kPhi]) +
                         g.Kphid * (g.Ky * s[kVy] - er[0]);
  const double tau_theta = -g.Ktheta * (g.Kx * s[kX] + s[kTheta]) -
                           g.Kthetad * (g.Kx * s[kVx] + er[1]);
  const double tau_psi = -g.Kpsi * s[kPsi] - g.Kpsid * er[2];
  return Vec4(Td, tau_phi, tau_theta, tau_psi);
}

Mat4 mixer(const QuadParams& p) {
  const double a = p.l / std::sqrt(2.0);
  const double b = p.kd_over_kt;
  Mat4 M;
  M << 1, 1, 1, 1,
       -a, -a, a, a,
       -a, a, a, -a,
       b, -b, b, -b;
  return M;
}

Vec4 allocate(const Vec4& wrench, const QuadParams& p) {
  const Mat4 M = mixer(p);
  Eigen::FullPivLU<Mat4> lu(M);
  if (!lu.isInvertible()) {
    throw std::runtime_error("allocate: mixer matrix is singular");
  }
  return lu.solve(wrench);
}

Vec12 dynamics_rhs(const Vec12& s, const Vec4& u, const Vec4& alpha,
                   const QuadParams& p, const NominalGains& g) {
  const double sphi = std::sin(s[kPhi]), cphi = std::cos(s[kPhi]);
  const double sth = std::sin(s[kTheta]), cth = std::cos(s[kTheta]);
  const double spsi = std::sin(s[kPsi]), cpsi = std::cos(s[kPsi]);
  if (!(cth > kSingularCosTheta)) {
    throw SingularAttitudeError("dynamics_rhs: cos(theta) <= 1e-3");
  }

  const Vec3 er = euler_rates(s.segment<3>(kPhi), s.segment<3>(kP));
  const double a = p.l / std::sqrt(2.0);

  const double T = p.m * p.g - g.Kz * s[kZ] + u.sum();
  const double tau_phi = g.Kphi * (g.Ky * s[kY] - s[kPhi]) +
                         g.Kphid * (g.Ky * s[kVy] - er[0]) +
                         a * (-u[0] - u[1] + u[2] + u[3]);
  const double tau_theta = -g.Ktheta * (g.Kx * s[kX] + s[kTheta]) -
                           g.Kthetad * (g.Kx * s[kVx] + er[1]) +
                           a * (-u[0] + u[1] + u[2] - u[3]);
  const double tau_psi = -g.Kpsi * s[kPsi] - g.Kpsid * er[2] +
                         p.kd_over_kt * (u[0] - u[1] + u[2] - u[3]);

  const double Ta = (1.0 + alpha[0]) * T / p.m;
  const double px = s[kP], q = s[kQ], r = s[kR];

  Vec12 ds;
  ds[kX] = s[kVx];
  ds[kY] = s[kVy];
  ds[kZ] = s[kVz];
  ds[kPhi] = er[0];
  ds[kTheta] = er[1];
  ds[kPsi] = er[2];
  ds[kVx] = Ta * (cpsi * sth * cphi + spsi * sphi) - p.Dx / p.m * s[kVx];
  ds[kVy] = Ta * (spsi * sth * cphi - cpsi * sphi) - p.Dy / p.m * s[kVy];
  ds[kVz] = -p.g + Ta * (cth * cphi) - p.Dz / p.m * s[kVz];
  ds[kP] = ((p.Iyy - p.Izz) * q * r + (1.0 + alpha[1]) * tau_phi) / p.Ixx;
  ds[kQ] = ((p.Izz - p.Ixx) * px * r + (1.0 + alpha[2]) * tau_theta) / p.Iyy;
  ds[kR] = ((p.Ixx - p.Iyy) * px * q + (1.0 + alpha[3]) * tau_psi) / p.Izz;
  return ds;
}

Vec12 step(const Vec12& s, const Vec4& u, const Vec4& alpha, double dt,
           const QuadParams& p, const NominalGains& g) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  return s + dt * dynamics_rhs(s, u, alpha, p, g);
}

Trajectory simulate(const Policy& policy, const Vec12& s0,
                    const AlphaSampler& alpha_sampler, double horizon,
                    double dt, const QuadParams& p, const NominalGains& g) {
  if (!(horizon > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("simulate: horizon and dt must be positive");
  }
  const int n_steps = static_cast<int>(std::llround(horizon / dt));
  Trajectory traj;
  traj.t.reserve(n_steps + 1);
  traj.state.reserve(n_steps + 1);
  traj.control.reserve(n_steps);
  traj.alpha.reserve(n_steps);

  Vec12 s = s0;
  traj.t.push_back(0.0);
  traj.state.push_back(s);
  for (int k = 0; k < n_steps; ++k) {
    const Vec4 u = policy ? policy(s) : Vec4::Zero();
    const Vec4 al = alpha_sampler();
    try {
      s = step(s, u, al, dt, p, g);
    } catch (const SingularAttitudeError& e) {
      throw SimulationFault(std::string("simulate: aborted at t=") +
                            std::to_string((k + 1) * dt) + ": " + e.what());
    }
    if (!s.allFinite()) {
      throw SimulationFault("simulate: non-finite state at t=" +
                            std::to_string((k + 1) * dt));
    }
    traj.control.push_back(u);
    traj.alpha.push_back(al);
    traj.t.push_back((k + 1) * dt);
    traj.state.push_back(s);
  }
  return traj;
}

LinearizedSystem linearize(const QuadParams& p, const NominalGains& g) {
  constexpr double h = 1e-6;
  LinearizedSystem lin;
  const Vec4 zero4 = Vec4::Zero();

  for (int j = 0; j < 12; ++j) {
    Vec12 sp = Vec12::Zero(), sm = Vec12::Zero();
    sp[j] = h;
    sm[j] = -h;
    lin.A_K.col(j) =
        (dynamics_rhs(sp, zero4, zero4, p, g) - dynamics_rhs(sm, zero4, zero4, p, g)) /
        (2.0 * h);
  }
  for (int j = 0; j < 4; ++j) {
    Vec4 up = Vec4::Zero(), um = Vec4::Zero();
    up[j] = h;
    um[j] = -h;
    lin.B0.col(j) = (dynamics_rhs(Vec12::Zero(), up, zero4, p, g) -
                     dynamics_rhs(Vec12::Zero(), um, zero4, p, g)) /
                    (2.0 * h);
  }

  const Vec4 hover = allocate(Vec4(p.m * p.g, 0, 0, 0), p);
  for (int j = 0; j < 12; ++j) {
    Vec12 sp = Vec12::Zero(), sm = Vec12::Zero();
    sp[j] = h;
    sm[j] = -h;
    const Vec4 fp = allocate(nominal_control(sp, g, p), p) - hover;
    const Vec4 fm = allocate(nominal_control(sm, g, p), p) - hover;
    lin.K.col(j) = (fp - fm) / (2.0 * h);
  }

  const auto eig = lin.A_K.eigenvalues();
  for (int i = 0; i < eig.size(); ++i) {
    if (eig[i].real() >= 0.0) {
      throw std::runtime_error(
          "linearize: closed-loop matrix A_K is not Hurwitz (eigenvalue with "
          "real part " + std::to_string(eig[i].real()) + ")");
    }
  }
  return lin;
}

}  // namespace cfl
