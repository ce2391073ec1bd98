#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfl {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// State layout, also the column order of exported trajectory CSVs.
enum StateIndex : int {
  kX = 0, kY, kZ,          // position [m]
  kPhi, kTheta, kPsi,      // roll/pitch/yaw [rad]
  kVx, kVy, kVz,           // inertial velocity [m/s]
  kP, kQ, kR               // body angular velocity [rad/s]
};

struct SingularAttitudeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SimulationFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Iris quadcopter physical parameters. Defaults are the model used
/// throughout: all validation and certification runs assume these unless a
/// config overrides them.
struct QuadParams {
  double Ixx = 2.9125e-2;      // [kg m^2]
  double Iyy = 2.9125e-2;      // [kg m^2]
  double Izz = 5.5225e-2;      // [kg m^2]
  double g = 9.807;            // [m/s^2]
  double m = 1.5;              // [kg]
  double l = 0.25554;          // arm length [m]
  double kd_over_kt = 0.06;    // drag-to-thrust ratio
  double Dx = 0.25, Dy = 0.25, Dz = 0.25;  // linear drag [N s/m]

  void validate() const;  // throws std::invalid_argument on nonpositive fields
};

/// Cascade PD gains of the nominal controller.
struct NominalGains {
  double Kx = 0.05, Ky = 0.05, Kz = 0.1;
  double Kphi = 0.1, Ktheta = 0.1, Kpsi = 0.1;
  double Kphid = 0.01, Kthetad = 0.01, Kpsid = 0.1;
};

// cos(theta) guard below which attitude kinematics are treated as singular.
inline constexpr double kSingularCosTheta = 1e-3;

/// Body-to-inertial rotation matrix from ZYX Euler angles (phi, theta, psi).
Mat3 rotation_matrix(const Vec3& att);

/// Euler-angle rates from body rates. Throws SingularAttitudeError when
/// cos(theta) <= kSingularCosTheta.
Vec3 euler_rates(const Vec3& att, const Vec3& body_rates);

/// Desired (thrust, roll torque, pitch torque, yaw torque) of the nominal
/// cascade PD law in equilibrium-shifted coordinates (reference at origin).
/// Thrust includes the m*g hover feedforward.
Vec4 nominal_control(const Vec12& s, const NominalGains& g, const QuadParams& p);

/// X-configuration mixer: maps per-motor thrusts to (T, tau_phi, tau_theta,
/// tau_psi).
Mat4 mixer(const QuadParams& p);

/// Per-motor thrusts realizing the commanded wrench. Throws
/// std::runtime_error if the mixer is singular.
Vec4 allocate(const Vec4& wrench, const QuadParams& p);

/// Closed-loop state derivative: rigid-body dynamics with the nominal PD law
/// embedded, additive per-motor thrust increments u, and multiplicative
/// thrust/torque variation alpha.
Vec12 dynamics_rhs(const Vec12& s, const Vec4& u, const Vec4& alpha,
                   const QuadParams& p, const NominalGains& g);

/// One explicit first-order (Euler) step.
Vec12 step(const Vec12& s, const Vec4& u, const Vec4& alpha, double dt,
           const QuadParams& p, const NominalGains& g);

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec12> state;
  std::vector<Vec4> control;
  std::vector<Vec4> alpha;
};

using Policy = std::function<Vec4(const Vec12&)>;
using AlphaSampler = std::function<Vec4()>;

/// Fixed-step closed-loop rollout. Deterministic for a deterministic sampler.
/// Throws SimulationFault on attitude singularity or non-finite state.
Trajectory simulate(const Policy& policy, const Vec12& s0,
                    const AlphaSampler& alpha_sampler, double horizon,
                    double dt, const QuadParams& p, const NominalGains& g);

/// Linearization of the closed loop at the origin plus the nominal law's
/// own state-feedback gain, all via central finite differences.
struct LinearizedSystem {
  Eigen::Matrix<double, 12, 12> A_K;  // d rhs / d s at (0,0,0)
  Eigen::Matrix<double, 12, 4> B0;   // d rhs / d u at (0,0,0)
  Eigen::Matrix<double, 4, 12> K;    // d (allocated nominal thrusts) / d s
};

/// Computes the origin linearization and verifies A_K is Hurwitz; throws
/// std::runtime_error otherwise.
LinearizedSystem linearize(const QuadParams& p, const NominalGains& g);

}  // namespace cfl
