#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "certiflight/lmi_certify.hpp"
#include "certiflight/quad_dynamics.hpp"
#include "certiflight/rl_train.hpp"

namespace cfl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  Vec3 target{1.4, 0.0, 0.0};  // reference position of the step scenario
  double psi_d = 0.0;
  double duration = 60.0;       // position-tracking run length [s]
  double traj_duration = 18.0;  // trajectory-tracking run length [s]
  double dt = 0.01;
  double alpha_mag = 0.05;
};

/// Everything an experiment needs, with defaults reproducing the reference
/// quadcopter setup. Loaded from an INI-style file with sections [quad],
/// [gains], [alpha], [certify], [ppo], [eval]; unknown sections or keys are
/// rejected.
struct ExperimentConfig {
  QuadParams quad;
  NominalGains gains;
  double alpha_mag = 0.05;
  QuadCertifyConfig certify;
  PpoConfig ppo;
  EvalConfig eval;
  std::uint64_t hash = 0;  // FNV-1a of the file bytes (0 for defaults)
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

std::uint64_t fnv1a_hash(const std::string& bytes);

/// Trajectory CSV with the fixed header
/// t,x,y,z,phi,theta,psi,vx,vy,vz,p,q,r,u1,u2,u3,u4,a1,a2,a3,a4,
/// ref_x,ref_y,ref_z,ref_psi and 9 significant digits. states are absolute
/// (reference added back); refs has one (ref_x, ref_y, ref_z, ref_psi) row
/// per step.
void write_trajectory_csv(const Trajectory& traj,
                          const std::vector<Vec4>& refs,
                          const std::string& path);

}  // namespace cfl
