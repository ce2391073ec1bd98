#include "certiflight/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cfl {

std::uint64_t fnv1a_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for '" + key + "': " + v);
  }
  if (pos != v.size())
    throw ConfigError("config: trailing characters in value for '" + key + "'");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long long d = 0;
  try {
    d = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for '" + key + "': " + v);
  }
  if (pos != v.size())
    throw ConfigError("config: trailing characters in value for '" + key + "'");
  return d;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  cfg.hash = fnv1a_hash(text);

  // Ordered key-value pairs, validated against the schema as parsed.
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: unterminated section at line " +
                          std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key=value at line " +
                        std::to_string(lineno));
    if (section.empty())
      throw ConfigError("config: key outside any section at line " +
                        std::to_string(lineno));
    pairs.emplace_back(section + "." + trim(line.substr(0, eq)),
                       trim(line.substr(eq + 1)));
  }

  // Domain radii are collected and applied once at the end.
  double pos_r = 1.5, att_r = 0.2, vel_r = 1.5, rate_r = 0.2;
  bool alpha_set = false;

  std::map<std::string, std::function<void(const std::string&, const std::string&)>>
      schema;
  auto dbl = [&](double* field) {
    return [field](const std::string& k, const std::string& v) {
      *field = to_double(k, v);
    };
  };
  auto integer = [&](int* field) {
    return [field](const std::string& k, const std::string& v) {
      *field = static_cast<int>(to_int(k, v));
    };
  };

  schema["quad.Ixx"] = dbl(&cfg.quad.Ixx);
  schema["quad.Iyy"] = dbl(&cfg.quad.Iyy);
  schema["quad.Izz"] = dbl(&cfg.quad.Izz);
  schema["quad.g"] = dbl(&cfg.quad.g);
  schema["quad.m"] = dbl(&cfg.quad.m);
  schema["quad.l"] = dbl(&cfg.quad.l);
  schema["quad.kd_over_kt"] = dbl(&cfg.quad.kd_over_kt);
  schema["quad.Dx"] = dbl(&cfg.quad.Dx);
  schema["quad.Dy"] = dbl(&cfg.quad.Dy);
  schema["quad.Dz"] = dbl(&cfg.quad.Dz);

  schema["gains.Kx"] = dbl(&cfg.gains.Kx);
  schema["gains.Ky"] = dbl(&cfg.gains.Ky);
  schema["gains.Kz"] = dbl(&cfg.gains.Kz);
  schema["gains.Kphi"] = dbl(&cfg.gains.Kphi);
  schema["gains.Ktheta"] = dbl(&cfg.gains.Ktheta);
  schema["gains.Kpsi"] = dbl(&cfg.gains.Kpsi);
  schema["gains.Kphid"] = dbl(&cfg.gains.Kphid);
  schema["gains.Kthetad"] = dbl(&cfg.gains.Kthetad);
  schema["gains.Kpsid"] = dbl(&cfg.gains.Kpsid);

  schema["alpha.mag"] = [&](const std::string& k, const std::string& v) {
    cfg.alpha_mag = to_double(k, v);
    alpha_set = true;
  };

  schema["certify.L0"] = dbl(&cfg.certify.L0);
  schema["certify.pos_r"] = dbl(&pos_r);
  schema["certify.att_r"] = dbl(&att_r);
  schema["certify.vel_r"] = dbl(&vel_r);
  schema["certify.rate_r"] = dbl(&rate_r);
  schema["certify.attenuation"] = dbl(&cfg.certify.attenuation);
  schema["certify.growth"] = dbl(&cfg.certify.schedule.growth);
  schema["certify.tol"] = dbl(&cfg.certify.schedule.tol);
  schema["certify.max_rounds"] = integer(&cfg.certify.schedule.max_rounds);
  schema["certify.eps_margin"] = dbl(&cfg.certify.opts.eps_margin);
  schema["certify.multiplier_cap"] = dbl(&cfg.certify.opts.multiplier_cap);

  schema["ppo.clip_factor"] = dbl(&cfg.ppo.clip_factor);
  schema["ppo.discount"] = dbl(&cfg.ppo.discount);
  schema["ppo.gae_factor"] = dbl(&cfg.ppo.gae_factor);
  schema["ppo.entropy_weight"] = dbl(&cfg.ppo.entropy_weight);
  schema["ppo.actor_lr"] = dbl(&cfg.ppo.actor_lr);
  schema["ppo.critic_lr"] = dbl(&cfg.ppo.critic_lr);
  schema["ppo.horizon"] = integer(&cfg.ppo.horizon);
  schema["ppo.minibatch"] = integer(&cfg.ppo.minibatch);
  schema["ppo.epochs"] = integer(&cfg.ppo.epochs);
  schema["ppo.iterations"] = integer(&cfg.ppo.iterations);
  schema["ppo.episode_seconds"] = dbl(&cfg.ppo.episode_seconds);
  schema["ppo.dt"] = dbl(&cfg.ppo.dt);
  schema["ppo.ref_radius"] = dbl(&cfg.ppo.ref_radius);
  schema["ppo.logvar_init"] = dbl(&cfg.ppo.logvar_init);
  schema["ppo.seed"] = [&](const std::string& k, const std::string& v) {
    cfg.ppo.seed = static_cast<std::uint64_t>(to_int(k, v));
  };

  schema["eval.target_x"] = dbl(&cfg.eval.target(0));
  schema["eval.target_y"] = dbl(&cfg.eval.target(1));
  schema["eval.target_z"] = dbl(&cfg.eval.target(2));
  schema["eval.psi_d"] = dbl(&cfg.eval.psi_d);
  schema["eval.duration"] = dbl(&cfg.eval.duration);
  schema["eval.traj_duration"] = dbl(&cfg.eval.traj_duration);
  schema["eval.dt"] = dbl(&cfg.eval.dt);

  for (const auto& [key, value] : pairs) {
    const auto it = schema.find(key);
    if (it == schema.end())
      throw ConfigError("config: unknown key '" + key + "'");
    it->second(key, value);
  }

  cfg.certify.S0 = DomainBox::quad(pos_r, att_r, vel_r, rate_r);
  if (alpha_set) {
    cfg.certify.alpha_mag = cfg.alpha_mag;
    cfg.ppo.alpha_mag = cfg.alpha_mag;
    cfg.eval.alpha_mag = cfg.alpha_mag;
  }
  cfg.quad.validate();
  cfg.ppo.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void write_trajectory_csv(const Trajectory& traj,
                          const std::vector<Vec4>& refs,
                          const std::string& path) {
  if (traj.t.size() != traj.state.size() ||
      traj.t.size() != traj.control.size() ||
      traj.t.size() != traj.alpha.size() || traj.t.size() != refs.size())
    throw std::invalid_argument("write_trajectory_csv: ragged trajectory");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trajectory file: " + path);
  os << "t,x,y,z,phi,theta,psi,vx,vy,vz,p,q,r,u1,u2,u3,u4,a1,a2,a3,a4,"
        "ref_x,ref_y,ref_z,ref_psi\n";
  char buf[32];
  auto put = [&](double v, bool comma) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    if (comma) os << ',';
    os << buf;
  };
  for (size_t k = 0; k < traj.t.size(); ++k) {
    put(traj.t[k], false);
    for (int i = 0; i < 12; ++i) put(traj.state[k](i), true);
    for (int i = 0; i < 4; ++i) put(traj.control[k](i), true);
    for (int i = 0; i < 4; ++i) put(traj.alpha[k](i), true);
    for (int i = 0; i < 4; ++i) put(refs[k](i), true);
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing trajectory: " + path);
}

}  // namespace cfl
