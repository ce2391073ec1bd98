#include "certiflight/traj_plan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cfl {

namespace {

constexpr int kDeg = 7;

// d-th derivative of the monomial basis at tau (normalized time), without
// the 1/T^d chain-rule factor.
Eigen::RowVectorXd basis(double tau, int d) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(kDeg + 1);
  for (int k = d; k <= kDeg; ++k) {
    double f = 1.0;
    for (int j = 0; j < d; ++j) f *= k - j;
    row(k) = f * std::pow(tau, k - d);
  }
  return row;
}

void validate_waypoints(const std::vector<TimedWaypoint>& wp) {
  if (wp.size() < 2)
    throw TrajectoryError("trajectory: need at least two waypoints");
  for (size_t i = 1; i < wp.size(); ++i)
    if (!(wp[i].t > wp[i - 1].t))
      throw TrajectoryError("trajectory: waypoint times must strictly increase");
}

}  // namespace

PolyTrajectory::PolyTrajectory(std::vector<double> knots,
                               std::array<Eigen::MatrixXd, 3> coeffs)
    : knots_(std::move(knots)), coeffs_(std::move(coeffs)) {
  if (knots_.size() < 2)
    throw TrajectoryError("trajectory: need at least one segment");
  for (const auto& C : coeffs_)
    if (C.rows() != static_cast<Eigen::Index>(knots_.size()) - 1)
      throw TrajectoryError("trajectory: coefficient/knot count mismatch");
}

Vec3 PolyTrajectory::derivative(double t, int order) const {
  if (t < knots_.front() - 1e-12 || t > knots_.back() + 1e-12)
    throw TrajectoryError("trajectory: time outside [t_min, t_max]");
  t = std::clamp(t, knots_.front(), knots_.back());
  int seg = static_cast<int>(
                std::upper_bound(knots_.begin(), knots_.end(), t) -
                knots_.begin()) - 1;
  seg = std::clamp(seg, 0, num_segments() - 1);
  const double T = knots_[seg + 1] - knots_[seg];
  const double tau = (t - knots_[seg]) / T;
  const Eigen::RowVectorXd row = basis(tau, order);
  Vec3 out;
  for (int a = 0; a < 3; ++a)
    out(a) = row.head(coeffs_[a].cols()).dot(coeffs_[a].row(seg)) /
             std::pow(T, order);
  return out;
}

PolyTrajectory::Sample PolyTrajectory::sample(double t) const {
  Sample s;
  s.pos = derivative(t, 0);
  s.vel = derivative(t, 1);
  s.acc = derivative(t, 2);
  s.psi_d = 0.0;
  return s;
}

double PolyTrajectory::snap_cost(double dt) const {
  if (!(dt > 0.0)) throw TrajectoryError("snap_cost: dt must be positive");
  double cost = 0.0;
  Vec3 prev = derivative(t_min(), 3);
  for (double t = t_min() + dt; t <= t_max() + 1e-12; t += dt) {
    const Vec3 cur = derivative(std::min(t, t_max()), 3);
    cost += ((cur - prev) / dt).squaredNorm() * dt;
    prev = cur;
  }
  return cost;
}

PolyTrajectory min_snap(const std::vector<TimedWaypoint>& wp) {
  validate_waypoints(wp);
  const int nseg = static_cast<int>(wp.size()) - 1;
  const int nc = 8 * nseg;

  // Snap Gram matrix per segment on normalized time; the 1/T^7 factor
  // weights each segment.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nc, nc);
  for (int i = 0; i < nseg; ++i) {
    const double T = wp[i + 1].t - wp[i].t;
    const double w = 1.0 / std::pow(T, 7);
    for (int k = 4; k <= kDeg; ++k)
      for (int l = 4; l <= kDeg; ++l) {
        double fk = 1.0, fl = 1.0;
        for (int j = 0; j < 4; ++j) {
          fk *= k - j;
          fl *= l - j;
        }
        Q(8 * i + k, 8 * i + l) = w * fk * fl / (k + l - 7);
      }
  }

  const int nconstr = 2 * nseg + 4 * (nseg - 1) + 6;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nconstr, nc);
  std::array<Eigen::VectorXd, 3> b;
  for (auto& v : b) v = Eigen::VectorXd::Zero(nconstr);

  int r = 0;
  for (int i = 0; i < nseg; ++i) {  // waypoint interpolation
    A.block(r, 8 * i, 1, 8) = basis(0.0, 0);
    for (int a = 0; a < 3; ++a) b[a](r) = wp[i].pos(a);
    ++r;
    A.block(r, 8 * i, 1, 8) = basis(1.0, 0);
    for (int a = 0; a < 3; ++a) b[a](r) = wp[i + 1].pos(a);
    ++r;
  }
  for (int i = 0; i + 1 < nseg; ++i) {  // C1..C4 at interior knots
    const double Ti = wp[i + 1].t - wp[i].t;
    const double Tn = wp[i + 2].t - wp[i + 1].t;
    for (int d = 1; d <= 4; ++d) {
      A.block(r, 8 * i, 1, 8) = basis(1.0, d) / std::pow(Ti, d);
      A.block(r, 8 * (i + 1), 1, 8) = -basis(0.0, d) / std::pow(Tn, d);
      ++r;
    }
  }
  for (int d = 1; d <= 3; ++d) {  // rest-to-rest endpoints
    A.block(r, 0, 1, 8) =
        basis(0.0, d) / std::pow(wp[1].t - wp[0].t, d);
    ++r;
    A.block(r, 8 * (nseg - 1), 1, 8) =
        basis(1.0, d) / std::pow(wp[nseg].t - wp[nseg - 1].t, d);
    ++r;
  }

  Eigen::MatrixXd KKT = Eigen::MatrixXd::Zero(nc + nconstr, nc + nconstr);
  KKT.topLeftCorner(nc, nc) = 2.0 * Q;
  KKT.topRightCorner(nc, nconstr) = A.transpose();
  KKT.bottomLeftCorner(nconstr, nc) = A;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(KKT);
  if (!lu.isInvertible())
    throw TrajectoryError("min_snap: singular KKT system (degenerate timing)");

  std::vector<double> knots(wp.size());
  for (size_t i = 0; i < wp.size(); ++i) knots[i] = wp[i].t;
  std::array<Eigen::MatrixXd, 3> coeffs;
  for (int a = 0; a < 3; ++a) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nc + nconstr);
    rhs.tail(nconstr) = b[a];
    const Eigen::VectorXd sol = lu.solve(rhs);
    coeffs[a].resize(nseg, kDeg + 1);
    for (int i = 0; i < nseg; ++i)
      coeffs[a].row(i) = sol.segment(8 * i, 8).transpose();
  }
  return PolyTrajectory(std::move(knots), std::move(coeffs));
}

PolyTrajectory natural_cubic(const std::vector<TimedWaypoint>& wp) {
  validate_waypoints(wp);
  const int n = static_cast<int>(wp.size()) - 1;  // segments

  std::vector<double> knots(wp.size());
  for (size_t i = 0; i < wp.size(); ++i) knots[i] = wp[i].t;

  std::array<Eigen::MatrixXd, 3> coeffs;
  for (int a = 0; a < 3; ++a) {
    // Second derivatives M at the knots, natural boundary (M0 = Mn = 0).
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n + 1, n + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    T(0, 0) = 1.0;
    T(n, n) = 1.0;
    for (int i = 1; i < n; ++i) {
      const double hp = knots[i] - knots[i - 1];
      const double hn = knots[i + 1] - knots[i];
      T(i, i - 1) = hp / 6.0;
      T(i, i) = (hp + hn) / 3.0;
      T(i, i + 1) = hn / 6.0;
      rhs(i) = (wp[i + 1].pos(a) - wp[i].pos(a)) / hn -
               (wp[i].pos(a) - wp[i - 1].pos(a)) / hp;
    }
    const Eigen::VectorXd M = T.fullPivLu().solve(rhs);

    coeffs[a] = Eigen::MatrixXd::Zero(n, kDeg + 1);
    for (int i = 0; i < n; ++i) {
      const double h = knots[i + 1] - knots[i];
      const double w0 = wp[i].pos(a), w1 = wp[i + 1].pos(a);
      const double h2 = h * h / 6.0;
      coeffs[a](i, 0) = w0;
      coeffs[a](i, 1) = (w1 - w0) + h2 * (-2.0 * M(i) - M(i + 1));
      coeffs[a](i, 2) = h2 * 3.0 * M(i);
      coeffs[a](i, 3) = h2 * (M(i + 1) - M(i));
    }
  }
  return PolyTrajectory(std::move(knots), std::move(coeffs));
}

std::vector<TimedWaypoint> load_waypoints_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open waypoints file: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw TrajectoryError("waypoints: empty file");
  auto strip = [](std::string s) {
    s.erase(std::remove_if(s.begin(), s.end(),
                           [](unsigned char c) { return std::isspace(c); }),
            s.end());
    return s;
  };
  if (strip(line) != "x,y,z,t")
    throw TrajectoryError("waypoints: expected header 'x,y,z,t'");
  std::vector<TimedWaypoint> wp;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    std::istringstream row(line);
    TimedWaypoint w;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> w.pos(0) >> c1 >> w.pos(1) >> c2 >> w.pos(2) >> c3 >> w.t) ||
        c1 != ',' || c2 != ',' || c3 != ',')
      throw TrajectoryError("waypoints: malformed row at line " +
                            std::to_string(lineno));
    wp.push_back(w);
  }
  validate_waypoints(wp);
  return wp;
}

void save_waypoints_csv(const std::vector<TimedWaypoint>& wp,
                        const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open waypoints file: " + path);
  os.precision(9);
  os << "x,y,z,t\n";
  for (const TimedWaypoint& w : wp)
    os << w.pos(0) << ',' << w.pos(1) << ',' << w.pos(2) << ',' << w.t << '\n';
  if (!os) throw std::runtime_error("failed writing waypoints: " + path);
}

}  // namespace cfl
