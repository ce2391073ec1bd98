#include "certiflight/sector_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace cfl {

void DomainBox::validate() const {
  if (lower.size() != upper.size()) {
    throw std::invalid_argument("DomainBox: dimension mismatch");
  }
  for (int i = 0; i < dim(); ++i) {
    if (!(lower[i] < upper[i])) {
      throw std::invalid_argument("DomainBox: lower must be < upper");
    }
    if (!(lower[i] < 0.0 && upper[i] > 0.0)) {
      throw std::invalid_argument("DomainBox: origin must be interior");
    }
  }
}

void DomainBox::scale_group(int g, double factor) {
  for (int i = group_start.at(g); i < group_start.at(g + 1); ++i) {
    lower[i] *= factor;
    upper[i] *= factor;
  }
}

double DomainBox::max_norm() const {
  double acc = 0.0;
  for (int i = 0; i < dim(); ++i) {
    acc += std::pow(std::max(std::abs(lower[i]), std::abs(upper[i])), 2);
  }
  return std::sqrt(acc);
}

DomainBox DomainBox::quad(double pos_r, double att_r, double vel_r, double rate_r) {
  DomainBox box;
  box.lower.resize(12);
  box.upper.resize(12);
  const double radii[4] = {pos_r, att_r, vel_r, rate_r};
  for (int grp = 0; grp < 4; ++grp) {
    for (int i = 0; i < 3; ++i) {
      box.lower[grp * 3 + i] = -radii[grp];
      box.upper[grp * 3 + i] = radii[grp];
    }
  }
  box.group_start = {0, 3, 6, 9, 12};
  box.validate();
  return box;
}

DomainBox input_domain(double L, const DomainBox& S, int m) {
  if (L < 0.0) throw std::invalid_argument("input_domain: L must be >= 0");
  const double r = L * S.max_norm();
  DomainBox u;
  u.lower = VectorXd::Constant(m, -r);
  u.upper = VectorXd::Constant(m, r);
  u.group_start = {0, m};
  return u;
}

NpvSystem quad_npv_system(const QuadParams& p, const NominalGains& g) {
  NpvSystem sys;
  sys.n = 12;
  sys.m = 4;
  sys.d = 4;
  sys.rhs = [p, g](const VectorXd& s, const VectorXd& u, const VectorXd& alpha) {
    return VectorXd(dynamics_rhs(Vec12(s), Vec4(u), Vec4(alpha), p, g));
  };
  const LinearizedSystem lin = linearize(p, g);
  sys.A_K = lin.A_K;
  sys.B0 = lin.B0;
  return sys;
}

VectorXd npv_residual(const NpvSystem& sys, const VectorXd& s,
                      const VectorXd& u_nn, const VectorXd& alpha) {
  return sys.rhs(s, u_nn, alpha) - sys.A_K * s - sys.B0 * u_nn;
}

namespace {

// One sweep coordinate of the sector grid: a state, input, or alpha slot.
struct Coord {
  int kind;   // 0 = state, 1 = input, 2 = alpha
  int index;  // within its vector
  double lo, hi;
};

void write_coord(const Coord& c, double v, VectorXd& s, VectorXd& u, VectorXd& a) {
  (c.kind == 0 ? s[c.index] : (c.kind == 1 ? u[c.index] : a[c.index])) = v;
}

}  // namespace

SectorBounds estimate_sector_bounds(const NpvSystem& sys, const DomainBox& S,
                                    double L, const VectorXd& alpha_lo,
                                    const VectorXd& alpha_hi,
                                    const SectorGridSpec& grid) {
  // Degenerate (zero-width) coordinates are allowed here; the search layer
  // enforces the strict-interior invariant separately.
  for (int i = 0; i < S.dim(); ++i) {
    if (!(S.lower[i] <= 0.0 && S.upper[i] >= 0.0)) {
      throw std::invalid_argument("estimate_sector_bounds: box must contain 0");
    }
  }
  const int n = sys.n, m = sys.m, d = sys.d;
  const DomainBox U = input_domain(L, S, m);

  std::vector<Coord> coords;
  for (int i = 0; i < n; ++i) coords.push_back({0, i, S.lower[i], S.upper[i]});
  for (int i = 0; i < m; ++i) coords.push_back({1, i, U.lower[i], U.upper[i]});
  for (int i = 0; i < d; ++i) coords.push_back({2, i, alpha_lo[i], alpha_hi[i]});

  const double h = grid.fd_step;
  // Jacobian entry (i, j) of the residual at a point, by central differences.
  auto deriv = [&](int i, int j, VectorXd s, VectorXd u, const VectorXd& a) {
    double zp, zm;
    auto res = [&](const VectorXd& ss, const VectorXd& uu) {
      return sys.rhs(ss, uu, a)[i] - sys.A_K.row(i).dot(ss) -
             sys.B0.row(i).dot(uu);
    };
    if (j < n) {
      const double s0 = s[j];
      s[j] = s0 + h;
      zp = res(s, u);
      s[j] = s0 - h;
      zm = res(s, u);
    } else {
      const double u0 = u[j - n];
      u[j - n] = u0 + h;
      zp = res(s, u);
      u[j - n] = u0 - h;
      zm = res(s, u);
    }
    return (zp - zm) / (2.0 * h);
  };

  // Generic interior base point for dependency probing: incommensurate
  // fractions of each half-range so structural zeros at the origin do not
  // mask a dependency.
  VectorXd bs = VectorXd::Zero(n), bu = VectorXd::Zero(m), ba = VectorXd::Zero(d);
  {
    int k = 0;
    for (const Coord& c : coords) {
      const double frac = 0.31 + 0.29 * ((k * 7) % 5) / 5.0;
      write_coord(c, frac * c.hi, bs, bu, ba);
      ++k;
    }
  }

  SectorBounds sb;
  sb.lower = MatrixXd::Zero(n, n + m);
  sb.upper = MatrixXd::Zero(n, n + m);
  std::vector<std::pair<int, int>> bad_entries;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n + m; ++j) {
      // Dependency mask of this Jacobian entry.
      const double base_val = deriv(i, j, bs, bu, ba);
      std::vector<int> active;
      for (int k = 0; k < static_cast<int>(coords.size()); ++k) {
        const Coord& c = coords[k];
        if (c.hi - c.lo <= 0.0) continue;
        bool dep = false;
        for (double frac : {-0.61, 0.83}) {
          VectorXd ps = bs, pu = bu, pa = ba;
          write_coord(c, frac > 0 ? frac * c.hi : -frac * c.lo, ps, pu, pa);
          const double v = deriv(i, j, ps, pu, pa);
          if (std::abs(v - base_val) >
              1e-9 * std::max(1.0, std::abs(base_val))) {
            dep = true;
            break;
          }
        }
        if (dep) active.push_back(k);
      }

      int n_nonalpha = 0;
      for (int k : active) n_nonalpha += coords[k].kind != 2;
      const int npts = n_nonalpha <= 3   ? grid.points_small
                       : n_nonalpha == 4 ? grid.points_medium
                                         : grid.points_large;

      // Tensor grid over the active coordinates (alpha: corners + center),
      // plus the origin itself.
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      auto record = [&](double v) {
        if (!std::isfinite(v)) {
          bad_entries.emplace_back(i, j);
          return false;
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        return true;
      };
      if (!record(deriv(i, j, VectorXd::Zero(n), VectorXd::Zero(m),
                        VectorXd::Zero(d)))) {
        continue;
      }

      std::vector<int> counts;
      for (int k : active) counts.push_back(coords[k].kind == 2 ? 3 : npts);
      std::vector<int> idx(active.size(), 0);
      bool done = active.empty();
      bool entry_ok = true;
      while (!done && entry_ok) {
        VectorXd ps = VectorXd::Zero(n), pu = VectorXd::Zero(m),
                 pa = VectorXd::Zero(d);
        for (size_t k = 0; k < active.size(); ++k) {
          const Coord& c = coords[active[k]];
          const double f = counts[k] == 1
                               ? 0.5
                               : static_cast<double>(idx[k]) / (counts[k] - 1);
          write_coord(c, c.lo + f * (c.hi - c.lo), ps, pu, pa);
        }
        entry_ok = record(deriv(i, j, ps, pu, pa));
        // mixed-radix increment
        size_t pos = 0;
        for (; pos < idx.size(); ++pos) {
          if (++idx[pos] < counts[pos]) break;
          idx[pos] = 0;
        }
        done = pos == idx.size();
      }
      if (!entry_ok) continue;

      const double center = 0.5 * (lo + hi);
      const double half = 0.5 * (hi - lo) * grid.inflation + grid.inflation_abs;
      sb.lower(i, j) = center - half;
      sb.upper(i, j) = center + half;
    }
  }

  if (!bad_entries.empty()) {
    std::string msg = "estimate_sector_bounds: non-finite samples at entries";
    for (auto& e : bad_entries) {
      msg += " (" + std::to_string(e.first) + "," + std::to_string(e.second) + ")";
    }
    msg += "; shrink the state domain";
    throw SectorBoundError(msg);
  }
  return sb;
}

void write_sector_bounds_csv(const SectorBounds& sb, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "row,col,lower,upper\n";
  out.precision(12);
  for (int i = 0; i < sb.rows(); ++i) {
    for (int j = 0; j < sb.cols(); ++j) {
      out << i << ',' << j << ',' << sb.lower(i, j) << ',' << sb.upper(i, j)
          << '\n';
    }
  }
}

}  // namespace cfl
