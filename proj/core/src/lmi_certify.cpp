#include "certiflight/lmi_certify.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cfl {
namespace {

// Index helpers inside the N x N LMI: the outer vector is
// [s (n), chi (m*n, output-major), xi (n*(n+m), row-major over the residual
// Jacobian decomposition)].
struct Layout {
  int n, m;
  int chi0, xi0, N;
  explicit Layout(const LmiInstance& inst)
      : n(inst.n), m(inst.m), chi0(inst.n), xi0(inst.n + inst.m * inst.n),
        N(inst.size()) {}
  int chi(int out, int j) const { return chi0 + out * n + j; }
  int xi(int i, int j) const { return xi0 + i * (n + m) + j; }
};

// Sector coefficients of entry (i, j): midpoint c and the relaxed quadratic
// weight w = cbar^2 - c^2 with cbar = max(|lo|, |hi|).
void sector_coeffs(const SectorBounds& sb, int i, int j, double* c, double* w) {
  const double lo = sb.lower(i, j), hi = sb.upper(i, j);
  *c = 0.5 * (lo + hi);
  const double cbar = std::max(std::abs(lo), std::abs(hi));
  *w = cbar * cbar - *c * *c;
}

SparseVec unit(int k) { return {{k, 1.0}}; }
SparseVec scaled_unit(int k, double a) { return {{k, a}}; }

// Variable packing for the feasibility SDP:
//   x[0]                 shift t
//   x[1 .. 1+n(n+1)/2)   vech(P), column-major upper triangle (a <= b)
//   next n*(n+m)         Lambda, row-major
//   next m*n             gamma, row-major
struct Packing {
  int n, m;
  int p0 = 1, lam0 = 0, gam0 = 0, nvar = 0;
  Packing(int n_, int m_) : n(n_), m(m_) {
    lam0 = p0 + n * (n + 1) / 2;
    gam0 = lam0 + n * (n + m);
    nvar = gam0 + m * n;
  }
  int P(int a, int b) const {  // requires a <= b
    return p0 + b * (b + 1) / 2 + a;
  }
  int Lam(int i, int j) const { return lam0 + i * (n + m) + j; }
  int Gam(int i, int j) const { return gam0 + i * n + j; }
};

}  // namespace

void LmiInstance::validate() const {
  if (n <= 0 || m <= 0) throw std::invalid_argument("LmiInstance: n, m must be positive");
  if (A_K.rows() != n || A_K.cols() != n)
    throw std::invalid_argument("LmiInstance: A_K must be n x n");
  if (sector.rows() != n || sector.cols() != n + m)
    throw std::invalid_argument("LmiInstance: sector bounds must be n x (n+m)");
  if (!(L > 0.0)) throw std::invalid_argument("LmiInstance: L must be positive");
  if (L_col.size() != 0) {
    if (L_col.size() != n)
      throw std::invalid_argument("LmiInstance: L_col must have n entries");
    for (int j = 0; j < n; ++j)
      if (!(L_col(j) > 0.0))
        throw std::invalid_argument("LmiInstance: L_col must be positive");
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + m; ++j)
      if (sector.lower(i, j) > sector.upper(i, j))
        throw std::invalid_argument("LmiInstance: crossed sector bounds");
}

MatrixXd assemble_lmi(const LmiInstance& inst, const MatrixXd& P,
                      const MatrixXd& Lambda, const MatrixXd& gamma) {
  inst.validate();
  const Layout ly(inst);
  const int n = inst.n, m = inst.m;
  if (P.rows() != n || P.cols() != n || Lambda.rows() != n ||
      Lambda.cols() != n + m || gamma.rows() != m || gamma.cols() != n)
    throw std::invalid_argument("assemble_lmi: wrong multiplier shapes");

  MatrixXd M = MatrixXd::Zero(ly.N, ly.N);

  // (s, s): P A_K + A_K^T P plus the diagonal sector and gain terms.
  M.topLeftCorner(n, n) = P * inst.A_K + inst.A_K.transpose() * P;
  for (int j = 0; j < n; ++j) {
    double diag = 0.0;
    for (int i = 0; i < n; ++i) {
      double c, w;
      sector_coeffs(inst.sector, i, j, &c, &w);
      diag += w * Lambda(i, j);
    }
    const double Lj = inst.L_col.size() ? inst.L_col(j) : inst.L;
    for (int i = 0; i < m; ++i) diag += Lj * Lj * gamma(i, j);
    M(j, j) += diag;
  }

  // (chi, chi): all-ones blocks per controller output from the input-column
  // sector constraints, and -gamma on the diagonal.
  for (int r = 0; r < m; ++r) {
    double block = 0.0;
    for (int i = 0; i < n; ++i) {
      double c, w;
      sector_coeffs(inst.sector, i, n + r, &c, &w);
      block += w * Lambda(i, n + r);
    }
    for (int j1 = 0; j1 < n; ++j1)
      for (int j2 = 0; j2 < n; ++j2) M(ly.chi(r, j1), ly.chi(r, j2)) += block;
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) M(ly.chi(i, j), ly.chi(i, j)) -= gamma(i, j);

  // (xi, xi): -Lambda on the diagonal.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + m; ++j) M(ly.xi(i, j), ly.xi(i, j)) -= Lambda(i, j);

  // (xi, s): R^T P (the residual recomposition) plus the state cross terms.
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < n + m; ++k) {
        M(ly.xi(a, k), b) += P(a, b);
        M(b, ly.xi(a, k)) += P(a, b);
      }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double c, w;
      sector_coeffs(inst.sector, i, j, &c, &w);
      const double v = c * Lambda(i, j);
      M(ly.xi(i, j), j) += v;
      M(j, ly.xi(i, j)) += v;
    }

  // (xi, chi): input cross terms spread over the chi decomposition.
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < m; ++r) {
      double c, w;
      sector_coeffs(inst.sector, i, n + r, &c, &w);
      const double v = c * Lambda(i, n + r);
      for (int j = 0; j < n; ++j) {
        M(ly.xi(i, n + r), ly.chi(r, j)) += v;
        M(ly.chi(r, j), ly.xi(i, n + r)) += v;
      }
    }

  return M;
}

namespace {

// Builds the shift-minimization SDP: min t s.t. t I - M(P, Lambda, gamma) > 0,
// P > eps_P I, tr P = n, multipliers in (0, cap).
SdpProblem build_problem(const LmiInstance& inst, const CertifyOptions& opts) {
  const Layout ly(inst);
  const Packing pk(inst.n, inst.m);
  const int n = inst.n, m = inst.m;

  SdpProblem prob;
  prob.nvar = pk.nvar;
  prob.cost = VectorXd::Zero(pk.nvar);
  prob.cost(0) = 1.0;

  SdpBlock big;
  big.dim = ly.N;
  big.F0 = MatrixXd::Zero(ly.N, ly.N);
  big.identity_var = 0;
  big.coeff.resize(pk.nvar);

  // All atoms below enter t I - M, so every M contribution is negated.
  for (int b = 0; b < n; ++b)
    for (int a = 0; a <= b; ++a) {
      auto& atoms = big.coeff[pk.P(a, b)];
      // P A_K + A_K^T P
      SparseVec aka, akb;
      for (int k = 0; k < n; ++k) {
        if (inst.A_K(a, k) != 0.0) aka.push_back({k, -inst.A_K(a, k)});
        if (inst.A_K(b, k) != 0.0) akb.push_back({k, -inst.A_K(b, k)});
      }
      if (a == b) {
        atoms.push_back({unit(a), akb});
      } else {
        atoms.push_back({unit(a), akb});
        atoms.push_back({unit(b), aka});
      }
      // R^T P and its mirror
      SparseVec rho_a, rho_b;
      for (int k = 0; k < n + m; ++k) {
        rho_a.push_back({ly.xi(a, k), 1.0});
        rho_b.push_back({ly.xi(b, k), 1.0});
      }
      atoms.push_back({rho_a, scaled_unit(b, -1.0)});
      if (a != b) atoms.push_back({rho_b, scaled_unit(a, -1.0)});
    }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {  // state columns
      double c, w;
      sector_coeffs(inst.sector, i, j, &c, &w);
      auto& atoms = big.coeff[pk.Lam(i, j)];
      if (w != 0.0) atoms.push_back({unit(j), scaled_unit(j, -0.5 * w)});
      if (c != 0.0)
        atoms.push_back({unit(ly.xi(i, j)), scaled_unit(j, -c)});
      atoms.push_back({unit(ly.xi(i, j)), scaled_unit(ly.xi(i, j), 0.5)});
    }
    for (int r = 0; r < m; ++r) {  // input columns
      double c, w;
      sector_coeffs(inst.sector, i, n + r, &c, &w);
      auto& atoms = big.coeff[pk.Lam(i, n + r)];
      SparseVec sigma;
      for (int j = 0; j < n; ++j) sigma.push_back({ly.chi(r, j), 1.0});
      if (w != 0.0) {
        SparseVec half = sigma;
        for (auto& e : half) e.second = -0.5 * w;
        atoms.push_back({sigma, half});
      }
      if (c != 0.0) {
        SparseVec cs = sigma;
        for (auto& e : cs) e.second = -c;
        atoms.push_back({unit(ly.xi(i, n + r)), cs});
      }
      atoms.push_back(
          {unit(ly.xi(i, n + r)), scaled_unit(ly.xi(i, n + r), 0.5)});
    }
  }

  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double Lj = inst.L_col.size() ? inst.L_col(j) : inst.L;
      auto& atoms = big.coeff[pk.Gam(i, j)];
      atoms.push_back({unit(j), scaled_unit(j, -0.5 * Lj * Lj)});
      atoms.push_back({unit(ly.chi(i, j)), scaled_unit(ly.chi(i, j), 0.5)});
    }

  prob.blocks.push_back(std::move(big));

  // P - eps_P I > 0
  SdpBlock pblock;
  pblock.dim = n;
  pblock.F0 = -opts.eps_P * MatrixXd::Identity(n, n);
  pblock.coeff.resize(pk.nvar);
  for (int b = 0; b < n; ++b)
    for (int a = 0; a <= b; ++a) {
      if (a == b)
        pblock.coeff[pk.P(a, b)].push_back({unit(a), scaled_unit(a, 0.5)});
      else
        pblock.coeff[pk.P(a, b)].push_back({unit(a), unit(b)});
    }
  prob.blocks.push_back(std::move(pblock));

  for (int v = pk.lam0; v < pk.nvar; ++v)
    prob.bounds.push_back({v, 0.0, opts.multiplier_cap});

  // Kill the joint scale invariance of (P, Lambda, gamma).
  prob.eq_a = VectorXd::Zero(pk.nvar);
  for (int a = 0; a < n; ++a) prob.eq_a(pk.P(a, a)) = 1.0;
  prob.eq_b = static_cast<double>(n);
  prob.has_eq = true;

  prob.x0 = VectorXd::Zero(pk.nvar);
  for (int a = 0; a < n; ++a) prob.x0(pk.P(a, a)) = 1.0;
  // Multipliers start at the center of their bound interval: the analytic
  // center sits near cap/2 for weakly-coupled multipliers, and starting
  // orders of magnitude below it makes the first centering climb the whole
  // way on a crawling line search.
  for (int v = pk.lam0; v < pk.nvar; ++v)
    prob.x0(v) = 0.5 * opts.multiplier_cap;
  const double mid = 0.5 * opts.multiplier_cap;
  const MatrixXd M0 = assemble_lmi(
      inst, MatrixXd::Identity(n, n),
      MatrixXd::Constant(n, n + m, mid), MatrixXd::Constant(m, n, mid));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M0);
  prob.x0(0) = es.eigenvalues().maxCoeff() + 1.0;
  return prob;
}

void unpack(const LmiInstance& inst, const VectorXd& x, MatrixXd* P,
            MatrixXd* Lambda, MatrixXd* gamma) {
  const Packing pk(inst.n, inst.m);
  const int n = inst.n, m = inst.m;
  *P = MatrixXd::Zero(n, n);
  for (int b = 0; b < n; ++b)
    for (int a = 0; a <= b; ++a) (*P)(a, b) = (*P)(b, a) = x(pk.P(a, b));
  *Lambda = MatrixXd::Zero(n, n + m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + m; ++j) (*Lambda)(i, j) = x(pk.Lam(i, j));
  *gamma = MatrixXd::Zero(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) (*gamma)(i, j) = x(pk.Gam(i, j));
}

// LAPACK-style diagonal balancing of A by powers of two: returns h with
// h_i > 0 such that diag(h) A diag(h)^{-1} has row and column norms of
// comparable size. Balancing is a pure preconditioner here: the feasibility
// question is invariant under the induced congruence, but the multiplier
// scales it produces are enormously better conditioned for an interior-point
// solve when A couples fast and slow channels.
VectorXd balance_scales(MatrixXd A) {
  const int n = static_cast<int>(A.rows());
  VectorXd h = VectorXd::Ones(n);
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        r += A(i, k) * A(i, k);
        c += A(k, i) * A(k, i);
      }
      if (r == 0.0 || c == 0.0) continue;
      r = std::sqrt(r);
      c = std::sqrt(c);
      double f = 1.0;
      while (c * f < r / (2.0 * f)) f *= 2.0;
      while (c * f > 2.0 * r / f) f /= 2.0;
      if (f != 1.0) {
        A.col(i) *= f;
        A.row(i) /= f;
        h(i) /= f;  // s'_i = h_i s_i scales the row of A by h_i = 1/f
        changed = true;
      }
    }
    if (!changed) break;
  }
  return h;
}

// The instance expressed in rescaled coordinates s' = diag(h) s: similarity
// on A_K, h_i / h_j on state-column sector entries, h_i on input columns, and
// per-column Lipschitz weights L / h_j for the chi S-procedure.
LmiInstance balanced_instance(const LmiInstance& inst, const VectorXd& h) {
  LmiInstance bal = inst;
  const int n = inst.n, m = inst.m;
  for (int a = 0; a < n; ++a)
    for (int k = 0; k < n; ++k) bal.A_K(a, k) = inst.A_K(a, k) * h(a) / h(k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double f = h(i) / h(j);
      bal.sector.lower(i, j) = inst.sector.lower(i, j) * f;
      bal.sector.upper(i, j) = inst.sector.upper(i, j) * f;
    }
    for (int r = 0; r < m; ++r) {
      bal.sector.lower(i, n + r) = inst.sector.lower(i, n + r) * h(i);
      bal.sector.upper(i, n + r) = inst.sector.upper(i, n + r) * h(i);
    }
  }
  bal.L_col.resize(n);
  for (int j = 0; j < n; ++j)
    bal.L_col(j) = (inst.L_col.size() ? inst.L_col(j) : inst.L) / h(j);
  return bal;
}

}  // namespace

FeasibilityResult check_feasible(const LmiInstance& inst,
                                 const CertifyOptions& opts) {
  inst.validate();
  const VectorXd h = balance_scales(inst.A_K);
  const LmiInstance bal = balanced_instance(inst, h);
  SdpProblem prob = build_problem(bal, opts);

  // Stop as soon as the question is answered: an iterate whose reassembled
  // LMI is already negative enough is a feasibility witness (code 1); a
  // centered objective whose optimality gap clears -eps_margin proves
  // infeasibility (code 2). This avoids chasing the ill-conditioned end of
  // the central path when the optimum sits near zero or at multiplier caps.
  SdpOptions sdp = opts.sdp;
  // The solve runs in balanced coordinates; a witness maps back exactly:
  // the Lyapunov form is invariant (P = H P' H with H = diag(h)), the sector
  // condition for row i picks up h_i^2 on its multiplier, and the chi
  // conditions are unchanged. The reported margin is always evaluated on the
  // original instance at the mapped witness, so acceptance is decided in the
  // caller's units.
  auto map_back = [&](const VectorXd& x, MatrixXd* P, MatrixXd* Lambda,
                      MatrixXd* gamma) {
    unpack(bal, x, P, Lambda, gamma);
    for (int a = 0; a < inst.n; ++a)
      for (int b = 0; b < inst.n; ++b) (*P)(a, b) *= h(a) * h(b);
    for (int i = 0; i < inst.n; ++i)
      for (int j = 0; j < inst.n + inst.m; ++j) (*Lambda)(i, j) *= h(i) * h(i);
  };
  auto margin_of = [&](const VectorXd& x) {
    MatrixXd P, Lambda, gamma;
    map_back(x, &P, &Lambda, &gamma);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(
        assemble_lmi(inst, P, Lambda, gamma));
    return es.eigenvalues().maxCoeff();
  };
  sdp.stop_check = [&](const VectorXd& x, double gap) {
    const double margin = margin_of(x);
    if (opts.verbose)
      std::fprintf(stderr, "  [lmi] gap=%.3e t=%+.6e margin=%+.6e\n", gap,
                   x(0), margin);
    if (margin < -opts.eps_margin) return 1;
    if (x(0) - gap > -opts.eps_margin) return 2;
    return 0;
  };

  SdpResult res = solve_sdp(prob, sdp);
  if (!res.converged)
    throw SolverNonconvergence("feasibility solve did not converge: " +
                               res.message);
  FeasibilityResult out;
  out.shift = res.obj;
  map_back(res.x, &out.P, &out.Lambda, &out.gamma);
  out.margin = margin_of(res.x);
  out.feasible =
      res.stop_code == 1 ||
      (res.stop_code == 0 && out.shift < -opts.eps_margin && out.margin < 0.0);
  return out;
}

Certificate maximize_L_S(const MatrixXd& A_K, const Eigen::MatrixXd& K,
                         const SectorProvider& provider, double L0,
                         const DomainBox& S0, const SearchSchedule& schedule,
                         const CertifyOptions& opts, SearchTrace* trace) {
  const int n = static_cast<int>(A_K.rows());
  const int m = static_cast<int>(K.rows());

  auto attempt = [&](double L, const DomainBox& S,
                     FeasibilityResult* res) -> bool {
    LmiInstance inst;
    inst.A_K = A_K;
    inst.n = n;
    inst.m = m;
    inst.L = L;
    try {
      inst.sector = provider(L, S);
    } catch (const SectorBoundError&) {
      return false;  // domain too large for the model: treat as infeasible
    }
    if (trace) ++trace->feasibility_checks;
    *res = check_feasible(inst, opts);
    return res->feasible;
  };

  double L = L0;
  DomainBox S = S0;
  FeasibilityResult best;
  if (!attempt(L, S, &best))
    throw InitialInfeasibleError("certification infeasible at the initial (L, S)");

  const int groups = S.num_groups();
  std::vector<bool> grow(1 + groups, true);
  grow[0] = schedule.grow_L;
  for (int g = 0; g < groups; ++g)
    if (!schedule.grow_group.empty())
      grow[1 + g] = g < static_cast<int>(schedule.grow_group.size()) &&
                    schedule.grow_group[g];
  std::vector<double> step(1 + groups, schedule.growth);

  // A knob keeps searching until its last rejected step is below tol, which
  // bounds the final relative gap to the true boundary by tol.
  auto active = [&](int k) { return grow[k] && step[k] - 1.0 >= 0.5 * schedule.tol; };

  for (int round = 0; round < schedule.max_rounds; ++round) {
    bool any = false;
    for (int k = 0; k < 1 + groups; ++k) {
      if (!active(k)) continue;
      any = true;
      double Lc = L;
      DomainBox Sc = S;
      if (k == 0)
        Lc *= step[k];
      else
        Sc.scale_group(k - 1, step[k]);
      FeasibilityResult res;
      bool ok;
      try {
        ok = attempt(Lc, Sc, &res);
      } catch (const SolverNonconvergence&) {
        // A borderline trial the solver cannot classify is rejected like an
        // infeasible one; only proven-feasible steps are ever accepted.
        ok = false;
      }
      if (ok) {
        L = Lc;
        S = Sc;
        best = res;
        if (trace) ++trace->accepted_steps;
      } else {
        step[k] = 1.0 + 0.5 * (step[k] - 1.0);
      }
    }
    if (!any) break;
  }

  Certificate cert;
  cert.P = best.P;
  cert.Lambda = best.Lambda;
  cert.gamma = best.gamma;
  cert.K = K;
  cert.L_star = L;
  cert.S_star = S;
  cert.margin = best.margin;
  return cert;
}

Certificate certify_quad(const QuadParams& p, const NominalGains& g,
                         const QuadCertifyConfig& cfg, SearchTrace* trace) {
  const NpvSystem sys = quad_npv_system(p, g);
  const LinearizedSystem lin = linearize(p, g);
  const Vec4 alpha_lo = Vec4::Constant(-cfg.alpha_mag);
  const Vec4 alpha_hi = Vec4::Constant(cfg.alpha_mag);

  SectorProvider provider = [&](double L, const DomainBox& S) {
    SectorBounds sb = estimate_sector_bounds(sys, S, L, alpha_lo, alpha_hi);
    sb.lower *= cfg.attenuation;
    sb.upper *= cfg.attenuation;
    return sb;
  };

  Certificate cert = maximize_L_S(sys.A_K, lin.K, provider, cfg.L0, cfg.S0,
                                  cfg.schedule, cfg.opts, trace);
  cert.attenuation = cfg.attenuation;
  cert.alpha_lo = Vec4::Constant(-cfg.attenuation * cfg.alpha_mag);
  cert.alpha_hi = Vec4::Constant(cfg.attenuation * cfg.alpha_mag);
  return cert;
}

namespace {

void write_matrix(std::ostream& os, const char* name, const MatrixXd& M) {
  os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      os << (j ? " " : "") << M(i, j);
    os << '\n';
  }
}

MatrixXd read_matrix(std::istream& is, const std::string& name) {
  std::string tag;
  int r = 0, c = 0;
  if (!(is >> tag >> r >> c) || tag != name || r <= 0 || c <= 0)
    throw std::runtime_error("certificate: bad or missing '" + name + "' section");
  MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      if (!(is >> M(i, j)))
        throw std::runtime_error("certificate: truncated '" + name + "' section");
  return M;
}

}  // namespace

void write_certificate(const Certificate& cert, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open certificate file: " + path);
  os << std::setprecision(17);
  os << "certiflight-certificate v1\n";
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(cert.config_hash));
  os << "config_hash " << hex << '\n';
  os << "L_star " << cert.L_star << '\n';
  os << "margin " << cert.margin << '\n';
  os << "attenuation " << cert.attenuation << '\n';
  os << "alpha_box " << cert.alpha_lo.size() << '\n';
  for (int i = 0; i < cert.alpha_lo.size(); ++i)
    os << cert.alpha_lo(i) << ' ' << cert.alpha_hi(i) << '\n';
  os << "domain " << cert.S_star.dim() << ' ' << cert.S_star.num_groups()
     << '\n';
  for (int g = 0; g <= cert.S_star.num_groups(); ++g)
    os << (g ? " " : "") << cert.S_star.group_start[g];
  os << '\n';
  for (int i = 0; i < cert.S_star.dim(); ++i)
    os << cert.S_star.lower(i) << ' ' << cert.S_star.upper(i) << '\n';
  write_matrix(os, "K", cert.K);
  write_matrix(os, "P", cert.P);
  write_matrix(os, "Lambda", cert.Lambda);
  write_matrix(os, "gamma", cert.gamma);
  if (!os) throw std::runtime_error("failed writing certificate: " + path);
}

Certificate read_certificate(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open certificate file: " + path);
  std::string word, ver;
  if (!(is >> word >> ver) || word != "certiflight-certificate" || ver != "v1")
    throw std::runtime_error("certificate: unrecognized header");
  Certificate cert;
  std::string hex;
  if (!(is >> word >> hex) || word != "config_hash")
    throw std::runtime_error("certificate: missing config_hash");
  cert.config_hash = std::stoull(hex, nullptr, 16);
  if (!(is >> word >> cert.L_star) || word != "L_star")
    throw std::runtime_error("certificate: missing L_star");
  if (!(is >> word >> cert.margin) || word != "margin")
    throw std::runtime_error("certificate: missing margin");
  if (!(is >> word >> cert.attenuation) || word != "attenuation")
    throw std::runtime_error("certificate: missing attenuation");
  int nalpha = 0;
  if (!(is >> word >> nalpha) || word != "alpha_box" || nalpha < 0)
    throw std::runtime_error("certificate: bad alpha_box header");
  cert.alpha_lo.resize(nalpha);
  cert.alpha_hi.resize(nalpha);
  for (int i = 0; i < nalpha; ++i)
    if (!(is >> cert.alpha_lo(i) >> cert.alpha_hi(i)))
      throw std::runtime_error("certificate: truncated alpha box");
  int dim = 0, groups = 0;
  if (!(is >> word >> dim >> groups) || word != "domain" || dim <= 0 ||
      groups <= 0)
    throw std::runtime_error("certificate: bad domain header");
  cert.S_star.group_start.resize(groups + 1);
  for (int g = 0; g <= groups; ++g)
    if (!(is >> cert.S_star.group_start[g]))
      throw std::runtime_error("certificate: truncated group table");
  cert.S_star.lower.resize(dim);
  cert.S_star.upper.resize(dim);
  for (int i = 0; i < dim; ++i)
    if (!(is >> cert.S_star.lower(i) >> cert.S_star.upper(i)))
      throw std::runtime_error("certificate: truncated domain bounds");
  cert.K = read_matrix(is, "K");
  cert.P = read_matrix(is, "P");
  cert.Lambda = read_matrix(is, "Lambda");
  cert.gamma = read_matrix(is, "gamma");
  return cert;
}

ValidationReport validate_certificate(const Certificate& cert,
                                      const QuadParams& p,
                                      const NominalGains& g,
                                      const Vec4& alpha_lo, const Vec4& alpha_hi,
                                      int trials, std::uint64_t seed,
                                      double duration, double dt,
                                      double v_slack) {
  const int n = cert.S_star.dim();
  if (n != 12) throw std::invalid_argument("validate_certificate: expects a 12-state domain");

  // Largest sublevel set {s : s^T P s <= c} inside the box: the extent of the
  // ellipsoid along axis i is sqrt(c * (P^{-1})_ii).
  const MatrixXd Pinv = cert.P.llt().solve(MatrixXd::Identity(n, n));
  double c = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double b = std::min(std::abs(cert.S_star.lower(i)),
                              std::abs(cert.S_star.upper(i)));
    c = std::min(c, b * b / Pinv(i, i));
  }

  const Eigen::LLT<MatrixXd> llt(cert.P);
  const MatrixXd Lfac = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ValidationReport rep;
  rep.trials = trials;
  rep.sublevel = c;
  const int steps = static_cast<int>(std::llround(duration / dt));

  for (int trial = 0; trial < trials; ++trial) {
    VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = gauss(rng);
    z.normalize();
    z *= std::pow(unif(rng), 1.0 / n);  // uniform in the unit ball
    const VectorXd s0v =
        Lfac.transpose().triangularView<Eigen::Upper>().solve(
            VectorXd(std::sqrt(c) * z));
    Vec12 s = s0v;

    bool monotone = true;
    double v = s0v.dot(cert.P * s0v);
    // Per-step slack is anchored to the initial Lyapunov value: a slack
    // relative to the current value is unsatisfiable under any nonzero
    // actuation noise once the trajectory reaches the noise floor, where
    // per-step relative fluctuations are O(1) regardless of noise magnitude.
    const double slack = v_slack * v + 1e-12;
    const double s0norm = s.norm();
    bool fault = false;
    for (int k = 0; k < steps; ++k) {
      Vec4 alpha;
      for (int i = 0; i < 4; ++i)
        alpha(i) = alpha_lo(i) + (alpha_hi(i) - alpha_lo(i)) * unif(rng);
      try {
        s = step(s, Vec4::Zero(), alpha, dt, p, g);
      } catch (const SingularAttitudeError&) {
        fault = true;
        break;
      }
      const double vn = VectorXd(s).dot(cert.P * VectorXd(s));
      if (vn > v + slack) monotone = false;
      v = vn;
    }
    const bool contracted = !fault && s.norm() < 0.05 * s0norm;
    if (monotone && !fault) ++rep.v_nonincreasing;
    if (contracted) ++rep.converged;
    if (monotone && contracted) ++rep.satisfied;
  }
  return rep;
}

}  // namespace cfl
