#include "certiflight/sdp.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace cfl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-block scratch: flattened atom vectors and the variable -> atom map.
struct BlockWork {
  std::vector<SparseVec> vecs;                       // all atom vectors
  std::vector<std::vector<std::pair<int, int>>> var_atoms;  // (u_idx, v_idx)
  std::vector<int> vars;                             // variables touching block

  MatrixXd S, Sinv;
  MatrixXd Y;     // Sinv * V  (dim x n_vecs)
  MatrixXd G;     // V^T Sinv V
  double logdet = 0.0;
};

void build_block_work(const SdpBlock& b, int nvar, BlockWork& w) {
  w.var_atoms.assign(nvar, {});
  for (int i = 0; i < nvar; ++i) {
    if (i >= static_cast<int>(b.coeff.size())) break;
    for (const SymPair& p : b.coeff[i]) {
      const int iu = static_cast<int>(w.vecs.size());
      w.vecs.push_back(p.u);
      w.vecs.push_back(p.v);
      w.var_atoms[i].emplace_back(iu, iu + 1);
    }
  }
  for (int i = 0; i < nvar; ++i) {
    if (!w.var_atoms[i].empty() || b.identity_var == i) w.vars.push_back(i);
  }
}

void assemble_block(const SdpBlock& b, const VectorXd& x, MatrixXd& S) {
  S = b.F0;
  if (b.identity_var >= 0) S.diagonal().array() += x[b.identity_var];
  for (int i = 0; i < static_cast<int>(b.coeff.size()); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (const SymPair& p : b.coeff[i]) {
      for (const auto& [r, uv] : p.u) {
        for (const auto& [c, vv] : p.v) {
          S(r, c) += xi * uv * vv;
          S(c, r) += xi * uv * vv;
        }
      }
    }
  }
}

// Returns false when S(x) is not PD.
bool factor_block(const SdpBlock& b, const VectorXd& x, BlockWork& w,
                  bool full_update) {
  assemble_block(b, x, w.S);
  Eigen::LLT<MatrixXd> llt(w.S);
  if (llt.info() != Eigen::Success) return false;
  w.logdet = 0.0;
  const auto& L = llt.matrixLLT();
  for (int i = 0; i < b.dim; ++i) {
    if (!(L(i, i) > 0.0)) return false;
    w.logdet += 2.0 * std::log(L(i, i));
  }
  if (!full_update) return true;

  w.Sinv = llt.solve(MatrixXd::Identity(b.dim, b.dim));

  const int nv = static_cast<int>(w.vecs.size());
  w.Y.resize(b.dim, nv);
  for (int a = 0; a < nv; ++a) {
    VectorXd col = VectorXd::Zero(b.dim);
    for (const auto& [idx, val] : w.vecs[a]) col += val * w.Sinv.col(idx);
    w.Y.col(a) = col;
  }
  w.G.setZero(nv, nv);
  for (int a = 0; a < nv; ++a) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nv);
    for (const auto& [idx, val] : w.vecs[a]) row += val * w.Y.row(idx);
    w.G.row(a) = row;
  }
  return true;
}

}  // namespace

SdpResult solve_sdp(const SdpProblem& prob, const SdpOptions& opts) {
  const int n = prob.nvar;
  if (prob.x0.size() != n) throw SdpError("solve_sdp: x0 has wrong size");

  std::vector<BlockWork> work(prob.blocks.size());
  double nu = 0.0;
  for (size_t bi = 0; bi < prob.blocks.size(); ++bi) {
    build_block_work(prob.blocks[bi], n, work[bi]);
    nu += prob.blocks[bi].dim;
  }
  for (const ScalarBound& sb : prob.bounds) {
    nu += 1.0 + (std::isfinite(sb.hi) ? 1.0 : 0.0);
  }

  // Strict feasibility test; logdets are refreshed as a side effect.
  auto feasible = [&](const VectorXd& x, bool full) {
    for (const ScalarBound& sb : prob.bounds) {
      if (!(x[sb.var] > sb.lo) || !(x[sb.var] < sb.hi)) return false;
    }
    for (size_t bi = 0; bi < prob.blocks.size(); ++bi) {
      if (!factor_block(prob.blocks[bi], x, work[bi], full)) return false;
    }
    return true;
  };

  auto barrier = [&](const VectorXd& x) {
    double phi = 0.0;
    for (const BlockWork& w : work) phi -= w.logdet;
    for (const ScalarBound& sb : prob.bounds) {
      phi -= std::log(x[sb.var] - sb.lo);
      if (std::isfinite(sb.hi)) phi -= std::log(sb.hi - x[sb.var]);
    }
    return phi;
  };

  VectorXd x = prob.x0;
  if (prob.has_eq &&
      std::abs(prob.eq_a.dot(x) - prob.eq_b) > 1e-9 * std::max(1.0, std::abs(prob.eq_b))) {
    throw SdpError("solve_sdp: x0 violates the equality constraint");
  }
  if (!feasible(x, false)) throw SdpError("solve_sdp: x0 not strictly feasible");

  SdpResult res;
  VectorXd grad(n);
  MatrixXd H(n, n);

  double mu = opts.mu0;
  double prev_obj = std::numeric_limits<double>::infinity();
  while (true) {
    bool centered = false;
    for (int it = 0;; ++it) {
      if (res.newton_steps >= opts.max_newton_total) {
        res.x = x;
        res.obj = prob.cost.dot(x);
        res.message = "newton iteration budget exhausted";
        return res;
      }
      if (it >= opts.max_inner) {
        res.x = x;
        res.obj = prob.cost.dot(x);
        res.message = "centering stalled";
        return res;
      }
      if (!feasible(x, true)) {
        res.x = x;
        res.obj = prob.cost.dot(x);
        res.message = "lost feasibility (numerical)";
        return res;
      }

      // Gradient and Hessian of mu * c^T x + phi(x).
      grad = mu * prob.cost;
      H.setZero();
      for (const ScalarBound& sb : prob.bounds) {
        const double dl = x[sb.var] - sb.lo;
        grad[sb.var] -= 1.0 / dl;
        H(sb.var, sb.var) += 1.0 / (dl * dl);
        if (std::isfinite(sb.hi)) {
          const double dh = sb.hi - x[sb.var];
          grad[sb.var] += 1.0 / dh;
          H(sb.var, sb.var) += 1.0 / (dh * dh);
        }
      }
      for (size_t bi = 0; bi < prob.blocks.size(); ++bi) {
        const SdpBlock& b = prob.blocks[bi];
        const BlockWork& w = work[bi];
        // d(-logdet)/dx_i = -tr(Sinv F_i); for a pair (u,v) the trace is
        // 2 u^T Sinv v.
        for (int i : w.vars) {
          double tr = 0.0;
          for (const auto& [au, av] : w.var_atoms[i]) {
            double dot = 0.0;
            for (const auto& [idx, val] : w.vecs[au]) dot += val * w.Y(idx, av);
            tr += 2.0 * dot;
          }
          if (b.identity_var == i) tr += w.Sinv.trace();
          grad[i] -= tr;
        }
        // H_ij = tr(Sinv F_i Sinv F_j) via the Gram matrix.
        for (size_t pi = 0; pi < w.vars.size(); ++pi) {
          const int i = w.vars[pi];
          for (size_t pj = pi; pj < w.vars.size(); ++pj) {
            const int j = w.vars[pj];
            double hij = 0.0;
            for (const auto& [au, av] : w.var_atoms[i]) {
              for (const auto& [bu, bv] : w.var_atoms[j]) {
                hij += 2.0 * (w.G(av, bu) * w.G(au, bv) +
                              w.G(av, bv) * w.G(au, bu));
              }
            }
            if (b.identity_var == i) {
              // F_i = I: tr(Sinv Sinv F_j) = sum over pairs 2 (Sinv u).(Sinv v)
              for (const auto& [bu, bv] : w.var_atoms[j]) {
                hij += 2.0 * w.Y.col(bu).dot(w.Y.col(bv));
              }
            }
            if (b.identity_var == j) {
              for (const auto& [au, av] : w.var_atoms[i]) {
                hij += 2.0 * w.Y.col(au).dot(w.Y.col(av));
              }
            }
            if (b.identity_var == i && b.identity_var == j) {
              hij += w.Sinv.squaredNorm();
            }
            H(i, j) += hij;
            if (i != j) H(j, i) += hij;
          }
        }
      }
      H.diagonal().array() += 1e-12 * (1.0 + H.diagonal().maxCoeff());

      // Newton direction (KKT solve when a linear equality is present).
      VectorXd dx(n);
      if (prob.has_eq) {
        MatrixXd KKT(n + 1, n + 1);
        KKT.setZero();
        KKT.topLeftCorner(n, n) = H;
        KKT.topRightCorner(n, 1) = prob.eq_a;
        KKT.bottomLeftCorner(1, n) = prob.eq_a.transpose();
        VectorXd rhs(n + 1);
        rhs.head(n) = -grad;
        rhs[n] = 0.0;
        const VectorXd sol = KKT.ldlt().solve(rhs);
        dx = sol.head(n);
      } else {
        dx = H.ldlt().solve(-grad);
      }

      const double lambda2 = -grad.dot(dx);
      ++res.newton_steps;
      if (opts.stop_check && opts.stop_check_stride > 0 &&
          res.newton_steps % opts.stop_check_stride == 0) {
        const int code = opts.stop_check(x, kInf);
        if (code != 0) {
          res.x = x;
          res.obj = prob.cost.dot(x);
          res.converged = true;
          res.stop_code = code;
          res.message = "stopped by callback";
          return res;
        }
      }
      if (opts.verbose && std::getenv("SDP_TRACE"))
        std::fprintf(stderr, "    [nt] it=%d lam2=%.3e obj=%+.8e\n", it,
                     lambda2, prob.cost.dot(x));
      if (!(lambda2 > 2.0 * opts.newton_tol)) {  // centered
        centered = true;
        break;
      }

      // Backtracking line search on mu c^T x + phi with feasibility guard.
      const double f0 = mu * prob.cost.dot(x) + barrier(x);
      double t = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < opts.max_line_search; ++ls) {
        const VectorXd xt = x + t * dx;
        if (feasible(xt, false)) {
          const double ft = mu * prob.cost.dot(xt) + barrier(xt);
          if (ft <= f0 - 0.25 * t * lambda2 ||
              (ls > 0 && ft < f0)) {
            x = xt;
            accepted = true;
            break;
          }
        }
        t *= 0.5;
      }
      if (opts.verbose && std::getenv("SDP_TRACE"))
        std::fprintf(stderr, "    [nt]   step t=%.3e accepted=%d\n", t,
                     int(accepted));
      if (!accepted) break;  // cannot make progress at this mu
    }

    if (opts.verbose)
      std::fprintf(stderr,
                   "  [sdp] mu=%.3e steps=%d obj=%+.6e centered=%d\n", mu,
                   res.newton_steps, prob.cost.dot(x), int(centered));
    if (centered) {
      if (opts.stop_check) {
        const int code = opts.stop_check(x, nu / mu);
        if (code != 0) {
          res.x = x;
          res.obj = prob.cost.dot(x);
          res.converged = true;
          res.stop_code = code;
          res.message = "stopped by callback";
          return res;
        }
      }
      // Terminate on the optimality-gap estimate, relative to the objective
      // scale. nu/mu bounds the gap at a centered point; the decrease between
      // consecutive centered objectives estimates the same quantity and
      // avoids chasing mu into ill-conditioned territory when nu is large.
      const double obj = prob.cost.dot(x);
      double gap = nu / mu;
      if (prev_obj >= obj) gap = std::min(gap, (prev_obj - obj) / (opts.mu_factor - 1.0));
      prev_obj = obj;
      if (gap <= opts.gap_tol * std::max(1.0, std::abs(obj))) break;
    }
    mu *= opts.mu_factor;
  }

  res.x = x;
  res.obj = prob.cost.dot(x);
  res.converged = true;
  return res;
}

}  // namespace cfl
