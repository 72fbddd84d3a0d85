#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

#include "noma/channel.hpp"
#include "noma/precoding.hpp"

namespace noma {

enum class SolveStatus { optimal, infeasible, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    default: return "numerical_failure";
  }
}

struct SolverOptions {
  double tol_gap = 1e-8;
  double tol_feas = 1e-8;
  int max_iter = 100;
  bool verbose = false;
};

struct BeamSolution {
  Eigen::MatrixXcd w;  // N x K, un-normalized beamformers
  Eigen::MatrixXcd u;  // unit directions w_k / ||w_k||
  Eigen::VectorXd p;   // p_k = ||w_k||^2
  double total_power = 0.0;
  SolveStatus status = SolveStatus::numerical_failure;
  int iterations = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double gap = 0.0;
  std::vector<bool> phase_flags;  // set by phase_normalize for degenerate columns
};

// Real conic form of the power-min problem:
//   min c'x  s.t.  A x = b,  G x + s = h,  s in product of SOCs.
// Variables x = [t; Re w_1; Im w_1; ...; Re w_K; Im w_K], length 2NK+1.
// Cone 0 is the objective epigraph ||vec(W)|| <= t; cone k bounds the
// scaled interference stack of user k by Re(h_k^H w_k)/sqrt(gamma_k).
// The K equalities are Im(h_k^H w_k) = 0.
struct ConeProgram {
  int n = 0;
  int k = 0;
  Eigen::VectorXd c;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  std::vector<int> cone_dims;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

namespace detail {

// coefficients of Re(h^H w) and Im(h^H w) w.r.t. [Re w; Im w]
inline Eigen::VectorXd re_coeff(const Eigen::VectorXcd& h) {
  const int n = static_cast<int>(h.size());
  Eigen::VectorXd v(2 * n);
  v.head(n) = h.real();
  v.tail(n) = h.imag();
  return v;
}

inline Eigen::VectorXd im_coeff(const Eigen::VectorXcd& h) {
  const int n = static_cast<int>(h.size());
  Eigen::VectorXd v(2 * n);
  v.head(n) = -h.imag();
  v.tail(n) = h.real();
  return v;
}

}  // namespace detail

inline ConeProgram build_cone_program(const ChannelSet& c, const SinrSpec& gamma) {
  gamma.validate();
  if (gamma.gamma.size() != c.k)
    throw std::invalid_argument("build_cone_program: gamma dimension mismatch");
  const int N = c.n, K = c.k;
  const int nv = 2 * N * K + 1;

  ConeProgram prog;
  prog.n = N;
  prog.k = K;
  prog.c = Eigen::VectorXd::Zero(nv);
  prog.c(0) = 1.0;

  prog.cone_dims.push_back(nv);  // epigraph (t; vec W)
  for (int k = 0; k < K; ++k) prog.cone_dims.push_back(2 * (K - 1 - k) + 2);

  int m = 0;
  for (int d : prog.cone_dims) m += d;
  prog.G = Eigen::MatrixXd::Zero(m, nv);
  prog.h = Eigen::VectorXd::Zero(m);

  // epigraph: s = x
  prog.G.topLeftCorner(nv, nv) = -Eigen::MatrixXd::Identity(nv, nv);

  int row = nv;
  for (int k = 0; k < K; ++k) {
    const double sg = std::sqrt(gamma.gamma(k));
    const int off_k = 1 + 2 * N * k;
    // bound: Re(h_k^H w_k) / sqrt(gamma_k)
    prog.G.row(row).segment(off_k, 2 * N) = -detail::re_coeff(c.h.col(k)).transpose() / sg;
    ++row;
    for (int i = k + 1; i < K; ++i) {
      const int off_i = 1 + 2 * N * i;
      prog.G.row(row).segment(off_i, 2 * N) = -detail::re_coeff(c.h.col(k)).transpose();
      ++row;
      prog.G.row(row).segment(off_i, 2 * N) = -detail::im_coeff(c.h.col(k)).transpose();
      ++row;
    }
    prog.h(row) = std::sqrt(c.sigma2);  // constant noise entry
    ++row;
  }

  prog.A = Eigen::MatrixXd::Zero(K, nv);
  prog.b = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k)
    prog.A.row(k).segment(1 + 2 * N * k, 2 * N) = detail::im_coeff(c.h.col(k)).transpose();

  if (!prog.G.allFinite() || !prog.h.allFinite() || !prog.A.allFinite())
    throw std::invalid_argument("build_cone_program: non-finite coefficients");
  return prog;
}

namespace detail {

// Jordan product on a second-order cone: u o v = (u'v; u0 v1 + v0 u1).
inline Eigen::VectorXd arrow_prod(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  Eigen::VectorXd r(u.size());
  r(0) = u.dot(v);
  r.tail(r.size() - 1) = u(0) * v.tail(v.size() - 1) + v(0) * u.tail(u.size() - 1);
  return r;
}

// solve lambda o x = d
inline Eigen::VectorXd arrow_div(const Eigen::VectorXd& lam, const Eigen::VectorXd& d) {
  const auto l1 = lam.tail(lam.size() - 1);
  const double det = lam(0) * lam(0) - l1.squaredNorm();
  Eigen::VectorXd x(lam.size());
  x(0) = (lam(0) * d(0) - l1.dot(d.tail(d.size() - 1))) / det;
  x.tail(x.size() - 1) = (d.tail(d.size() - 1) - x(0) * l1) / lam(0);
  return x;
}

// largest alpha >= 0 with u + alpha du staying in the cone (u interior)
inline double soc_max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto u1 = u.tail(u.size() - 1);
  const auto d1 = du.tail(du.size() - 1);
  const double c0 = u(0) * u(0) - u1.squaredNorm();
  const double c1 = 2.0 * (u(0) * du(0) - u1.dot(d1));
  const double c2 = du(0) * du(0) - d1.squaredNorm();
  double alpha = inf;
  if (std::abs(c2) < 1e-300) {
    if (c1 < 0.0) alpha = -c0 / c1;
  } else {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double r1 = (-c1 - sq) / (2.0 * c2);
      const double r2 = (-c1 + sq) / (2.0 * c2);
      if (r1 > 0.0) alpha = std::min(alpha, r1);
      if (r2 > 0.0) alpha = std::min(alpha, r2);
    }
  }
  if (du(0) < 0.0) alpha = std::min(alpha, -u(0) / du(0));
  return alpha;
}

struct NtScaling {
  std::vector<Eigen::MatrixXd> W, Winv;
  Eigen::VectorXd lambda;  // scaled point, all cones stacked
};

// Nesterov-Todd scaling per cone: W z = W^{-1} s = lambda.
inline bool compute_nt(const Eigen::VectorXd& s, const Eigen::VectorXd& z,
                       const std::vector<int>& dims, NtScaling& out) {
  out.W.clear();
  out.Winv.clear();
  out.lambda.resize(s.size());
  int off = 0;
  for (int d : dims) {
    const auto sk = s.segment(off, d);
    const auto zk = z.segment(off, d);
    const double ds2 = sk(0) * sk(0) - sk.tail(d - 1).squaredNorm();
    const double dz2 = zk(0) * zk(0) - zk.tail(d - 1).squaredNorm();
    if (ds2 <= 0.0 || dz2 <= 0.0 || sk(0) <= 0.0 || zk(0) <= 0.0) return false;
    const double as = std::sqrt(ds2), az = std::sqrt(dz2);
    const Eigen::VectorXd sb = sk / as, zb = zk / az;
    const double g = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    // NT point w̄ = (s̄ + J z̄)/(2γ); the symmetric scaling is P(w̄^{1/2}),
    // with the Jordan square root q = (w̄ + e)/sqrt(2(1 + w̄_0)).
    Eigen::VectorXd v(d);
    v(0) = (sb(0) + zb(0)) / (2.0 * g);
    v.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * g);
    Eigen::VectorXd q = v;
    q(0) += 1.0;
    q /= std::sqrt(2.0 * (1.0 + v(0)));
    Eigen::VectorXd jq(d);
    jq(0) = q(0);
    jq.tail(d - 1) = -q.tail(d - 1);
    const double eta = std::sqrt(as / az);
    Eigen::MatrixXd J = -Eigen::MatrixXd::Identity(d, d);
    J(0, 0) = 1.0;
    out.W.push_back(eta * (2.0 * q * q.transpose() - J));
    out.Winv.push_back((2.0 * jq * jq.transpose() - J) / eta);
    out.lambda.segment(off, d) = out.W.back() * zk;
    off += d;
  }
  return true;
}

}  // namespace detail

// Interior-point solver for  min c'x  s.t.  G x + s = h, s in SOC product.
// Mehrotra predictor-corrector with NT scaling; dense linear algebra.
struct IpmResult {
  Eigen::VectorXd x;
  SolveStatus status = SolveStatus::numerical_failure;
  int iterations = 0;
  double primal_res = 0.0, dual_res = 0.0, gap = 0.0;
};

inline IpmResult solve_socp(const Eigen::VectorXd& c, const Eigen::MatrixXd& G,
                            const Eigen::VectorXd& h, const std::vector<int>& dims,
                            const SolverOptions& opts, const Eigen::VectorXd& x0,
                            const Eigen::VectorXd& s0) {
  using detail::arrow_div;
  using detail::arrow_prod;
  using detail::soc_max_step;

  const int m = static_cast<int>(G.rows());
  const int nc = static_cast<int>(dims.size());
  IpmResult res;
  res.x = x0;
  Eigen::VectorXd s = s0;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  {
    int off = 0;
    for (int d : dims) {
      z(off) = 1.0;
      off += d;
    }
  }

  const double hnorm = std::max(1.0, h.norm());
  const double cnorm = std::max(1.0, c.norm());

  detail::NtScaling nt;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::VectorXd rd = c + G.transpose() * z;
    const Eigen::VectorXd rp = G * res.x + s - h;
    const double gap = s.dot(z);
    const double pobj = c.dot(res.x);
    const double relgap = gap / std::max(1.0, std::abs(pobj));
    res.primal_res = rp.norm() / hnorm;
    res.dual_res = rd.norm() / cnorm;
    res.gap = gap;
    res.iterations = it;
    if (opts.verbose)
      std::fprintf(stderr, "ipm it=%d pres=%.3e dres=%.3e gap=%.3e\n", it, res.primal_res,
                   res.dual_res, gap);
    if (res.primal_res <= opts.tol_feas && res.dual_res <= opts.tol_feas &&
        (gap <= 0.01 * opts.tol_gap || relgap <= opts.tol_gap)) {
      res.status = SolveStatus::optimal;
      return res;
    }

    if (!detail::compute_nt(s, z, dims, nt)) {
      res.status = SolveStatus::numerical_failure;
      return res;
    }
    const double mu = gap / nc;

    // M = G' W^{-2} G via per-cone scaled blocks
    Eigen::MatrixXd GW(m, G.cols());
    {
      int off = 0;
      for (std::size_t kci = 0; kci < dims.size(); ++kci) {
        const int d = dims[kci];
        GW.middleRows(off, d) = nt.Winv[kci] * G.middleRows(off, d);
        off += d;
      }
    }
    const Eigen::MatrixXd M = GW.transpose() * GW;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success) {
      res.status = SolveStatus::numerical_failure;
      return res;
    }

    auto apply_blocks = [&](const std::vector<Eigen::MatrixXd>& B,
                            const Eigen::VectorXd& v) {
      Eigen::VectorXd r(v.size());
      int off = 0;
      for (std::size_t kci = 0; kci < dims.size(); ++kci) {
        const int d = dims[kci];
        r.segment(off, d) = B[kci] * v.segment(off, d);
        off += d;
      }
      return r;
    };
    auto block_arrow = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                           bool divide) {
      Eigen::VectorXd r(a.size());
      int off = 0;
      for (int d : dims) {
        if (divide)
          r.segment(off, d) = arrow_div(a.segment(off, d), b.segment(off, d));
        else
          r.segment(off, d) = arrow_prod(a.segment(off, d), b.segment(off, d));
        off += d;
      }
      return r;
    };

    auto solve_dir = [&](const Eigen::VectorXd& dtarget, Eigen::VectorXd& dx,
                         Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      const Eigen::VectorXd g = block_arrow(nt.lambda, dtarget, true);
      const Eigen::VectorXd wg = apply_blocks(nt.Winv, apply_blocks(nt.Winv, rp)) +
                                 apply_blocks(nt.Winv, g);
      dx = ldlt.solve(-rd - G.transpose() * wg);
      dz = apply_blocks(nt.Winv, apply_blocks(nt.Winv, G * dx + rp)) +
           apply_blocks(nt.Winv, g);
      ds = -rp - G * dx;
    };

    // predictor
    Eigen::VectorXd dxa, dsa, dza;
    solve_dir(-block_arrow(nt.lambda, nt.lambda, false), dxa, dsa, dza);
    double alpha_a = 1.0;
    {
      int off = 0;
      for (int d : dims) {
        alpha_a = std::min(alpha_a, soc_max_step(s.segment(off, d), dsa.segment(off, d)));
        alpha_a = std::min(alpha_a, soc_max_step(z.segment(off, d), dza.segment(off, d)));
        off += d;
      }
    }
    const double gap_a = (s + alpha_a * dsa).dot(z + alpha_a * dza);
    const double sigma = std::pow(std::clamp(gap_a / gap, 0.0, 1.0), 3.0);

    // corrector (combined step)
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    {
      int off = 0;
      for (int d : dims) {
        e(off) = 1.0;
        off += d;
      }
    }
    const Eigen::VectorXd cross =
        block_arrow(apply_blocks(nt.Winv, dsa), apply_blocks(nt.W, dza), false);
    Eigen::VectorXd dx, ds, dz;
    solve_dir(-block_arrow(nt.lambda, nt.lambda, false) - cross + sigma * mu * e, dx, ds,
              dz);

    double alpha = std::numeric_limits<double>::infinity();
    {
      int off = 0;
      for (int d : dims) {
        alpha = std::min(alpha, soc_max_step(s.segment(off, d), ds.segment(off, d)));
        alpha = std::min(alpha, soc_max_step(z.segment(off, d), dz.segment(off, d)));
        off += d;
      }
    }
    alpha = std::min(1.0, 0.99 * alpha);
    if (!std::isfinite(alpha) || alpha <= 1e-13 || !dx.allFinite()) {
      res.status = SolveStatus::numerical_failure;
      return res;
    }
    res.x += alpha * dx;
    s += alpha * ds;
    z += alpha * dz;
  }
  res.iterations = opts.max_iter;
  // no certificate machinery: a diverging dual objective with clean dual
  // residuals is the infeasibility signal, anything else is a failure
  if (res.dual_res <= 1e-6 && -h.dot(z) > 1e8 * std::max(1.0, std::abs(c.dot(res.x))))
    res.status = SolveStatus::infeasible;
  else
    res.status = SolveStatus::numerical_failure;
  return res;
}

// Rotate each beamformer by a unit-modulus scalar so h_k^H w_k is real and
// nonnegative. Leaves every |h_k^H w_i| and the total power unchanged.
inline BeamSolution phase_normalize(const BeamSolution& sol, const ChannelSet& c) {
  BeamSolution out = sol;
  out.phase_flags.assign(static_cast<std::size_t>(c.k), false);
  for (int k = 0; k < c.k; ++k) {
    const std::complex<double> ip = c.h.col(k).dot(out.w.col(k));
    const double mag = std::abs(ip);
    if (mag == 0.0) {
      out.phase_flags[static_cast<std::size_t>(k)] = true;
      continue;
    }
    const std::complex<double> rot = std::conj(ip) / mag;
    out.w.col(k) *= rot;
    if (out.u.cols() == c.k && out.u.col(k).norm() > 0.0) out.u.col(k) *= rot;
  }
  return out;
}

namespace detail {

// orthonormal basis of {v : a'v = 0} from a Householder reflector
inline Eigen::MatrixXd null_basis(const Eigen::VectorXd& a) {
  const int n = static_cast<int>(a.size());
  const Eigen::VectorXd q = a / a.norm();
  Eigen::VectorXd u = q;
  u(0) -= 1.0;
  const double un = u.norm();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  if (un > 1e-12) H -= (2.0 / (un * un)) * (u * u.transpose());
  return H.rightCols(n - 1);
}

inline void derive_from_w(BeamSolution& sol, const ChannelSet& c) {
  const int K = c.k;
  sol.u.resize(c.n, K);
  sol.p.resize(K);
  for (int k = 0; k < K; ++k) {
    const double nrm = sol.w.col(k).norm();
    sol.p(k) = nrm * nrm;
    sol.u.col(k) = nrm > 0.0 ? (sol.w.col(k) / nrm).eval() : sol.w.col(k);
  }
  sol.total_power = sol.p.sum();
}

}  // namespace detail

// Closed-form single-user optimum: u = h/||h||, p = gamma sigma^2 / ||h||^2.
inline BeamSolution closed_form_k1(const Eigen::VectorXcd& h, double gamma, double sigma2) {
  const double nrm = h.norm();
  if (nrm == 0.0) throw std::invalid_argument("closed_form_k1: zero channel");
  BeamSolution sol;
  sol.w.resize(h.size(), 1);
  const double p = gamma * sigma2 / (nrm * nrm);
  sol.w.col(0) = std::sqrt(p) * h / nrm;
  detail::derive_from_w(sol, ChannelSet(static_cast<int>(h.size()), 1, sol.w, sigma2));
  sol.status = SolveStatus::optimal;
  return sol;
}

// The "label" method: solve the Eq. 8 style power-min SOCP to optimality.
inline BeamSolution solve_power_min(const ChannelSet& c, const SinrSpec& gamma,
                                    const SolverOptions& opts = {}) {
  c.validate();
  gamma.validate();
  if (opts.tol_gap <= 0 || opts.tol_feas <= 0 || opts.max_iter < 1)
    throw std::invalid_argument("solve_power_min: bad solver options");
  const int N = c.n, K = c.k;
  const ConeProgram prog = build_cone_program(c, gamma);
  const int nv = 2 * N * K + 1;
  const int nred = 1 + K * (2 * N - 1);

  // eliminate the K phase equalities: x = Z xi, Z orthonormal block-diagonal
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(nv, nred);
  Z(0, 0) = 1.0;
  for (int k = 0; k < K; ++k)
    Z.block(1 + 2 * N * k, 1 + (2 * N - 1) * k, 2 * N, 2 * N - 1) =
        detail::null_basis(detail::im_coeff(c.h.col(k)));

  const Eigen::MatrixXd Gr = prog.G * Z;
  const Eigen::VectorXd cr = Z.transpose() * prog.c;

  // feasible start: phase-aligned MRC directions with margined cascade powers
  DirectionMatrix d = mrc_directions(c);
  for (int k = 0; k < K; ++k) {
    const std::complex<double> ip = c.h.col(k).dot(d.u.col(k));
    d.u.col(k) *= std::conj(ip) / std::abs(ip);
  }
  Eigen::VectorXd x0, s0;
  double margin = 2.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::VectorXd p(K);
    for (int k = K - 1; k >= 0; --k) {
      double interf = 0.0;
      for (int i = k + 1; i < K; ++i) interf += p(i) * std::norm(c.h.col(k).dot(d.u.col(i)));
      p(k) = margin * gamma.gamma(k) * (interf + c.sigma2) /
             std::norm(c.h.col(k).dot(d.u.col(k)));
    }
    Eigen::VectorXd xfull(nv);
    double wsq = 0.0;
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXcd wk = std::sqrt(p(k)) * d.u.col(k);
      xfull.segment(1 + 2 * N * k, N) = wk.real();
      xfull.segment(1 + 2 * N * k + N, N) = wk.imag();
      wsq += wk.squaredNorm();
    }
    xfull(0) = 1.5 * std::sqrt(wsq);
    x0 = Z.transpose() * xfull;
    s0 = prog.h - Gr * x0;
    bool interior = true;
    int off = 0;
    for (int dd : prog.cone_dims) {
      if (s0(off) - s0.segment(off + 1, dd - 1).norm() <= 1e-12 * std::max(1.0, s0(off)))
        interior = false;
      off += dd;
    }
    if (interior) break;
    margin *= 4.0;
  }

  const IpmResult ipm = solve_socp(cr, Gr, prog.h, prog.cone_dims, opts, x0, s0);

  BeamSolution sol;
  sol.status = ipm.status;
  sol.iterations = ipm.iterations;
  sol.primal_res = ipm.primal_res;
  sol.dual_res = ipm.dual_res;
  sol.gap = ipm.gap;
  const Eigen::VectorXd xfull = Z * ipm.x;
  sol.w.resize(N, K);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < N; ++i)
      sol.w(i, k) = std::complex<double>(xfull(1 + 2 * N * k + i), xfull(1 + 2 * N * k + N + i));
  sol = phase_normalize(sol, c);
  detail::derive_from_w(sol, c);
  return sol;
}

}  // namespace noma
