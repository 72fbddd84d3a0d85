#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "noma/channel.hpp"

namespace noma {

// Unit-norm beamforming directions, one column per user.
struct DirectionMatrix {
  Eigen::MatrixXcd u;  // N x K, each column unit Euclidean norm

  void validate() const {
    for (int j = 0; j < u.cols(); ++j)
      if (std::abs(u.col(j).norm() - 1.0) > 1e-9)
        throw std::invalid_argument("DirectionMatrix: column not unit norm");
  }
};

// Per-user minimum SINR floors, linear scale.
struct SinrSpec {
  Eigen::VectorXd gamma;

  static SinrSpec uniform_db(int k, double gamma_db) {
    SinrSpec s;
    s.gamma = Eigen::VectorXd::Constant(k, std::pow(10.0, gamma_db / 10.0));
    return s;
  }
  static SinrSpec uniform_linear(int k, double gamma_lin) {
    SinrSpec s;
    s.gamma = Eigen::VectorXd::Constant(k, gamma_lin);
    return s;
  }
  Eigen::VectorXd gamma_db() const {
    return (10.0 * gamma.array().log10()).matrix();
  }
  void validate() const {
    if (gamma.size() < 1 || (gamma.array() <= 0.0).any())
      throw std::invalid_argument("SinrSpec: gamma must be positive");
  }
};

struct PowerReport {
  Eigen::VectorXd p;
  double total = 0.0;
  Eigen::VectorXd achieved_sinr;
  std::vector<bool> sic_order_ok;
  bool feasible = false;
};

// Matched filter: u_k = h_k / ||h_k||.
inline DirectionMatrix mrc_directions(const ChannelSet& c) {
  DirectionMatrix d;
  d.u.resize(c.n, c.k);
  for (int j = 0; j < c.k; ++j) {
    const double nrm = c.h.col(j).norm();
    if (nrm == 0.0) throw std::invalid_argument("mrc_directions: zero channel column");
    d.u.col(j) = c.h.col(j) / nrm;
  }
  return d;
}

// Zero forcing: u_k proportional to column k of H (H^H H)^{-1}, so
// h_j^H u_k = 0 for j != k. Requires N >= K and full column rank.
inline DirectionMatrix zf_directions(const ChannelSet& c) {
  if (c.n < c.k) throw std::invalid_argument("zf_undefined: N < K");
  const Eigen::MatrixXcd gram = c.h.adjoint() * c.h;
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(gram);
  if (!lu.isInvertible()) throw std::invalid_argument("zf_undefined: rank-deficient channel");
  const Eigen::MatrixXcd pinv = c.h * lu.inverse();
  DirectionMatrix d;
  d.u.resize(c.n, c.k);
  for (int j = 0; j < c.k; ++j) {
    const double nrm = pinv.col(j).norm();
    if (nrm == 0.0) throw std::invalid_argument("zf_undefined: degenerate column");
    d.u.col(j) = pinv.col(j) / nrm;
  }
  return d;
}

// SINR_k = |h_k^H w_k|^2 / (sum_{i>k} |h_k^H w_i|^2 + sigma^2).
inline Eigen::VectorXd sinr_of(const ChannelSet& c, const Eigen::MatrixXcd& w) {
  Eigen::VectorXd out(c.k);
  for (int k = 0; k < c.k; ++k) {
    const double sig = std::norm(c.h.col(k).dot(w.col(k)));
    double interf = 0.0;
    for (int i = k + 1; i < c.k; ++i) interf += std::norm(c.h.col(k).dot(w.col(i)));
    out(k) = sig / (interf + c.sigma2);
  }
  return out;
}

// Same quantity from explicit (u, p): SINR_k = p_k|h_k^H u_k|^2 / (...).
inline Eigen::VectorXd sinr_with_powers(const ChannelSet& c, const DirectionMatrix& d,
                                        const Eigen::VectorXd& p) {
  Eigen::VectorXd out(c.k);
  for (int k = 0; k < c.k; ++k) {
    const double sig = p(k) * std::norm(c.h.col(k).dot(d.u.col(k)));
    double interf = 0.0;
    for (int i = k + 1; i < c.k; ++i)
      interf += p(i) * std::norm(c.h.col(k).dot(d.u.col(i)));
    out(k) = sig / (interf + c.sigma2);
  }
  return out;
}

// Solve the upper-triangular system Psi p = sigma^2 1 by back-substitution
// from user K. [Psi]_{kk} = |h_k^H u_k|^2 / gamma_k, [Psi]_{ki} =
// -|h_k^H u_i|^2 for i > k. With positive diagonal, non-positive
// off-diagonal and positive right side this always yields p >= 0, and the
// resulting SINRs meet gamma with equality up to round-off.
inline Eigen::VectorXd power_allocation_vector(const ChannelSet& c, const DirectionMatrix& d,
                                               const SinrSpec& gamma) {
  gamma.validate();
  const int K = c.k;
  Eigen::VectorXd p(K);
  for (int k = K - 1; k >= 0; --k) {
    const double diag = std::norm(c.h.col(k).dot(d.u.col(k)));
    if (diag == 0.0)
      throw std::invalid_argument("power_allocation: singular diagonal |h_k^H u_k| = 0");
    double interf = 0.0;
    for (int i = k + 1; i < K; ++i) interf += p(i) * std::norm(c.h.col(k).dot(d.u.col(i)));
    p(k) = gamma.gamma(k) * (interf + c.sigma2) / diag;
  }
  return p;
}

// Eq. 2 chain: at each user k, p_i |h_k^H u_i|^2 non-increasing in i.
inline std::vector<bool> check_sic_order(const ChannelSet& c, const DirectionMatrix& d,
                                         const Eigen::VectorXd& p) {
  constexpr double tol = 1e-9;
  std::vector<bool> ok(static_cast<std::size_t>(c.k), true);
  for (int k = 0; k < c.k; ++k) {
    double prev = p(0) * std::norm(c.h.col(k).dot(d.u.col(0)));
    for (int i = 1; i < c.k; ++i) {
      const double cur = p(i) * std::norm(c.h.col(k).dot(d.u.col(i)));
      if (cur > prev + tol) {
        ok[static_cast<std::size_t>(k)] = false;
        break;
      }
      prev = cur;
    }
  }
  return ok;
}

inline PowerReport power_allocation(const ChannelSet& c, const DirectionMatrix& d,
                                    const SinrSpec& gamma) {
  PowerReport r;
  r.p = power_allocation_vector(c, d, gamma);
  r.total = r.p.sum();
  r.achieved_sinr = sinr_with_powers(c, d, r.p);
  r.sic_order_ok = check_sic_order(c, d, r.p);
  r.feasible = (r.p.array() >= 0.0).all() &&
               (r.achieved_sinr.array() >= gamma.gamma.array() * (1.0 - 1e-6)).all();
  return r;
}

// Full check of candidate directions: recover powers, evaluate SINRs,
// report the SIC ordering.
inline PowerReport verify_solution(const ChannelSet& c, const DirectionMatrix& d,
                                   const SinrSpec& gamma) {
  return power_allocation(c, d, gamma);
}

}  // namespace noma
