#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "noma/rng.hpp"

namespace noma {

// One realization of the downlink: N BS antennas, K single-antenna users.
// Column j of h is the channel of user j. Users are kept ordered by
// ascending channel norm (the SIC decoding order).
struct ChannelSet {
  int n = 0;
  int k = 0;
  Eigen::MatrixXcd h;  // N x K
  double sigma2 = 0.0;

  ChannelSet() = default;
  ChannelSet(int n_, int k_, Eigen::MatrixXcd h_, double sigma2_)
      : n(n_), k(k_), h(std::move(h_)), sigma2(sigma2_) {
    validate();
  }

  void validate() const {
    if (n < 1 || k < 1) throw std::invalid_argument("ChannelSet: n and k must be >= 1");
    if (sigma2 <= 0.0) throw std::invalid_argument("ChannelSet: sigma2 must be > 0");
    if (h.rows() != n || h.cols() != k)
      throw std::invalid_argument("ChannelSet: matrix shape mismatch");
    for (int j = 0; j < k; ++j)
      if (h.col(j).norm() == 0.0)
        throw std::invalid_argument("ChannelSet: all-zero channel column");
  }
};

// Permute columns into non-decreasing norm order. Stable: equal norms keep
// their original relative order, so labeling is deterministic.
inline ChannelSet order_users(const ChannelSet& c) {
  std::vector<int> idx(static_cast<std::size_t>(c.k));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> norms(static_cast<std::size_t>(c.k));
  for (int j = 0; j < c.k; ++j) norms[static_cast<std::size_t>(j)] = c.h.col(j).norm();
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return norms[static_cast<std::size_t>(a)] < norms[static_cast<std::size_t>(b)];
  });
  Eigen::MatrixXcd sorted(c.n, c.k);
  for (int j = 0; j < c.k; ++j) sorted.col(j) = c.h.col(idx[static_cast<std::size_t>(j)]);
  return ChannelSet(c.n, c.k, std::move(sorted), c.sigma2);
}

// i.i.d. CN(0,1) entries: real and imaginary parts each N(0, 1/2).
// Returned set is already user-ordered.
inline ChannelSet sample_rayleigh(int n, int k, double sigma2, RngStream& rng) {
  if (n < 1 || k < 1) throw std::invalid_argument("sample_rayleigh: n and k must be >= 1");
  if (sigma2 <= 0.0) throw std::invalid_argument("sample_rayleigh: sigma2 must be > 0");
  Eigen::MatrixXcd h(n, k);
  const double scale = std::sqrt(0.5);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i)
      h(i, j) = std::complex<double>(scale * rng.next_normal(), scale * rng.next_normal());
  return order_users(ChannelSet(n, k, std::move(h), sigma2));
}

}  // namespace noma
