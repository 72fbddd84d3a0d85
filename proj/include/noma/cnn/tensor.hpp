#pragma once

#include <stdexcept>
#include <vector>

namespace noma {

// Dense rank-3 array, row-major by (channel, row, col), binary64.
struct Tensor3 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int h_, int w_, int c_) : h(h_), w(w_), c(c_) {
    if (h < 1 || w < 1 || c < 1) throw std::invalid_argument("Tensor3: bad shape");
    v.assign(static_cast<std::size_t>(h) * w * c, 0.0);
  }

  double& at(int ch, int r, int col) {
    return v[(static_cast<std::size_t>(ch) * h + r) * w + col];
  }
  double at(int ch, int r, int col) const {
    return v[(static_cast<std::size_t>(ch) * h + r) * w + col];
  }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor3& o) const { return h == o.h && w == o.w && c == o.c; }
};

using Batch = std::vector<Tensor3>;

}  // namespace noma
