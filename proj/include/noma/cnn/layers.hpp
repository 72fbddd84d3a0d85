#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "noma/cnn/tensor.hpp"
#include "noma/rng.hpp"

namespace noma {

// View of one trainable parameter block and its gradient accumulator.
struct ParamView {
  double* data = nullptr;
  double* grad = nullptr;
  std::size_t size = 0;
};

// 3x3 convolution, stride 1, zero padding 1; spatial dims preserved.
// Implemented as im2col + GEMM; the patch matrix is cached for backward.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c) : in_c_(in_c), out_c_(out_c) {
    weight_.setZero(out_c, in_c * 9);
    bias_.setZero(out_c);
    dweight_.setZero(out_c, in_c * 9);
    dbias_.setZero(out_c);
  }

  // He init with gain matched to the leaky-ReLU slope
  void init(RngStream& rng, double neg_slope) {
    const double fan_in = static_cast<double>(in_c_) * 9.0;
    const double std = std::sqrt(2.0 / ((1.0 + neg_slope * neg_slope) * fan_in));
    for (int i = 0; i < weight_.rows(); ++i)
      for (int j = 0; j < weight_.cols(); ++j) weight_(i, j) = std * rng.next_normal();
    bias_.setZero();
  }

  Batch forward(const Batch& in) {
    const int B = static_cast<int>(in.size());
    if (B == 0) throw std::invalid_argument("Conv2d: empty batch");
    if (in[0].c != in_c_) throw std::invalid_argument("Conv2d: channel mismatch");
    h_ = in[0].h;
    w_ = in[0].w;
    const int hw = h_ * w_;
    patches_.setZero(in_c_ * 9, static_cast<Eigen::Index>(B) * hw);
    for (int b = 0; b < B; ++b) {
      const Tensor3& x = in[static_cast<std::size_t>(b)];
      for (int ci = 0; ci < in_c_; ++ci)
        for (int kr = 0; kr < 3; ++kr)
          for (int kc = 0; kc < 3; ++kc) {
            const int row = ci * 9 + kr * 3 + kc;
            for (int r = 0; r < h_; ++r) {
              const int rr = r + kr - 1;
              if (rr < 0 || rr >= h_) continue;
              for (int col = 0; col < w_; ++col) {
                const int cc = col + kc - 1;
                if (cc < 0 || cc >= w_) continue;
                patches_(row, static_cast<Eigen::Index>(b) * hw + r * w_ + col) =
                    x.at(ci, rr, cc);
              }
            }
          }
    }
    const Eigen::MatrixXd out = (weight_ * patches_).colwise() + bias_;
    Batch result(static_cast<std::size_t>(B), Tensor3(h_, w_, out_c_));
    for (int b = 0; b < B; ++b)
      for (int oc = 0; oc < out_c_; ++oc)
        for (int r = 0; r < h_; ++r)
          for (int col = 0; col < w_; ++col)
            result[static_cast<std::size_t>(b)].at(oc, r, col) =
                out(oc, static_cast<Eigen::Index>(b) * hw + r * w_ + col);
    return result;
  }

  Batch backward(const Batch& dout) {
    const int B = static_cast<int>(dout.size());
    const int hw = h_ * w_;
    Eigen::MatrixXd dm(out_c_, static_cast<Eigen::Index>(B) * hw);
    for (int b = 0; b < B; ++b)
      for (int oc = 0; oc < out_c_; ++oc)
        for (int r = 0; r < h_; ++r)
          for (int col = 0; col < w_; ++col)
            dm(oc, static_cast<Eigen::Index>(b) * hw + r * w_ + col) =
                dout[static_cast<std::size_t>(b)].at(oc, r, col);
    dweight_ += dm * patches_.transpose();
    dbias_ += dm.rowwise().sum();
    const Eigen::MatrixXd dp = weight_.transpose() * dm;
    Batch din(static_cast<std::size_t>(B), Tensor3(h_, w_, in_c_));
    for (int b = 0; b < B; ++b) {
      Tensor3& g = din[static_cast<std::size_t>(b)];
      for (int ci = 0; ci < in_c_; ++ci)
        for (int kr = 0; kr < 3; ++kr)
          for (int kc = 0; kc < 3; ++kc) {
            const int row = ci * 9 + kr * 3 + kc;
            for (int r = 0; r < h_; ++r) {
              const int rr = r + kr - 1;
              if (rr < 0 || rr >= h_) continue;
              for (int col = 0; col < w_; ++col) {
                const int cc = col + kc - 1;
                if (cc < 0 || cc >= w_) continue;
                g.at(ci, rr, cc) += dp(row, static_cast<Eigen::Index>(b) * hw + r * w_ + col);
              }
            }
          }
    }
    return din;
  }

  void zero_grad() {
    dweight_.setZero();
    dbias_.setZero();
  }
  std::vector<ParamView> params() {
    return {{weight_.data(), dweight_.data(), static_cast<std::size_t>(weight_.size())},
            {bias_.data(), dbias_.data(), static_cast<std::size_t>(bias_.size())}};
  }

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  Eigen::MatrixXd& weight() { return weight_; }
  Eigen::VectorXd& bias() { return bias_; }

 private:
  int in_c_ = 0, out_c_ = 0;
  int h_ = 0, w_ = 0;
  Eigen::MatrixXd weight_, dweight_;
  Eigen::VectorXd bias_, dbias_;
  Eigen::MatrixXd patches_;
};

// Per-channel batch normalization over (batch, height, width). Training
// mode normalizes with batch statistics and updates running stats by EMA;
// inference mode is a fixed affine map from the running stats.
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum) {
    gamma_ = Eigen::VectorXd::Ones(channels);
    beta_.setZero(channels);
    running_mean_.setZero(channels);
    running_var_ = Eigen::VectorXd::Ones(channels);
    dgamma_.setZero(channels);
    dbeta_.setZero(channels);
  }

  Batch forward(const Batch& in, bool training) {
    const int B = static_cast<int>(in.size());
    if (B == 0) throw std::invalid_argument("BatchNorm: empty batch");
    if (in[0].c != c_) throw std::invalid_argument("BatchNorm: channel mismatch");
    if (training && B < 2)
      throw std::invalid_argument("BatchNorm: batch of size 1 is variance-degenerate");
    const int hw = in[0].h * in[0].w;
    const double count = static_cast<double>(B) * hw;
    Batch out(in.size(), Tensor3(in[0].h, in[0].w, c_));
    if (training) {
      mean_.setZero(c_);
      var_.setZero(c_);
      for (const auto& x : in)
        for (int ch = 0; ch < c_; ++ch)
          for (int i = 0; i < hw; ++i) mean_(ch) += x.v[static_cast<std::size_t>(ch) * hw + i];
      mean_ /= count;
      for (const auto& x : in)
        for (int ch = 0; ch < c_; ++ch)
          for (int i = 0; i < hw; ++i) {
            const double d = x.v[static_cast<std::size_t>(ch) * hw + i] - mean_(ch);
            var_(ch) += d * d;
          }
      var_ /= count;
      invstd_ = (var_.array() + eps_).rsqrt();
      running_mean_ = (1.0 - momentum_) * running_mean_ + momentum_ * mean_;
      running_var_ = (1.0 - momentum_) * running_var_ + momentum_ * var_;
      xhat_.assign(in.size(), Tensor3(in[0].h, in[0].w, c_));
      for (std::size_t b = 0; b < in.size(); ++b)
        for (int ch = 0; ch < c_; ++ch)
          for (int i = 0; i < hw; ++i) {
            const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
            const double xh = (in[b].v[idx] - mean_(ch)) * invstd_(ch);
            xhat_[b].v[idx] = xh;
            out[b].v[idx] = gamma_(ch) * xh + beta_(ch);
          }
    } else {
      const Eigen::VectorXd istd = (running_var_.array() + eps_).rsqrt();
      for (std::size_t b = 0; b < in.size(); ++b)
        for (int ch = 0; ch < c_; ++ch)
          for (int i = 0; i < hw; ++i) {
            const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
            out[b].v[idx] = gamma_(ch) * (in[b].v[idx] - running_mean_(ch)) * istd(ch) +
                            beta_(ch);
          }
    }
    return out;
  }

  Batch backward(const Batch& dout) {
    const int B = static_cast<int>(dout.size());
    const int hw = dout[0].h * dout[0].w;
    const double count = static_cast<double>(B) * hw;
    Eigen::VectorXd sum_dy = Eigen::VectorXd::Zero(c_);
    Eigen::VectorXd sum_dy_xhat = Eigen::VectorXd::Zero(c_);
    for (std::size_t b = 0; b < dout.size(); ++b)
      for (int ch = 0; ch < c_; ++ch)
        for (int i = 0; i < hw; ++i) {
          const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
          sum_dy(ch) += dout[b].v[idx];
          sum_dy_xhat(ch) += dout[b].v[idx] * xhat_[b].v[idx];
        }
    dgamma_ += sum_dy_xhat;
    dbeta_ += sum_dy;
    Batch din(dout.size(), Tensor3(dout[0].h, dout[0].w, c_));
    for (std::size_t b = 0; b < dout.size(); ++b)
      for (int ch = 0; ch < c_; ++ch) {
        const double scale = gamma_(ch) * invstd_(ch);
        for (int i = 0; i < hw; ++i) {
          const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
          din[b].v[idx] = scale * (dout[b].v[idx] - sum_dy(ch) / count -
                                   xhat_[b].v[idx] * sum_dy_xhat(ch) / count);
        }
      }
    return din;
  }

  void zero_grad() {
    dgamma_.setZero();
    dbeta_.setZero();
  }
  std::vector<ParamView> params() {
    return {{gamma_.data(), dgamma_.data(), static_cast<std::size_t>(gamma_.size())},
            {beta_.data(), dbeta_.data(), static_cast<std::size_t>(beta_.size())}};
  }

  int channels() const { return c_; }
  double eps() const { return eps_; }
  double momentum() const { return momentum_; }
  Eigen::VectorXd& gamma() { return gamma_; }
  Eigen::VectorXd& beta() { return beta_; }
  Eigen::VectorXd& running_mean() { return running_mean_; }
  Eigen::VectorXd& running_var() { return running_var_; }

 private:
  int c_ = 0;
  double eps_ = 1e-5, momentum_ = 0.1;
  Eigen::VectorXd gamma_, beta_, running_mean_, running_var_;
  Eigen::VectorXd dgamma_, dbeta_;
  Eigen::VectorXd mean_, var_, invstd_;
  Batch xhat_;
};

// leaky_relu(x) = x for x >= 0, slope*x otherwise
class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = 0.01) : slope_(slope) {}

  Batch forward(const Batch& in) {
    last_in_ = in;
    Batch out = in;
    for (auto& t : out)
      for (auto& x : t.v) x = x >= 0.0 ? x : slope_ * x;
    return out;
  }

  Batch backward(const Batch& dout) {
    Batch din = dout;
    for (std::size_t b = 0; b < din.size(); ++b)
      for (std::size_t i = 0; i < din[b].v.size(); ++i)
        if (last_in_[b].v[i] < 0.0) din[b].v[i] *= slope_;
    return din;
  }

  double slope() const { return slope_; }

 private:
  double slope_;
  Batch last_in_;
};

// 3x3 mean pool, stride 1, zero padding 1. Divisor is the fixed window
// size 9 when include_padding is set, otherwise the number of in-bounds
// taps at each position.
class MeanPool {
 public:
  explicit MeanPool(bool include_padding = true) : include_padding_(include_padding) {}

  Batch forward(const Batch& in) {
    h_ = in[0].h;
    w_ = in[0].w;
    c_ = in[0].c;
    Batch out(in.size(), Tensor3(h_, w_, c_));
    for (std::size_t b = 0; b < in.size(); ++b)
      for (int ch = 0; ch < c_; ++ch)
        for (int r = 0; r < h_; ++r)
          for (int col = 0; col < w_; ++col) {
            double sum = 0.0;
            int taps = 0;
            for (int dr = -1; dr <= 1; ++dr)
              for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr, cc = col + dc;
                if (rr < 0 || rr >= h_ || cc < 0 || cc >= w_) continue;
                sum += in[b].at(ch, rr, cc);
                ++taps;
              }
            out[b].at(ch, r, col) = sum / (include_padding_ ? 9.0 : taps);
          }
    return out;
  }

  Batch backward(const Batch& dout) {
    Batch din(dout.size(), Tensor3(h_, w_, c_));
    for (std::size_t b = 0; b < dout.size(); ++b)
      for (int ch = 0; ch < c_; ++ch)
        for (int r = 0; r < h_; ++r)
          for (int col = 0; col < w_; ++col) {
            int taps = 0;
            if (!include_padding_)
              for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                  const int rr = r + dr, cc = col + dc;
                  if (rr >= 0 && rr < h_ && cc >= 0 && cc < w_) ++taps;
                }
            const double g = dout[b].at(ch, r, col) / (include_padding_ ? 9.0 : taps);
            for (int dr = -1; dr <= 1; ++dr)
              for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr, cc = col + dc;
                if (rr < 0 || rr >= h_ || cc < 0 || cc >= w_) continue;
                din[b].at(ch, rr, cc) += g;
              }
          }
    return din;
  }

  bool include_padding() const { return include_padding_; }

 private:
  bool include_padding_;
  int h_ = 0, w_ = 0, c_ = 0;
};

// Fully connected layer on flattened feature maps; columns are samples.
class Dense {
 public:
  Dense() = default;
  Dense(int in_dim, int out_dim) : in_dim_(in_dim), out_dim_(out_dim) {
    weight_.setZero(out_dim, in_dim);
    bias_.setZero(out_dim);
    dweight_.setZero(out_dim, in_dim);
    dbias_.setZero(out_dim);
  }

  void init(RngStream& rng, double neg_slope) {
    const double std = std::sqrt(2.0 / ((1.0 + neg_slope * neg_slope) * in_dim_));
    for (int i = 0; i < weight_.rows(); ++i)
      for (int j = 0; j < weight_.cols(); ++j) weight_(i, j) = std * rng.next_normal();
    bias_.setZero();
  }

  Eigen::MatrixXd forward(const Batch& in) {
    const int B = static_cast<int>(in.size());
    if (static_cast<int>(in[0].size()) != in_dim_)
      throw std::invalid_argument("Dense: input dim mismatch");
    x_.resize(in_dim_, B);
    for (int b = 0; b < B; ++b)
      x_.col(b) = Eigen::Map<const Eigen::VectorXd>(in[static_cast<std::size_t>(b)].v.data(),
                                                    in_dim_);
    in_shape_ = {in[0].h, in[0].w, in[0].c};
    return (weight_ * x_).colwise() + bias_;
  }

  Batch backward(const Eigen::MatrixXd& dout) {
    dweight_ += dout * x_.transpose();
    dbias_ += dout.rowwise().sum();
    const Eigen::MatrixXd dx = weight_.transpose() * dout;
    Batch din(static_cast<std::size_t>(dout.cols()),
              Tensor3(in_shape_[0], in_shape_[1], in_shape_[2]));
    for (int b = 0; b < dout.cols(); ++b)
      Eigen::Map<Eigen::VectorXd>(din[static_cast<std::size_t>(b)].v.data(), in_dim_) =
          dx.col(b);
    return din;
  }

  void zero_grad() {
    dweight_.setZero();
    dbias_.setZero();
  }
  std::vector<ParamView> params() {
    return {{weight_.data(), dweight_.data(), static_cast<std::size_t>(weight_.size())},
            {bias_.data(), dbias_.data(), static_cast<std::size_t>(bias_.size())}};
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  Eigen::MatrixXd& weight() { return weight_; }
  Eigen::VectorXd& bias() { return bias_; }

 private:
  int in_dim_ = 0, out_dim_ = 0;
  Eigen::MatrixXd weight_, dweight_;
  Eigen::VectorXd bias_, dbias_;
  Eigen::MatrixXd x_;
  std::array<int, 3> in_shape_{};
};

class TanhHead {
 public:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& in) {
    out_ = in.array().tanh();
    return out_;
  }
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dout) {
    return dout.array() * (1.0 - out_.array().square());
  }

 private:
  Eigen::MatrixXd out_;
};

// Batch loss: mean over samples of per-sample RMSE. Columns are samples.
inline double rmse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& label,
                        Eigen::MatrixXd* grad = nullptr) {
  if (pred.rows() != label.rows() || pred.cols() != label.cols() || pred.size() == 0)
    throw std::invalid_argument("rmse_loss: shape mismatch or empty input");
  const int B = static_cast<int>(pred.cols());
  const int D = static_cast<int>(pred.rows());
  if (grad) grad->setZero(D, B);
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const Eigen::VectorXd e = pred.col(b) - label.col(b);
    const double r = std::sqrt(e.squaredNorm() / D);
    loss += r;
    if (grad && r > 1e-300) grad->col(b) = e / (static_cast<double>(D) * r * B);
  }
  return loss / B;
}

// Standard Adam with bias correction. The step is rejected (state
// untouched) if any gradient entry is non-finite.
struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(ParamView param, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  Eigen::Map<Eigen::VectorXd> p(param.data, static_cast<Eigen::Index>(param.size));
  Eigen::Map<const Eigen::VectorXd> g(param.grad, static_cast<Eigen::Index>(param.size));
  if (!g.allFinite()) throw std::runtime_error("adam_step: non-finite gradient");
  if (state.m.size() != g.size()) {
    state.m.setZero(g.size());
    state.v.setZero(g.size());
    state.t = 0;
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v.array().matrix() + (1.0 - cfg.beta2) * g.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  p.array() -= lr * (state.m.array() / bc1) /
               ((state.v.array() / bc2).sqrt() + cfg.eps);
}

}  // namespace noma
