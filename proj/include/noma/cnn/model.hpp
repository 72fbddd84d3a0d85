#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "noma/channel.hpp"
#include "noma/cnn/layers.hpp"
#include "noma/cnn/tensor.hpp"
#include "noma/precoding.hpp"

namespace noma {

enum class Encoding { tcnn, fcnn };

inline const char* to_string(Encoding e) { return e == Encoding::tcnn ? "tcnn" : "fcnn"; }

inline Encoding encoding_from_string(const std::string& s) {
  if (s == "tcnn") return Encoding::tcnn;
  if (s == "fcnn") return Encoding::fcnn;
  throw std::invalid_argument("unknown encoding: " + s);
}

// I/Q row stacking: row 0 the real parts, row 1 the imaginary parts,
// users concatenated along the width. Shape 2 x NK x 1.
inline Tensor3 tcnn_encode(const ChannelSet& c) {
  Tensor3 t(2, c.n * c.k, 1);
  for (int j = 0; j < c.k; ++j)
    for (int i = 0; i < c.n; ++i) {
      t.at(0, 0, j * c.n + i) = c.h(i, j).real();
      t.at(0, 1, j * c.n + i) = c.h(i, j).imag();
    }
  return t;
}

// Block embedding [Re H, -Im H; Im H, Re H]. Shape 2N x 2K x 1.
inline Tensor3 fcnn_encode(const ChannelSet& c) {
  Tensor3 t(2 * c.n, 2 * c.k, 1);
  for (int j = 0; j < c.k; ++j)
    for (int i = 0; i < c.n; ++i) {
      const double re = c.h(i, j).real(), im = c.h(i, j).imag();
      t.at(0, i, j) = re;
      t.at(0, i, c.k + j) = -im;
      t.at(0, c.n + i, j) = im;
      t.at(0, c.n + i, c.k + j) = re;
    }
  return t;
}

inline Tensor3 encode_channel(const ChannelSet& c, Encoding e) {
  return e == Encoding::tcnn ? tcnn_encode(c) : fcnn_encode(c);
}

// Label layout: [Re u_1; Im u_1; ...; Re u_K; Im u_K], length 2NK.
inline Eigen::VectorXd label_encode(const DirectionMatrix& d) {
  const int n = static_cast<int>(d.u.rows());
  const int k = static_cast<int>(d.u.cols());
  Eigen::VectorXd v(2 * n * k);
  for (int j = 0; j < k; ++j) {
    v.segment(2 * n * j, n) = d.u.col(j).real();
    v.segment(2 * n * j + n, n) = d.u.col(j).imag();
  }
  return v;
}

// Inverse of label_encode with per-user renormalization to unit norm.
inline DirectionMatrix label_decode(const Eigen::VectorXd& v, int n, int k) {
  if (v.size() != 2 * n * k) throw std::invalid_argument("label_decode: length mismatch");
  DirectionMatrix d;
  d.u.resize(n, k);
  for (int j = 0; j < k; ++j) {
    d.u.col(j).real() = v.segment(2 * n * j, n);
    d.u.col(j).imag() = v.segment(2 * n * j + n, n);
    const double nrm = d.u.col(j).norm();
    if (nrm < 1e-12)
      throw std::runtime_error("label_decode: degenerate (near-zero) column");
    d.u.col(j) /= nrm;
  }
  return d;
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 200;
  double lr0 = 0.01;
  int lr_drop_epoch = 50;
  double lr_factor = 0.5;  // rho
  // Linear ramp of the learning rate from ~0 to lr0 across the first
  // `warmup_epochs` epochs (per batch step). Guards the tanh head against
  // saturation from large early Adam steps; 0 disables.
  int warmup_epochs = 0;
  double val_fraction = 0.2;
  // Replace each training sample by a random per-user phase rotation of its
  // channel (labels rotated to match) every epoch. The optimum is exactly
  // equivariant under these rotations, so this augments without bias.
  bool augment_phases = false;
  AdamConfig adam;
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 2) throw std::invalid_argument("TrainConfig: bad epochs/batch");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw std::invalid_argument("TrainConfig: val_fraction must be in (0,1)");
    if (!(lr_factor > 0.0 && lr_factor <= 1.0))
      throw std::invalid_argument("TrainConfig: lr_factor must be in (0,1]");
    if (warmup_epochs < 0) throw std::invalid_argument("TrainConfig: warmup_epochs < 0");
  }
};

// Fig. 1 stack: 4 x (conv 3x3/64 + batch norm + leaky ReLU), mean pool,
// dense to 2NK, tanh head.
class CnnModel {
 public:
  static constexpr int kBlocks = 4;
  static constexpr int kFilters = 64;
  static constexpr double kSlope = 0.01;

  CnnModel() = default;

  CnnModel(Encoding enc, int n, int k, std::uint64_t init_seed, double gamma_db = 0.0,
           bool pool_include_padding = true)
      : encoding_(enc), n_(n), k_(k), gamma_db_(gamma_db), init_seed_(init_seed),
        pool_(pool_include_padding) {
    if (n < 1 || k < 1) throw std::invalid_argument("CnnModel: bad dimensions");
    in_h_ = enc == Encoding::tcnn ? 2 : 2 * n;
    in_w_ = enc == Encoding::tcnn ? n * k : 2 * k;
    out_dim_ = 2 * n * k;
    RngStream rng(init_seed, 0x6d6f64656cull);
    for (int b = 0; b < kBlocks; ++b) {
      conv_[b] = Conv2d(b == 0 ? 1 : kFilters, kFilters);
      conv_[b].init(rng, kSlope);
      bn_[b] = BatchNorm(kFilters);
    }
    dense_ = Dense(in_h_ * in_w_ * kFilters, out_dim_);
    dense_.init(rng, kSlope);
    check_shapes();
  }

  void check_shapes() const {
    if (out_dim_ != 2 * n_ * k_) throw std::logic_error("CnnModel: output length != 2NK");
    if (dense_.in_dim() != in_h_ * in_w_ * kFilters || dense_.out_dim() != out_dim_)
      throw std::logic_error("CnnModel: dense shape chain broken");
  }

  Eigen::MatrixXd forward(const Batch& in, bool training) {
    if (in.empty() || in[0].h != in_h_ || in[0].w != in_w_ || in[0].c != 1)
      throw std::invalid_argument("CnnModel: input shape mismatch");
    Batch x = in;
    for (int b = 0; b < kBlocks; ++b) {
      x = conv_[b].forward(x);
      x = bn_[b].forward(x, training);
      x = relu_[b].forward(x);
    }
    x = pool_.forward(x);
    return head_.forward(dense_.forward(x));
  }

  void backward(const Eigen::MatrixXd& dout) {
    Batch g = dense_.backward(head_.backward(dout));
    g = pool_.backward(g);
    for (int b = kBlocks - 1; b >= 0; --b) {
      g = relu_[b].backward(g);
      g = bn_[b].backward(g);
      g = conv_[b].backward(g);
    }
  }

  void zero_grad() {
    for (int b = 0; b < kBlocks; ++b) {
      conv_[b].zero_grad();
      bn_[b].zero_grad();
    }
    dense_.zero_grad();
  }

  std::vector<ParamView> params() {
    std::vector<ParamView> out;
    for (int b = 0; b < kBlocks; ++b) {
      for (auto& p : conv_[b].params()) out.push_back(p);
      for (auto& p : bn_[b].params()) out.push_back(p);
    }
    for (auto& p : dense_.params()) out.push_back(p);
    return out;
  }

  std::uint64_t checksum() {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto& p : params())
      for (std::size_t i = 0; i < p.size; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &p.data[i], sizeof(bits));
        h = (h ^ bits) * 0x100000001b3ull;
      }
    return h;
  }

  Encoding encoding() const { return encoding_; }
  int n() const { return n_; }
  int k() const { return k_; }
  int input_h() const { return in_h_; }
  int input_w() const { return in_w_; }
  int output_dim() const { return out_dim_; }
  double gamma_db() const { return gamma_db_; }
  void set_gamma_db(double g) { gamma_db_ = g; }
  std::uint64_t init_seed() const { return init_seed_; }

  Conv2d& conv(int b) { return conv_[b]; }
  BatchNorm& bn(int b) { return bn_[b]; }
  Dense& dense() { return dense_; }
  MeanPool& pool() { return pool_; }

  nlohmann::ordered_json metadata;  // training provenance, persisted verbatim

  void save(const std::string& path) {
    nlohmann::ordered_json j;
    j["format"] = "noma-cnn-model";
    j["encoding"] = to_string(encoding_);
    j["n"] = n_;
    j["k"] = k_;
    j["gamma_db"] = gamma_db_;
    j["init_seed"] = init_seed_;
    j["pool_include_padding"] = pool_.include_padding();
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (int b = 0; b < kBlocks; ++b) {
      nlohmann::ordered_json cj;
      cj["type"] = "conv2d";
      cj["in_channels"] = conv_[b].in_channels();
      cj["out_channels"] = conv_[b].out_channels();
      cj["weight"] = vec_json(conv_[b].weight().data(), conv_[b].weight().size());
      cj["bias"] = vec_json(conv_[b].bias().data(), conv_[b].bias().size());
      layers.push_back(std::move(cj));
      nlohmann::ordered_json bj;
      bj["type"] = "batchnorm";
      bj["channels"] = bn_[b].channels();
      bj["eps"] = bn_[b].eps();
      bj["momentum"] = bn_[b].momentum();
      bj["gamma"] = vec_json(bn_[b].gamma().data(), bn_[b].gamma().size());
      bj["beta"] = vec_json(bn_[b].beta().data(), bn_[b].beta().size());
      bj["running_mean"] = vec_json(bn_[b].running_mean().data(), bn_[b].running_mean().size());
      bj["running_var"] = vec_json(bn_[b].running_var().data(), bn_[b].running_var().size());
      layers.push_back(std::move(bj));
      layers.push_back({{"type", "leaky_relu"}, {"slope", kSlope}});
    }
    layers.push_back({{"type", "mean_pool"}, {"include_padding", pool_.include_padding()}});
    nlohmann::ordered_json dj;
    dj["type"] = "dense";
    dj["in_dim"] = dense_.in_dim();
    dj["out_dim"] = dense_.out_dim();
    dj["weight"] = vec_json(dense_.weight().data(), dense_.weight().size());
    dj["bias"] = vec_json(dense_.bias().data(), dense_.bias().size());
    layers.push_back(std::move(dj));
    layers.push_back({{"type", "tanh"}});
    j["layers"] = std::move(layers);
    j["metadata"] = metadata;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("CnnModel::save: cannot open " + path);
    out << j.dump() << '\n';
  }

  static CnnModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("CnnModel::load: cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("CnnModel::load: malformed JSON (") + e.what() + ")");
    }
    if (j.value("format", "") != "noma-cnn-model")
      throw std::runtime_error("CnnModel::load: not a model file");
    CnnModel m(encoding_from_string(j.at("encoding").get<std::string>()), j.at("n").get<int>(),
               j.at("k").get<int>(), j.at("init_seed").get<std::uint64_t>(),
               j.at("gamma_db").get<double>(), j.value("pool_include_padding", true));
    const auto& layers = j.at("layers");
    int conv_i = 0, bn_i = 0;
    for (const auto& lj : layers) {
      const std::string type = lj.at("type").get<std::string>();
      if (type == "conv2d") {
        if (conv_i >= kBlocks) throw std::runtime_error("CnnModel::load: too many conv layers");
        Conv2d& cv = m.conv_[conv_i];
        if (lj.at("in_channels").get<int>() != cv.in_channels() ||
            lj.at("out_channels").get<int>() != cv.out_channels())
          throw std::runtime_error("CnnModel::load: conv shape mismatch");
        read_vec(lj.at("weight"), cv.weight().data(), cv.weight().size(), "conv weight");
        read_vec(lj.at("bias"), cv.bias().data(), cv.bias().size(), "conv bias");
        ++conv_i;
      } else if (type == "batchnorm") {
        if (bn_i >= kBlocks) throw std::runtime_error("CnnModel::load: too many batchnorm layers");
        BatchNorm& bn = m.bn_[bn_i];
        if (lj.at("channels").get<int>() != bn.channels())
          throw std::runtime_error("CnnModel::load: batchnorm shape mismatch");
        read_vec(lj.at("gamma"), bn.gamma().data(), bn.gamma().size(), "bn gamma");
        read_vec(lj.at("beta"), bn.beta().data(), bn.beta().size(), "bn beta");
        read_vec(lj.at("running_mean"), bn.running_mean().data(), bn.running_mean().size(),
                 "bn running_mean");
        read_vec(lj.at("running_var"), bn.running_var().data(), bn.running_var().size(),
                 "bn running_var");
        if ((bn.running_var().array() < 0.0).any())
          throw std::runtime_error("CnnModel::load: negative running variance");
        ++bn_i;
      } else if (type == "dense") {
        if (lj.at("in_dim").get<int>() != m.dense_.in_dim() ||
            lj.at("out_dim").get<int>() != m.dense_.out_dim())
          throw std::runtime_error("CnnModel::load: dense shape mismatch");
        read_vec(lj.at("weight"), m.dense_.weight().data(), m.dense_.weight().size(),
                 "dense weight");
        read_vec(lj.at("bias"), m.dense_.bias().data(), m.dense_.bias().size(), "dense bias");
      }
    }
    if (conv_i != kBlocks || bn_i != kBlocks)
      throw std::runtime_error("CnnModel::load: incomplete layer stack");
    if (j.contains("metadata")) m.metadata = j.at("metadata");
    m.check_shapes();
    return m;
  }

 private:
  static nlohmann::ordered_json vec_json(const double* d, Eigen::Index size) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < size; ++i) a.push_back(d[i]);
    return a;
  }
  static void read_vec(const nlohmann::json& a, double* d, Eigen::Index size,
                       const char* what) {
    if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != size)
      throw std::runtime_error(std::string("CnnModel::load: bad array size for ") + what);
    for (Eigen::Index i = 0; i < size; ++i) d[i] = a.at(static_cast<std::size_t>(i)).get<double>();
  }

  Encoding encoding_ = Encoding::fcnn;
  int n_ = 0, k_ = 0;
  int in_h_ = 0, in_w_ = 0, out_dim_ = 0;
  double gamma_db_ = 0.0;
  std::uint64_t init_seed_ = 0;
  std::array<Conv2d, kBlocks> conv_;
  std::array<BatchNorm, kBlocks> bn_;
  std::array<LeakyRelu, kBlocks> relu_;
  MeanPool pool_{true};
  Dense dense_;
  TanhHead head_;
};

// Inference: encode, forward with running batch-norm statistics, decode
// with per-user renormalization.
inline DirectionMatrix predict_directions(CnnModel& model, const ChannelSet& c) {
  if (c.n != model.n() || c.k != model.k())
    throw std::invalid_argument("predict_directions: channel shape mismatch");
  Batch in{encode_channel(c, model.encoding())};
  const Eigen::MatrixXd out = model.forward(in, false);
  return label_decode(out.col(0), model.n(), model.k());
}

}  // namespace noma
