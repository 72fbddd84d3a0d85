#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "noma/cnn/model.hpp"
#include "noma/dataset.hpp"

namespace noma {

struct TrainReport {
  std::vector<double> train_rmse;    // one entry per epoch
  std::vector<double> val_rmse;      // inference-mode batch norm
  std::vector<double> epoch_seconds;
  std::uint64_t model_checksum = 0;
};

namespace detail {

inline void seeded_shuffle(std::vector<int>& idx, RngStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

inline double eval_rmse(CnnModel& model, const Batch& inputs,
                        const Eigen::MatrixXd& labels, const std::vector<int>& idx,
                        int chunk) {
  double sum = 0.0;
  std::size_t done = 0;
  while (done < idx.size()) {
    const std::size_t bs = std::min<std::size_t>(chunk, idx.size() - done);
    Batch in(bs);
    Eigen::MatrixXd lab(labels.rows(), static_cast<Eigen::Index>(bs));
    for (std::size_t i = 0; i < bs; ++i) {
      in[i] = inputs[static_cast<std::size_t>(idx[done + i])];
      lab.col(static_cast<Eigen::Index>(i)) = labels.col(idx[done + i]);
    }
    const Eigen::MatrixXd pred = model.forward(in, false);
    sum += rmse_loss(pred, lab) * static_cast<double>(bs);
    done += bs;
  }
  return sum / static_cast<double>(idx.size());
}

// Rotate each user's channel column and label column by a shared random
// phase. Leaves every |h_k^H u_i|, the SIC ordering and the optimal powers
// unchanged, so the rotated pair is another exact training sample.
inline void phase_rotate_sample(const DatasetSample& s, Encoding encoding, RngStream& rng,
                                Tensor3& input, Eigen::Ref<Eigen::VectorXd> label) {
  const int n = s.channel.n, k = s.channel.k;
  Eigen::MatrixXcd h = s.channel.h;
  Eigen::MatrixXcd u = s.u;
  for (int j = 0; j < k; ++j) {
    const std::complex<double> rot =
        std::polar(1.0, 2.0 * std::numbers::pi * rng.next_uniform());
    h.col(j) *= rot;
    u.col(j) *= rot;
  }
  input = encode_channel(ChannelSet(n, k, std::move(h), s.channel.sigma2), encoding);
  label = label_encode(DirectionMatrix{std::move(u)});
}

}  // namespace detail

// Train on the optimal-status samples of a uniform (n, k, gamma) dataset.
// One seeded shuffle fixes the validation split; each epoch reshuffles the
// training portion. Everything is sequential and bit-reproducible.
inline std::pair<CnnModel, TrainReport> train(const std::vector<DatasetSample>& dataset,
                                              Encoding encoding, const TrainConfig& cfg,
                                              std::uint64_t init_seed) {
  cfg.validate();
  std::vector<const DatasetSample*> usable;
  for (const auto& s : dataset)
    if (s.solver_status == SolveStatus::optimal) usable.push_back(&s);
  if (usable.empty()) throw std::invalid_argument("train: no optimal-status samples");
  const int n = usable[0]->channel.n;
  const int k = usable[0]->channel.k;
  const double gdb = usable[0]->gamma_db;
  for (const auto* s : usable)
    if (s->channel.n != n || s->channel.k != k || s->gamma_db != gdb)
      throw std::invalid_argument("train: dataset mixes (n, k, gamma_db) settings");

  const int total = static_cast<int>(usable.size());
  Batch inputs(usable.size());
  Eigen::MatrixXd labels(2 * n * k, total);
  for (int i = 0; i < total; ++i) {
    inputs[static_cast<std::size_t>(i)] = encode_channel(usable[static_cast<std::size_t>(i)]->channel, encoding);
    labels.col(i) = label_encode(DirectionMatrix{usable[static_cast<std::size_t>(i)]->u});
  }

  RngStream shuffle_rng(cfg.shuffle_seed, 0x7368756666ull);
  RngStream augment_rng(cfg.shuffle_seed, 0x6167756dull);
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  detail::seeded_shuffle(order, shuffle_rng);
  const int n_val = std::max(1, static_cast<int>(std::lround(cfg.val_fraction * total)));
  if (total - n_val < cfg.batch_size)
    throw std::invalid_argument("train: insufficient samples for one batch");
  std::vector<int> val_idx(order.end() - n_val, order.end());
  std::vector<int> train_idx(order.begin(), order.end() - n_val);

  CnnModel model(encoding, n, k, init_seed, gdb);
  auto params = model.params();
  std::vector<AdamState> states(params.size());

  const long steps_per_epoch =
      static_cast<long>(train_idx.size() / static_cast<std::size_t>(cfg.batch_size)) +
      (train_idx.size() % static_cast<std::size_t>(cfg.batch_size) >= 2 ? 1 : 0);
  const long warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  long global_step = 0;

  TrainReport report;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_base = epoch < cfg.lr_drop_epoch ? cfg.lr0 : cfg.lr0 * cfg.lr_factor;
    detail::seeded_shuffle(train_idx, shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t off = 0; off < train_idx.size();
         off += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bs =
          std::min<std::size_t>(cfg.batch_size, train_idx.size() - off);
      if (bs < 2) break;  // a single-sample remainder cannot be batch-normalized
      Batch in(bs);
      Eigen::MatrixXd lab(labels.rows(), static_cast<Eigen::Index>(bs));
      for (std::size_t i = 0; i < bs; ++i) {
        const int si = train_idx[off + i];
        if (cfg.augment_phases) {
          detail::phase_rotate_sample(*usable[static_cast<std::size_t>(si)], encoding,
                                      augment_rng, in[i],
                                      lab.col(static_cast<Eigen::Index>(i)));
        } else {
          in[i] = inputs[static_cast<std::size_t>(si)];
          lab.col(static_cast<Eigen::Index>(i)) = labels.col(si);
        }
      }
      const Eigen::MatrixXd pred = model.forward(in, true);
      Eigen::MatrixXd grad;
      loss_sum += rmse_loss(pred, lab, &grad);
      ++batches;
      model.zero_grad();
      model.backward(grad);
      ++global_step;
      const double lr = global_step <= warmup_steps
                            ? lr_base * static_cast<double>(global_step) / warmup_steps
                            : lr_base;
      for (std::size_t pi = 0; pi < params.size(); ++pi)
        adam_step(params[pi], states[pi], lr, cfg.adam);
    }
    report.train_rmse.push_back(loss_sum / batches);
    report.val_rmse.push_back(
        detail::eval_rmse(model, inputs, labels, val_idx, cfg.batch_size));
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  report.model_checksum = model.checksum();

  model.metadata["train_samples"] = static_cast<int>(train_idx.size());
  model.metadata["val_samples"] = n_val;
  model.metadata["epochs"] = cfg.epochs;
  model.metadata["batch_size"] = cfg.batch_size;
  model.metadata["lr0"] = cfg.lr0;
  model.metadata["lr_drop_epoch"] = cfg.lr_drop_epoch;
  model.metadata["lr_factor"] = cfg.lr_factor;
  model.metadata["warmup_epochs"] = cfg.warmup_epochs;
  model.metadata["augment_phases"] = cfg.augment_phases;
  model.metadata["shuffle_seed"] = cfg.shuffle_seed;
  model.metadata["init_seed"] = init_seed;
  model.metadata["final_train_rmse"] = report.train_rmse.back();
  model.metadata["final_val_rmse"] = report.val_rmse.back();
  return {std::move(model), std::move(report)};
}

}  // namespace noma
