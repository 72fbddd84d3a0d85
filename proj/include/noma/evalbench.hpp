#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <thread>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "noma/cnn/model.hpp"
#include "noma/cnn/train.hpp"
#include "noma/dataset.hpp"
#include "noma/precoding.hpp"
#include "noma/socp.hpp"

namespace noma {

// shortest round-trip decimal of a binary64
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

struct PowerCurvePoint {
  double gamma_db = 0.0;
  std::string method;  // label, tcnn, fcnn, mrc, zf
  double mean_total_power = 0.0;
  double feasibility_rate = 0.0;
  int sample_count = 0;
};

struct TimingRecord {
  std::string method;
  double median_s = 0.0;
  double p95_s = 0.0;
  int instance_count = 0;
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

// Mean total transmit power per (gamma, method) over shared test channels.
// Means are taken over the intersection of samples feasible under every
// compared method at that gamma; per-method feasibility rates are reported
// over all samples.
inline std::vector<PowerCurvePoint> power_curve(const std::vector<DatasetSample>& test_set,
                                                std::map<std::string, CnnModel*> models,
                                                const std::vector<double>& gamma_grid_db,
                                                const SolverOptions& opts = {},
                                                int workers = 1) {
  if (test_set.empty()) throw std::invalid_argument("power_curve: empty test set");
  const int S = static_cast<int>(test_set.size());
  std::vector<std::string> methods = {"label", "mrc", "zf"};
  for (const auto& [name, model] : models) {
    if (!model) throw std::invalid_argument("power_curve: missing model for " + name);
    methods.push_back(name);
  }

  std::vector<PowerCurvePoint> out;
  for (double gdb : gamma_grid_db) {
    std::map<std::string, std::vector<double>> totals;    // NaN when infeasible
    for (const auto& m : methods) totals[m].assign(static_cast<std::size_t>(S), 0.0);

    // CNN directions are gamma-independent; predict once per sample
    std::map<std::string, std::vector<DirectionMatrix>> predicted;
    for (auto& [name, model] : models) {
      auto& dirs = predicted[name];
      dirs.resize(static_cast<std::size_t>(S));
      for (int i = 0; i < S; ++i) dirs[static_cast<std::size_t>(i)] = predict_directions(*model, test_set[static_cast<std::size_t>(i)].channel);
    }

    const auto eval_one = [&](int i) {
      const ChannelSet& c = test_set[static_cast<std::size_t>(i)].channel;
      const SinrSpec gamma = SinrSpec::uniform_db(c.k, gdb);
      const auto nan = std::numeric_limits<double>::quiet_NaN();
      BeamSolution sol = solve_power_min(c, gamma, opts);
      totals["label"][static_cast<std::size_t>(i)] =
          sol.status == SolveStatus::optimal ? sol.total_power : nan;
      for (const auto& m : methods) {
        if (m == "label") continue;
        try {
          DirectionMatrix d = m == "mrc"  ? mrc_directions(c)
                              : m == "zf" ? zf_directions(c)
                                          : predicted[m][static_cast<std::size_t>(i)];
          const PowerReport r = verify_solution(c, d, gamma);
          totals[m][static_cast<std::size_t>(i)] = r.feasible ? r.total : nan;
        } catch (const std::exception&) {
          totals[m][static_cast<std::size_t>(i)] = nan;
        }
      }
    };
    if (workers <= 1) {
      for (int i = 0; i < S; ++i) eval_one(i);
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
          for (int i = next.fetch_add(1); i < S; i = next.fetch_add(1)) eval_one(i);
        });
      for (auto& t : pool) t.join();
    }

    std::vector<int> shared;
    for (int i = 0; i < S; ++i) {
      bool all_ok = true;
      for (const auto& m : methods)
        if (std::isnan(totals[m][static_cast<std::size_t>(i)])) all_ok = false;
      if (all_ok) shared.push_back(i);
    }
    for (const auto& m : methods) {
      PowerCurvePoint p;
      p.gamma_db = gdb;
      p.method = m;
      p.sample_count = static_cast<int>(shared.size());
      int feasible = 0;
      for (int i = 0; i < S; ++i)
        if (!std::isnan(totals[m][static_cast<std::size_t>(i)])) ++feasible;
      p.feasibility_rate = static_cast<double>(feasible) / S;
      double sum = 0.0;
      for (int i : shared) sum += totals[m][static_cast<std::size_t>(i)];
      p.mean_total_power = shared.empty() ? 0.0 : sum / static_cast<double>(shared.size());
      out.push_back(std::move(p));
    }
  }
  // deterministic row order: method, then gamma
  std::stable_sort(out.begin(), out.end(), [](const PowerCurvePoint& a, const PowerCurvePoint& b) {
    if (a.method != b.method) return a.method < b.method;
    return a.gamma_db < b.gamma_db;
  });
  return out;
}

inline void emit_power_csv(const std::vector<PowerCurvePoint>& points, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_power_csv: cannot open " + path);
  out << "gamma_db,method,mean_total_power,feasibility_rate,sample_count\n";
  for (const auto& p : points)
    out << format_double(p.gamma_db) << ',' << p.method << ','
        << format_double(p.mean_total_power) << ',' << format_double(p.feasibility_rate)
        << ',' << p.sample_count << '\n';
  if (!out) throw std::runtime_error("emit_power_csv: write failed for " + path);
}

// Per-epoch curves for encodings trained on identical data and seeds.
inline void emit_learning_csv(const std::vector<std::pair<std::string, TrainReport>>& runs,
                              const std::string& path) {
  if (!runs.empty())
    for (const auto& [name, rep] : runs)
      if (rep.train_rmse.size() != runs.front().second.train_rmse.size())
        throw std::invalid_argument("emit_learning_csv: mismatched epoch counts");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_learning_csv: cannot open " + path);
  out << "epoch,encoding,train_rmse,val_rmse\n";
  if (runs.empty()) return;
  const std::size_t epochs = runs.front().second.train_rmse.size();
  for (std::size_t e = 0; e < epochs; ++e)
    for (const auto& [name, rep] : runs)
      out << (e + 1) << ',' << name << ',' << format_double(rep.train_rmse[e]) << ','
          << format_double(rep.val_rmse[e]) << '\n';
}

// Wall-clock per instance: full solve for the label method, encode +
// forward + decode + power recovery for the CNN methods. Identical
// channels across methods, sequential execution.
inline std::vector<TimingRecord> bench_time(const std::vector<DatasetSample>& test_set,
                                            std::map<std::string, CnnModel*> models,
                                            double gamma_db, int instances,
                                            const SolverOptions& opts = {}) {
  if (instances < 30) throw std::invalid_argument("bench_time: need >= 30 instances");
  if (static_cast<int>(test_set.size()) < instances)
    throw std::invalid_argument("bench_time: test set smaller than instance count");
  using clock = std::chrono::steady_clock;
  std::vector<TimingRecord> out;

  // warm-up on the first channel
  {
    const ChannelSet& c = test_set[0].channel;
    const SinrSpec g = SinrSpec::uniform_db(c.k, gamma_db);
    (void)solve_power_min(c, g, opts);
    for (auto& [name, model] : models) (void)predict_directions(*model, c);
  }

  {
    TimingRecord r;
    r.method = "label";
    std::vector<double> times;
    for (int i = 0; i < instances; ++i) {
      const ChannelSet& c = test_set[static_cast<std::size_t>(i)].channel;
      const SinrSpec g = SinrSpec::uniform_db(c.k, gamma_db);
      const auto t0 = clock::now();
      const BeamSolution sol = solve_power_min(c, g, opts);
      times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      (void)sol;
    }
    r.median_s = detail::quantile(times, 0.5);
    r.p95_s = detail::quantile(times, 0.95);
    r.instance_count = instances;
    out.push_back(std::move(r));
  }

  for (auto& [name, model] : models) {
    TimingRecord r;
    r.method = name;
    std::vector<double> times;
    for (int i = 0; i < instances; ++i) {
      const ChannelSet& c = test_set[static_cast<std::size_t>(i)].channel;
      const SinrSpec g = SinrSpec::uniform_db(c.k, gamma_db);
      const auto t0 = clock::now();
      const DirectionMatrix d = predict_directions(*model, c);
      const Eigen::VectorXd p = power_allocation_vector(c, d, g);
      times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      (void)p;
    }
    r.median_s = detail::quantile(times, 0.5);
    r.p95_s = detail::quantile(times, 0.95);
    r.instance_count = instances;
    out.push_back(std::move(r));
  }
  return out;
}

inline void emit_timing_csv(const std::vector<TimingRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_timing_csv: cannot open " + path);
  out << "method,median_s,p95_s,instance_count\n";
  for (const auto& r : records)
    out << r.method << ',' << format_double(r.median_s) << ',' << format_double(r.p95_s)
        << ',' << r.instance_count << '\n';
}

}  // namespace noma
