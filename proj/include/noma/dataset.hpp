#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "noma/channel.hpp"
#include "noma/precoding.hpp"
#include "noma/socp.hpp"

namespace noma {

// One labeled training/test record: ordered channel plus the solver's
// phase-normalized directions and powers.
struct DatasetSample {
  ChannelSet channel;
  double gamma_db = 0.0;
  Eigen::MatrixXcd u;  // N x K label directions
  Eigen::VectorXd p;   // linear powers
  double total_power = 0.0;
  SolveStatus solver_status = SolveStatus::numerical_failure;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int n, int k,
                                        const char* field) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw std::runtime_error(std::string("bad row count in field ") + field);
  Eigen::MatrixXd m(n, k);
  for (int i = 0; i < n; ++i) {
    const auto& row = j.at(i);
    if (!row.is_array() || static_cast<int>(row.size()) != k)
      throw std::runtime_error(std::string("bad column count in field ") + field);
    for (int c = 0; c < k; ++c) m(i, c) = row.at(c).get<double>();
  }
  return m;
}

inline SolveStatus status_from_string(const std::string& s) {
  if (s == "optimal") return SolveStatus::optimal;
  if (s == "infeasible") return SolveStatus::infeasible;
  if (s == "numerical_failure") return SolveStatus::numerical_failure;
  throw std::runtime_error("unknown value in field status");
}

}  // namespace detail

inline std::string sample_to_jsonl(const DatasetSample& s) {
  nlohmann::ordered_json j;
  j["n"] = s.channel.n;
  j["k"] = s.channel.k;
  j["sigma2"] = s.channel.sigma2;
  j["gamma_db"] = s.gamma_db;
  j["h_re"] = detail::matrix_to_json(s.channel.h.real());
  j["h_im"] = detail::matrix_to_json(s.channel.h.imag());
  j["u_re"] = detail::matrix_to_json(s.u.real());
  j["u_im"] = detail::matrix_to_json(s.u.imag());
  nlohmann::ordered_json p = nlohmann::ordered_json::array();
  for (int i = 0; i < s.p.size(); ++i) p.push_back(s.p(i));
  j["p"] = std::move(p);
  j["total_power"] = s.total_power;
  j["status"] = to_string(s.solver_status);
  j["seed"] = s.seed;
  j["stream_id"] = s.stream_id;
  return j.dump();
}

inline DatasetSample sample_from_jsonl(const std::string& line, std::size_t line_no) {
  const auto fail = [line_no](const std::string& what) {
    std::ostringstream os;
    os << "dataset line " << line_no << ": " << what;
    return std::runtime_error(os.str());
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed JSON (") + e.what() + ")");
  }
  DatasetSample s;
  try {
    const int n = j.at("n").get<int>();
    const int k = j.at("k").get<int>();
    const double sigma2 = j.at("sigma2").get<double>();
    const Eigen::MatrixXd hre = detail::matrix_from_json(j.at("h_re"), n, k, "h_re");
    const Eigen::MatrixXd him = detail::matrix_from_json(j.at("h_im"), n, k, "h_im");
    Eigen::MatrixXcd h(n, k);
    h.real() = hre;
    h.imag() = him;
    s.channel = ChannelSet(n, k, std::move(h), sigma2);
    s.gamma_db = j.at("gamma_db").get<double>();
    const Eigen::MatrixXd ure = detail::matrix_from_json(j.at("u_re"), n, k, "u_re");
    const Eigen::MatrixXd uim = detail::matrix_from_json(j.at("u_im"), n, k, "u_im");
    s.u.resize(n, k);
    s.u.real() = ure;
    s.u.imag() = uim;
    const auto& pj = j.at("p");
    if (!pj.is_array() || static_cast<int>(pj.size()) != k)
      throw std::runtime_error("bad length in field p");
    s.p.resize(k);
    for (int i = 0; i < k; ++i) s.p(i) = pj.at(i).get<double>();
    s.total_power = j.at("total_power").get<double>();
    s.solver_status = detail::status_from_string(j.at("status").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.stream_id = j.at("stream_id").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("missing or mistyped field (") + e.what() + ")");
  }
  return s;
}

inline void save_dataset(const std::vector<DatasetSample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& s : samples) out << sample_to_jsonl(s) << '\n';
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline std::vector<DatasetSample> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::vector<DatasetSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    samples.push_back(sample_from_jsonl(line, line_no));
  }
  return samples;
}

using Labeler = std::function<BeamSolution(const ChannelSet&, const SinrSpec&)>;

// Generate `count` labeled samples. Sample i owns RngStream (seed, i), so
// the result is identical for any worker count. Solver failures are
// recorded in the sample, never abort the batch.
inline std::vector<DatasetSample> generate_dataset(int count, int n, int k, double sigma2,
                                                   double gamma_db, std::uint64_t seed,
                                                   const Labeler& labeler, int workers = 1) {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  std::vector<DatasetSample> out(static_cast<std::size_t>(count));
  const auto make_one = [&](int i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    DatasetSample s;
    s.channel = sample_rayleigh(n, k, sigma2, rng);
    s.gamma_db = gamma_db;
    s.seed = seed;
    s.stream_id = static_cast<std::uint64_t>(i);
    const SinrSpec gamma = SinrSpec::uniform_db(k, gamma_db);
    BeamSolution sol;
    try {
      sol = labeler(s.channel, gamma);
    } catch (const std::exception&) {
      sol.status = SolveStatus::numerical_failure;
      sol.u = Eigen::MatrixXcd::Zero(n, k);
      sol.p = Eigen::VectorXd::Zero(k);
    }
    s.solver_status = sol.status;
    s.u = sol.u;
    s.p = sol.p;
    s.total_power = sol.total_power;
    out[static_cast<std::size_t>(i)] = std::move(s);
  };
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) make_one(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) make_one(i);
      });
    for (auto& t : pool) t.join();
  }
  return out;
}

inline std::vector<DatasetSample> generate_dataset(int count, int n, int k, double sigma2,
                                                   double gamma_db, std::uint64_t seed,
                                                   const SolverOptions& opts = {},
                                                   int workers = 1) {
  return generate_dataset(count, n, k, sigma2, gamma_db, seed,
                          [&opts](const ChannelSet& c, const SinrSpec& g) {
                            return solve_power_min(c, g, opts);
                          },
                          workers);
}

}  // namespace noma
