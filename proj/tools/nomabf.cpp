// Command-line front end for the NOMA beamforming pipeline: dataset
// generation, CNN training, evaluation, timing benchmarks and per-channel
// prediction. Machine-readable summaries go to stdout, logs to stderr.
//
// Exit codes: 0 success, 2 usage error, 3 systemic solver failure,
// 4 data/model mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "noma/noma.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitSolverFailure = 3;
constexpr int kExitMismatch = 4;

struct MismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<double> parse_gammas(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw CLI::ValidationError("--gammas", "no values given");
  return out;
}

struct LoadedModels {
  std::vector<std::unique_ptr<noma::CnnModel>> storage;
  std::map<std::string, noma::CnnModel*> by_name;
};

LoadedModels load_models(const std::string& csv, int n, int k) {
  LoadedModels out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    auto m = std::make_unique<noma::CnnModel>(noma::CnnModel::load(tok));
    if (m->n() != n || m->k() != k)
      throw MismatchError("model " + tok + " was trained for (n,k)=(" +
                          std::to_string(m->n()) + "," + std::to_string(m->k()) +
                          "), dataset has (" + std::to_string(n) + "," + std::to_string(k) + ")");
    const std::string name = noma::to_string(m->encoding());
    out.by_name[name] = m.get();
    out.storage.push_back(std::move(m));
  }
  return out;
}

int run_gen_data(int count, int n, int k, double sigma2, double gamma_db,
                 std::uint64_t seed, const std::string& out_path,
                 const noma::SolverOptions& opts, int workers) {
  const auto samples =
      noma::generate_dataset(count, n, k, sigma2, gamma_db, seed, opts, workers);
  noma::save_dataset(samples, out_path);
  int optimal = 0, failures = 0;
  double power_sum = 0.0;
  for (const auto& s : samples) {
    if (s.solver_status == noma::SolveStatus::optimal) {
      ++optimal;
      power_sum += s.total_power;
    } else if (s.solver_status == noma::SolveStatus::numerical_failure) {
      ++failures;
    }
  }
  nlohmann::ordered_json summary;
  summary["count"] = count;
  summary["feasibility_rate"] = static_cast<double>(optimal) / count;
  summary["mean_label_power"] = optimal > 0 ? power_sum / optimal : 0.0;
  summary["out"] = out_path;
  std::cout << summary.dump() << std::endl;
  if (failures > count / 10) {
    std::cerr << "gen-data: " << failures << "/" << count
              << " solves ended in numerical_failure\n";
    return kExitSolverFailure;
  }
  return 0;
}

int run_train(const std::string& data_path, const std::string& encoding_str,
              const noma::TrainConfig& cfg, std::uint64_t seed,
              const std::string& out_path, const std::string& curve_path) {
  const auto dataset = noma::load_dataset(data_path);
  noma::Encoding enc;
  try {
    enc = noma::encoding_from_string(encoding_str);
  } catch (const std::exception& e) {
    throw CLI::ValidationError("--encoding", e.what());
  }
  noma::TrainConfig local = cfg;
  local.shuffle_seed = seed;
  std::pair<noma::CnnModel, noma::TrainReport> trained = [&] {
    try {
      return noma::train(dataset, enc, local, seed);
    } catch (const std::invalid_argument& e) {
      throw MismatchError(e.what());
    }
  }();
  trained.first.save(out_path);
  if (!curve_path.empty())
    noma::emit_learning_csv({{encoding_str, trained.second}}, curve_path);
  nlohmann::ordered_json summary;
  summary["encoding"] = encoding_str;
  summary["epochs"] = cfg.epochs;
  summary["final_train_rmse"] = trained.second.train_rmse.back();
  summary["final_val_rmse"] = trained.second.val_rmse.back();
  summary["model_checksum"] = trained.second.model_checksum;
  summary["out"] = out_path;
  std::cout << summary.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NOMA downlink beamforming: SOCP labels, CNN precoders, baselines"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file merged under flags");

  int workers = default_workers();
  app.add_option("--workers", workers, "worker threads for per-sample stages");

  noma::SolverOptions sopts;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a labeled JSONL dataset");
  int g_count = 20000, g_n = 4, g_k = 3;
  double g_sigma2 = 0.1, g_gamma = 5.0;
  std::uint64_t g_seed = 0;
  std::string g_out;
  gen->add_option("--count", g_count)->check(CLI::PositiveNumber);
  gen->add_option("--n", g_n)->check(CLI::PositiveNumber);
  gen->add_option("--k", g_k)->check(CLI::PositiveNumber);
  gen->add_option("--sigma2", g_sigma2)->check(CLI::PositiveNumber);
  gen->add_option("--gamma-db", g_gamma);
  gen->add_option("--seed", g_seed)->required();
  gen->add_option("--out", g_out)->required();
  gen->add_option("--tol-gap", sopts.tol_gap);
  gen->add_option("--tol-feas", sopts.tol_feas);
  gen->add_option("--max-iter", sopts.max_iter);

  // train
  auto* tr = app.add_subcommand("train", "train a CNN on a labeled dataset");
  std::string t_data, t_enc, t_out, t_curve;
  noma::TrainConfig tcfg;
  std::uint64_t t_seed = 0;
  tr->add_option("--data", t_data)->required();
  tr->add_option("--encoding", t_enc, "tcnn or fcnn")->required();
  tr->add_option("--epochs", tcfg.epochs)->check(CLI::PositiveNumber);
  tr->add_option("--batch", tcfg.batch_size)->check(CLI::Range(2, 1 << 20));
  tr->add_option("--lr", tcfg.lr0)->check(CLI::PositiveNumber);
  tr->add_option("--lr-drop-epoch", tcfg.lr_drop_epoch);
  tr->add_option("--warmup-epochs", tcfg.warmup_epochs);
  tr->add_option("--lr-factor", tcfg.lr_factor);
  tr->add_option("--val-fraction", tcfg.val_fraction);
  tr->add_flag("--augment", tcfg.augment_phases,
               "per-user phase augmentation of training batches");
  tr->add_option("--seed", t_seed)->required();
  tr->add_option("--out", t_out)->required();
  tr->add_option("--curve", t_curve, "learning-curve CSV path");

  // eval
  auto* ev = app.add_subcommand("eval", "power-vs-SINR curve over a test set");
  std::string e_test, e_models, e_gammas = "0,2.5,5,7.5,10", e_out = "power_curve.csv";
  ev->add_option("--test", e_test)->required();
  ev->add_option("--models", e_models, "comma-separated model files");
  ev->add_option("--gammas", e_gammas, "comma-separated SINR thresholds in dB");
  ev->add_option("--out", e_out);
  ev->add_option("--tol-gap", sopts.tol_gap);
  ev->add_option("--max-iter", sopts.max_iter);

  // bench
  auto* be = app.add_subcommand("bench", "per-instance timing: solver vs CNN inference");
  std::string b_test, b_models, b_out = "timing.csv";
  int b_instances = 50;
  double b_gamma = 5.0;
  be->add_option("--test", b_test)->required();
  be->add_option("--models", b_models)->required();
  be->add_option("--instances", b_instances)->check(CLI::Range(30, 1 << 20));
  be->add_option("--gamma-db", b_gamma);
  be->add_option("--out", b_out);

  // predict
  auto* pr = app.add_subcommand("predict", "per-sample direction/power report");
  std::string p_model, p_channel, p_out;
  pr->add_option("--model", p_model)->required();
  pr->add_option("--channel", p_channel, "JSONL file of channel samples")->required();
  pr->add_option("--out", p_out, "output JSONL (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage to the right stream
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed())
      return run_gen_data(g_count, g_n, g_k, g_sigma2, g_gamma, g_seed, g_out, sopts,
                          workers);

    if (tr->parsed()) return run_train(t_data, t_enc, tcfg, t_seed, t_out, t_curve);

    if (ev->parsed()) {
      const auto test_set = noma::load_dataset(e_test);
      if (test_set.empty()) throw MismatchError("eval: empty test set");
      LoadedModels models = load_models(e_models, test_set[0].channel.n, test_set[0].channel.k);
      const auto points =
          noma::power_curve(test_set, models.by_name, parse_gammas(e_gammas), sopts, workers);
      noma::emit_power_csv(points, e_out);
      nlohmann::ordered_json summary;
      summary["rows"] = points.size();
      summary["out"] = e_out;
      std::cout << summary.dump() << std::endl;
      return 0;
    }

    if (be->parsed()) {
      const auto test_set = noma::load_dataset(b_test);
      if (test_set.empty()) throw MismatchError("bench: empty test set");
      LoadedModels models = load_models(b_models, test_set[0].channel.n, test_set[0].channel.k);
      const auto records =
          noma::bench_time(test_set, models.by_name, b_gamma, b_instances, sopts);
      noma::emit_timing_csv(records, b_out);
      nlohmann::ordered_json summary;
      summary["rows"] = records.size();
      summary["out"] = b_out;
      std::cout << summary.dump() << std::endl;
      return 0;
    }

    if (pr->parsed()) {
      auto model = noma::CnnModel::load(p_model);
      const auto samples = noma::load_dataset(p_channel);
      std::ofstream file;
      if (!p_out.empty()) {
        file.open(p_out, std::ios::binary);
        if (!file) throw std::runtime_error("predict: cannot open " + p_out);
      }
      std::ostream& out = p_out.empty() ? std::cout : file;
      for (const auto& s : samples) {
        if (s.channel.n != model.n() || s.channel.k != model.k())
          throw MismatchError("predict: channel shape does not match model");
        const noma::DirectionMatrix d = noma::predict_directions(model, s.channel);
        const noma::SinrSpec gamma = noma::SinrSpec::uniform_db(s.channel.k, s.gamma_db);
        const noma::PowerReport rep = noma::verify_solution(s.channel, d, gamma);
        nlohmann::ordered_json j;
        j["stream_id"] = s.stream_id;
        j["u_re"] = noma::detail::matrix_to_json(d.u.real());
        j["u_im"] = noma::detail::matrix_to_json(d.u.imag());
        nlohmann::ordered_json p = nlohmann::ordered_json::array();
        for (int i = 0; i < rep.p.size(); ++i) p.push_back(rep.p(i));
        j["p"] = std::move(p);
        nlohmann::ordered_json sinr = nlohmann::ordered_json::array();
        for (int i = 0; i < rep.achieved_sinr.size(); ++i) sinr.push_back(rep.achieved_sinr(i));
        j["achieved_sinr"] = std::move(sinr);
        j["total_power"] = rep.total;
        j["feasible"] = rep.feasible;
        out << j.dump() << '\n';
      }
      return 0;
    }
  } catch (const MismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMismatch;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
