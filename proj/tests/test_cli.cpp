#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "noma/dataset.hpp"

#ifndef NOMA_CLI_PATH
#error "NOMA_CLI_PATH must be defined by the build"
#endif

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("noma_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const char* name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NOMA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char ch : text)
    if (ch == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("gen-data writes the requested sample count, reruns byte-identical") {
  TempDir dir;
  const std::string out = dir.file("ds.jsonl");
  const std::string args =
      "gen-data --count 6 --n 2 --k 2 --sigma2 0.1 --gamma-db 5 --seed 42 --out " + out;
  REQUIRE(run_cli(args) == 0);
  const auto samples = noma::load_dataset(out);
  REQUIRE(samples.size() == 6);
  for (const auto& s : samples) {
    CHECK(s.channel.n == 2);
    CHECK(s.channel.k == 2);
    CHECK(s.seed == 42);
  }
  const std::string bytes = read_file(out);

  const std::string out2 = dir.file("ds2.jsonl");
  REQUIRE(run_cli("gen-data --count 6 --n 2 --k 2 --sigma2 0.1 --gamma-db 5 --seed 42 --out " +
                  out2) == 0);
  CHECK(read_file(out2) == bytes);
}

TEST_CASE("usage errors exit with code 2") {
  TempDir dir;
  CHECK(run_cli("gen-data --count 0 --seed 1 --out " + dir.file("x.jsonl")) == 2);
  CHECK(run_cli("train --encoding tcnn --seed 1 --out " + dir.file("m.json")) == 2);  // no --data
  CHECK(run_cli("no-such-subcommand") == 2);
}

TEST_CASE("train/predict/eval/bench round trip at toy scale") {
  TempDir dir;
  const std::string ds = dir.file("train.jsonl");
  REQUIRE(run_cli("gen-data --count 40 --n 2 --k 2 --sigma2 0.1 --gamma-db 5 --seed 7 --out " +
                  ds) == 0);

  const std::string model = dir.file("tcnn.json");
  const std::string curve = dir.file("curve.csv");
  REQUIRE(run_cli("train --data " + ds +
                  " --encoding tcnn --epochs 2 --batch 8 --lr 0.001 --seed 9 --out " + model +
                  " --curve " + curve) == 0);
  CHECK(fs::exists(model));
  // learning curve: header + 2 epochs
  CHECK(line_count(read_file(curve)) == 3);

  const std::string pred = dir.file("pred.jsonl");
  REQUIRE(run_cli("predict --model " + model + " --channel " + ds + " --out " + pred) == 0);
  CHECK(line_count(read_file(pred)) == 40);

  const std::string pc = dir.file("power.csv");
  REQUIRE(run_cli("eval --test " + ds + " --models " + model + " --gammas 5 --out " + pc) == 0);
  // header + 4 methods (label, mrc, zf, tcnn)
  CHECK(line_count(read_file(pc)) == 5);

  const std::string tc = dir.file("timing.csv");
  REQUIRE(run_cli("bench --test " + ds + " --models " + model +
                  " --instances 30 --gamma-db 5 --out " + tc) == 0);
  // header + label + tcnn
  CHECK(line_count(read_file(tc)) == 3);
}

TEST_CASE("shape mismatches exit with code 4") {
  TempDir dir;
  const std::string ds22 = dir.file("ds22.jsonl");
  const std::string ds21 = dir.file("ds21.jsonl");
  REQUIRE(run_cli("gen-data --count 30 --n 2 --k 2 --sigma2 0.1 --gamma-db 5 --seed 1 --out " +
                  ds22) == 0);
  REQUIRE(run_cli("gen-data --count 5 --n 2 --k 1 --sigma2 0.1 --gamma-db 5 --seed 1 --out " +
                  ds21) == 0);

  const std::string model = dir.file("m.json");
  REQUIRE(run_cli("train --data " + ds22 +
                  " --encoding tcnn --epochs 1 --batch 8 --lr 0.001 --seed 2 --out " + model) ==
          0);
  // model trained on (2,2) against a (2,1) test set
  CHECK(run_cli("eval --test " + ds21 + " --models " + model + " --gammas 5 --out " +
                dir.file("p.csv")) == 4);
  CHECK(run_cli("predict --model " + model + " --channel " + ds21) == 4);
  // dataset too small to train at all
  CHECK(run_cli("train --data " + ds21 +
                " --encoding tcnn --epochs 1 --batch 8 --lr 0.001 --seed 2 --out " +
                dir.file("m2.json")) == 4);
}
