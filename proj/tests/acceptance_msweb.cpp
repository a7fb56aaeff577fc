#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <unistd.h>

#include "cfbench/harness.hpp"
#include "support/synthetic.hpp"

using namespace cfbench;
namespace fs = std::filesystem;

namespace {

constexpr int kSkip = 77;

// Directory holding anonymous-msweb.data and anonymous-msweb.test.
std::optional<fs::path> find_msweb() {
  std::vector<fs::path> candidates;
  if (const char* dir = std::getenv("CFBENCH_MSWEB_DIR"); dir && *dir) candidates.emplace_back(dir);
  candidates.push_back(fs::path(CFBENCH_SOURCE_DIR) / "data" / "msweb");
  for (const auto& dir : candidates)
    if (fs::is_regular_file(dir / "anonymous-msweb.data") &&
        fs::is_regular_file(dir / "anonymous-msweb.test"))
      return dir;
  return std::nullopt;
}

nlohmann::json experiment(const nlohmann::json& dataset, const fs::path& output) {
  using nlohmann::json;
  return {{"dataset", dataset},
          {"protocols", {"AllBut1"}},
          {"algorithms",
           json::array({{{"name", "BN"}, {"type", "bayesnet"}},
                        {{"name", "CR+"},
                         {"type", "memory"},
                         {"weight", "correlation"},
                         {"iuf", true},
                         {"default_voting", {{"d", 0}, {"k", 10000}}},
                         {"case_amp", {{"p", 2.5}}}},
                        {{"name", "VSIM"},
                         {"type", "memory"},
                         {"weight", "vector_similarity"},
                         {"default_voting", {{"d", 0}, {"k", 0}}}},
                        {{"name", "BC"}, {"type", "cluster"}, {"max_classes", 25}},
                        {{"name", "POP"}, {"type", "popularity"}}})},
          {"metrics", {"ranked"}},
          {"ranked", {{"half_life", 5}, {"neutral", 0}}},
          {"confidence", 0.9},
          {"seed", 1998},
          {"output", output.string()}};
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::optional<ExperimentReport> run(const nlohmann::json& config, const fs::path& dir) {
  const fs::path cfg = dir / "config.json";
  write_file(cfg, config.dump(2));
  std::ostringstream out;
  const int code = cmd_run(cfg, {}, out, std::cerr);
  if (code != kExitOk) {
    std::cout << "FAIL [1] harness run exited with " << code << std::endl;
    return std::nullopt;
  }
  std::cout << out.str();
  return read_reports(fs::path(config.at("output").get<std::string>()) / "report-AllBut1.json")
      .front();
}

bool check(bool ok, const std::string& what) {
  std::cout << (ok ? "PASS" : "FAIL") << " [1] " << what << std::endl;
  return ok;
}

int synthetic_timing(const fs::path& dir) {
  const auto data = testing::msweb_like(1);
  std::ostringstream train, test;
  write_votes_csv(data.train, train);
  write_votes_csv(data.test, test);
  write_file(dir / "train.csv", train.str());
  write_file(dir / "test.csv", test.str());
  const nlohmann::json dataset = {{"format", "votes_csv"},
                                  {"train", (dir / "train.csv").string()},
                                  {"test", (dir / "test.csv").string()}};
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run(experiment(dataset, dir / "out"), dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "synthetic MS Web-scale run (" << data.train.user_count() << " x "
            << data.train.item_count() << " train, " << data.test.user_count()
            << " test users): " << secs << " s" << std::endl;
  std::cout << "timings: " << (dir / "out" / "timings.json").string() << "\n"
            << std::ifstream(dir / "out" / "timings.json").rdbuf() << std::endl;
  return report ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const bool synthetic = argc > 1 && std::strcmp(argv[1], "--synthetic") == 0;
  const fs::path dir = fs::temp_directory_path() / ("cfbench-msweb-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{dir};

  if (synthetic) return synthetic_timing(dir);

  const auto data = find_msweb();
  if (!data) {
    std::cout << "SKIP [1] MS Web trend reproduction: anonymous-msweb.data/.test not found "
                 "(set CFBENCH_MSWEB_DIR or place them in data/msweb)"
              << std::endl;
    return kSkip;
  }
  const nlohmann::json dataset = {{"format", "msweb"},
                                  {"train", (*data / "anonymous-msweb.data").string()},
                                  {"test", (*data / "anonymous-msweb.test").string()}};
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run(experiment(dataset, dir / "out"), dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!report) return 1;

  std::map<std::string, double> r;
  for (std::size_t a = 0; a < report->algorithms.size(); ++a)
    r[report->algorithms[a]] = report->aggregates[a];
  bool ok = true;
  ok &= check(r["POP"] < r["BC"] && r["BC"] < r["VSIM"] && r["VSIM"] < r["CR+"],
              "ordering POP < BC < VSIM < CR+ (" + std::to_string(r["POP"]) + ", " +
                  std::to_string(r["BC"]) + ", " + std::to_string(r["VSIM"]) + ", " +
                  std::to_string(r["CR+"]) + ")");
  ok &= check(std::abs(r["CR+"] - 63.59) <= 4.0, "CR+ " + std::to_string(r["CR+"]) + " within 4.0 of 63.59");
  ok &= check(std::abs(r["POP"] - 49.77) <= 3.0, "POP " + std::to_string(r["POP"]) + " within 3.0 of 49.77");
  ok &= check(r["BN"] > r["POP"] && r["BN"] > r["VSIM"],
              "BN " + std::to_string(r["BN"]) + " beats POP and VSIM");
  ok &= check(secs <= 1800.0, "runtime " + std::to_string(secs) + " s within 30 minutes");
  return ok ? 0 : 1;
}
