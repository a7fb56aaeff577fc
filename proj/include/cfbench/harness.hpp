#ifndef CFBENCH_HARNESS_HPP_
#define CFBENCH_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfbench/eval.hpp"
#include "cfbench/votedata.hpp"
#include "json.hpp"

namespace cfbench {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2, kExitData = 3 };

struct DatasetSpec {
  /// "msweb" or "votes_csv".
  std::string format;
  /// Either path (split by user) or train + test.
  std::optional<std::filesystem::path> path;
  std::optional<std::filesystem::path> train;
  std::optional<std::filesystem::path> test;
  VoteScale scale;
  double test_fraction = 0.3;
  std::uint64_t split_seed = 0;
  /// Model-based algorithms train on the k most voted items only.
  std::optional<int> top_k;
  /// Training users with fewer votes are dropped.
  int min_votes = 1;
};

struct AlgorithmSpec {
  std::string name;
  /// "popularity", "memory", "cluster" or "bayesnet".
  std::string type;
  /// The algorithm's JSON object, as written in the config.
  nlohmann::json params;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<Protocol> protocols;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<MetricKind> metrics;
  RankedScoringConfig ranked;
  double confidence = 0.9;
  std::uint64_t seed = 0;
  std::filesystem::path output;
  std::optional<int> jobs;
};

/// Parses and validates a config document. Relative paths resolve against
/// base_dir. ConfigError names the offending key.
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct LoadedData {
  VoteDatabase train;
  VoteDatabase test;
  std::size_t dropped_test_votes = 0;
};

/// DataError (or ParseError) when a dataset cannot be read.
LoadedData load_dataset(const DatasetSpec& spec);

/// FNV-1a over the bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// Content hash of a training database plus an algorithm's parameters.
std::uint64_t model_cache_key(const VoteDatabase& train, const AlgorithmSpec& spec);

struct RunOverrides {
  std::optional<int> jobs;
  std::optional<std::filesystem::path> output;
};

int cmd_run(const std::filesystem::path& config, const RunOverrides& overrides,
            std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& report, const std::string& format,
               std::ostream& out, std::ostream& err);
int cmd_ingest(const std::string& format, const std::filesystem::path& input,
               const std::filesystem::path& output, const std::optional<std::string>& scale,
               std::ostream& out, std::ostream& err);
/// Trains (or refreshes the cache of) the model-based algorithms of one
/// type: "bc" or "bn".
int cmd_train(const std::filesystem::path& config, const std::string& only,
              const RunOverrides& overrides, std::ostream& out, std::ostream& err);

/// Reports stored in a report file: a single report or a report set.
std::vector<ExperimentReport> read_reports(const std::filesystem::path& path);

}  // namespace cfbench

#endif  // CFBENCH_HARNESS_HPP_
