#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cfbench/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Collaborative-filtering benchmark harness"};
  app.require_subcommand(1);

  std::optional<int> jobs;
  std::optional<std::string> output;

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run every protocol, algorithm and metric of a config");
  run->add_option("config", run_config, "Experiment config (JSON)")->required();
  run->add_option("--jobs", jobs, "Worker threads (default: available processors)");
  run->add_option("--output", output, "Output directory (overrides the config)");

  std::string report_path, format = "text";
  auto* report = app.add_subcommand("report", "Render a report file as a table");
  report->add_option("path", report_path, "Report or summary JSON")->required();
  report->add_option("--format", format, "text, csv or md");

  std::string ingest_format, ingest_input, ingest_out;
  std::optional<std::string> scale;
  auto* ingest = app.add_subcommand("ingest", "Normalize a dataset to a votes CSV");
  ingest->add_option("format", ingest_format, "msweb or votes_csv")->required();
  ingest->add_option("path", ingest_input, "Input file")->required();
  ingest->add_option("--out", ingest_out, "Output CSV")->required();
  ingest->add_option("--scale", scale, "implicit or min:max:neutral (votes_csv only)");

  std::string train_config, only;
  auto* train = app.add_subcommand("train", "Train and cache model-based algorithms");
  train->add_option("config", train_config, "Experiment config (JSON)")->required();
  train->add_option("--only", only, "bc or bn")->required();
  train->add_option("--jobs", jobs, "Worker threads");
  train->add_option("--output", output, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cfbench::kExitUsage;
  }

  cfbench::RunOverrides overrides;
  overrides.jobs = jobs;
  if (output) overrides.output = *output;

  if (run->parsed()) return cfbench::cmd_run(run_config, overrides, std::cout, std::cerr);
  if (report->parsed()) return cfbench::cmd_report(report_path, format, std::cout, std::cerr);
  if (ingest->parsed())
    return cfbench::cmd_ingest(ingest_format, ingest_input, ingest_out, scale, std::cout,
                               std::cerr);
  return cfbench::cmd_train(train_config, only, overrides, std::cout, std::cerr);
}
