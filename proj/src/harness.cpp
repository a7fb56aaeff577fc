#include "cfbench/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "cfbench/bayesnet.hpp"
#include "cfbench/cluster.hpp"
#include "cfbench/errors.hpp"
#include "cfbench/memory.hpp"
#include "cfbench/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cfbench {

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path existing_file(const json& obj, const char* key, const std::string& where,
                       const fs::path& base) {
  if (!obj.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a path");
  fs::path p = resolve(base, obj[key].get<std::string>());
  if (!fs::is_regular_file(p))
    throw ConfigError(where + "." + key + ": file not found: " + p.string());
  return p;
}

AlgorithmSpec parse_algorithm(const json& j, const VoteScale& scale, std::size_t index) {
  const std::string where = "algorithms[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  AlgorithmSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.type = j.at("type").get<std::string>();
  spec.params = j;
  try {
    if (spec.type == "memory") {
      memory_config_from_json(j, scale);
    } else if (spec.type == "cluster") {
      if (j.value("max_classes", 1) < 1) throw ConfigError("max_classes must be >= 1");
    } else if (spec.type == "bayesnet") {
      LearnConfig cfg;
      cfg.structure_penalty = j.value("structure_penalty", cfg.structure_penalty);
      cfg.equivalent_sample_size = j.value("ess", cfg.equivalent_sample_size);
      cfg.validate();
    } else if (spec.type != "popularity") {
      throw ConfigError("unknown algorithm type '" + spec.type + "'");
    }
  } catch (const ConfigError& e) {
    throw ConfigError(where + " (" + spec.name + "): " + e.what());
  }
  return spec;
}

std::optional<int> env_int(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string(name) + ": not an integer");
  }
}

EmOptions em_options(const json& p) {
  EmOptions o;
  o.tol = p.value("tol", o.tol);
  o.max_iter = p.value("max_iter", o.max_iter);
  o.restarts = p.value("restarts", o.restarts);
  o.prior_strength = p.value("prior_strength", o.prior_strength);
  o.noise_strength = p.value("noise_strength", o.noise_strength);
  return o;
}

LearnConfig learn_config(const json& p) {
  LearnConfig cfg;
  cfg.structure_penalty = p.value("structure_penalty", cfg.structure_penalty);
  cfg.equivalent_sample_size = p.value("ess", cfg.equivalent_sample_size);
  if (p.contains("max_parents") && !p["max_parents"].is_null())
    cfg.max_parents = p["max_parents"].get<int>();
  return cfg;
}

std::string hex16(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

std::string file_label(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

// A trained model-based algorithm: the model document plus deterministic
// training diagnostics, cached together.
struct TrainedModel {
  json model;
  json training;
};

class Session {
 public:
  Session(ExperimentConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log) {
    data_ = load_dataset(cfg_.dataset);
    if (cfg_.dataset.top_k) model_train_ = restrict_to_top_items(data_.train, *cfg_.dataset.top_k);
    log_ << "train: " << data_.train.user_count() << " users, " << data_.train.item_count()
         << " items, " << data_.train.vote_count() << " votes; test: " << data_.test.user_count()
         << " users\n";
  }

  const ExperimentConfig& config() const { return cfg_; }
  const LoadedData& data() const { return data_; }
  const VoteDatabase& model_train() const { return model_train_ ? *model_train_ : data_.train; }

  TrainedModel trained(const AlgorithmSpec& spec) {
    const std::uint64_t key = model_cache_key(model_train(), spec);
    const fs::path path =
        cfg_.output / "models" / (file_label(spec.name) + "-" + hex16(key) + ".json");
    if (fs::is_regular_file(path)) {
      try {
        json doc = read_json_file(path);
        log_ << spec.name << ": model cache hit " << path.filename().string() << "\n";
        return {doc.at("model"), doc.at("training")};
      } catch (const std::exception& e) {
        log_ << spec.name << ": ignoring unreadable cache entry (" << e.what() << ")\n";
      }
    }
    const std::uint64_t seed = mix_seed(cfg_.seed, fnv1a(spec.name));
    TrainedModel out;
    if (spec.type == "cluster") {
      const auto selection =
          select_cluster_model(model_train(), spec.params.value("max_classes", 25), seed,
                               em_options(spec.params));
      out.model = to_json(selection.best.model);
      json table = json::array();
      for (const auto& row : selection.table)
        table.push_back({{"classes", row.classes},
                         {"cs_score", row.cs_score},
                         {"objective", row.objective},
                         {"iterations", row.iterations},
                         {"converged", row.converged},
                         {"restarts", row.restarts},
                         {"non_monotone", row.non_monotone}});
      out.training = {{"classes", selection.best.model.num_classes()},
                      {"selection", table},
                      {"monotone", selection.best.report.monotone},
                      {"warnings", selection.best.report.warnings}};
    } else {
      const auto learned = learn_network(model_train(), learn_config(spec.params));
      const auto stats = network_statistics(learned.model);
      out.model = to_json(learned.model);
      out.training = {{"splits", learned.report.splits},
                      {"final_score", learned.report.score_trace.back()},
                      {"invariants_held", learned.report.invariants_held},
                      {"mean_parents", stats.mean_parents},
                      {"max_parents", stats.max_parents},
                      {"mean_leaves", stats.mean_leaves},
                      {"max_leaves", stats.max_leaves}};
      if (!learned.report.invariants_held)
        throw Error(spec.name + ": network search violated acyclicity or score monotonicity");
    }
    write_json(path, {{"model", out.model}, {"training", out.training}});
    log_ << spec.name << ": trained and cached " << path.filename().string() << "\n";
    return out;
  }

  std::unique_ptr<Predictor> predictor(const AlgorithmSpec& spec, json* training) {
    if (spec.type == "popularity") return std::make_unique<PopularityPredictor>(data_.train);
    if (spec.type == "memory")
      return std::make_unique<MemoryPredictor>(
          data_.train, memory_config_from_json(spec.params, data_.train.scale()));
    TrainedModel t = trained(spec);
    if (training) *training = t.training;
    if (spec.type == "cluster")
      return std::make_unique<ClusterPredictor>(cluster_model_from_json(t.model), data_.train);
    return std::make_unique<BayesNetPredictor>(bayes_net_from_json(t.model), data_.train);
  }

 private:
  ExperimentConfig cfg_;
  std::ostream& log_;
  LoadedData data_;
  std::optional<VoteDatabase> model_train_;
};

ExperimentConfig config_with_overrides(const fs::path& path, const RunOverrides& overrides) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (const char* out = std::getenv("CFBENCH_OUTPUT"); out && *out) cfg.output = out;
  if (auto jobs = env_int("CFBENCH_JOBS")) cfg.jobs = *jobs;
  if (overrides.output) cfg.output = *overrides.output;
  if (overrides.jobs) cfg.jobs = *overrides.jobs;
  if (cfg.jobs && *cfg.jobs < 1) throw ConfigError("jobs: must be >= 1");
  return cfg;
}

int effective_jobs(const ExperimentConfig& cfg) {
  if (cfg.jobs) return *cfg.jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

// Dataset failures surface as DataError whatever their original type.
template <typename Fn>
auto as_data_error(Fn&& fn) {
  try {
    return fn();
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(e.what());
  } catch (const std::ios_base::failure& e) {
    throw DataError(e.what());
  }
}

json report_set(const std::vector<ExperimentReport>& reports) {
  json set = {{"format", "cfbench-report-set"}, {"version", 1}, {"reports", json::array()}};
  for (const auto& r : reports) set["reports"].push_back(to_json(r));
  return set;
}

std::string render_grouped(const std::vector<ExperimentReport>& reports, TableFormat format) {
  std::string out;
  for (MetricKind metric : {MetricKind::Ranked, MetricKind::Deviation}) {
    std::vector<ExperimentReport> group;
    for (const auto& r : reports)
      if (r.metric == metric) group.push_back(r);
    if (group.empty()) continue;
    if (!out.empty()) out += "\n";
    out += render_table(group, format);
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  try {
    ExperimentConfig cfg;
    const json& ds = j.at("dataset");
    cfg.dataset.format = ds.at("format").get<std::string>();
    if (cfg.dataset.format == "msweb") {
      cfg.dataset.scale = VoteScale::implicit_scale();
    } else if (cfg.dataset.format == "votes_csv") {
      cfg.dataset.scale = ds.contains("scale") ? ds["scale"].get<VoteScale>()
                                               : VoteScale::implicit_scale();
      try {
        cfg.dataset.scale.validate();
      } catch (const Error& e) {
        throw ConfigError(std::string("dataset.scale: ") + e.what());
      }
    } else {
      throw ConfigError("dataset.format: unknown format '" + cfg.dataset.format + "'");
    }
    if (ds.contains("path")) {
      cfg.dataset.path = existing_file(ds, "path", "dataset", base_dir);
      const json split = ds.value("split", json::object());
      cfg.dataset.test_fraction = split.value("test_fraction", cfg.dataset.test_fraction);
      cfg.dataset.split_seed = split.value("seed", std::uint64_t{0});
      if (!(cfg.dataset.test_fraction > 0.0 && cfg.dataset.test_fraction < 1.0))
        throw ConfigError("dataset.split.test_fraction: must lie in (0, 1)");
    } else {
      cfg.dataset.train = existing_file(ds, "train", "dataset", base_dir);
      cfg.dataset.test = existing_file(ds, "test", "dataset", base_dir);
    }
    if (ds.contains("top_k") && !ds["top_k"].is_null()) {
      cfg.dataset.top_k = ds["top_k"].get<int>();
      if (*cfg.dataset.top_k < 1) throw ConfigError("dataset.top_k: must be >= 1");
    }
    cfg.dataset.min_votes = ds.value("min_votes", 1);

    for (const auto& p : j.at("protocols")) {
      try {
        cfg.protocols.push_back(Protocol::parse(p.get<std::string>()));
      } catch (const DomainError& e) {
        throw ConfigError(std::string("protocols: ") + e.what());
      }
    }
    if (cfg.protocols.empty()) throw ConfigError("protocols: at least one required");

    std::set<std::string> names;
    const auto& algos = j.at("algorithms");
    for (std::size_t i = 0; i < algos.size(); ++i) {
      cfg.algorithms.push_back(parse_algorithm(algos[i], cfg.dataset.scale, i));
      if (!names.insert(cfg.algorithms.back().name).second)
        throw ConfigError("algorithms: duplicate name '" + cfg.algorithms.back().name + "'");
    }
    if (cfg.algorithms.empty()) throw ConfigError("algorithms: at least one required");

    for (const auto& m : j.value("metrics", json::array({"ranked"})))
      cfg.metrics.push_back(parse_metric(m.get<std::string>()));
    if (cfg.metrics.empty()) throw ConfigError("metrics: at least one required");

    cfg.ranked.neutral = cfg.dataset.scale.neutral;
    if (j.contains("ranked")) {
      cfg.ranked.half_life = j["ranked"].value("half_life", cfg.ranked.half_life);
      cfg.ranked.neutral = j["ranked"].value("neutral", cfg.ranked.neutral);
    }
    try {
      cfg.ranked.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("ranked: ") + e.what());
    }
    cfg.confidence = j.value("confidence", cfg.confidence);
    if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0))
      throw ConfigError("confidence: must lie in (0, 1)");
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.output = resolve(base_dir, j.value("output", std::string("cfbench-out")));
    if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, fs::absolute(path).parent_path());
}

LoadedData load_dataset(const DatasetSpec& spec) {
  return as_data_error([&] {
    LoadedData out;
    auto load = [&](const fs::path& p) {
      if (spec.format == "msweb") return load_msweb(p.string());
      return load_votes_csv(p.string(), spec.scale);
    };
    if (spec.path) {
      UserSplit split = split_users(load(*spec.path), spec.test_fraction, spec.split_seed);
      out.train = std::move(split.train);
      out.test = std::move(split.test);
    } else {
      out.train = load(*spec.train);
      out.test = load(*spec.test);
    }
    if (spec.min_votes > 1) out.train = filter_min_votes(out.train, spec.min_votes);
    if (out.train.empty()) throw DataError("training set has no users");
    out.test = align_items(out.test, out.train.item_ids(), &out.dropped_test_votes);
    return out;
  });
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t model_cache_key(const VoteDatabase& train, const AlgorithmSpec& spec) {
  std::ostringstream data;
  write_votes_csv(train, data);
  json scale = train.scale();
  std::uint64_t h = fnv1a(data.str());
  h = fnv1a(scale.dump(), h);
  for (const auto& item : train.item_ids()) h = fnv1a(item + "\n", h);
  return fnv1a(spec.params.dump(), h);
}

std::vector<ExperimentReport> read_reports(const fs::path& path) {
  const json j = read_json_file(path);
  std::vector<ExperimentReport> out;
  try {
    if (j.value("format", "") == "cfbench-report-set") {
      for (const auto& r : j.at("reports")) out.push_back(report_from_json(r));
    } else {
      out.push_back(report_from_json(j));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return out;
}

int cmd_run(const fs::path& config, const RunOverrides& overrides, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = config_with_overrides(config, overrides);
    Session session(cfg, err);
    const VoteDatabase& train = session.data().train;
    const int jobs = effective_jobs(cfg);

    std::vector<std::unique_ptr<Predictor>> owned;
    std::vector<NamedPredictor> named;
    json training = json::object();
    for (const auto& spec : cfg.algorithms) {
      json info;
      owned.push_back(session.predictor(spec, &info));
      named.push_back({spec.name, owned.back().get()});
      if (!info.is_null()) training[spec.name] = info;
    }
    write_json(cfg.output / "training.json", training);

    std::vector<ExperimentReport> all;
    json timings = json::object();
    for (const Protocol& protocol : cfg.protocols) {
      const std::string pname = protocol.name();
      const std::uint64_t case_seed = mix_seed(cfg.seed, fnv1a(pname));
      const auto cases = as_data_error(
          [&] { return generate_active_cases(session.data().test, protocol, case_seed); });
      write_json(cfg.output / "splits" / (pname + ".json"),
                 split_manifest(session.data().test, protocol, case_seed, cases));
      std::vector<ExperimentReport> per_protocol;
      for (MetricKind metric : cfg.metrics) {
        ExperimentOptions options;
        options.ranked = cfg.ranked;
        options.confidence = cfg.confidence;
        options.jobs = jobs;
        options.seed = case_seed;
        options.protocol = pname;
        ExperimentReport report = run_experiment(train, cases, named, metric, options);
        for (const auto& line : report.dropped) err << pname << ": dropped case " << line << "\n";
        for (std::size_t a = 0; a < named.size(); ++a)
          timings[pname][to_string(metric)][named[a].name] = report.seconds[a];
        per_protocol.push_back(std::move(report));
      }
      write_json(cfg.output / ("report-" + file_label(pname) + ".json"), report_set(per_protocol));
      for (auto& r : per_protocol) all.push_back(std::move(r));
    }
    write_json(cfg.output / "summary.json", report_set(all));
    const std::string table = render_grouped(all, TableFormat::Text);
    write_text(cfg.output / "summary.txt", table);
    write_json(cfg.output / "timings.json", timings);
    out << table;
    return static_cast<int>(kExitOk);
  });
}

int cmd_report(const fs::path& report, const std::string& format, std::ostream& out,
               std::ostream& err) {
  TableFormat fmt;
  try {
    fmt = parse_table_format(format);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    out << render_grouped(read_reports(report), fmt);
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_ingest(const std::string& format, const fs::path& input, const fs::path& output,
               const std::optional<std::string>& scale_text, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    VoteScale scale = VoteScale::implicit_scale();
    if (scale_text && *scale_text != "implicit") {
      int lo = 0, hi = 0;
      double neutral = 0.0;
      char c1 = 0, c2 = 0;
      std::istringstream in(*scale_text);
      if (!(in >> lo >> c1 >> hi >> c2 >> neutral) || c1 != ':' || c2 != ':')
        throw ConfigError("--scale: expected 'implicit' or 'min:max:neutral'");
      scale = VoteScale::explicit_scale(lo, hi, neutral);
      try {
        scale.validate();
      } catch (const Error& e) {
        throw ConfigError(std::string("--scale: ") + e.what());
      }
    }
    if (format != "msweb" && format != "votes_csv")
      throw ConfigError("unknown ingest format '" + format + "' (expected msweb or votes_csv)");
    if (!fs::is_regular_file(input)) throw DataError("file not found: " + input.string());
    std::vector<std::string> warnings;
    const VoteDatabase db = as_data_error([&] {
      return format == "msweb" ? load_msweb(input.string())
                               : load_votes_csv(input.string(), scale, &warnings);
    });
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    std::ostringstream csv;
    write_votes_csv(db, csv);
    write_text(output, csv.str());
    out << "wrote " << db.vote_count() << " votes by " << db.user_count() << " users on "
        << db.item_count() << " items to " << output.string() << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_train(const fs::path& config, const std::string& only, const RunOverrides& overrides,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::string type;
    if (only == "bc")
      type = "cluster";
    else if (only == "bn")
      type = "bayesnet";
    else
      throw ConfigError("--only: expected bc or bn");
    const ExperimentConfig cfg = config_with_overrides(config, overrides);
    Session session(cfg, err);
    int trained = 0;
    for (const auto& spec : cfg.algorithms) {
      if (spec.type != type) continue;
      const TrainedModel t = session.trained(spec);
      out << spec.name << ": " << t.training.dump() << "\n";
      ++trained;
    }
    if (trained == 0) throw ConfigError("config has no " + type + " algorithm");
    return static_cast<int>(kExitOk);
  });
}

}  // namespace cfbench
