#include <algorithm>
#include <atomic>
#include <chrono>
#include <sstream>
#include <thread>

#include "cfbench/errors.hpp"
#include "cfbench/eval.hpp"

namespace cfbench {

Eigen::MatrixXd ExperimentReport::block_scores() const {
  if (metric == MetricKind::Deviation || scores.rows() == 0) return scores;
  double total_max = 0.0;
  for (double m : max_utility) total_max += m;
  return scores * (100.0 * static_cast<double>(scores.rows()) / total_max);
}

namespace {

struct CaseOutcome {
  std::vector<double> scores;
  std::vector<std::optional<double>> usage;
  std::string failure;
};

template <typename Fn>
void parallel_for(int count, int jobs, Fn&& fn) {
  jobs = std::clamp(jobs, 1, std::max(1, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : workers) t.join();
}

}  // namespace

ExperimentReport run_experiment(const VoteDatabase& train, std::span<const ActiveCase> cases,
                                std::span<const NamedPredictor> algorithms, MetricKind metric,
                                const ExperimentOptions& options) {
  if (algorithms.empty()) throw DomainError("run_experiment: no algorithms");
  if (cases.empty()) throw DataError("run_experiment: no test cases");
  options.ranked.validate();
  const int algo_count = static_cast<int>(algorithms.size());
  for (const ActiveCase& c : cases) {
    for (const Vote& v : c.observed)
      if (v.item < 0 || v.item >= train.item_count())
        throw DomainError("run_experiment: case item outside the training universe");
    for (const Vote& v : c.targets)
      if (v.item < 0 || v.item >= train.item_count())
        throw DomainError("run_experiment: case item outside the training universe");
  }

  ExperimentReport report;
  report.protocol = options.protocol;
  report.metric = metric;
  report.seed = options.seed;
  report.confidence = options.confidence;
  report.ranked = options.ranked;
  for (const auto& a : algorithms) report.algorithms.push_back(a.name);

  const int case_count = static_cast<int>(cases.size());
  std::vector<char> scorable(case_count, 0);
  std::vector<double> max_util(case_count, 0.0);
  for (int i = 0; i < case_count; ++i) {
    if (cases[i].targets.empty()) continue;
    if (metric == MetricKind::Ranked) {
      max_util[i] = max_ranked_utility(cases[i].targets, options.ranked);
      if (!(max_util[i] > 0.0)) continue;
    }
    scorable[i] = 1;
  }

  std::vector<CaseOutcome> outcomes(case_count);
  for (auto& o : outcomes) {
    o.scores.assign(algo_count, 0.0);
    o.usage.assign(algo_count, std::nullopt);
  }
  report.seconds.assign(algo_count, 0.0);
  for (int a = 0; a < algo_count; ++a) {
    const Predictor& predictor = *algorithms[a].predictor;
    const auto start = std::chrono::steady_clock::now();
    parallel_for(case_count, options.jobs, [&](int i) {
      if (!scorable[i] || !outcomes[i].failure.empty()) return;
      const ActiveCase& c = cases[i];
      try {
        if (metric == MetricKind::Ranked) {
          outcomes[i].scores[a] = ranked_utility(predictor.rank(c), c.targets, options.ranked);
        } else {
          std::vector<int> items;
          std::vector<double> actual;
          for (const Vote& v : c.targets) {
            items.push_back(v.item);
            actual.push_back(v.value);
          }
          outcomes[i].scores[a] = *absolute_deviation(predictor.predict(c, items), actual);
        }
        outcomes[i].usage[a] = predictor.evidence_usage(c);
      } catch (const std::exception& e) {
        outcomes[i].failure = algorithms[a].name + ": " + e.what();
      }
    });
    report.seconds[a] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  std::vector<int> kept;
  for (int i = 0; i < case_count; ++i) {
    if (!scorable[i]) {
      ++report.excluded_cases;
    } else if (!outcomes[i].failure.empty()) {
      report.dropped.push_back(cases[i].user + ": " + outcomes[i].failure);
    } else {
      kept.push_back(i);
    }
  }
  if (kept.empty()) throw DataError("run_experiment: no scorable test cases");

  report.scores.resize(static_cast<Eigen::Index>(kept.size()), algo_count);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const int i = kept[r];
    report.case_users.push_back(cases[i].user);
    if (metric == MetricKind::Ranked) report.max_utility.push_back(max_util[i]);
    for (int a = 0; a < algo_count; ++a) report.scores(static_cast<Eigen::Index>(r), a) = outcomes[i].scores[a];
  }

  for (int a = 0; a < algo_count; ++a) {
    const Eigen::VectorXd col = report.scores.col(a);
    if (metric == MetricKind::Ranked)
      report.aggregates.push_back(normalized_ranked_score(
          std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), report.max_utility));
    else
      report.aggregates.push_back(col.mean());

    double usage = 0.0;
    int counted = 0;
    for (int i : kept)
      if (outcomes[i].usage[a]) {
        usage += *outcomes[i].usage[a];
        ++counted;
      }
    report.evidence_usage.push_back(counted ? std::optional<double>(usage / counted) : std::nullopt);
  }

  if (algo_count >= 2 && report.case_count() >= 2)
    report.required_difference =
        bonferroni_required_difference(report.block_scores(), options.confidence);
  return report;
}

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["format"] = "cfbench-report";
  j["version"] = 1;
  j["protocol"] = report.protocol;
  j["metric"] = to_string(report.metric);
  j["seed"] = report.seed;
  j["confidence"] = report.confidence;
  if (report.metric == MetricKind::Ranked)
    j["ranked"] = {{"half_life", report.ranked.half_life}, {"neutral", report.ranked.neutral}};
  j["algorithms"] = report.algorithms;
  j["aggregates"] = report.aggregates;
  j["required_difference"] = report.required_difference
                                 ? nlohmann::json(*report.required_difference)
                                 : nlohmann::json(nullptr);
  j["case_count"] = report.case_count();
  j["excluded_cases"] = report.excluded_cases;
  j["dropped"] = report.dropped;
  auto& usage = j["evidence_usage"] = nlohmann::json::array();
  for (const auto& u : report.evidence_usage)
    usage.push_back(u ? nlohmann::json(*u) : nlohmann::json(nullptr));
  auto& rows = j["cases"] = nlohmann::json::array();
  for (int i = 0; i < report.case_count(); ++i) {
    nlohmann::json row;
    row["user"] = report.case_users[i];
    std::vector<double> s(report.scores.cols());
    for (Eigen::Index a = 0; a < report.scores.cols(); ++a) s[a] = report.scores(i, a);
    row["scores"] = std::move(s);
    if (report.metric == MetricKind::Ranked) row["max_utility"] = report.max_utility[i];
    rows.push_back(std::move(row));
  }
  return j;
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cfbench-report" || j.value("version", 0) != 1)
    throw ParseError("not a version-1 report document", 0);
  ExperimentReport r;
  r.protocol = j.at("protocol").get<std::string>();
  r.metric = parse_metric(j.at("metric").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.confidence = j.at("confidence").get<double>();
  if (j.contains("ranked")) {
    r.ranked.half_life = j["ranked"].at("half_life").get<double>();
    r.ranked.neutral = j["ranked"].at("neutral").get<double>();
  }
  r.algorithms = j.at("algorithms").get<std::vector<std::string>>();
  r.aggregates = j.at("aggregates").get<std::vector<double>>();
  if (!j.at("required_difference").is_null())
    r.required_difference = j["required_difference"].get<double>();
  r.excluded_cases = j.at("excluded_cases").get<int>();
  r.dropped = j.at("dropped").get<std::vector<std::string>>();
  for (const auto& u : j.at("evidence_usage"))
    r.evidence_usage.push_back(u.is_null() ? std::nullopt : std::optional<double>(u.get<double>()));
  const auto& rows = j.at("cases");
  const auto algos = static_cast<Eigen::Index>(r.algorithms.size());
  if (r.aggregates.size() != r.algorithms.size())
    throw ParseError("report: one aggregate per algorithm required", 0);
  r.scores.resize(static_cast<Eigen::Index>(rows.size()), algos);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.case_users.push_back(rows[i].at("user").get<std::string>());
    const auto s = rows[i].at("scores").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(s.size()) != algos)
      throw ParseError("report: case row has the wrong number of scores", 0);
    for (Eigen::Index a = 0; a < algos; ++a) r.scores(static_cast<Eigen::Index>(i), a) = s[a];
    if (r.metric == MetricKind::Ranked) r.max_utility.push_back(rows[i].at("max_utility").get<double>());
  }
  return r;
}

TableFormat parse_table_format(const std::string& text) {
  if (text == "text") return TableFormat::Text;
  if (text == "csv") return TableFormat::Csv;
  if (text == "md" || text == "markdown") return TableFormat::Markdown;
  throw ConfigError("unknown report format '" + text + "' (expected text, csv or md)");
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string render_table(std::span<const ExperimentReport> reports, TableFormat format) {
  if (reports.empty()) throw DomainError("render_table: no reports");
  const auto& algos = reports.front().algorithms;
  const MetricKind metric = reports.front().metric;
  for (const auto& r : reports)
    if (r.algorithms != algos || r.metric != metric)
      throw DomainError("render_table: reports disagree on algorithms or metric");
  const int decimals = metric == MetricKind::Ranked ? 2 : 3;

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Algorithm"};
  for (const auto& r : reports) header.push_back(r.protocol.empty() ? "-" : r.protocol);
  rows.push_back(header);
  for (std::size_t a = 0; a < algos.size(); ++a) {
    std::vector<std::string> row{algos[a]};
    for (const auto& r : reports) row.push_back(format_fixed(r.aggregates[a], decimals));
    rows.push_back(std::move(row));
  }
  std::vector<std::string> rd{"RD"};
  for (const auto& r : reports)
    rd.push_back(r.required_difference ? format_fixed(*r.required_difference, decimals) : "n/a");
  rows.push_back(std::move(rd));

  std::ostringstream out;
  const std::size_t cols = header.size();
  if (format == TableFormat::Csv) {
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << csv_field(row[c]);
      out << '\n';
    }
    return out.str();
  }
  std::vector<std::size_t> width(cols, 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < cols; ++c) width[c] = std::max(width[c], row[c].size());
  auto cell = [&](const std::string& s, std::size_t c) {
    const std::string pad(width[c] - s.size(), ' ');
    return c == 0 ? s + pad : pad + s;
  };
  if (format == TableFormat::Markdown) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out << '|';
      for (std::size_t c = 0; c < cols; ++c) out << ' ' << cell(rows[r][c], c) << " |";
      out << '\n';
      if (r == 0) {
        out << '|';
        for (std::size_t c = 0; c < cols; ++c)
          out << (c == 0 ? ":" : "-") << std::string(width[c], '-') << (c == 0 ? "-|" : ":|");
        out << '\n';
      }
    }
    return out.str();
  }
  out << (metric == MetricKind::Ranked ? "Ranked scoring (higher is better)"
                                        : "Average absolute deviation (lower is better)")
      << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (r == rows.size() - 1) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < cols; ++c) total += width[c] + (c ? 2 : 0);
      out << std::string(total, '-') << '\n';
    }
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "  " : "") << cell(rows[r][c], c);
    out << '\n';
  }
  return out.str();
}

}  // namespace cfbench
