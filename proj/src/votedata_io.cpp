#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cfbench/errors.hpp"
#include "cfbench/votedata.hpp"

namespace cfbench {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<long long> parse_integer(const std::string& text) {
  const std::string s = trim(text);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    return std::nullopt;
  return value;
}

std::optional<double> parse_real(const std::string& text) {
  const std::string s = trim(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    return std::nullopt;
  return value;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return in;
}

}  // namespace

VoteDatabase read_msweb(std::istream& in,
                        std::map<std::string, std::string>* titles) {
  VoteDatabaseBuilder builder(VoteScale::implicit_scale());
  std::map<std::string, bool> declared;
  std::optional<std::string> current_user;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string tag = trim(fields[0]);
    if (tag == "A") {
      if (fields.size() < 2) throw ParseError("attribute line without an id", line_no);
      const auto id = parse_integer(fields[1]);
      if (!id) throw ParseError("attribute id is not an integer", line_no);
      const std::string item = std::to_string(*id);
      declared[item] = true;
      builder.declare_item(item);
      if (titles && fields.size() >= 4) (*titles)[item] = fields[3];
    } else if (tag == "C") {
      if (fields.size() < 2) throw ParseError("case line without an id", line_no);
      std::string user = trim(fields[1]);
      if (user.empty()) throw ParseError("case line with an empty id", line_no);
      current_user = std::move(user);
    } else if (tag == "V") {
      if (!current_user) throw ParseError("visit line before any case line", line_no);
      if (fields.size() < 2) throw ParseError("visit line without a vroot", line_no);
      const auto id = parse_integer(fields[1]);
      if (!id) throw ParseError("visit vroot is not an integer", line_no);
      const std::string item = std::to_string(*id);
      if (!declared.count(item))
        throw ParseError("visit to undeclared vroot " + item, line_no);
      builder.add(*current_user, item, 1.0);
    } else if (tag == "I" || tag == "T" || tag == "N") {
      // header records carry no votes
    } else {
      throw ParseError("unknown record type '" + tag + "'", line_no);
    }
  }
  return builder.build();
}

VoteDatabase load_msweb(const std::string& path,
                        std::map<std::string, std::string>* titles) {
  auto in = open_input(path);
  return read_msweb(in, titles);
}

VoteDatabase read_votes_csv(std::istream& in, const VoteScale& scale,
                            std::vector<std::string>* warnings) {
  scale.validate();
  VoteDatabaseBuilder builder(scale);
  std::string line;
  long line_no = 0;
  bool any_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw ParseError("expected 3 columns user,item,vote", line_no);
    const auto vote = parse_real(fields[2]);
    if (!vote) {
      if (!any_row && line_no == 1) continue;  // header
      throw ParseError("vote '" + fields[2] + "' is not a number", line_no);
    }
    any_row = true;
    if (!scale.contains(*vote) || (scale.implicit && *vote != 1.0))
      throw ParseError("vote " + trim(fields[2]) + " outside the scale", line_no);
    const std::string user = trim(fields[0]);
    const std::string item = trim(fields[1]);
    if (user.empty() || item.empty()) throw ParseError("empty user or item id", line_no);
    if (!builder.add(user, item, *vote) && warnings)
      warnings->push_back("line " + std::to_string(line_no) + ": duplicate vote by " +
                          user + " on " + item + "; keeping the last value");
  }
  if (!any_row) throw DataError("empty vote database");
  return builder.build();
}

VoteDatabase load_votes_csv(const std::string& path, const VoteScale& scale,
                            std::vector<std::string>* warnings) {
  auto in = open_input(path);
  return read_votes_csv(in, scale, warnings);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_votes_csv(const VoteDatabase& db, std::ostream& out) {
  out << "user,item,vote\n";
  char buffer[32];
  for (int u = 0; u < db.user_count(); ++u) {
    for (const Vote& v : db.votes(u)) {
      auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v.value);
      (void)ec;
      out << csv_field(db.user_id(u)) << ',' << csv_field(db.item_id(v.item)) << ','
          << std::string_view(buffer, end - buffer) << '\n';
    }
  }
}

}  // namespace cfbench
