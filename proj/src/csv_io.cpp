#include "balsam/csv_io.hpp"

#include "balsam/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace balsam {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool is_missing(const std::string& text) {
  const std::string t = trim(text);
  return t.empty() || t == "NA" || t == "NaN" || t == "nan" || t == ".";
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

Table parse_table(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      t.rows.push_back(std::move(fields));
      t.line_numbers.push_back(number);
    }
  }
  return t;
}

int column(const Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  return it == t.header.end() ? -1 : static_cast<int>(it - t.header.begin());
}

std::string number_text(double v) { return fmt::format("{}", v); }

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

std::vector<SubjectRecord> parse_dataset(const std::string& longitudinal_text,
                                         const std::string& survival_text,
                                         const IngestOptions& options, IngestReport* report) {
  std::vector<std::string> problems;
  const Table surv = parse_table(survival_text);
  const Table lon = parse_table(longitudinal_text);

  const int c_id = column(surv, "id"), c_t = column(surv, "t"), c_delta = column(surv, "delta");
  if (c_id < 0 || c_t < 0 || c_delta < 0) {
    throw DataError("survival.csv header must contain id, t and delta");
  }
  std::vector<int> cov_cols;
  std::vector<std::string> cov_names;
  if (options.covariate_columns.empty()) {
    for (int c = 0; c < static_cast<int>(surv.header.size()); ++c) {
      if (c == c_id || c == c_t || c == c_delta) continue;
      cov_cols.push_back(c);
      cov_names.push_back(surv.header[static_cast<std::size_t>(c)]);
    }
  } else {
    for (const auto& name : options.covariate_columns) {
      const int c = column(surv, name);
      if (c < 0) throw DataError(fmt::format("survival.csv has no covariate column '{}'", name));
      cov_cols.push_back(c);
      cov_names.push_back(name);
    }
  }
  const int l_id = column(lon, "id"), l_time = column(lon, "time"), l_z = column(lon, "z");
  if (l_id < 0 || l_time < 0 || l_z < 0) {
    throw DataError("longitudinal.csv header must contain id, time and z");
  }

  std::vector<SubjectRecord> subjects;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < surv.rows.size(); ++r) {
    const auto& row = surv.rows[r];
    const int line = surv.line_numbers[r];
    if (row.size() != surv.header.size()) {
      problems.push_back(fmt::format("survival.csv row {}: expected {} fields, found {}", line,
                                     surv.header.size(), row.size()));
      continue;
    }
    SubjectRecord s;
    s.id = row[static_cast<std::size_t>(c_id)];
    if (s.id.empty()) problems.push_back(fmt::format("survival.csv row {}: empty id", line));
    if (!parse_double(row[static_cast<std::size_t>(c_t)], s.t) || !(s.t > 0.0)) {
      problems.push_back(fmt::format("survival.csv row {}: t must be a number > 0", line));
    }
    double delta = -1.0;
    if (!parse_double(row[static_cast<std::size_t>(c_delta)], delta) || (delta != 0.0 && delta != 1.0)) {
      problems.push_back(fmt::format("survival.csv row {}: delta must be 0 or 1", line));
    }
    s.delta = delta == 1.0 ? 1 : 0;
    s.x.resize(static_cast<Eigen::Index>(cov_cols.size()));
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      double v = 0.0;
      if (!parse_double(row[static_cast<std::size_t>(cov_cols[k])], v)) {
        problems.push_back(fmt::format("survival.csv row {}: covariate '{}' is not a number", line, cov_names[k]));
      }
      s.x[static_cast<Eigen::Index>(k)] = v;
    }
    if (index.count(s.id)) {
      problems.push_back(fmt::format("survival.csv row {}: duplicate id '{}'", line, s.id));
      continue;
    }
    index[s.id] = subjects.size();
    subjects.push_back(std::move(s));
  }

  int dropped = 0;
  int measurements = 0;
  for (std::size_t r = 0; r < lon.rows.size(); ++r) {
    const auto& row = lon.rows[r];
    const int line = lon.line_numbers[r];
    if (row.size() != lon.header.size()) {
      problems.push_back(fmt::format("longitudinal.csv row {}: expected {} fields, found {}", line,
                                     lon.header.size(), row.size()));
      continue;
    }
    const std::string& id = row[static_cast<std::size_t>(l_id)];
    const auto it = index.find(id);
    if (it == index.end()) {
      problems.push_back(fmt::format("longitudinal.csv row {}: id '{}' does not appear in survival.csv", line, id));
      continue;
    }
    if (is_missing(row[static_cast<std::size_t>(l_z)])) {
      ++dropped;
      continue;
    }
    auto& s = subjects[it->second];
    double time = 0.0, z = 0.0;
    if (!parse_double(row[static_cast<std::size_t>(l_time)], time)) {
      problems.push_back(fmt::format("longitudinal.csv row {}: time is not a number", line));
      continue;
    }
    if (!parse_double(row[static_cast<std::size_t>(l_z)], z)) {
      problems.push_back(fmt::format("longitudinal.csv row {}: z is not a number", line));
      continue;
    }
    if (time < 0.0 || time > s.t + 1e-9) {
      problems.push_back(fmt::format("longitudinal.csv row {}: time {} outside [0, t={}] of subject '{}'",
                                     line, time, s.t, id));
      continue;
    }
    if (!s.times.empty() && !(time > s.times.back())) {
      problems.push_back(fmt::format("longitudinal.csv row {}: times of subject '{}' are not strictly increasing",
                                     line, id));
      continue;
    }
    if (options.sqrt_transform) {
      if (z < 0.0) {
        problems.push_back(fmt::format("longitudinal.csv row {}: negative z cannot be square-rooted", line));
        continue;
      }
      z = std::sqrt(z);
    }
    s.times.push_back(time);
    s.z.push_back(z);
    ++measurements;
  }

  if (!problems.empty()) {
    std::string message = fmt::format("{} ingestion error(s):", problems.size());
    const std::size_t shown = std::min<std::size_t>(problems.size(), 50);
    for (std::size_t k = 0; k < shown; ++k) message += "\n  " + problems[k];
    if (shown < problems.size()) message += fmt::format("\n  ... and {} more", problems.size() - shown);
    throw DataError(message);
  }
  if (subjects.empty()) throw DataError("survival.csv has no subjects");
  if (report) {
    report->subjects = static_cast<int>(subjects.size());
    report->measurements = measurements;
    report->dropped_missing = dropped;
    report->covariate_names = cov_names;
  }
  return subjects;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<SubjectRecord> read_dataset(const std::string& longitudinal_path,
                                        const std::string& survival_path,
                                        const IngestOptions& options, IngestReport* report) {
  return parse_dataset(read_file(longitudinal_path), read_file(survival_path), options, report);
}

std::string longitudinal_csv(const std::vector<SubjectRecord>& subjects) {
  std::string out = "id,time,z\n";
  for (const auto& s : subjects) {
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      out += fmt::format("{},{},{}\n", s.id, number_text(s.times[j]), number_text(s.z[j]));
    }
  }
  return out;
}

std::string survival_csv(const std::vector<SubjectRecord>& subjects,
                         const std::vector<std::string>& covariate_names) {
  std::string out = "id,t,delta";
  const Eigen::Index p = subjects.empty() ? 0 : subjects.front().x.size();
  for (Eigen::Index k = 0; k < p; ++k) {
    out += "," + (static_cast<std::size_t>(k) < covariate_names.size()
                      ? covariate_names[static_cast<std::size_t>(k)]
                      : fmt::format("x{}", k + 1));
  }
  out += "\n";
  for (const auto& s : subjects) {
    out += fmt::format("{},{},{}", s.id, number_text(s.t), s.delta);
    for (Eigen::Index k = 0; k < s.x.size(); ++k) out += "," + number_text(s.x[k]);
    out += "\n";
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out << content;
    out.flush();
    if (!out) throw Error(fmt::format("failed writing '{}'", tmp.string()));
  }
  fs::rename(tmp, target);
}

}  // namespace balsam
