#pragma once

// CSV reading and writing for datasets and posterior draws. Files must carry
// a header row; column roles are mapped by name.

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "survcheck/core.hpp"

namespace survcheck {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  }
  std::size_t at(const std::string& name) const {
    auto j = find(name);
    require(j.has_value(), "missing_column", "CSV has no column '" + name + "'");
    return *j;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace detail

inline double parse_double(const std::string& s) {
  if (s == "inf" || s == "Inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf" || s == "-Inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan" || s == "NaN" || s == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), "parse", "not a number: '" + s + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && p == s.data() + s.size()) return v;
  double d = parse_double(s);
  require(d == std::floor(d), "parse", "not an integer: '" + s + "'");
  return static_cast<std::int64_t>(d);
}

// Shortest round-trip representation.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty() || line[0] == '#') continue;
    auto fields = detail::split_csv_line(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    require(fields.size() == t.header.size(), "parse",
            "row has " + std::to_string(fields.size()) + " fields, header has " +
                std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  require(have_header, "parse", "CSV is empty (a header row is required)");
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "io", "cannot open '" + path + "'");
  return parse_csv(in);
}

struct ShortColumns {
  std::string subject_id = "subject_id";
  std::string entry_time = "entry_time";  // optional; 0 when absent
  std::string time = "time";
  std::string status = "status";
  std::string interval_lower = "interval_lower";  // optional; used by icens rows
  std::vector<std::string> covariates;  // empty: every other column
};

inline SurvivalDataset dataset_from_csv(const CsvTable& t, const ShortColumns& cols = {}) {
  SurvivalDataset d;
  const auto id = t.at(cols.subject_id);
  const auto time = t.at(cols.time);
  const auto status = t.at(cols.status);
  const auto entry = t.find(cols.entry_time);
  const auto lower = t.find(cols.interval_lower);
  std::vector<std::size_t> cov_idx;
  if (cols.covariates.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (j == id || j == time || j == status || (entry && j == *entry) || (lower && j == *lower))
        continue;
      cov_idx.push_back(j);
      d.covariate_names.push_back(t.header[j]);
    }
  } else {
    for (const auto& c : cols.covariates) {
      cov_idx.push_back(t.at(c));
      d.covariate_names.push_back(c);
    }
  }
  for (const auto& row : t.rows) {
    SurvivalRecord r;
    r.subject_id = parse_int(row[id]);
    r.time = parse_double(row[time]);
    r.status = parse_status(row[status]);
    if (entry) r.entry_time = parse_double(row[*entry]);
    if (r.status == Status::interval_censored) {
      require(lower.has_value() && !row[*lower].empty(), "parse",
              "interval-censored row needs an '" + cols.interval_lower + "' value");
      r.interval_bounds = std::make_pair(parse_double(row[*lower]), r.time);
    }
    for (auto j : cov_idx) r.covariates.push_back(parse_double(row[j]));
    d.records.push_back(std::move(r));
  }
  return d;
}

inline SurvivalDataset read_dataset(const std::string& path, const ShortColumns& cols = {}) {
  return dataset_from_csv(read_csv(path), cols);
}

inline void write_dataset(std::ostream& out, const SurvivalDataset& d) {
  bool any_interval = false;
  for (const auto& r : d.records) any_interval |= r.interval_bounds.has_value();
  out << "subject_id,entry_time,time,status";
  if (any_interval) out << ",interval_lower";
  for (const auto& n : d.covariate_names) out << ',' << n;
  out << '\n';
  for (const auto& r : d.records) {
    out << r.subject_id << ',' << format_double(r.entry_time) << ',' << format_double(r.time) << ','
        << to_string(r.status);
    if (any_interval)
      out << ',' << (r.interval_bounds ? format_double(r.interval_bounds->first) : std::string());
    for (double v : r.covariates) out << ',' << format_double(v);
    out << '\n';
  }
}

struct LongColumns {
  std::string subject_id = "subject_id";
  std::string interval_index = "interval_index";
  std::string outcome = "event";
  std::vector<std::string> time_dependent = {"AdjOn", "TimeSinceAdjStopped"};
};

inline LongDataset long_from_csv(const CsvTable& t, const LongColumns& cols = {}) {
  LongDataset d;
  const auto id = t.at(cols.subject_id);
  const auto k = t.at(cols.interval_index);
  const auto y = t.at(cols.outcome);
  std::vector<std::size_t> stat_idx, td_idx;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j == id || j == k || j == y) continue;
    const bool td = std::find(cols.time_dependent.begin(), cols.time_dependent.end(), t.header[j]) !=
                    cols.time_dependent.end();
    (td ? td_idx : stat_idx).push_back(j);
  }
  for (auto j : stat_idx) d.static_names.push_back(t.header[j]);
  for (auto j : td_idx) d.time_dependent_names.push_back(t.header[j]);
  for (const auto& row : t.rows) {
    LongRow r;
    r.subject_id = parse_int(row[id]);
    r.interval_index = static_cast<int>(parse_int(row[k]));
    r.outcome = static_cast<int>(parse_int(row[y]));
    for (auto j : stat_idx) r.covariates.push_back(parse_double(row[j]));
    for (auto j : td_idx) r.covariates.push_back(parse_double(row[j]));
    d.rows.push_back(std::move(r));
  }
  return d;
}

inline LongDataset read_long(const std::string& path, const LongColumns& cols = {}) {
  return long_from_csv(read_csv(path), cols);
}

inline void write_long(std::ostream& out, const LongDataset& d) {
  out << "subject_id,interval_index,event";
  for (const auto& n : d.covariate_names()) out << ',' << n;
  out << '\n';
  for (const auto& r : d.rows) {
    out << r.subject_id << ',' << r.interval_index << ',' << r.outcome;
    for (double v : r.covariates) out << ',' << format_double(v);
    out << '\n';
  }
}

// Draws CSV: header of parameter names, one row per draw, optional `chain`.
inline DrawsMatrix draws_from_csv(const CsvTable& t) {
  DrawsMatrix d;
  auto chain = t.find("chain");
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (chain && j == *chain) continue;
    idx.push_back(j);
    d.parameter_names.push_back(t.header[j]);
  }
  d.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t s = 0; s < t.rows.size(); ++s) {
    for (std::size_t p = 0; p < idx.size(); ++p)
      d.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(p)) =
          parse_double(t.rows[s][idx[p]]);
    if (chain) d.chain_ids.push_back(static_cast<int>(parse_int(t.rows[s][*chain])));
  }
  d.check();
  return d;
}

inline DrawsMatrix read_draws(const std::string& path) { return draws_from_csv(read_csv(path)); }

inline void write_draws(std::ostream& out, const DrawsMatrix& d) {
  if (!d.chain_ids.empty()) out << "chain,";
  for (std::size_t p = 0; p < d.parameter_names.size(); ++p)
    out << (p ? "," : "") << d.parameter_names[p];
  out << '\n';
  for (Eigen::Index s = 0; s < d.values.rows(); ++s) {
    if (!d.chain_ids.empty()) out << d.chain_ids[static_cast<std::size_t>(s)] << ',';
    for (Eigen::Index p = 0; p < d.values.cols(); ++p)
      out << (p ? "," : "") << format_double(d.values(s, p));
    out << '\n';
  }
}

template <typename Writer, typename T>
void write_file(const std::string& path, Writer&& writer, const T& value) {
  std::ofstream out(path);
  require(out.good(), "io", "cannot write '" + path + "'");
  writer(out, value);
}

}  // namespace survcheck
