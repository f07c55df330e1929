#include "core/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "core/kv_io.hpp"

namespace lmdrop {

std::size_t Dataset::total_observations() const {
  std::size_t total = 0;
  for (const auto& p : panels) total += p.responses.size();
  return total;
}

std::vector<int> Dataset::dropout_times() const {
  std::vector<int> out;
  out.reserve(panels.size());
  for (const auto& p : panels) out.push_back(p.dropout_time());
  return out;
}

std::vector<int> Dataset::dropout_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(horizon), 0);
  for (const auto& p : panels) ++counts[static_cast<std::size_t>(p.dropout_time() - 1)];
  return counts;
}

void Dataset::validate() const {
  if (panels.empty()) fail(ErrorCode::InvalidArgument, "dataset has no subjects");
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "dataset horizon must be >= 1");
  for (const auto& p : panels) {
    const int s = p.dropout_time();
    if (s < 1 || s > horizon) {
      fail(ErrorCode::InvalidArgument,
           "subject " + p.subject_id + " has dropout time outside 1..horizon");
    }
    if (p.x1.rows() != s || p.x2.rows() != s || p.x1.cols() != p1 || p.x2.cols() != p2) {
      fail(ErrorCode::InvalidArgument,
           "subject " + p.subject_id + " has covariate arrays of inconsistent shape");
    }
    for (int y : p.responses) {
      if (y != 0 && y != 1) {
        fail(ErrorCode::InvalidArgument, "subject " + p.subject_id + " has a non-binary response");
      }
    }
  }
}

const char* to_string(ChainVariant v) {
  return v == ChainVariant::Parametric ? "parametric" : "saturated";
}

ChainVariant parse_chain_variant(const std::string& s) {
  const std::string t = trim(s);
  if (t == "parametric") return ChainVariant::Parametric;
  if (t == "saturated") return ChainVariant::Saturated;
  fail(ErrorCode::Parse, "unknown chain_variant '" + s + "' (expected parametric|saturated)");
}

void ModelConfig::validate() const {
  if (n_states < 1) fail(ErrorCode::InvalidArgument, "n_states must be >= 1");
  std::set<std::string> seen;
  for (const auto& c : fixed_columns) {
    if (!seen.insert(c).second) fail(ErrorCode::InvalidArgument, "duplicate column " + c);
  }
  for (const auto& c : state_columns) {
    if (!seen.insert(c).second) {
      fail(ErrorCode::InvalidArgument,
           "column " + c + " listed in both fixed_columns and state_columns");
    }
  }
  if (horizon && *horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be >= 1");
  if (state_columns.empty() && !random_intercept) {
    fail(ErrorCode::InvalidArgument,
         "model needs at least one state-varying column or a random intercept");
  }
}

static std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_entries() const {
  std::vector<std::pair<std::string, std::string>> e{
      {"n_states", std::to_string(n_states)},
      {"chain_variant", to_string(chain_variant)},
      {"fixed_columns", join(fixed_columns)},
      {"state_columns", join(state_columns)},
      {"random_intercept", random_intercept ? "true" : "false"},
  };
  if (horizon) e.emplace_back("horizon", std::to_string(*horizon));
  e.emplace_back("subject_column", subject_column);
  e.emplace_back("time_column", time_column);
  e.emplace_back("response_column", response_column);
  return e;
}

ModelConfig parse_model_config(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "n_states") {
      c.n_states = static_cast<int>(parse_long(value, key));
    } else if (key == "chain_variant") {
      c.chain_variant = parse_chain_variant(value);
    } else if (key == "fixed_columns") {
      c.fixed_columns = split_list(value);
    } else if (key == "state_columns") {
      c.state_columns = split_list(value);
    } else if (key == "random_intercept") {
      c.random_intercept = parse_bool(value, key);
    } else if (key == "horizon") {
      c.horizon = static_cast<int>(parse_long(value, key));
    } else if (key == "subject_column") {
      c.subject_column = value;
    } else if (key == "time_column") {
      c.time_column = value;
    } else if (key == "response_column") {
      c.response_column = value;
    } else {
      fail(ErrorCode::Parse, "unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  return parse_model_config(read_key_values(path));
}

int derive_dropout(std::span<const int> indicators) {
  bool seen_missing = false;
  int missing = 0;
  for (int r : indicators) {
    if (r != 0 && r != 1) fail(ErrorCode::InvalidArgument, "dropout indicators must be 0/1");
    if (r == 1) {
      seen_missing = true;
      ++missing;
    } else if (seen_missing) {
      fail(ErrorCode::InvalidArgument, "non-monotone missingness pattern (observed after dropout)");
    }
  }
  return static_cast<int>(indicators.size()) - missing;
}

std::vector<int> dropout_indicators(int dropout_time, int horizon) {
  if (dropout_time < 0 || dropout_time > horizon) {
    fail(ErrorCode::InvalidArgument, "dropout time outside 0..horizon");
  }
  std::vector<int> r(static_cast<std::size_t>(horizon), 0);
  std::fill(r.begin() + dropout_time, r.end(), 1);
  return r;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> split_design(const CovariateRow& row,
                                                         const ModelConfig& config) {
  auto lookup = [&](const std::string& name) {
    const auto it = row.find(name);
    if (it == row.end()) fail(ErrorCode::InvalidArgument, "unknown column '" + name + "'");
    return it->second;
  };
  const int offset = config.random_intercept ? 1 : 0;
  Eigen::VectorXd x1(static_cast<Eigen::Index>(config.fixed_columns.size()));
  Eigen::VectorXd x2(static_cast<Eigen::Index>(config.state_columns.size()) + offset);
  for (std::size_t i = 0; i < config.fixed_columns.size(); ++i) {
    x1(static_cast<Eigen::Index>(i)) = lookup(config.fixed_columns[i]);
  }
  if (config.random_intercept) x2(0) = 1.0;
  for (std::size_t i = 0; i < config.state_columns.size(); ++i) {
    x2(static_cast<Eigen::Index>(i) + offset) = lookup(config.state_columns[i]);
  }
  return {x1, x2};
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool as_integer(const std::string& s, long& v) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && ec == std::errc() && ptr == s.data() + s.size();
}

// Integer-looking ids sort numerically, everything else lexicographically after them.
bool subject_less(const std::string& a, const std::string& b) {
  long ia = 0, ib = 0;
  const bool na = as_integer(a, ia), nb = as_integer(b, ib);
  if (na && nb) return ia < ib;
  if (na != nb) return na;
  return a < b;
}

struct RawRow {
  long time;
  int y;
  Eigen::VectorXd x1;
  Eigen::VectorXd x2;
};

}  // namespace

Dataset parse_dataset(std::istream& in, const ModelConfig& config, const std::string& source_name) {
  config.validate();
  std::string header;
  if (!std::getline(in, header)) fail(ErrorCode::Parse, source_name + ": empty file");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const char sep = header.find('\t') != std::string::npos ? '\t' : ',';
  const auto columns = split_fields(header, sep);

  auto column_index = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) fail(ErrorCode::Parse, source_name + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  };
  const std::size_t subject_col = column_index(config.subject_column);
  const std::size_t time_col = column_index(config.time_column);
  const std::size_t response_col = column_index(config.response_column);
  std::vector<std::pair<std::string, std::size_t>> covariate_cols;
  for (const auto& c : config.fixed_columns) covariate_cols.emplace_back(c, column_index(c));
  for (const auto& c : config.state_columns) covariate_cols.emplace_back(c, column_index(c));

  std::map<std::string, std::vector<RawRow>> by_subject;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, sep);
    const std::string where = source_name + ":" + std::to_string(lineno);
    if (fields.size() != columns.size()) {
      fail(ErrorCode::Parse, where + ": expected " + std::to_string(columns.size()) + " fields");
    }
    RawRow row;
    row.time = parse_long(fields[time_col], where + " time");
    const long y = parse_long(fields[response_col], where + " response");
    if (y != 0 && y != 1) fail(ErrorCode::Parse, where + ": non-binary response");
    row.y = static_cast<int>(y);
    CovariateRow covs;
    for (const auto& [name, idx] : covariate_cols) covs[name] = parse_double(fields[idx], where + " " + name);
    std::tie(row.x1, row.x2) = split_design(covs, config);
    by_subject[fields[subject_col]].push_back(std::move(row));
  }
  if (by_subject.empty()) fail(ErrorCode::Parse, source_name + ": no data rows");

  Dataset data;
  data.p1 = static_cast<int>(config.fixed_columns.size());
  data.p2 = static_cast<int>(config.state_columns.size()) + (config.random_intercept ? 1 : 0);
  data.x1_names = config.fixed_columns;
  if (config.random_intercept) data.x2_names.emplace_back(kInterceptName);
  data.x2_names.insert(data.x2_names.end(), config.state_columns.begin(), config.state_columns.end());

  std::vector<std::string> ids;
  for (const auto& kv : by_subject) ids.push_back(kv.first);
  std::sort(ids.begin(), ids.end(), subject_less);

  int max_time = 0;
  for (const auto& id : ids) {
    auto& rows = by_subject[id];
    std::sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) { return a.time < b.time; });
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (t > 0 && rows[t].time == rows[t - 1].time) {
        fail(ErrorCode::Parse, source_name + ": duplicate (subject, time) for subject " + id +
                                   " at time " + std::to_string(rows[t].time));
      }
      if (rows[t].time != static_cast<long>(t) + 1) {
        fail(ErrorCode::Parse, source_name + ": non-monotone/gapped pattern for subject " + id +
                                   " (times must run 1..S contiguously)");
      }
    }
    SubjectPanel panel;
    panel.subject_id = id;
    const auto s = static_cast<Eigen::Index>(rows.size());
    panel.x1.resize(s, data.p1);
    panel.x2.resize(s, data.p2);
    for (Eigen::Index t = 0; t < s; ++t) {
      const auto& r = rows[static_cast<std::size_t>(t)];
      panel.responses.push_back(r.y);
      panel.x1.row(t) = r.x1.transpose();
      panel.x2.row(t) = r.x2.transpose();
    }
    max_time = std::max(max_time, static_cast<int>(s));
    data.panels.push_back(std::move(panel));
  }

  if (config.horizon) {
    if (*config.horizon < max_time) {
      fail(ErrorCode::InvalidArgument, source_name + ": observed time " + std::to_string(max_time) +
                                           " exceeds declared horizon " +
                                           std::to_string(*config.horizon));
    }
    data.horizon = *config.horizon;
  } else {
    data.horizon = max_time;
  }
  data.validate();
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, const ModelConfig& config) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return parse_dataset(in, config, path.string());
}

void write_dataset(const Dataset& data, std::ostream& out) {
  out << "subject,time,y";
  for (const auto& n : data.x1_names) out << ',' << n;
  for (std::size_t j = 0; j < data.x2_names.size(); ++j) {
    if (data.x2_names[j] == kInterceptName) continue;
    out << ',' << data.x2_names[j];
  }
  out << '\n';
  for (const auto& p : data.panels) {
    for (int t = 0; t < p.dropout_time(); ++t) {
      out << p.subject_id << ',' << (t + 1) << ',' << p.responses[static_cast<std::size_t>(t)];
      for (int c = 0; c < data.p1; ++c) out << ',' << format_double(p.x1(t, c));
      for (int c = 0; c < data.p2; ++c) {
        if (data.x2_names[static_cast<std::size_t>(c)] == kInterceptName) continue;
        out << ',' << format_double(p.x2(t, c));
      }
      out << '\n';
    }
  }
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  write_dataset(data, out);
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

static bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

bool operator==(const SubjectPanel& a, const SubjectPanel& b) {
  return a.subject_id == b.subject_id && a.responses == b.responses && same_matrix(a.x1, b.x1) &&
         same_matrix(a.x2, b.x2);
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.horizon == b.horizon && a.p1 == b.p1 && a.p2 == b.p2 && a.x1_names == b.x1_names &&
         a.x2_names == b.x2_names && a.panels == b.panels;
}

}  // namespace lmdrop
