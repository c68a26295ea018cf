#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dantzig.hpp"
#include "errors.hpp"
#include "gram.hpp"
#include "rng.hpp"
#include "sem.hpp"

namespace cdantzig {

using Json = nlohmann::json;

/// Shortest "%.17g" rendering; round-trips every finite double.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_number(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw IoError("not a number: '" + std::string(text) + "'");
  return v;
}

namespace detail {

inline void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(ValidationKind::bad_value, where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ValidationError(ValidationKind::bad_value, "unknown key '" + item.key() + "' in " + where);
  }
}

inline const Json& require(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(ValidationKind::bad_value, "missing key '" + key + "' in " + where);
  return j.at(key);
}

inline Vector json_vector(const Json& j, const std::string& what, Eigen::Index expected = -1) {
  if (!j.is_array()) throw ValidationError(ValidationKind::bad_value, what + " must be an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected) {
    throw ValidationError(ValidationKind::dimension,
                          what + " must have " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(ValidationKind::bad_value, what + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix json_matrix(const Json& j, const std::string& what, Eigen::Index rows, Eigen::Index cols) {
  const Vector flat = json_vector(j, what, rows * cols);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat(r * cols + c);
  }
  return m;
}

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Row-major flat array.
inline Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

inline int json_int(const Json& j, const std::string& what) {
  if (!j.is_number_integer()) throw ValidationError(ValidationKind::bad_value, what + " must be an integer");
  return j.get<int>();
}

}  // namespace detail

inline Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(ValidationKind::bad_value, "malformed JSON in " + source + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path);
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("cannot write " + path);
}

// ---------------------------------------------------------------- SemSpec

/// Strict parse: unknown keys are rejected and the result is validated.
inline SemSpec spec_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"p", "A", "noise_cov", "environments", "meas_noise_var"}, "spec");
  SemSpec spec;
  spec.p = detail::json_int(detail::require(j, "p", "spec"), "p");
  if (spec.p < 1) throw ValidationError(ValidationKind::dimension, "p must be at least 1");
  const Eigen::Index d = spec.p + 1;
  spec.A = detail::json_matrix(detail::require(j, "A", "spec"), "A", d, d);
  spec.noise_cov = detail::json_matrix(detail::require(j, "noise_cov", "spec"), "noise_cov", d, d);
  const Json& envs = detail::require(j, "environments", "spec");
  if (!envs.is_array()) throw ValidationError(ValidationKind::bad_value, "environments must be an array");
  for (const auto& e : envs) {
    detail::reject_unknown_keys(e, {"label", "mean_shift", "cov", "meas_noise_y"}, "environment");
    InterventionSpec env;
    const Json& label = detail::require(e, "label", "environment");
    if (!label.is_string()) throw ValidationError(ValidationKind::bad_value, "label must be a string");
    env.label = label.get<std::string>();
    env.mean_shift = detail::json_vector(detail::require(e, "mean_shift", "environment"), "mean_shift", d);
    env.cov = detail::json_matrix(detail::require(e, "cov", "environment"), "cov", d, d);
    if (e.contains("meas_noise_y")) {
      if (!e.at("meas_noise_y").is_number()) throw ValidationError(ValidationKind::bad_value, "meas_noise_y must be a number");
      env.meas_noise_y = e.at("meas_noise_y").get<double>();
    }
    spec.environments.push_back(std::move(env));
  }
  if (j.contains("meas_noise_var")) spec.meas_noise_var = detail::json_vector(j.at("meas_noise_var"), "meas_noise_var", d);
  return validate_spec(std::move(spec));
}

inline Json spec_to_json(const SemSpec& spec) {
  Json j;
  j["p"] = spec.p;
  j["A"] = detail::to_json(spec.A);
  j["noise_cov"] = detail::to_json(spec.noise_cov);
  j["environments"] = Json::array();
  for (const auto& env : spec.environments) {
    Json e;
    e["label"] = env.label;
    e["mean_shift"] = detail::to_json(env.mean_shift);
    e["cov"] = detail::to_json(env.cov);
    if (env.meas_noise_y) e["meas_noise_y"] = *env.meas_noise_y;
    j["environments"].push_back(std::move(e));
  }
  if (spec.meas_noise_var) j["meas_noise_var"] = detail::to_json(*spec.meas_noise_var);
  return j;
}

/// FNV-1a of the canonical (sorted-key, compact) JSON, as 16 hex digits.
inline std::string spec_hash(const SemSpec& spec) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(spec_to_json(spec).dump())));
  return buf;
}

// ---------------------------------------------------------------- datasets

inline std::string datasets_to_csv(std::span<const EnvDataset> envs, int p) {
  std::string out = "env";
  for (int k = 1; k <= p; ++k) out += ",X" + std::to_string(k);
  out += ",Y\n";
  for (const auto& e : envs) {
    if (e.p() != p && e.n() > 0) throw ValidationError(ValidationKind::dimension, "environment has the wrong p");
    if (e.env_label.find_first_of(",\n\r\"") != std::string::npos || e.env_label.empty() || e.env_label[0] == '#') {
      throw ValidationError(ValidationKind::bad_value, "environment label not representable in CSV: " + e.env_label);
    }
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(e.n()); ++i) {
      out += e.env_label;
      for (int k = 0; k < p; ++k) {
        out += ',';
        out += format_number(e.X(i, k));
      }
      out += ',';
      out += format_number(e.Y(i));
      out += '\n';
    }
  }
  return out;
}

/// Parses `env,X1,...,Xp,Y`; environments appear in order of first occurrence.
/// Lines starting with '#' are comments.
inline std::vector<EnvDataset> datasets_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) header.push_back(cell);
    break;
  }
  if (header.size() < 3 || header.front() != "env" || header.back() != "Y") {
    throw IoError("CSV header must be env,X1,...,Xp,Y");
  }
  const int p = static_cast<int>(header.size()) - 2;
  for (int k = 1; k <= p; ++k) {
    if (header[k] != "X" + std::to_string(k)) throw IoError("CSV header column " + std::to_string(k + 1) + " must be X" + std::to_string(k));
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<int>(cells.size()) != p + 2) {
      throw IoError("line " + std::to_string(line_no) + ": expected " + std::to_string(p + 2) + " fields");
    }
    const std::string label(cells[0]);
    if (label.empty()) throw IoError("line " + std::to_string(line_no) + ": empty environment label");
    std::vector<double> values;
    for (int k = 1; k <= p + 1; ++k) {
      try {
        values.push_back(parse_number(cells[k]));
      } catch (const IoError& e) {
        throw IoError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    auto [it, fresh] = rows.try_emplace(label);
    if (fresh) order.push_back(label);
    it->second.push_back(std::move(values));
  }
  std::vector<EnvDataset> out;
  for (const auto& label : order) {
    const auto& r = rows.at(label);
    EnvDataset e;
    e.env_label = label;
    e.X.resize(static_cast<Eigen::Index>(r.size()), p);
    e.Y.resize(static_cast<Eigen::Index>(r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (int k = 0; k < p; ++k) e.X(static_cast<Eigen::Index>(i), k) = r[i][k];
      e.Y(static_cast<Eigen::Index>(i)) = r[i][p];
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Header-only CSV files carry no rows, hence no environments: the caller
/// learns p from the header.
inline int csv_predictor_count(const std::string& text) {
  const auto end = text.find('\n');
  const std::string first = text.substr(0, end);
  const auto commas = static_cast<int>(std::count(first.begin(), first.end(), ','));
  return commas - 1;
}

// ---------------------------------------------------------------- provenance

inline std::string provenance_line(std::uint64_t seed, const std::string& hash) {
  return "# seed=" + std::to_string(seed) + " spec_hash=" + hash + "\n";
}

struct Provenance {
  std::uint64_t seed = 0;
  std::string spec_hash;
};

inline Provenance parse_provenance(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  constexpr std::string_view seed_key = "# seed=";
  constexpr std::string_view hash_key = " spec_hash=";
  if (line.substr(0, seed_key.size()) != seed_key) throw IoError("not a provenance line");
  line.remove_prefix(seed_key.size());
  const auto sep = line.find(hash_key);
  if (sep == std::string_view::npos) throw IoError("provenance line lacks spec_hash");
  Provenance out;
  const auto digits = line.substr(0, sep);
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), out.seed);
  if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) throw IoError("bad seed in provenance line");
  out.spec_hash = std::string(line.substr(sep + hash_key.size()));
  return out;
}

// ---------------------------------------------------------------- gram

inline Json gram_to_json(const GramShift& g) {
  Json j;
  j["p"] = g.p;
  j["envs"] = Json::array();
  const bool compact = g.per_env.size() == 1 && g.n_envs() == 2;
  for (std::size_t e = 0; e < g.n_envs(); ++e) {
    Json env;
    env["label"] = g.labels[e];
    env["n"] = g.sample_sizes[e];
    const GramPair& pair = compact ? g.per_env[0] : g.per_env[e];
    const double sign = compact && e == 1 ? -1.0 : 1.0;
    env["Z"] = detail::to_json(Vector(sign * pair.Z));
    env["G"] = detail::to_json(Matrix(sign * pair.G));
    j["envs"].push_back(std::move(env));
  }
  if (g.scaling) {
    Json s = Json::array();
    for (std::size_t e = 0; e < g.n_envs(); ++e) {
      s.push_back(detail::to_json(Vector(g.scaling->col(compact ? 0 : static_cast<Eigen::Index>(e)))));
    }
    j["scaling"] = std::move(s);
  }
  j["center"] = detail::to_json(g.center);
  return j;
}

inline GramShift gram_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"p", "envs", "scaling", "center"}, "gram");
  GramShift g;
  g.p = detail::json_int(detail::require(j, "p", "gram"), "p");
  if (g.p < 1) throw ValidationError(ValidationKind::dimension, "p must be at least 1");
  const Json& envs = detail::require(j, "envs", "gram");
  if (!envs.is_array() || envs.size() < 2) throw ValidationError(ValidationKind::dimension, "gram needs at least two envs");
  for (const auto& e : envs) {
    detail::reject_unknown_keys(e, {"label", "n", "Z", "G"}, "gram env");
    const Json& label = detail::require(e, "label", "gram env");
    if (!label.is_string()) throw ValidationError(ValidationKind::bad_value, "label must be a string");
    g.labels.push_back(label.get<std::string>());
    const int n = detail::json_int(detail::require(e, "n", "gram env"), "n");
    if (n < 1) throw ValidationError(ValidationKind::bad_value, "n must be positive");
    g.sample_sizes.push_back(static_cast<std::size_t>(n));
    GramPair pair{detail::json_vector(detail::require(e, "Z", "gram env"), "Z", g.p),
                  detail::json_matrix(detail::require(e, "G", "gram env"), "G", g.p, g.p)};
    g.per_env.push_back(std::move(pair));
  }
  if (envs.size() == 2) g.per_env.resize(1);
  if (j.contains("scaling")) {
    const Json& s = j.at("scaling");
    if (!s.is_array() || s.size() != envs.size()) throw ValidationError(ValidationKind::dimension, "one scaling vector per env");
    Matrix f(g.p, static_cast<Eigen::Index>(g.per_env.size()));
    for (std::size_t e = 0; e < g.per_env.size(); ++e) {
      f.col(static_cast<Eigen::Index>(e)) = detail::json_vector(s[e], "scaling", g.p);
    }
    if (!(f.minCoeff() > 0.0)) throw ValidationError(ValidationKind::bad_value, "scaling factors must be positive");
    g.scaling = std::move(f);
  }
  if (j.contains("center")) {
    g.center = detail::json_vector(j.at("center"), "center");
    if (g.center.size() != 0 && g.center.size() != g.p + 1) {
      throw ValidationError(ValidationKind::dimension, "center must have length p+1");
    }
  }
  // row scaling breaks symmetry, so check the unscaled matrices
  for (const auto& pair : unscaled(g).per_env) {
    if (!is_symmetric(pair.G, 1e-12 * std::max(1.0, max_norm(pair.G)))) {
      throw ValidationError(ValidationKind::not_symmetric, "G must be symmetric");
    }
  }
  return g;
}

// ---------------------------------------------------------------- fits

inline Json fit_to_json(const DantzigFit& fit, double alpha = 0.05) {
  Json j;
  j["beta"] = detail::to_json(fit.beta);
  j["method"] = fit.method;
  j["cond_G"] = std::isfinite(fit.cond_G) ? Json(fit.cond_G) : Json(nullptr);
  if (fit.lambda) j["lambda"] = *fit.lambda;
  if (fit.has_covariance()) {
    j["stderr"] = detail::to_json(fit.std_error);
    Json pv = Json::array();
    for (Eigen::Index k = 0; k < fit.pvalues.size(); ++k) {
      pv.push_back(std::isnan(fit.pvalues(k)) ? Json(nullptr) : Json(fit.pvalues(k)));
    }
    j["pvalue"] = std::move(pv);
    const double q = normal_quantile(1.0 - alpha / 2.0);
    Json ci = Json::array();
    for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
      if (std::isnan(fit.pvalues(k))) {
        ci.push_back(nullptr);  // coefficient fixed at zero by preselection
        continue;
      }
      const double half = q * fit.std_error(k);
      ci.push_back(Json::array({fit.beta(k) - half, fit.beta(k) + half}));
    }
    j["ci"] = std::move(ci);
    j["alpha"] = alpha;
  }
  if (fit.post_selection) {
    j["post_selection"] = true;
    j["note"] = "post-selection: p-values not valid";
  }
  return j;
}

}  // namespace cdantzig
