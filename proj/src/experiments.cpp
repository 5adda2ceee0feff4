#include "htica/experiments.hpp"

#include "htica/centroid_body.hpp"
#include "htica/cumulant_ica.hpp"
#include "htica/gmm_closeness.hpp"
#include "htica/heavy_tail.hpp"
#include "htica/parallel.hpp"
#include "htica/rng.hpp"
#include "htica/smoothed_kr.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>

namespace htica::experiments {

namespace fs = std::filesystem;
using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Closeness: return "closeness";
    case Kind::Membership: return "membership";
    case Kind::HeavyTail: return "heavytail";
    case Kind::Weights: return "weights";
    case Kind::Smoothed: return "smoothed";
  }
  return "?";
}

std::string Diagnostic::to_string() const {
  std::string s;
  if (line > 0) s += "line " + std::to_string(line) + ": ";
  if (!field.empty()) s += field + ": ";
  return s + message;
}

namespace {

std::string join_messages(const std::vector<Diagnostic>& d) {
  std::string s;
  for (const auto& x : d) s += (s.empty() ? "" : "; ") + x.to_string();
  return s;
}

}  // namespace

ConfigError::ConfigError(std::vector<Diagnostic> d)
    : std::runtime_error(join_messages(d)), diags_(std::move(d)) {}

json ExperimentConfig::to_json() const {
  json j{{"experiment", kind_name(experiment)}, {"seed", seed}, {"params", params}};
  if (!output_path.empty()) j["output_path"] = output_path;
  return j;
}

// ---------------------------------------------------------------------------
// Parsing and validation

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

std::optional<Kind> kind_from_name(const std::string& s) {
  for (Kind k : {Kind::Closeness, Kind::Membership, Kind::HeavyTail, Kind::Weights, Kind::Smoothed})
    if (s == kind_name(k)) return k;
  return std::nullopt;
}

using Check = std::function<std::optional<std::string>(const json&)>;

struct Param {
  std::string name;
  json fallback;
  Check check;
};

std::string dump(const json& v) { return v.dump(); }

Check integer_at_least(std::int64_t lo) {
  return [lo](const json& v) -> std::optional<std::string> {
    if (!v.is_number_integer() || v.get<std::int64_t>() < lo)
      return "must be an integer >= " + std::to_string(lo) + ", got " + dump(v);
    return std::nullopt;
  };
}

Check number_open_interval(double lo, double hi, const std::string& label) {
  return [=](const json& v) -> std::optional<std::string> {
    if (!v.is_number() || !(v.get<double>() > lo && v.get<double>() < hi))
      return "must be a number in " + label + ", got " + dump(v);
    return std::nullopt;
  };
}

Check positive_number() {
  return [](const json& v) -> std::optional<std::string> {
    if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>()))
      return "must be a positive number, got " + dump(v);
    return std::nullopt;
  };
}

Check nonnegative_number() {
  return [](const json& v) -> std::optional<std::string> {
    if (!v.is_number() || !(v.get<double>() >= 0.0) || !std::isfinite(v.get<double>()))
      return "must be a nonnegative number, got " + dump(v);
    return std::nullopt;
  };
}

Check one_of(std::vector<std::string> options) {
  return [options](const json& v) -> std::optional<std::string> {
    if (v.is_string() && std::find(options.begin(), options.end(), v.get<std::string>()) != options.end())
      return std::nullopt;
    std::string list;
    for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
    return "must be one of {" + list + "}, got " + dump(v);
  };
}

Check is_bool() {
  return [](const json& v) -> std::optional<std::string> {
    if (!v.is_boolean()) return "must be true or false, got " + dump(v);
    return std::nullopt;
  };
}

Check nullable(Check inner) {
  return [inner](const json& v) -> std::optional<std::string> {
    if (v.is_null()) return std::nullopt;
    return inner(v);
  };
}

// A number or a non-empty array of numbers, each passing `each`.
Check scalar_or_list(Check each) {
  return [each](const json& v) -> std::optional<std::string> {
    if (v.is_array()) {
      if (v.empty()) return "must not be empty";
      for (const auto& x : v)
        if (auto e = each(x)) return "each entry " + *e;
      return std::nullopt;
    }
    return each(v);
  };
}

Check integer_list_at_least(std::int64_t lo) {
  return [lo](const json& v) -> std::optional<std::string> {
    if (!v.is_array() || v.empty()) return "must be a non-empty array of integers";
    for (const auto& x : v)
      if (auto e = integer_at_least(lo)(x)) return "each entry " + *e;
    return std::nullopt;
  };
}

Check number_list() {
  return [](const json& v) -> std::optional<std::string> {
    if (!v.is_array() || v.empty()) return "must be a non-empty array of numbers";
    for (const auto& x : v)
      if (!x.is_number()) return "must contain only numbers, got " + dump(x);
    return std::nullopt;
  };
}

Check matrix_rows() {
  return [](const json& v) -> std::optional<std::string> {
    if (!v.is_array() || v.empty()) return "must be a non-empty array of rows";
    const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
    if (cols == 0) return "rows must be non-empty arrays of numbers";
    for (const auto& r : v) {
      if (!r.is_array() || r.size() != cols) return "rows must all have " + std::to_string(cols) + " entries";
      for (const auto& x : r)
        if (!x.is_number()) return "must contain only numbers, got " + dump(x);
    }
    return std::nullopt;
  };
}

const std::vector<Param>& params_for(Kind k) {
  static const std::map<Kind, std::vector<Param>> table = {
      {Kind::Closeness,
       {{"n", 1, [](const json& v) -> std::optional<std::string> {
           if (!v.is_number_integer() || (v != 1 && v != 2)) return "must be 1 or 2, got " + dump(v);
           return std::nullopt;
         }},
        {"k_ladder", json::array({6, 10, 14, 18, 22}), integer_list_at_least(1)},
        {"nodes", "grid", one_of({"grid", "uniform"})},
        {"precision", "extended", one_of({"extended", "double"})},
        {"compute_l1", true, is_bool()}}},
      {Kind::Membership,
       {{"n", 3, integer_at_least(1)},
        {"N", 10000, integer_at_least(1)},
        {"trials", 100, integer_at_least(1)},
        {"inside_scale", 0.9, positive_number()},
        {"outside_scale", 1.2, positive_number()},
        {"source", "uniform", one_of({"uniform", "pareto"})},
        {"gamma", 0.5, number_open_interval(0.0, 1.0, "(0,1)")},
        {"alpha", nullptr, nullable(positive_number())}}},
      {Kind::HeavyTail,
       {{"gamma", json::array({0.3, 0.6}), scalar_or_list(number_open_interval(0.0, 1.0, "(0,1)"))},
        {"epsilon", json::array({0.1, 0.2}), scalar_or_list(positive_number())},
        {"trials", 2000, integer_at_least(1)},
        {"N", "min_samples", [](const json& v) -> std::optional<std::string> {
           if (v == "min_samples" || (v.is_number_integer() && v.get<std::int64_t>() >= 1)) return std::nullopt;
           return "must be \"min_samples\" or a positive integer, got " + dump(v);
         }},
        {"alpha", nullptr, nullable(positive_number())}}},
      {Kind::Weights,
       {{"mode", "sampled", one_of({"sampled", "analytic"})},
        {"n", 3, integer_at_least(1)},
        {"m", nullptr, nullable(integer_at_least(1))},
        {"A", nullptr, nullable(matrix_rows())},
        {"w", nullptr, nullable(number_list())},
        {"lambda", 5.0, positive_number()},
        {"tau", 1.0, nonnegative_number()},
        {"order", 3, [](const json& v) -> std::optional<std::string> {
           if (!v.is_number_integer() || (v != 3 && v != 4)) return "must be 3 or 4, got " + dump(v);
           return std::nullopt;
         }},
        {"samples", 2000000, integer_at_least(40)},
        {"trials", 20, integer_at_least(1)},
        {"tolerance", 0.05, positive_number()}}},
      {Kind::Smoothed,
       {{"n", 5, integer_at_least(2)},
        {"sigma", 1.0, positive_number()},
        {"trials", 500, integer_at_least(1)},
        {"base", "zero", one_of({"zero", "collinear", "csv"})},
        {"base_path", nullptr, [](const json& v) -> std::optional<std::string> {
           if (!v.is_null() && !v.is_string()) return "must be a path string, got " + dump(v);
           return std::nullopt;
         }}}},
  };
  return table.at(k);
}

// Fills defaults; assumes the per-key checks already passed.
json with_defaults(Kind k, const json& given) {
  json out = json::object();
  for (const auto& p : params_for(k)) out[p.name] = given.contains(p.name) ? given[p.name] : p.fallback;
  return out;
}

void cross_checks(Kind k, const json& p, std::vector<Diagnostic>& d) {
  auto add = [&](const std::string& f, const std::string& m) { d.push_back({"params." + f, m, 0}); };
  if (k == Kind::Membership) {
    if (p["inside_scale"].get<double>() >= p["outside_scale"].get<double>())
      add("inside_scale", "must be smaller than outside_scale");
    if (p["source"] == "pareto" && !p["alpha"].is_null() &&
        p["alpha"].get<double>() <= 1.0 + p["gamma"].get<double>())
      add("alpha", "must exceed 1 + gamma");
  }
  if (k == Kind::HeavyTail && !p["alpha"].is_null()) {
    const json g = p["gamma"].is_array() ? p["gamma"] : json::array({p["gamma"]});
    for (const auto& x : g)
      if (p["alpha"].get<double>() <= 1.0 + x.get<double>()) {
        add("alpha", "must exceed 1 + gamma for every gamma");
        break;
      }
  }
  if (k == Kind::Weights) {
    const auto n = p["n"].get<std::int64_t>();
    const std::int64_t m = p["m"].is_null() ? n : p["m"].get<std::int64_t>();
    if (p["mode"] == "analytic") {
      if (!p["A"].is_null()) add("A", "is drawn at random in analytic mode; leave it unset");
      if (!p["w"].is_null()) add("w", "is drawn at random in analytic mode; leave it unset");
      return;
    }
    if (!p["A"].is_null()) {
      if (static_cast<std::int64_t>(p["A"].size()) != n || static_cast<std::int64_t>(p["A"][0].size()) != m)
        add("A", "must be n x m = " + std::to_string(n) + " x " + std::to_string(m));
    } else if (m != n) {
      add("m", "needs an explicit A when m != n");
    }
    if (!p["w"].is_null()) {
      if (static_cast<std::int64_t>(p["w"].size()) != m) add("w", "must have m = " + std::to_string(m) + " entries");
      double sum = 0.0;
      bool positive = true;
      for (const auto& x : p["w"]) {
        sum += x.get<double>();
        positive = positive && x.get<double>() > 0.0;
      }
      if (!positive || std::abs(sum - 1.0) > 1e-12) add("w", "must be positive and sum to 1");
    }
  }
  if (k == Kind::Smoothed) {
    if (p["base"] == "csv" && p["base_path"].is_null()) add("base_path", "required when base is \"csv\"");
    if (p["base"] != "csv" && !p["base_path"].is_null()) add("base_path", "only used when base is \"csv\"");
  }
}

}  // namespace

json parse_config_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({{"", std::string("invalid JSON: ") + e.what(), line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0)}});
  }
}

json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({{"", "cannot read config file " + path.string(), 0}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(json& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError({{"--set", "expected key=value, got \"" + assignment + "\"", 0}});
  std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (!raw.is_object()) raw = json::object();
  if (key.rfind("params.", 0) == 0) key = key.substr(7);
  else if (key == "experiment" || key == "seed" || key == "output_path") {
    raw[key] = value;
    return;
  }
  if (!raw.contains("params") || !raw["params"].is_object()) raw["params"] = json::object();
  raw["params"][key] = value;
}

std::vector<Diagnostic> validate(const json& raw) {
  std::vector<Diagnostic> d;
  if (!raw.is_object()) {
    d.push_back({"", "config must be a JSON object", 0});
    return d;
  }
  for (const auto& [key, _] : raw.items())
    if (key != "experiment" && key != "seed" && key != "params" && key != "output_path")
      d.push_back({key, "unknown key", 0});

  if (!raw.contains("seed")) {
    d.push_back({"seed", "seed required", 0});
  } else if (!raw["seed"].is_number_unsigned() &&
             !(raw["seed"].is_number_integer() && raw["seed"].get<std::int64_t>() >= 0)) {
    d.push_back({"seed", "must be an unsigned 64-bit integer, got " + raw["seed"].dump(), 0});
  }
  if (raw.contains("output_path") && (!raw["output_path"].is_string() || raw["output_path"].get<std::string>().empty()))
    d.push_back({"output_path", "must be a non-empty string", 0});

  std::optional<Kind> kind;
  if (!raw.contains("experiment")) {
    d.push_back({"experiment", "experiment required", 0});
  } else if (!raw["experiment"].is_string() || !(kind = kind_from_name(raw["experiment"].get<std::string>()))) {
    d.push_back({"experiment",
                 "must be one of {closeness, membership, heavytail, weights, smoothed}, got " +
                     raw["experiment"].dump(),
                 0});
  }
  const json params = raw.contains("params") ? raw["params"] : json::object();
  if (!params.is_object()) {
    d.push_back({"params", "must be an object", 0});
    return d;
  }
  if (!kind) return d;

  const auto& spec = params_for(*kind);
  bool params_ok = true;
  for (const auto& [key, value] : params.items()) {
    const auto it = std::find_if(spec.begin(), spec.end(), [&](const Param& p) { return p.name == key; });
    if (it == spec.end()) {
      d.push_back({"params." + key, std::string("unknown parameter for ") + kind_name(*kind), 0});
      params_ok = false;
    } else if (auto e = it->check(value)) {
      d.push_back({"params." + key, *e, 0});
      params_ok = false;
    }
  }
  if (params_ok) cross_checks(*kind, with_defaults(*kind, params), d);
  return d;
}

std::vector<Diagnostic> validate_text(const std::string& text) {
  json raw;
  try {
    raw = parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.diagnostics();
  }
  auto d = validate(raw);
  for (auto& x : d) {
    if (x.field.empty() || x.line > 0) continue;
    const auto dot = x.field.rfind('.');
    const std::string key = "\"" + (dot == std::string::npos ? x.field : x.field.substr(dot + 1)) + "\"";
    const auto pos = text.find(key);
    if (pos != std::string::npos) x.line = line_of_offset(text, pos);
  }
  return d;
}

ExperimentConfig parse_config(const json& raw) {
  auto d = validate(raw);
  if (!d.empty()) throw ConfigError(std::move(d));
  ExperimentConfig c;
  c.experiment = *kind_from_name(raw["experiment"].get<std::string>());
  c.seed = raw["seed"].get<std::uint64_t>();
  c.params = with_defaults(c.experiment, raw.contains("params") ? raw["params"] : json::object());
  if (raw.contains("output_path")) c.output_path = raw["output_path"].get<std::string>();
  return c;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(std::int64_t x) { return std::to_string(x); }
std::string fmt(int x) { return std::to_string(x); }
std::string fmt(bool x) { return x ? "1" : "0"; }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

using Row = std::vector<std::string>;

struct Table {
  std::vector<Row> rows;
  std::size_t failed = 0;
  json summary = json::object();
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---- closeness -------------------------------------------------------------

Table run_closeness(const ExperimentConfig& cfg, unsigned threads) {
  const json& p = cfg.params;
  const int n = p["n"].get<int>();
  const auto ladder = p["k_ladder"].get<std::vector<int>>();
  gmm::ConfusableOptions opt;
  opt.interpolation.precision =
      p["precision"] == "double" ? gmm::SolvePrecision::Double : gmm::SolvePrecision::Extended;
  opt.compute_l1 = p["compute_l1"].get<bool>();
  const bool uniform = p["nodes"] == "uniform";
  const int fill_res = n == 1 ? 1000 : 200;

  struct Out {
    double h = kNaN, alpha = kNaN, beta = kNaN, l1 = kNaN, cond = kNaN;
    std::string error;
  };
  std::vector<Out> out(ladder.size());
  parallel_for(ladder.size(), threads, [&](std::size_t i) {
    const int k = ladder[i];
    Out& o = out[i];
    try {
      gmm::PointCloud X, Y;
      if (uniform) {
        Rng rng(derive_seed(cfg.seed, i));
        const auto count = static_cast<Eigen::Index>(std::pow(2 * k, n) / 2);
        X = gmm::uniform_points(count, n, rng);
        Y = gmm::uniform_points(count, n, rng);
      } else {
        std::tie(X, Y) = gmm::interleaved_grids(k, n);
      }
      o.h = std::max(gmm::fill(X, fill_res), gmm::fill(Y, fill_res));
      const gmm::ConfusablePair pair = gmm::confusable_pair(X, Y, opt);
      o.alpha = pair.alpha;
      o.beta = pair.beta;
      o.cond = std::max(pair.fx.condition_number, pair.fy.condition_number);
      if (pair.l1) o.l1 = *pair.l1;
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  });

  Table t;
  json per_k = json::array();
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const Out& o = out[i];
    t.failed += !o.error.empty();
    t.rows.push_back({fmt(ladder[i]), fmt(o.h), fmt(o.alpha), fmt(o.beta), fmt(o.l1), fmt(o.cond),
                      fmt(derive_seed(cfg.seed, i)), csv_escape(o.error)});
    per_k.push_back({{"k", ladder[i]}, {"l1_distance", std::isnan(o.l1) ? json(nullptr) : json(o.l1)}});
  }
  t.summary["ladder"] = per_k;
  return t;
}

// ---- membership ------------------------------------------------------------

Table run_membership(const ExperimentConfig& cfg, unsigned threads) {
  const json& p = cfg.params;
  const int n = p["n"].get<int>();
  const auto N = p["N"].get<std::size_t>();
  const auto trials = p["trials"].get<std::size_t>();
  const double in_s = p["inside_scale"].get<double>(), out_s = p["outside_scale"].get<double>();

  centroid::ICAModelSpec model = centroid::ICAModelSpec::identity_uniform(n);
  if (p["source"] == "pareto") {
    const std::optional<double> alpha =
        p["alpha"].is_null() ? std::nullopt : std::optional<double>(p["alpha"].get<double>());
    const auto spec = heavy_tail::HeavyTailSpec::symmetric_pareto(p["gamma"].get<double>(), alpha);
    model.sources.assign(static_cast<std::size_t>(n), spec);
  }
  model.validate();

  struct Query {
    std::string cls;
    bool answer = false;
    int iterations = 0;
  };
  struct Out {
    std::vector<Query> queries;
    std::string error;
  };
  std::vector<Out> out(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Out& o = out[t];
    try {
      Rng rng(derive_seed(cfg.seed, t));
      const centroid::SampledCentroidBody body(model.sample(N, rng));
      for (int i = 0; i < n; ++i) {
        for (const auto& [cls, s] : {std::pair{std::string("inside"), in_s}, std::pair{std::string("outside"), out_s}}) {
          const VectorXd q = s * VectorXd::Unit(n, i);
          const auto a = centroid::membership_detail(body, q);
          o.queries.push_back({cls + "_e" + std::to_string(i), a.inside, a.lp_iterations});
        }
      }
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  });

  Table t;
  std::size_t all_correct = 0, inside_yes = 0, outside_no = 0, per_class = 0;
  for (std::size_t tr = 0; tr < trials; ++tr) {
    const Out& o = out[tr];
    const std::string seed = fmt(derive_seed(cfg.seed, tr));
    if (!o.error.empty()) {
      ++t.failed;
      t.rows.push_back({fmt(static_cast<std::uint64_t>(tr)), "", "", fmt(static_cast<std::uint64_t>(N)), "", seed,
                        csv_escape(o.error)});
      continue;
    }
    bool ok = true;
    for (const auto& q : o.queries) {
      const bool inside_class = q.cls.rfind("inside", 0) == 0;
      const bool correct = inside_class == q.answer;
      ok = ok && correct;
      (inside_class ? inside_yes : outside_no) += correct;
      t.rows.push_back({fmt(static_cast<std::uint64_t>(tr)), q.cls, q.answer ? "YES" : "NO",
                        fmt(static_cast<std::uint64_t>(N)), fmt(q.iterations), seed, ""});
    }
    per_class += static_cast<std::size_t>(n);
    all_correct += ok;
  }
  t.summary["trials_all_correct"] = all_correct;
  t.summary["fraction_all_correct"] = static_cast<double>(all_correct) / static_cast<double>(trials);
  t.summary["inside_yes_rate"] = per_class ? static_cast<double>(inside_yes) / static_cast<double>(per_class) : 0.0;
  t.summary["outside_no_rate"] = per_class ? static_cast<double>(outside_no) / static_cast<double>(per_class) : 0.0;
  return t;
}

// ---- heavytail -------------------------------------------------------------

Table run_heavytail(const ExperimentConfig& cfg, unsigned threads) {
  const json& p = cfg.params;
  auto as_list = [](const json& v) { return v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()}; };
  const auto gammas = as_list(p["gamma"]);
  const auto epsilons = as_list(p["epsilon"]);
  const auto trials = p["trials"].get<std::uint64_t>();
  const std::optional<double> alpha =
      p["alpha"].is_null() ? std::nullopt : std::optional<double>(p["alpha"].get<double>());

  struct Cell {
    double gamma, epsilon;
    heavy_tail::HeavyTailSpec spec;
    heavy_tail::ConcentrationReport report;
    std::string error;
  };
  std::vector<Cell> cells;
  for (double g : gammas)
    for (double e : epsilons) cells.push_back({g, e, {}, {}, {}});

  parallel_for(cells.size(), threads, [&](std::size_t c) {
    Cell& cell = cells[c];
    try {
      cell.spec = heavy_tail::HeavyTailSpec::symmetric_pareto(cell.gamma, alpha);
      const std::uint64_t N = p["N"].is_string()
                                  ? heavy_tail::min_samples(cell.epsilon, cell.spec.moment_bound_M, cell.gamma)
                                  : p["N"].get<std::uint64_t>();
      cell.report = heavy_tail::estimate_failure_rate(cell.spec, cell.epsilon, N, trials, derive_seed(cfg.seed, c));
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  Table t;
  json reports = json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    const std::uint64_t master = derive_seed(cfg.seed, c);
    if (!cell.error.empty()) {
      ++t.failed;
      t.rows.push_back({fmt(static_cast<std::uint64_t>(c)), "", fmt(cell.gamma), fmt(cell.epsilon), "", "", "",
                        fmt(master), csv_escape(cell.error)});
      reports.push_back({{"gamma", cell.gamma}, {"epsilon", cell.epsilon}, {"error", cell.error}});
      continue;
    }
    const auto& r = cell.report;
    for (std::uint64_t tr = 0; tr < r.trial_means.size(); ++tr) {
      const double m = r.trial_means[tr];
      t.rows.push_back({fmt(static_cast<std::uint64_t>(c)), fmt(tr), fmt(cell.gamma), fmt(cell.epsilon), fmt(r.N),
                        fmt(m), fmt(std::abs(m - 1.0) > cell.epsilon), fmt(derive_seed(master, tr)), ""});
    }
    reports.push_back({{"gamma", cell.gamma},
                       {"epsilon", cell.epsilon},
                       {"M", cell.spec.moment_bound_M},
                       {"tail_shape", cell.spec.tail_shape},
                       {"N", r.N},
                       {"bound", r.bound},
                       {"empirical_rate", r.empirical_rate},
                       {"failures", r.failures},
                       {"trials", r.trials},
                       {"ci_half_width_95", r.ci_half_width},
                       {"hybrid_sampler", r.hybrid_sampler}});
  }
  t.summary["cells"] = reports;
  return t;
}

// ---- weights ---------------------------------------------------------------

Table run_weights(const ExperimentConfig& cfg, unsigned threads) {
  const json& p = cfg.params;
  const bool analytic = p["mode"] == "analytic";
  const auto n = p["n"].get<Eigen::Index>();
  const Eigen::Index m = p["m"].is_null() ? n : p["m"].get<Eigen::Index>();
  const int order = p["order"].get<int>();
  const auto samples = p["samples"].get<std::size_t>();
  const auto trials = p["trials"].get<std::size_t>();
  const double tol = p["tolerance"].get<double>();

  cumulant::PoissonReduction fixed;
  if (!analytic) {
    fixed.A = MatrixXd::Identity(n, m);
    if (!p["A"].is_null())
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) fixed.A(i, j) = p["A"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    fixed.w = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    if (!p["w"].is_null())
      for (Eigen::Index j = 0; j < m; ++j) fixed.w[j] = p["w"][static_cast<std::size_t>(j)].get<double>();
    fixed.lambda = p["lambda"].get<double>();
    fixed.noise_tau = p["tau"].get<double>();
  }

  struct Out {
    VectorXd w, raw, projected;
    double lambda = kNaN;
    std::string error;
  };
  std::vector<Out> out(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Out& o = out[t];
    try {
      Rng rng(derive_seed(cfg.seed, t));
      cumulant::PoissonReduction model = fixed;
      cumulant::WeightEstimate est;
      if (analytic) {
        std::normal_distribution<double> z;
        std::uniform_real_distribution<double> u(0.1, 1.0);
        model.A = MatrixXd::NullaryExpr(n, m, [&] { return z(rng); });
        model.w = VectorXd::NullaryExpr(m, [&] { return u(rng); });
        model.w /= model.w.sum();
        model.lambda = 0.5 + 9.5 * u(rng);
        model.noise_tau = u(rng);
        est = cumulant::recover_weights_from_tensor(cumulant::analytic_cumulant(model, order), model.A, model.lambda);
      } else {
        est = cumulant::recover_weights(cumulant::sample_reduction(model, samples, rng), model.A, model.lambda, order);
      }
      o.w = model.w;
      o.lambda = model.lambda;
      o.raw = est.raw;
      o.projected = est.projected;
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  });

  Table t;
  std::size_t within = 0;
  double worst = 0.0;
  json errors = json::array();
  for (std::size_t tr = 0; tr < trials; ++tr) {
    const Out& o = out[tr];
    const std::string seed = fmt(derive_seed(cfg.seed, tr));
    if (!o.error.empty()) {
      ++t.failed;
      t.rows.push_back({fmt(static_cast<std::uint64_t>(tr)), "", "", "", "", "", seed, csv_escape(o.error)});
      errors.push_back(nullptr);
      continue;
    }
    for (Eigen::Index j = 0; j < o.w.size(); ++j)
      t.rows.push_back({fmt(static_cast<std::uint64_t>(tr)), fmt(static_cast<std::int64_t>(j)), fmt(o.w[j]),
                        fmt(o.raw[j]), fmt(o.projected[j]), fmt(o.lambda), seed, ""});
    const double e = (o.raw - o.w).cwiseAbs().maxCoeff();
    errors.push_back(e);
    worst = std::max(worst, e);
    within += e <= tol;
  }
  t.summary["max_abs_error_per_trial"] = errors;
  t.summary["worst_max_abs_error"] = worst;
  t.summary["fraction_within_tolerance"] = static_cast<double>(within) / static_cast<double>(trials);
  return t;
}

// ---- smoothed --------------------------------------------------------------

Table run_smoothed(const ExperimentConfig& cfg, unsigned threads) {
  const json& p = cfg.params;
  smoothed::SmoothedExperiment exp;
  const int n = p["n"].get<int>();
  if (p["base"] == "csv") {
    const std::string path = p["base_path"].get<std::string>();
    std::ifstream in(path);
    if (!in) throw ConfigError({{"params.base_path", "cannot read " + path, 0}});
    try {
      exp.base = smoothed::SmoothedExperiment::base_from_csv(in);
    } catch (const std::exception& e) {
      throw ConfigError({{"params.base_path", e.what(), 0}});
    }
    if (exp.base.rows() != n || exp.base.cols() != n * (n - 1) / 2)
      throw ConfigError({{"params.base_path", "base matrix must be n x C(n,2) = " + std::to_string(n) + " x " +
                                                  std::to_string(n * (n - 1) / 2),
                          0}});
  } else {
    exp.base = p["base"] == "zero" ? smoothed::SmoothedExperiment::zero_base(n)
                                   : smoothed::SmoothedExperiment::collinear_base(n);
  }
  exp.sigma = p["sigma"].get<double>();
  exp.trials = p["trials"].get<int>();

  const smoothed::SmoothedSummary s = smoothed::smoothed_experiment(exp, cfg.seed, threads);
  Table t;
  for (std::size_t tr = 0; tr < s.outcomes.size(); ++tr) {
    const auto& o = s.outcomes[tr];
    std::string error;
    if (!o.full_rank) error = "column rank deficient";
    t.failed += !error.empty();
    t.rows.push_back({fmt(static_cast<std::uint64_t>(tr)), fmt(o.sigma_min), fmt(o.min_column_distance),
                      fmt(o.below_threshold), fmt(o.sandwich_holds), fmt(o.polynomial_residual), fmt(o.seed), error});
  }
  smoothed::to_json(t.summary, s);
  return t;
}

fs::path default_output_dir(const RunOptions& opt) {
  if (!opt.output_dir.empty()) return opt.output_dir;
  if (const char* env = std::getenv("HTICA_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

}  // namespace

std::vector<std::string> csv_columns(Kind k) {
  switch (k) {
    case Kind::Closeness:
      return {"k", "h", "alpha", "beta", "l1_distance", "condition_number", "seed", "error"};
    case Kind::Membership:
      return {"trial", "query_class", "answer", "N_used", "lp_iterations", "seed", "error"};
    case Kind::HeavyTail:
      return {"cell", "trial", "gamma", "epsilon", "N", "abs_mean", "failed", "seed", "error"};
    case Kind::Weights:
      return {"trial", "component", "w_true", "w_raw", "w_projected", "lambda", "seed", "error"};
    case Kind::Smoothed:
      return {"trial", "sigma_min", "min_column_distance", "below_threshold", "sandwich_holds",
              "polynomial_residual", "seed", "error"};
  }
  return {};
}

std::pair<fs::path, fs::path> output_paths(const ExperimentConfig& cfg, const RunOptions& opt) {
  fs::path csv = cfg.output_path.empty()
                     ? fs::path(std::string(kind_name(cfg.experiment)) + "_" + std::to_string(cfg.seed) + ".csv")
                     : fs::path(cfg.output_path);
  if (csv.is_relative()) csv = default_output_dir(opt) / csv;
  fs::path summary = csv;
  summary.replace_extension(".summary.json");
  return {csv, summary};
}

RunResult run(const ExperimentConfig& cfg, const RunOptions& opt) {
  const unsigned threads = std::max(1u, opt.threads);
  Table t;
  switch (cfg.experiment) {
    case Kind::Closeness: t = run_closeness(cfg, threads); break;
    case Kind::Membership: t = run_membership(cfg, threads); break;
    case Kind::HeavyTail: t = run_heavytail(cfg, threads); break;
    case Kind::Weights: t = run_weights(cfg, threads); break;
    case Kind::Smoothed: t = run_smoothed(cfg, threads); break;
  }

  RunResult r;
  std::tie(r.csv_path, r.summary_path) = output_paths(cfg, opt);
  if (r.csv_path.has_parent_path()) fs::create_directories(r.csv_path.parent_path());

  std::ofstream csv(r.csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + r.csv_path.string());
  const auto cols = csv_columns(cfg.experiment);
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
    csv << '\n';
  }
  csv.close();
  if (!csv) throw std::runtime_error("failed writing " + r.csv_path.string());

  r.rows = t.rows.size();
  r.failed_rows = t.failed;
  r.summary = json{{"version", kVersion},
                   {"config", cfg.to_json()},
                   {"csv", r.csv_path.filename().string()},
                   {"rows", r.rows},
                   {"failed_rows", r.failed_rows},
                   {"results", t.summary}};
  std::ofstream js(r.summary_path, std::ios::binary);
  if (!js) throw std::runtime_error("cannot write " + r.summary_path.string());
  js << r.summary.dump(2) << '\n';
  if (!js) throw std::runtime_error("failed writing " + r.summary_path.string());
  return r;
}

}  // namespace htica::experiments
