#pragma once

// Config-driven experiment runner: one CSV of per-trial rows and one JSON
// summary per run, fully determined by the config and its seed.

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace htica::experiments {

inline constexpr const char* kVersion = "0.1.0";

enum class Kind { Closeness, Membership, HeavyTail, Weights, Smoothed };

const char* kind_name(Kind k);

struct Diagnostic {
  std::string field;  // "" for whole-document problems
  std::string message;
  int line = 0;       // 1-based, 0 if unknown

  std::string to_string() const;
};

struct ExperimentConfig {
  Kind experiment = Kind::Closeness;
  std::uint64_t seed = 0;
  /// Every parameter of the experiment, defaults filled in.
  nlohmann::json params = nlohmann::json::object();
  /// CSV path as written in the config; empty selects the default name.
  std::string output_path;

  nlohmann::json to_json() const;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<Diagnostic> d);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

/// Parses JSON text. Syntax errors become a ConfigError with the line.
nlohmann::json parse_config_text(const std::string& text);
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Applies "key=value". Top-level keys (experiment, seed, output_path) are
/// set directly, anything else goes under params; a "params." prefix is
/// accepted. The value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& raw, const std::string& assignment);

/// Schema and range checks; never throws.
std::vector<Diagnostic> validate(const nlohmann::json& raw);

/// Parses and validates config text; field diagnostics get the line of
/// the first occurrence of the key.
std::vector<Diagnostic> validate_text(const std::string& text);

/// validate() then build; throws ConfigError when diagnostics are present.
ExperimentConfig parse_config(const nlohmann::json& raw);

struct RunOptions {
  unsigned threads = 1;
  /// Base for relative output paths; empty reads HTICA_OUTPUT_DIR, then ".".
  std::filesystem::path output_dir;
};

struct RunResult {
  std::filesystem::path csv_path;
  std::filesystem::path summary_path;
  std::size_t rows = 0;
  /// Rows whose computation raised; their error column is non-empty.
  std::size_t failed_rows = 0;
  nlohmann::json summary;
};

/// Resolved CSV and summary locations (summary is <stem>.summary.json).
std::pair<std::filesystem::path, std::filesystem::path> output_paths(const ExperimentConfig& cfg,
                                                                     const RunOptions& opt);

/// Rows are written in trial order whatever the thread count. Per-row
/// numerical failures are recorded in the row; I/O failures throw.
RunResult run(const ExperimentConfig& cfg, const RunOptions& opt = {});

/// CSV header for each experiment, in column order.
std::vector<std::string> csv_columns(Kind k);

}  // namespace htica::experiments
