#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

/// Manifest-driven experiment runner.
///
/// A manifest is a JSON object {"kind", "seed", "output"?, "params"}. Every
/// real-valued parameter is written {"value": v, "unit": u}; integers
/// (counts, indices, seeds) are plain. Units: "nat" for natural units
/// (hbar = m = 1), "1" for pure numbers, and SI-style units for the kinds
/// that work in SI.
namespace neqlab::bench {

inline constexpr const char* kToolName = "neqlab";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSummarySchema = "neqlab.summary/1";
inline constexpr const char* kRecordSchema = "neqlab.run_record/1";

struct ExperimentInfo {
  std::string kind;
  std::string description;
  std::string topic;  ///< the model quantity the experiment exercises
};

/// The eleven experiment kinds, in a fixed order.
const std::vector<ExperimentInfo>& list_experiments();

/// One schema violation: dotted field path and reason.
struct SchemaError {
  std::string field;
  std::string reason;
  std::string str() const { return field + ": " + reason; }
};

/// All schema violations of a manifest (empty when valid). No side effects.
std::vector<SchemaError> validate_manifest(const nlohmann::json& manifest);
/// Reads and validates a file; an unreadable file or malformed JSON is reported as an I/O error (throws).
std::vector<SchemaError> validate_file(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::uint64_t> seed;           ///< overrides the manifest seed
  std::optional<std::filesystem::path> output; ///< overrides the manifest output directory
  int threads = 0;
};

struct OutputFile {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunRecord {
  nlohmann::json manifest;  ///< effective manifest (overrides applied)
  std::filesystem::path output_dir;
  std::vector<OutputFile> outputs;  ///< data files and the summary, with checksums
  nlohmann::json summary;
  double wall_time_s = 0.0;
  nlohmann::json to_json() const;
};

/// Validates, runs the experiment, and writes its CSV files, summary.json and
/// run_record.json (each written to a temporary name and renamed into place).
/// ValidationError on schema violations (every violation listed), NumericalError
/// from the experiment with the kind prefixed.
RunRecord run_manifest(const nlohmann::json& manifest, const RunOptions& options = {});
RunRecord run_file(const std::filesystem::path& path, const RunOptions& options = {});

/// Hex SHA-256 of a byte string / file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace neqlab::bench
