#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geld/model.hpp"
#include "geld/tsp.hpp"
#include "json.hpp"

namespace geld {

// ---- TSPLIB ---------------------------------------------------------------

class TsplibError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// TYPE other than TSP, or an edge-weight type other than EUC_2D.
class UnsupportedFormatError : public TsplibError {
 public:
  using TsplibError::TsplibError;
};
/// DIMENSION disagrees with the number of coordinate rows.
class DimensionMismatchError : public TsplibError {
 public:
  using TsplibError::TsplibError;
};
/// A required keyword or section is absent.
class MissingFieldError : public TsplibError {
 public:
  using TsplibError::TsplibError;
};
/// A line that cannot be read as a header entry or coordinate row.
class MalformedLineError : public TsplibError {
 public:
  using TsplibError::TsplibError;
};
/// Node ids repeated, out of 1..DIMENSION, or missing.
class NodeIdError : public TsplibError {
 public:
  using TsplibError::TsplibError;
};

/// EUC_2D instances use the rounded metric. The optional keyword
/// `METRIC_MODE : CONTINUOUS` (written for generated instances) selects plain
/// Euclidean distances instead.
TspInstance parse_tsplib(std::string_view text);
std::string write_tsplib(const TspInstance& inst, std::string_view comment = {});
TspInstance load_tsplib(const std::filesystem::path& path);
void save_tsplib(const std::filesystem::path& path, const TspInstance& inst);

/// TOUR_SECTION of a .tour file, converted to 0-based ids.
std::vector<int> parse_tsplib_tour(std::string_view text);

// ---- checkpoints ----------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// "GELDCKPT", u32 version, u32 tensor count, then per tensor: u32 name
/// length, UTF-8 name, u32 rank, u32 dims, f32 values; all little-endian.
/// Ends with the u64 FNV-1a hash of everything after the version field.
std::vector<std::uint8_t> serialize_checkpoint(const InferParams& params);
InferParams deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const InferParams& params, const std::filesystem::path& path);
InferParams load_checkpoint(const std::filesystem::path& path);

// ---- reports --------------------------------------------------------------

struct ReportRow {
  std::string name;
  std::size_t n = 0;
  std::string method;
  double length = 0.0;
  std::optional<double> gap_pct;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

struct RunReport {
  std::vector<ReportRow> rows;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  std::string to_table() const;
};

}  // namespace geld
