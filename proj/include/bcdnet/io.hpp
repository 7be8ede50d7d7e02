#pragma once

// Binary formats (all little-endian):
//   CIMG  "CIMG" u32 version=1, u32 height, u32 width, u8 dtype
//         (0 real f64, 1 complex f64 re,im), row-major payload
//   CMSK  "CMSK" u32 version=1, u32 height, u32 width, h*w bytes of 0/1
//   BCDN  "BCDN" u32 version=1, u32 n_layers, u32 K, u32 R_h, u32 R_w,
//         u8 problem kind, f64 lambda, then per layer K f64 thresholds and
//         K filters of R_h*R_w complex f64 (re, im), row-major
// plus the flat key=value configuration file and the metrics CSVs.

#include "bcdnet/numerics.hpp"
#include "bcdnet/recovery.hpp"
#include "bcdnet/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bcdnet {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Real dtype is written when every imaginary part is zero.
Bytes encode_image(const Image& img);
Image decode_image(std::span<const std::uint8_t> bytes, Domain domain = Domain::spatial);
void write_image(const std::filesystem::path& path, const Image& img);
Image read_image(const std::filesystem::path& path, Domain domain = Domain::spatial);

Bytes encode_mask(const SamplingMask& mask);
SamplingMask decode_mask(std::span<const std::uint8_t> bytes);
void write_mask(const std::filesystem::path& path, const SamplingMask& mask);
SamplingMask read_mask(const std::filesystem::path& path);

/// All layers must share K, R_h and R_w.
Bytes serialize_model(const RecoveryModel& model);
/// Filters whose norm is above 1 by at most kFilterNormSlack are rescaled to
/// unit norm; larger norms are a FormatError.
RecoveryModel deserialize_model(std::span<const std::uint8_t> bytes);
void write_model(const std::filesystem::path& path, const RecoveryModel& model);
RecoveryModel read_model(const std::filesystem::path& path);

/// Header `layer,psnr_db,layer_cost`, one row per layer, %.17g values.
std::string format_metrics_csv(std::span<const TraceRow> rows);
std::vector<TraceRow> parse_metrics_csv(std::string_view text);
void write_metrics_csv(const std::filesystem::path& path, std::span<const TraceRow> rows);

/// Header `layer,sweep,objective,rel_change`.
std::string format_training_csv(std::span<const SweepRecord> rows);
void write_training_csv(const std::filesystem::path& path, std::span<const SweepRecord> rows);

/// Parsed `key = value` configuration. Unknown or repeated keys are rejected.
struct RunConfig {
  ProblemKind problem = ProblemKind::denoising;
  std::optional<double> lambda;
  double sigma = 30.0;  // noise std on the [0, 255] scale
  double peak = 1.0;    // clean-image peak used to rescale sigma
  double rate = 0.1;
  double center_fraction = 0.3;
  TrainingConfig training;
  std::string train_dir;
  std::string model_path;
  std::string metrics_path;

  /// lambda if given, else 10 / sigma' (denoising) or 1e6 (MRI).
  double resolved_lambda() const;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace bcdnet
