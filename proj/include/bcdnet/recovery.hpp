#pragma once

#include "bcdnet/mapping.hpp"
#include "bcdnet/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace bcdnet {

enum class ProblemKind : std::uint8_t { denoising = 0, mri = 1 };

/// Cartesian sampling set Omega, stored in unshifted DFT order (DC at [0,0]).
struct SamplingMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> sampled;  // row-major, 0 or 1

  std::size_t count() const noexcept;
  bool operator[](std::size_t i) const noexcept { return sampled[i] != 0; }
};

/// Data-fit term f(x; y). For denoising y is the noisy image; for MRI y is the
/// k-space grid with zeros off the mask.
struct ForwardProblem {
  ProblemKind kind = ProblemKind::denoising;
  Image y;
  SamplingMask mask;  // MRI only

  static ForwardProblem denoising(Image noisy);
  static ForwardProblem mri(Image kspace, SamplingMask mask);

  /// Throws ShapeError when the mask does not match y (MRI).
  void validate() const;
  /// f(x; y) without a 1/2 factor.
  double data_fit(const Image& x) const;
  /// Standard warm start: y for denoising, zero-filled inverse DFT for MRI.
  Image initial_estimate() const;
};

struct RecoveryModel {
  std::vector<LayerMapping> layers;
  double lambda = 1.0;
  ProblemKind kind = ProblemKind::denoising;

  void validate() const;
};

/// x = (y + lambda z) / (1 + lambda).
Image x_update_denoise(const Image& y, const Image& z, double lambda);

/// Exact minimizer of ||y - P_Omega F x||^2 + lambda ||x - z||^2, diagonal in
/// the unitary DFT domain.
Image x_update_mri(const Image& y, const SamplingMask& mask, const Image& z, double lambda);

Image x_update(const ForwardProblem& problem, const Image& z, double lambda);

struct RecoveryResult {
  Image image;
  std::vector<Image> iterates;  // x^(0) .. x^(N)
  std::vector<Image> mapped;    // z^(1) .. z^(N)
  std::vector<double> layer_costs;  // f(x^(i)) + lambda ||x^(i) - z^(i)||^2, i = 1..N
};

/// Alternates the per-layer mapping and the x-update. max_layers limits the
/// number of layers run (all by default).
RecoveryResult recover(const RecoveryModel& model, const ForwardProblem& problem, const Image& x0,
                       std::size_t max_layers = static_cast<std::size_t>(-1));

struct TraceRow {
  std::size_t layer = 0;
  double psnr_db = 0.0;
  double layer_cost = 0.0;
};

/// One row per layer; PSNR is NaN when no reference is supplied.
std::vector<TraceRow> recovery_trace(const RecoveryResult& result, const Image* reference,
                                     std::optional<double> peak = {});

}  // namespace bcdnet
