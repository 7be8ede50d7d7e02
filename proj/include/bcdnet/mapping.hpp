#pragma once

#include "bcdnet/numerics.hpp"

#include <Eigen/Core>

#include <cstddef>

namespace bcdnet {

/// One trained layer of the identical encoding-decoding mapping: K filters
/// used both to encode (D^H) and decode (D), and one soft threshold per filter.
struct LayerMapping {
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  Eigen::MatrixXcd filters;   // R x K, column k is filter d_k (row-major patch)
  Eigen::VectorXd thresholds;  // K, nonnegative

  std::size_t patch_len() const noexcept { return patch_h * patch_w; }
  std::size_t n_filters() const noexcept { return static_cast<std::size_t>(filters.cols()); }

  /// Throws InvalidArgument if dimensions disagree, a threshold is negative,
  /// or a filter norm exceeds 1 + kFilterNormSlack.
  void validate() const;
};

inline constexpr double kFilterNormSlack = 1e-9;

/// z = sum_n P_n^T D T_alpha(D^H P_n x) over every stride-1 circular patch
/// position. Overlaps are summed, not averaged.
Image apply_mapping(const LayerMapping& layer, const Image& x);

/// apply_mapping divided by the patch length R: the average of the
/// overlapping per-patch estimates. This is the per-layer image estimate
/// used by recovery and training, since each patch is trained to reproduce
/// its clean counterpart.
Image apply_mapping_averaged(const LayerMapping& layer, const Image& x);

/// First K atoms of the orthonormal 2-D DCT-II basis for R_h x R_w patches,
/// atom (u, v) at column u * R_w + v, vectorized row-major.
Eigen::MatrixXcd init_dct_filters(std::size_t patch_h, std::size_t patch_w, std::size_t n_filters);

}  // namespace bcdnet
