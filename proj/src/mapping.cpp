#include "bcdnet/mapping.hpp"

#include "bcdnet/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace bcdnet {

void LayerMapping::validate() const {
  const auto r = static_cast<Eigen::Index>(patch_len());
  if (r == 0) throw InvalidArgument("layer patch dimensions must be positive");
  if (filters.rows() != r) {
    throw InvalidArgument("filter length " + std::to_string(filters.rows()) +
                          " does not match patch length " + std::to_string(r));
  }
  if (filters.cols() == 0) throw InvalidArgument("layer has no filters");
  if (thresholds.size() != filters.cols()) {
    throw InvalidArgument("threshold count does not match filter count");
  }
  for (Eigen::Index k = 0; k < filters.cols(); ++k) {
    if (!(thresholds[k] >= 0.0) || !std::isfinite(thresholds[k])) {
      throw InvalidArgument("threshold " + std::to_string(k) + " is negative or not finite");
    }
    const double nrm = filters.col(k).norm();
    if (!(nrm <= 1.0 + kFilterNormSlack)) {
      throw InvalidArgument("filter " + std::to_string(k) + " has norm " + std::to_string(nrm) +
                            " > 1");
    }
  }
}

Image apply_mapping(const LayerMapping& layer, const Image& x) {
  layer.validate();
  if (layer.patch_h > x.height() || layer.patch_w > x.width()) {
    throw ShapeError("patch larger than image");
  }
  const auto positions = all_positions(x.height(), x.width());
  PatchMatrix pm = extract_patches(x, layer.patch_h, layer.patch_w, positions);
  Eigen::MatrixXcd coeffs = layer.filters.adjoint() * pm.data;
  for (Eigen::Index n = 0; n < coeffs.cols(); ++n) {
    for (Eigen::Index k = 0; k < coeffs.rows(); ++k) {
      coeffs(k, n) = soft_threshold(coeffs(k, n), layer.thresholds[k]);
    }
  }
  pm.data.noalias() = layer.filters * coeffs;
  return aggregate_patches(pm, positions, x.height(), x.width());
}

Image apply_mapping_averaged(const LayerMapping& layer, const Image& x) {
  Image z = apply_mapping(layer, x);
  const double inv = 1.0 / static_cast<double>(layer.patch_len());
  for (cplx& p : z.pixels()) p *= inv;
  return z;
}

Eigen::MatrixXcd init_dct_filters(std::size_t patch_h, std::size_t patch_w,
                                  std::size_t n_filters) {
  const std::size_t r = patch_h * patch_w;
  if (r == 0) throw InvalidArgument("patch dimensions must be positive");
  if (n_filters == 0 || n_filters > r) {
    throw InvalidArgument("filter count " + std::to_string(n_filters) +
                          " must lie in [1, " + std::to_string(r) + "]");
  }
  auto basis_1d = [](std::size_t n, std::size_t freq, std::size_t i) {
    const double scale = std::sqrt((freq == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    return scale * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                            static_cast<double>(freq) / (2.0 * static_cast<double>(n)));
  };
  Eigen::MatrixXcd d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n_filters));
  for (std::size_t k = 0; k < n_filters; ++k) {
    const std::size_t u = k / patch_w;
    const std::size_t v = k % patch_w;
    for (std::size_t i = 0; i < patch_h; ++i) {
      for (std::size_t j = 0; j < patch_w; ++j) {
        d(static_cast<Eigen::Index>(i * patch_w + j), static_cast<Eigen::Index>(k)) =
            basis_1d(patch_h, u, i) * basis_1d(patch_w, v, j);
      }
    }
  }
  return d;
}

}  // namespace bcdnet
