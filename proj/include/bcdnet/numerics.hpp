#pragma once

// Complex image containers and the numerical primitives shared by the
// mapping, training, and recovery code: soft thresholding, the unitary 2-D
// DFT, circular patch extraction and its adjoint, and PSNR.

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace bcdnet {

using cplx = std::complex<double>;

enum class Domain : std::uint8_t { spatial, frequency };

/// Row-major 2-D grid of complex doubles. Real images keep zero imaginary
/// parts.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, Domain domain = Domain::spatial);
  Image(std::size_t height, std::size_t width, std::vector<cplx> pixels,
        Domain domain = Domain::spatial);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  Domain domain() const noexcept { return domain_; }
  void set_domain(Domain d) noexcept { domain_ = d; }

  cplx& operator()(std::size_t row, std::size_t col) { return pixels_[row * width_ + col]; }
  const cplx& operator()(std::size_t row, std::size_t col) const {
    return pixels_[row * width_ + col];
  }
  cplx& operator[](std::size_t i) { return pixels_[i]; }
  const cplx& operator[](std::size_t i) const { return pixels_[i]; }

  std::span<cplx> pixels() noexcept { return pixels_; }
  std::span<const cplx> pixels() const noexcept { return pixels_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  /// True when every imaginary part is exactly zero.
  bool is_real() const noexcept;
  bool all_finite() const noexcept;
  double norm() const noexcept;
  double max_magnitude() const noexcept;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  Domain domain_ = Domain::spatial;
  std::vector<cplx> pixels_;
};

/// Top-left corner of a patch window. Coordinates wrap modulo the image size.
struct PatchPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PatchPos&, const PatchPos&) = default;
};

/// Columns are vectorized patch_h x patch_w windows, row-major inside each
/// patch.
struct PatchMatrix {
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  Eigen::MatrixXcd data;  // (patch_h * patch_w) x n_cols, column-major

  std::size_t patch_len() const noexcept { return patch_h * patch_w; }
  std::size_t n_cols() const noexcept { return static_cast<std::size_t>(data.cols()); }
};

/// Complex soft thresholding: shrinks |v| by a and keeps the phase; zero when
/// |v| <= a. Throws InvalidArgument for a < 0.
// std::norm / std::abs on complex<double> go through hypot in libstdc++.
inline double abs2(cplx v) noexcept { return v.real() * v.real() + v.imag() * v.imag(); }
inline double magnitude(cplx v) noexcept { return std::sqrt(abs2(v)); }

cplx soft_threshold(cplx v, double a);

/// Orthonormal 2-D DFT (1/sqrt(HW) scaling). Output is tagged frequency.
Image fft2_unitary(const Image& img);
/// Inverse of fft2_unitary. Output is tagged spatial.
Image ifft2_unitary(const Image& img);

/// Every stride-1 position of an h x w image in row-major order.
std::vector<PatchPos> all_positions(std::size_t height, std::size_t width);

PatchMatrix extract_patches(const Image& img, std::size_t patch_h, std::size_t patch_w,
                            std::span<const PatchPos> positions);

/// Adjoint of extract_patches: scatters each column back onto its (wrapped)
/// window and sums overlaps.
Image aggregate_patches(const PatchMatrix& pm, std::span<const PatchPos> positions,
                        std::size_t height, std::size_t width);

inline constexpr double kPerfectPsnr = std::numeric_limits<double>::infinity();

/// 20 log10(peak / RMSE) over complex magnitudes of the difference. Returns
/// kPerfectPsnr when the inputs are identical. peak defaults to the largest
/// reference magnitude.
double psnr(const Image& recon, const Image& reference, std::optional<double> peak = {});

}  // namespace bcdnet
