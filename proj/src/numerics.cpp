#include "bcdnet/numerics.hpp"

#include "bcdnet/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>

namespace bcdnet {

Image::Image(std::size_t height, std::size_t width, Domain domain)
    : height_(height), width_(width), domain_(domain), pixels_(height * width) {
  if (height == 0 || width == 0) throw ShapeError("image dimensions must be positive");
}

Image::Image(std::size_t height, std::size_t width, std::vector<cplx> pixels, Domain domain)
    : height_(height), width_(width), domain_(domain), pixels_(std::move(pixels)) {
  if (height == 0 || width == 0) throw ShapeError("image dimensions must be positive");
  if (pixels_.size() != height * width) {
    throw ShapeError("pixel count " + std::to_string(pixels_.size()) + " does not match " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

bool Image::is_real() const noexcept {
  return std::all_of(pixels_.begin(), pixels_.end(), [](cplx p) { return p.imag() == 0.0; });
}

bool Image::all_finite() const noexcept {
  return std::all_of(pixels_.begin(), pixels_.end(), [](cplx p) {
    return std::isfinite(p.real()) && std::isfinite(p.imag());
  });
}

double Image::norm() const noexcept {
  double acc = 0.0;
  for (const cplx& p : pixels_) acc += abs2(p);
  return std::sqrt(acc);
}

double Image::max_magnitude() const noexcept {
  double m = 0.0;
  for (const cplx& p : pixels_) m = std::max(m, magnitude(p));
  return m;
}

cplx soft_threshold(cplx v, double a) {
  if (!(a >= 0.0)) throw InvalidArgument("soft threshold must be nonnegative");
  const double mag = magnitude(v);
  if (mag <= a) return {0.0, 0.0};
  // v/|v| is exactly +-1 for real v, so the real case stays exact.
  return v - a * (v / mag);
}

namespace {

// fftw planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : ptr(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (ptr == nullptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* ptr;
};

Image dft2(const Image& img, int sign, Domain out_domain) {
  if (img.empty()) throw ShapeError("cannot transform an image with a zero dimension");
  const std::size_t n = img.size();
  FftwBuffer in(n);
  FftwBuffer out(n);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(img.height()), static_cast<int>(img.width()),
                            in.ptr, out.ptr, sign, FFTW_ESTIMATE);
  }
  std::memcpy(in.ptr, img.pixels().data(), sizeof(fftw_complex) * n);
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Image result(img.height(), img.width(), out_domain);
  for (std::size_t i = 0; i < n; ++i) result[i] = cplx(out.ptr[i][0], out.ptr[i][1]) * scale;
  return result;
}

}  // namespace

Image fft2_unitary(const Image& img) { return dft2(img, FFTW_FORWARD, Domain::frequency); }

Image ifft2_unitary(const Image& img) { return dft2(img, FFTW_BACKWARD, Domain::spatial); }

std::vector<PatchPos> all_positions(std::size_t height, std::size_t width) {
  std::vector<PatchPos> positions;
  positions.reserve(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) positions.push_back({r, c});
  }
  return positions;
}

namespace {

void check_patch_dims(std::size_t patch_h, std::size_t patch_w, std::size_t height,
                      std::size_t width) {
  if (patch_h == 0 || patch_w == 0 || patch_h > height || patch_w > width) {
    throw ShapeError("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                     " does not fit image " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

}  // namespace

PatchMatrix extract_patches(const Image& img, std::size_t patch_h, std::size_t patch_w,
                            std::span<const PatchPos> positions) {
  check_patch_dims(patch_h, patch_w, img.height(), img.width());
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  PatchMatrix pm{patch_h, patch_w,
                 Eigen::MatrixXcd(static_cast<Eigen::Index>(patch_h * patch_w),
                                  static_cast<Eigen::Index>(positions.size()))};
  for (std::size_t n = 0; n < positions.size(); ++n) {
    cplx* col = pm.data.col(static_cast<Eigen::Index>(n)).data();
    const std::size_t r0 = positions[n].row % h;
    const std::size_t c0 = positions[n].col % w;
    for (std::size_t a = 0; a < patch_h; ++a) {
      const std::size_t r = (r0 + a) % h;
      for (std::size_t b = 0; b < patch_w; ++b) *col++ = img(r, (c0 + b) % w);
    }
  }
  return pm;
}

Image aggregate_patches(const PatchMatrix& pm, std::span<const PatchPos> positions,
                        std::size_t height, std::size_t width) {
  check_patch_dims(pm.patch_h, pm.patch_w, height, width);
  if (pm.n_cols() != positions.size() ||
      static_cast<std::size_t>(pm.data.rows()) != pm.patch_len()) {
    throw ShapeError("patch matrix is " + std::to_string(pm.data.rows()) + "x" +
                     std::to_string(pm.n_cols()) + " but " + std::to_string(positions.size()) +
                     " positions of length " + std::to_string(pm.patch_len()) + " were given");
  }
  Image out(height, width);
  for (std::size_t n = 0; n < positions.size(); ++n) {
    const cplx* col = pm.data.col(static_cast<Eigen::Index>(n)).data();
    const std::size_t r0 = positions[n].row % height;
    const std::size_t c0 = positions[n].col % width;
    for (std::size_t a = 0; a < pm.patch_h; ++a) {
      const std::size_t r = (r0 + a) % height;
      for (std::size_t b = 0; b < pm.patch_w; ++b) out(r, (c0 + b) % width) += *col++;
    }
  }
  return out;
}

double psnr(const Image& recon, const Image& reference, std::optional<double> peak) {
  if (!recon.same_shape(reference)) throw ShapeError("psnr inputs differ in shape");
  if (reference.empty()) throw ShapeError("psnr of empty images");
  const double pk = peak.value_or(reference.max_magnitude());
  if (!(pk > 0.0)) throw InvalidArgument("psnr peak must be positive");
  double sse = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) sse += abs2(recon[i] - reference[i]);
  if (sse == 0.0) return kPerfectPsnr;
  const double rmse = std::sqrt(sse / static_cast<double>(recon.size()));
  return 20.0 * std::log10(pk / rmse);
}

}  // namespace bcdnet
