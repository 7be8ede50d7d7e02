#pragma once

#include "bcdnet/numerics.hpp"
#include "bcdnet/recovery.hpp"

#include <cstddef>
#include <cstdint>

namespace bcdnet {

enum class PhantomKind : std::uint8_t { ellipse, blocks };

/// Deterministic piecewise-smooth test image with magnitude in [0, 1]. The
/// complex variant multiplies by a smooth synthetic phase.
Image gen_phantom(PhantomKind kind, std::size_t height, std::size_t width, std::uint64_t seed,
                  bool complex_valued = false);

/// Adds i.i.d. N(0, sigma^2) noise to the real part (and to the imaginary part
/// when complex_noise is set). sigma = 0 returns the input unchanged.
Image add_awgn(const Image& img, double sigma, std::uint64_t seed, bool complex_noise);

/// Variable-density Cartesian mask with exactly round(rate * h * w) samples:
/// a fully sampled centered square of side ceil(sqrt(center_fraction * budget))
/// plus samples drawn without replacement with weight (1 + |k| / k0)^-2,
/// k0 = max(h, w) / 16. Returned in unshifted DFT order.
SamplingMask gen_mask(std::size_t height, std::size_t width, double rate, double center_fraction,
                      std::uint64_t seed);

/// Unitary DFT of a high-resolution phantom cropped to the central
/// target_h x target_w band (rescaled so the coarse grid keeps the image
/// intensity scale), masked, plus complex noise of std sigma_k on the mask.
Image simulate_kspace(const Image& phantom_hi, std::size_t target_h, std::size_t target_w,
                      const SamplingMask& mask, double sigma_k, std::uint64_t seed);

/// Band-limited downsampling of a high-resolution image: the inverse DFT of
/// its fully sampled, noiseless cropped spectrum. The reference image for a
/// supersampled MRI simulation.
Image bandlimit_downsample(const Image& phantom_hi, std::size_t target_h, std::size_t target_w);

/// sigma on a [0, 255] scale mapped to an image whose peak is `peak`.
inline double natural_sigma_to_scale(double sigma_natural, double peak) {
  return sigma_natural * peak / 255.0;
}

}  // namespace bcdnet
