#include "bcdnet/simulate.hpp"

#include "bcdnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace bcdnet {

namespace {

struct Ellipse {
  double cx, cy, a, b, theta, value;
};

bool inside(const Ellipse& e, double x, double y) {
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double u = (c * dx + s * dy) / e.a;
  const double v = (-s * dx + c * dy) / e.b;
  return u * u + v * v <= 1.0;
}

// Pixel-center coordinate in [-1, 1].
double centered(std::size_t i, std::size_t n) {
  return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0;
}

Image ellipse_phantom(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const Ellipse head{0.0, 0.0, 0.78 + 0.1 * U(rng), 0.62 + 0.1 * U(rng),
                     0.3 * (U(rng) - 0.5), 0.55 + 0.15 * U(rng)};
  std::vector<Ellipse> blobs;
  const int n_blobs = 5 + static_cast<int>(U(rng) * 4.0);
  for (int i = 0; i < n_blobs; ++i) {
    const double r = 0.55 * std::sqrt(U(rng));
    const double phi = 2.0 * std::numbers::pi * U(rng);
    blobs.push_back({r * std::cos(phi) * head.a, r * std::sin(phi) * head.b, 0.06 + 0.22 * U(rng),
                     0.05 + 0.18 * U(rng), std::numbers::pi * U(rng), 0.6 * (U(rng) - 0.4)});
  }
  // Smooth in-object shading keeps the image piecewise smooth rather than flat.
  const double fx = 0.5 + U(rng);
  const double fy = 0.5 + U(rng);
  const double ph = 2.0 * std::numbers::pi * U(rng);

  Image img(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const double y = centered(r, h);
    for (std::size_t c = 0; c < w; ++c) {
      const double x = centered(c, w);
      if (!inside(head, x, y)) continue;
      double v = head.value * (1.0 + 0.08 * std::cos(std::numbers::pi * (fx * x + fy * y) + ph));
      for (const auto& e : blobs) {
        if (inside(e, x, y)) v += e.value;
      }
      img(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

Image block_phantom(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Image img(h, w);
  const double background = 0.1 * U(rng);
  for (auto& p : img.pixels()) p = background;
  const int n_blocks = 6 + static_cast<int>(U(rng) * 5.0);
  for (int i = 0; i < n_blocks; ++i) {
    const auto r0 = static_cast<std::size_t>(U(rng) * 0.8 * static_cast<double>(h));
    const auto c0 = static_cast<std::size_t>(U(rng) * 0.8 * static_cast<double>(w));
    const auto bh = std::max<std::size_t>(2, static_cast<std::size_t>((0.1 + 0.3 * U(rng)) *
                                                                      static_cast<double>(h)));
    const auto bw = std::max<std::size_t>(2, static_cast<std::size_t>((0.1 + 0.3 * U(rng)) *
                                                                      static_cast<double>(w)));
    const double value = 0.2 + 0.8 * U(rng);
    for (std::size_t r = r0; r < std::min(h, r0 + bh); ++r) {
      for (std::size_t c = c0; c < std::min(w, c0 + bw); ++c) img(r, c) = value;
    }
  }
  return img;
}

// Signed DFT frequency of index i on an n-point grid: [-n/2, (n-1)/2].
long signed_freq(std::size_t i, std::size_t n) {
  const auto si = static_cast<long>(i);
  const auto sn = static_cast<long>(n);
  return si < (sn + 1) / 2 ? si : si - sn;
}

std::size_t wrap_freq(long f, std::size_t n) {
  const auto sn = static_cast<long>(n);
  return static_cast<std::size_t>(((f % sn) + sn) % sn);
}

Image crop_spectrum(const Image& phantom_hi, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0 || phantom_hi.empty() ||
      phantom_hi.height() % target_h != 0 || phantom_hi.width() % target_w != 0) {
    throw ShapeError("phantom " + std::to_string(phantom_hi.height()) + "x" +
                     std::to_string(phantom_hi.width()) + " is not an integer multiple of " +
                     std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const Image full = fft2_unitary(phantom_hi);
  const double scale =
      std::sqrt(static_cast<double>(target_h * target_w) / static_cast<double>(full.size()));
  Image out(target_h, target_w, Domain::frequency);
  for (std::size_t r = 0; r < target_h; ++r) {
    const std::size_t hr = wrap_freq(signed_freq(r, target_h), full.height());
    for (std::size_t c = 0; c < target_w; ++c) {
      const std::size_t hc = wrap_freq(signed_freq(c, target_w), full.width());
      out(r, c) = full(hr, hc) * scale;
    }
  }
  return out;
}

}  // namespace

Image gen_phantom(PhantomKind kind, std::size_t height, std::size_t width, std::uint64_t seed,
                  bool complex_valued) {
  if (height < 8 || width < 8) throw ShapeError("phantoms must be at least 8x8");
  std::mt19937_64 rng(seed);
  Image img = kind == PhantomKind::ellipse ? ellipse_phantom(height, width, rng)
                                           : block_phantom(height, width, rng);
  if (complex_valued) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double gx = std::numbers::pi * (U(rng) - 0.5);
    const double gy = std::numbers::pi * (U(rng) - 0.5);
    const double curv = 0.8 * U(rng);
    const double offset = 2.0 * std::numbers::pi * U(rng);
    for (std::size_t r = 0; r < height; ++r) {
      const double y = centered(r, height);
      for (std::size_t c = 0; c < width; ++c) {
        const double x = centered(c, width);
        const double phase = offset + gx * x + gy * y + curv * (x * x + y * y);
        img(r, c) *= std::polar(1.0, phase);
      }
    }
  }
  return img;
}

Image add_awgn(const Image& img, double sigma, std::uint64_t seed, bool complex_noise) {
  if (!(sigma >= 0.0)) throw InvalidArgument("noise level must be nonnegative");
  if (sigma == 0.0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, sigma);
  Image out = img;
  for (cplx& p : out.pixels()) {
    const double re = N(rng);
    const double im = complex_noise ? N(rng) : 0.0;
    p += cplx(re, im);
  }
  return out;
}

SamplingMask gen_mask(std::size_t height, std::size_t width, double rate, double center_fraction,
                      std::uint64_t seed) {
  if (height == 0 || width == 0) throw ShapeError("mask dimensions must be positive");
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("sampling rate must lie in (0, 1]");
  if (!(center_fraction >= 0.0 && center_fraction < 1.0)) {
    throw ConfigError("center fraction must lie in [0, 1)");
  }
  const std::size_t total = height * width;
  const auto budget = static_cast<std::size_t>(std::llround(rate * static_cast<double>(total)));
  if (budget < 1) throw ConfigError("sampling rate leaves no samples");
  const auto side =
      static_cast<std::size_t>(std::ceil(std::sqrt(center_fraction * static_cast<double>(budget))));
  if (side * side > budget || side > height || side > width) {
    throw ConfigError("fully sampled center block (" + std::to_string(side) + "x" +
                      std::to_string(side) + ") exceeds the sample budget of " +
                      std::to_string(budget));
  }

  SamplingMask mask{height, width, std::vector<std::uint8_t>(total, 0)};
  // Centered coordinates: index i maps to (i + n/2) mod n, DC at n/2.
  const std::size_t r_start = height / 2 - side / 2;
  const std::size_t c_start = width / 2 - side / 2;
  const double k0 = static_cast<double>(std::max(height, width)) / 16.0;

  // Efraimidis-Spirakis weighted sampling without replacement: keep the
  // largest log(u) / weight keys.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(total);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t cr = (r + height / 2) % height;
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t cc = (c + width / 2) % width;
      const std::size_t idx = r * width + c;
      const bool in_center =
          cr >= r_start && cr < r_start + side && cc >= c_start && cc < c_start + side;
      const double u = 1.0 - U(rng);  // (0, 1]
      if (in_center) {
        mask.sampled[idx] = 1;
        continue;
      }
      const double kr = static_cast<double>(cr) - static_cast<double>(height / 2);
      const double kc = static_cast<double>(cc) - static_cast<double>(width / 2);
      const double radius = std::sqrt(kr * kr + kc * kc);
      const double weight = 1.0 / ((1.0 + radius / k0) * (1.0 + radius / k0));
      keyed.emplace_back(std::log(u) / weight, idx);
    }
  }
  const std::size_t remaining = budget - side * side;
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(remaining),
                    keyed.end(), [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  for (std::size_t i = 0; i < remaining; ++i) mask.sampled[keyed[i].second] = 1;
  return mask;
}

Image simulate_kspace(const Image& phantom_hi, std::size_t target_h, std::size_t target_w,
                      const SamplingMask& mask, double sigma_k, std::uint64_t seed) {
  if (mask.height != target_h || mask.width != target_w ||
      mask.sampled.size() != target_h * target_w) {
    throw ShapeError("mask does not match the target grid");
  }
  if (!(sigma_k >= 0.0)) throw InvalidArgument("noise level must be nonnegative");
  Image k = crop_spectrum(phantom_hi, target_h, target_w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, sigma_k > 0.0 ? sigma_k : 1.0);
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (!mask[i]) {
      k[i] = {};
    } else if (sigma_k > 0.0) {
      const double re = N(rng);
      const double im = N(rng);
      k[i] += cplx(re, im);
    }
  }
  return k;
}

Image bandlimit_downsample(const Image& phantom_hi, std::size_t target_h, std::size_t target_w) {
  return ifft2_unitary(crop_spectrum(phantom_hi, target_h, target_w));
}

}  // namespace bcdnet
