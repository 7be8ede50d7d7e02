#include "bcdnet/recovery.hpp"

#include "bcdnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bcdnet {

std::size_t SamplingMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(sampled.begin(), sampled.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

ForwardProblem ForwardProblem::denoising(Image noisy) {
  ForwardProblem p;
  p.kind = ProblemKind::denoising;
  p.y = std::move(noisy);
  return p;
}

ForwardProblem ForwardProblem::mri(Image kspace, SamplingMask mask) {
  ForwardProblem p;
  p.kind = ProblemKind::mri;
  p.y = std::move(kspace);
  p.y.set_domain(Domain::frequency);
  p.mask = std::move(mask);
  p.validate();
  return p;
}

void ForwardProblem::validate() const {
  if (y.empty()) throw ShapeError("forward problem has an empty measurement");
  if (kind == ProblemKind::mri) {
    if (mask.height != y.height() || mask.width != y.width() ||
        mask.sampled.size() != y.size()) {
      throw ShapeError("sampling mask " + std::to_string(mask.height) + "x" +
                       std::to_string(mask.width) + " does not match k-space " +
                       std::to_string(y.height()) + "x" + std::to_string(y.width()));
    }
  }
}

double ForwardProblem::data_fit(const Image& x) const {
  if (!x.same_shape(y)) throw ShapeError("estimate and measurement differ in shape");
  double acc = 0.0;
  if (kind == ProblemKind::denoising) {
    for (std::size_t i = 0; i < x.size(); ++i) acc += abs2(y[i] - x[i]);
    return acc;
  }
  const Image fx = fft2_unitary(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += abs2(y[i] - (mask[i] ? fx[i] : cplx{}));
  }
  return acc;
}

Image ForwardProblem::initial_estimate() const {
  validate();
  if (kind == ProblemKind::denoising) return y;
  Image masked = y;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (!mask[i]) masked[i] = {};
  }
  return ifft2_unitary(masked);
}

void RecoveryModel::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("regularization weight must be a nonnegative finite number");
  }
  for (const auto& layer : layers) layer.validate();
}

Image x_update_denoise(const Image& y, const Image& z, double lambda) {
  if (!y.same_shape(z)) throw ShapeError("x-update inputs differ in shape");
  Image x(y.height(), y.width());
  const double inv = 1.0 / (1.0 + lambda);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (y[i] + lambda * z[i]) * inv;
  return x;
}

Image x_update_mri(const Image& y, const SamplingMask& mask, const Image& z, double lambda) {
  if (!y.same_shape(z) || mask.height != y.height() || mask.width != y.width() ||
      mask.sampled.size() != y.size()) {
    throw ShapeError("x-update inputs differ in shape");
  }
  Image freq = fft2_unitary(z);
  const double inv = 1.0 / (1.0 + lambda);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    if (mask[i]) freq[i] = (y[i] + lambda * freq[i]) * inv;
  }
  return ifft2_unitary(freq);
}

Image x_update(const ForwardProblem& problem, const Image& z, double lambda) {
  switch (problem.kind) {
    case ProblemKind::denoising:
      return x_update_denoise(problem.y, z, lambda);
    case ProblemKind::mri:
      return x_update_mri(problem.y, problem.mask, z, lambda);
  }
  throw ConfigError("unknown problem kind");
}

namespace {

double squared_distance(const Image& a, const Image& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += abs2(a[i] - b[i]);
  return acc;
}

}  // namespace

RecoveryResult recover(const RecoveryModel& model, const ForwardProblem& problem, const Image& x0,
                       std::size_t max_layers) {
  if (model.kind != problem.kind) {
    throw ConfigError("model was trained for a different problem kind");
  }
  model.validate();
  problem.validate();
  if (!x0.same_shape(problem.y)) throw ShapeError("initial estimate does not match measurement");

  RecoveryResult result;
  result.iterates.push_back(x0);
  const std::size_t n = std::min(max_layers, model.layers.size());
  Image x = x0;
  for (std::size_t i = 0; i < n; ++i) {
    Image z = apply_mapping_averaged(model.layers[i], x);
    x = x_update(problem, z, model.lambda);
    result.layer_costs.push_back(problem.data_fit(x) + model.lambda * squared_distance(x, z));
    result.iterates.push_back(x);
    result.mapped.push_back(std::move(z));
  }
  result.image = std::move(x);
  return result;
}

std::vector<TraceRow> recovery_trace(const RecoveryResult& result, const Image* reference,
                                     std::optional<double> peak) {
  std::vector<TraceRow> rows;
  for (std::size_t i = 0; i < result.layer_costs.size(); ++i) {
    TraceRow row;
    row.layer = i + 1;
    row.layer_cost = result.layer_costs[i];
    row.psnr_db = reference != nullptr ? psnr(result.iterates[i + 1], *reference, peak)
                                       : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bcdnet
