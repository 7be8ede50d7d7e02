#include "bcdnet/training.hpp"

#include "bcdnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace bcdnet {

TrainingConfig TrainingConfig::defaults_for(ProblemKind kind) {
  TrainingConfig cfg;
  if (kind == ProblemKind::mri) {
    cfg.max_block_sweeps = 180;
    cfg.lambda = 1e6;
  }
  return cfg;
}

void TrainingConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be at least 1");
  };
  positive(n_filters, "filters_k");
  positive(patch_h, "patch_h");
  positive(patch_w, "patch_w");
  positive(n_patches, "n_patches");
  positive(admm_iters, "admm_iters");
  positive(v_subgrad_iters, "v_iters");
  positive(alpha_subgrad_iters, "alpha_iters");
  positive(max_block_sweeps, "max_sweeps");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
  if (!(rel_diff_tol > 0.0)) throw ConfigError("rel_tol must be positive");
  if (!(rho0 > 0.0) || !std::isfinite(rho0)) throw ConfigError("rho0 must be positive");
  if (n_filters > patch_h * patch_w) {
    throw ConfigError("filters_k (" + std::to_string(n_filters) +
                      ") exceeds the patch length (" + std::to_string(patch_h * patch_w) + ")");
  }
}

BlockUpdateOptions TrainingConfig::block_options() const {
  return {admm_iters, v_subgrad_iters, alpha_subgrad_iters, rho0};
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<PatchRef> sample_patch_refs(std::span<const Image> images, std::size_t n_patches,
                                        std::uint64_t seed) {
  std::vector<std::size_t> offsets{0};
  for (const Image& img : images) offsets.push_back(offsets.back() + img.size());
  const std::size_t total = offsets.back();
  const std::size_t take = std::min(n_patches, total);

  std::vector<std::size_t> pool(total);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `take` entries are a uniform sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());

  std::vector<PatchRef> refs;
  refs.reserve(take);
  std::size_t img = 0;
  for (std::size_t flat : pool) {
    while (flat >= offsets[img + 1]) ++img;
    const std::size_t local = flat - offsets[img];
    const std::size_t w = images[img].width();
    refs.push_back({img, {local / w, local % w}});
  }
  return refs;
}

TrainingSet build_training_set(std::span<const Image> clean, std::span<const Image> current,
                               std::size_t patch_h, std::size_t patch_w,
                               std::vector<PatchRef> refs) {
  if (clean.size() != current.size()) throw ShapeError("clean/current image counts differ");
  for (std::size_t l = 0; l < clean.size(); ++l) {
    if (!clean[l].same_shape(current[l])) {
      throw ShapeError("clean and current image " + std::to_string(l) + " differ in shape");
    }
  }
  const auto r = static_cast<Eigen::Index>(patch_h * patch_w);
  const auto n = static_cast<Eigen::Index>(refs.size());
  TrainingSet ts{{patch_h, patch_w, Eigen::MatrixXcd(r, n)},
                 {patch_h, patch_w, Eigen::MatrixXcd(r, n)},
                 std::move(refs)};
  // Group by image so each image is touched by one extraction call.
  std::size_t start = 0;
  while (start < ts.refs.size()) {
    const std::size_t img = ts.refs[start].image;
    if (img >= clean.size()) throw ShapeError("patch reference names a missing image");
    std::size_t end = start;
    std::vector<PatchPos> pos;
    while (end < ts.refs.size() && ts.refs[end].image == img) pos.push_back(ts.refs[end++].pos);
    const auto cols = static_cast<Eigen::Index>(end - start);
    const auto first = static_cast<Eigen::Index>(start);
    ts.clean.data.middleCols(first, cols) = extract_patches(clean[img], patch_h, patch_w, pos).data;
    ts.current.data.middleCols(first, cols) =
        extract_patches(current[img], patch_h, patch_w, pos).data;
    start = end;
  }
  return ts;
}

namespace {

Eigen::RowVectorXcd thresholded_coeffs(const Eigen::VectorXcd& d, double alpha,
                                       const Eigen::MatrixXcd& X) {
  Eigen::RowVectorXcd c = d.adjoint() * X;
  for (Eigen::Index n = 0; n < c.size(); ++n) c[n] = soft_threshold(c[n], alpha);
  return c;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(),
                                     values.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

double parameter_distance2(const LayerMapping& a, const LayerMapping& b) {
  return (a.filters - b.filters).squaredNorm() + (a.thresholds - b.thresholds).squaredNorm();
}

double parameter_norm2(const LayerMapping& a) {
  return a.filters.squaredNorm() + a.thresholds.squaredNorm();
}

}  // namespace

double layer_objective(const TrainingSet& ts, const LayerMapping& layer) {
  Eigen::MatrixXcd residual = ts.clean.data;
  for (Eigen::Index k = 0; k < layer.filters.cols(); ++k) {
    residual -= layer.filters.col(k) *
                thresholded_coeffs(layer.filters.col(k), layer.thresholds[k], ts.current.data);
  }
  return residual.squaredNorm();
}

LayerMapping initial_layer(const TrainingConfig& cfg) {
  LayerMapping layer;
  layer.patch_h = cfg.patch_h;
  layer.patch_w = cfg.patch_w;
  layer.filters = init_dct_filters(cfg.patch_h, cfg.patch_w, cfg.n_filters);
  layer.thresholds = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.n_filters));
  return layer;
}

LayerTrainResult train_layer(const TrainingSet& ts, const LayerMapping& init,
                             const TrainingConfig& cfg, const BlockObserver& observer) {
  init.validate();
  if (ts.clean.patch_len() != init.patch_len() || ts.current.patch_len() != init.patch_len() ||
      ts.clean.n_cols() != ts.current.n_cols()) {
    throw ShapeError("training set does not match the layer patch size");
  }
  const Eigen::MatrixXcd& X = ts.current.data;
  const BlockUpdateOptions opts = cfg.block_options();
  const GramSpectrum gram = GramSpectrum::of(X);
  const auto n_filters = static_cast<Eigen::Index>(init.n_filters());

  LayerMapping layer = init;
  Eigen::MatrixXcd coeffs(n_filters, X.cols());
  for (Eigen::Index k = 0; k < n_filters; ++k) {
    coeffs.row(k) = thresholded_coeffs(layer.filters.col(k), layer.thresholds[k], X);
  }
  Eigen::MatrixXcd residual = ts.clean.data - layer.filters * coeffs;

  LayerTrainResult out;
  out.initial_objective = residual.squaredNorm();
  out.layer = layer;
  out.final_objective = out.initial_objective;
  double prev_sweep_obj = out.initial_objective;
  const Eigen::MatrixXcd dct = init_dct_filters(init.patch_h, init.patch_w, init.n_filters());

  Eigen::MatrixXcd E(X.rows(), X.cols());
  for (std::size_t sweep = 1; sweep <= cfg.max_block_sweeps; ++sweep) {
    const LayerMapping before = layer;
    double obj = prev_sweep_obj;
    for (Eigen::Index k = 0; k < n_filters; ++k) {
      // E_k: what the other K-1 filters leave unexplained.
      E.noalias() = residual + layer.filters.col(k) * coeffs.row(k);

      layer.thresholds[k] = update_threshold(E, X, layer.filters.col(k), layer.thresholds[k], opts);
      coeffs.row(k) = thresholded_coeffs(layer.filters.col(k), layer.thresholds[k], X);
      residual.noalias() = E - layer.filters.col(k) * coeffs.row(k);
      obj = residual.squaredNorm();
      if (observer) observer({sweep, static_cast<std::size_t>(k), BlockStep::threshold, obj});

      Eigen::VectorXcd d =
          update_filter_admm(E, X, layer.filters.col(k), layer.thresholds[k], opts, &gram);
      if (d.norm() < 1e-8) {
        d = dct.col(k);
        std::vector<double> alphas(layer.thresholds.data(),
                                   layer.thresholds.data() + layer.thresholds.size());
        layer.thresholds[k] = median(std::move(alphas));
      }
      layer.filters.col(k) = d;
      coeffs.row(k) = thresholded_coeffs(layer.filters.col(k), layer.thresholds[k], X);
      residual.noalias() = E - layer.filters.col(k) * coeffs.row(k);
      obj = residual.squaredNorm();
      if (observer) observer({sweep, static_cast<std::size_t>(k), BlockStep::filter, obj});
    }

    const double denom = std::max(parameter_norm2(before), 1e-300);
    const double rel = std::sqrt(parameter_distance2(layer, before) / denom);
    out.sweeps.push_back({0, sweep, obj, rel});
    if (obj > prev_sweep_obj) break;
    if (obj <= out.final_objective) {
      out.final_objective = obj;
      out.layer = layer;
    }
    prev_sweep_obj = obj;
    if (rel <= cfg.rel_diff_tol) break;
  }
  return out;
}

RecoveryModel train_network(std::span<const Image> clean, std::span<const ForwardProblem> problems,
                            const TrainingConfig& cfg, NetworkTrainLog* log) {
  cfg.validate();
  if (clean.empty()) throw ShapeError("training needs at least one image");
  if (clean.size() != problems.size()) {
    throw ShapeError("training images and measurements differ in count");
  }
  const ProblemKind kind = problems.front().kind;
  std::vector<Image> current;
  current.reserve(clean.size());
  for (std::size_t l = 0; l < clean.size(); ++l) {
    if (problems[l].kind != kind) throw ConfigError("mixed problem kinds in training data");
    problems[l].validate();
    if (!clean[l].same_shape(problems[l].y)) {
      throw ShapeError("training image " + std::to_string(l) + " does not match its measurement");
    }
    if (clean[l].height() < cfg.patch_h || clean[l].width() < cfg.patch_w) {
      throw ShapeError("training image smaller than the patch");
    }
    current.push_back(problems[l].initial_estimate());
  }

  RecoveryModel model;
  model.kind = kind;
  model.lambda = cfg.lambda;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    auto refs = sample_patch_refs(clean, cfg.n_patches, splitmix64(cfg.seed + i));
    const TrainingSet ts =
        build_training_set(clean, current, cfg.patch_h, cfg.patch_w, std::move(refs));
    LayerTrainResult trained = train_layer(ts, initial_layer(cfg), cfg);

    double psnr_sum = 0.0;
    for (std::size_t l = 0; l < current.size(); ++l) {
      const Image z = apply_mapping_averaged(trained.layer, current[l]);
      current[l] = x_update(problems[l], z, cfg.lambda);
      psnr_sum += psnr(current[l], clean[l]);
    }
    if (log != nullptr) {
      for (SweepRecord rec : trained.sweeps) {
        rec.layer = i + 1;
        log->sweeps.push_back(rec);
      }
      log->train_psnr_db.push_back(psnr_sum / static_cast<double>(current.size()));
    }
    model.layers.push_back(std::move(trained.layer));
  }
  return model;
}

}  // namespace bcdnet
