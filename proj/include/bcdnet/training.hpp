#pragma once

#include "bcdnet/filter_update.hpp"
#include "bcdnet/mapping.hpp"
#include "bcdnet/recovery.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bcdnet {

struct TrainingConfig {
  std::size_t n_filters = 64;
  std::size_t patch_h = 8;
  std::size_t patch_w = 8;
  std::size_t n_patches = 20000;
  double lambda = 1.0;
  std::size_t n_layers = 10;
  std::size_t admm_iters = 4;
  std::size_t v_subgrad_iters = 4;
  std::size_t alpha_subgrad_iters = 10;
  double rel_diff_tol = 2e-3;
  std::size_t max_block_sweeps = 120;
  double rho0 = 1.0;
  std::uint64_t seed = 0;

  /// Defaults with the sweep limit for the given problem (120 denoising,
  /// 180 MRI).
  static TrainingConfig defaults_for(ProblemKind kind);

  /// Throws ConfigError on zero counts, non-positive reals, or K > R.
  void validate() const;
  BlockUpdateOptions block_options() const;
};

/// Patch location inside one of several training images.
struct PatchRef {
  std::size_t image = 0;
  PatchPos pos;
  friend bool operator==(const PatchRef&, const PatchRef&) = default;
};

/// Co-located clean and current-estimate patches.
struct TrainingSet {
  PatchMatrix clean;    // X_train
  PatchMatrix current;  // X
  std::vector<PatchRef> refs;
};

/// Uniform sample without replacement over every circular patch position of
/// every image (sorted by image, row, col). Returns all positions when
/// n_patches exceeds the total.
std::vector<PatchRef> sample_patch_refs(std::span<const Image> images, std::size_t n_patches,
                                        std::uint64_t seed);

TrainingSet build_training_set(std::span<const Image> clean, std::span<const Image> current,
                               std::size_t patch_h, std::size_t patch_w,
                               std::vector<PatchRef> refs);

/// ||X_train - D T_alpha(D^H X)||_F^2.
double layer_objective(const TrainingSet& ts, const LayerMapping& layer);

/// DCT filters with zero thresholds.
LayerMapping initial_layer(const TrainingConfig& cfg);

enum class BlockStep : std::uint8_t { threshold, filter };

struct BlockEvent {
  std::size_t sweep = 0;  // 1-based
  std::size_t block = 0;  // filter index k
  BlockStep step = BlockStep::threshold;
  double objective = 0.0;  // layer objective after the step
};

struct SweepRecord {
  std::size_t layer = 0;  // 1-based; 0 when training a lone layer
  std::size_t sweep = 0;
  double objective = 0.0;
  double rel_change = 0.0;
};

struct LayerTrainResult {
  LayerMapping layer;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<SweepRecord> sweeps;
};

using BlockObserver = std::function<void(const BlockEvent&)>;

/// Block coordinate descent over the K (threshold, filter) pairs. Stops on
/// the relative-change tolerance, on an objective increase, or after
/// max_block_sweeps; returns the best iterate seen.
LayerTrainResult train_layer(const TrainingSet& ts, const LayerMapping& init,
                             const TrainingConfig& cfg, const BlockObserver& observer = {});

struct NetworkTrainLog {
  std::vector<SweepRecord> sweeps;
  std::vector<double> train_psnr_db;  // mean over images of x_l^(i), i = 1..N
};

/// Layer-wise training: each layer is fit on co-located patches of the clean
/// images and the current estimates, after which every estimate is advanced
/// with the trained mapping and the x-update.
RecoveryModel train_network(std::span<const Image> clean, std::span<const ForwardProblem> problems,
                            const TrainingConfig& cfg, NetworkTrainLog* log = nullptr);

}  // namespace bcdnet
