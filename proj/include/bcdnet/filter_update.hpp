#pragma once

// Per-block updates of one (filter, threshold) pair: the threshold
// subgradient step and the ADMM filter update with its element-wise v-step
// and unit-ball QCQP d-step.

#include "bcdnet/numerics.hpp"

#include <Eigen/Core>

#include <cstddef>

namespace bcdnet {

/// Iteration counts and penalty for one block update. Filled from
/// TrainingConfig.
struct BlockUpdateOptions {
  std::size_t admm_iters = 4;
  std::size_t v_subgrad_iters = 4;
  std::size_t alpha_subgrad_iters = 10;
  double rho0 = 1.0;
};

/// Backtracking line search: start at step 1, halve up to this many times,
/// accept on sufficient decrease.
inline constexpr int kMaxHalvings = 20;
inline constexpr double kArmijo = 1e-4;

/// Gradient of f(v) = 1/2 |T_alpha(v) - g|^2 + rho/2 |v - h|^2 with the
/// convention df/dv = df/dv_R + i df/dv_I. For |v| > alpha:
///   zeta + rho (v - h) + alpha / |v|^3 * (-i v) * (-Im{v conj(zeta)}),
/// zeta = T_alpha(v) - g. For |v| <= alpha (including the kink) returns
/// rho (v - h).
cplx grad_threshold_quadratic(cplx v, cplx g, cplx h, double alpha, double rho);

/// Real-valued special case: (T_alpha(v) - g) 1{|v| > alpha} + rho (v - h).
/// Evaluates in the same arithmetic order as the complex version.
double grad_threshold_quadratic_real(double v, double g, double h, double alpha, double rho);

/// argmin_v 1/2 |T_alpha(v) - g|^2 + rho/(2c) |v - h|^2. The dead zone is
/// solved in closed form; the outer branch reduces to a search over the angle
/// of v, refined by at most `iters` Newton steps. Never returns a point worse
/// than v_init. Throws InvalidArgument if c <= 0 (dead filter).
cplx v_update_elementwise(cplx g, cplx h, double alpha, double rho, double c, cplx v_init,
                          std::size_t iters);

struct QcqpResult {
  Eigen::VectorXcd d;
  double multiplier = 0.0;  // mu >= 0 of the norm constraint
};

/// argmin_d 1/2 d^H H d - Re{d^H b} subject to ||d|| <= 1, for Hermitian PSD
/// H. Throws InvalidArgument if H is not Hermitian to 1e-10.
QcqpResult solve_qcqp(const Eigen::MatrixXcd& H, const Eigen::VectorXcd& b);

/// Same problem with H = Q diag(eigenvalues) Q^H already factored.
QcqpResult solve_qcqp_spectral(const Eigen::VectorXd& eigenvalues,
                               const Eigen::MatrixXcd& eigenvectors, const Eigen::VectorXcd& b);

/// Eigendecomposition of X X^H, shared by every d-step of a layer.
struct GramSpectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXcd eigenvectors;

  static GramSpectrum of(const Eigen::MatrixXcd& patches);
};

/// Doubles rho when the primal residual exceeds 10x the dual residual,
/// halves it in the opposite case, keeps it otherwise.
double residual_balance(double rho, double primal_res_norm, double dual_res_norm);

/// ||E - d T_alpha(d^H X)||_F^2.
double block_objective(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                       const Eigen::VectorXcd& d, double alpha);

/// d/dalpha of block_objective for fixed d (a subgradient at kinks).
double threshold_subgradient(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                             const Eigen::VectorXcd& d, double alpha);

/// Projected subgradient descent on the threshold, clamped to alpha >= 0.
double update_threshold(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                        const Eigen::VectorXcd& d, double alpha, const BlockUpdateOptions& opts);

/// ADMM on the split v = X^H d: v-step element-wise, d-step QCQP, scaled dual
/// ascent, residual-balanced rho. Returns the iterate (input included) with
/// the lowest block objective. `gram` may be passed to reuse the
/// eigendecomposition of X X^H across blocks.
Eigen::VectorXcd update_filter_admm(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                                    const Eigen::VectorXcd& d, double alpha,
                                    const BlockUpdateOptions& opts,
                                    const GramSpectrum* gram = nullptr);

}  // namespace bcdnet
