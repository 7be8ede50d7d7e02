#include "bcdnet/filter_update.hpp"

#include "bcdnet/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace bcdnet {

cplx grad_threshold_quadratic(cplx v, cplx g, cplx h, double alpha, double rho) {
  const double mag = magnitude(v);
  const cplx prox = rho * (v - h);
  if (mag <= alpha) return prox;
  const cplx zeta = soft_threshold(v, alpha) - g;
  // Im{v conj(zeta)}
  const double im = v.imag() * zeta.real() - v.real() * zeta.imag();
  const double scale = alpha / (mag * mag * mag) * -im;
  // (-i v) = (v_I, -v_R)
  const cplx correction(scale * v.imag(), scale * -v.real());
  return zeta + prox + correction;
}

double grad_threshold_quadratic_real(double v, double g, double h, double alpha, double rho) {
  const double mag = std::abs(v);
  const double prox = rho * (v - h);
  if (mag <= alpha) return prox;
  const double zeta = (v - alpha * (v / mag)) - g;
  return zeta + prox;
}

namespace {

double v_cost(cplx v, cplx g, cplx h, double alpha, double rho_over_c) {
  return 0.5 * abs2(soft_threshold(v, alpha) - g) + 0.5 * rho_over_c * abs2(v - h);
}

// Minimizer over |v| > alpha. With v = (alpha + s) e^{i theta} the cost is
// quadratic in s for fixed theta, s = (Re{p e^{-i theta}} - w alpha) / (1 + w)
// with p = g + w h, which leaves
//   F(psi) = -A cos(psi - delta) - (B cos psi - w alpha)^2 / (2 (1 + w))
// in psi = theta - arg p, A = w alpha |h|, B = |p|, delta = arg h - arg p.
// Both terms are unimodal, so minima lie between psi = 0 and psi = delta.
bool outer_minimizer(cplx g, cplx h, double alpha, double w, std::size_t newton_steps, cplx& out) {
  const cplx p = g + w * h;
  const double b = magnitude(p);
  const double wa = w * alpha;
  if (!(b > wa)) return false;
  const double a = wa * magnitude(h);
  const double den = 1.0 + w;
  double psi = 0.0;
  cplx rot(1.0, 0.0);  // e^{i psi}
  if (a > 0.0) {
    const cplx dir = h * std::conj(p) / (magnitude(h) * b);  // e^{i delta}
    const double cd = dir.real(), sd = dir.imag();
    auto f = [&](cplx e) {
      const double q = b * e.real() - wa;
      return -a * (e.real() * cd + e.imag() * sd) - q * q / (2.0 * den);
    };
    // past the arc |psi| < acos(w alpha / B) the point falls back onto the circle
    const double delta = std::atan2(sd, cd);
    const double end = cd >= wa / b ? delta : std::copysign(std::acos(wa / b), delta);
    constexpr int kSamples = 8;
    const cplx step = std::polar(1.0, end / kSamples);
    cplx e(1.0, 0.0);
    double best = f(e);
    int best_i = 0;
    for (int i = 1; i <= kSamples; ++i) {
      e *= step;
      const double fx = f(e);
      if (fx < best) {
        best = fx;
        best_i = i;
        rot = e;
      }
    }
    psi = end * best_i / kSamples;
    double lo = end * std::max(best_i - 1, 0) / kSamples;
    double hi = end * std::min(best_i + 1, kSamples) / kSamples;
    if (lo > hi) std::swap(lo, hi);
    // safeguarded Newton on F'
    for (std::size_t it = 0; it < newton_steps; ++it) {
      const double c = rot.real(), s = rot.imag();
      const double q = b * c - wa;
      const double d1 = a * (s * cd - c * sd) + q * b * s / den;
      const double d2 = a * (c * cd + s * sd) + (b * c * q - b * b * s * s) / den;
      if (d1 > 0.0) hi = psi; else lo = psi;
      double next = d2 > 0.0 ? psi - d1 / d2 : 0.5 * (lo + hi);
      if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
      if (next == psi) break;
      psi = next;
      rot = std::polar(1.0, psi);
    }
  }
  const double s = (b * rot.real() - wa) / den;
  if (!(s > 0.0)) return false;
  out = (alpha + s) * (p / b) * rot;
  return true;
}

}  // namespace

cplx v_update_elementwise(cplx g, cplx h, double alpha, double rho, double c, cplx v_init,
                          std::size_t iters) {
  if (!(c > 0.0)) throw InvalidArgument("v-update needs a filter with positive norm");
  if (!(alpha >= 0.0)) throw InvalidArgument("threshold must be nonnegative");
  if (!(rho > 0.0)) throw InvalidArgument("ADMM penalty must be positive");
  const double w = rho / c;
  // dead zone: h projected onto the disk
  const double hmag = magnitude(h);
  cplx best = hmag <= alpha ? h : h * (alpha / hmag);
  double best_cost = v_cost(best, g, h, alpha, w);
  cplx outer;
  if (outer_minimizer(g, h, alpha, w, iters, outer)) {
    const double cost = v_cost(outer, g, h, alpha, w);
    if (cost < best_cost) {
      best = outer;
      best_cost = cost;
    }
  }
  if (v_cost(v_init, g, h, alpha, w) < best_cost) best = v_init;
  return best;
}

GramSpectrum GramSpectrum::of(const Eigen::MatrixXcd& patches) {
  Eigen::MatrixXcd gram = patches * patches.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  return {eig.eigenvalues(), eig.eigenvectors()};
}

QcqpResult solve_qcqp_spectral(const Eigen::VectorXd& eigenvalues,
                               const Eigen::MatrixXcd& eigenvectors, const Eigen::VectorXcd& b) {
  const Eigen::Index r = b.size();
  if (eigenvalues.size() != r || eigenvectors.rows() != r || eigenvectors.cols() != r) {
    throw ShapeError("QCQP factor dimensions do not match the linear term");
  }
  const Eigen::VectorXd lam = eigenvalues.cwiseMax(0.0);
  const Eigen::VectorXcd beta = eigenvectors.adjoint() * b;
  const Eigen::VectorXd beta2 = beta.cwiseAbs2();
  const double beta_norm = std::sqrt(beta2.sum());
  QcqpResult result{Eigen::VectorXcd::Zero(r), 0.0};
  if (beta_norm == 0.0) return result;

  const double lam_max = lam.maxCoeff();
  const double null_tol = 1e-13 * std::max(lam_max, 1e-300);
  bool unbounded_direction = false;
  for (Eigen::Index i = 0; i < r; ++i) {
    if (lam[i] <= null_tol && std::sqrt(beta2[i]) > 1e-12 * beta_norm) unbounded_direction = true;
  }

  Eigen::VectorXcd gamma(r);
  if (!unbounded_direction) {
    for (Eigen::Index i = 0; i < r; ++i) gamma[i] = lam[i] > null_tol ? beta[i] / lam[i] : cplx{};
    if (gamma.norm() <= 1.0) {
      result.d = eigenvectors * gamma;
      return result;
    }
  }

  // Boundary case: find mu > 0 with ||(Lambda + mu)^-1 beta|| = 1 by Newton
  // on 1/||d(mu)|| - 1 (concave, increasing), safeguarded by bisection.
  auto norm2_at = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
      const double denom = lam[i] + mu;
      s += beta2[i] / (denom * denom);
    }
    return s;
  };
  double lo = std::max(0.0, beta_norm - lam_max);
  double hi = beta_norm;
  double mu = lo > 0.0 ? lo : 0.5 * hi;
  for (int it = 0; it < 200; ++it) {
    const double s = norm2_at(mu);
    if (!std::isfinite(s)) {
      lo = mu;
      mu = 0.5 * (lo + hi);
      continue;
    }
    if (s > 1.0) {
      lo = mu;
    } else {
      hi = mu;
    }
    const double nrm = std::sqrt(s);
    if (std::abs(nrm - 1.0) <= 4e-16 || hi - lo <= 1e-17 * hi) break;
    double ds = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
      const double denom = lam[i] + mu;
      ds -= 2.0 * beta2[i] / (denom * denom * denom);
    }
    const double phi = 1.0 / nrm - 1.0;
    const double dphi = -0.5 * ds / (s * nrm);
    double next = mu - phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == mu) break;
    mu = next;
  }
  for (Eigen::Index i = 0; i < r; ++i) gamma[i] = beta[i] / (lam[i] + mu);
  result.d = eigenvectors * gamma;
  result.multiplier = mu;
  return result;
}

QcqpResult solve_qcqp(const Eigen::MatrixXcd& H, const Eigen::VectorXcd& b) {
  if (H.rows() != H.cols() || H.rows() != b.size()) {
    throw ShapeError("QCQP matrix and vector dimensions disagree");
  }
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("QCQP matrix is not Hermitian");
  }
  const Eigen::MatrixXcd sym = 0.5 * (H + H.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(sym);
  return solve_qcqp_spectral(eig.eigenvalues(), eig.eigenvectors(), b);
}

double residual_balance(double rho, double primal_res_norm, double dual_res_norm) {
  constexpr double kBand = 10.0;
  constexpr double kFactor = 2.0;
  if (primal_res_norm > kBand * dual_res_norm) return rho * kFactor;
  if (dual_res_norm > kBand * primal_res_norm) return rho / kFactor;
  return rho;
}

double block_objective(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                       const Eigen::VectorXcd& d, double alpha) {
  Eigen::RowVectorXcd coeff = d.adjoint() * X;
  for (Eigen::Index n = 0; n < coeff.size(); ++n) coeff[n] = soft_threshold(coeff[n], alpha);
  return (E - d * coeff).squaredNorm();
}

namespace {

// Column-separable form of block_objective for fixed d:
//   phi(alpha) = sum_n ||e_n||^2 - 2 Re{conj(a_n) t_n} + ||d||^2 |t_n|^2,
// with c_n = d^H x_n, a_n = d^H e_n, t_n = T_alpha(c_n).
struct ThresholdProblem {
  Eigen::RowVectorXcd coeff;
  Eigen::RowVectorXcd proj;
  double energy = 0.0;
  double dnorm2 = 0.0;

  ThresholdProblem(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                   const Eigen::VectorXcd& d)
      : coeff(d.adjoint() * X), proj(d.adjoint() * E), energy(E.squaredNorm()),
        dnorm2(d.squaredNorm()) {}

  double value(double alpha) const {
    double acc = energy;
    for (Eigen::Index n = 0; n < coeff.size(); ++n) {
      const cplx t = soft_threshold(coeff[n], alpha);
      acc += -2.0 * (std::conj(proj[n]) * t).real() + dnorm2 * abs2(t);
    }
    return acc;
  }

  double subgradient(double alpha) const {
    double acc = 0.0;
    for (Eigen::Index n = 0; n < coeff.size(); ++n) {
      const double mag = magnitude(coeff[n]);
      if (mag <= alpha) continue;
      const cplx sgn = coeff[n] / mag;
      const cplx t = soft_threshold(coeff[n], alpha);
      acc -= 2.0 * (sgn * (dnorm2 * std::conj(t) - std::conj(proj[n]))).real();
    }
    return acc;
  }
};

}  // namespace

double threshold_subgradient(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                             const Eigen::VectorXcd& d, double alpha) {
  return ThresholdProblem(E, X, d).subgradient(alpha);
}

double update_threshold(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                        const Eigen::VectorXcd& d, double alpha, const BlockUpdateOptions& opts) {
  if (!(alpha >= 0.0)) throw InvalidArgument("threshold must be nonnegative");
  if (E.cols() == 0) return alpha;
  const ThresholdProblem prob(E, X, d);
  // Steps are taken on the per-column mean so the unit initial step does not
  // depend on the number of patches.
  const double inv_n = 1.0 / static_cast<double>(E.cols());
  double value = prob.value(alpha) * inv_n;
  for (std::size_t it = 0; it < opts.alpha_subgrad_iters; ++it) {
    const double grad = prob.subgradient(alpha) * inv_n;
    if (grad == 0.0) break;
    double step = 1.0;
    bool moved = false;
    for (int halving = 0; halving <= kMaxHalvings; ++halving, step *= 0.5) {
      const double cand = std::max(0.0, alpha - step * grad);
      if (cand == alpha) break;
      const double cand_value = prob.value(cand) * inv_n;
      // Sufficient decrease measured along the projected step.
      if (cand_value <= value - kArmijo * std::abs(grad * (alpha - cand))) {
        alpha = cand;
        value = cand_value;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  return alpha;
}

Eigen::VectorXcd update_filter_admm(const Eigen::MatrixXcd& E, const Eigen::MatrixXcd& X,
                                    const Eigen::VectorXcd& d, double alpha,
                                    const BlockUpdateOptions& opts, const GramSpectrum* gram) {
  if (E.rows() != X.rows() || E.cols() != X.cols() || d.size() != X.rows()) {
    throw ShapeError("filter update operands disagree in shape");
  }
  GramSpectrum local;
  if (gram == nullptr) {
    local = GramSpectrum::of(X);
    gram = &local;
  }
  constexpr double kDeadNorm2 = 1e-16;
  const double energy = E.squaredNorm();
  const Eigen::Index n = X.cols();

  // block_objective from xd = X^H d and ed = E^H d without forming E - d c:
  //   sum_n ||e_n||^2 - 2 Re{ed_n t_n} + ||d||^2 |t_n|^2,  t_n = T(conj(xd_n))
  auto objective = [&](const Eigen::VectorXcd& xd, const Eigen::VectorXcd& ed, double dnorm2) {
    double acc = energy;
    for (Eigen::Index i = 0; i < n; ++i) {
      const cplx t = soft_threshold(std::conj(xd[i]), alpha);
      acc += -2.0 * (ed[i] * t).real() + dnorm2 * abs2(t);
    }
    return acc;
  };

  Eigen::VectorXcd cur = d;
  Eigen::VectorXcd xd = X.adjoint() * cur;
  Eigen::VectorXcd ed = E.adjoint() * cur;
  Eigen::VectorXcd best = d;
  double best_obj = objective(xd, ed, cur.squaredNorm());

  Eigen::VectorXcd v = xd;
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(n);
  Eigen::VectorXcd v_next(n);
  Eigen::VectorXcd t(n);
  Eigen::MatrixXcd pair(n, 2);
  double rho = opts.rho0;

  for (std::size_t j = 0; j < opts.admm_iters; ++j) {
    const double c = cur.squaredNorm();
    if (c < kDeadNorm2) break;
    const double inv_c = 1.0 / c;
    for (Eigen::Index i = 0; i < n; ++i) {
      v_next[i] = v_update_elementwise(ed[i] * inv_c, xd[i] + u[i], alpha, rho, c, v[i],
                                       opts.v_subgrad_iters);
      t[i] = soft_threshold(v_next[i], alpha);
    }

    pair.col(0) = v_next - u;
    pair.col(1) = v_next - v;
    const Eigen::MatrixXcd xp = X * pair;
    const Eigen::VectorXcd b = E * t + rho * xp.col(0);
    const Eigen::VectorXd shifted =
        (rho * gram->eigenvalues.array() + t.squaredNorm()).matrix();
    cur = solve_qcqp_spectral(shifted, gram->eigenvectors, b).d;

    xd.noalias() = X.adjoint() * cur;
    ed.noalias() = E.adjoint() * cur;
    u += xd - v_next;
    const double primal = (xd - v_next).norm();
    const double dual = rho * xp.col(1).norm();
    const double rho_next = residual_balance(rho, primal, dual);
    if (rho_next != rho) {
      u *= rho / rho_next;  // scaled dual variable follows the penalty
      rho = rho_next;
    }
    v.swap(v_next);

    const double obj = objective(xd, ed, cur.squaredNorm());
    if (obj < best_obj) {
      best_obj = obj;
      best = cur;
    }
  }
  // the expanded form cancels near a perfect fit; confirm on the residual
  if (best != d && !(block_objective(E, X, best, alpha) <= block_objective(E, X, d, alpha))) {
    return d;
  }
  return best;
}

}  // namespace bcdnet
