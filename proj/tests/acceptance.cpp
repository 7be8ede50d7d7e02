// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances are pinned below.

#include "bcdnet/filter_update.hpp"
#include "bcdnet/io.hpp"
#include "bcdnet/mapping.hpp"
#include "bcdnet/recovery.hpp"
#include "bcdnet/simulate.hpp"
#include "bcdnet/training.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace bcdnet;

namespace {

constexpr double kGradFdStep = 1e-6;
constexpr double kGradRelTol = 1e-6;
constexpr double kGradKinkGap = 1e-4;
constexpr double kGradSeconds = 1.0;
constexpr double kKktTol = 1e-8;
constexpr double kQcqpSeconds = 5.0;
constexpr double kMappingTol = 1e-12;
constexpr double kXUpdateTol = 1e-10;
constexpr double kMonotoneRelSlack = 1e-12;
constexpr double kDenoiseGainDb = 3.0;
constexpr double kDenoiseSeconds = 300.0;
constexpr double kMriGainDb = 2.0;
constexpr double kMriSeconds = 600.0;
constexpr double kModelTol = 1e-12;

struct Verdict {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double f_thresh_quad(cplx v, cplx g, cplx h, double alpha, double rho) {
  return 0.5 * std::norm(oracle::shrink(v, alpha) - g) + 0.5 * rho * std::norm(v - h);
}

Verdict gradient_oracle() {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  std::vector<std::array<cplx, 3>> vgh;
  std::vector<std::array<double, 2>> ar;
  while (vgh.size() < 1000) {
    const cplx v = oracle::random_cplx(rng, 1.5);
    const cplx g = oracle::random_cplx(rng);
    const cplx h = oracle::random_cplx(rng);
    const double a = u(rng), r = u(rng);
    if (std::abs(std::abs(v) - a) < kGradKinkGap) continue;
    vgh.push_back({v, g, h});
    ar.push_back({a, r});
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<cplx> grads(vgh.size());
  for (std::size_t i = 0; i < vgh.size(); ++i)
    grads[i] = grad_threshold_quadratic(vgh[i][0], vgh[i][1], vgh[i][2], ar[i][0], ar[i][1]);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < vgh.size(); ++i) {
    const auto [v, g, h] = vgh[i];
    const auto [a, r] = ar[i];
    const double s = kGradFdStep;
    const double dr = (f_thresh_quad(v + cplx(s, 0), g, h, a, r) - f_thresh_quad(v - cplx(s, 0), g, h, a, r)) / (2 * s);
    const double di = (f_thresh_quad(v + cplx(0, s), g, h, a, r) - f_thresh_quad(v - cplx(0, s), g, h, a, r)) / (2 * s);
    worst = std::max(worst, std::abs(grads[i] - cplx(dr, di)) / std::max(1.0, std::abs(grads[i])));
  }
  return {worst <= kGradRelTol && secs < kGradSeconds,
          "max rel err " + fmt("%.3g", worst) + ", " + fmt("%.3g", secs) + " s"};
}

Verdict real_reduction() {
  std::mt19937_64 rng(1002);
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const double v = n(rng), g = n(rng), h = n(rng), a = u(rng), r = u(rng) + 0.05;
    const cplx c = grad_threshold_quadratic({v, 0.0}, {g, 0.0}, {h, 0.0}, a, r);
    const double d = grad_threshold_quadratic_real(v, g, h, a, r);
    if (!(c.real() == d && c.imag() == 0.0)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 1000 differ"};
}

Verdict qcqp() {
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> scale(0.01, 3.0);
  std::uniform_int_distribution<int> which(0, 2);
  const int sizes[] = {2, 8, 64};
  double worst_kkt = 0.0, worst_cs = 0.0, worst_gap = -1e300, secs = 0.0;
  for (int t = 0; t < 500; ++t) {
    const int r = sizes[which(rng)];
    // rank-deficient about a third of the time
    const int m = t % 3 == 0 ? std::max(1, r / 2) : r + 2;
    const Eigen::MatrixXcd A = oracle::random_matrix(r, m, rng);
    Eigen::MatrixXcd H = A * A.adjoint() / double(m);
    H = 0.5 * (H + H.adjoint()).eval();
    const Eigen::VectorXcd b = oracle::random_matrix(r, 1, rng).col(0) * scale(rng);
    const auto t0 = std::chrono::steady_clock::now();
    const QcqpResult res = solve_qcqp(H, b);
    secs += seconds_since(t0);
    const Eigen::VectorXcd grad = H * res.d + res.multiplier * res.d - b;
    worst_kkt = std::max(worst_kkt, grad.norm() / std::max(1.0, b.norm()));
    worst_cs = std::max(worst_cs, std::abs(res.multiplier * (res.d.norm() - 1.0)));
    if (res.d.norm() > 1.0 + kKktTol || res.multiplier < 0.0) worst_cs = 1e300;
    const Eigen::VectorXcd ref = oracle::qcqp_bisection(H, b);
    worst_gap = std::max(worst_gap, oracle::qcqp_objective(H, b, res.d) - oracle::qcqp_objective(H, b, ref));
  }
  const bool ok = worst_kkt <= kKktTol && worst_cs <= kKktTol && worst_gap <= kKktTol && secs < kQcqpSeconds;
  return {ok, "kkt " + fmt("%.3g", worst_kkt) + ", slackness " + fmt("%.3g", worst_cs) +
                  ", objective - oracle " + fmt("%.3g", worst_gap) + ", " + fmt("%.3g", secs) + " s"};
}

Verdict mapping_equivalence() {
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> a(0.0, 1.5);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    LayerMapping l{3, 3, oracle::random_matrix(9, 4, rng), Eigen::VectorXd(4)};
    for (Eigen::Index k = 0; k < 4; ++k) l.filters.col(k).normalize();
    for (auto& v : l.thresholds) v = a(rng);
    const Image x = oracle::random_image(8, 8, rng);
    const Image z = apply_mapping(l, x);
    const Image ref = oracle::conv_mapping(l, x);
    for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(z[i] - ref[i]));
  }
  return {worst <= kMappingTol, "max abs diff " + fmt("%.3g", worst)};
}

// Inverse of oracle::dft2 by conjugation symmetry.
std::vector<cplx> idft2(const std::vector<cplx>& k, std::size_t h, std::size_t w) {
  Image c(h, w);
  for (std::size_t i = 0; i < k.size(); ++i) c[i] = std::conj(k[i]);
  auto out = oracle::dft2(c);
  for (auto& v : out) v = std::conj(v);
  return out;
}

Verdict x_update_optimality() {
  std::mt19937_64 rng(1005);
  std::uniform_real_distribution<double> lam(0.0, 20.0);
  std::bernoulli_distribution coin(0.4);
  double worst_den = 0.0, worst_mri = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double l = lam(rng);
    const Image y = oracle::random_image(8, 8, rng);
    const Image z = oracle::random_image(8, 8, rng);
    const Image x = x_update_denoise(y, z, l);
    for (std::size_t i = 0; i < x.size(); ++i)
      worst_den = std::max(worst_den, std::abs(2.0 * (x[i] - y[i]) + 2.0 * l * (x[i] - z[i])));
  }
  for (int t = 0; t < 100; ++t) {
    const double l = lam(rng);
    const std::size_t h = 8, w = 6;
    SamplingMask m{h, w, std::vector<std::uint8_t>(h * w)};
    for (auto& s : m.sampled) s = coin(rng);
    Image y = oracle::random_image(h, w, rng);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (!m[i]) y[i] = 0.0;
    const Image z = oracle::random_image(h, w, rng);
    const Image x = x_update_mri(y, m, z, l);
    // gradient of ||y - P F x||^2 + l ||x - z||^2: 2 F^H P (P F x - y) + 2 l (x - z)
    std::vector<cplx> r = oracle::dft2(x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = m[i] ? r[i] - y[i] : cplx(0.0);
    const std::vector<cplx> back = idft2(r, h, w);
    for (std::size_t i = 0; i < x.size(); ++i)
      worst_mri = std::max(worst_mri, std::abs(2.0 * back[i] + 2.0 * l * (x[i] - z[i])));
  }
  return {worst_den <= kXUpdateTol && worst_mri <= kXUpdateTol,
          "denoise " + fmt("%.3g", worst_den) + ", mri " + fmt("%.3g", worst_mri)};
}

Verdict training_monotonicity() {
  std::mt19937_64 rng(1006);
  const Eigen::MatrixXcd Xt = oracle::random_matrix(4, 16, rng);
  const Eigen::MatrixXcd X = Xt + 0.5 * oracle::random_matrix(4, 16, rng);
  TrainingSet ts{{2, 2, Xt}, {2, 2, X}, {}};
  for (std::size_t n = 0; n < 16; ++n) ts.refs.push_back({0, {n, 0}});
  TrainingConfig cfg;
  cfg.n_filters = 4;
  cfg.patch_h = 2;
  cfg.patch_w = 2;
  cfg.max_block_sweeps = 10;
  cfg.rel_diff_tol = 1e-300;
  const LayerMapping init = initial_layer(cfg);
  double prev = layer_objective(ts, init);
  const double first = prev;
  double worst = 0.0;
  std::size_t events = 0, sweeps_seen = 0;
  train_layer(ts, init, cfg, [&](const BlockEvent& e) {
    ++events;
    sweeps_seen = std::max(sweeps_seen, e.sweep);
    worst = std::max(worst, (e.objective - prev) / prev);
    prev = e.objective;
  });
  return {worst <= kMonotoneRelSlack && sweeps_seen == 10 && events == 80,
          std::to_string(events) + " block updates over " + std::to_string(sweeps_seen) +
              " sweeps, objective " + fmt("%.6g", first) + " -> " + fmt("%.6g", prev) +
              ", max rel increase " + fmt("%.3g", std::max(0.0, worst))};
}

struct DenoiseRun {
  RecoveryModel model;
  std::string metrics_csv;
  double noisy_db = 0.0;
  std::vector<double> trace_db;
  double seconds = 0.0;
};

DenoiseRun desk_denoising() {
  const double sigma = natural_sigma_to_scale(30.0, 1.0);
  std::vector<Image> clean;
  std::vector<ForwardProblem> probs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    clean.push_back(gen_phantom(PhantomKind::ellipse, 64, 64, s));
    probs.push_back(ForwardProblem::denoising(add_awgn(clean.back(), sigma, 100 + s, false)));
  }
  TrainingConfig cfg;
  cfg.n_filters = 16;
  cfg.patch_h = 4;
  cfg.patch_w = 4;
  cfg.n_patches = 4000;
  cfg.n_layers = 10;
  cfg.lambda = 10.0 / sigma;
  const auto t0 = std::chrono::steady_clock::now();
  DenoiseRun run;
  run.model = train_network(clean, probs, cfg);
  run.seconds = seconds_since(t0);

  const Image test = gen_phantom(PhantomKind::ellipse, 64, 64, 77);
  const ForwardProblem prob = ForwardProblem::denoising(add_awgn(test, sigma, 999, false));
  const RecoveryResult r = recover(run.model, prob, prob.initial_estimate());
  const auto trace = recovery_trace(r, &test, 1.0);
  run.noisy_db = psnr(prob.y, test, 1.0);
  for (const auto& row : trace) run.trace_db.push_back(row.psnr_db);
  run.metrics_csv = format_metrics_csv(trace);
  return run;
}

Verdict judge_denoising(const DenoiseRun& run) {
  bool monotone = true;
  double prev = run.noisy_db;
  for (std::size_t i = 0; i < 5 && i < run.trace_db.size(); ++i) {
    if (run.trace_db[i] < prev) monotone = false;
    prev = run.trace_db[i];
  }
  const double gain = run.trace_db.back() - run.noisy_db;
  std::string trace;
  for (double v : run.trace_db) trace += fmt(" %.2f", v);
  return {gain >= kDenoiseGainDb && monotone && run.seconds < kDenoiseSeconds,
          "noisy " + fmt("%.2f", run.noisy_db) + " dB, final " + fmt("%.2f", run.trace_db.back()) +
              " dB (gain " + fmt("%.2f", gain) + "), trace" + trace + ", train " +
              fmt("%.0f", run.seconds) + " s"};
}

Verdict desk_mri() {
  auto sample = [](std::uint64_t seed) {
    const Image hi = gen_phantom(PhantomKind::ellipse, 192, 192, seed, true);
    const SamplingMask m = gen_mask(64, 64, 0.25, 0.3, seed + 1000);
    return std::make_pair(bandlimit_downsample(hi, 64, 64),
                          ForwardProblem::mri(simulate_kspace(hi, 64, 64, m, 0.0, seed + 2000), m));
  };
  std::vector<Image> clean;
  std::vector<ForwardProblem> probs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto [ref, p] = sample(s);
    clean.push_back(std::move(ref));
    probs.push_back(std::move(p));
  }
  TrainingConfig cfg = TrainingConfig::defaults_for(ProblemKind::mri);
  cfg.n_filters = 16;
  cfg.patch_h = 4;
  cfg.patch_w = 4;
  cfg.n_patches = 4000;
  cfg.n_layers = 10;
  const auto t0 = std::chrono::steady_clock::now();
  const RecoveryModel model = train_network(clean, probs, cfg);
  const auto [ref, prob] = sample(77);
  const Image zf = prob.initial_estimate();
  const RecoveryResult r = recover(model, prob, zf);
  const double secs = seconds_since(t0);
  const double zf_db = psnr(zf, ref);
  const double final_db = psnr(r.image, ref);
  return {final_db - zf_db >= kMriGainDb && secs < kMriSeconds,
          "zero-filled " + fmt("%.2f", zf_db) + " dB, final " + fmt("%.2f", final_db) + " dB (gain " +
              fmt("%.2f", final_db - zf_db) + "), lambda " + fmt("%.0e", model.lambda) + ", " +
              fmt("%.0f", secs) + " s"};
}

Verdict serialization() {
  std::mt19937_64 rng(1009);
  std::uniform_int_distribution<int> small(1, 4);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    RecoveryModel m;
    m.kind = t % 2 ? ProblemKind::mri : ProblemKind::denoising;
    m.lambda = u(rng) * 1e3;
    const std::size_t ph = small(rng), pw = small(rng);
    const std::size_t k = std::min<std::size_t>(ph * pw, small(rng));
    const int layers = small(rng) - 1;
    for (int l = 0; l < layers; ++l) {
      LayerMapping layer{ph, pw, oracle::random_matrix(Eigen::Index(ph * pw), Eigen::Index(k), rng),
                         Eigen::VectorXd(Eigen::Index(k))};
      for (Eigen::Index j = 0; j < layer.filters.cols(); ++j) layer.filters.col(j).normalize();
      for (auto& a : layer.thresholds) a = u(rng);
      m.layers.push_back(std::move(layer));
    }
    const Bytes b = serialize_model(m);
    const RecoveryModel back = deserialize_model(b);
    bool same = serialize_model(back) == b && back.lambda == m.lambda && back.kind == m.kind &&
                back.layers.size() == m.layers.size();
    for (std::size_t l = 0; same && l < m.layers.size(); ++l)
      same = back.layers[l].filters == m.layers[l].filters &&
             back.layers[l].thresholds == m.layers[l].thresholds;
    if (!same) ++bad;
  }
  RecoveryModel g;
  g.kind = ProblemKind::mri;
  g.lambda = 1.0;
  g.layers.push_back({1, 1, Eigen::MatrixXcd::Ones(1, 1), Eigen::VectorXd::Zero(1)});
  const Bytes gb = serialize_model(g);
  const Bytes golden_header = {'B', 'C', 'D', 'N', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0,
                               1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
  const bool header_ok = gb.size() == 57 && std::equal(golden_header.begin(), golden_header.end(), gb.begin());
  return {bad == 0 && header_ok, std::to_string(100 - bad) + "/100 round trips, golden header " +
                                     (header_ok ? "ok" : "mismatch")};
}

Verdict determinism(const DenoiseRun& a, const DenoiseRun& b) {
  double worst = 0.0;
  bool shape = a.model.layers.size() == b.model.layers.size();
  for (std::size_t l = 0; shape && l < a.model.layers.size(); ++l) {
    const auto& la = a.model.layers[l];
    const auto& lb = b.model.layers[l];
    shape = la.filters.rows() == lb.filters.rows() && la.filters.cols() == lb.filters.cols();
    if (!shape) break;
    worst = std::max(worst, (la.filters - lb.filters).cwiseAbs().maxCoeff());
    worst = std::max(worst, (la.thresholds - lb.thresholds).cwiseAbs().maxCoeff());
  }
  const bool csv_same = a.metrics_csv == b.metrics_csv;
  return {shape && worst <= kModelTol && csv_same,
          "max parameter diff " + fmt("%.3g", worst) + ", metrics CSV " + (csv_same ? "identical" : "differs")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Verdict& v) {
    std::printf("criterion %2d %s: %s (%s)\n", id, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  };
  report(1, "gradient vs finite differences", gradient_oracle());
  report(2, "complex gradient reduces to real", real_reduction());
  report(3, "unit-ball QCQP", qcqp());
  report(4, "patch form vs convolution form", mapping_equivalence());
  report(5, "x-update optimality", x_update_optimality());
  report(6, "training monotonicity", training_monotonicity());
  const DenoiseRun first = desk_denoising();
  report(7, "desk-scale denoising", judge_denoising(first));
  report(8, "desk-scale MRI", desk_mri());
  report(9, "model serialization", serialization());
  const DenoiseRun second = desk_denoising();
  report(10, "determinism", determinism(first, second));
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
