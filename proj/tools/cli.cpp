#include "cli.hpp"

#include "bcdnet/error.hpp"
#include "bcdnet/io.hpp"
#include "bcdnet/recovery.hpp"
#include "bcdnet/simulate.hpp"
#include "bcdnet/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>

namespace fs = std::filesystem;

namespace bcdnet::cli {

namespace {

// Simulation output layout (pairing is by file stem):
//   <out>/clean/<stem>.cimg   reference image
//   <out>/meas/<stem>.cimg    noisy image (denoise) or k-space (mri)
//   <out>/mask/<stem>.cmsk    sampling mask (mri)
//   <out>/init/<stem>.cimg    warm start x0 (noisy image or zero-filled)
struct SimulateArgs {
  std::string problem = "denoise";
  std::string phantom = "ellipse";
  std::size_t size = 64;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  double sigma = 30.0;
  double peak = 1.0;
  double sigma_k = 0.0;
  double rate = 0.25;
  double center_fraction = 0.3;
  std::size_t supersample = 3;
  std::string out;
};

std::string stem_for(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%03zu", i);
  return buf;
}

ProblemKind parse_problem(const std::string& s) {
  if (s == "denoise" || s == "denoising") return ProblemKind::denoising;
  if (s == "mri") return ProblemKind::mri;
  throw ConfigError("unknown problem '" + s + "' (expected denoise or mri)");
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

std::uint64_t image_seed(std::uint64_t seed, std::size_t i, std::uint64_t salt) {
  return seed * 0x9e3779b97f4a7c15ULL + i * 0x2545f4914f6cdd1dULL + salt;
}

int do_simulate(const SimulateArgs& a, std::ostream& out) {
  const ProblemKind kind = parse_problem(a.problem);
  const PhantomKind phantom = a.phantom == "blocks" ? PhantomKind::blocks : PhantomKind::ellipse;
  if (a.phantom != "blocks" && a.phantom != "ellipse") {
    throw ConfigError("unknown phantom '" + a.phantom + "'");
  }
  if (a.count == 0 || a.supersample == 0) throw ConfigError("count and supersample must be >= 1");
  const fs::path root(a.out);
  make_dir(root / "clean");
  make_dir(root / "meas");
  make_dir(root / "init");
  if (kind == ProblemKind::mri) make_dir(root / "mask");

  for (std::size_t i = 0; i < a.count; ++i) {
    const std::string stem = stem_for(i);
    if (kind == ProblemKind::denoising) {
      Image clean = gen_phantom(phantom, a.size, a.size, image_seed(a.seed, i, 1));
      for (auto& p : clean.pixels()) p *= a.peak;
      const Image noisy =
          add_awgn(clean, natural_sigma_to_scale(a.sigma, a.peak), image_seed(a.seed, i, 2), false);
      write_image(root / "clean" / (stem + ".cimg"), clean);
      write_image(root / "meas" / (stem + ".cimg"), noisy);
      write_image(root / "init" / (stem + ".cimg"), noisy);
    } else {
      const std::size_t hi = a.size * a.supersample;
      Image phantom_hi = gen_phantom(phantom, hi, hi, image_seed(a.seed, i, 1), true);
      for (auto& p : phantom_hi.pixels()) p *= a.peak;
      const SamplingMask mask =
          gen_mask(a.size, a.size, a.rate, a.center_fraction, image_seed(a.seed, i, 3));
      const Image k = simulate_kspace(phantom_hi, a.size, a.size, mask, a.sigma_k,
                                      image_seed(a.seed, i, 2));
      const ForwardProblem prob = ForwardProblem::mri(k, mask);
      write_image(root / "clean" / (stem + ".cimg"), bandlimit_downsample(phantom_hi, a.size, a.size));
      write_image(root / "meas" / (stem + ".cimg"), k);
      write_mask(root / "mask" / (stem + ".cmsk"), mask);
      write_image(root / "init" / (stem + ".cimg"), prob.initial_estimate());
    }
  }
  out << "wrote " << a.count << " " << a.problem << " sample(s) to " << root.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string train_dir;
  std::string model;
  std::string metrics;
};

int do_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(a.config);
  if (!a.train_dir.empty()) cfg.train_dir = a.train_dir;
  if (!a.model.empty()) cfg.model_path = a.model;
  if (!a.metrics.empty()) cfg.metrics_path = a.metrics;
  if (cfg.train_dir.empty()) throw ConfigError("no training directory (train_dir or --train-dir)");
  if (cfg.model_path.empty()) throw ConfigError("no model output path (model or --model)");

  const fs::path root(cfg.train_dir);
  if (!fs::is_directory(root / "clean")) {
    throw IoError("training directory " + root.string() + " has no clean/ subdirectory");
  }
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(root / "clean")) {
    if (entry.path().extension() == ".cimg") stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw IoError("no .cimg files under " + (root / "clean").string());

  std::vector<Image> clean;
  std::vector<ForwardProblem> problems;
  for (const auto& stem : stems) {
    clean.push_back(read_image(root / "clean" / (stem + ".cimg")));
    if (cfg.problem == ProblemKind::denoising) {
      problems.push_back(ForwardProblem::denoising(read_image(root / "meas" / (stem + ".cimg"))));
    } else {
      problems.push_back(
          ForwardProblem::mri(read_image(root / "meas" / (stem + ".cimg"), Domain::frequency),
                              read_mask(root / "mask" / (stem + ".cmsk"))));
    }
  }

  NetworkTrainLog log;
  const RecoveryModel model = train_network(clean, problems, cfg.training, &log);
  write_model(cfg.model_path, model);
  if (!cfg.metrics_path.empty()) write_training_csv(cfg.metrics_path, log.sweeps);
  for (std::size_t i = 0; i < log.train_psnr_db.size(); ++i) {
    out << "layer " << (i + 1) << ": training PSNR " << log.train_psnr_db[i] << " dB\n";
  }
  out << "wrote model with " << model.layers.size() << " layer(s) to " << cfg.model_path << "\n";
  return kExitOk;
}

struct RecoverArgs {
  std::string model;
  std::string meas;
  std::string mask;
  std::string init;
  std::string ref;
  std::string out;
  std::string metrics;
  double peak = 0.0;
};

int do_recover(const RecoverArgs& a, std::ostream& out) {
  const RecoveryModel model = read_model(a.model);
  ForwardProblem problem;
  if (model.kind == ProblemKind::mri) {
    if (a.mask.empty()) throw ConfigError("an MRI model needs --mask");
    problem = ForwardProblem::mri(read_image(a.meas, Domain::frequency), read_mask(a.mask));
  } else {
    problem = ForwardProblem::denoising(read_image(a.meas));
  }
  const Image x0 = a.init.empty() ? problem.initial_estimate() : read_image(a.init);
  const RecoveryResult result = recover(model, problem, x0);

  std::optional<Image> ref;
  if (!a.ref.empty()) ref = read_image(a.ref);
  const std::optional<double> peak = a.peak > 0.0 ? std::optional<double>(a.peak) : std::nullopt;
  write_image(a.out, result.image);
  if (!a.metrics.empty()) {
    if (result.layer_costs.empty()) throw ConfigError("model has no layers; no metrics to write");
    write_metrics_csv(a.metrics, recovery_trace(result, ref ? &*ref : nullptr, peak));
  }
  if (ref) out << "final PSNR " << psnr(result.image, *ref, peak) << " dB\n";
  return kExitOk;
}

int do_eval(const std::string& recon, const std::string& ref, double peak, std::ostream& out) {
  const double value = psnr(read_image(recon), read_image(ref),
                            peak > 0.0 ? std::optional<double>(peak) : std::nullopt);
  if (std::isinf(value)) {
    out << "inf dB\n";
  } else {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f dB\n", value);
    out << buf;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative image recovery with trained identical encoding-decoding mappings",
               "bcdnet"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate phantoms and measurements");
  simulate->add_option("--problem", sim.problem, "denoise or mri")->capture_default_str();
  simulate->add_option("--phantom", sim.phantom, "ellipse or blocks")->capture_default_str();
  simulate->add_option("--size", sim.size, "Image side length")->capture_default_str();
  simulate->add_option("--count", sim.count, "Number of images")->capture_default_str();
  simulate->add_option("--seed", sim.seed)->capture_default_str();
  simulate->add_option("--sigma", sim.sigma, "Noise std on the [0,255] scale (denoise)")
      ->capture_default_str();
  simulate->add_option("--peak", sim.peak, "Clean image peak")->capture_default_str();
  simulate->add_option("--sigma-k", sim.sigma_k, "k-space noise std (mri)")->capture_default_str();
  simulate->add_option("--rate", sim.rate, "Sampling rate (mri)")->capture_default_str();
  simulate->add_option("--center-fraction", sim.center_fraction)->capture_default_str();
  simulate->add_option("--supersample", sim.supersample, "Phantom oversampling (mri)")
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model layer by layer");
  train->add_option("--config", tr.config, "key = value configuration file")->required();
  train->add_option("--train-dir", tr.train_dir);
  train->add_option("--model", tr.model, "Output model (.bcdn)");
  train->add_option("--metrics", tr.metrics, "Per-sweep training CSV");

  RecoverArgs rc;
  auto* recov = app.add_subcommand("recover", "Run a trained model on one measurement");
  recov->add_option("--model", rc.model)->required();
  recov->add_option("--meas", rc.meas, "Noisy image or k-space (.cimg)")->required();
  recov->add_option("--mask", rc.mask, "Sampling mask (.cmsk), MRI only");
  recov->add_option("--init", rc.init, "Warm start (.cimg); defaults to the standard x0");
  recov->add_option("--ref", rc.ref, "Reference image for the PSNR column");
  recov->add_option("--out", rc.out, "Reconstruction (.cimg)")->required();
  recov->add_option("--metrics", rc.metrics, "Per-layer CSV");
  recov->add_option("--peak", rc.peak, "PSNR peak (default: reference maximum)");

  std::string ev_recon, ev_ref;
  double ev_peak = 0.0;
  auto* eval = app.add_subcommand("eval", "Print the PSNR of a reconstruction");
  eval->add_option("--recon", ev_recon)->required();
  eval->add_option("--ref", ev_ref)->required();
  eval->add_option("--peak", ev_peak, "PSNR peak (default: reference maximum)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (simulate->parsed()) return do_simulate(sim, out);
    if (train->parsed()) return do_train(tr, out);
    if (recov->parsed()) return do_recover(rc, out);
    if (eval->parsed()) return do_eval(ev_recon, ev_ref, ev_peak, out);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace bcdnet::cli
