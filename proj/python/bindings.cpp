#include "bcdnet/error.hpp"
#include "bcdnet/filter_update.hpp"
#include "bcdnet/io.hpp"
#include "bcdnet/mapping.hpp"
#include "bcdnet/numerics.hpp"
#include "bcdnet/recovery.hpp"
#include "bcdnet/simulate.hpp"
#include "bcdnet/training.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace bcdnet;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;
using BArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image to_image(const CArray& arr, Domain domain = Domain::spatial) {
  if (arr.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto h = static_cast<std::size_t>(arr.shape(0));
  const auto w = static_cast<std::size_t>(arr.shape(1));
  return Image(h, w, std::vector<cplx>(arr.data(), arr.data() + h * w), domain);
}

py::array_t<cplx> from_image(const Image& img) {
  py::array_t<cplx> out({img.height(), img.width()});
  std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
  return out;
}

SamplingMask to_mask(const BArray& arr) {
  if (arr.ndim() != 2) throw ShapeError("expected a 2-D mask");
  SamplingMask m;
  m.height = static_cast<std::size_t>(arr.shape(0));
  m.width = static_cast<std::size_t>(arr.shape(1));
  m.sampled.assign(arr.data(), arr.data() + m.height * m.width);
  for (auto& b : m.sampled) b = b != 0 ? 1 : 0;
  return m;
}

py::array_t<bool> from_mask(const SamplingMask& m) {
  py::array_t<bool> out({m.height, m.width});
  bool* dst = out.mutable_data();
  for (std::size_t i = 0; i < m.sampled.size(); ++i) dst[i] = m.sampled[i] != 0;
  return out;
}

ForwardProblem make_problem(ProblemKind kind, const CArray& y, const std::optional<BArray>& mask) {
  if (kind == ProblemKind::mri) {
    if (!mask) throw InvalidArgument("MRI problems need a sampling mask");
    return ForwardProblem::mri(to_image(y, Domain::frequency), to_mask(*mask));
  }
  return ForwardProblem::denoising(to_image(y));
}

}  // namespace

PYBIND11_MODULE(_bcdnet, m) {
  m.doc() = "Trained identical encoding-decoding mappings for iterative image recovery";
  m.attr("__version__") = "0.1.0";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::enum_<ProblemKind>(m, "ProblemKind")
      .value("denoising", ProblemKind::denoising)
      .value("mri", ProblemKind::mri);
  py::enum_<PhantomKind>(m, "PhantomKind")
      .value("ellipse", PhantomKind::ellipse)
      .value("blocks", PhantomKind::blocks);

  // core numerics
  m.def("soft_threshold", &soft_threshold, py::arg("v"), py::arg("a"));
  m.def("fft2_unitary", [](const CArray& x) { return from_image(fft2_unitary(to_image(x))); });
  m.def("ifft2_unitary", [](const CArray& x) {
    return from_image(ifft2_unitary(to_image(x, Domain::frequency)));
  });
  m.def(
      "psnr",
      [](const CArray& recon, const CArray& ref, std::optional<double> peak) {
        return psnr(to_image(recon), to_image(ref), peak);
      },
      py::arg("recon"), py::arg("reference"), py::arg("peak") = py::none());

  // mapping
  py::class_<LayerMapping>(m, "LayerMapping")
      .def(py::init([](const Eigen::MatrixXcd& filters, const Eigen::VectorXd& thresholds,
                       std::size_t patch_h, std::size_t patch_w) {
             LayerMapping l{patch_h, patch_w, filters, thresholds};
             l.validate();
             return l;
           }),
           py::arg("filters"), py::arg("thresholds"), py::arg("patch_h"), py::arg("patch_w"))
      .def_readwrite("filters", &LayerMapping::filters)
      .def_readwrite("thresholds", &LayerMapping::thresholds)
      .def_readonly("patch_h", &LayerMapping::patch_h)
      .def_readonly("patch_w", &LayerMapping::patch_w);
  m.def("apply_mapping", [](const LayerMapping& layer, const CArray& x) {
    return from_image(apply_mapping(layer, to_image(x)));
  });
  m.def("apply_mapping_averaged", [](const LayerMapping& layer, const CArray& x) {
    return from_image(apply_mapping_averaged(layer, to_image(x)));
  });
  m.def("init_dct_filters", &init_dct_filters, py::arg("patch_h"), py::arg("patch_w"),
        py::arg("n_filters"));

  // filter update primitives
  m.def("grad_threshold_quadratic", &grad_threshold_quadratic, py::arg("v"), py::arg("g"),
        py::arg("h"), py::arg("alpha"), py::arg("rho"));
  m.def("v_update_elementwise", &v_update_elementwise, py::arg("g"), py::arg("h"),
        py::arg("alpha"), py::arg("rho"), py::arg("c"), py::arg("v_init"), py::arg("iters"));
  m.def(
      "solve_qcqp",
      [](const Eigen::MatrixXcd& H, const Eigen::VectorXcd& b) {
        QcqpResult r = solve_qcqp(H, b);
        return py::make_tuple(r.d, r.multiplier);
      },
      py::arg("H"), py::arg("b"), "Returns (d, multiplier).");
  m.def("residual_balance", &residual_balance, py::arg("rho"), py::arg("primal"), py::arg("dual"));

  // recovery
  py::class_<RecoveryModel>(m, "RecoveryModel")
      .def(py::init<>())
      .def_readwrite("layers", &RecoveryModel::layers)
      .def_readwrite("lambda_", &RecoveryModel::lambda)
      .def_readwrite("kind", &RecoveryModel::kind)
      .def("__len__", [](const RecoveryModel& m) { return m.layers.size(); });
  m.def("x_update_denoise", [](const CArray& y, const CArray& z, double lambda) {
    return from_image(x_update_denoise(to_image(y), to_image(z), lambda));
  });
  m.def("x_update_mri", [](const CArray& y, const BArray& mask, const CArray& z, double lambda) {
    return from_image(
        x_update_mri(to_image(y, Domain::frequency), to_mask(mask), to_image(z), lambda));
  });
  m.def(
      "recover",
      [](const RecoveryModel& model, const CArray& y, const std::optional<BArray>& mask,
         const std::optional<CArray>& x0) {
        const ForwardProblem prob = make_problem(model.kind, y, mask);
        const Image start = x0 ? to_image(*x0) : prob.initial_estimate();
        const RecoveryResult r = recover(model, prob, start);
        py::list iterates;
        for (const auto& x : r.iterates) iterates.append(from_image(x));
        return py::make_tuple(from_image(r.image), iterates, r.layer_costs);
      },
      py::arg("model"), py::arg("y"), py::arg("mask") = py::none(), py::arg("x0") = py::none(),
      "Returns (image, iterates, layer_costs).");

  // training
  py::class_<TrainingConfig>(m, "TrainingConfig")
      .def(py::init<>())
      .def_static("defaults_for", &TrainingConfig::defaults_for)
      .def_readwrite("n_filters", &TrainingConfig::n_filters)
      .def_readwrite("patch_h", &TrainingConfig::patch_h)
      .def_readwrite("patch_w", &TrainingConfig::patch_w)
      .def_readwrite("n_patches", &TrainingConfig::n_patches)
      .def_readwrite("lambda_", &TrainingConfig::lambda)
      .def_readwrite("n_layers", &TrainingConfig::n_layers)
      .def_readwrite("admm_iters", &TrainingConfig::admm_iters)
      .def_readwrite("v_subgrad_iters", &TrainingConfig::v_subgrad_iters)
      .def_readwrite("alpha_subgrad_iters", &TrainingConfig::alpha_subgrad_iters)
      .def_readwrite("rel_diff_tol", &TrainingConfig::rel_diff_tol)
      .def_readwrite("max_block_sweeps", &TrainingConfig::max_block_sweeps)
      .def_readwrite("rho0", &TrainingConfig::rho0)
      .def_readwrite("seed", &TrainingConfig::seed);
  m.def(
      "train_network",
      [](const std::vector<CArray>& clean, const std::vector<CArray>& measurements,
         ProblemKind kind, const TrainingConfig& cfg, const std::optional<std::vector<BArray>>& masks) {
        std::vector<Image> imgs;
        std::vector<ForwardProblem> probs;
        for (std::size_t l = 0; l < clean.size(); ++l) {
          imgs.push_back(to_image(clean[l]));
          std::optional<BArray> mk;
          if (masks && l < masks->size()) mk = (*masks)[l];
          probs.push_back(make_problem(kind, measurements.at(l), mk));
        }
        NetworkTrainLog log;
        RecoveryModel model;
        {
          py::gil_scoped_release release;
          model = train_network(imgs, probs, cfg, &log);
        }
        return py::make_tuple(model, log.train_psnr_db);
      },
      py::arg("clean"), py::arg("measurements"), py::arg("kind"), py::arg("config"),
      py::arg("masks") = py::none(), "Returns (model, per-layer training PSNR).");

  // simulation
  m.def(
      "gen_phantom",
      [](PhantomKind kind, std::size_t h, std::size_t w, std::uint64_t seed, bool complex_valued) {
        return from_image(gen_phantom(kind, h, w, seed, complex_valued));
      },
      py::arg("kind"), py::arg("height"), py::arg("width"), py::arg("seed"),
      py::arg("complex_valued") = false);
  m.def("add_awgn", [](const CArray& x, double sigma, std::uint64_t seed, bool complex_noise) {
    return from_image(add_awgn(to_image(x), sigma, seed, complex_noise));
  });
  m.def(
      "gen_mask",
      [](std::size_t h, std::size_t w, double rate, double center_fraction, std::uint64_t seed) {
        return from_mask(gen_mask(h, w, rate, center_fraction, seed));
      },
      py::arg("height"), py::arg("width"), py::arg("rate"), py::arg("center_fraction"),
      py::arg("seed"));
  m.def("simulate_kspace", [](const CArray& hi, std::size_t th, std::size_t tw,
                              const BArray& mask, double sigma_k, std::uint64_t seed) {
    return from_image(simulate_kspace(to_image(hi), th, tw, to_mask(mask), sigma_k, seed));
  });
  m.def("bandlimit_downsample", [](const CArray& hi, std::size_t th, std::size_t tw) {
    return from_image(bandlimit_downsample(to_image(hi), th, tw));
  });

  // serialization
  m.def("serialize_model", [](const RecoveryModel& model) {
    const Bytes b = serialize_model(model);
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
  });
  m.def("deserialize_model", [](const py::bytes& data) {
    const std::string s = data;
    return deserialize_model(
        std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });
}
