#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "texanom/autoencoder.hpp"
#include "texanom/dataio.hpp"
#include "texanom/errors.hpp"
#include "texanom/metrics.hpp"
#include "texanom/pipeline.hpp"
#include "texanom/pyramid.hpp"
#include "texanom/similarity.hpp"
#include "texanom/train.hpp"

namespace py = pybind11;
using namespace texanom;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Grid<T> to_grid(const Array<T>& a) {
  if (a.ndim() != 2) throw ContractError("expected a 2-D array");
  const auto rows = static_cast<int>(a.shape(0)), cols = static_cast<int>(a.shape(1));
  return Grid<T>(rows, cols, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const Grid<T>& g) {
  Array<T> a({g.rows(), g.cols()});
  std::copy(g.values().begin(), g.values().end(), a.mutable_data());
  return a;
}

py::list decompose(const Array<double>& image, int orientations, int scales) {
  const auto x = to_grid(image);
  const pyramid::Decomposer d({orientations, scales, x.rows(), x.cols()});
  py::list out;
  for (const auto& sb : d.decompose(x).subbands) out.append(to_array(sb.coeffs));
  return out;
}

pyramid::SubbandDecomposition from_list(const pyramid::Decomposer& d, const py::list& bands) {
  auto dec = d.zeros();
  if (bands.size() != dec.size()) throw ContractError("expected " + std::to_string(dec.size()) + " subbands");
  for (std::size_t i = 0; i < dec.size(); ++i) {
    auto g = to_grid(bands[i].cast<Array<cplx>>());
    if (!g.same_shape(dec[i].coeffs)) throw ContractError("subband " + std::to_string(i) + " has the wrong shape");
    dec[i].coeffs = std::move(g);
  }
  return dec;
}

autoencoder::TrainConfig train_config(const std::string& loss, int epochs, std::size_t patch_count, int patch_size,
                                      int batch_size, int orientations, int scales, std::uint64_t seed, int threads) {
  autoencoder::TrainConfig cfg;
  cfg.loss = similarity::parse_loss_kind(loss);
  cfg.epochs = epochs;
  cfg.patch_count = patch_count;
  cfg.patch_size = patch_size;
  cfg.batch_size = batch_size;
  cfg.pyramid = pyramid::DecomposerConfig::square(patch_size, orientations, scales);
  cfg.seed = seed;
  cfg.threads = threads;
  return cfg;
}

pipeline::InferenceConfig inference_config(int patch_size, int stride, std::vector<int> fusion_scales,
                                           int orientations, int window) {
  pipeline::InferenceConfig cfg;
  cfg.patch_size = patch_size;
  cfg.stride = stride;
  cfg.fusion_scales = std::move(fusion_scales);
  cfg.orientations = orientations;
  cfg.window = window;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_texanom, m) {
  m.doc() = "Texture anomaly detection with complex-wavelet structural similarity";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<CalibrationError>(m, "CalibrationError", PyExc_RuntimeError);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", PyExc_ValueError);
  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);

  m.def("load_image", [](const std::filesystem::path& p) { return to_array(dataio::load_image(p)); }, py::arg("path"));
  m.def("save_image", [](const Array<double>& a, const std::filesystem::path& p) { dataio::save_image(to_grid(a), p); },
        py::arg("image"), py::arg("path"));
  m.def("load_mask", [](const std::filesystem::path& p) { return to_array(dataio::load_mask(p)); }, py::arg("path"));

  m.def("subband_count", &pyramid::subband_count, py::arg("orientations"), py::arg("scales"));
  m.def("decompose", &decompose, py::arg("image"), py::arg("orientations") = 6, py::arg("scales") = 5);
  m.def(
      "adjoint",
      [](const py::list& bands, int rows, int cols, int orientations, int scales) {
        const pyramid::Decomposer d({orientations, scales, rows, cols});
        return to_array(d.adjoint(from_list(d, bands)));
      },
      py::arg("subbands"), py::arg("rows"), py::arg("cols"), py::arg("orientations") = 6, py::arg("scales") = 5);

  m.def(
      "cwssim_window",
      [](const Array<cplx>& a, const Array<cplx>& b, double k) {
        if (a.size() != b.size()) throw ContractError("windows differ in size");
        return similarity::cwssim_window({a.data(), static_cast<std::size_t>(a.size())},
                                         {b.data(), static_cast<std::size_t>(b.size())}, k);
      },
      py::arg("wx"), py::arg("wy"), py::arg("k") = 0.01);
  m.def(
      "cwssim_loss",
      [](const Array<double>& x, const Array<double>& y, int orientations, int scales, int window, double k) {
        const auto gx = to_grid(x), gy = to_grid(y);
        const pyramid::Decomposer d({orientations, scales, gx.rows(), gx.cols()});
        return similarity::cwssim_loss(gx, gy, d, {window, k, 1});
      },
      py::arg("x"), py::arg("y"), py::arg("orientations") = 6, py::arg("scales") = 5, py::arg("window") = 7,
      py::arg("k") = 0.01);
  m.def(
      "cwssim_loss_grad",
      [](const Array<double>& x, const Array<double>& y, int orientations, int scales, int window, double k) {
        const auto gx = to_grid(x), gy = to_grid(y);
        const pyramid::Decomposer d({orientations, scales, gx.rows(), gx.cols()});
        return to_array(similarity::cwssim_loss_grad(gx, gy, d, {window, k, 1}));
      },
      py::arg("x"), py::arg("y"), py::arg("orientations") = 6, py::arg("scales") = 5, py::arg("window") = 7,
      py::arg("k") = 0.01);
  m.def("mse_loss", [](const Array<double>& x, const Array<double>& y) { return similarity::mse_loss(to_grid(x), to_grid(y)); });
  m.def("ssim_index", [](const Array<double>& x, const Array<double>& y) { return similarity::ssim_index(to_grid(x), to_grid(y)); });

  py::class_<autoencoder::ModelParams>(m, "Model")
      .def_property_readonly("param_count", &autoencoder::ModelParams::param_count)
      .def_property_readonly("description", [](const autoencoder::ModelParams& p) { return p.arch.describe(); })
      .def("reconstruct",
           [](const autoencoder::ModelParams& p, const Array<double>& x) {
             return to_array(autoencoder::reconstruct(to_grid(x), p));
           })
      .def("save", [](const autoencoder::ModelParams& p, const std::filesystem::path& path) {
        autoencoder::save_model(p, path);
      });

  m.def("default_param_count", [] { return autoencoder::ArchitectureSpec::default_spec().param_count(); });
  m.def("init_model",
        [](const std::vector<int>& widths, std::uint64_t seed) {
          return autoencoder::init_model(autoencoder::ArchitectureSpec::symmetric(widths), seed);
        },
        py::arg("widths"), py::arg("seed") = 0);
  m.def("load_model", &autoencoder::load_model, py::arg("path"));
  m.def(
      "train",
      [](const std::vector<Array<double>>& images, const std::vector<int>& widths, const std::string& loss, int epochs,
         std::size_t patch_count, int patch_size, int batch_size, int orientations, int scales, std::uint64_t seed,
         int threads) {
        std::vector<GrayImage> grids;
        for (const auto& a : images) grids.push_back(to_grid(a));
        const auto cfg =
            train_config(loss, epochs, patch_count, patch_size, batch_size, orientations, scales, seed, threads);
        autoencoder::TrainResult r;
        {
          py::gil_scoped_release release;
          r = autoencoder::train(grids, autoencoder::ArchitectureSpec::symmetric(widths), cfg);
        }
        return py::make_tuple(std::move(r.model), r.loss_history);
      },
      py::arg("images"), py::arg("widths"), py::arg("loss") = "cwssim", py::arg("epochs") = 20,
      py::arg("patch_count") = 2000, py::arg("patch_size") = 64, py::arg("batch_size") = 8,
      py::arg("orientations") = 4, py::arg("scales") = 3, py::arg("seed") = 0, py::arg("threads") = 1);

  m.def(
      "reconstruct_full",
      [](const Array<double>& image, const autoencoder::ModelParams& model, int patch_size, int stride) {
        const auto net = [&model](const RealGrid& x) { return autoencoder::reconstruct(x, model); };
        return to_array(pipeline::reconstruct_full(to_grid(image), net, patch_size, stride));
      },
      py::arg("image"), py::arg("model"), py::arg("patch_size"), py::arg("stride") = 16);
  m.def(
      "anomaly_map",
      [](const Array<double>& image, const Array<double>& reconstruction, std::vector<int> fusion_scales,
         int orientations, int window) {
        const auto cfg = inference_config(256, 16, std::move(fusion_scales), orientations, window);
        return to_array(pipeline::anomaly_map(to_grid(image), to_grid(reconstruction), cfg));
      },
      py::arg("image"), py::arg("reconstruction"), py::arg("fusion_scales") = std::vector<int>{7, 8, 9},
      py::arg("orientations") = 6, py::arg("window") = 7);
  m.def(
      "calibrate_threshold",
      [](std::vector<double> scores, double target_fpr) { return pipeline::calibrate_threshold(std::move(scores), target_fpr); },
      py::arg("normal_scores"), py::arg("target_fpr") = 0.05);
  m.def("empirical_fpr", &pipeline::empirical_fpr, py::arg("normal_scores"), py::arg("gamma"), py::arg("strict") = false);
  m.def(
      "binarize_and_erode",
      [](const Array<double>& map, double gamma, int radius) {
        return to_array(pipeline::binarize_and_erode(to_grid(map), gamma, radius));
      },
      py::arg("map"), py::arg("gamma"), py::arg("radius") = 10);

  m.def(
      "roc_curve",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        const auto c = metrics::roc_curve(scores, labels);
        std::vector<double> fpr, tpr;
        for (const auto& p : c.points) {
          fpr.push_back(p.fpr);
          tpr.push_back(p.tpr);
        }
        return py::make_tuple(fpr, tpr);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        return metrics::auc(metrics::roc_curve(scores, labels));
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "partial_auc_normalized",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels, double fpr_max) {
        return metrics::partial_auc_normalized(metrics::roc_curve(scores, labels), fpr_max);
      },
      py::arg("scores"), py::arg("labels"), py::arg("fpr_max") = 0.3);
  m.def(
      "connected_components",
      [](const Array<std::uint8_t>& mask, int connectivity) {
        const auto cc = metrics::connected_components(to_grid(mask), connectivity);
        return py::make_tuple(to_array(cc.labels), cc.sizes);
      },
      py::arg("mask"), py::arg("connectivity") = 8);
  m.def(
      "defect_coverage",
      [](const Array<std::uint8_t>& gt, const Array<std::uint8_t>& pred, int connectivity) {
        const auto c = metrics::defect_coverage(to_grid(gt), to_grid(pred), connectivity);
        return py::make_tuple(c.per_defect, c.median);
      },
      py::arg("gt"), py::arg("pred"), py::arg("connectivity") = 8);
}
