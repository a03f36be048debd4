#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/numpy.h>

#include <cstring>
#include <string>
#include <vector>

#include "dcnn/data.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/gradcheck.hpp"
#include "dcnn/layers.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/network.hpp"
#include "dcnn/png_io.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/tensor.hpp"
#include "dcnn/training.hpp"

namespace py = pybind11;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

namespace {

dcnn::Tensor tensor_from_array(const FloatArray& array) {
  std::vector<std::size_t> dims(array.ndim());
  for (py::ssize_t i = 0; i < array.ndim(); ++i)
    dims[static_cast<std::size_t>(i)] =
        static_cast<std::size_t>(array.shape(i));
  std::vector<float> data(array.data(), array.data() + array.size());
  return dcnn::Tensor::from_data(dcnn::Shape(std::move(dims)),
                                 std::move(data));
}

py::array array_from_tensor(const dcnn::Tensor& t) {
  std::vector<py::ssize_t> dims;
  for (std::size_t d : t.shape().dims())
    dims.push_back(static_cast<py::ssize_t>(d));
  py::array_t<float> out(dims);
  std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(float));
  return out;
}

py::dict report_to_dict(const dcnn::MetricsReport& r) {
  py::dict d;
  d["sensitivity"] = r.sensitivity;
  d["specificity"] = r.specificity;
  d["ppv"] = r.ppv;
  d["tpr"] = r.tpr;
  d["f1"] = r.f1;
  d["accuracy"] = r.accuracy;
  d["weighted_log_loss"] = r.weighted_log_loss;
  d["tp"] = r.confusion.tp;
  d["fp"] = r.confusion.fp;
  d["tn"] = r.confusion.tn;
  d["fn"] = r.confusion.fn;
  d["n"] = r.n;
  d["threshold"] = r.threshold;
  d["flags"] = r.flags;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Convolutional network engine for binary grayscale-image "
            "classification";

  py::register_exception<dcnn::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<dcnn::ArgumentError>(m, "ArgumentError",
                                              PyExc_ValueError);
  py::register_exception<dcnn::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<dcnn::FormatError>(m, "FormatError",
                                            PyExc_RuntimeError);
  py::register_exception<dcnn::StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<dcnn::NumericError>(m, "NumericError",
                                             PyExc_ArithmeticError);
  py::register_exception<dcnn::IoError>(m, "IoError", PyExc_OSError);

  // ---- tensor operations ----
  m.def("matmul", [](const FloatArray& a, const FloatArray& b) {
    return array_from_tensor(
        dcnn::matmul(tensor_from_array(a), tensor_from_array(b)));
  });
  m.def("softmax", [](const FloatArray& logits) {
    return array_from_tensor(dcnn::softmax(tensor_from_array(logits)));
  });
  m.def("relu", [](const FloatArray& x) {
    return array_from_tensor(dcnn::relu_forward(tensor_from_array(x)));
  });
  m.def(
      "conv2d",
      [](const FloatArray& input, const FloatArray& weights,
         const FloatArray& bias, std::size_t stride, std::size_t padding) {
        dcnn::ConvLayer layer{tensor_from_array(weights),
                              tensor_from_array(bias), stride, padding};
        return array_from_tensor(
            dcnn::conv_forward(layer, tensor_from_array(input)));
      },
      py::arg("input"), py::arg("weights"), py::arg("bias"),
      py::arg("stride") = 1, py::arg("padding") = 0,
      "Cross-correlation of [N,C,H,W] input with [O,C,kh,kw] kernels");
  m.def("maxpool2x2", [](const FloatArray& x) {
    return array_from_tensor(dcnn::maxpool_forward(tensor_from_array(x)).first);
  });
  m.def(
      "fill_normal",
      [](std::uint64_t seed, const std::vector<std::size_t>& shape, float mean,
         float stddev) {
        dcnn::Rng rng(seed);
        return array_from_tensor(
            dcnn::fill_normal(rng, dcnn::Shape(shape), mean, stddev));
      },
      py::arg("seed"), py::arg("shape"), py::arg("mean") = 0.0f,
      py::arg("stddev") = 1.0f);
  m.def("derive_seed", &dcnn::derive_seed, py::arg("seed"), py::arg("tag"));
  m.def("save_tnsr", [](const std::string& path, const FloatArray& array) {
    dcnn::save_tnsr_file(tensor_from_array(array), path);
  });
  m.def("load_tnsr", [](const std::string& path) {
    return array_from_tensor(dcnn::load_tnsr_file(path));
  });
  m.def("rescale", [](const FloatArray& image, std::size_t out_h,
                      std::size_t out_w) {
    dcnn::Tensor t = tensor_from_array(image);
    if (t.shape().rank() == 2)
      t = dcnn::Tensor::from_data(
          dcnn::Shape{1, t.shape()[0], t.shape()[1]},
          std::vector<float>(t.data(), t.data() + t.size()));
    return array_from_tensor(dcnn::rescale(t, out_h, out_w));
  });
  m.def("read_png", [](const std::string& path) {
    const dcnn::GrayImage img = dcnn::read_png_gray(path);
    py::array_t<float> out({static_cast<py::ssize_t>(img.height),
                            static_cast<py::ssize_t>(img.width)});
    std::memcpy(out.mutable_data(), img.pixels.data(),
                img.pixels.size() * sizeof(float));
    return py::make_tuple(out, img.bit_depth);
  });

  // ---- network ----
  py::class_<dcnn::ConvSpec>(m, "ConvSpec")
      .def(py::init<std::size_t, std::size_t>(), py::arg("out_channels"),
           py::arg("kernel"))
      .def_readwrite("out_channels", &dcnn::ConvSpec::out_channels)
      .def_readwrite("kernel", &dcnn::ConvSpec::kernel);

  py::class_<dcnn::NetworkConfig>(m, "NetworkConfig")
      .def(py::init<>())
      .def_readwrite("input_h", &dcnn::NetworkConfig::input_h)
      .def_readwrite("input_w", &dcnn::NetworkConfig::input_w)
      .def_readwrite("convs", &dcnn::NetworkConfig::convs)
      .def_readwrite("pool_after", &dcnn::NetworkConfig::pool_after)
      .def_readwrite("fc_dims", &dcnn::NetworkConfig::fc_dims)
      .def_readwrite("stride", &dcnn::NetworkConfig::stride)
      .def_readwrite("padding", &dcnn::NetworkConfig::padding);

  m.def("shape_trace", [](const dcnn::NetworkConfig& cfg) {
    py::list out;
    for (const dcnn::StageShape& s : dcnn::shape_trace(cfg))
      out.append(py::make_tuple(s.name, s.dims));
    return out;
  });

  py::class_<dcnn::Network>(m, "Network")
      .def_static(
          "build",
          [](const dcnn::NetworkConfig& cfg, std::uint64_t seed) {
            dcnn::Rng rng(seed);
            return dcnn::Network::build(cfg, rng);
          },
          py::arg("config"), py::arg("seed"))
      .def("forward",
           [](const dcnn::Network& net, const FloatArray& batch) {
             return array_from_tensor(
                 net.forward(tensor_from_array(batch)).probs);
           })
      .def("save", &dcnn::Network::save)
      .def_static("load", &dcnn::Network::load)
      .def_property_readonly("config", &dcnn::Network::config)
      .def_property_readonly("parameter_names",
                             &dcnn::Network::parameter_names);

  // ---- data pipeline ----
  py::class_<dcnn::LabeledDataset>(m, "LabeledDataset")
      .def("__len__", [](const dcnn::LabeledDataset& ds) { return ds.size(); })
      .def_readonly("f_cancer", &dcnn::LabeledDataset::f_cancer)
      .def_readonly("f_free", &dcnn::LabeledDataset::f_free)
      .def("labels",
           [](const dcnn::LabeledDataset& ds) {
             std::vector<int> out;
             for (const dcnn::Sample& s : ds.samples) out.push_back(s.label);
             return out;
           })
      .def("ids",
           [](const dcnn::LabeledDataset& ds) {
             std::vector<std::string> out;
             for (const dcnn::Sample& s : ds.samples) out.push_back(s.id);
             return out;
           })
      .def("image", [](const dcnn::LabeledDataset& ds, std::size_t i) {
        return array_from_tensor(ds.samples.at(i).image);
      });

  m.def("generate_synthetic", &dcnn::generate_synthetic, py::arg("n"),
        py::arg("h"), py::arg("w"), py::arg("seed"));
  m.def("load_dataset", &dcnn::load_dataset, py::arg("dir"));
  m.def("write_dataset", &dcnn::write_dataset, py::arg("dataset"),
        py::arg("dir"));
  m.def(
      "split_dataset",
      [](const dcnn::LabeledDataset& ds, double train, double val, double test,
         std::uint64_t seed) {
        const dcnn::SplitResult r =
            dcnn::split(ds, dcnn::SplitSpec{train, val, test, seed});
        return py::make_tuple(r.train, r.val, r.test,
                              r.stratification_warning);
      },
      py::arg("dataset"), py::arg("train") = 0.5, py::arg("val") = 0.25,
      py::arg("test") = 0.25, py::arg("seed") = 0);

  // ---- training ----
  py::class_<dcnn::TrainingConfig>(m, "TrainingConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &dcnn::TrainingConfig::batch_size)
      .def_readwrite("learning_rate", &dcnn::TrainingConfig::learning_rate)
      .def_readwrite("momentum", &dcnn::TrainingConfig::momentum)
      .def_readwrite("max_iterations", &dcnn::TrainingConfig::max_iterations)
      .def_readwrite("epochs", &dcnn::TrainingConfig::epochs)
      .def_readwrite("seed", &dcnn::TrainingConfig::seed)
      .def_readwrite("eval_every", &dcnn::TrainingConfig::eval_every)
      .def_readwrite("class_weighted_loss",
                     &dcnn::TrainingConfig::class_weighted_loss);

  m.def(
      "train",
      [](const dcnn::Network& net, const dcnn::LabeledDataset& train_set,
         const dcnn::LabeledDataset& val_set, const dcnn::TrainingConfig& cfg) {
        const dcnn::TrainResult r = dcnn::train(net, train_set, val_set, cfg);
        py::list records;
        for (const dcnn::LogRecord& rec : r.log.records) {
          py::dict d;
          d["iteration"] = rec.iteration;
          d["split"] = rec.split == dcnn::Split::train ? "train" : "validation";
          d["loss"] = rec.loss;
          d["accuracy"] = rec.accuracy;
          records.append(d);
        }
        py::dict out;
        out["network"] = r.network;
        out["final_network"] = r.final_network;
        out["records"] = records;
        out["diverged"] = r.diverged;
        out["best_iteration"] = r.best_iteration;
        out["best_val_loss"] = r.best_val_loss;
        out["iterations_run"] = r.iterations_run;
        return out;
      },
      py::arg("network"), py::arg("train_set"), py::arg("val_set"),
      py::arg("config"));

  m.def(
      "cross_entropy_loss",
      [](const FloatArray& probs, const std::vector<int>& labels) {
        const dcnn::CrossEntropyResult r =
            dcnn::cross_entropy_loss(tensor_from_array(probs), labels);
        return py::make_tuple(r.loss, array_from_tensor(r.d_logits));
      },
      py::arg("probs"), py::arg("labels"));

  // ---- metrics ----
  py::class_<dcnn::ConfusionMatrix>(m, "ConfusionMatrix")
      .def(py::init<>())
      .def_readwrite("tp", &dcnn::ConfusionMatrix::tp)
      .def_readwrite("fp", &dcnn::ConfusionMatrix::fp)
      .def_readwrite("tn", &dcnn::ConfusionMatrix::tn)
      .def_readwrite("fn", &dcnn::ConfusionMatrix::fn)
      .def("total", &dcnn::ConfusionMatrix::total);

  m.def("confusion",
        [](const std::vector<int>& preds, const std::vector<int>& labels) {
          return dcnn::confusion(preds, labels);
        });
  m.def("sensitivity", &dcnn::sensitivity);
  m.def("specificity", &dcnn::specificity);
  m.def("ppv", &dcnn::ppv);
  m.def("f1_score", &dcnn::f1_score);
  m.def("weighted_log_loss",
        [](const FloatArray& probs, const std::vector<int>& labels) {
          const dcnn::WeightedLogLossResult r =
              dcnn::weighted_log_loss(tensor_from_array(probs), labels);
          py::dict d;
          d["value"] = r.value;
          d["weight_defined"] = r.weight_defined;
          d["unweighted"] = r.unweighted;
          return d;
        });
  m.def(
      "evaluate",
      [](const dcnn::Network& net, const dcnn::LabeledDataset& ds,
         double threshold) {
        return report_to_dict(dcnn::evaluate(net, ds, threshold));
      },
      py::arg("network"), py::arg("dataset"), py::arg("threshold") = 0.5);

  // ---- verification ----
  m.def(
      "run_gradcheck",
      [](std::uint64_t seed) {
        const dcnn::GradCheckReport r = dcnn::run_gradcheck(seed);
        py::list out;
        for (const dcnn::GradCheckEntry& e : r.entries)
          out.append(py::make_tuple(e.name, e.max_rel_error));
        return py::make_tuple(out, r.tolerance, r.passed());
      },
      py::arg("seed") = 0);
}
