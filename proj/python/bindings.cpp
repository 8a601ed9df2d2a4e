#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "handseg/bench.hpp"
#include "handseg/data.hpp"
#include "handseg/eval.hpp"
#include "handseg/network.hpp"
#include "handseg/training.hpp"

namespace py = pybind11;
using namespace handseg;

namespace {

Tensor tensor_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 3) throw std::invalid_argument("expected a (channels, height, width) array");
    const Shape shape{static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                      static_cast<int>(arr.shape(2))};
    std::vector<real> data(arr.data(), arr.data() + arr.size());
    return Tensor(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    py::array_t<double> arr({t.channels(), t.height(), t.width()});
    std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
    return arr;
}

}  // namespace

PYBIND11_MODULE(_handseg, m) {
    m.doc() = "Two-stage multiscale convolutional hand segmentation";

    py::class_<CascadeModel>(m, "CascadeModel")
        .def("param_count", [](const CascadeModel& c) {
            return param_count(c.part1) + param_count(c.part2);
        })
        .def_readonly("coarse_output_factor", &CascadeModel::coarse_output_factor);

    m.def("init_cascade", [](std::uint64_t seed) { return init_cascade(seed); }, py::arg("seed"));
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &load_model, py::arg("path"));

    m.def("cascade_forward",
          [](const CascadeModel& model, py::array_t<double> image) {
              auto [coarse, fine] = cascade_forward(model, tensor_from_array(image));
              return py::make_tuple(array_from_tensor(coarse), array_from_tensor(fine));
          },
          py::arg("model"), py::arg("image"),
          "Returns (coarse, fine) probability maps for a (3,H,W) image in [0,1].");

    m.def("conv2d_forward",
          [](py::array_t<double> input, py::array_t<double> weights, py::array_t<double> bias) {
              auto w = py::array_t<double, py::array::c_style | py::array::forcecast>(weights);
              if (w.ndim() != 4) throw std::invalid_argument("weights must be (out,in,kh,kw)");
              KernelBank k = KernelBank::zeros(static_cast<int>(w.shape(0)),
                                               static_cast<int>(w.shape(1)),
                                               static_cast<int>(w.shape(2)),
                                               static_cast<int>(w.shape(3)));
              std::copy(w.data(), w.data() + w.size(), k.weights.begin());
              auto b = py::array_t<double, py::array::c_style | py::array::forcecast>(bias);
              if (b.size() != static_cast<py::ssize_t>(k.bias.size())) {
                  throw std::invalid_argument("bias length must equal out_channels");
              }
              std::copy(b.data(), b.data() + b.size(), k.bias.begin());
              return array_from_tensor(conv2d_forward(tensor_from_array(input), k));
          },
          py::arg("input"), py::arg("weights"), py::arg("bias"));

    m.def("resize_bilinear",
          [](py::array_t<double> input, int out_h, int out_w) {
              return array_from_tensor(resize_bilinear(tensor_from_array(input), out_h, out_w));
          },
          py::arg("input"), py::arg("out_h"), py::arg("out_w"));

    m.def("generate_sample",
          [](std::uint64_t seed, int height, int width) {
              SynthConfig cfg;
              cfg.height = height;
              cfg.width = width;
              Rng rng(seed);
              Sample s = generate_sample(rng, cfg);
              return py::make_tuple(array_from_tensor(s.image), array_from_tensor(s.mask));
          },
          py::arg("seed"), py::arg("height") = 120, py::arg("width") = 188);

    m.def("generate_dataset",
          [](int count, std::uint64_t seed, const std::filesystem::path& out_dir) {
              SynthConfig cfg;
              cfg.count = count;
              return generate_dataset(cfg, seed, out_dir);
          },
          py::arg("count"), py::arg("seed"), py::arg("out_dir"));

    m.def("train_cascade",
          [](CascadeModel& model, const std::filesystem::path& manifest, int epochs1, int epochs2,
             std::uint64_t seed) {
              const auto train = load_samples(manifest, "train");
              TrainConfig c1;
              c1.stage = 1;
              c1.epochs = epochs1;
              c1.seed = seed;
              const auto h1 = train_stage1(model.part1, train, c1);
              TrainConfig c2 = c1;
              c2.stage = 2;
              c2.epochs = epochs2;
              const auto h2 = train_stage2(model, train, c2);
              std::vector<double> losses;
              for (const auto& e : h1) losses.push_back(e.loss);
              for (const auto& e : h2) losses.push_back(e.loss);
              return losses;
          },
          py::arg("model"), py::arg("manifest"), py::arg("epochs1"), py::arg("epochs2"),
          py::arg("seed"));

    m.def("accuracy",
          [](py::array_t<double> pred, py::array_t<double> target, double threshold) {
              return accuracy(tensor_from_array(pred), tensor_from_array(target), threshold)
                  .accuracy;
          },
          py::arg("pred"), py::arg("target"), py::arg("threshold") = 0.5);
}
