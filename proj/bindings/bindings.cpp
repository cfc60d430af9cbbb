#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <utility>

#include "dsn/common.hpp"
#include "dsn/image.hpp"
#include "dsn/metrics.hpp"
#include "dsn/model.hpp"
#include "dsn/nn.hpp"
#include "dsn/superpixel.hpp"
#include "dsn/tensor.hpp"

namespace py = pybind11;

namespace {

dsn::SegmenterConfig segmenter_config(const std::string& backend, int n) {
    dsn::SegmenterConfig config;
    if (backend == "slic")
        config.backend = dsn::SegmenterBackend::Slic;
    else if (backend == "cnn")
        config.backend = dsn::SegmenterBackend::Cnn;
    else
        dsn::raise(dsn::Errc::InvalidConfig, "unknown segmenter backend: " + backend);
    config.n_superpixels = n;
    return config;
}

// Thin scoring handle around a checkpoint.
class Model {
public:
    explicit Model(const std::string& checkpoint_path)
        : bundle_(std::make_unique<dsn::ModelBundle>(dsn::load_checkpoint(checkpoint_path))) {}

    double score(const std::string& image_path) {
        return dsn::score_image(*bundle_, dsn::decode_image(image_path));
    }

    std::string variant() const { return dsn::variant_name(bundle_->config.variant); }
    std::int64_t parameter_count() { return bundle_->parameter_count(); }

private:
    std::unique_ptr<dsn::ModelBundle> bundle_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "superpixel-guided blind image quality assessment core";

    py::register_exception<dsn::Error>(m, "DsnError");

    m.def("version", [] { return std::string(dsn::kArtifactVersion); });

    m.def("srcc", &dsn::srcc, py::arg("pred"), py::arg("gt"),
          "Spearman rank correlation (average ranks for ties)");
    m.def("plcc", &dsn::plcc, py::arg("pred"), py::arg("gt"),
          "Pearson linear correlation on raw values");

    m.def(
        "slic_labels",
        [](const std::string& image_path, int n) {
            const dsn::ImageSample image = dsn::decode_image(image_path);
            dsn::SegmenterConfig config = segmenter_config("slic", n);
            std::vector<std::int32_t> labels = dsn::slic_segment_labels(image, config);
            return py::make_tuple(std::move(labels), image.height(), image.width());
        },
        py::arg("image_path"), py::arg("n") = 100,
        "SLIC label map of an image file; returns (labels_row_major, h, w)");

    m.def(
        "segment_probmap",
        [](const std::string& image_path, int n) {
            const dsn::ImageSample image = dsn::decode_image(image_path);
            const dsn::SuperpixelProbMap map =
                dsn::segment(image, segmenter_config("slic", n), nullptr);
            return py::make_tuple(map.probs.vec(), map.n_superpixels, map.height(), map.width());
        },
        py::arg("image_path"), py::arg("n") = 100,
        "Superpixel probability map; returns (values {n,h,w} row-major, n, h, w)");

    m.def(
        "adaptive_pool",
        [](const std::vector<double>& values, int c, int h, int w, int out_h, int out_w,
           const std::string& mode) {
            if (static_cast<std::int64_t>(values.size()) !=
                static_cast<std::int64_t>(c) * h * w)
                dsn::raise(dsn::Errc::DimMismatch, "values do not fill the declared shape");
            dsn::Tensor t({c, h, w});
            t.vec() = values;
            dsn::nn::PoolMode m2 = dsn::nn::PoolMode::Average;
            if (mode == "max")
                m2 = dsn::nn::PoolMode::Max;
            else if (mode != "average")
                dsn::raise(dsn::Errc::InvalidConfig, "mode must be average or max");
            return dsn::nn::adaptive_pool(t, out_h, out_w, m2).vec();
        },
        py::arg("values"), py::arg("c"), py::arg("h"), py::arg("w"), py::arg("out_h"),
        py::arg("out_w"), py::arg("mode") = "average",
        "Adaptive pooling over a {c,h,w} row-major array");

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
        .def("score", &Model::score, py::arg("image_path"),
             "Quality score of an image at its native size")
        .def_property_readonly("variant", &Model::variant)
        .def_property_readonly("parameter_count", &Model::parameter_count);
}
