#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "splitseg/analysis.hpp"
#include "splitseg/codec.hpp"
#include "splitseg/container.hpp"
#include "splitseg/net.hpp"

namespace py = pybind11;
using namespace splitseg;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> a(shape);
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
}

py::array_t<int32_t> array_from_qtensor(const QTensor& q) {
    std::vector<py::ssize_t> shape(q.shape.begin(), q.shape.end());
    py::array_t<int32_t> a(shape);
    std::copy(q.values.begin(), q.values.end(), a.mutable_data());
    return a;
}

SegMap segmap_from_array(const py::array_t<uint16_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("segmentation map must be a 2-D array");
    SegMap m;
    m.height = static_cast<int>(a.shape(0));
    m.width = static_cast<int>(a.shape(1));
    m.labels.assign(a.data(), a.data() + a.size());
    return m;
}

py::array_t<uint16_t> array_from_segmap(const SegMap& m) {
    py::array_t<uint16_t> a({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
    std::copy(m.labels.begin(), m.labels.end(), a.mutable_data());
    return a;
}

DecoderConfig make_config(const std::string& variant, int dim, int classes, int groups) {
    DecoderConfig c;
    c.variant = variant_from_name(variant);
    if (dim > 0) c.dim = dim;
    if (c.variant == DecoderVariant::baseline_d) {
        if (dim <= 0) c.dim = 256;
        c.downsample = 4;
    }
    c.classes = classes;
    c.groups = groups;
    c.validate();
    return c;
}

/// Pipeline plus its codec tables, the unit the bindings hand out.
struct PyPipeline {
    Pipeline pipeline;
    CodecContext ctx;
    uint32_t model_id;

    explicit PyPipeline(Pipeline p)
        : pipeline(std::move(p)),
          ctx(make_codec_context(pipeline.factorized_scales)),
          model_id(pipeline_id(pipeline)) {}
};

py::dict report_to_dict(const CostReport& r) {
    py::dict d;
    d["label"] = r.label;
    d["height"] = r.height;
    d["width"] = r.width;
    py::list entries;
    for (const auto& e : r.entries) {
        py::dict row;
        row["layer"] = e.layer;
        row["params"] = e.params;
        row["macs"] = e.macs;
        entries.append(row);
    }
    d["entries"] = entries;
    d["total_params"] = r.total_params();
    d["total_macs"] = r.total_macs();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "split segmentation pipeline: feature codec, decoders, analysis";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<CodecError>(m, "CodecError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

    py::class_<PyPipeline>(m, "Pipeline")
        .def(py::init([](const std::string& variant, int dim, int classes, int groups,
                         uint64_t seed) {
                 return PyPipeline(build_pipeline(make_config(variant, dim, classes, groups), seed));
             }),
             py::arg("variant") = "jd", py::arg("dim") = 0, py::arg("classes") = 150,
             py::arg("groups") = 0, py::arg("seed") = 0)
        .def_static("load",
                    [](const std::string& config_path, const std::string& weights_path) {
                        const DecoderConfig config = load_config(config_path);
                        return PyPipeline(
                            unpack_pipeline(WeightContainer::load(weights_path), config));
                    },
                    py::arg("config_path"), py::arg("weights_path"))
        .def("save",
             [](const PyPipeline& self, const std::string& config_path,
                const std::string& weights_path) {
                 save_config(config_path, self.pipeline.config);
                 pack_pipeline(self.pipeline).save(weights_path);
             },
             py::arg("config_path"), py::arg("weights_path"))
        .def_property_readonly("model_id", [](const PyPipeline& self) { return self.model_id; })
        .def_property_readonly("variant",
                               [](const PyPipeline& self) {
                                   return variant_name(self.pipeline.config.variant);
                               })
        .def_property_readonly("dim",
                               [](const PyPipeline& self) { return self.pipeline.config.dim; })
        .def_property_readonly("classes",
                               [](const PyPipeline& self) { return self.pipeline.config.classes; })
        .def("stub_encode",
             [](const PyPipeline& self, const py::array_t<float, py::array::c_style |
                                                                      py::array::forcecast>& x) {
                 return array_from_tensor(stub_encode(tensor_from_array(x), self.pipeline.stub));
             },
             py::arg("image"))
        .def("feature_encode",
             [](const PyPipeline& self, const py::array_t<float, py::array::c_style |
                                                                      py::array::forcecast>& z) {
                 return array_from_tensor(
                     feature_encode(tensor_from_array(z), self.pipeline.feature));
             },
             py::arg("z"))
        .def("feature_decode",
             [](const PyPipeline& self, const py::array_t<float, py::array::c_style |
                                                                      py::array::forcecast>& r) {
                 return array_from_tensor(
                     feature_decode(tensor_from_array(r), self.pipeline.feature));
             },
             py::arg("r_hat"))
        .def("encode",
             [](const PyPipeline& self, const py::array_t<float, py::array::c_style |
                                                                      py::array::forcecast>& r) {
                 const Tensor latent = tensor_from_array(r);
                 const Bitstream bs =
                     encode(latent, self.pipeline.hyper, self.ctx.factorized, self.ctx.gaussian,
                            self.model_id, latent.dim(1) * 8, latent.dim(2) * 8);
                 const std::vector<uint8_t> bytes = bs.serialize();
                 return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
             },
             py::arg("r"))
        .def("decode",
             [](const PyPipeline& self, const py::bytes& data) {
                 const std::string_view view = data;
                 const Bitstream bs = Bitstream::parse(
                     std::span(reinterpret_cast<const uint8_t*>(view.data()), view.size()));
                 return array_from_qtensor(decode(bs, self.pipeline.hyper, self.ctx.factorized,
                                                  self.ctx.gaussian, self.model_id));
             },
             py::arg("bitstream"))
        .def("estimate_bpp",
             [](const PyPipeline& self, const py::array_t<float, py::array::c_style |
                                                                      py::array::forcecast>& r) {
                 const Tensor latent = tensor_from_array(r);
                 const QTensor r_hat = quantize(latent);
                 const QTensor h_hat = quantize(hyper_encode(latent, self.pipeline.hyper));
                 const Tensor sigma =
                     hyper_sigma(h_hat, self.pipeline.hyper, self.ctx.gaussian.sigma_min);
                 return estimate_bpp(r_hat, h_hat, sigma, self.ctx.factorized, self.ctx.gaussian,
                                     latent.dim(1) * 8, latent.dim(2) * 8);
             },
             py::arg("r"))
        .def("segment",
             [](const PyPipeline& self, const py::array_t<float, py::array::c_style |
                                                                      py::array::forcecast>& f) {
                 const SegResult r = segment(self.pipeline.decoder, tensor_from_array(f));
                 return py::make_tuple(array_from_tensor(r.probabilities),
                                       array_from_segmap(r.map));
             },
             py::arg("features"))
        .def("run",
             [](const PyPipeline& self, const py::array_t<float, py::array::c_style |
                                                                      py::array::forcecast>& image,
                const std::string& topology) {
                 const ClientResult r = run_local(self.pipeline, topology_from_name(topology),
                                                  tensor_from_array(image));
                 py::dict d;
                 d["map"] = array_from_segmap(r.map);
                 d["bytes_sent"] = r.stats.bytes_sent;
                 d["header_bytes"] = r.stats.header_bytes;
                 d["payload_bytes"] = r.stats.payload_bytes;
                 d["bpp"] = r.stats.bpp(static_cast<int>(image.shape(1)),
                                        static_cast<int>(image.shape(2)));
                 return d;
             },
             py::arg("image"), py::arg("topology") = "in-car-jd");

    m.def(
        "quantize",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& t) {
            return array_from_qtensor(quantize(tensor_from_array(t)));
        },
        py::arg("t"), "Elementwise round half away from zero.");

    m.def(
        "gaussian_pmf",
        [](int32_t symbol, double sigma) {
            static const GaussianConditional gc = GaussianConditional::make();
            return gaussian_pmf(symbol, sigma, gc);
        },
        py::arg("symbol"), py::arg("sigma"));

    m.def(
        "analyze",
        [](const std::string& variant, int dim, int classes, int height, int width) {
            return report_to_dict(
                cloud_report(make_config(variant, dim, classes, 0), height, width));
        },
        py::arg("variant") = "jd", py::arg("dim") = 0, py::arg("classes") = 150,
        py::arg("height") = 512, py::arg("width") = 512,
        "Cloud-side parameter/MAC census (CD+JD, or CD+FD+D for the baseline).");

    m.def(
        "miou",
        [](const py::array_t<uint16_t, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<uint16_t, py::array::c_style | py::array::forcecast>& gt, int classes,
           std::optional<uint16_t> ignore) {
            return miou(segmap_from_array(pred), segmap_from_array(gt), classes, ignore);
        },
        py::arg("pred"), py::arg("gt"), py::arg("classes"), py::arg("ignore") = py::none());

    m.def(
        "cross_entropy",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& probabilities,
           const py::array_t<uint16_t, py::array::c_style | py::array::forcecast>& gt,
           std::optional<uint16_t> ignore) {
            return cross_entropy(tensor_from_array(probabilities), segmap_from_array(gt), ignore);
        },
        py::arg("probabilities"), py::arg("gt"), py::arg("ignore") = py::none());

    m.def(
        "rd_loss",
        [](double j_dist, double j_rate, double alpha) {
            return rd_loss(j_dist, j_rate, RdConfig{alpha});
        },
        py::arg("j_dist"), py::arg("j_rate"), py::arg("alpha"));
}
