#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "synthcp/anomaly.hpp"
#include "synthcp/errors.hpp"
#include "synthcp/failure.hpp"
#include "synthcp/metrics.hpp"
#include "synthcp/pipeline.hpp"
#include "synthcp/scenegen.hpp"

namespace py = pybind11;
using namespace synthcp;
using nn::Shape;
using nn::Tensor;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

py::object to_python(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_python(const py::object& o) {
    return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

// (H, W) integer map -> (1, 1, H, W).
Tensor<int> label_tensor(const Array<int>& a) {
    if (a.ndim() != 2) throw ShapeError("label map must be 2-D (H, W)");
    const Shape s{1, 1, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))};
    return Tensor<int>(s, std::vector<int>(a.data(), a.data() + a.size()));
}

// (C, H, W) or (H, W) float array -> (1, C, H, W).
Tensor<float> float_tensor(const Array<float>& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected a (C, H, W) or (H, W) array");
    const bool planar = a.ndim() == 3;
    const Shape s{1, planar ? static_cast<int>(a.shape(0)) : 1, static_cast<int>(a.shape(planar ? 1 : 0)),
                  static_cast<int>(a.shape(planar ? 2 : 1))};
    return Tensor<float>(s, std::vector<float>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t, bool squeeze_channel) {
    const Shape s = t.shape();
    std::vector<py::ssize_t> dims;
    if (!(squeeze_channel && s.c == 1)) dims.push_back(s.c);
    dims.push_back(s.h);
    dims.push_back(s.w);
    py::array_t<T> out(dims);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const Array<double>& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

metrics::ScoredSet scored(const Array<double>& scores, const Array<int>& labels) {
    metrics::ScoredSet s{to_vector(scores), std::vector<int>(labels.data(), labels.data() + labels.size())};
    s.validate();
    return s;
}

metrics::Positive positive_from(const std::string& name) {
    if (name == "error") return metrics::Positive::Error;
    if (name == "success") return metrics::Positive::Success;
    throw ConfigError("positive must be 'error' or 'success'");
}

pipeline::ExperimentConfig config_from(const py::object& cfg) {
    if (py::isinstance<py::str>(cfg) || py::hasattr(cfg, "__fspath__"))
        return pipeline::load_config(cfg.cast<std::filesystem::path>());
    auto c = pipeline::ExperimentConfig::from_json(from_python(cfg));
    if (const char* env = std::getenv(pipeline::kOutputRootEnv); env && *env) c.output_root = env;
    return c;
}

// Trained models of one output root.
class Run {
  public:
    explicit Run(const std::filesystem::path& root) : root_(root) {
        const auto cfg = pipeline::load_config(root / "config.json");
        auto at = [&](pipeline::Stage s) {
            auto c = cfg;
            c.output_root = root;
            return pipeline::stage_dir(c, s);
        };
        seg_ = segmenter::load_segmenter(at(pipeline::Stage::Seg));
        gan_ = synthesis::load_gan(at(pipeline::Stage::Gan));
        const auto comp_dir = at(pipeline::Stage::FailureTrain);
        if (std::filesystem::exists(comp_dir)) comparator_ = failure::load_comparator(comp_dir);
    }

    py::dict segment(const Array<float>& image) const {
        const auto out = segmenter::segment(*seg_, float_tensor(image));
        py::dict d;
        d["pred"] = to_array(out.pred, true);
        d["max_prob"] = to_array(out.max_prob, true);
        d["features"] = to_array(out.features, false);
        return d;
    }

    py::array_t<float> synthesize(const Array<int>& label) const {
        return to_array(synthesis::synthesize(*gan_, label_tensor(label)), false);
    }

    py::dict anomalies(const Array<float>& image, double threshold, bool postprocess) const {
        const auto r = anomaly::segment_anomalies(*seg_, *gan_, float_tensor(image), {threshold, postprocess});
        py::dict d;
        d["raw"] = to_array(r.raw, true);
        d["scores"] = to_array(r.scores, true);
        d["max_prob"] = to_array(r.max_prob, true);
        d["pred"] = to_array(r.pred, true);
        d["synth"] = to_array(r.synth, false);
        return d;
    }

    py::array_t<float> msp(const Array<float>& image) const {
        return to_array(anomaly::msp_baseline(*seg_, float_tensor(image)), true);
    }

    py::dict failures(const Array<float>& image) const {
        if (!comparator_) throw PrerequisiteError("no trained comparator under " + root_.string() + "; run failure-train first");
        const auto x = float_tensor(image);
        const auto seg = segmenter::segment(*seg_, x);
        const auto synth = synthesis::synthesize(*gan_, seg.pred);
        const auto c = failure::detect_failures(*comparator_, x, synth, seg.pred);
        py::dict d;
        d["iou_pred"] = c.iou_pred;
        d["error_prob"] = to_array(c.error_prob, true);
        d["pred"] = to_array(seg.pred, true);
        d["synth"] = to_array(synth, false);
        return d;
    }

  private:
    std::filesystem::path root_;
    std::unique_ptr<segmenter::SegmenterModel> seg_;
    std::unique_ptr<synthesis::GanModel> gan_;
    std::unique_ptr<failure::ComparatorModel> comparator_;
};

}  // namespace

PYBIND11_MODULE(_synthcp, m) {
    m.doc() = "Synthesize-then-compare failure and anomaly detection";

    auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<PrerequisiteError>(m, "PrerequisiteError", PyExc_RuntimeError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    (void)config_error;

    m.attr("__version__") = pipeline::kToolVersion;

    m.def(
        "generate_scene",
        [](int index, bool anomaly, int num_classes, int width, int height, std::uint64_t seed) {
            const auto spec = scenegen::default_scene_spec(num_classes, width, height, seed);
            const auto s = scenegen::generate_scene(spec, index, anomaly);
            return py::make_tuple(to_array(s.image, false), to_array(s.label, true));
        },
        py::arg("index"), py::arg("anomaly") = false, py::arg("num_classes") = 6, py::arg("width") = 32,
        py::arg("height") = 32, py::arg("seed") = 1,
        "Render one procedural scene; returns (image (3, H, W), label (H, W)).");

    m.def("compute_iou", [](const Array<int>& pred, const Array<int>& gt, int num_classes) {
        return failure::compute_iou(label_tensor(pred), label_tensor(gt), num_classes);
    }, py::arg("pred"), py::arg("gt"), py::arg("num_classes"));
    m.def("compute_error_map", [](const Array<int>& pred, const Array<int>& gt) {
        return to_array(failure::compute_error_map(label_tensor(pred), label_tensor(gt)), true);
    }, py::arg("pred"), py::arg("gt"));

    m.def("cosine_distance_map", [](const Array<float>& f, const Array<float>& g, double eps) {
        return to_array(anomaly::cosine_distance_map(float_tensor(f), float_tensor(g), eps), true);
    }, py::arg("feat_x"), py::arg("feat_xhat"), py::arg("eps") = anomaly::kNormEps);
    m.def("msp_postprocess", [](const Array<float>& raw, const Array<float>& max_prob, double threshold, bool enabled) {
        const anomaly::PostProcessConfig cfg{threshold, enabled};
        cfg.validate();
        return to_array(anomaly::msp_postprocess(float_tensor(raw), float_tensor(max_prob), cfg), true);
    }, py::arg("raw"), py::arg("max_prob"), py::arg("threshold") = anomaly::kDefaultThreshold, py::arg("enabled") = true);

    m.def("auroc", [](const Array<double>& s, const Array<int>& y) { return metrics::auroc(scored(s, y)); },
          py::arg("scores"), py::arg("labels"));
    m.def("aupr", [](const Array<double>& s, const Array<int>& y, const std::string& positive) {
        return metrics::aupr(scored(s, y), positive_from(positive));
    }, py::arg("scores"), py::arg("labels"), py::arg("positive") = "error");
    m.def("fpr_at_95_tpr", [](const Array<double>& s, const Array<int>& y) { return metrics::fpr_at_95_tpr(scored(s, y)); },
          py::arg("scores"), py::arg("labels"));
    m.def("regression_metrics", [](const Array<double>& pred, const Array<double>& gt) {
        const auto p = to_vector(pred);
        const auto g = to_vector(gt);
        const auto r = metrics::regression_metrics(p, g);
        py::dict d;
        d["mae"] = r.mae;
        d["std"] = r.std;
        d["pearson"] = r.pearson;
        d["spearman"] = r.spearman;
        return d;
    }, py::arg("pred"), py::arg("gt"));

    m.def("config_reference", &pipeline::config_reference);
    m.def("normalize_config", [](const py::object& cfg) { return to_python(config_from(cfg).to_json(true)); },
          py::arg("config"), "Validate a config (dict or path) and return it with defaults filled in.");
    m.def("stages", [] {
        std::vector<std::string> out;
        for (auto s : pipeline::all_stages()) out.push_back(pipeline::stage_name(s));
        return out;
    });
    m.def(
        "run_stage",
        [](const py::object& cfg, const std::string& stage, bool force) {
            const auto c = config_from(cfg);
            pipeline::RunOptions opts;
            opts.force = force;
            py::gil_scoped_release release;
            pipeline::run_stage(c, pipeline::stage_from_name(stage), opts);
        },
        py::arg("config"), py::arg("stage"), py::arg("force") = false);
    m.def(
        "full_run",
        [](const py::object& cfg) {
            const auto c = config_from(cfg);
            metrics::MetricsReport report;
            {
                py::gil_scoped_release release;
                report = pipeline::full_run(c);
            }
            return to_python(report.to_json());
        },
        py::arg("config"), "Run every stage and return the report as a dict.");
    m.def(
        "status",
        [](const py::object& cfg) {
            const auto c = config_from(cfg);
            const auto manifest = pipeline::RunManifest::load(c.output_root);
            py::dict d;
            for (auto s : pipeline::all_stages())
                d[py::str(pipeline::stage_name(s))] = pipeline::status_name(pipeline::stage_status(manifest, c, s));
            return d;
        },
        py::arg("config"));

    py::class_<Run>(m, "Run", "Trained models loaded from a pipeline output root.")
        .def(py::init<const std::filesystem::path&>(), py::arg("root"))
        .def("segment", &Run::segment, py::arg("image"))
        .def("synthesize", &Run::synthesize, py::arg("label"))
        .def("segment_anomalies", &Run::anomalies, py::arg("image"),
             py::arg("threshold") = anomaly::kDefaultThreshold, py::arg("postprocess") = true)
        .def("msp_baseline", &Run::msp, py::arg("image"))
        .def("detect_failures", &Run::failures, py::arg("image"));
}
