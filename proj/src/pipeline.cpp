#include "synthcp/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "synthcp/errors.hpp"
#include "synthcp/hashing.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig::ExperimentConfig() { apply_seed(); }

void ExperimentConfig::apply_seed() {
    scene.rng_seed = mix_seed(seed, 1);
    segmenter.seed = mix_seed(seed, 2);
    gan.seed = mix_seed(seed, 3);
    comparator.seed = mix_seed(seed, 4);
}

void ExperimentConfig::validate() const {
    scene.validate();
    if (counts.train < 1 || counts.val < 0 || counts.test < 1 || counts.anomaly < 1)
        throw ConfigError("dataset.counts: train, test and anomaly must be positive, val non-negative");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (counts.train < folds) throw ConfigError("folds exceeds the number of training samples");
    if (scene.width % 16 != 0 || scene.height % 16 != 0)
        throw ConfigError("dataset: image width and height must be multiples of 16");
    postprocess.validate();
    if (t_list.empty()) throw ConfigError("anomaly.t_list must not be empty");
    for (double t : t_list)
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("anomaly.t_list entries must lie in [0, 1]");
    if (output_root.empty()) throw ConfigError("output_root must not be empty");
}

namespace {

Json strip_seeds(Json j) {
    j.erase("seed");
    return j;
}

Json dataset_json(const ExperimentConfig& c) {
    Json d = scenegen::to_json(c.scene);
    d.erase("rng_seed");
    d["counts"] = {{"train", c.counts.train}, {"val", c.counts.val}, {"test", c.counts.test}, {"anomaly", c.counts.anomaly}};
    return d;
}

Json anomaly_json(const ExperimentConfig& c) {
    return Json{{"threshold", c.postprocess.threshold},
                {"postprocess", c.postprocess.enabled},
                {"t_list", c.t_list},
                {"heatmaps", c.heatmaps}};
}

void reject_seed(const Json& section, const char* name) {
    if (section.is_object() && section.contains("seed"))
        throw ConfigError(std::string(name) + ".seed is not configurable; set the top-level seed instead");
}

}  // namespace

Json ExperimentConfig::to_json(bool include_output_root) const {
    Json j{{"seed", seed},
           {"folds", folds},
           {"dataset", dataset_json(*this)},
           {"segmenter", strip_seeds(segmenter.to_json())},
           {"gan", strip_seeds(gan.to_json())},
           {"comparator", strip_seeds(comparator.to_json())},
           {"anomaly", anomaly_json(*this)}};
    if (include_output_root) j["output_root"] = output_root.string();
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    require_known_keys(j, {"seed", "output_root", "folds", "dataset", "segmenter", "gan", "comparator", "anomaly"},
                       "config");
    ExperimentConfig c;
    c.seed = value_or<std::uint64_t>(j, "seed", c.seed, "config");
    c.output_root = value_or(j, "output_root", c.output_root.string(), "config");
    c.folds = value_or(j, "folds", c.folds, "config");
    if (j.contains("dataset")) {
        Json d = j.at("dataset");
        if (!d.is_object()) throw ConfigError("dataset must be an object");
        if (d.contains("rng_seed")) throw ConfigError("dataset.rng_seed is not configurable; set the top-level seed instead");
        if (d.contains("counts")) {
            const Json& n = d.at("counts");
            require_known_keys(n, {"train", "val", "test", "anomaly"}, "dataset.counts");
            c.counts.train = value_or(n, "train", c.counts.train, "dataset.counts");
            c.counts.val = value_or(n, "val", c.counts.val, "dataset.counts");
            c.counts.test = value_or(n, "test", c.counts.test, "dataset.counts");
            c.counts.anomaly = value_or(n, "anomaly", c.counts.anomaly, "dataset.counts");
            d.erase("counts");
        }
        c.scene = scenegen::scene_spec_from_json(d);
    }
    if (j.contains("segmenter")) {
        reject_seed(j.at("segmenter"), "segmenter");
        c.segmenter = segmenter::SegmenterHyperparams::from_json(j.at("segmenter"));
    }
    if (j.contains("gan")) {
        reject_seed(j.at("gan"), "gan");
        c.gan = synthesis::GanHyperparams::from_json(j.at("gan"));
    }
    if (j.contains("comparator")) {
        reject_seed(j.at("comparator"), "comparator");
        c.comparator = failure::ComparatorHyperparams::from_json(j.at("comparator"));
    }
    if (j.contains("anomaly")) {
        const Json& a = j.at("anomaly");
        require_known_keys(a, {"threshold", "postprocess", "t_list", "heatmaps"}, "anomaly");
        c.postprocess.threshold = value_or(a, "threshold", c.postprocess.threshold, "anomaly");
        c.postprocess.enabled = value_or(a, "postprocess", c.postprocess.enabled, "anomaly");
        c.heatmaps = value_or(a, "heatmaps", c.heatmaps, "anomaly");
        if (a.contains("t_list")) {
            try {
                c.t_list = a.at("t_list").get<std::vector<double>>();
            } catch (const Json::exception&) {
                throw ConfigError("anomaly.t_list must be an array of numbers");
            }
        }
    }
    c.apply_seed();
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    auto c = ExperimentConfig::from_json(j);
    if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') c.output_root = env;
    return c;
}

std::string config_reference() {
    const ExperimentConfig c;
    return "// Every key is optional; values shown are the defaults.\n"
           "// seed derives all dataset, initialization and sampling seeds.\n"
           "// output_root can be overridden with the SYNTHCP_OUTPUT_ROOT environment variable.\n" +
           c.to_json(true).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Stages

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages{Stage::Dataset,      Stage::Seg,         Stage::Gan,
                                           Stage::FailureData,  Stage::FailureTrain, Stage::FailureEval,
                                           Stage::AnomalyEval,  Stage::Report};
    return stages;
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Dataset: return "dataset";
        case Stage::Seg: return "seg";
        case Stage::Gan: return "gan";
        case Stage::FailureData: return "failure-data";
        case Stage::FailureTrain: return "failure-train";
        case Stage::FailureEval: return "failure-eval";
        case Stage::AnomalyEval: return "anomaly-eval";
        case Stage::Report: return "report";
    }
    return "?";
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : all_stages())
        if (stage_name(s) == name) return s;
    throw ConfigError("unknown stage '" + name + "'");
}

const std::vector<Stage>& prerequisites(Stage s) {
    static const std::map<Stage, std::vector<Stage>> deps{
        {Stage::Dataset, {}},
        {Stage::Seg, {Stage::Dataset}},
        {Stage::Gan, {Stage::Dataset}},
        {Stage::FailureData, {Stage::Dataset, Stage::Gan}},
        {Stage::FailureTrain, {Stage::FailureData}},
        {Stage::FailureEval, {Stage::Dataset, Stage::Seg, Stage::Gan, Stage::FailureTrain}},
        {Stage::AnomalyEval, {Stage::Dataset, Stage::Seg, Stage::Gan}},
        {Stage::Report, {Stage::FailureEval, Stage::AnomalyEval}},
    };
    return deps.at(s);
}

fs::path stage_dir(const ExperimentConfig& config, Stage s) { return config.output_root / stage_name(s); }

std::string stage_config_hash(const ExperimentConfig& c, Stage s) {
    Json j{{"tool_version", kToolVersion}, {"stage", stage_name(s)}};
    switch (s) {
        case Stage::Dataset:
            j["dataset"] = dataset_json(c);
            j["seed"] = c.scene.rng_seed;
            break;
        case Stage::Seg: j["segmenter"] = c.segmenter.to_json(); break;
        case Stage::Gan: j["gan"] = c.gan.to_json(); break;
        case Stage::FailureData:
            j["segmenter"] = c.segmenter.to_json();
            j["folds"] = c.folds;
            break;
        case Stage::FailureTrain: j["comparator"] = c.comparator.to_json(); break;
        case Stage::FailureEval: break;
        case Stage::AnomalyEval:
            j["threshold"] = c.postprocess.threshold;
            j["postprocess"] = c.postprocess.enabled;
            j["heatmaps"] = c.heatmaps;
            break;
        case Stage::Report:
            j["config"] = c.to_json();
            break;
    }
    return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Manifest

Json RunManifest::to_json() const {
    Json stages_json = Json::object();
    for (const auto& [name, r] : stages)
        stages_json[name] = {{"complete", r.complete},
                             {"config_hash", r.config_hash},
                             {"inputs", r.inputs},
                             {"output_hash", r.output_hash},
                             {"seconds", r.seconds}};
    return Json{{"tool_version", tool_version}, {"stages", stages_json}};
}

RunManifest RunManifest::from_json(const Json& j) {
    try {
        RunManifest m;
        m.tool_version = j.at("tool_version").get<std::string>();
        for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
            StageRecord r;
            const Json& v = it.value();
            r.complete = v.at("complete").get<bool>();
            r.config_hash = v.at("config_hash").get<std::string>();
            r.inputs = v.at("inputs").get<std::map<std::string, std::string>>();
            r.output_hash = v.at("output_hash").get<std::string>();
            r.seconds = v.at("seconds").get<double>();
            m.stages[it.key()] = r;
        }
        return m;
    } catch (const Json::exception& e) {
        throw IoError(std::string("malformed run manifest: ") + e.what());
    }
}

RunManifest RunManifest::load(const fs::path& root) {
    const fs::path path = root / "run_manifest.json";
    if (!fs::exists(path)) return {};
    return from_json(read_json_file(path));
}

void RunManifest::save(const fs::path& root) const { write_json_atomic(root / "run_manifest.json", to_json()); }

std::string status_name(StageStatus s) {
    switch (s) {
        case StageStatus::Missing: return "missing";
        case StageStatus::Stale: return "stale";
        case StageStatus::UpToDate: return "up-to-date";
    }
    return "?";
}

StageStatus stage_status(const RunManifest& manifest, const ExperimentConfig& config, Stage s) {
    const auto it = manifest.stages.find(stage_name(s));
    if (it == manifest.stages.end() || !it->second.complete) return StageStatus::Missing;
    if (!fs::exists(stage_dir(config, s))) return StageStatus::Missing;
    const StageRecord& r = it->second;
    if (r.config_hash != stage_config_hash(config, s)) return StageStatus::Stale;
    for (Stage p : prerequisites(s)) {
        if (stage_status(manifest, config, p) != StageStatus::UpToDate) return StageStatus::Stale;
        const auto in = r.inputs.find(stage_name(p));
        if (in == r.inputs.end() || in->second != manifest.stages.at(stage_name(p)).output_hash)
            return StageStatus::Stale;
    }
    return StageStatus::UpToDate;
}

// ---------------------------------------------------------------------------
// Lock

RootLock::RootLock(const fs::path& root) {
    fs::create_directories(root);
    const fs::path path = root / ".synthcp.lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw PrerequisiteError("output root " + root.string() + " is in use by another synthcp process");
    }
}

RootLock::~RootLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

// ---------------------------------------------------------------------------
// Column files

namespace {

constexpr char kColumnMagic[4] = {'S', 'C', 'P', 'C'};

using Columns = std::vector<std::pair<std::string, std::vector<float>>>;

void write_columns(const fs::path& path, const Columns& cols) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const auto ncols = static_cast<std::uint32_t>(cols.size());
    const auto nrows = static_cast<std::uint64_t>(cols.empty() ? 0 : cols.front().second.size());
    out.write(kColumnMagic, 4);
    out.write(reinterpret_cast<const char*>(&ncols), sizeof ncols);
    out.write(reinterpret_cast<const char*>(&nrows), sizeof nrows);
    for (const auto& [name, values] : cols) {
        if (values.size() != nrows) throw InputError("column " + name + " has a different length");
        const auto len = static_cast<std::uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(name.data(), len);
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(nrows * sizeof(float)));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::map<std::string, std::vector<float>> read_columns(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PrerequisiteError("missing evaluation artifact " + path.string());
    char magic[4];
    std::uint32_t ncols = 0;
    std::uint64_t nrows = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&ncols), sizeof ncols);
    in.read(reinterpret_cast<char*>(&nrows), sizeof nrows);
    if (!in || std::memcmp(magic, kColumnMagic, 4) != 0) throw IoError(path.string() + ": not a column file");
    std::map<std::string, std::vector<float>> cols;
    for (std::uint32_t c = 0; c < ncols; ++c) {
        std::uint32_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof len);
        std::string name(len, '\0');
        in.read(name.data(), len);
        std::vector<float> values(nrows);
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(nrows * sizeof(float)));
        if (!in) throw IoError(path.string() + ": truncated column file");
        cols[name] = std::move(values);
    }
    return cols;
}

const std::vector<float>& column(const std::map<std::string, std::vector<float>>& cols, const std::string& name,
                                 const fs::path& path) {
    const auto it = cols.find(name);
    if (it == cols.end()) throw IoError(path.string() + ": missing column " + name);
    return it->second;
}

// ---------------------------------------------------------------------------
// Stage bodies

struct StageContext {
    const ExperimentConfig& config;
    fs::path root;
    fs::path out;
    const LogFn& log;
    std::map<std::string, std::string> inputs;

    void note(const std::string& msg) const {
        if (log) log(msg);
    }
    fs::path input(Stage s) const { return root / stage_name(s); }
};

void run_dataset(const StageContext& ctx) {
    scenegen::build_dataset(ctx.config.scene, ctx.config.counts, ctx.out);
}

void run_seg(const StageContext& ctx) {
    const auto ds = scenegen::load_dataset(ctx.input(Stage::Dataset));
    ctx.note("training segmenter for " + std::to_string(ctx.config.segmenter.steps) + " steps");
    auto r = segmenter::train_segmenter(ds, ds.ids(scenegen::Split::Train), ctx.config.segmenter);
    if (r.diverged) throw NumericalError("segmenter training diverged (non-finite loss); lower segmenter.lr");
    const auto& val = ds.ids(scenegen::Split::Val);
    Json summary{{"loss_curve", r.loss_curve}};
    if (!val.empty()) {
        summary["val_mean_iou"] = segmenter::mean_iou(*r.model, ds, val);
        summary["val_pixel_accuracy"] = segmenter::pixel_accuracy(*r.model, ds, val);
        ctx.note("segmenter val mIoU " + std::to_string(summary["val_mean_iou"].get<double>()));
    }
    segmenter::save_segmenter(*r.model, ctx.out, Json{{"dataset_hash", ctx.inputs.at("dataset")}});
    write_json_atomic(ctx.out / "train.json", summary);
}

void run_gan(const StageContext& ctx) {
    const auto ds = scenegen::load_dataset(ctx.input(Stage::Dataset));
    ctx.note("training generator for " + std::to_string(ctx.config.gan.steps) + " steps");
    auto r = synthesis::train_gan(ds, ds.ids(scenegen::Split::Train), ctx.config.gan);
    if (r.collapse_warning) ctx.note("warning: generator objective stayed high; training may have collapsed");
    synthesis::save_gan(*r.model, ctx.out, Json{{"dataset_hash", ctx.inputs.at("dataset")}});
    write_json_atomic(ctx.out / "train.json", Json{{"d_objective", r.d_objective},
                                                   {"g_objective", r.g_objective},
                                                   {"l1", r.l1},
                                                   {"collapse_warning", r.collapse_warning}});
}

void run_failure_data(const StageContext& ctx) {
    const auto ds = scenegen::load_dataset(ctx.input(Stage::Dataset));
    const auto gan = synthesis::load_gan(ctx.input(Stage::Gan));
    auto result = failure::kfold_generate(ds, ctx.config.folds, ctx.config.segmenter, *gan, ctx.log);
    for (const auto& w : result.warnings) ctx.note("warning: " + w);
    if (result.tuples.empty()) throw NumericalError("every fold segmenter diverged; no failure tuples produced");
    failure::write_tuple_store(ctx.out, result);
}

void run_failure_train(const StageContext& ctx) {
    const auto tuples = failure::read_tuple_store(ctx.input(Stage::FailureData));
    ctx.note("training " + failure::mode_name(ctx.config.comparator.mode) + " comparator on " +
             std::to_string(tuples.size()) + " tuples for " + std::to_string(ctx.config.comparator.steps) + " steps");
    auto r = failure::train_comparator(tuples, ctx.config.comparator);
    if (r.diverged) throw NumericalError("comparator training diverged (non-finite loss); lower comparator.lr");
    failure::save_comparator(*r.model, ctx.out, Json{{"tuples_hash", ctx.inputs.at("failure-data")}});
    write_json_atomic(ctx.out / "train.json", Json{{"loss_curve", r.loss_curve}});
}

void run_failure_eval(const StageContext& ctx) {
    const auto ds = scenegen::load_dataset(ctx.input(Stage::Dataset));
    const auto seg = segmenter::load_segmenter(ctx.input(Stage::Seg));
    const auto gan = synthesis::load_gan(ctx.input(Stage::Gan));
    const auto cmp = failure::load_comparator(ctx.input(Stage::FailureTrain));
    std::vector<float> error_prob;
    std::vector<float> msp_error;
    std::vector<float> error_label;
    std::vector<float> iou_id;
    std::vector<float> iou_class;
    std::vector<float> iou_pred;
    std::vector<float> iou_true;
    for (int id : ds.ids(scenegen::Split::Test)) {
        const auto t = failure::make_tuple(id, -1, ds.images.at(static_cast<std::size_t>(id)),
                                           ds.labels.at(static_cast<std::size_t>(id)), *seg, *gan);
        const auto c = failure::detect_failures(*cmp, t.image, t.synth, t.pred);
        for (std::size_t i = 0; i < t.targets.error_map.size(); ++i) {
            error_prob.push_back(c.error_prob[i]);
            msp_error.push_back(1.0f - t.max_prob[i]);
            error_label.push_back(static_cast<float>(t.targets.error_map[i]));
        }
        for (std::size_t l = 0; l < t.targets.iou.size(); ++l) {
            if (!t.targets.iou[l]) continue;
            iou_id.push_back(static_cast<float>(id));
            iou_class.push_back(static_cast<float>(l + 1));
            iou_pred.push_back(static_cast<float>(c.iou_pred[l]));
            iou_true.push_back(static_cast<float>(*t.targets.iou[l]));
        }
    }
    write_columns(ctx.out / "pixels.bin",
                  {{"error_prob", error_prob}, {"msp_error", msp_error}, {"error_label", error_label}});
    write_columns(ctx.out / "iou.bin",
                  {{"id", iou_id}, {"class", iou_class}, {"pred", iou_pred}, {"true", iou_true}});
}

void run_anomaly_eval(const StageContext& ctx) {
    const auto ds = scenegen::load_dataset(ctx.input(Stage::Dataset));
    const auto seg = segmenter::load_segmenter(ctx.input(Stage::Seg));
    const auto gan = synthesis::load_gan(ctx.input(Stage::Gan));
    const int anomaly_id = ds.manifest.spec.labels.anomaly_id();
    fs::create_directories(ctx.out / "maps");
    if (ctx.config.heatmaps) fs::create_directories(ctx.out / "heatmaps");
    std::vector<float> raw;
    std::vector<float> max_prob;
    std::vector<float> label;
    double inside = 0.0;
    double outside = 0.0;
    std::size_t n_inside = 0;
    std::size_t n_outside = 0;
    for (int id : ds.ids(scenegen::Split::Anomaly)) {
        const auto& y = ds.labels.at(static_cast<std::size_t>(id));
        const auto r = anomaly::segment_anomalies(*seg, *gan, ds.images.at(static_cast<std::size_t>(id)),
                                                  ctx.config.postprocess);
        char name[32];
        std::snprintf(name, sizeof name, "%06d", id);
        anomaly::write_score_map(ctx.out / "maps" / (std::string(name) + ".bin"), r.scores);
        if (ctx.config.heatmaps) anomaly::write_heatmap_png(ctx.out / "heatmaps" / (std::string(name) + ".png"), r.scores);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool is_anomaly = y[i] == anomaly_id;
            raw.push_back(r.raw[i]);
            max_prob.push_back(r.max_prob[i]);
            label.push_back(is_anomaly ? 1.0f : 0.0f);
            (is_anomaly ? inside : outside) += r.scores[i];
            ++(is_anomaly ? n_inside : n_outside);
        }
    }
    double test_sum = 0.0;
    std::size_t test_n = 0;
    for (int id : ds.ids(scenegen::Split::Test)) {
        const auto r = anomaly::segment_anomalies(*seg, *gan, ds.images.at(static_cast<std::size_t>(id)),
                                                  ctx.config.postprocess);
        for (float v : r.scores.values()) test_sum += v;
        test_n += r.scores.size();
    }
    write_columns(ctx.out / "pixels.bin", {{"raw", raw}, {"max_prob", max_prob}, {"label", label}});
    auto mean = [](double s, std::size_t n) { return n > 0 ? Json(s / static_cast<double>(n)) : Json(nullptr); };
    write_json_atomic(ctx.out / "summary.json",
                      Json{{"threshold", ctx.config.postprocess.threshold},
                           {"postprocess", ctx.config.postprocess.enabled},
                           {"mean_score_anomaly_region", mean(inside, n_inside)},
                           {"mean_score_anomaly_split_outside", mean(outside, n_outside)},
                           {"mean_score_anomaly_split", mean(inside + outside, n_inside + n_outside)},
                           {"mean_score_test_split", mean(test_sum, test_n)}});
}

void run_report(const StageContext& ctx) {
    const auto report = build_report(ctx.root, ctx.config.postprocess, ctx.config.t_list);
    write_report(ctx.root, report, ctx.out / "report.json", ctx.out / "plots");
    const auto undefined = report.undefined();
    if (!undefined.empty()) ctx.note("warning: " + std::to_string(undefined.size()) + " metrics are undefined");
}

void execute(Stage s, const StageContext& ctx) {
    switch (s) {
        case Stage::Dataset: return run_dataset(ctx);
        case Stage::Seg: return run_seg(ctx);
        case Stage::Gan: return run_gan(ctx);
        case Stage::FailureData: return run_failure_data(ctx);
        case Stage::FailureTrain: return run_failure_train(ctx);
        case Stage::FailureEval: return run_failure_eval(ctx);
        case Stage::AnomalyEval: return run_anomaly_eval(ctx);
        case Stage::Report: return run_report(ctx);
    }
}

RunManifest run_stage_locked(const ExperimentConfig& config, Stage stage, const RunOptions& options) {
    const fs::path& root = config.output_root;
    RunManifest manifest = RunManifest::load(root);
    const std::string name = stage_name(stage);
    auto note = [&](const std::string& msg) {
        if (options.log) options.log(msg);
    };
    if (!options.force && stage_status(manifest, config, stage) == StageStatus::UpToDate) {
        note(name + ": up to date, skipped");
        return manifest;
    }
    StageRecord record;
    for (Stage p : prerequisites(stage)) {
        const std::string pn = stage_name(p);
        const auto status = stage_status(manifest, config, p);
        if (status != StageStatus::UpToDate)
            throw PrerequisiteError("stage '" + name + "' needs stage '" + pn + "' (currently " + status_name(status) +
                                    "); run `synthcp run --stage " + pn + "` first");
        const std::string on_disk = sha256_tree(root / pn);
        if (on_disk != manifest.stages.at(pn).output_hash)
            throw PrerequisiteError("artifacts of stage '" + pn + "' were modified after it completed; rerun `synthcp run --stage " +
                                    pn + " --force`");
        record.inputs[pn] = on_disk;
    }

    note(name + ": running");
    write_json_atomic(root / "config.json", config.to_json());
    const fs::path staging = root / ".staging" / name;
    fs::remove_all(staging);
    fs::create_directories(staging);
    const auto t0 = std::chrono::steady_clock::now();
    execute(stage, StageContext{config, root, staging, options.log, record.inputs});
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path final_dir = root / name;
    manifest.stages.erase(name);
    manifest.save(root);
    fs::remove_all(final_dir);
    fs::rename(staging, final_dir);
    fs::remove(root / ".staging");
    record.complete = true;
    record.config_hash = stage_config_hash(config, stage);
    record.output_hash = sha256_tree(final_dir);
    manifest.stages[name] = record;
    manifest.tool_version = kToolVersion;
    manifest.save(root);
    note(name + ": done in " + std::to_string(static_cast<int>(std::lround(record.seconds))) + " s");
    return manifest;
}

}  // namespace

RunManifest run_stage(const ExperimentConfig& config, Stage stage, const RunOptions& options) {
    config.validate();
    RootLock lock(config.output_root);
    return run_stage_locked(config, stage, options);
}

metrics::MetricsReport full_run(const ExperimentConfig& config, const RunOptions& options) {
    config.validate();
    RootLock lock(config.output_root);
    for (Stage s : all_stages()) {
        try {
            run_stage_locked(config, s, options);
        } catch (const ConfigError& e) {
            throw ConfigError("stage " + stage_name(s) + ": " + e.what());
        } catch (const PrerequisiteError& e) {
            throw PrerequisiteError("stage " + stage_name(s) + ": " + e.what());
        } catch (const NumericalError& e) {
            throw NumericalError("stage " + stage_name(s) + ": " + e.what());
        }
    }
    return metrics::MetricsReport::from_json(read_json_file(stage_dir(config, Stage::Report) / "report.json"));
}

// ---------------------------------------------------------------------------
// Report

metrics::AnomalyEvalSet read_anomaly_pixels(const fs::path& root) {
    const fs::path path = root / stage_name(Stage::AnomalyEval) / "pixels.bin";
    const auto cols = read_columns(path);
    metrics::AnomalyEvalSet set;
    set.raw = column(cols, "raw", path);
    set.max_prob = column(cols, "max_prob", path);
    for (float v : column(cols, "label", path)) set.labels.push_back(v > 0.5f ? 1 : 0);
    return set;
}

FailureEvalData read_failure_eval(const fs::path& root) {
    const fs::path dir = root / stage_name(Stage::FailureEval);
    const auto px = read_columns(dir / "pixels.bin");
    const auto iou = read_columns(dir / "iou.bin");
    FailureEvalData d;
    for (float v : column(px, "error_prob", dir / "pixels.bin")) d.error_prob.push_back(v);
    for (float v : column(px, "msp_error", dir / "pixels.bin")) d.msp_error.push_back(v);
    for (float v : column(px, "error_label", dir / "pixels.bin")) d.error_label.push_back(v > 0.5f ? 1 : 0);
    for (float v : column(iou, "class", dir / "iou.bin")) d.iou_class.push_back(static_cast<int>(std::lround(v)));
    for (float v : column(iou, "pred", dir / "iou.bin")) d.iou_pred.push_back(v);
    for (float v : column(iou, "true", dir / "iou.bin")) d.iou_true.push_back(v);
    return d;
}

namespace {

Json read_meta_field(const fs::path& path, const char* field) {
    if (!fs::exists(path)) return nullptr;
    const Json j = read_json_file(path);
    return j.contains(field) ? j.at(field) : Json(nullptr);
}

metrics::Metric mean_defined(const std::vector<metrics::Metric>& values) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : values)
        if (v) {
            sum += *v;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

void put_detection(metrics::MetricTable& t, const std::string& prefix, const metrics::DetectionMetrics& m) {
    t[prefix + "auroc"] = m.auroc;
    t[prefix + "aupr"] = m.aupr;
    t[prefix + "fpr95"] = m.fpr95;
}

}  // namespace

metrics::MetricsReport build_report(const fs::path& root, const anomaly::PostProcessConfig& postprocess,
                                    const std::vector<double>& t_list) {
    metrics::MetricsReport report;

    const RunManifest manifest = RunManifest::load(root);
    Json stage_hashes = Json::object();
    for (const auto& [name, r] : manifest.stages)
        if (name != stage_name(Stage::Report)) stage_hashes[name] = r.output_hash;
    const fs::path config_path = root / "config.json";
    report.meta = {{"tool_version", kToolVersion},
                   {"config", fs::exists(config_path) ? read_json_file(config_path) : Json(nullptr)},
                   {"dataset_hash", stage_hashes.value(stage_name(Stage::Dataset), std::string())},
                   {"stage_hashes", stage_hashes},
                   {"models",
                    {{"segmenter", read_meta_field(root / "seg" / "meta.json", "param_hash")},
                     {"generator", read_meta_field(root / "gan" / "meta.json", "generator_hash")},
                     {"discriminator", read_meta_field(root / "gan" / "meta.json", "discriminator_hash")},
                     {"comparator", read_meta_field(root / "failure-train" / "meta.json", "param_hash")},
                     {"fold_segmenters", read_meta_field(root / "failure-data" / "index.json", "segmenter_hashes")}}},
                   {"postprocess", {{"threshold", postprocess.threshold}, {"enabled", postprocess.enabled}}}};

    // Failure detection.
    const auto fe = read_failure_eval(root);
    const auto reg = metrics::regression_metrics(fe.iou_pred, fe.iou_true);
    auto& img = report.image_level;
    img["iou_pairs"] = static_cast<double>(fe.iou_pred.size());
    img["iou_mae"] = reg.mae;
    img["iou_std"] = reg.std;
    img["iou_pearson"] = reg.pearson;
    img["iou_spearman"] = reg.spearman;
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_class;
    for (std::size_t i = 0; i < fe.iou_class.size(); ++i) {
        per_class[fe.iou_class[i]].first.push_back(fe.iou_pred[i]);
        per_class[fe.iou_class[i]].second.push_back(fe.iou_true[i]);
    }
    std::vector<metrics::Metric> c_mae;
    std::vector<metrics::Metric> c_pearson;
    std::vector<metrics::Metric> c_spearman;
    for (const auto& [cls, pair] : per_class) {
        const auto m = metrics::regression_metrics(pair.first, pair.second);
        c_mae.push_back(m.mae);
        c_pearson.push_back(m.pearson);
        c_spearman.push_back(m.spearman);
    }
    img["iou_mae_class_mean"] = mean_defined(c_mae);
    img["iou_pearson_class_mean"] = mean_defined(c_pearson);
    img["iou_spearman_class_mean"] = mean_defined(c_spearman);

    auto& px = report.pixel_level;
    metrics::ScoredSet cmp{fe.error_prob, fe.error_label};
    metrics::ScoredSet msp{fe.msp_error, fe.error_label};
    double errors = 0.0;
    for (int l : fe.error_label) errors += l;
    px["error_rate"] = fe.error_label.empty() ? metrics::Metric{} : metrics::Metric{errors / static_cast<double>(fe.error_label.size())};
    px["comparator_aupr_error"] = metrics::aupr(cmp, metrics::Positive::Error);
    px["comparator_aupr_success"] = metrics::aupr(cmp, metrics::Positive::Success);
    px["comparator_auroc"] = metrics::auroc(cmp);
    px["comparator_fpr95"] = metrics::fpr_at_95_tpr(cmp);
    px["msp_aupr_error"] = metrics::aupr(msp, metrics::Positive::Error);
    px["msp_aupr_success"] = metrics::aupr(msp, metrics::Positive::Success);
    px["msp_auroc"] = metrics::auroc(msp);
    px["msp_fpr95"] = metrics::fpr_at_95_tpr(msp);

    // Anomaly segmentation.
    const auto aset = read_anomaly_pixels(root);
    auto& an = report.anomaly;
    double anomalies = 0.0;
    for (int l : aset.labels) anomalies += l;
    an["base_rate"] = aset.labels.empty() ? metrics::Metric{} : metrics::Metric{anomalies / static_cast<double>(aset.labels.size())};
    an["threshold"] = postprocess.threshold;
    an["postprocess"] = postprocess.enabled ? 1.0 : 0.0;
    put_detection(an, "synthcp_", metrics::detection_metrics(metrics::anomaly_scored_set(aset, postprocess)));
    put_detection(an, "msp_", metrics::detection_metrics(metrics::msp_scored_set(aset)));
    put_detection(an, "raw_", metrics::detection_metrics(metrics::anomaly_scored_set(aset, {1.0, false})));
    const fs::path summary = root / stage_name(Stage::AnomalyEval) / "summary.json";
    if (fs::exists(summary)) {
        const Json s = read_json_file(summary);
        for (const char* k : {"mean_score_anomaly_region", "mean_score_anomaly_split_outside", "mean_score_anomaly_split",
                              "mean_score_test_split"})
            an[k] = s.contains(k) && !s.at(k).is_null() ? metrics::Metric{s.at(k).get<double>()} : metrics::Metric{};
    }

    report.sweep = metrics::sweep_thresholds(aset, t_list);
    report.meta["undefined_count"] = report.undefined().size();
    return report;
}

void write_report(const fs::path& root, const metrics::MetricsReport& report, const fs::path& report_path,
                  const fs::path& plot_dir) {
    if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
    write_json_atomic(report_path, report.to_json());
    if (plot_dir.empty()) return;
    fs::create_directories(plot_dir);
    const auto fe = read_failure_eval(root);
    const auto aset = read_anomaly_pixels(root);
    const metrics::ScoredSet cmp{fe.error_prob, fe.error_label};
    const metrics::ScoredSet msp{fe.msp_error, fe.error_label};
    const auto post = metrics::anomaly_scored_set(aset, anomaly::PostProcessConfig{
                                                            report.meta.at("postprocess").at("threshold").get<double>(),
                                                            report.meta.at("postprocess").at("enabled").get<bool>()});
    const auto amsp = metrics::msp_scored_set(aset);
    metrics::write_curve_plot(plot_dir / "failure_pr.png", {metrics::pr_curve(cmp), metrics::pr_curve(msp)});
    metrics::write_curve_plot(plot_dir / "anomaly_pr.png", {metrics::pr_curve(post), metrics::pr_curve(amsp)});
    metrics::write_curve_plot(plot_dir / "anomaly_roc.png", {metrics::roc_curve(post), metrics::roc_curve(amsp)});
    metrics::write_scatter_plot(plot_dir / "iou_scatter.png", fe.iou_true, fe.iou_pred);
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
    if (dynamic_cast<const PrerequisiteError*>(&e) != nullptr) return 3;
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) return 4;
    return 1;
}

}  // namespace synthcp::pipeline
