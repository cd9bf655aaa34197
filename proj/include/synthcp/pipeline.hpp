#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synthcp/anomaly.hpp"
#include "synthcp/failure.hpp"
#include "synthcp/json_util.hpp"
#include "synthcp/metrics.hpp"
#include "synthcp/scenegen.hpp"
#include "synthcp/segmenter.hpp"
#include "synthcp/synthesis.hpp"

namespace synthcp::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "SYNTHCP_OUTPUT_ROOT";

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path output_root = "runs/default";
    scenegen::SceneSpec scene = scenegen::default_scene_spec();
    scenegen::SplitCounts counts;
    segmenter::SegmenterHyperparams segmenter;
    synthesis::GanHyperparams gan;
    failure::ComparatorHyperparams comparator;
    int folds = 4;
    anomaly::PostProcessConfig postprocess;
    std::vector<double> t_list = metrics::default_t_list();
    bool heatmaps = true;

    ExperimentConfig();
    // Derives every component seed from `seed`.
    void apply_seed();
    void validate() const;
    // Full configuration; the output root is omitted unless requested.
    Json to_json(bool include_output_root = false) const;
    // Missing keys take defaults, unknown keys are errors.
    static ExperimentConfig from_json(const Json& j);
};

// Reads a config file and applies the output-root environment override.
ExperimentConfig load_config(const std::filesystem::path& path);
// Commented reference of every key with its default.
std::string config_reference();

enum class Stage { Dataset, Seg, Gan, FailureData, FailureTrain, FailureEval, AnomalyEval, Report };
const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);
const std::vector<Stage>& prerequisites(Stage s);
// Directory of a stage's artifacts below the output root.
std::filesystem::path stage_dir(const ExperimentConfig& config, Stage s);

struct StageRecord {
    bool complete = false;
    std::string config_hash;
    std::map<std::string, std::string> inputs;  // prerequisite stage -> output hash
    std::string output_hash;
    double seconds = 0.0;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::map<std::string, StageRecord> stages;

    Json to_json() const;
    static RunManifest from_json(const Json& j);
    static RunManifest load(const std::filesystem::path& root);  // empty when absent
    void save(const std::filesystem::path& root) const;
};

enum class StageStatus { Missing, Stale, UpToDate };
std::string status_name(StageStatus s);
StageStatus stage_status(const RunManifest& manifest, const ExperimentConfig& config, Stage s);
// Hash of the configuration subset a stage depends on.
std::string stage_config_hash(const ExperimentConfig& config, Stage s);

using LogFn = std::function<void(const std::string&)>;

struct RunOptions {
    bool force = false;  // rerun even when up to date
    LogFn log;
};

// Exclusive advisory lock on an output root, released on destruction.
class RootLock {
  public:
    explicit RootLock(const std::filesystem::path& root);
    ~RootLock();
    RootLock(const RootLock&) = delete;
    RootLock& operator=(const RootLock&) = delete;

  private:
    int fd_ = -1;
};

RunManifest run_stage(const ExperimentConfig& config, Stage stage, const RunOptions& options = {});
metrics::MetricsReport full_run(const ExperimentConfig& config, const RunOptions& options = {});

// Computes the report from the evaluation artifacts under an output root.
metrics::MetricsReport build_report(const std::filesystem::path& root, const anomaly::PostProcessConfig& postprocess,
                                    const std::vector<double>& t_list);
// Writes the report JSON and PR/ROC/IoU-scatter plots.
void write_report(const std::filesystem::path& root, const metrics::MetricsReport& report,
                  const std::filesystem::path& report_path, const std::filesystem::path& plot_dir);

// Pooled pixel columns written by the evaluation stages.
metrics::AnomalyEvalSet read_anomaly_pixels(const std::filesystem::path& root);

struct FailureEvalData {
    std::vector<double> error_prob;
    std::vector<double> msp_error;
    std::vector<int> error_label;
    std::vector<int> iou_class;
    std::vector<double> iou_pred;
    std::vector<double> iou_true;
};
FailureEvalData read_failure_eval(const std::filesystem::path& root);

// Process exit code for an exception: 2 config, 3 prerequisite, 4 numerical, 1 other.
int exit_code_for(const std::exception& e);

}  // namespace synthcp::pipeline
