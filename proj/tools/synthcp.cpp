#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "synthcp/errors.hpp"
#include "synthcp/hashing.hpp"
#include "synthcp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace synthcp;

namespace {

void log_line(const std::string& msg) { std::cerr << "[synthcp] " << msg << std::endl; }

pipeline::ExperimentConfig make_config(const std::string& config_path, const std::string& root) {
    pipeline::ExperimentConfig c = config_path.empty() ? pipeline::ExperimentConfig{} : pipeline::load_config(config_path);
    if (config_path.empty())
        if (const char* env = std::getenv(pipeline::kOutputRootEnv); env != nullptr && *env != '\0') c.output_root = env;
    if (!root.empty()) c.output_root = root;
    return c;
}

void run_one(const pipeline::ExperimentConfig& c, pipeline::Stage s, bool force) {
    pipeline::run_stage(c, s, pipeline::RunOptions{force, log_line});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthcp: synthesize-then-compare failure and anomaly detection for semantic segmentation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pipeline::kToolVersion);

    std::string config_path;
    std::string root;
    std::string out;
    std::string dataset_dir;
    std::string in_dir;
    std::string plots;
    std::string stage;
    std::string mode;
    int steps = -1;
    double t = -1.0;
    bool no_post = false;
    bool force = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--root", root, "Output root (overrides config and environment)");
        cmd->add_flag("--force", force, "Rerun even when up to date");
    };

    auto* dataset = app.add_subcommand("dataset", "Procedural dataset");
    dataset->require_subcommand(1);
    auto* dataset_gen = dataset->add_subcommand("gen", "Generate a dataset directory");
    dataset_gen->add_option("--config", config_path, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
    dataset_gen->add_option("--out", out, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train a segmenter or generator on a dataset directory");
    train->require_subcommand(1);
    auto* train_seg = train->add_subcommand("seg", "Train the segmenter");
    auto* train_gan = train->add_subcommand("gan", "Train the conditional generator");
    for (auto* cmd : {train_seg, train_gan}) {
        cmd->add_option("--dataset", dataset_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
        cmd->add_option("--out", out, "Checkpoint directory")->required();
        cmd->add_option("--config", config_path, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--steps", steps, "Override the number of training steps");
    }

    auto* fail = app.add_subcommand("failure", "Failure detection stages (operate on the output root)");
    fail->require_subcommand(1);
    auto* fail_gen = fail->add_subcommand("gen-data", "K-fold tuple generation");
    auto* fail_train = fail->add_subcommand("train", "Train the comparator");
    auto* fail_eval = fail->add_subcommand("eval", "Evaluate the comparator on the test split");
    for (auto* cmd : {fail_gen, fail_train, fail_eval}) add_common(cmd);
    fail_train->add_option("--mode", mode, "Head training mode")->check(CLI::IsMember({"joint", "separate"}));

    auto* anom = app.add_subcommand("anomaly", "Anomaly segmentation");
    anom->require_subcommand(1);
    auto* anom_eval = anom->add_subcommand("eval", "Score the anomaly split");
    add_common(anom_eval);
    anom_eval->add_option("--t", t, "MSP post-processing threshold")->check(CLI::Range(0.0, 1.0));
    anom_eval->add_flag("--no-postprocess", no_post, "Disable MSP post-processing");

    auto* report = app.add_subcommand("report", "Compute metrics and plots from evaluation artifacts");
    report->add_option("--in", in_dir, "Output root holding failure-eval and anomaly-eval")->required()->check(CLI::ExistingDirectory);
    report->add_option("--out", out, "Report file")->required();
    report->add_option("--plots", plots, "Plot directory");
    report->add_option("--config", config_path, "Experiment configuration (JSON)")->check(CLI::ExistingFile);

    auto* run = app.add_subcommand("run", "Run the pipeline (all stages, or one)");
    add_common(run);
    run->add_option("--stage", stage, "Single stage to run")
        ->check(CLI::IsMember({"dataset", "seg", "gan", "failure-data", "failure-train", "failure-eval", "anomaly-eval", "report"}));

    auto* status = app.add_subcommand("status", "Show stage status for an output root");
    add_common(status);

    auto* cfg = app.add_subcommand("config", "Print the configuration reference with defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (dataset_gen->parsed()) {
            const auto c = make_config(config_path, "");
            const auto m = scenegen::build_dataset(c.scene, c.counts, out);
            log_line("wrote " + std::to_string(m.total()) + " samples to " + out);
        } else if (train_seg->parsed() || train_gan->parsed()) {
            auto c = make_config(config_path, "");
            const auto ds = scenegen::load_dataset(dataset_dir);
            const Json extra{{"dataset_hash", sha256_tree(dataset_dir)}};
            const auto& ids = ds.ids(scenegen::Split::Train);
            if (train_seg->parsed()) {
                if (steps >= 0) c.segmenter.steps = steps;
                auto r = segmenter::train_segmenter(ds, ids, c.segmenter);
                if (r.diverged) throw NumericalError("segmenter training diverged");
                segmenter::save_segmenter(*r.model, out, extra);
                if (!ds.ids(scenegen::Split::Val).empty())
                    log_line("val mIoU " + std::to_string(segmenter::mean_iou(*r.model, ds, ds.ids(scenegen::Split::Val))));
            } else {
                if (steps >= 0) c.gan.steps = steps;
                auto r = synthesis::train_gan(ds, ids, c.gan);
                if (r.collapse_warning) log_line("warning: generator objective stayed high; training may have collapsed");
                synthesis::save_gan(*r.model, out, extra);
            }
            log_line("checkpoint written to " + out);
        } else if (fail_gen->parsed()) {
            run_one(make_config(config_path, root), pipeline::Stage::FailureData, force);
        } else if (fail_train->parsed()) {
            auto c = make_config(config_path, root);
            if (!mode.empty()) c.comparator.mode = failure::mode_from_name(mode);
            run_one(c, pipeline::Stage::FailureTrain, force);
        } else if (fail_eval->parsed()) {
            run_one(make_config(config_path, root), pipeline::Stage::FailureEval, force);
        } else if (anom_eval->parsed()) {
            auto c = make_config(config_path, root);
            if (t >= 0.0) c.postprocess.threshold = t;
            if (no_post) c.postprocess.enabled = false;
            run_one(c, pipeline::Stage::AnomalyEval, force);
        } else if (report->parsed()) {
            pipeline::ExperimentConfig c;
            if (!config_path.empty()) c = pipeline::load_config(config_path);
            else if (fs::exists(fs::path(in_dir) / "config.json"))
                c = pipeline::ExperimentConfig::from_json(read_json_file(fs::path(in_dir) / "config.json"));
            const auto r = pipeline::build_report(in_dir, c.postprocess, c.t_list);
            pipeline::write_report(in_dir, r, out, plots);
            log_line("report written to " + out);
        } else if (run->parsed()) {
            const auto c = make_config(config_path, root);
            if (stage.empty()) {
                pipeline::full_run(c, pipeline::RunOptions{force, log_line});
                log_line("report: " + (pipeline::stage_dir(c, pipeline::Stage::Report) / "report.json").string());
            } else {
                run_one(c, pipeline::stage_from_name(stage), force);
            }
        } else if (status->parsed()) {
            const auto c = make_config(config_path, root);
            const auto m = pipeline::RunManifest::load(c.output_root);
            for (auto s : pipeline::all_stages())
                std::cout << pipeline::stage_name(s) << "\t" << pipeline::status_name(pipeline::stage_status(m, c, s)) << "\n";
        } else if (cfg->parsed()) {
            std::cout << pipeline::config_reference();
        }
    } catch (const std::exception& e) {
        std::cerr << "synthcp: error: " << e.what() << std::endl;
        return pipeline::exit_code_for(e);
    }
    return 0;
}
