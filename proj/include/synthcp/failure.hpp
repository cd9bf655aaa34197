#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthcp/json_util.hpp"
#include "synthcp/nn/layers.hpp"
#include "synthcp/scenegen.hpp"
#include "synthcp/segmenter.hpp"
#include "synthcp/synthesis.hpp"

namespace synthcp::failure {

// Per-class IoU, indexed by class id - 1. Empty when the class is absent from
// both maps.
using IouArray = std::vector<std::optional<double>>;

struct FailureTargets {
    IouArray iou;
    nn::Tensor<int> error_map;  // (1, 1, H, W), 1 where prediction != truth
};

struct FailureConfidence {
    std::vector<double> iou_pred;   // length L, in [0, 1]
    nn::Tensor<float> error_prob;   // (1, 1, H, W), in [0, 1]
};

IouArray compute_iou(const nn::Tensor<int>& pred, const nn::Tensor<int>& gt, int num_classes);
nn::Tensor<int> compute_error_map(const nn::Tensor<int>& pred, const nn::Tensor<int>& gt);
FailureTargets compute_targets(const nn::Tensor<int>& pred, const nn::Tensor<int>& gt, int num_classes);

// Training example for the comparator.
struct FailureTuple {
    int id = 0;
    int fold = 0;
    nn::Tensor<float> image;     // x
    nn::Tensor<int> truth;       // y
    nn::Tensor<int> pred;        // y_hat from a segmenter that never saw this sample
    nn::Tensor<float> synth;     // x_hat = G(y_hat)
    nn::Tensor<float> max_prob;  // segmenter max softmax probability
    FailureTargets targets;
};

struct KFoldResult {
    std::vector<FailureTuple> tuples;  // ordered by sample id
    std::vector<std::string> warnings;
    std::vector<std::string> segmenter_hashes;  // per fold, empty when skipped
    int folds = 0;
};

// Assigns each id a fold in [0, k) from a seeded shuffle.
std::vector<int> assign_folds(std::span<const int> ids, int k, std::uint64_t seed);

using ProgressFn = std::function<void(const std::string&)>;

// Trains one segmenter per fold on the other folds, segments the held-out
// fold and synthesizes from the prediction with the frozen generator.
KFoldResult kfold_generate(const scenegen::Dataset& data, int k, const segmenter::SegmenterHyperparams& seg_hp,
                           const synthesis::GanModel& gan, const ProgressFn& progress = {});

FailureTuple make_tuple(int id, int fold, const nn::Tensor<float>& image, const nn::Tensor<int>& truth,
                        const segmenter::SegmenterModel& seg, const synthesis::GanModel& gan);

enum class Mode { Joint, Separate };
enum class LabelEncoding { Id, OneHot };
std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct ComparatorHyperparams {
    int width = 16;
    int steps = 3000;
    int batch = 8;
    double lr = 1e-3;
    Mode mode = Mode::Joint;
    LabelEncoding encoding = LabelEncoding::OneHot;
    std::uint64_t seed = 1;

    Json to_json() const;
    static ComparatorHyperparams from_json(const Json& j);
};

// Shared-weight residual encoder; returns features at 1, 1/2, 1/4 and 1/8
// resolution.
template <typename T>
class SiameseEncoder {
  public:
    SiameseEncoder() = default;
    SiameseEncoder(nn::ParamStore<T>& store, const std::string& prefix, int in_channels, int width, Rng& rng);
    std::vector<nn::Var<T>> operator()(const nn::Var<T>& input) const;
    int out_channels(int scale) const { return scale == 0 ? width_ : 2 * width_; }

  private:
    struct Block {
        nn::Conv<T> conv1, conv2, proj;
        bool has_proj = false;
    };
    int width_ = 0;
    nn::Conv<T> stem_;
    std::vector<Block> blocks_;
};

template <typename T>
class ComparatorNet {
  public:
    ComparatorNet(int num_classes, const ComparatorHyperparams& hp);
    ComparatorNet(const ComparatorNet&) = delete;
    ComparatorNet& operator=(const ComparatorNet&) = delete;

    struct Output {
        nn::Var<T> iou;    // (N, L, 1, 1)
        nn::Var<T> error;  // (N, 1, H, W)
    };
    // x and x_hat are (N, 3, H, W); pred holds ids 1..L, shape (N, 1, H, W).
    Output forward(const nn::Tensor<T>& x, const nn::Tensor<T>& x_hat, const nn::Tensor<int>& pred) const;

    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }
    // Parameter names belonging to each head (encoder excluded).
    bool is_iou_param(const std::string& name) const;
    bool is_error_param(const std::string& name) const;
    int num_classes() const { return num_classes_; }
    Mode mode() const { return mode_; }

  private:
    nn::Var<T> encode_branch_input(const nn::Tensor<T>& image, const nn::Tensor<int>& pred) const;

    int num_classes_;
    Mode mode_;
    LabelEncoding encoding_;
    nn::ParamStore<T> params_;
    SiameseEncoder<T> encoder_iou_;
    SiameseEncoder<T> encoder_err_;  // used only in separate mode
    nn::Conv<T> iou_fc1_, iou_fc2_;
    nn::Conv<T> dec2_, dec1_, dec0_, err_out_;
};

// (1/|defined|) * sum |c_iu - c_iu_hat| + mean BCE(c_m, c_m_hat), pooled over
// the batch. Undefined IoU entries (mask 0) are excluded.
template <typename T>
struct LossTerms {
    nn::Var<T> iou_l1;
    nn::Var<T> error_bce;
};
template <typename T>
LossTerms<T> comparator_loss_terms(const nn::Var<T>& iou_pred, const nn::Var<T>& error_prob,
                                   const nn::Tensor<T>& iou_target, const nn::Tensor<T>& iou_mask,
                                   const nn::Tensor<T>& error_target);

double comparator_loss(const FailureConfidence& pred, const FailureTargets& targets);

class ComparatorModel {
  public:
    ComparatorModel(int num_classes, int width, int height, const ComparatorHyperparams& hp);
    ComparatorNet<float>& net() { return *net_; }
    const ComparatorNet<float>& net() const { return *net_; }
    int num_classes() const { return num_classes_; }
    int width() const { return width_; }
    int height() const { return height_; }
    const ComparatorHyperparams& hyperparams() const { return hp_; }
    std::string param_hash() const { return net_->params().hash(); }
    Json meta() const;

  private:
    int num_classes_;
    int width_;
    int height_;
    ComparatorHyperparams hp_;
    std::unique_ptr<ComparatorNet<float>> net_;
};

struct ComparatorTrainResult {
    std::unique_ptr<ComparatorModel> model;
    std::vector<double> loss_curve;
    bool diverged = false;
};

ComparatorTrainResult train_comparator(std::span<const FailureTuple> tuples, const ComparatorHyperparams& hp);

FailureConfidence detect_failures(const ComparatorModel& model, const nn::Tensor<float>& x,
                                  const nn::Tensor<float>& x_hat, const nn::Tensor<int>& pred);

// Mean comparator_loss of a model over tuples.
double mean_comparator_loss(const ComparatorModel& model, std::span<const FailureTuple> tuples);

void save_comparator(const ComparatorModel& model, const std::filesystem::path& dir, const Json& extra_meta = {});
std::unique_ptr<ComparatorModel> load_comparator(const std::filesystem::path& dir);

// Tuple store: one binary file per sample plus index.json.
void write_tuple_store(const std::filesystem::path& dir, const KFoldResult& result, const Json& extra_index = {});
std::vector<FailureTuple> read_tuple_store(const std::filesystem::path& dir);
void write_tuple(const std::filesystem::path& path, const FailureTuple& t);
FailureTuple read_tuple(const std::filesystem::path& path);

}  // namespace synthcp::failure
