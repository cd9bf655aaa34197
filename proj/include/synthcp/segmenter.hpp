#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "synthcp/json_util.hpp"
#include "synthcp/nn/layers.hpp"
#include "synthcp/scenegen.hpp"

namespace synthcp::segmenter {

// Four-level encoder-decoder with skip connections. Level i has
// base_width * 2^i channels; the last decoder layer (base_width channels,
// rectified, full resolution) provides the per-pixel features.
template <typename T>
class SegmenterNet {
  public:
    static constexpr int kLevels = 4;

    SegmenterNet(int num_classes, int base_width, std::uint64_t seed);
    SegmenterNet(const SegmenterNet&) = delete;
    SegmenterNet& operator=(const SegmenterNet&) = delete;

    struct Output {
        nn::Var<T> logits;    // (N, L, H, W)
        nn::Var<T> features;  // (N, base_width, H, W)
    };
    Output forward(const nn::Var<T>& images) const;

    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }
    int num_classes() const { return num_classes_; }
    int base_width() const { return base_width_; }

  private:
    int num_classes_;
    int base_width_;
    nn::ParamStore<T> params_;
    std::vector<std::pair<nn::Conv<T>, nn::Conv<T>>> encoder_;
    std::vector<nn::Conv<T>> decoder_;
    nn::Conv<T> classifier_;
};

struct SegmenterHyperparams {
    int base_width = 16;
    int steps = 600;
    int batch = 8;
    double lr = 1e-3;
    std::uint64_t seed = 1;

    Json to_json() const;
    static SegmenterHyperparams from_json(const Json& j);
};

struct SegmenterOutput {
    nn::Tensor<float> scores;    // (1, L, H, W) pre-softmax
    nn::Tensor<int> pred;        // (1, 1, H, W) ids in 1..L
    nn::Tensor<float> max_prob;  // (1, 1, H, W)
    nn::Tensor<float> features;  // (1, C, H, W)
};

class SegmenterModel {
  public:
    SegmenterModel(int num_classes, int width, int height, const SegmenterHyperparams& hp);

    SegmenterNet<float>& net() { return *net_; }
    const SegmenterNet<float>& net() const { return *net_; }
    int num_classes() const { return num_classes_; }
    int width() const { return width_; }
    int height() const { return height_; }
    const SegmenterHyperparams& hyperparams() const { return hp_; }
    std::string param_hash() const { return net_->params().hash(); }

    Json meta() const;

  private:
    int num_classes_;
    int width_;
    int height_;
    SegmenterHyperparams hp_;
    std::unique_ptr<SegmenterNet<float>> net_;
};

struct TrainResult {
    std::unique_ptr<SegmenterModel> model;
    std::vector<double> loss_curve;
    bool diverged = false;  // model holds the last finite parameters when set
};

// Trains on the given sample ids (labels must lie in 1..L).
TrainResult train_segmenter(const scenegen::Dataset& data, std::span<const int> train_ids,
                            const SegmenterHyperparams& hp);

// Inference on one (1, 3, H, W) image.
SegmenterOutput segment(const SegmenterModel& model, const nn::Tensor<float>& image);
// Derives pred/max_prob from raw scores: argmax with ties to the lowest id.
void fill_predictions(SegmenterOutput& out);

// Mean intersection-over-union against ground truth over classes present in
// either map, pooled across images.
double mean_iou(const SegmenterModel& model, const scenegen::Dataset& data, std::span<const int> ids);
double pixel_accuracy(const SegmenterModel& model, const scenegen::Dataset& data, std::span<const int> ids);

// Checkpoint directory: meta.json (normative) and params.bin.
void save_segmenter(const SegmenterModel& model, const std::filesystem::path& dir, const Json& extra_meta = {});
std::unique_ptr<SegmenterModel> load_segmenter(const std::filesystem::path& dir);

// Builds a batch of images and 0-based label maps from dataset ids.
nn::Tensor<float> stack_images(const scenegen::Dataset& data, std::span<const int> ids);
nn::Tensor<int> stack_labels_zero_based(const scenegen::Dataset& data, std::span<const int> ids);

}  // namespace synthcp::segmenter
