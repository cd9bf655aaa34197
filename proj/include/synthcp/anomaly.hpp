#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "synthcp/nn/tensor.hpp"
#include "synthcp/segmenter.hpp"
#include "synthcp/synthesis.hpp"

namespace synthcp::anomaly {

// Per-pixel anomaly confidence, shape (1, 1, H, W).
using AnomalyScoreMap = nn::Tensor<float>;

constexpr double kNormEps = 1e-8;
constexpr double kDefaultThreshold = 0.999;

struct PostProcessConfig {
    double threshold = kDefaultThreshold;
    bool enabled = true;

    void validate() const;
};

// 1 - cos(f, f_hat) per pixel over the channel axis. Inputs are (1, C, H, W).
// Pixels where either feature vector has norm below eps score 0.
AnomalyScoreMap cosine_distance_map(const nn::Tensor<float>& feat_x, const nn::Tensor<float>& feat_xhat,
                                    double eps = kNormEps);

// Clamps raw scores to [0, 1], then replaces pixels with p > t by 1 - p.
AnomalyScoreMap msp_postprocess(const AnomalyScoreMap& raw, const nn::Tensor<float>& max_prob,
                                const PostProcessConfig& config);

// Number of pixels whose score comes from the 1 - p branch.
long long msp_branch_count(const nn::Tensor<float>& max_prob, double threshold);

struct AnomalyResult {
    AnomalyScoreMap raw;     // unclamped cosine distance
    AnomalyScoreMap scores;  // post-processed
    nn::Tensor<float> max_prob;
    nn::Tensor<int> pred;
    nn::Tensor<float> synth;
};

using SynthesizeFn = std::function<nn::Tensor<float>(const nn::Tensor<int>&)>;

AnomalyResult segment_anomalies(const segmenter::SegmenterModel& seg, const synthesis::GanModel& gan,
                                const nn::Tensor<float>& image, const PostProcessConfig& config);
// Same pipeline with a caller-supplied generator.
AnomalyResult segment_anomalies(const segmenter::SegmenterModel& seg, const SynthesizeFn& generator,
                                const nn::Tensor<float>& image, const PostProcessConfig& config);

// 1 - max softmax probability.
AnomalyScoreMap msp_baseline(const segmenter::SegmenterModel& seg, const nn::Tensor<float>& image);
AnomalyScoreMap msp_scores(const nn::Tensor<float>& max_prob);

// Binary layout: "SCPA", uint32 width, uint32 height, float32 scores.
void write_score_map(const std::filesystem::path& path, const AnomalyScoreMap& map);
AnomalyScoreMap read_score_map(const std::filesystem::path& path);
// Scores in [0, 1] mapped to a black-red-yellow-white ramp.
void write_heatmap_png(const std::filesystem::path& path, const AnomalyScoreMap& map);

}  // namespace synthcp::anomaly
