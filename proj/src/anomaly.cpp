#include "synthcp/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "synthcp/errors.hpp"
#include "synthcp/image_io.hpp"

namespace synthcp::anomaly {

using nn::Shape;
using nn::Tensor;

void PostProcessConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("post-processing threshold must lie in [0, 1], got " + std::to_string(threshold));
}

AnomalyScoreMap cosine_distance_map(const Tensor<float>& feat_x, const Tensor<float>& feat_xhat, double eps) {
    const Shape s = feat_x.shape();
    if (!(feat_xhat.shape() == s) || s.n != 1)
        throw ShapeError("cosine_distance_map: feature shapes " + s.str() + " and " + feat_xhat.shape().str());
    if (!(eps > 0.0)) throw InputError("cosine_distance_map: eps must be positive");
    AnomalyScoreMap out(Shape{1, 1, s.h, s.w});
    const std::size_t plane = s.plane();
    for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        double na = 0.0;
        double nb = 0.0;
        for (int c = 0; c < s.c; ++c) {
            const double a = feat_x[static_cast<std::size_t>(c) * plane + p];
            const double b = feat_xhat[static_cast<std::size_t>(c) * plane + p];
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        out[p] = (na < eps || nb < eps) ? 0.0f : static_cast<float>(1.0 - dot / (na * nb));
    }
    return out;
}

AnomalyScoreMap msp_postprocess(const AnomalyScoreMap& raw, const Tensor<float>& max_prob,
                                const PostProcessConfig& config) {
    config.validate();
    if (raw.size() != max_prob.size()) throw ShapeError("msp_postprocess: score and probability maps differ in size");
    AnomalyScoreMap out(raw.shape());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const float p = max_prob[i];
        if (!(p >= 0.0f && p <= 1.0f)) throw InputError("msp_postprocess: max probability outside [0, 1]");
        if (!std::isfinite(raw[i])) throw InputError("msp_postprocess: non-finite raw score");
        if (config.enabled && static_cast<double>(p) > config.threshold) out[i] = 1.0f - p;
        else out[i] = std::clamp(raw[i], 0.0f, 1.0f);
    }
    return out;
}

long long msp_branch_count(const Tensor<float>& max_prob, double threshold) {
    long long n = 0;
    for (float p : max_prob.values())
        if (static_cast<double>(p) > threshold) ++n;
    return n;
}

AnomalyResult segment_anomalies(const segmenter::SegmenterModel& seg, const SynthesizeFn& generator,
                                const Tensor<float>& image, const PostProcessConfig& config) {
    config.validate();
    auto out = segmenter::segment(seg, image);
    AnomalyResult r;
    r.synth = generator(out.pred);
    if (!(r.synth.shape() == image.shape())) throw ShapeError("segment_anomalies: synthesized image shape mismatch");
    const auto resynth = segmenter::segment(seg, r.synth);
    r.raw = cosine_distance_map(out.features, resynth.features);
    r.scores = msp_postprocess(r.raw, out.max_prob, config);
    r.max_prob = std::move(out.max_prob);
    r.pred = std::move(out.pred);
    return r;
}

AnomalyResult segment_anomalies(const segmenter::SegmenterModel& seg, const synthesis::GanModel& gan,
                                const Tensor<float>& image, const PostProcessConfig& config) {
    return segment_anomalies(
        seg, [&gan](const Tensor<int>& pred) { return synthesis::synthesize(gan, pred); }, image, config);
}

AnomalyScoreMap msp_scores(const Tensor<float>& max_prob) {
    AnomalyScoreMap out(max_prob.shape());
    for (std::size_t i = 0; i < max_prob.size(); ++i) out[i] = 1.0f - max_prob[i];
    return out;
}

AnomalyScoreMap msp_baseline(const segmenter::SegmenterModel& seg, const Tensor<float>& image) {
    return msp_scores(segmenter::segment(seg, image).max_prob);
}

namespace {
constexpr char kMagic[4] = {'S', 'C', 'P', 'A'};
}

void write_score_map(const std::filesystem::path& path, const AnomalyScoreMap& map) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const auto w = static_cast<std::uint32_t>(map.shape().w);
    const auto h = static_cast<std::uint32_t>(map.shape().h);
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&w), sizeof w);
    out.write(reinterpret_cast<const char*>(&h), sizeof h);
    out.write(reinterpret_cast<const char*>(map.data()), static_cast<std::streamsize>(map.size() * sizeof(float)));
    if (!out) throw IoError("failed writing " + path.string());
}

AnomalyScoreMap read_score_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    char magic[4];
    std::uint32_t w = 0;
    std::uint32_t h = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&w), sizeof w);
    in.read(reinterpret_cast<char*>(&h), sizeof h);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": not a score map");
    AnomalyScoreMap map(Shape{1, 1, static_cast<int>(h), static_cast<int>(w)});
    in.read(reinterpret_cast<char*>(map.data()), static_cast<std::streamsize>(map.size() * sizeof(float)));
    if (!in) throw IoError(path.string() + ": truncated score map");
    return map;
}

void write_heatmap_png(const std::filesystem::path& path, const AnomalyScoreMap& map) {
    Image8 img;
    img.width = map.shape().w;
    img.height = map.shape().h;
    img.channels = 3;
    img.pixels.resize(map.size() * 3);
    auto to8 = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double v = std::clamp(static_cast<double>(map[i]), 0.0, 1.0) * 3.0;
        img.pixels[3 * i] = to8(v);
        img.pixels[3 * i + 1] = to8(v - 1.0);
        img.pixels[3 * i + 2] = to8(v - 2.0);
    }
    write_png(path, img);
}

}  // namespace synthcp::anomaly
