#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "synthcp/nn/tensor.hpp"

namespace synthcp::scenegen {

// In-distribution ids are 1..num_classes, background is 1 and the anomaly id
// num_classes + 1 only ever appears in the anomaly split.
struct LabelSpace {
    int num_classes = 6;
    static constexpr int background_id = 1;
    int anomaly_id() const { return num_classes + 1; }
};

enum class Geometry { Disc, Rect, Triangle, Ellipse, Ring, Cross, Diamond };
enum class Texture { Solid, Stripes, Checker };

using Rgb = std::array<double, 3>;

struct ColorBox {
    Rgb lo{};
    Rgb hi{};
    bool contains(const Rgb& c, double tol = 0.0) const;
    bool disjoint(const ColorBox& other) const;
};

struct ShapeKind {
    int class_id = 2;
    Geometry geometry = Geometry::Disc;
    Rgb color{};
    double jitter = 0.05;
    Texture texture = Texture::Solid;
    double texture_amplitude = 0.0;
    int texture_period = 3;
    double min_radius = 3.0;
    double max_radius = 7.0;

    // Colours this kind can produce before pixel noise.
    ColorBox color_box() const;
};

struct BackgroundKind {
    Rgb top{};
    Rgb bottom{};
    double jitter = 0.04;
    Texture texture = Texture::Checker;
    double texture_amplitude = 0.03;
    int texture_period = 4;

    ColorBox color_box() const;
};

struct SceneSpec {
    int width = 32;
    int height = 32;
    LabelSpace labels{};
    int min_shapes = 2;
    int max_shapes = 5;
    BackgroundKind background{};
    std::vector<ShapeKind> shape_kinds;
    std::vector<ShapeKind> anomaly_kinds;
    double noise_level = 0.05;
    std::uint64_t rng_seed = 1;

    // Throws ConfigError on an invalid specification.
    void validate() const;
};

// Default scene family for `num_classes` in-distribution classes.
SceneSpec default_scene_spec(int num_classes = 6, int width = 32, int height = 32, std::uint64_t seed = 1);

enum class Split { Train, Val, Test, Anomaly };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

// One object to rasterize. Coverage is decided at pixel centres.
struct SceneObject {
    int class_id = 1;
    Geometry geometry = Geometry::Rect;
    double cx = 0.0;
    double cy = 0.0;
    double rx = 1.0;
    double ry = 1.0;
    Rgb color{};
    Texture texture = Texture::Solid;
    double texture_amplitude = 0.0;
    int texture_period = 3;
    int texture_phase = 0;

    bool covers(double px, double py) const;
};

struct Sample {
    nn::Tensor<float> image;  // (1, 3, H, W), values in [0, 1]
    nn::Tensor<int> label;    // (1, 1, H, W), class ids
    Split split = Split::Train;
    int id = 0;
};

// Rasterizes background plus objects (later objects on top), then adds
// clipped Gaussian pixel noise drawn from `noise_seed`.
Sample render_scene(const SceneSpec& spec, const Rgb& background_shift, const std::vector<SceneObject>& objects,
                    std::uint64_t noise_seed);

// Pure function of (spec, index, allow_anomaly).
Sample generate_scene(const SceneSpec& spec, int index, bool allow_anomaly);

struct SplitCounts {
    int train = 512;
    int val = 64;
    int test = 128;
    int anomaly = 128;
    int total() const { return train + val + test + anomaly; }
};

struct DatasetManifest {
    static constexpr const char* kVersion = "synthcp-dataset/1";
    std::string version = kVersion;
    SceneSpec spec;
    std::map<Split, std::vector<int>> splits;
    std::map<int, std::string> image_paths;  // relative to the dataset root
    std::map<int, std::string> label_paths;

    std::size_t total() const;
};

// Writes images/, labels/ and manifest.json below out_dir.
DatasetManifest build_dataset(const SceneSpec& spec, const SplitCounts& counts, const std::filesystem::path& out_dir);

// In-memory dataset read back from disk (images quantized to 8 bits).
struct Dataset {
    std::filesystem::path root;
    DatasetManifest manifest;
    std::vector<nn::Tensor<float>> images;  // indexed by sample id
    std::vector<nn::Tensor<int>> labels;

    const std::vector<int>& ids(Split s) const;
    int width() const { return manifest.spec.width; }
    int height() const { return manifest.spec.height; }
    int num_classes() const { return manifest.spec.labels.num_classes; }
};

Dataset load_dataset(const std::filesystem::path& root);

// JSON forms used in manifests and configuration files.
nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

}  // namespace synthcp::scenegen
