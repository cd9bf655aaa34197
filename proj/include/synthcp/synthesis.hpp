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

namespace synthcp::synthesis {

struct GanHyperparams {
    int base_channels = 16;
    int spade_hidden = 32;
    int steps = 400;
    int batch = 8;
    double lr = 2e-4;
    double beta1 = 0.5;
    // Weight of the pixel reconstruction term added to the generator loss.
    double l1_weight = 10.0;
    std::uint64_t seed = 1;

    Json to_json() const;
    static GanHyperparams from_json(const Json& j);
};

// Latent-free generator: a learned seed tensor at 1/16 resolution goes through
// four (upsample, SPADE, leaky-relu, conv) blocks, then a 3-channel sigmoid.
template <typename T>
class GeneratorNet {
  public:
    static constexpr int kBlocks = 4;

    GeneratorNet(int num_classes, int width, int height, int base_channels, int spade_hidden, std::uint64_t seed);
    GeneratorNet(const GeneratorNet&) = delete;
    GeneratorNet& operator=(const GeneratorNet&) = delete;

    // (N, L, H, W) one-hot label maps -> (N, 3, H, W) images in [0, 1].
    nn::Var<T> forward(const nn::Tensor<T>& label_onehot) const;

    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }
    int num_classes() const { return num_classes_; }

  private:
    int num_classes_;
    int width_;
    int height_;
    nn::ParamStore<T> params_;
    nn::Var<T> seed_;
    std::vector<nn::SpadeNorm<T>> norms_;
    std::vector<nn::Conv<T>> convs_;
    nn::SpadeNorm<T> out_norm_;
    nn::Conv<T> out_conv_;
};

// Patch discriminator on the concatenated one-hot label map and image.
// Outputs per-patch real probabilities at 1/4 resolution.
template <typename T>
class DiscriminatorNet {
  public:
    DiscriminatorNet(int num_classes, int base_channels, std::uint64_t seed);
    DiscriminatorNet(const DiscriminatorNet&) = delete;
    DiscriminatorNet& operator=(const DiscriminatorNet&) = delete;

    nn::Var<T> forward(const nn::Tensor<T>& label_onehot, const nn::Var<T>& image) const;

    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

  private:
    int num_classes_;
    nn::ParamStore<T> params_;
    nn::Conv<T> c1_, c2_, c3_;
};

inline constexpr double kProbEps = 1e-7;

// mean log D(y, x) + mean log(1 - D(y, x_fake)); D maximizes it. `x_fake`
// should be detached from the generator.
template <typename T>
nn::Var<T> gan_d_objective(const DiscriminatorNet<T>& d, const nn::Tensor<T>& y, const nn::Var<T>& x,
                           const nn::Var<T>& x_fake);

// Non-saturating generator loss -mean log D(y, x_fake).
template <typename T>
nn::Var<T> gan_g_objective(const DiscriminatorNet<T>& d, const nn::Tensor<T>& y, const nn::Var<T>& x_fake);

class GanModel {
  public:
    GanModel(int num_classes, int width, int height, const GanHyperparams& hp);

    GeneratorNet<float>& generator() { return *g_; }
    const GeneratorNet<float>& generator() const { return *g_; }
    DiscriminatorNet<float>& discriminator() { return *d_; }
    const DiscriminatorNet<float>& discriminator() const { return *d_; }
    int num_classes() const { return num_classes_; }
    int width() const { return width_; }
    int height() const { return height_; }
    const GanHyperparams& hyperparams() const { return hp_; }
    std::string generator_hash() const { return g_->params().hash(); }

    Json meta() const;

  private:
    int num_classes_;
    int width_;
    int height_;
    GanHyperparams hp_;
    std::unique_ptr<GeneratorNet<float>> g_;
    std::unique_ptr<DiscriminatorNet<float>> d_;
};

struct GanTrainResult {
    std::unique_ptr<GanModel> model;
    std::vector<double> d_objective;
    std::vector<double> g_objective;
    std::vector<double> l1;
    // Set when the generator objective stayed above 10 for 500 steps.
    bool collapse_warning = false;
};

// Alternating updates (one D step per G step) on ground-truth (y, x) pairs.
GanTrainResult train_gan(const scenegen::Dataset& data, std::span<const int> train_ids, const GanHyperparams& hp);

// x_hat = G(label). Labels must lie in 1..L.
nn::Tensor<float> synthesize(const GanModel& model, const nn::Tensor<int>& label);
nn::Tensor<float> synthesize(const GeneratorNet<float>& g, int width, int height, const nn::Tensor<int>& label);

void save_gan(const GanModel& model, const std::filesystem::path& dir, const Json& extra_meta = {});
std::unique_ptr<GanModel> load_gan(const std::filesystem::path& dir);

}  // namespace synthcp::synthesis
