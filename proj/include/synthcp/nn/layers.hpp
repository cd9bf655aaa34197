#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "synthcp/nn/ops.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::nn {

template <typename T>
struct NamedParam {
    std::string name;
    Var<T> var;
};

// Owns the trainable tensors of one model. Layers hold handles into it.
template <typename T>
class ParamStore {
  public:
    // Truncated-normal weights (cut at two standard deviations).
    Var<T> normal(const std::string& name, Shape shape, Rng& rng, double stddev);
    Var<T> constant(const std::string& name, Shape shape, T value);

    const std::vector<NamedParam<T>>& params() const { return params_; }
    std::size_t count() const;
    void zero_grad();

    // Raw blob: per tensor name, shape and little-endian values.
    void save(std::ostream& out) const;
    void load(std::istream& in);
    // Overwrites values from another store with the same layout.
    template <typename U>
    void copy_from(const ParamStore<U>& other);
    std::string hash() const;

  private:
    Var<T> add(const std::string& name, Tensor<T> value);
    std::vector<NamedParam<T>> params_;
};

// Weight-initialisation scales.
struct Init {
    // Fixed std 0.02 (adversarial models).
    static double gan() { return 0.02; }
    // He scaling for rectifier stacks.
    static double he(int fan_in) { return std::sqrt(2.0 / fan_in); }
};

template <typename T>
struct Conv {
    Var<T> weight;
    Var<T> bias;
    int pad = 0;

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, pad); }
    int in_channels() const { return weight.shape().c; }
    int out_channels() const { return weight.shape().n; }
};

template <typename T>
Conv<T> make_conv(ParamStore<T>& store, const std::string& name, int in, int out, int kernel, Rng& rng,
                  double stddev, bool with_bias = true);

// Spatially-adaptive conditional normalization: per-channel spatial
// standardization modulated pixelwise by gamma/beta maps predicted from the
// one-hot label map through a two-layer conv branch.
template <typename T>
class SpadeNorm {
  public:
    SpadeNorm() = default;
    SpadeNorm(ParamStore<T>& store, const std::string& prefix, int channels, int label_channels, int hidden,
              Rng& rng, double stddev);

    // `label_onehot` is (N, L, H', W'); it is resized (nearest) to the
    // feature resolution.
    Var<T> operator()(const Var<T>& features, const Tensor<T>& label_onehot) const;

    int channels() const { return gamma_.out_channels(); }
    const Conv<T>& shared() const { return shared_; }
    const Conv<T>& gamma() const { return gamma_; }
    const Conv<T>& beta() const { return beta_; }

    static constexpr double kEps = 1e-5;

  private:
    Conv<T> shared_;
    Conv<T> gamma_;
    Conv<T> beta_;
};

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adam {
  public:
    Adam(const ParamStore<T>& store, AdamConfig config);
    void step();
    long steps() const { return t_; }

  private:
    std::vector<Var<T>> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    AdamConfig config_;
    long t_ = 0;
};

// One-hot encode a label map holding ids 1..num_classes into (N, L, H, W).
template <typename T>
Tensor<T> one_hot(const Tensor<int>& labels, int num_classes);

}  // namespace synthcp::nn
