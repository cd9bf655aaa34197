#pragma once

#include <vector>

#include "synthcp/nn/autograd.hpp"

namespace synthcp::nn {

// Same-size 2D convolution with stride 1. `weight` is (Cout, Cin, k, k);
// `bias` is (1, Cout, 1, 1) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int pad);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> avg_pool2(const Var<T>& x);
template <typename T>
Var<T> upsample2(const Var<T>& x);
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

// Per-(sample, channel) standardization over spatial positions.
template <typename T>
Var<T> instance_norm(const Var<T>& x, T eps);

template <typename T>
Var<T> global_avg_pool(const Var<T>& x);
// Tiles a (1, C, H, W) tensor along the batch dimension.
template <typename T>
Var<T> repeat_batch(const Var<T>& x, int n);

template <typename T>
Var<T> sum_all(const Var<T>& x);
template <typename T>
Var<T> mean_all(const Var<T>& x);

// Mean per-pixel softmax cross-entropy; `labels` holds 0-based class indices
// with shape (N, 1, H, W).
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const Tensor<int>& labels);

// Mean binary cross-entropy of probabilities against {0,1} targets; the
// probabilities are clamped to [eps, 1 - eps].
template <typename T>
Var<T> binary_cross_entropy(const Var<T>& prob, const Tensor<T>& target, T eps);

// Mean |pred - target| over entries where mask != 0. Returns 0 when the mask
// is empty.
template <typename T>
Var<T> masked_l1(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask);

// mean(log(max(p, eps))) and mean(log(max(1 - p, eps))).
template <typename T>
Var<T> mean_log(const Var<T>& p, T eps);
template <typename T>
Var<T> mean_log1m(const Var<T>& p, T eps);

// Plain tensor helpers (no graph).
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);
// Nearest-neighbour resize of every channel to (h, w).
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, int h, int w);

}  // namespace synthcp::nn
