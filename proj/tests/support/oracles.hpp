#pragma once

#include <optional>
#include <vector>

#include "synthcp/metrics.hpp"
#include "synthcp/nn/tensor.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::testing {

// Brute-force reference implementations, written without sharing code with
// the library versions.
std::optional<double> oracle_auroc(const std::vector<double>& s, const std::vector<int>& y);
std::optional<double> oracle_aupr(const std::vector<double>& s, const std::vector<int>& y);
std::optional<double> oracle_fpr95(const std::vector<double>& s, const std::vector<int>& y);
double oracle_mae(const std::vector<double>& a, const std::vector<double>& b);
double oracle_abs_err_std(const std::vector<double>& a, const std::vector<double>& b);
std::optional<double> oracle_pearson(const std::vector<double>& a, const std::vector<double>& b);
std::optional<double> oracle_spearman(const std::vector<double>& a, const std::vector<double>& b);

std::vector<std::optional<double>> oracle_iou(const nn::Tensor<int>& pred, const nn::Tensor<int>& gt, int classes);
nn::Tensor<int> oracle_error_map(const nn::Tensor<int>& pred, const nn::Tensor<int>& gt);

// Scored set of length 1..max_len with scores drawn from a small grid, so ties
// are common. Both classes are present when the length allows.
metrics::ScoredSet random_scored_set(Rng& rng, int max_len);

bool same_metric(const std::optional<double>& a, const std::optional<double>& b, double tol);

}  // namespace synthcp::testing
