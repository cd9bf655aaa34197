#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthcp/anomaly.hpp"
#include "synthcp/json_util.hpp"

namespace synthcp::metrics {

// Empty when the metric is undefined for the input (e.g. a missing class).
using Metric = std::optional<double>;

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;  // 1 = positive

    void validate() const;
    std::size_t positives() const;
};

Metric auroc(const ScoredSet& s);

enum class Positive { Error, Success };
// Area under the precision-recall step curve. Success mode treats label 0 as
// positive and ranks by negated score.
Metric aupr(const ScoredSet& s, Positive positive = Positive::Error);

Metric fpr_at_95_tpr(const ScoredSet& s);

struct RegressionMetrics {
    Metric mae;
    Metric std;
    Metric pearson;
    Metric spearman;
};
RegressionMetrics regression_metrics(std::span<const double> pred, std::span<const double> gt);

Metric pearson(std::span<const double> a, std::span<const double> b);
// 1-based ranks, tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> v);

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};
// (FPR, TPR) and (recall, precision) after each tie group, highest scores first.
std::vector<CurvePoint> roc_curve(const ScoredSet& s);
std::vector<CurvePoint> pr_curve(const ScoredSet& s);

// Pooled pixels of an anomaly evaluation split.
struct AnomalyEvalSet {
    std::vector<float> raw;       // cosine distance before post-processing
    std::vector<float> max_prob;
    std::vector<int> labels;      // 1 = anomaly pixel

    void validate() const;
};

ScoredSet anomaly_scored_set(const AnomalyEvalSet& set, const anomaly::PostProcessConfig& config);
ScoredSet msp_scored_set(const AnomalyEvalSet& set);

struct DetectionMetrics {
    Metric auroc;
    Metric aupr;
    Metric fpr95;
    bool operator==(const DetectionMetrics&) const = default;
};
DetectionMetrics detection_metrics(const ScoredSet& s);

struct SweepRow {
    double threshold = 1.0;
    DetectionMetrics metrics;
    long long msp_branch_pixels = 0;
    long long raw_branch_pixels = 0;

    bool operator==(const SweepRow&) const = default;
};

const std::vector<double>& default_t_list();
std::vector<SweepRow> sweep_thresholds(const AnomalyEvalSet& set, std::span<const double> t_list);

using MetricTable = std::map<std::string, Metric>;

struct MetricsReport {
    Json meta = Json::object();
    MetricTable image_level;
    MetricTable pixel_level;
    MetricTable anomaly;
    std::vector<SweepRow> sweep;

    // Names of undefined metrics across all tables.
    std::vector<std::string> undefined() const;
    Json to_json() const;
    static MetricsReport from_json(const Json& j);
    bool operator==(const MetricsReport&) const = default;
};

inline constexpr const char* kReportVersion = "synthcp-report/1";

// Raster line plot of one or more curves on the unit square.
void write_curve_plot(const std::filesystem::path& path, const std::vector<std::vector<CurvePoint>>& series);
// Raster scatter plot of (x, y) pairs in the unit square with the identity line.
void write_scatter_plot(const std::filesystem::path& path, std::span<const double> xs, std::span<const double> ys);

}  // namespace synthcp::metrics
