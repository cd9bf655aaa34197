#include "synthcp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "synthcp/errors.hpp"
#include "synthcp/image_io.hpp"

namespace synthcp::metrics {

void ScoredSet::validate() const {
    if (scores.size() != labels.size()) throw InputError("scored set: scores and labels differ in length");
    if (scores.empty()) throw InputError("scored set is empty");
    for (double s : scores)
        if (!std::isfinite(s)) throw InputError("scored set: non-finite score");
    for (int l : labels)
        if (l != 0 && l != 1) throw InputError("scored set: labels must be 0 or 1");
}

std::size_t ScoredSet::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

namespace {

struct Group {
    std::size_t tp;  // cumulative after the group
    std::size_t fp;
    std::size_t dp;  // within the group
    std::size_t dn;
};

// Tie groups in order of decreasing score.
std::vector<Group> tie_groups(const ScoredSet& s) {
    std::vector<std::size_t> order(s.scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
    std::vector<Group> groups;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t dp = 0;
        std::size_t dn = 0;
        const double v = s.scores[order[i]];
        for (; i < order.size() && s.scores[order[i]] == v; ++i) (s.labels[order[i]] == 1 ? dp : dn)++;
        tp += dp;
        fp += dn;
        groups.push_back(Group{tp, fp, dp, dn});
    }
    return groups;
}

ScoredSet flipped(const ScoredSet& s) {
    ScoredSet out;
    out.scores.reserve(s.scores.size());
    out.labels.reserve(s.labels.size());
    for (double v : s.scores) out.scores.push_back(-v);
    for (int l : s.labels) out.labels.push_back(1 - l);
    return out;
}

}  // namespace

Metric auroc(const ScoredSet& s) {
    s.validate();
    const std::size_t pos = s.positives();
    const std::size_t neg = s.labels.size() - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    double acc = 0.0;
    for (const auto& g : tie_groups(s))
        acc += static_cast<double>(g.dn) * (static_cast<double>(g.tp - g.dp) + 0.5 * static_cast<double>(g.dp));
    return acc / (static_cast<double>(pos) * static_cast<double>(neg));
}

Metric aupr(const ScoredSet& s, Positive positive) {
    s.validate();
    if (positive == Positive::Success) return aupr(flipped(s), Positive::Error);
    const std::size_t pos = s.positives();
    if (pos == 0) return std::nullopt;
    double area = 0.0;
    std::size_t prev_tp = 0;
    for (const auto& g : tie_groups(s)) {
        if (g.dp > 0) {
            const double precision = static_cast<double>(g.tp) / static_cast<double>(g.tp + g.fp);
            area += static_cast<double>(g.tp - prev_tp) / static_cast<double>(pos) * precision;
        }
        prev_tp = g.tp;
    }
    return area;
}

Metric fpr_at_95_tpr(const ScoredSet& s) {
    s.validate();
    const std::size_t pos = s.positives();
    const std::size_t neg = s.labels.size() - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    for (const auto& g : tie_groups(s))
        if (20 * g.tp >= 19 * pos) return static_cast<double>(g.fp) / static_cast<double>(neg);
    return 1.0;
}

std::vector<CurvePoint> roc_curve(const ScoredSet& s) {
    s.validate();
    const double pos = static_cast<double>(s.positives());
    const double neg = static_cast<double>(s.labels.size()) - pos;
    std::vector<CurvePoint> pts{{0.0, 0.0}};
    if (pos == 0 || neg == 0) return pts;
    for (const auto& g : tie_groups(s))
        pts.push_back({static_cast<double>(g.fp) / neg, static_cast<double>(g.tp) / pos});
    return pts;
}

std::vector<CurvePoint> pr_curve(const ScoredSet& s) {
    s.validate();
    const double pos = static_cast<double>(s.positives());
    std::vector<CurvePoint> pts;
    if (pos == 0) return pts;
    for (const auto& g : tie_groups(s))
        pts.push_back({static_cast<double>(g.tp) / pos, static_cast<double>(g.tp) / static_cast<double>(g.tp + g.fp)});
    return pts;
}

Metric pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("pearson: inputs differ in length");
    if (a.size() < 2) return std::nullopt;
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

RegressionMetrics regression_metrics(std::span<const double> pred, std::span<const double> gt) {
    if (pred.size() != gt.size()) throw InputError("regression_metrics: inputs differ in length");
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (!std::isfinite(pred[i]) || !std::isfinite(gt[i])) throw InputError("regression_metrics: non-finite value");
    RegressionMetrics m;
    if (pred.empty()) return m;
    const double n = static_cast<double>(pred.size());
    double mae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mae += std::abs(pred[i] - gt[i]);
    mae /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = std::abs(pred[i] - gt[i]) - mae;
        var += d * d;
    }
    m.mae = mae;
    m.std = std::sqrt(var / n);
    m.pearson = pearson(pred, gt);
    const auto rp = average_ranks(pred);
    const auto rg = average_ranks(gt);
    m.spearman = pearson(rp, rg);
    return m;
}

void AnomalyEvalSet::validate() const {
    if (raw.size() != max_prob.size() || raw.size() != labels.size())
        throw InputError("anomaly evaluation set: column lengths differ");
}

ScoredSet anomaly_scored_set(const AnomalyEvalSet& set, const anomaly::PostProcessConfig& config) {
    set.validate();
    const nn::Shape shape{1, 1, 1, static_cast<int>(set.raw.size())};
    const anomaly::AnomalyScoreMap raw(shape, set.raw);
    const nn::Tensor<float> prob(shape, set.max_prob);
    const auto post = anomaly::msp_postprocess(raw, prob, config);
    ScoredSet s;
    s.scores.assign(post.values().begin(), post.values().end());
    s.labels = set.labels;
    return s;
}

ScoredSet msp_scored_set(const AnomalyEvalSet& set) {
    set.validate();
    ScoredSet s;
    s.scores.reserve(set.max_prob.size());
    for (float p : set.max_prob) s.scores.push_back(static_cast<double>(1.0f - p));
    s.labels = set.labels;
    return s;
}

DetectionMetrics detection_metrics(const ScoredSet& s) {
    return DetectionMetrics{auroc(s), aupr(s), fpr_at_95_tpr(s)};
}

const std::vector<double>& default_t_list() {
    static const std::vector<double> list{0.8, 0.9, 0.99, 0.999, 1.0};
    return list;
}

std::vector<SweepRow> sweep_thresholds(const AnomalyEvalSet& set, std::span<const double> t_list) {
    set.validate();
    const nn::Tensor<float> prob(nn::Shape{1, 1, 1, static_cast<int>(set.max_prob.size())}, set.max_prob);
    std::vector<SweepRow> rows;
    for (double t : t_list) {
        const anomaly::PostProcessConfig cfg{t, true};
        SweepRow row;
        row.threshold = t;
        row.metrics = detection_metrics(anomaly_scored_set(set, cfg));
        row.msp_branch_pixels = anomaly::msp_branch_count(prob, t);
        row.raw_branch_pixels = static_cast<long long>(set.max_prob.size()) - row.msp_branch_pixels;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace {

Json metric_json(const Metric& m) { return m ? Json(*m) : Json(nullptr); }

Metric metric_from(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

Json table_json(const MetricTable& t) {
    Json j = Json::object();
    for (const auto& [k, v] : t) j[k] = metric_json(v);
    return j;
}

MetricTable table_from(const Json& j) {
    MetricTable t;
    for (auto it = j.begin(); it != j.end(); ++it) t[it.key()] = metric_from(it.value());
    return t;
}

}  // namespace

std::vector<std::string> MetricsReport::undefined() const {
    std::vector<std::string> out;
    auto scan = [&](const char* section, const MetricTable& t) {
        for (const auto& [k, v] : t)
            if (!v) out.push_back(std::string(section) + "." + k);
    };
    scan("image_level", image_level);
    scan("pixel_level", pixel_level);
    scan("anomaly", anomaly);
    for (const auto& r : sweep) {
        const std::string p = "sweep[" + std::to_string(r.threshold) + "].";
        if (!r.metrics.auroc) out.push_back(p + "auroc");
        if (!r.metrics.aupr) out.push_back(p + "aupr");
        if (!r.metrics.fpr95) out.push_back(p + "fpr95");
    }
    return out;
}

Json MetricsReport::to_json() const {
    Json rows = Json::array();
    for (const auto& r : sweep)
        rows.push_back({{"t", r.threshold},
                        {"auroc", metric_json(r.metrics.auroc)},
                        {"aupr", metric_json(r.metrics.aupr)},
                        {"fpr95", metric_json(r.metrics.fpr95)},
                        {"msp_branch_pixels", r.msp_branch_pixels},
                        {"raw_branch_pixels", r.raw_branch_pixels}});
    return Json{{"version", kReportVersion},
                {"meta", meta},
                {"image_level", table_json(image_level)},
                {"pixel_level", table_json(pixel_level)},
                {"anomaly", table_json(anomaly)},
                {"sweep", rows},
                {"undefined", undefined()}};
}

MetricsReport MetricsReport::from_json(const Json& j) {
    try {
        if (j.at("version").get<std::string>() != kReportVersion) throw InputError("unsupported report version");
        MetricsReport r;
        r.meta = j.at("meta");
        r.image_level = table_from(j.at("image_level"));
        r.pixel_level = table_from(j.at("pixel_level"));
        r.anomaly = table_from(j.at("anomaly"));
        for (const auto& row : j.at("sweep")) {
            SweepRow s;
            s.threshold = row.at("t").get<double>();
            s.metrics.auroc = metric_from(row.at("auroc"));
            s.metrics.aupr = metric_from(row.at("aupr"));
            s.metrics.fpr95 = metric_from(row.at("fpr95"));
            s.msp_branch_pixels = row.at("msp_branch_pixels").get<long long>();
            s.raw_branch_pixels = row.at("raw_branch_pixels").get<long long>();
            r.sweep.push_back(s);
        }
        return r;
    } catch (const Json::exception& e) {
        throw InputError(std::string("malformed report: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Plots

namespace {

constexpr int kPlotSize = 256;
constexpr int kMargin = 16;

struct Canvas {
    Image8 img;
    Canvas() {
        img.width = kPlotSize;
        img.height = kPlotSize;
        img.channels = 3;
        img.pixels.assign(static_cast<std::size_t>(kPlotSize * kPlotSize * 3), 255);
    }
    void set(int x, int y, const std::array<std::uint8_t, 3>& c) {
        if (x < 0 || y < 0 || x >= kPlotSize || y >= kPlotSize) return;
        auto* p = &img.pixels[static_cast<std::size_t>((y * kPlotSize + x) * 3)];
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }
    static int px(double v) {
        return kMargin + static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * (kPlotSize - 2 * kMargin - 1)));
    }
    static int py(double v) {
        return kPlotSize - 1 - px(v);
    }
    void line(int x0, int y0, int x1, int y1, const std::array<std::uint8_t, 3>& c) {
        const int dx = std::abs(x1 - x0);
        const int dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1;
        const int sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
    void frame() {
        const std::array<std::uint8_t, 3> black{0, 0, 0};
        const int lo = px(0.0);
        const int hi = px(1.0);
        line(lo, py(0.0), hi, py(0.0), black);
        line(lo, py(1.0), hi, py(1.0), black);
        line(lo, py(0.0), lo, py(1.0), black);
        line(hi, py(0.0), hi, py(1.0), black);
        const std::array<std::uint8_t, 3> grid{220, 220, 220};
        for (int k = 1; k < 4; ++k) {
            const double v = 0.25 * k;
            line(px(v), py(0.0) - 1, px(v), py(1.0) + 1, grid);
            line(lo + 1, py(v), hi - 1, py(v), grid);
        }
    }
};

const std::array<std::array<std::uint8_t, 3>, 4> kPalette{{{200, 30, 30}, {30, 90, 200}, {30, 150, 60}, {150, 60, 160}}};

}  // namespace

void write_curve_plot(const std::filesystem::path& path, const std::vector<std::vector<CurvePoint>>& series) {
    Canvas c;
    c.frame();
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& color = kPalette[s % kPalette.size()];
        const auto& pts = series[s];
        for (std::size_t i = 1; i < pts.size(); ++i)
            c.line(Canvas::px(pts[i - 1].x), Canvas::py(pts[i - 1].y), Canvas::px(pts[i].x), Canvas::py(pts[i].y), color);
        if (pts.size() == 1) c.set(Canvas::px(pts[0].x), Canvas::py(pts[0].y), color);
    }
    write_png(path, c.img);
}

void write_scatter_plot(const std::filesystem::path& path, std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw InputError("scatter plot: coordinate arrays differ in length");
    Canvas c;
    c.frame();
    c.line(Canvas::px(0.0), Canvas::py(0.0), Canvas::px(1.0), Canvas::py(1.0), {160, 160, 160});
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const int x = Canvas::px(xs[i]);
        const int y = Canvas::py(ys[i]);
        for (int d = -1; d <= 1; ++d) {
            c.set(x + d, y, kPalette[1]);
            c.set(x, y + d, kPalette[1]);
        }
    }
    write_png(path, c.img);
}

}  // namespace synthcp::metrics
