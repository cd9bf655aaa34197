#include "oracles.hpp"

#include <cmath>
#include <functional>
#include <set>

namespace synthcp::testing {

std::optional<double> oracle_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    long double wins = 0;
    long long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1;
            else if (s[i] == s[j]) wins += 0.5L;
        }
    }
    if (pairs == 0) return std::nullopt;
    return static_cast<double>(wins / pairs);
}

std::optional<double> oracle_aupr(const std::vector<double>& s, const std::vector<int>& y) {
    int pos = 0;
    for (int v : y) pos += v;
    if (pos == 0) return std::nullopt;
    const std::set<double, std::greater<>> thresholds(s.begin(), s.end());
    long double area = 0;
    long double prev_recall = 0;
    for (double t : thresholds) {
        int tp = 0;
        int fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) (y[i] == 1 ? tp : fp)++;
        const long double recall = static_cast<long double>(tp) / pos;
        const long double precision = static_cast<long double>(tp) / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return static_cast<double>(area);
}

std::optional<double> oracle_fpr95(const std::vector<double>& s, const std::vector<int>& y) {
    int pos = 0;
    for (int v : y) pos += v;
    const int neg = static_cast<int>(y.size()) - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    std::optional<double> best;
    std::set<double> thresholds(s.begin(), s.end());
    for (double t : thresholds) {
        int tp = 0;
        int fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) (y[i] == 1 ? tp : fp)++;
        if (static_cast<double>(tp) / pos + 1e-12 < 0.95) continue;
        const double fpr = static_cast<double>(fp) / neg;
        if (!best || fpr < *best) best = fpr;
    }
    return best;
}

double oracle_mae(const std::vector<double>& a, const std::vector<double>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return static_cast<double>(s / a.size());
}

double oracle_abs_err_std(const std::vector<double>& a, const std::vector<double>& b) {
    const long double m = oracle_mae(a, b);
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = std::fabs(a[i] - b[i]) - m;
        s += d * d;
    }
    return static_cast<double>(std::sqrt(s / a.size()));
}

std::optional<double> oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const long double n = a.size();
    long double sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    const long double ma = sa / n;
    const long double mb = sb / n;
    long double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (a.size() < 2 || va == 0 || vb == 0) return std::nullopt;
    return static_cast<double>(cov / std::sqrt(va * vb));
}

namespace {
std::vector<double> naive_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        int less = 0;
        int equal = 0;
        for (double w : v) {
            if (w < v[i]) ++less;
            else if (w == v[i]) ++equal;
        }
        r[i] = less + (equal + 1) / 2.0;
    }
    return r;
}
}  // namespace

std::optional<double> oracle_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return oracle_pearson(naive_ranks(a), naive_ranks(b));
}

std::vector<std::optional<double>> oracle_iou(const nn::Tensor<int>& pred, const nn::Tensor<int>& gt, int classes) {
    std::vector<std::optional<double>> out;
    for (int l = 1; l <= classes; ++l) {
        std::set<std::size_t> p;
        std::set<std::size_t> g;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == l) p.insert(i);
            if (gt[i] == l) g.insert(i);
        }
        std::set<std::size_t> uni = p;
        uni.insert(g.begin(), g.end());
        std::size_t inter = 0;
        for (auto i : p) inter += g.count(i);
        if (uni.empty()) out.emplace_back();
        else out.emplace_back(static_cast<double>(inter) / static_cast<double>(uni.size()));
    }
    return out;
}

nn::Tensor<int> oracle_error_map(const nn::Tensor<int>& pred, const nn::Tensor<int>& gt) {
    nn::Tensor<int> out(pred.shape());
    for (int y = 0; y < pred.shape().h; ++y)
        for (int x = 0; x < pred.shape().w; ++x)
            out.at(0, 0, y, x) = pred.at(0, 0, y, x) == gt.at(0, 0, y, x) ? 0 : 1;
    return out;
}

metrics::ScoredSet random_scored_set(Rng& rng, int max_len) {
    metrics::ScoredSet s;
    const int n = rng.uniform_int(1, max_len);
    const int grid = rng.uniform_int(2, 12);
    for (int i = 0; i < n; ++i) {
        s.scores.push_back(static_cast<double>(rng.uniform_int(0, grid)) / grid);
        s.labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
    }
    if (n >= 2) {
        s.labels[0] = 1;
        s.labels[1] = 0;
    }
    return s;
}

bool same_metric(const std::optional<double>& a, const std::optional<double>& b, double tol) {
    if (a.has_value() != b.has_value()) return false;
    return !a || std::fabs(*a - *b) <= tol;
}

}  // namespace synthcp::testing
