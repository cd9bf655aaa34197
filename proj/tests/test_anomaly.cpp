#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "synthcp/anomaly.hpp"
#include "synthcp/errors.hpp"

using namespace synthcp;
using namespace synthcp::anomaly;
using nn::Tensor;

namespace {

Tensor<float> feats(std::vector<float> v, int c, int h, int w) { return Tensor<float>({1, c, h, w}, v); }

segmenter::SegmenterModel small_segmenter() {
    segmenter::SegmenterHyperparams hp;
    hp.base_width = 4;
    hp.seed = 2;
    return segmenter::SegmenterModel(6, 16, 16, hp);
}

Tensor<float> test_image() {
    Tensor<float> img({1, 3, 16, 16});
    Rng rng(4);
    for (auto& v : img.values()) v = static_cast<float>(rng.uniform());
    return img;
}

}  // namespace

TEST_SUITE("anomaly") {
    TEST_CASE("cosine distance worked values") {
        // Channel-major; pixels are identical, orthogonal, 45 degrees apart, zero.
        const auto f = feats({1, 1, 1, 0, 0, 0, 1, 0}, 2, 1, 4);
        const auto g = feats({1, 0, 1, 0, 0, 1, 0, 1}, 2, 1, 4);
        const auto d = cosine_distance_map(f, g);
        CHECK(std::abs(d[0]) < 1e-7);
        CHECK(d[1] == doctest::Approx(1.0));
        CHECK(d[2] == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-6));
        CHECK(d[3] == 0.0f);
        const auto opp = cosine_distance_map(feats({1, 0}, 2, 1, 1), feats({-1, 0}, 2, 1, 1));
        CHECK(opp[0] == doctest::Approx(2.0));
        CHECK_THROWS_AS(cosine_distance_map(f, feats({1, 0}, 2, 1, 1)), ShapeError);
    }

    TEST_CASE("identical nonzero features give zero and rescaling changes nothing") {
        Rng rng(8);
        Tensor<float> f({1, 5, 4, 4}), g({1, 5, 4, 4});
        for (auto& v : f.values()) v = static_cast<float>(rng.uniform(0.1, 1.0));
        for (auto& v : g.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
        const auto self = cosine_distance_map(f, f);
        for (float v : self.values()) CHECK(std::abs(v) < 1e-6);
        const auto base = cosine_distance_map(f, g);
        Tensor<float> scaled = g;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const float s = static_cast<float>(rng.uniform(0.5, 8.0));
                for (int c = 0; c < 5; ++c) scaled.at(0, c, y, x) *= s;
            }
        const auto after = cosine_distance_map(f, scaled);
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(after[i] == doctest::Approx(base[i]).epsilon(1e-5));
            CHECK(base[i] >= -1e-6f);
            CHECK(base[i] <= 1.0f + 1e-6f);
        }
    }

    TEST_CASE("msp post-processing branches") {
        const Tensor<float> raw({1, 1, 1, 4}, std::vector<float>{0.8f, 0.8f, 1.7f, -0.1f});
        const Tensor<float> p({1, 1, 1, 4}, std::vector<float>{0.9995f, 0.5f, 0.2f, 0.3f});
        const auto out = msp_postprocess(raw, p, {0.999, true});
        CHECK(out[0] == doctest::Approx(0.0005).epsilon(1e-3));
        CHECK(out[1] == doctest::Approx(0.8));
        CHECK(out[2] == 1.0f);
        CHECK(out[3] == 0.0f);
        const auto ident = msp_postprocess(raw, p, {1.0, true});
        const auto off = msp_postprocess(raw, p, {0.5, false});
        CHECK(ident.storage() == off.storage());
        CHECK(ident[0] == doctest::Approx(0.8));
        CHECK(msp_branch_count(p, 0.999) == 1);
        CHECK(msp_branch_count(p, 1.0) == 0);

        CHECK_THROWS_AS((PostProcessConfig{1.5, true}.validate()), ConfigError);
        CHECK_THROWS_AS((PostProcessConfig{-0.1, true}.validate()), ConfigError);
        const Tensor<float> badp({1, 1, 1, 4}, std::vector<float>{1.2f, 0.5f, 0.5f, 0.5f});
        CHECK_THROWS_AS(msp_postprocess(raw, badp, {}), InputError);
    }

    TEST_CASE("branch sets grow as the threshold drops") {
        Rng rng(13);
        Tensor<float> p({1, 1, 8, 8}), raw({1, 1, 8, 8});
        for (auto& v : p.values()) v = static_cast<float>(0.7 + 0.3 * rng.uniform());
        for (auto& v : raw.values()) v = static_cast<float>(rng.uniform());
        const std::vector<double> ts{1.0, 0.999, 0.99, 0.9, 0.8};
        std::vector<bool> prev(p.size(), false);
        long long prev_count = -1;
        for (double t : ts) {
            const auto out = msp_postprocess(raw, p, {t, true});
            for (std::size_t i = 0; i < p.size(); ++i) {
                const bool branch = p[i] > t;
                if (prev[i]) CHECK(branch);
                prev[i] = branch;
                CHECK(out[i] >= 0.0f);
                CHECK(out[i] <= 1.0f);
            }
            const long long count = msp_branch_count(p, t);
            CHECK(count >= prev_count);
            prev_count = count;
        }
    }

    TEST_CASE("degenerate generator leaves only the msp branch") {
        const auto seg = small_segmenter();
        const auto img = test_image();
        const auto r = segment_anomalies(seg, [&](const Tensor<int>&) { return img; }, img, {0.999, true});
        for (float v : r.raw.values()) CHECK(std::abs(v) < 1e-5);
        for (std::size_t i = 0; i < r.scores.size(); ++i) {
            if (r.max_prob[i] > 0.999f)
                CHECK(r.scores[i] == doctest::Approx(1.0 - r.max_prob[i]));
            else
                CHECK(std::abs(r.scores[i]) < 1e-5);
        }
        const auto again = segment_anomalies(seg, [&](const Tensor<int>&) { return img; }, img, {0.999, true});
        CHECK(again.scores.storage() == r.scores.storage());
        CHECK_THROWS_AS(
            segment_anomalies(seg, [&](const Tensor<int>&) { return Tensor<float>({1, 3, 8, 8}); }, img, {}),
            ShapeError);
    }

    TEST_CASE("uniform softmax gives the msp baseline value") {
        auto seg = small_segmenter();
        for (auto& p : seg.net().params().params())
            if (p.name.rfind("classifier", 0) == 0) {
                auto v = p.var;
                v.mutable_value().fill(0.0f);
            }
        const auto img = test_image();
        const auto m = msp_baseline(seg, img);
        for (float v : m.values()) CHECK(v == doctest::Approx(5.0 / 6.0).epsilon(1e-6));
        CHECK(msp_baseline(seg, img).storage() == m.storage());
        const Tensor<float> sure({1, 1, 1, 1}, 1.0f);
        CHECK(msp_scores(sure)[0] == 0.0f);
    }

    TEST_CASE("score map file round trip") {
        Tensor<float> m({1, 1, 3, 5});
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<float>(i) / 15.0f;
        const auto dir = std::filesystem::temp_directory_path() / "synthcp_anomaly";
        std::filesystem::create_directories(dir);
        write_score_map(dir / "m.bin", m);
        const auto back = read_score_map(dir / "m.bin");
        CHECK(back.shape() == m.shape());
        CHECK(back.storage() == m.storage());
        write_heatmap_png(dir / "m.png", m);
        CHECK(std::filesystem::file_size(dir / "m.png") > 0);
        CHECK_THROWS_AS(read_score_map(dir / "m.png"), IoError);
    }
}
