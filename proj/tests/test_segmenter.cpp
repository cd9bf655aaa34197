#include <filesystem>

#include "doctest.h"
#include "support/gradchecks.hpp"
#include "synthcp/errors.hpp"
#include "synthcp/segmenter.hpp"

using namespace synthcp;
using namespace synthcp::segmenter;
namespace fs = std::filesystem;

TEST_SUITE("segmenter") {
    TEST_CASE("cross-entropy gradient matches finite differences") {
        const auto r = testing::check_segmenter_loss();
        INFO(r.max_rel_error << " " << r.diagnostic);
        CHECK(r.pass);
    }

    TEST_CASE("argmax ties resolve to the lowest class id") {
        SegmenterOutput out;
        out.scores = nn::Tensor<float>({1, 3, 1, 3}, std::vector<float>{0.5f, 1.0f, 2.0f, 0.5f, 3.0f, 2.0f, 0.1f, 3.0f, 2.0f});
        fill_predictions(out);
        CHECK(out.pred[0] == 1);
        CHECK(out.pred[1] == 2);
        CHECK(out.pred[2] == 1);
        CHECK(out.max_prob[2] == doctest::Approx(1.0 / 3.0));
        CHECK(out.max_prob[0] > 0.33f);
    }

    TEST_CASE("forward shapes and feature width") {
        SegmenterNet<float> net(4, 8, 1);
        const nn::Var<float> x(nn::Tensor<float>({2, 3, 16, 32}, 0.5f));
        const auto out = net.forward(x);
        CHECK(out.logits.shape() == nn::Shape{2, 4, 16, 32});
        CHECK(out.features.shape() == nn::Shape{2, 8, 16, 32});
        for (float v : out.features.value().values()) CHECK(v >= 0.0f);
        const nn::Var<float> odd(nn::Tensor<float>({1, 3, 12, 16}));
        CHECK_THROWS_AS(net.forward(odd), ShapeError);
    }

    TEST_CASE("same seed gives the same parameters") {
        SegmenterNet<float> a(6, 8, 5);
        SegmenterNet<float> b(6, 8, 5);
        SegmenterNet<float> c(6, 8, 6);
        CHECK(a.params().hash() == b.params().hash());
        CHECK(a.params().hash() != c.params().hash());
    }

    TEST_CASE("checkpoint save and load reproduce outputs") {
        SegmenterHyperparams hp;
        hp.base_width = 4;
        hp.seed = 3;
        SegmenterModel m(6, 16, 16, hp);
        const fs::path dir = fs::temp_directory_path() / "synthcp_segmenter_ckpt";
        fs::remove_all(dir);
        save_segmenter(m, dir, Json{{"note", 1}});
        const auto back = load_segmenter(dir);
        CHECK(back->param_hash() == m.param_hash());
        CHECK(back->width() == 16);
        CHECK(back->num_classes() == 6);
        nn::Tensor<float> img({1, 3, 16, 16}, 0.25f);
        CHECK(segment(*back, img).scores.storage() == segment(m, img).scores.storage());
        CHECK_THROWS_AS(segment(m, nn::Tensor<float>({1, 3, 32, 32})), ShapeError);
        CHECK_THROWS_AS(load_segmenter(dir / "missing"), IoError);
    }

    TEST_CASE("hyperparameter validation") {
        SegmenterHyperparams hp;
        auto j = hp.to_json();
        CHECK(SegmenterHyperparams::from_json(j).to_json() == j);
        j["lr"] = -1.0;
        CHECK_THROWS_AS(SegmenterHyperparams::from_json(j), ConfigError);
    }
}
