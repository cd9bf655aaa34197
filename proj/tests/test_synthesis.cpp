#include <filesystem>

#include "doctest.h"
#include "support/gradchecks.hpp"
#include "synthcp/errors.hpp"
#include "synthcp/synthesis.hpp"

using namespace synthcp;
using namespace synthcp::synthesis;
namespace fs = std::filesystem;

namespace {

nn::Tensor<int> stripes(int h, int w, int classes) {
    nn::Tensor<int> t({1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(0, 0, y, x) = 1 + (x / 4) % classes;
    return t;
}

}  // namespace

TEST_SUITE("synthesis") {
    TEST_CASE("discriminator objective gradient") {
        const auto r = testing::check_gan_d_objective();
        INFO(r.max_rel_error << " " << r.diagnostic);
        CHECK(r.pass);
    }

    TEST_CASE("generator objective gradient") {
        const auto r = testing::check_gan_g_objective();
        INFO(r.max_rel_error << " " << r.diagnostic);
        CHECK(r.pass);
    }

    TEST_CASE("generator output is an image in the unit range") {
        GanHyperparams hp;
        hp.base_channels = 8;
        hp.spade_hidden = 8;
        GanModel m(4, 32, 32, hp);
        const auto x = synthesize(m, stripes(32, 32, 4));
        CHECK(x.shape() == nn::Shape{1, 3, 32, 32});
        for (float v : x.values()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        CHECK(synthesize(m, stripes(32, 32, 4)).storage() == x.storage());
    }

    TEST_CASE("labels outside the known classes are rejected") {
        GanHyperparams hp;
        hp.base_channels = 4;
        hp.spade_hidden = 4;
        GanModel m(4, 16, 16, hp);
        auto y = stripes(16, 16, 4);
        y.at(0, 0, 3, 3) = 5;
        CHECK_THROWS_AS(synthesize(m, y), InputError);
        y.at(0, 0, 3, 3) = 0;
        CHECK_THROWS_AS(synthesize(m, y), InputError);
        CHECK_THROWS_AS(synthesize(m, stripes(32, 16, 4)), ShapeError);
    }

    TEST_CASE("objectives have the expected sign") {
        DiscriminatorNet<double> d(3, 4, 2);
        nn::Tensor<int> lab({1, 1, 16, 16}, 1);
        const auto y = nn::one_hot<double>(lab, 3);
        const nn::Var<double> x(nn::Tensor<double>({1, 3, 16, 16}, 0.4));
        const nn::Var<double> xf(nn::Tensor<double>({1, 3, 16, 16}, 0.6));
        CHECK(gan_d_objective(d, y, x, xf).item() < 0.0);
        CHECK(gan_g_objective(d, y, xf).item() > 0.0);
    }

    TEST_CASE("checkpoint round trip") {
        GanHyperparams hp;
        hp.base_channels = 4;
        hp.spade_hidden = 4;
        hp.seed = 9;
        GanModel m(3, 16, 16, hp);
        const fs::path dir = fs::temp_directory_path() / "synthcp_gan_ckpt";
        fs::remove_all(dir);
        save_gan(m, dir);
        const auto back = load_gan(dir);
        CHECK(back->generator_hash() == m.generator_hash());
        const auto y = stripes(16, 16, 3);
        CHECK(synthesize(*back, y).storage() == synthesize(m, y).storage());
    }

    TEST_CASE("hyperparameter json and validation") {
        GanHyperparams hp;
        auto j = hp.to_json();
        CHECK(GanHyperparams::from_json(j).to_json() == j);
        j["steps"] = -5;
        CHECK_THROWS_AS(GanHyperparams::from_json(j), ConfigError);
    }
}
