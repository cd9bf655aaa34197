#include <cmath>
#include <sstream>

#include "doctest.h"
#include "support/gradchecks.hpp"
#include "synthcp/errors.hpp"
#include "synthcp/nn/gradcheck.hpp"
#include "synthcp/nn/layers.hpp"

using namespace synthcp;
using namespace synthcp::nn;

namespace {

Var<double> random_var(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor<double> t(s);
    for (auto& v : t.values()) v = lo + (hi - lo) * rng.uniform();
    return Var<double>(t, true);
}

void expect_pass(const GradCheckResult& r) {
    INFO("max rel error " << r.max_rel_error << " " << r.diagnostic);
    CHECK(r.pass);
    CHECK(r.entries_checked > 0);
}

}  // namespace

TEST_SUITE("nets") {
    TEST_CASE("elementwise and pooling ops pass finite-difference checks") {
        const auto a = random_var({2, 3, 4, 4}, 1);
        const auto b = random_var({2, 3, 4, 4}, 2);
        expect_pass(check_gradients([&] { return scalarize(add(a, b)); }, {a, b}));
        expect_pass(check_gradients([&] { return scalarize(mul(a, b)); }, {a, b}));
        expect_pass(check_gradients([&] { return scalarize(scale(a, 0.7)); }, {a}));
        expect_pass(check_gradients([&] { return scalarize(sigmoid(a)); }, {a}));
        expect_pass(check_gradients([&] { return scalarize(leaky_relu(a, 0.2)); }, {a}));
        expect_pass(check_gradients([&] { return scalarize(relu(a)); }, {a}));
        expect_pass(check_gradients([&] { return scalarize(avg_pool2(a)); }, {a}));
        expect_pass(check_gradients([&] { return scalarize(upsample2(a)); }, {a}));
        expect_pass(check_gradients([&] { return scalarize(concat_channels<double>({a, b})); }, {a, b}));
        expect_pass(check_gradients([&] { return scalarize(global_avg_pool(a)); }, {a}));
        expect_pass(check_gradients([&] { return scalarize(instance_norm(a, 1e-5)); }, {a}));
        expect_pass(check_gradients([&] { return mean_all(a); }, {a}));
        expect_pass(check_gradients([&] { return sum_all(mul(a, a)); }, {a}));
        const auto one = random_var({1, 3, 4, 4}, 3);
        expect_pass(check_gradients([&] { return scalarize(repeat_batch(one, 3)); }, {one}));
    }

    TEST_CASE("convolution gradients for input, weight and bias") {
        const auto x = random_var({2, 3, 5, 5}, 4);
        const auto w = random_var({4, 3, 3, 3}, 5);
        const auto b = random_var({4, 1, 1, 1}, 6);
        expect_pass(check_gradients([&] { return scalarize(conv2d(x, w, b, 1)); }, {x, w, b}));
        const auto w1 = random_var({2, 3, 1, 1}, 7);
        const auto b1 = random_var({2, 1, 1, 1}, 8);
        expect_pass(check_gradients([&] { return scalarize(conv2d(x, w1, b1, 0)); }, {x, w1, b1}));
    }

    TEST_CASE("loss ops pass finite-difference checks") {
        const auto logits = random_var({2, 4, 3, 3}, 9, -2.0, 2.0);
        Tensor<int> labels({2, 1, 3, 3});
        for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
        expect_pass(check_gradients([&] { return softmax_cross_entropy(logits, labels); }, {logits}));

        const auto p = random_var({2, 1, 3, 3}, 10, 0.1, 0.9);
        Tensor<double> target({2, 1, 3, 3});
        for (std::size_t i = 0; i < target.size(); ++i) target[i] = i % 3 == 0 ? 1.0 : 0.0;
        expect_pass(check_gradients([&] { return binary_cross_entropy(p, target, 1e-7); }, {p}));
        expect_pass(check_gradients([&] { return mean_log(p, 1e-7); }, {p}));
        expect_pass(check_gradients([&] { return mean_log1m(p, 1e-7); }, {p}));

        const auto q = random_var({2, 5, 1, 1}, 11, 0.0, 1.0);
        Tensor<double> t2({2, 5, 1, 1}, 0.3);
        Tensor<double> mask({2, 5, 1, 1}, 1.0);
        mask[1] = 0.0;
        mask[7] = 0.0;
        expect_pass(check_gradients([&] { return masked_l1(q, t2, mask); }, {q}));
    }

    TEST_CASE("spade normalization gradients") { expect_pass(testing::check_spade_norm()); }

    TEST_CASE("masked l1 ignores masked entries") {
        Tensor<double> pred({1, 3, 1, 1}, std::vector<double>{0.2, 0.9, 0.5});
        Tensor<double> target({1, 3, 1, 1}, std::vector<double>{0.4, 0.0, 0.5});
        Tensor<double> mask({1, 3, 1, 1}, std::vector<double>{1.0, 0.0, 1.0});
        CHECK(masked_l1(Var<double>(pred), target, mask).item() == doctest::Approx(0.1));
    }

    TEST_CASE("shape mismatches are rejected") {
        const Var<float> a(Tensor<float>({1, 2, 4, 4}));
        const Var<float> b(Tensor<float>({1, 3, 4, 4}));
        CHECK_THROWS_AS(add(a, b), ShapeError);
        CHECK_THROWS_AS(mul(a, b), ShapeError);
        const Var<float> w(Tensor<float>({2, 3, 3, 3}));
        const Var<float> bias(Tensor<float>({2, 1, 1, 1}));
        CHECK_THROWS_AS(conv2d(a, w, bias, 1), ShapeError);
        const Var<float> odd(Tensor<float>({1, 1, 3, 4}));
        CHECK_THROWS_AS(avg_pool2(odd), ShapeError);
        const Var<float> c(Tensor<float>({1, 2, 2, 2}));
        CHECK_THROWS_AS(concat_channels<float>({a, c}), ShapeError);
        Tensor<int> bad({1, 1, 4, 4}, 5);
        CHECK_THROWS_AS(softmax_cross_entropy(a, bad), InputError);
    }

    TEST_CASE("parameter store save and load round trip") {
        Rng rng(3);
        ParamStore<float> s1;
        make_conv(s1, "c1", 3, 4, 3, rng, Init::he(27));
        s1.normal("extra", {1, 5, 1, 1}, rng, 0.1);
        std::stringstream buf;
        s1.save(buf);

        Rng other(99);
        ParamStore<float> s2;
        make_conv(s2, "c1", 3, 4, 3, other, Init::he(27));
        s2.normal("extra", {1, 5, 1, 1}, other, 0.1);
        CHECK(s1.hash() != s2.hash());
        s2.load(buf);
        CHECK(s1.hash() == s2.hash());
        CHECK(s1.count() == 4 * 3 * 9 + 4 + 5);

        ParamStore<float> wrong;
        wrong.normal("c1.weight", {2, 2, 1, 1}, other, 0.1);
        std::stringstream buf2;
        s1.save(buf2);
        CHECK_THROWS(wrong.load(buf2));
    }

    TEST_CASE("truncated normal init stays within two standard deviations") {
        Rng rng(11);
        ParamStore<double> s;
        const auto v = s.normal("w", {1, 1, 50, 50}, rng, 0.5);
        double mx = 0.0;
        for (double x : v.value().values()) mx = std::max(mx, std::abs(x));
        CHECK(mx <= 1.0);
        CHECK(mx > 0.5);
    }

    TEST_CASE("adam moves parameters against the gradient") {
        Rng rng(1);
        ParamStore<double> s;
        auto w = s.constant("w", {1, 1, 1, 2}, 1.0);
        Adam<double> opt(s, AdamConfig{0.1});
        for (int i = 0; i < 50; ++i) {
            s.zero_grad();
            auto loss = sum_all(mul(w, w));
            backward(loss);
            opt.step();
        }
        CHECK(std::abs(w.value()[0]) < 0.5);
        CHECK(opt.steps() == 50);
    }

    TEST_CASE("one hot encoding uses ids starting at one") {
        Tensor<int> labels({1, 1, 1, 3}, std::vector<int>{1, 3, 2});
        const auto oh = one_hot<float>(labels, 3);
        CHECK(oh.shape() == Shape{1, 3, 1, 3});
        CHECK(oh.at(0, 0, 0, 0) == 1.0f);
        CHECK(oh.at(0, 2, 0, 1) == 1.0f);
        CHECK(oh.at(0, 1, 0, 2) == 1.0f);
        float total = 0;
        for (float v : oh.values()) total += v;
        CHECK(total == 3.0f);
    }
}
