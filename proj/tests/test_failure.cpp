#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "support/gradchecks.hpp"
#include "support/oracles.hpp"
#include "synthcp/errors.hpp"
#include "synthcp/failure.hpp"

using namespace synthcp;
using namespace synthcp::failure;
namespace fs = std::filesystem;
using nn::Shape;
using nn::Tensor;

namespace {

Tensor<int> random_map(Rng& rng, int h, int w, int classes) {
    Tensor<int> t({1, 1, h, w});
    for (auto& v : t.values()) v = 1 + static_cast<int>(rng.uniform_int(0, classes - 1));
    return t;
}

Tensor<float> random_image(Rng& rng, int h, int w) {
    Tensor<float> t({1, 3, h, w});
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
    return t;
}

FailureTuple synthetic_tuple(std::uint64_t seed, int h, int w, int classes) {
    Rng rng(seed);
    FailureTuple t;
    t.id = static_cast<int>(seed);
    t.image = random_image(rng, h, w);
    t.truth = Tensor<int>({1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.truth.at(0, 0, y, x) = 1 + ((x / 4 + y / 4) % classes);
    t.pred = t.truth;
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x) t.pred.at(0, 0, y, x) = 1 + (t.truth.at(0, 0, y, x) % classes);
    t.synth = random_image(rng, h, w);
    t.max_prob = Tensor<float>({1, 1, h, w}, 0.9f);
    t.targets = compute_targets(t.pred, t.truth, classes);
    return t;
}

ComparatorHyperparams small_hp(int steps) {
    ComparatorHyperparams hp;
    hp.width = 8;
    hp.steps = steps;
    hp.seed = 4;
    return hp;
}

}  // namespace

TEST_SUITE("failure") {
    TEST_CASE("worked 2x2 targets") {
        Tensor<int> pred({1, 1, 2, 2}, std::vector<int>{1, 1, 2, 2});
        Tensor<int> gt({1, 1, 2, 2}, std::vector<int>{1, 2, 2, 2});
        const auto iou = compute_iou(pred, gt, 2);
        REQUIRE(iou[0].has_value());
        REQUIRE(iou[1].has_value());
        CHECK(*iou[0] == 0.5);
        CHECK(*iou[1] == 2.0 / 3.0);
        const auto e = compute_error_map(pred, gt);
        CHECK(std::vector<int>(e.values().begin(), e.values().end()) == std::vector<int>{0, 1, 0, 0});
    }

    TEST_CASE("identity, disjoint and absent classes") {
        Tensor<int> a({1, 1, 2, 3}, std::vector<int>{1, 1, 2, 2, 1, 2});
        const auto same = compute_iou(a, a, 3);
        CHECK(*same[0] == 1.0);
        CHECK(*same[1] == 1.0);
        CHECK_FALSE(same[2].has_value());
        const auto none = compute_error_map(a, a);
        for (int v : none.values()) CHECK(v == 0);
        Tensor<int> b = a;
        b.at(0, 0, 1, 2) = 3;
        const auto e = compute_error_map(a, b);
        CHECK(std::accumulate(e.values().begin(), e.values().end(), 0) == 1);
        CHECK(e.at(0, 0, 1, 2) == 1);

        Tensor<int> p({1, 1, 1, 4}, std::vector<int>{1, 1, 2, 2});
        Tensor<int> g({1, 1, 1, 4}, std::vector<int>{2, 2, 1, 1});
        CHECK(*compute_iou(p, g, 2)[0] == 0.0);
        CHECK_THROWS_AS(compute_iou(p, a, 3), ShapeError);
        CHECK_THROWS_AS(compute_error_map(p, a), ShapeError);
    }

    TEST_CASE("targets match pixel enumeration on random maps") {
        Rng rng(21);
        for (int trial = 0; trial < 100; ++trial) {
            const auto p = random_map(rng, 8, 8, 5);
            const auto g = random_map(rng, 8, 8, 5);
            const auto iou = compute_iou(p, g, 5);
            const auto ref = testing::oracle_iou(p, g, 5);
            CHECK(iou == ref);
            CHECK(compute_error_map(p, g).storage() == testing::oracle_error_map(p, g).storage());
        }
    }

    TEST_CASE("symmetry, permutation invariance and error rate") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            const auto p = random_map(rng, 6, 7, 4);
            const auto g = random_map(rng, 6, 7, 4);
            CHECK(compute_iou(p, g, 4) == compute_iou(g, p, 4));
            CHECK(compute_error_map(p, g).storage() == compute_error_map(g, p).storage());

            std::vector<std::size_t> perm(p.size());
            std::iota(perm.begin(), perm.end(), 0);
            for (std::size_t i = perm.size() - 1; i > 0; --i)
                std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
            Tensor<int> pp(p.shape()), gp(g.shape());
            for (std::size_t i = 0; i < perm.size(); ++i) {
                pp[i] = p[perm[i]];
                gp[i] = g[perm[i]];
            }
            CHECK(compute_iou(pp, gp, 4) == compute_iou(p, g, 4));

            const auto e = compute_error_map(p, g);
            int correct = 0, errors = 0;
            for (std::size_t i = 0; i < p.size(); ++i) correct += p[i] == g[i] ? 1 : 0;
            for (int v : e.values()) errors += v;
            const double n = static_cast<double>(p.size());
            CHECK(errors == static_cast<int>(p.size()) - correct);
            CHECK(errors / n == doctest::Approx(1.0 - correct / n).epsilon(1e-15));
        }
    }

    TEST_CASE("fold assignment partitions the ids") {
        std::vector<int> ids(512);
        std::iota(ids.begin(), ids.end(), 0);
        const auto folds = assign_folds(ids, 4, 7);
        REQUIRE(folds.size() == ids.size());
        std::vector<int> sizes(4, 0);
        for (int f : folds) {
            REQUIRE(f >= 0);
            REQUIRE(f < 4);
            ++sizes[static_cast<std::size_t>(f)];
        }
        CHECK(sizes == std::vector<int>{128, 128, 128, 128});
        CHECK(assign_folds(ids, 4, 7) == folds);
        CHECK(assign_folds(ids, 4, 8) != folds);
        CHECK_THROWS_AS(assign_folds(ids, 1, 7), ConfigError);
        std::vector<int> few{1, 2};
        CHECK_THROWS_AS(assign_folds(few, 3, 7), ConfigError);
    }

    TEST_CASE("loss worked examples") {
        FailureTargets t;
        t.iou = {0.5, std::nullopt, 0.8};
        t.error_map = Tensor<int>({1, 1, 2, 2}, std::vector<int>{0, 1, 0, 1});
        FailureConfidence perfect{{0.5, 0.3, 0.8}, Tensor<float>({1, 1, 2, 2}, std::vector<float>{0, 1, 0, 1})};
        CHECK(comparator_loss(perfect, t) == doctest::Approx(0.0).epsilon(1e-6));
        CHECK(comparator_loss(perfect, t) >= 0.0);

        FailureConfidence off = perfect;
        off.iou_pred = {0.6, 0.9, 0.7};
        CHECK(comparator_loss(off, t) == doctest::Approx(0.1).epsilon(1e-6));

        FailureConfidence half = perfect;
        half.error_prob.fill(0.5f);
        CHECK(comparator_loss(half, t) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }

    TEST_CASE("comparator loss gradient") {
        const auto r = testing::check_comparator_loss();
        INFO(r.max_rel_error << " " << r.diagnostic);
        CHECK(r.pass);
    }

    TEST_CASE("separate mode decouples the two objectives") {
        auto hp = small_hp(0);
        hp.width = 2;
        hp.mode = Mode::Separate;
        ComparatorNet<double> net(3, hp);
        const auto tup = synthetic_tuple(3, 8, 8, 3);
        const auto x = tup.image.cast<double>();
        const auto xh = tup.synth.cast<double>();
        Tensor<double> iou_t({1, 3, 1, 1}), mask({1, 3, 1, 1}), err_t({1, 1, 8, 8});
        for (int c = 0; c < 3; ++c) {
            iou_t[static_cast<std::size_t>(c)] = tup.targets.iou[static_cast<std::size_t>(c)].value_or(0.0);
            mask[static_cast<std::size_t>(c)] = tup.targets.iou[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
        }
        for (std::size_t i = 0; i < err_t.size(); ++i) err_t[i] = tup.targets.error_map[i];

        auto run = [&](bool iou_term) {
            net.params().zero_grad();
            const auto out = net.forward(x, xh, tup.pred);
            const auto terms = comparator_loss_terms(out.iou, out.error, iou_t, mask, err_t);
            nn::backward(iou_term ? terms.iou_l1 : terms.error_bce);
        };
        auto grad_norm = [](const nn::Var<double>& v) {
            double s = 0.0;
            for (double g : v.grad().values()) s += std::abs(g);
            return s;
        };

        run(true);
        double err_side = 0.0, iou_side = 0.0;
        for (const auto& p : net.params().params()) {
            const bool err = net.is_error_param(p.name) || p.name.rfind("enc_err.", 0) == 0;
            (err ? err_side : iou_side) += p.var.grad().empty() ? 0.0 : grad_norm(p.var);
        }
        CHECK(err_side == 0.0);
        CHECK(iou_side > 0.0);

        run(false);
        err_side = iou_side = 0.0;
        for (const auto& p : net.params().params()) {
            const bool err = net.is_error_param(p.name) || p.name.rfind("enc_err.", 0) == 0;
            (err ? err_side : iou_side) += p.var.grad().empty() ? 0.0 : grad_norm(p.var);
        }
        CHECK(iou_side == 0.0);
        CHECK(err_side > 0.0);
    }

    TEST_CASE("detection is deterministic, order sensitive and validated") {
        ComparatorModel m(3, 16, 16, small_hp(0));
        const auto t = synthetic_tuple(8, 16, 16, 3);
        const auto a = detect_failures(m, t.image, t.synth, t.pred);
        const auto b = detect_failures(m, t.image, t.synth, t.pred);
        CHECK(a.iou_pred == b.iou_pred);
        CHECK(a.error_prob.storage() == b.error_prob.storage());
        const auto swapped = detect_failures(m, t.synth, t.image, t.pred);
        CHECK((swapped.iou_pred != a.iou_pred || swapped.error_prob.storage() != a.error_prob.storage()));
        CHECK(a.iou_pred.size() == 3);
        for (double v : a.iou_pred) CHECK((v >= 0.0 && v <= 1.0));
        for (float v : a.error_prob.values()) CHECK((v >= 0.0f && v <= 1.0f));
        CHECK_THROWS_AS(detect_failures(m, t.image, Tensor<float>({1, 3, 8, 8}), t.pred), ShapeError);
    }

    TEST_CASE("single tuple memorization") {
        const auto t = synthetic_tuple(1, 16, 16, 3);
        const std::vector<FailureTuple> one{t};
        const auto untrained = ComparatorModel(3, 16, 16, small_hp(0));
        const auto r = train_comparator(one, small_hp(300));
        REQUIRE(r.loss_curve.size() == 300);
        CHECK_FALSE(r.diverged);
        const double loss = mean_comparator_loss(*r.model, one);
        CHECK(loss < 0.05);
        CHECK(loss < mean_comparator_loss(untrained, one));
        std::vector<double> windows;
        for (int w = 0; w < 10; ++w) {
            double s = 0.0;
            for (int i = 0; i < 10; ++i) s += r.loss_curve[static_cast<std::size_t>(w * 10 + i)];
            windows.push_back(s / 10.0);
        }
        for (std::size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] < windows[i - 1]);
    }

    TEST_CASE("tuple store and checkpoint round trips") {
        KFoldResult kr;
        kr.folds = 2;
        kr.tuples = {synthetic_tuple(1, 16, 16, 3), synthetic_tuple(2, 16, 16, 3)};
        kr.tuples[1].fold = 1;
        kr.tuples[0].targets.iou[2] = std::nullopt;
        kr.segmenter_hashes = {"a", "b"};
        const fs::path dir = fs::temp_directory_path() / "synthcp_tuples";
        fs::remove_all(dir);
        write_tuple_store(dir, kr);
        const auto back = read_tuple_store(dir);
        REQUIRE(back.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(back[i].id == kr.tuples[i].id);
            CHECK(back[i].fold == kr.tuples[i].fold);
            CHECK(back[i].image.storage() == kr.tuples[i].image.storage());
            CHECK(back[i].pred.storage() == kr.tuples[i].pred.storage());
            CHECK(back[i].synth.storage() == kr.tuples[i].synth.storage());
            CHECK(back[i].targets.iou == kr.tuples[i].targets.iou);
            CHECK(back[i].targets.error_map.storage() == kr.tuples[i].targets.error_map.storage());
        }

        ComparatorModel m(3, 16, 16, small_hp(0));
        const fs::path cdir = fs::temp_directory_path() / "synthcp_comparator";
        fs::remove_all(cdir);
        save_comparator(m, cdir);
        const auto lm = load_comparator(cdir);
        CHECK(lm->param_hash() == m.param_hash());
        CHECK(detect_failures(*lm, back[0].image, back[0].synth, back[0].pred).iou_pred ==
              detect_failures(m, back[0].image, back[0].synth, back[0].pred).iou_pred);
    }

    TEST_CASE("hyperparameters json") {
        auto hp = small_hp(10);
        hp.mode = Mode::Separate;
        hp.encoding = LabelEncoding::Id;
        const auto j = hp.to_json();
        CHECK(ComparatorHyperparams::from_json(j).to_json() == j);
        CHECK(mode_from_name("joint") == Mode::Joint);
        CHECK_THROWS_AS(mode_from_name("both"), ConfigError);
        auto bad = j;
        bad["label_encoding"] = "rgb";
        CHECK_THROWS_AS(ComparatorHyperparams::from_json(bad), ConfigError);
    }
}
