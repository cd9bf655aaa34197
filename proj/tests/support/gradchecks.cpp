#include "gradchecks.hpp"

#include "synthcp/failure.hpp"
#include "synthcp/nn/layers.hpp"
#include "synthcp/nn/ops.hpp"
#include "synthcp/rng.hpp"
#include "synthcp/segmenter.hpp"
#include "synthcp/synthesis.hpp"

namespace synthcp::testing {

using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

Tensor<int> random_labels(Shape s, int classes, Rng& rng) {
    Tensor<int> t(s);
    for (auto& v : t.values()) v = rng.uniform_int(1, classes);
    return t;
}

std::vector<Var<double>> all_params(const nn::ParamStore<double>& store) {
    std::vector<Var<double>> out;
    for (const auto& p : store.params()) out.push_back(p.var);
    return out;
}

nn::GradCheckOptions sampled(std::size_t per_var, double step = 1e-5) {
    nn::GradCheckOptions o;
    o.max_entries_per_var = per_var;
    o.step = step;
    return o;
}

// The 0.02-std adversarial init leaves most pre-activations within a few
// finite-difference steps of a leaky-relu kink; probe a spread-out point.
void spread_params(const nn::ParamStore<double>& store, double factor) {
    for (const auto& p : store.params()) {
        auto v = p.var;
        for (auto& x : v.mutable_value().values()) x *= factor;
    }
}

}  // namespace

nn::GradCheckResult check_spade_norm() {
    Rng rng(11);
    nn::ParamStore<double> store;
    nn::SpadeNorm<double> norm(store, "spade", 3, 4, 5, rng, 0.5);
    Var<double> x(random_tensor(Shape{2, 3, 4, 4}, rng), true);
    const auto label = nn::one_hot<double>(random_labels(Shape{2, 1, 8, 8}, 4, rng), 4);
    auto wrt = all_params(store);
    wrt.push_back(x);
    return nn::check_gradients([&] { return nn::scalarize(norm(x, label), 3); }, wrt);
}

nn::GradCheckResult check_segmenter_loss() {
    Rng rng(12);
    segmenter::SegmenterNet<double> net(3, 2, 5);
    Var<double> x(random_tensor(Shape{2, 3, 16, 16}, rng, 0.0, 1.0), true);
    Tensor<int> labels(Shape{2, 1, 16, 16});
    for (auto& v : labels.values()) v = rng.uniform_int(0, 2);
    auto wrt = all_params(net.params());
    wrt.push_back(x);
    return nn::check_gradients([&] { return nn::softmax_cross_entropy(net.forward(x).logits, labels); }, wrt,
                               sampled(12));
}

nn::GradCheckResult check_gan_d_objective() {
    Rng rng(13);
    synthesis::DiscriminatorNet<double> d(3, 2, 6);
    spread_params(d.params(), 15.0);
    const auto y = nn::one_hot<double>(random_labels(Shape{2, 1, 8, 8}, 3, rng), 3);
    Var<double> real(random_tensor(Shape{2, 3, 8, 8}, rng, 0.0, 1.0), true);
    Var<double> fake(random_tensor(Shape{2, 3, 8, 8}, rng, 0.0, 1.0), true);
    auto wrt = all_params(d.params());
    wrt.push_back(real);
    wrt.push_back(fake);
    return nn::check_gradients([&] { return synthesis::gan_d_objective(d, y, real, fake); }, wrt,
                               sampled(16, 1e-6));
}

nn::GradCheckResult check_gan_g_objective() {
    Rng rng(14);
    synthesis::GeneratorNet<double> g(3, 16, 16, 2, 3, 7);
    synthesis::DiscriminatorNet<double> d(3, 2, 8);
    spread_params(g.params(), 15.0);
    spread_params(d.params(), 15.0);
    const auto y = nn::one_hot<double>(random_labels(Shape{1, 1, 16, 16}, 3, rng), 3);
    auto wrt = all_params(g.params());
    return nn::check_gradients([&] { return synthesis::gan_g_objective(d, y, g.forward(y)); }, wrt,
                               sampled(10, 1e-6));
}

nn::GradCheckResult check_comparator_loss() {
    Rng rng(15);
    failure::ComparatorHyperparams hp;
    hp.width = 2;
    hp.seed = 9;
    const int classes = 3;
    failure::ComparatorNet<double> net(classes, hp);
    const Shape img{2, 3, 8, 8};
    const auto x = random_tensor(img, rng, 0.0, 1.0);
    const auto xh = random_tensor(img, rng, 0.0, 1.0);
    const auto pred = random_labels(Shape{2, 1, 8, 8}, classes, rng);
    Tensor<double> iou_t(Shape{2, classes, 1, 1});
    Tensor<double> mask(Shape{2, classes, 1, 1});
    for (std::size_t i = 0; i < iou_t.size(); ++i) {
        iou_t[i] = rng.uniform();
        mask[i] = i % 4 == 3 ? 0.0 : 1.0;
    }
    Tensor<double> err_t(Shape{2, 1, 8, 8});
    for (auto& v : err_t.values()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    auto wrt = all_params(net.params());
    return nn::check_gradients(
        [&] {
            const auto out = net.forward(x, xh, pred);
            const auto terms = failure::comparator_loss_terms(out.iou, out.error, iou_t, mask, err_t);
            return nn::add(terms.iou_l1, terms.error_bce);
        },
        wrt, sampled(8));
}

}  // namespace synthcp::testing
