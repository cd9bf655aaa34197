#include "synthcp/synthesis.hpp"

#include <cmath>
#include <fstream>

#include "synthcp/errors.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::synthesis {

using nn::Shape;
using nn::Tensor;
using nn::Var;

Json GanHyperparams::to_json() const {
    return Json{{"base_channels", base_channels}, {"spade_hidden", spade_hidden}, {"steps", steps},
                {"batch", batch},                 {"lr", lr},                     {"beta1", beta1},
                {"l1_weight", l1_weight},         {"seed", seed}};
}

GanHyperparams GanHyperparams::from_json(const Json& j) {
    require_known_keys(j, {"base_channels", "spade_hidden", "steps", "batch", "lr", "beta1", "l1_weight", "seed"},
                       "gan");
    GanHyperparams hp;
    hp.base_channels = value_or(j, "base_channels", hp.base_channels, "gan");
    hp.spade_hidden = value_or(j, "spade_hidden", hp.spade_hidden, "gan");
    hp.steps = value_or(j, "steps", hp.steps, "gan");
    hp.batch = value_or(j, "batch", hp.batch, "gan");
    hp.lr = value_or(j, "lr", hp.lr, "gan");
    hp.beta1 = value_or(j, "beta1", hp.beta1, "gan");
    hp.l1_weight = value_or(j, "l1_weight", hp.l1_weight, "gan");
    hp.seed = value_or(j, "seed", hp.seed, "gan");
    if (hp.base_channels < 1 || hp.spade_hidden < 1 || hp.steps < 0 || hp.batch < 1 || !(hp.lr > 0.0) ||
        hp.l1_weight < 0.0)
        throw ConfigError("gan: hyperparameters out of range");
    return hp;
}

template <typename T>
GeneratorNet<T>::GeneratorNet(int num_classes, int width, int height, int base_channels, int spade_hidden,
                              std::uint64_t seed)
    : num_classes_(num_classes), width_(width), height_(height) {
    const int div = 1 << kBlocks;
    if (width % div != 0 || height % div != 0)
        throw ConfigError("generator: image dims must be divisible by " + std::to_string(div));
    Rng rng(mix_seed(seed, 0x6E4));
    const double sd = nn::Init::gan();
    const int b = base_channels;
    const int channels[kBlocks + 1] = {4 * b, 4 * b, 2 * b, b, b};
    seed_ = params_.normal("seed", Shape{1, channels[0], height / div, width / div}, rng, 1.0);
    for (int i = 0; i < kBlocks; ++i) {
        const std::string p = "block" + std::to_string(i);
        norms_.emplace_back(params_, p + ".spade", channels[i], num_classes, spade_hidden, rng, sd);
        convs_.push_back(nn::make_conv(params_, p + ".conv", channels[i], channels[i + 1], 3, rng, sd));
    }
    out_norm_ = nn::SpadeNorm<T>(params_, "out.spade", channels[kBlocks], num_classes, spade_hidden, rng, sd);
    out_conv_ = nn::make_conv(params_, "out.conv", channels[kBlocks], 3, 3, rng, sd);
}

template <typename T>
Var<T> GeneratorNet<T>::forward(const Tensor<T>& label_onehot) const {
    const Shape ls = label_onehot.shape();
    if (ls.c != num_classes_ || ls.h != height_ || ls.w != width_)
        throw ShapeError("generator: label map shape " + ls.str() + " does not match the generator");
    Var<T> x = nn::repeat_batch(seed_, ls.n);
    for (int i = 0; i < kBlocks; ++i) {
        x = nn::upsample2(x);
        x = norms_[static_cast<std::size_t>(i)](x, label_onehot);
        x = nn::leaky_relu(x, T(0.2));
        x = convs_[static_cast<std::size_t>(i)](x);
    }
    x = nn::leaky_relu(out_norm_(x, label_onehot), T(0.2));
    return nn::sigmoid(out_conv_(x));
}

template <typename T>
DiscriminatorNet<T>::DiscriminatorNet(int num_classes, int base_channels, std::uint64_t seed)
    : num_classes_(num_classes) {
    Rng rng(mix_seed(seed, 0xD15C));
    const double sd = nn::Init::gan();
    c1_ = nn::make_conv(params_, "conv1", num_classes + 3, 2 * base_channels, 3, rng, sd);
    c2_ = nn::make_conv(params_, "conv2", 2 * base_channels, 4 * base_channels, 3, rng, sd);
    c3_ = nn::make_conv(params_, "conv3", 4 * base_channels, 1, 3, rng, sd);
}

template <typename T>
Var<T> DiscriminatorNet<T>::forward(const Tensor<T>& label_onehot, const Var<T>& image) const {
    if (label_onehot.shape().c != num_classes_) throw ShapeError("discriminator: label channel mismatch");
    Var<T> x = nn::concat_channels<T>({Var<T>(label_onehot), image});
    x = nn::avg_pool2(nn::leaky_relu(c1_(x), T(0.2)));
    x = nn::avg_pool2(nn::leaky_relu(c2_(x), T(0.2)));
    return nn::sigmoid(c3_(x));
}

template <typename T>
Var<T> gan_d_objective(const DiscriminatorNet<T>& d, const Tensor<T>& y, const Var<T>& x, const Var<T>& x_fake) {
    const T eps = static_cast<T>(kProbEps);
    return nn::add(nn::mean_log(d.forward(y, x), eps), nn::mean_log1m(d.forward(y, x_fake), eps));
}

template <typename T>
Var<T> gan_g_objective(const DiscriminatorNet<T>& d, const Tensor<T>& y, const Var<T>& x_fake) {
    return nn::scale(nn::mean_log(d.forward(y, x_fake), static_cast<T>(kProbEps)), T(-1));
}

template class GeneratorNet<float>;
template class GeneratorNet<double>;
template class DiscriminatorNet<float>;
template class DiscriminatorNet<double>;
template Var<float> gan_d_objective(const DiscriminatorNet<float>&, const Tensor<float>&, const Var<float>&,
                                    const Var<float>&);
template Var<double> gan_d_objective(const DiscriminatorNet<double>&, const Tensor<double>&, const Var<double>&,
                                     const Var<double>&);
template Var<float> gan_g_objective(const DiscriminatorNet<float>&, const Tensor<float>&, const Var<float>&);
template Var<double> gan_g_objective(const DiscriminatorNet<double>&, const Tensor<double>&, const Var<double>&);

GanModel::GanModel(int num_classes, int width, int height, const GanHyperparams& hp)
    : num_classes_(num_classes),
      width_(width),
      height_(height),
      hp_(hp),
      g_(std::make_unique<GeneratorNet<float>>(num_classes, width, height, hp.base_channels, hp.spade_hidden,
                                               hp.seed)),
      d_(std::make_unique<DiscriminatorNet<float>>(num_classes, hp.base_channels, hp.seed)) {}

Json GanModel::meta() const {
    return Json{{"format", "synthcp-gan/1"},
                {"architecture",
                 {{"generator", {{"kind", "spade-latent-free"},
                                 {"blocks", GeneratorNet<float>::kBlocks},
                                 {"base_channels", hp_.base_channels},
                                 {"spade_hidden", hp_.spade_hidden}}},
                  {"discriminator", {{"kind", "patch"}, {"base_channels", hp_.base_channels}}},
                  {"width", width_},
                  {"height", height_}}},
                {"label_space",
                 {{"num_classes", num_classes_},
                  {"background_id", scenegen::LabelSpace::background_id},
                  {"anomaly_id", num_classes_ + 1}}},
                {"training", hp_.to_json()},
                {"generator_hash", generator_hash()},
                {"discriminator_hash", d_->params().hash()}};
}

namespace {

Tensor<float> stack_onehot(const scenegen::Dataset& data, std::span<const int> ids) {
    const int classes = data.num_classes();
    Tensor<int> labels(Shape{static_cast<int>(ids.size()), 1, data.height(), data.width()});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto src = data.labels.at(static_cast<std::size_t>(ids[i])).values();
        std::copy(src.begin(), src.end(), labels.image(static_cast<int>(i)).begin());
    }
    return nn::one_hot<float>(labels, classes);
}

Tensor<float> stack_images(const scenegen::Dataset& data, std::span<const int> ids) {
    Tensor<float> out(Shape{static_cast<int>(ids.size()), 3, data.height(), data.width()});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto src = data.images.at(static_cast<std::size_t>(ids[i])).values();
        std::copy(src.begin(), src.end(), out.image(static_cast<int>(i)).begin());
    }
    return out;
}

}  // namespace

GanTrainResult train_gan(const scenegen::Dataset& data, std::span<const int> train_ids, const GanHyperparams& hp) {
    if (train_ids.empty()) throw InputError("train_gan: no training samples");
    GanTrainResult result;
    result.model = std::make_unique<GanModel>(data.num_classes(), data.width(), data.height(), hp);
    auto& g = result.model->generator();
    auto& d = result.model->discriminator();
    const nn::AdamConfig cfg{hp.lr, hp.beta1, 0.999, 1e-8};
    nn::Adam<float> opt_g(g.params(), cfg);
    nn::Adam<float> opt_d(d.params(), cfg);

    Rng rng(mix_seed(hp.seed, 0x6A4));
    std::vector<int> order(train_ids.begin(), train_ids.end());
    std::size_t cursor = order.size();
    int high_streak = 0;
    std::vector<int> batch;

    for (int step = 0; step < hp.steps; ++step) {
        batch.clear();
        while (static_cast<int>(batch.size()) < hp.batch) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        const Tensor<float> y = stack_onehot(data, batch);
        const Tensor<float> xs = stack_images(data, batch);
        const Var<float> x(xs);
        const Var<float> fake = g.forward(y);

        // Discriminator ascent on the objective.
        const Var<float> d_obj = gan_d_objective(d, y, x, Var<float>(fake.value()));
        nn::backward(nn::scale(d_obj, -1.0f));
        opt_d.step();
        d.params().zero_grad();

        // Generator descent with the discriminator held fixed.
        const Var<float> g_obj = gan_g_objective(d, y, fake);
        const Var<float> l1 = nn::masked_l1(fake, xs, Tensor<float>(xs.shape(), 1.0f));
        const Var<float> g_loss = hp.l1_weight > 0.0 ? nn::add(g_obj, nn::scale(l1, static_cast<float>(hp.l1_weight)))
                                                     : g_obj;
        if (!std::isfinite(g_loss.item()) || !std::isfinite(d_obj.item()))
            throw NumericalError("train_gan: non-finite objective at step " + std::to_string(step));
        nn::backward(g_loss);
        opt_g.step();
        g.params().zero_grad();
        d.params().zero_grad();

        result.d_objective.push_back(d_obj.item());
        result.g_objective.push_back(g_obj.item());
        result.l1.push_back(l1.item());
        high_streak = g_obj.item() > 10.0 ? high_streak + 1 : 0;
        if (high_streak >= 500) result.collapse_warning = true;
    }
    return result;
}

Tensor<float> synthesize(const GeneratorNet<float>& g, int width, int height, const Tensor<int>& label) {
    const Shape s = label.shape();
    if (s.c != 1 || s.h != height || s.w != width)
        throw ShapeError("synthesize: label map shape " + s.str() + " does not match the generator");
    for (int v : label.values())
        if (v < 1 || v > g.num_classes())
            throw InputError("synthesize: label id " + std::to_string(v) + " outside the in-distribution range 1.." +
                             std::to_string(g.num_classes()));
    nn::NoGradGuard guard;
    return g.forward(nn::one_hot<float>(label, g.num_classes())).value();
}

Tensor<float> synthesize(const GanModel& model, const Tensor<int>& label) {
    return synthesize(model.generator(), model.width(), model.height(), label);
}

void save_gan(const GanModel& model, const std::filesystem::path& dir, const Json& extra_meta) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "generator.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "generator.bin").string());
        model.generator().params().save(out);
    }
    {
        std::ofstream out(dir / "discriminator.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "discriminator.bin").string());
        model.discriminator().params().save(out);
    }
    Json meta = model.meta();
    if (extra_meta.is_object())
        for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    write_json_atomic(dir / "meta.json", meta);
}

std::unique_ptr<GanModel> load_gan(const std::filesystem::path& dir) {
    const Json meta = read_json_file(dir / "meta.json");
    try {
        if (meta.at("format").get<std::string>() != "synthcp-gan/1") throw IoError(dir.string() + ": not a GAN checkpoint");
        const auto& arch = meta.at("architecture");
        auto model = std::make_unique<GanModel>(meta.at("label_space").at("num_classes").get<int>(),
                                                arch.at("width").get<int>(), arch.at("height").get<int>(),
                                                GanHyperparams::from_json(meta.at("training")));
        std::ifstream g(dir / "generator.bin", std::ios::binary);
        std::ifstream d(dir / "discriminator.bin", std::ios::binary);
        if (!g || !d) throw IoError("missing GAN parameter blobs in " + dir.string());
        model->generator().params().load(g);
        model->discriminator().params().load(d);
        return model;
    } catch (const Json::exception& e) {
        throw IoError(dir.string() + "/meta.json: " + e.what());
    }
}

}  // namespace synthcp::synthesis
