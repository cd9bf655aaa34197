#include "synthcp/segmenter.hpp"

#include <cmath>
#include <fstream>

#include "synthcp/errors.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::segmenter {

using nn::Shape;
using nn::Tensor;
using nn::Var;

template <typename T>
SegmenterNet<T>::SegmenterNet(int num_classes, int base_width, std::uint64_t seed)
    : num_classes_(num_classes), base_width_(base_width) {
    if (num_classes < 1 || base_width < 1) throw ConfigError("segmenter: invalid architecture");
    Rng rng(mix_seed(seed, 0x5E6));
    int in = 3;
    for (int lvl = 0; lvl < kLevels; ++lvl) {
        const int out = base_width << lvl;
        const std::string p = "enc" + std::to_string(lvl);
        auto a = nn::make_conv(params_, p + ".conv1", in, out, 3, rng, nn::Init::he(in * 9));
        auto b = nn::make_conv(params_, p + ".conv2", out, out, 3, rng, nn::Init::he(out * 9));
        encoder_.emplace_back(std::move(a), std::move(b));
        in = out;
    }
    for (int lvl = kLevels - 2; lvl >= 0; --lvl) {
        const int skip = base_width << lvl;
        const int cin = in + skip;
        decoder_.push_back(nn::make_conv(params_, "dec" + std::to_string(lvl), cin, skip, 3, rng, nn::Init::he(cin * 9)));
        in = skip;
    }
    classifier_ = nn::make_conv(params_, "classifier", in, num_classes, 1, rng, nn::Init::gan());
}

template <typename T>
typename SegmenterNet<T>::Output SegmenterNet<T>::forward(const Var<T>& images) const {
    const Shape s = images.shape();
    if (s.c != 3) throw ShapeError("segmenter expects 3-channel images, got " + s.str());
    const int div = 1 << (kLevels - 1);
    if (s.h % div != 0 || s.w % div != 0)
        throw ShapeError("segmenter: image dims must be divisible by " + std::to_string(div));
    std::vector<Var<T>> skips;
    Var<T> x = images;
    for (int lvl = 0; lvl < kLevels; ++lvl) {
        if (lvl > 0) x = nn::avg_pool2(x);
        x = nn::relu(encoder_[static_cast<std::size_t>(lvl)].first(x));
        x = nn::relu(encoder_[static_cast<std::size_t>(lvl)].second(x));
        skips.push_back(x);
    }
    std::size_t d = 0;
    for (int lvl = kLevels - 2; lvl >= 0; --lvl, ++d) {
        x = nn::upsample2(x);
        x = nn::concat_channels<T>({x, skips[static_cast<std::size_t>(lvl)]});
        x = nn::relu(decoder_[d](x));
    }
    return Output{classifier_(x), x};
}

template class SegmenterNet<float>;
template class SegmenterNet<double>;

Json SegmenterHyperparams::to_json() const {
    return Json{{"base_width", base_width}, {"steps", steps}, {"batch", batch}, {"lr", lr}, {"seed", seed}};
}

SegmenterHyperparams SegmenterHyperparams::from_json(const Json& j) {
    require_known_keys(j, {"base_width", "steps", "batch", "lr", "seed"}, "segmenter");
    SegmenterHyperparams hp;
    hp.base_width = value_or(j, "base_width", hp.base_width, "segmenter");
    hp.steps = value_or(j, "steps", hp.steps, "segmenter");
    hp.batch = value_or(j, "batch", hp.batch, "segmenter");
    hp.lr = value_or(j, "lr", hp.lr, "segmenter");
    hp.seed = value_or(j, "seed", hp.seed, "segmenter");
    if (hp.base_width < 1 || hp.steps < 0 || hp.batch < 1 || !(hp.lr > 0.0))
        throw ConfigError("segmenter: hyperparameters out of range");
    return hp;
}

SegmenterModel::SegmenterModel(int num_classes, int width, int height, const SegmenterHyperparams& hp)
    : num_classes_(num_classes),
      width_(width),
      height_(height),
      hp_(hp),
      net_(std::make_unique<SegmenterNet<float>>(num_classes, hp.base_width, hp.seed)) {}

Json SegmenterModel::meta() const {
    return Json{{"format", "synthcp-segmenter/1"},
                {"architecture",
                 {{"kind", "unet"},
                  {"levels", SegmenterNet<float>::kLevels},
                  {"base_width", hp_.base_width},
                  {"in_channels", 3},
                  {"feature_channels", hp_.base_width},
                  {"width", width_},
                  {"height", height_}}},
                {"label_space",
                 {{"num_classes", num_classes_},
                  {"background_id", scenegen::LabelSpace::background_id},
                  {"anomaly_id", num_classes_ + 1}}},
                {"training", hp_.to_json()},
                {"param_hash", param_hash()}};
}

Tensor<float> stack_images(const scenegen::Dataset& data, std::span<const int> ids) {
    Tensor<float> out(Shape{static_cast<int>(ids.size()), 3, data.height(), data.width()});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto src = data.images.at(static_cast<std::size_t>(ids[i])).values();
        std::copy(src.begin(), src.end(), out.image(static_cast<int>(i)).begin());
    }
    return out;
}

Tensor<int> stack_labels_zero_based(const scenegen::Dataset& data, std::span<const int> ids) {
    Tensor<int> out(Shape{static_cast<int>(ids.size()), 1, data.height(), data.width()});
    const int classes = data.num_classes();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto src = data.labels.at(static_cast<std::size_t>(ids[i])).values();
        auto dst = out.image(static_cast<int>(i));
        for (std::size_t p = 0; p < src.size(); ++p) {
            if (src[p] < 1 || src[p] > classes)
                throw InputError("segmenter training: label " + std::to_string(src[p]) + " outside 1.." +
                                 std::to_string(classes));
            dst[p] = src[p] - 1;
        }
    }
    return out;
}

namespace {

std::vector<nn::Buffer<float>> snapshot(const nn::ParamStore<float>& store) {
    std::vector<nn::Buffer<float>> out;
    for (const auto& p : store.params()) out.push_back(p.var.value().storage());
    return out;
}

void restore(nn::ParamStore<float>& store, const std::vector<nn::Buffer<float>>& snap) {
    auto& params = store.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto var = params[i].var;
        var.mutable_value().storage() = snap[i];
    }
}

}  // namespace

TrainResult train_segmenter(const scenegen::Dataset& data, std::span<const int> train_ids,
                            const SegmenterHyperparams& hp) {
    if (train_ids.empty()) throw InputError("train_segmenter: no training samples");
    TrainResult result;
    result.model = std::make_unique<SegmenterModel>(data.num_classes(), data.width(), data.height(), hp);
    auto& net = result.model->net();
    nn::Adam<float> adam(net.params(), nn::AdamConfig{hp.lr, 0.9, 0.999, 1e-8});

    Rng rng(mix_seed(hp.seed, 0xDA7A));
    std::vector<int> order(train_ids.begin(), train_ids.end());
    std::size_t cursor = order.size();
    auto last_good = snapshot(net.params());

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
        const Var<float> x(stack_images(data, batch));
        const auto labels = stack_labels_zero_based(data, batch);
        const auto out = net.forward(x);
        const Var<float> loss = nn::softmax_cross_entropy(out.logits, labels);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            restore(net.params(), last_good);
            result.diverged = true;
            break;
        }
        nn::backward(loss);
        adam.step();
        net.params().zero_grad();
        result.loss_curve.push_back(value);
        if ((step + 1) % 50 == 0) last_good = snapshot(net.params());
    }
    return result;
}

void fill_predictions(SegmenterOutput& out) {
    const Shape s = out.scores.shape();
    const auto probs = nn::softmax_channels(out.scores);
    out.pred = Tensor<int>(Shape{s.n, 1, s.h, s.w});
    out.max_prob = Tensor<float>(Shape{s.n, 1, s.h, s.w});
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const float* sc = out.scores.image(n).data();
        const float* pr = probs.image(n).data();
        for (std::size_t i = 0; i < plane; ++i) {
            int best = 0;
            for (int c = 1; c < s.c; ++c)
                if (sc[c * plane + i] > sc[best * plane + i]) best = c;
            out.pred.image(n)[i] = best + 1;
            float mp = pr[i];
            for (int c = 1; c < s.c; ++c) mp = std::max(mp, pr[c * plane + i]);
            out.max_prob.image(n)[i] = mp;
        }
    }
}

SegmenterOutput segment(const SegmenterModel& model, const Tensor<float>& image) {
    const Shape s = image.shape();
    if (s.n != 1 || s.c != 3 || s.h != model.height() || s.w != model.width())
        throw ShapeError("segment: image shape " + s.str() + " does not match model input (1,3," +
                         std::to_string(model.height()) + "," + std::to_string(model.width()) + ")");
    nn::NoGradGuard guard;
    const auto out = model.net().forward(Var<float>(image));
    SegmenterOutput result;
    result.scores = out.logits.value();
    result.features = out.features.value();
    fill_predictions(result);
    return result;
}

namespace {
void confusion_counts(const SegmenterModel& model, const scenegen::Dataset& data, std::span<const int> ids,
                      std::vector<double>& inter, std::vector<double>& uni, double& correct, double& total) {
    const int classes = model.num_classes();
    inter.assign(static_cast<std::size_t>(classes) + 1, 0.0);
    uni.assign(static_cast<std::size_t>(classes) + 1, 0.0);
    correct = total = 0.0;
    for (int id : ids) {
        const auto out = segment(model, data.images.at(static_cast<std::size_t>(id)));
        const auto& gt = data.labels.at(static_cast<std::size_t>(id));
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const int p = out.pred[i];
            const int g = gt[i];
            total += 1.0;
            if (p == g) {
                correct += 1.0;
                inter[static_cast<std::size_t>(p)] += 1.0;
                uni[static_cast<std::size_t>(p)] += 1.0;
            } else {
                uni[static_cast<std::size_t>(p)] += 1.0;
                if (g >= 1 && g <= classes) uni[static_cast<std::size_t>(g)] += 1.0;
            }
        }
    }
}
}  // namespace

double mean_iou(const SegmenterModel& model, const scenegen::Dataset& data, std::span<const int> ids) {
    std::vector<double> inter, uni;
    double correct = 0.0, total = 0.0;
    confusion_counts(model, data, ids, inter, uni, correct, total);
    double sum = 0.0;
    int n = 0;
    for (std::size_t c = 1; c < inter.size(); ++c)
        if (uni[c] > 0.0) {
            sum += inter[c] / uni[c];
            ++n;
        }
    return n ? sum / n : 0.0;
}

double pixel_accuracy(const SegmenterModel& model, const scenegen::Dataset& data, std::span<const int> ids) {
    std::vector<double> inter, uni;
    double correct = 0.0, total = 0.0;
    confusion_counts(model, data, ids, inter, uni, correct, total);
    return total > 0.0 ? correct / total : 0.0;
}

void save_segmenter(const SegmenterModel& model, const std::filesystem::path& dir, const Json& extra_meta) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "params.bin").string());
        model.net().params().save(out);
    }
    Json meta = model.meta();
    if (extra_meta.is_object())
        for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    write_json_atomic(dir / "meta.json", meta);
}

std::unique_ptr<SegmenterModel> load_segmenter(const std::filesystem::path& dir) {
    const Json meta = read_json_file(dir / "meta.json");
    try {
        if (meta.at("format").get<std::string>() != "synthcp-segmenter/1")
            throw IoError(dir.string() + ": not a segmenter checkpoint");
        const auto& arch = meta.at("architecture");
        const auto hp = SegmenterHyperparams::from_json(meta.at("training"));
        auto model = std::make_unique<SegmenterModel>(meta.at("label_space").at("num_classes").get<int>(),
                                                      arch.at("width").get<int>(), arch.at("height").get<int>(), hp);
        std::ifstream in(dir / "params.bin", std::ios::binary);
        if (!in) throw IoError("cannot read " + (dir / "params.bin").string());
        model->net().params().load(in);
        return model;
    } catch (const Json::exception& e) {
        throw IoError(dir.string() + "/meta.json: " + e.what());
    }
}

}  // namespace synthcp::segmenter
