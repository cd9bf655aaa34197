#include "synthcp/failure.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "synthcp/errors.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::failure {

using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {
void require_same_dims(const Tensor<int>& a, const Tensor<int>& b, const char* op) {
    if (!(a.shape() == b.shape()))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}
}  // namespace

IouArray compute_iou(const Tensor<int>& pred, const Tensor<int>& gt, int num_classes) {
    require_same_dims(pred, gt, "compute_iou");
    std::vector<long> inter(static_cast<std::size_t>(num_classes) + 1, 0);
    std::vector<long> uni(static_cast<std::size_t>(num_classes) + 1, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i];
        const int g = gt[i];
        const bool p_in = p >= 1 && p <= num_classes;
        const bool g_in = g >= 1 && g <= num_classes;
        if (p == g) {
            if (p_in) {
                ++inter[static_cast<std::size_t>(p)];
                ++uni[static_cast<std::size_t>(p)];
            }
        } else {
            if (p_in) ++uni[static_cast<std::size_t>(p)];
            if (g_in) ++uni[static_cast<std::size_t>(g)];
        }
    }
    IouArray out(static_cast<std::size_t>(num_classes));
    for (int l = 1; l <= num_classes; ++l)
        if (uni[static_cast<std::size_t>(l)] > 0)
            out[static_cast<std::size_t>(l - 1)] =
                static_cast<double>(inter[static_cast<std::size_t>(l)]) / static_cast<double>(uni[static_cast<std::size_t>(l)]);
    return out;
}

Tensor<int> compute_error_map(const Tensor<int>& pred, const Tensor<int>& gt) {
    require_same_dims(pred, gt, "compute_error_map");
    Tensor<int> out(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] != gt[i] ? 1 : 0;
    return out;
}

FailureTargets compute_targets(const Tensor<int>& pred, const Tensor<int>& gt, int num_classes) {
    return FailureTargets{compute_iou(pred, gt, num_classes), compute_error_map(pred, gt)};
}

std::vector<int> assign_folds(std::span<const int> ids, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold generation needs at least 2 folds");
    if (ids.size() < static_cast<std::size_t>(k)) throw ConfigError("k-fold generation: fewer samples than folds");
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    std::vector<int> folds(ids.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) folds[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return folds;
}

FailureTuple make_tuple(int id, int fold, const Tensor<float>& image, const Tensor<int>& truth,
                        const segmenter::SegmenterModel& seg, const synthesis::GanModel& gan) {
    FailureTuple t;
    t.id = id;
    t.fold = fold;
    t.image = image;
    t.truth = truth;
    const auto out = segmenter::segment(seg, image);
    t.pred = out.pred;
    t.max_prob = out.max_prob;
    t.synth = synthesis::synthesize(gan, t.pred);
    t.targets = compute_targets(t.pred, truth, seg.num_classes());
    return t;
}

KFoldResult kfold_generate(const scenegen::Dataset& data, int k, const segmenter::SegmenterHyperparams& seg_hp,
                           const synthesis::GanModel& gan, const ProgressFn& progress) {
    const auto& ids = data.ids(scenegen::Split::Train);
    const auto folds = assign_folds(ids, k, mix_seed(seg_hp.seed, 0xF01D));
    KFoldResult result;
    result.folds = k;
    for (int f = 0; f < k; ++f) {
        std::vector<int> train_ids;
        std::vector<int> held_out;
        for (std::size_t i = 0; i < ids.size(); ++i) (folds[i] == f ? held_out : train_ids).push_back(ids[i]);
        auto hp = seg_hp;
        hp.seed = mix_seed(seg_hp.seed, static_cast<std::uint64_t>(f) + 1);
        if (progress) progress("fold " + std::to_string(f + 1) + "/" + std::to_string(k) + ": training on " +
                               std::to_string(train_ids.size()) + " samples");
        auto trained = segmenter::train_segmenter(data, train_ids, hp);
        if (trained.diverged) {
            result.warnings.push_back("fold " + std::to_string(f) + ": segmenter training diverged; fold skipped");
            result.segmenter_hashes.emplace_back();
            continue;
        }
        result.segmenter_hashes.push_back(trained.model->param_hash());
        for (int id : held_out)
            result.tuples.push_back(make_tuple(id, f, data.images.at(static_cast<std::size_t>(id)),
                                               data.labels.at(static_cast<std::size_t>(id)), *trained.model, gan));
    }
    std::sort(result.tuples.begin(), result.tuples.end(),
              [](const FailureTuple& a, const FailureTuple& b) { return a.id < b.id; });
    return result;
}

std::string mode_name(Mode m) { return m == Mode::Joint ? "joint" : "separate"; }

Mode mode_from_name(const std::string& s) {
    if (s == "joint") return Mode::Joint;
    if (s == "separate") return Mode::Separate;
    throw ConfigError("unknown comparator mode '" + s + "' (expected joint or separate)");
}

Json ComparatorHyperparams::to_json() const {
    return Json{{"width", width},
                {"steps", steps},
                {"batch", batch},
                {"lr", lr},
                {"mode", mode_name(mode)},
                {"label_encoding", encoding == LabelEncoding::Id ? "id" : "onehot"},
                {"seed", seed}};
}

ComparatorHyperparams ComparatorHyperparams::from_json(const Json& j) {
    require_known_keys(j, {"width", "steps", "batch", "lr", "mode", "label_encoding", "seed"}, "comparator");
    ComparatorHyperparams hp;
    hp.width = value_or(j, "width", hp.width, "comparator");
    hp.steps = value_or(j, "steps", hp.steps, "comparator");
    hp.batch = value_or(j, "batch", hp.batch, "comparator");
    hp.lr = value_or(j, "lr", hp.lr, "comparator");
    hp.mode = mode_from_name(value_or(j, "mode", mode_name(hp.mode), "comparator"));
    const auto enc = value_or(j, "label_encoding", std::string(hp.encoding == LabelEncoding::Id ? "id" : "onehot"), "comparator");
    if (enc == "id") hp.encoding = LabelEncoding::Id;
    else if (enc == "onehot") hp.encoding = LabelEncoding::OneHot;
    else throw ConfigError("comparator.label_encoding must be 'id' or 'onehot'");
    hp.seed = value_or(j, "seed", hp.seed, "comparator");
    if (hp.width < 1 || hp.steps < 0 || hp.batch < 1 || !(hp.lr > 0.0))
        throw ConfigError("comparator: hyperparameters out of range");
    return hp;
}

template <typename T>
SiameseEncoder<T>::SiameseEncoder(nn::ParamStore<T>& store, const std::string& prefix, int in_channels, int width,
                                  Rng& rng)
    : width_(width) {
    stem_ = nn::make_conv(store, prefix + ".stem", in_channels, width, 3, rng, nn::Init::he(in_channels * 9));
    int in = width;
    for (int i = 0; i < 4; ++i) {
        const int out = i == 0 ? width : 2 * width;
        const std::string p = prefix + ".block" + std::to_string(i);
        Block b;
        b.conv1 = nn::make_conv(store, p + ".conv1", in, out, 3, rng, nn::Init::he(in * 9));
        b.conv2 = nn::make_conv(store, p + ".conv2", out, out, 3, rng, nn::Init::he(out * 9));
        if (in != out) {
            b.proj = nn::make_conv(store, p + ".proj", in, out, 1, rng, nn::Init::he(in), false);
            b.has_proj = true;
        }
        blocks_.push_back(std::move(b));
        in = out;
    }
}

template <typename T>
std::vector<Var<T>> SiameseEncoder<T>::operator()(const Var<T>& input) const {
    std::vector<Var<T>> scales;
    Var<T> x = nn::relu(stem_(input));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i > 0) x = nn::avg_pool2(x);
        const auto& b = blocks_[i];
        Var<T> h = b.conv2(nn::relu(b.conv1(x)));
        x = nn::relu(nn::add(h, b.has_proj ? b.proj(x) : x));
        scales.push_back(x);
    }
    return scales;
}

template <typename T>
ComparatorNet<T>::ComparatorNet(int num_classes, const ComparatorHyperparams& hp)
    : num_classes_(num_classes), mode_(hp.mode), encoding_(hp.encoding) {
    Rng rng(mix_seed(hp.seed, 0xC0A7));
    const int w = hp.width;
    const int in_channels = 3 + (encoding_ == LabelEncoding::Id ? 1 : num_classes);
    encoder_iou_ = SiameseEncoder<T>(params_, "enc", in_channels, w, rng);
    if (mode_ == Mode::Separate) encoder_err_ = SiameseEncoder<T>(params_, "enc_err", in_channels, w, rng);
    iou_fc1_ = nn::make_conv(params_, "iou.fc1", 4 * w, 4 * w, 1, rng, nn::Init::he(4 * w));
    iou_fc2_ = nn::make_conv(params_, "iou.fc2", 4 * w, num_classes, 1, rng, nn::Init::gan());
    dec2_ = nn::make_conv(params_, "err.dec2", 8 * w, 2 * w, 3, rng, nn::Init::he(8 * w * 9));
    dec1_ = nn::make_conv(params_, "err.dec1", 6 * w, 2 * w, 3, rng, nn::Init::he(6 * w * 9));
    dec0_ = nn::make_conv(params_, "err.dec0", 4 * w, w, 3, rng, nn::Init::he(4 * w * 9));
    err_out_ = nn::make_conv(params_, "err.out", w, 1, 1, rng, nn::Init::gan());
}

template <typename T>
bool ComparatorNet<T>::is_iou_param(const std::string& name) const {
    return name.rfind("iou.", 0) == 0;
}

template <typename T>
bool ComparatorNet<T>::is_error_param(const std::string& name) const {
    return name.rfind("err.", 0) == 0;
}

template <typename T>
Var<T> ComparatorNet<T>::encode_branch_input(const Tensor<T>& image, const Tensor<int>& pred) const {
    const Shape s = image.shape();
    Tensor<T> labels;
    if (encoding_ == LabelEncoding::Id) {
        labels = Tensor<T>(Shape{s.n, 1, s.h, s.w});
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] < 1 || pred[i] > num_classes_) throw InputError("comparator: predicted label out of range");
            labels[i] = static_cast<T>(pred[i]) / static_cast<T>(num_classes_);
        }
    } else {
        labels = nn::one_hot<T>(pred, num_classes_);
    }
    return nn::concat_channels<T>({Var<T>(image), Var<T>(std::move(labels))});
}

template <typename T>
typename ComparatorNet<T>::Output ComparatorNet<T>::forward(const Tensor<T>& x, const Tensor<T>& x_hat,
                                                            const Tensor<int>& pred) const {
    const Shape s = x.shape();
    if (!(x_hat.shape() == s) || s.c != 3) throw ShapeError("comparator: image shapes differ or are not RGB");
    if (pred.shape().n != s.n || pred.shape().c != 1 || pred.shape().h != s.h || pred.shape().w != s.w)
        throw ShapeError("comparator: prediction map shape " + pred.shape().str() + " vs image " + s.str());
    if (s.h % 8 != 0 || s.w % 8 != 0) throw ShapeError("comparator: image dims must be divisible by 8");

    const Var<T> in_x = encode_branch_input(x, pred);
    const Var<T> in_h = encode_branch_input(x_hat, pred);
    const auto fx = encoder_iou_(in_x);
    const auto fh = encoder_iou_(in_h);
    std::vector<Var<T>> gx = fx;
    std::vector<Var<T>> gh = fh;
    if (mode_ == Mode::Separate) {
        gx = encoder_err_(in_x);
        gh = encoder_err_(in_h);
    }

    Var<T> pooled = nn::global_avg_pool(nn::concat_channels<T>({fx[3], fh[3]}));
    Var<T> iou = nn::sigmoid(iou_fc2_(nn::relu(iou_fc1_(pooled))));

    Var<T> d = nn::concat_channels<T>({gx[3], gh[3]});
    d = nn::relu(dec2_(nn::concat_channels<T>({nn::upsample2(d), gx[2], gh[2]})));
    d = nn::relu(dec1_(nn::concat_channels<T>({nn::upsample2(d), gx[1], gh[1]})));
    d = nn::relu(dec0_(nn::concat_channels<T>({nn::upsample2(d), gx[0], gh[0]})));
    return Output{iou, nn::sigmoid(err_out_(d))};
}

template <typename T>
LossTerms<T> comparator_loss_terms(const Var<T>& iou_pred, const Var<T>& error_prob, const Tensor<T>& iou_target,
                                   const Tensor<T>& iou_mask, const Tensor<T>& error_target) {
    return LossTerms<T>{nn::masked_l1(iou_pred, iou_target, iou_mask),
                        nn::binary_cross_entropy(error_prob, error_target, static_cast<T>(synthesis::kProbEps))};
}

template class SiameseEncoder<float>;
template class SiameseEncoder<double>;
template class ComparatorNet<float>;
template class ComparatorNet<double>;
template LossTerms<float> comparator_loss_terms(const Var<float>&, const Var<float>&, const Tensor<float>&,
                                                const Tensor<float>&, const Tensor<float>&);
template LossTerms<double> comparator_loss_terms(const Var<double>&, const Var<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, const Tensor<double>&);

namespace {

template <typename T>
void fill_targets(const FailureTargets& t, int n, Tensor<T>& iou, Tensor<T>& mask, Tensor<T>& err) {
    const std::size_t classes = t.iou.size();
    for (std::size_t l = 0; l < classes; ++l) {
        iou[static_cast<std::size_t>(n) * classes + l] = t.iou[l] ? static_cast<T>(*t.iou[l]) : T{0};
        mask[static_cast<std::size_t>(n) * classes + l] = t.iou[l] ? T{1} : T{0};
    }
    auto dst = err.image(n);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t.error_map[i]);
}

}  // namespace

double comparator_loss(const FailureConfidence& pred, const FailureTargets& targets) {
    const int classes = static_cast<int>(targets.iou.size());
    if (static_cast<int>(pred.iou_pred.size()) != classes) throw ShapeError("comparator_loss: IoU length mismatch");
    if (pred.error_prob.size() != targets.error_map.size()) throw ShapeError("comparator_loss: error map size mismatch");
    const Shape es{1, 1, targets.error_map.shape().h, targets.error_map.shape().w};
    Tensor<double> iou_t(Shape{1, classes, 1, 1});
    Tensor<double> mask(Shape{1, classes, 1, 1});
    Tensor<double> err_t(es);
    fill_targets(targets, 0, iou_t, mask, err_t);
    Tensor<double> iou_p(Shape{1, classes, 1, 1}, std::vector<double>(pred.iou_pred.begin(), pred.iou_pred.end()));
    Tensor<double> err_p(es, std::vector<double>(pred.error_prob.storage().begin(), pred.error_prob.storage().end()));
    nn::NoGradGuard guard;
    const auto terms = comparator_loss_terms(Var<double>(iou_p), Var<double>(err_p), iou_t, mask, err_t);
    return terms.iou_l1.item() + terms.error_bce.item();
}

ComparatorModel::ComparatorModel(int num_classes, int width, int height, const ComparatorHyperparams& hp)
    : num_classes_(num_classes),
      width_(width),
      height_(height),
      hp_(hp),
      net_(std::make_unique<ComparatorNet<float>>(num_classes, hp)) {}

Json ComparatorModel::meta() const {
    return Json{{"format", "synthcp-comparator/1"},
                {"architecture",
                 {{"kind", "siamese-residual"},
                  {"blocks", 4},
                  {"width", hp_.width},
                  {"mode", mode_name(hp_.mode)},
                  {"fusion", "concat"},
                  {"image_width", width_},
                  {"image_height", height_}}},
                {"label_space", {{"num_classes", num_classes_}, {"background_id", 1}, {"anomaly_id", num_classes_ + 1}}},
                {"training", hp_.to_json()},
                {"param_hash", param_hash()}};
}

ComparatorTrainResult train_comparator(std::span<const FailureTuple> tuples, const ComparatorHyperparams& hp) {
    if (tuples.empty()) throw InputError("train_comparator: no training tuples");
    const Shape is = tuples.front().image.shape();
    const int classes = static_cast<int>(tuples.front().targets.iou.size());
    ComparatorTrainResult result;
    result.model = std::make_unique<ComparatorModel>(classes, is.w, is.h, hp);
    auto& net = result.model->net();
    nn::Adam<float> adam(net.params(), nn::AdamConfig{hp.lr, 0.9, 0.999, 1e-8});

    Rng rng(mix_seed(hp.seed, 0xC0DE));
    std::vector<std::size_t> order(tuples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();
    std::vector<nn::Buffer<float>> last_good;
    auto take_snapshot = [&] {
        last_good.clear();
        for (const auto& p : net.params().params()) last_good.push_back(p.var.value().storage());
    };
    take_snapshot();

    const int batch = std::min<int>(hp.batch, static_cast<int>(tuples.size()));
    for (int step = 0; step < hp.steps; ++step) {
        Tensor<float> x(Shape{batch, 3, is.h, is.w});
        Tensor<float> xh(Shape{batch, 3, is.h, is.w});
        Tensor<int> pred(Shape{batch, 1, is.h, is.w});
        Tensor<float> iou_t(Shape{batch, classes, 1, 1});
        Tensor<float> mask(Shape{batch, classes, 1, 1});
        Tensor<float> err_t(Shape{batch, 1, is.h, is.w});
        for (int b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
                cursor = 0;
            }
            const auto& t = tuples[order[cursor++]];
            std::copy(t.image.storage().begin(), t.image.storage().end(), x.image(b).begin());
            std::copy(t.synth.storage().begin(), t.synth.storage().end(), xh.image(b).begin());
            std::copy(t.pred.storage().begin(), t.pred.storage().end(), pred.image(b).begin());
            fill_targets(t.targets, b, iou_t, mask, err_t);
        }
        const auto out = net.forward(x, xh, pred);
        const auto terms = comparator_loss_terms(out.iou, out.error, iou_t, mask, err_t);
        const Var<float> loss = nn::add(terms.iou_l1, terms.error_bce);
        if (!std::isfinite(loss.item())) {
            auto& params = net.params().params();
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto v = params[i].var;
                v.mutable_value().storage() = last_good[i];
            }
            result.diverged = true;
            break;
        }
        nn::backward(loss);
        adam.step();
        net.params().zero_grad();
        result.loss_curve.push_back(loss.item());
        if ((step + 1) % 50 == 0) take_snapshot();
    }
    return result;
}

FailureConfidence detect_failures(const ComparatorModel& model, const Tensor<float>& x, const Tensor<float>& x_hat,
                                  const Tensor<int>& pred) {
    const Shape s = x.shape();
    if (s.n != 1 || s.h != model.height() || s.w != model.width())
        throw ShapeError("detect_failures: image shape " + s.str() + " does not match the comparator");
    nn::NoGradGuard guard;
    const auto out = model.net().forward(x, x_hat, pred);
    FailureConfidence c;
    c.iou_pred.assign(out.iou.value().storage().begin(), out.iou.value().storage().end());
    c.error_prob = out.error.value();
    return c;
}

double mean_comparator_loss(const ComparatorModel& model, std::span<const FailureTuple> tuples) {
    if (tuples.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& t : tuples) acc += comparator_loss(detect_failures(model, t.image, t.synth, t.pred), t.targets);
    return acc / static_cast<double>(tuples.size());
}

void save_comparator(const ComparatorModel& model, const std::filesystem::path& dir, const Json& extra_meta) {
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

std::unique_ptr<ComparatorModel> load_comparator(const std::filesystem::path& dir) {
    const Json meta = read_json_file(dir / "meta.json");
    try {
        if (meta.at("format").get<std::string>() != "synthcp-comparator/1")
            throw IoError(dir.string() + ": not a comparator checkpoint");
        const auto& arch = meta.at("architecture");
        auto model = std::make_unique<ComparatorModel>(
            meta.at("label_space").at("num_classes").get<int>(), arch.at("image_width").get<int>(),
            arch.at("image_height").get<int>(), ComparatorHyperparams::from_json(meta.at("training")));
        std::ifstream in(dir / "params.bin", std::ios::binary);
        if (!in) throw IoError("cannot read " + (dir / "params.bin").string());
        model->net().params().load(in);
        return model;
    } catch (const Json::exception& e) {
        throw IoError(dir.string() + "/meta.json: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Tuple store

namespace {

constexpr char kTupleMagic[4] = {'S', 'C', 'P', 'T'};
constexpr std::uint32_t kTupleVersion = 1;

template <typename V>
void put(std::ostream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated tuple file");
    return v;
}

template <typename V, typename A>
void put_all(std::ostream& out, const std::vector<V, A>& values) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(V)));
}

template <typename V, typename A>
void get_all(std::istream& in, std::vector<V, A>& values) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(V)));
    if (!in) throw IoError("truncated tuple file");
}

}  // namespace

void write_tuple(const std::filesystem::path& path, const FailureTuple& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const Shape s = t.truth.shape();
    out.write(kTupleMagic, 4);
    put<std::uint32_t>(out, kTupleVersion);
    put<std::int32_t>(out, s.w);
    put<std::int32_t>(out, s.h);
    put<std::int32_t>(out, static_cast<std::int32_t>(t.targets.iou.size()));
    put<std::int32_t>(out, t.id);
    put<std::int32_t>(out, t.fold);
    put_all(out, t.image.storage());
    put_all(out, t.truth.storage());
    put_all(out, t.pred.storage());
    put_all(out, t.synth.storage());
    put_all(out, t.max_prob.storage());
    for (const auto& v : t.targets.iou) {
        put<std::uint8_t>(out, v ? 1 : 0);
        put<double>(out, v.value_or(0.0));
    }
    put_all(out, t.targets.error_map.storage());
    if (!out) throw IoError("failed writing " + path.string());
}

FailureTuple read_tuple(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTupleMagic, 4) != 0) throw IoError(path.string() + ": not a tuple file");
    if (get<std::uint32_t>(in) != kTupleVersion) throw IoError(path.string() + ": unsupported tuple version");
    const int w = get<std::int32_t>(in);
    const int h = get<std::int32_t>(in);
    const int classes = get<std::int32_t>(in);
    FailureTuple t;
    t.id = get<std::int32_t>(in);
    t.fold = get<std::int32_t>(in);
    t.image = Tensor<float>(Shape{1, 3, h, w});
    t.truth = Tensor<int>(Shape{1, 1, h, w});
    t.pred = Tensor<int>(Shape{1, 1, h, w});
    t.synth = Tensor<float>(Shape{1, 3, h, w});
    t.max_prob = Tensor<float>(Shape{1, 1, h, w});
    get_all(in, t.image.storage());
    get_all(in, t.truth.storage());
    get_all(in, t.pred.storage());
    get_all(in, t.synth.storage());
    get_all(in, t.max_prob.storage());
    t.targets.iou.resize(static_cast<std::size_t>(classes));
    for (auto& v : t.targets.iou) {
        const bool defined = get<std::uint8_t>(in) != 0;
        const double value = get<double>(in);
        if (defined) v = value;
    }
    t.targets.error_map = Tensor<int>(Shape{1, 1, h, w});
    get_all(in, t.targets.error_map.storage());
    return t;
}

void write_tuple_store(const std::filesystem::path& dir, const KFoldResult& result, const Json& extra_index) {
    std::filesystem::create_directories(dir / "tuples");
    Json entries = Json::array();
    for (const auto& t : result.tuples) {
        char name[32];
        std::snprintf(name, sizeof name, "tuples/%06d.bin", t.id);
        write_tuple(dir / name, t);
        entries.push_back({{"id", t.id}, {"fold", t.fold}, {"file", name}});
    }
    Json index{{"version", "synthcp-tuples/1"},
               {"folds", result.folds},
               {"count", result.tuples.size()},
               {"entries", entries},
               {"warnings", result.warnings},
               {"segmenter_hashes", result.segmenter_hashes}};
    if (extra_index.is_object())
        for (auto it = extra_index.begin(); it != extra_index.end(); ++it) index[it.key()] = it.value();
    write_json_atomic(dir / "index.json", index);
}

std::vector<FailureTuple> read_tuple_store(const std::filesystem::path& dir) {
    const Json index = read_json_file(dir / "index.json");
    std::vector<FailureTuple> out;
    try {
        if (index.at("version").get<std::string>() != "synthcp-tuples/1") throw IoError("unsupported tuple store");
        for (const auto& e : index.at("entries")) out.push_back(read_tuple(dir / e.at("file").get<std::string>()));
    } catch (const Json::exception& e) {
        throw IoError((dir / "index.json").string() + ": " + e.what());
    }
    return out;
}

}  // namespace synthcp::failure
