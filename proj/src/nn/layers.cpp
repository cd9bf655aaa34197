#include "synthcp/nn/layers.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

#include "synthcp/errors.hpp"
#include "synthcp/hashing.hpp"

namespace synthcp::nn {

template <typename T>
Var<T> ParamStore<T>::add(const std::string& name, Tensor<T> value) {
    for (const auto& p : params_)
        if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
    Var<T> v(std::move(value), true);
    params_.push_back({name, v});
    return v;
}

template <typename T>
Var<T> ParamStore<T>::normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
    Tensor<T> t(shape);
    for (auto& v : t.values()) v = static_cast<T>(rng.truncated_normal(stddev));
    return add(name, std::move(t));
}

template <typename T>
Var<T> ParamStore<T>::constant(const std::string& name, Shape shape, T value) {
    return add(name, Tensor<T>(shape, value));
}

template <typename T>
std::size_t ParamStore<T>::count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().size();
    return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
    for (auto& p : params_) {
        auto node = p.var.node();
        if (!node->grad.empty()) node->grad.fill(T{0});
    }
}

namespace {
void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated parameter blob");
    return v;
}
constexpr std::uint32_t kBlobMagic = 0x50435953;  // "SYCP"
}  // namespace

template <typename T>
void ParamStore<T>::save(std::ostream& out) const {
    write_u32(out, kBlobMagic);
    write_u32(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& p : params_) {
        write_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const Shape s = p.var.shape();
        for (int d : {s.n, s.c, s.h, s.w}) write_u32(out, static_cast<std::uint32_t>(d));
        for (T v : p.var.value().values()) {
            const float f = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&f), sizeof f);
        }
    }
    if (!out) throw IoError("failed writing parameter blob");
}

template <typename T>
void ParamStore<T>::load(std::istream& in) {
    if (read_u32(in) != kBlobMagic) throw IoError("parameter blob has wrong magic");
    if (read_u32(in) != params_.size()) throw IoError("parameter blob has wrong tensor count");
    for (auto& p : params_) {
        std::string name(read_u32(in), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        if (name != p.name) throw IoError("parameter blob: expected " + p.name + ", found " + name);
        Shape s;
        s.n = static_cast<int>(read_u32(in));
        s.c = static_cast<int>(read_u32(in));
        s.h = static_cast<int>(read_u32(in));
        s.w = static_cast<int>(read_u32(in));
        if (!(s == p.var.shape())) throw IoError("parameter blob: shape mismatch for " + name);
        for (auto& v : p.var.mutable_value().values()) {
            float f = 0;
            in.read(reinterpret_cast<char*>(&f), sizeof f);
            v = static_cast<T>(f);
        }
        if (!in) throw IoError("truncated parameter blob");
    }
}

template <typename T>
template <typename U>
void ParamStore<T>::copy_from(const ParamStore<U>& other) {
    const auto& src = other.params();
    if (src.size() != params_.size()) throw ShapeError("copy_from: layout mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (!(src[i].var.shape() == params_[i].var.shape())) throw ShapeError("copy_from: shape mismatch");
        auto& dst = params_[i].var.mutable_value();
        const auto& s = src[i].var.value();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(s[j]);
    }
}

template <typename T>
std::string ParamStore<T>::hash() const {
    Sha256 h;
    for (const auto& p : params_) {
        h.update(p.name);
        std::vector<float> vals(p.var.value().storage().begin(), p.var.value().storage().end());
        h.update_values(std::span<const float>(vals));
    }
    return h.hex();
}

template <typename T>
Conv<T> make_conv(ParamStore<T>& store, const std::string& name, int in, int out, int kernel, Rng& rng,
                  double stddev, bool with_bias) {
    Conv<T> c;
    c.weight = store.normal(name + ".weight", Shape{out, in, kernel, kernel}, rng, stddev);
    if (with_bias) c.bias = store.constant(name + ".bias", Shape{1, out, 1, 1}, T{0});
    c.pad = kernel / 2;
    return c;
}

template <typename T>
SpadeNorm<T>::SpadeNorm(ParamStore<T>& store, const std::string& prefix, int channels, int label_channels,
                        int hidden, Rng& rng, double stddev)
    : shared_(make_conv(store, prefix + ".shared", label_channels, hidden, 3, rng, stddev)),
      gamma_(make_conv(store, prefix + ".gamma", hidden, channels, 3, rng, stddev)),
      beta_(make_conv(store, prefix + ".beta", hidden, channels, 3, rng, stddev)) {
    // Unit gain at initialisation.
    gamma_.bias.mutable_value().fill(T{1});
}

template <typename T>
Var<T> SpadeNorm<T>::operator()(const Var<T>& features, const Tensor<T>& label_onehot) const {
    const Shape fs = features.shape();
    const Shape ls = label_onehot.shape();
    if (fs.c != channels())
        throw ShapeError("spade_norm: features have " + std::to_string(fs.c) + " channels, expected " +
                         std::to_string(channels()));
    if (ls.c != shared_.in_channels())
        throw ShapeError("spade_norm: label map has " + std::to_string(ls.c) + " channels, expected " +
                         std::to_string(shared_.in_channels()));
    if (ls.n != fs.n) throw ShapeError("spade_norm: batch mismatch");
    Var<T> label(resize_nearest(label_onehot, fs.h, fs.w));
    const Var<T> hidden = relu(shared_(label));
    return add(mul(instance_norm(features, static_cast<T>(kEps)), gamma_(hidden)), beta_(hidden));
}

template <typename T>
Adam<T>::Adam(const ParamStore<T>& store, AdamConfig config) : config_(config) {
    for (const auto& p : store.params()) {
        params_.push_back(p.var);
        m_.emplace_back(p.var.value().size(), T{0});
        v_.emplace_back(p.var.value().size(), T{0});
    }
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const T step = static_cast<T>(config_.lr * std::sqrt(c2) / c1);
    const T eps = static_cast<T>(config_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto node = params_[k].node();
        if (node->grad.empty()) continue;
        auto& val = node->value;
        const auto& g = node->grad;
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = static_cast<T>(b1) * m[i] + static_cast<T>(1 - b1) * g[i];
            v[i] = static_cast<T>(b2) * v[i] + static_cast<T>(1 - b2) * g[i] * g[i];
            val[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
        }
    }
}

template <typename T>
Tensor<T> one_hot(const Tensor<int>& labels, int num_classes) {
    const Shape s = labels.shape();
    if (s.c != 1) throw ShapeError("one_hot expects a single-channel label map");
    Tensor<T> out(Shape{s.n, num_classes, s.h, s.w});
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const int* lab = labels.image(n).data();
        T* dst = out.image(n).data();
        for (std::size_t i = 0; i < plane; ++i) {
            const int l = lab[i];
            if (l < 1 || l > num_classes) throw InputError("one_hot: label id " + std::to_string(l) + " out of range");
            dst[static_cast<std::size_t>(l - 1) * plane + i] = T{1};
        }
    }
    return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template void ParamStore<float>::copy_from(const ParamStore<double>&);
template void ParamStore<double>::copy_from(const ParamStore<float>&);
template void ParamStore<float>::copy_from(const ParamStore<float>&);
template Conv<float> make_conv(ParamStore<float>&, const std::string&, int, int, int, Rng&, double, bool);
template Conv<double> make_conv(ParamStore<double>&, const std::string&, int, int, int, Rng&, double, bool);
template class SpadeNorm<float>;
template class SpadeNorm<double>;
template class Adam<float>;
template class Adam<double>;
template Tensor<float> one_hot(const Tensor<int>&, int);
template Tensor<double> one_hot(const Tensor<int>&, int);

}  // namespace synthcp::nn
