#include "synthcp/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "synthcp/errors.hpp"

namespace synthcp::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
void im2col(const T* src, int channels, int h, int w, int k, int pad, int ho, int wo, T* col) {
    const std::size_t p = static_cast<std::size_t>(ho) * wo;
    for (int c = 0; c < channels; ++c) {
        const T* plane = src + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * p;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy + ky - pad;
                    T* row = dst + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(row, row + wo, T{0});
                        continue;
                    }
                    const T* in = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox + kx - pad;
                        row[ox] = (ix >= 0 && ix < w) ? in[ix] : T{0};
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, int k, int pad, int ho, int wo, T* dst) {
    const std::size_t p = static_cast<std::size_t>(ho) * wo;
    for (int c = 0; c < channels; ++c) {
        T* plane = dst + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * p;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* out = plane + static_cast<std::size_t>(iy) * w;
                    const T* row = src + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox + kx - pad;
                        if (ix >= 0 && ix < w) out[ix] += row[ox];
                    }
                }
            }
        }
    }
}

template <typename T, typename F, typename G>
Var<T> unary(const Var<T>& x, F forward, G derivative) {
    Tensor<T> out(x.shape());
    const auto& in = x.value();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
    return make_result<T>(std::move(out), {x}, [derivative](Node<T>& self) {
        auto& src = *self.inputs[0];
        if (!src.requires_grad) return;
        auto& g = src.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * derivative(src.value[i], self.value[i]);
    });
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.c != xs.c) throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                                       std::to_string(ws.c));
    if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square");
    if (bias.defined() && bias.shape().size() != static_cast<std::size_t>(ws.n))
        throw ShapeError("conv2d: bias size mismatch");
    const int k = ws.h;
    const int ho = xs.h + 2 * pad - k + 1;
    const int wo = xs.w + 2 * pad - k + 1;
    if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");

    const int kdim = xs.c * k * k;
    const int p = ho * wo;
    const bool direct = (k == 1 && pad == 0);
    auto cols = std::make_shared<Buffer<T>>();
    if (!direct) cols->resize(static_cast<std::size_t>(xs.n) * kdim * p);

    Tensor<T> out(Shape{xs.n, ws.n, ho, wo});
    ConstMatMap<T> wmat(weight.value().data(), ws.n, kdim);
    for (int n = 0; n < xs.n; ++n) {
        const T* colp = nullptr;
        if (direct) {
            colp = x.value().image(n).data();
        } else {
            T* dst = cols->data() + static_cast<std::size_t>(n) * kdim * p;
            im2col(x.value().image(n).data(), xs.c, xs.h, xs.w, k, pad, ho, wo, dst);
            colp = dst;
        }
        MatMap<T> omat(out.image(n).data(), ws.n, p);
        omat.noalias() = wmat * ConstMatMap<T>(colp, kdim, p);
        if (bias.defined()) {
            const T* b = bias.value().data();
            for (int o = 0; o < ws.n; ++o) omat.row(o).array() += b[o];
        }
    }

    std::vector<Var<T>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    const bool has_bias = bias.defined();
    return make_result<T>(std::move(out), std::move(inputs), [=](Node<T>& self) {
        auto& xin = *self.inputs[0];
        auto& win = *self.inputs[1];
        ConstMatMap<T> wmat(win.value.data(), ws.n, kdim);
        RowMat<T> dcol;
        for (int n = 0; n < xs.n; ++n) {
            const T* colp = direct ? xin.value.image(n).data() : cols->data() + static_cast<std::size_t>(n) * kdim * p;
            ConstMatMap<T> cmat(colp, kdim, p);
            ConstMatMap<T> gout(self.grad.image(n).data(), ws.n, p);
            if (win.requires_grad) {
                MatMap<T> gw(win.ensure_grad().data(), ws.n, kdim);
                gw.noalias() += gout * cmat.transpose();
            }
            if (has_bias && self.inputs[2]->requires_grad) {
                T* gb = self.inputs[2]->ensure_grad().data();
                for (int o = 0; o < ws.n; ++o) gb[o] += gout.row(o).sum();
            }
            if (xin.requires_grad) {
                T* gx = xin.ensure_grad().image(n).data();
                if (direct) {
                    MatMap<T> gxm(gx, kdim, p);
                    gxm.noalias() += wmat.transpose() * gout;
                } else {
                    dcol.noalias() = wmat.transpose() * gout;
                    col2im_add(dcol.data(), xs.c, xs.h, xs.w, k, pad, ho, wo, gx);
                }
            }
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            auto& g = in->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) {
            auto& g = na.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
        }
        if (nb.requires_grad) {
            auto& g = nb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    return unary<T>(a, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    return unary<T>(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    return unary<T>(
        x, [slope](T v) { return v > T{0} ? v : v * slope; }, [slope](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    return unary<T>(
        x,
        [](T v) {
            if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
            const T e = std::exp(v);
            return e / (T{1} + e);
        },
        [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avg_pool2: spatial dims must be even, got " + s.str());
    const Shape os{s.n, s.c, s.h / 2, s.w / 2};
    Tensor<T> out(os);
    const auto& in = x.value();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int xx = 0; xx < os.w; ++xx)
                    out.at(n, c, y, xx) = T(0.25) * (in.at(n, c, 2 * y, 2 * xx) + in.at(n, c, 2 * y, 2 * xx + 1) +
                                                      in.at(n, c, 2 * y + 1, 2 * xx) + in.at(n, c, 2 * y + 1, 2 * xx + 1));
    return make_result<T>(std::move(out), {x}, [os](Node<T>& self) {
        auto& src = *self.inputs[0];
        auto& g = src.ensure_grad();
        for (int n = 0; n < os.n; ++n)
            for (int c = 0; c < os.c; ++c)
                for (int y = 0; y < os.h; ++y)
                    for (int xx = 0; xx < os.w; ++xx) {
                        const T v = T(0.25) * self.grad.at(n, c, y, xx);
                        g.at(n, c, 2 * y, 2 * xx) += v;
                        g.at(n, c, 2 * y, 2 * xx + 1) += v;
                        g.at(n, c, 2 * y + 1, 2 * xx) += v;
                        g.at(n, c, 2 * y + 1, 2 * xx + 1) += v;
                    }
    });
}

template <typename T>
Var<T> upsample2(const Var<T>& x) {
    const Shape s = x.shape();
    const Shape os{s.n, s.c, s.h * 2, s.w * 2};
    Tensor<T> out(os);
    const auto& in = x.value();
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int xx = 0; xx < os.w; ++xx) out.at(n, c, y, xx) = in.at(n, c, y / 2, xx / 2);
    return make_result<T>(std::move(out), {x}, [os](Node<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (int n = 0; n < os.n; ++n)
            for (int c = 0; c < os.c; ++c)
                for (int y = 0; y < os.h; ++y)
                    for (int xx = 0; xx < os.w; ++xx) g.at(n, c, y / 2, xx / 2) += self.grad.at(n, c, y, xx);
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape first = parts.front().shape();
    int channels = 0;
    for (const auto& p : parts) {
        const Shape s = p.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w)
            throw ShapeError("concat_channels: mismatch " + s.str() + " vs " + first.str());
        channels += s.c;
    }
    Tensor<T> out(Shape{first.n, channels, first.h, first.w});
    const std::size_t plane = first.plane();
    for (int n = 0; n < first.n; ++n) {
        T* dst = out.image(n).data();
        for (const auto& p : parts) {
            const auto src = p.value().image(n);
            std::copy(src.begin(), src.end(), dst);
            dst += src.size();
        }
    }
    return make_result<T>(std::move(out), parts, [plane](Node<T>& self) {
        const int batch = self.value.shape().n;
        for (int n = 0; n < batch; ++n) {
            const T* src = self.grad.image(n).data();
            for (auto& in : self.inputs) {
                const std::size_t len = static_cast<std::size_t>(in->value.shape().c) * plane;
                if (in->requires_grad) {
                    T* g = in->ensure_grad().image(n).data();
                    for (std::size_t i = 0; i < len; ++i) g[i] += src[i];
                }
                src += len;
            }
        }
    });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, T eps) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    Tensor<T> out(s);
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(s.n) * s.c);
    const auto& in = x.value();
    for (std::size_t nc = 0; nc < inv_std->size(); ++nc) {
        const T* src = in.data() + nc * plane;
        T mean{0};
        for (std::size_t i = 0; i < plane; ++i) mean += src[i];
        mean /= static_cast<T>(plane);
        T var{0};
        for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<T>(plane);
        const T is = T{1} / std::sqrt(var + eps);
        (*inv_std)[nc] = is;
        T* dst = out.data() + nc * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mean) * is;
    }
    return make_result<T>(std::move(out), {x}, [inv_std, plane](Node<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const T count = static_cast<T>(plane);
        for (std::size_t nc = 0; nc < inv_std->size(); ++nc) {
            const T* dy = self.grad.data() + nc * plane;
            const T* xhat = self.value.data() + nc * plane;
            T mean_dy{0};
            T mean_dy_xhat{0};
            for (std::size_t i = 0; i < plane; ++i) {
                mean_dy += dy[i];
                mean_dy_xhat += dy[i] * xhat[i];
            }
            mean_dy /= count;
            mean_dy_xhat /= count;
            T* dx = g.data() + nc * plane;
            const T is = (*inv_std)[nc];
            for (std::size_t i = 0; i < plane; ++i) dx[i] += is * (dy[i] - mean_dy - xhat[i] * mean_dy_xhat);
        }
    });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    for (std::size_t nc = 0; nc < out.size(); ++nc) {
        const T* src = x.value().data() + nc * plane;
        T acc{0};
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
        out[nc] = acc / static_cast<T>(plane);
    }
    return make_result<T>(std::move(out), {x}, [plane](Node<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t nc = 0; nc < self.grad.size(); ++nc) {
            const T v = self.grad[nc] / static_cast<T>(plane);
            T* dst = g.data() + nc * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
        }
    });
}

template <typename T>
Var<T> repeat_batch(const Var<T>& x, int n) {
    const Shape s = x.shape();
    if (s.n != 1) throw ShapeError("repeat_batch expects batch size 1");
    Tensor<T> out(Shape{n, s.c, s.h, s.w});
    for (int i = 0; i < n; ++i) std::copy(x.value().storage().begin(), x.value().storage().end(), out.image(i).begin());
    return make_result<T>(std::move(out), {x}, [n](Node<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (int i = 0; i < n; ++i) {
            const auto src = self.grad.image(i);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += src[j];
        }
    });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    T acc{0};
    for (T v : x.value().values()) acc += v;
    return make_result<T>(Tensor<T>(Shape{}, acc), {x}, [](Node<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    return scale(sum_all(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
    const Shape s = logits.shape();
    const std::size_t plane = s.plane();
    Tensor<T> out(s);
    for (int n = 0; n < s.n; ++n) {
        const T* src = logits.image(n).data();
        T* dst = out.image(n).data();
        for (std::size_t i = 0; i < plane; ++i) {
            T mx = src[i];
            for (int c = 1; c < s.c; ++c) mx = std::max(mx, src[c * plane + i]);
            T z{0};
            for (int c = 0; c < s.c; ++c) {
                const T e = std::exp(src[c * plane + i] - mx);
                dst[c * plane + i] = e;
                z += e;
            }
            for (int c = 0; c < s.c; ++c) dst[c * plane + i] /= z;
        }
    }
    return out;
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const Tensor<int>& labels) {
    const Shape s = logits.shape();
    const Shape ls = labels.shape();
    if (ls.n != s.n || ls.c != 1 || ls.h != s.h || ls.w != s.w)
        throw ShapeError("softmax_cross_entropy: label shape " + ls.str() + " vs logits " + s.str());
    const std::size_t plane = s.plane();
    auto probs = std::make_shared<Tensor<T>>(softmax_channels(logits.value()));
    T loss{0};
    for (int n = 0; n < s.n; ++n) {
        const T* src = logits.value().image(n).data();
        const int* lab = labels.image(n).data();
        for (std::size_t i = 0; i < plane; ++i) {
            const int l = lab[i];
            if (l < 0 || l >= s.c) throw InputError("softmax_cross_entropy: label out of range");
            T mx = src[i];
            for (int c = 1; c < s.c; ++c) mx = std::max(mx, src[c * plane + i]);
            T z{0};
            for (int c = 0; c < s.c; ++c) z += std::exp(src[c * plane + i] - mx);
            loss += std::log(z) + mx - src[l * plane + i];
        }
    }
    const T count = static_cast<T>(static_cast<std::size_t>(s.n) * plane);
    auto lab = std::make_shared<Tensor<int>>(labels);
    return make_result<T>(Tensor<T>(Shape{}, loss / count), {logits}, [probs, lab, plane, count](Node<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const T scale = self.grad[0] / count;
        const Shape s = g.shape();
        for (int n = 0; n < s.n; ++n) {
            const T* p = probs->image(n).data();
            const int* l = lab->image(n).data();
            T* dst = g.image(n).data();
            for (int c = 0; c < s.c; ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    dst[c * plane + i] += scale * (p[c * plane + i] - (l[i] == c ? T{1} : T{0}));
        }
    });
}

template <typename T>
Var<T> binary_cross_entropy(const Var<T>& prob, const Tensor<T>& target, T eps) {
    require_same(prob.shape(), target.shape(), "binary_cross_entropy");
    const auto& p = prob.value();
    T loss{0};
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T pc = std::clamp(p[i], eps, T{1} - eps);
        loss -= target[i] * std::log(pc) + (T{1} - target[i]) * std::log(T{1} - pc);
    }
    const T count = static_cast<T>(p.size());
    auto tgt = std::make_shared<Tensor<T>>(target);
    return make_result<T>(Tensor<T>(Shape{}, loss / count), {prob}, [tgt, eps, count](Node<T>& self) {
        auto& src = *self.inputs[0];
        auto& g = src.ensure_grad();
        const T scale = self.grad[0] / count;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = src.value[i];
            if (v <= eps || v >= T{1} - eps) continue;
            const T t = (*tgt)[i];
            g[i] += scale * (-t / v + (T{1} - t) / (T{1} - v));
        }
    });
}

template <typename T>
Var<T> masked_l1(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
    require_same(pred.shape(), target.shape(), "masked_l1");
    require_same(pred.shape(), mask.shape(), "masked_l1");
    T loss{0};
    T count{0};
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (mask[i] == T{0}) continue;
        loss += std::abs(pred.value()[i] - target[i]);
        count += T{1};
    }
    const T denom = count > T{0} ? count : T{1};
    auto tgt = std::make_shared<Tensor<T>>(target);
    auto msk = std::make_shared<Tensor<T>>(mask);
    return make_result<T>(Tensor<T>(Shape{}, loss / denom), {pred}, [tgt, msk, denom](Node<T>& self) {
        auto& src = *self.inputs[0];
        auto& g = src.ensure_grad();
        const T scale = self.grad[0] / denom;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if ((*msk)[i] == T{0}) continue;
            const T d = src.value[i] - (*tgt)[i];
            if (d > T{0}) g[i] += scale;
            else if (d < T{0}) g[i] -= scale;
        }
    });
}

template <typename T>
Var<T> mean_log(const Var<T>& p, T eps) {
    T acc{0};
    for (T v : p.value().values()) acc += std::log(std::max(v, eps));
    const T count = static_cast<T>(p.value().size());
    return make_result<T>(Tensor<T>(Shape{}, acc / count), {p}, [eps, count](Node<T>& self) {
        auto& src = *self.inputs[0];
        auto& g = src.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (src.value[i] > eps) g[i] += self.grad[0] / (count * src.value[i]);
    });
}

template <typename T>
Var<T> mean_log1m(const Var<T>& p, T eps) {
    T acc{0};
    for (T v : p.value().values()) acc += std::log(std::max(T{1} - v, eps));
    const T count = static_cast<T>(p.value().size());
    return make_result<T>(Tensor<T>(Shape{}, acc / count), {p}, [eps, count](Node<T>& self) {
        auto& src = *self.inputs[0];
        auto& g = src.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (T{1} - src.value[i] > eps) g[i] -= self.grad[0] / (count * (T{1} - src.value[i]));
    });
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, int h, int w) {
    const Shape s = x.shape();
    if (s.h == h && s.w == w) return x;
    Tensor<T> out(Shape{s.n, s.c, h, w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < h; ++y) {
                const int sy = static_cast<int>((static_cast<long>(y) * s.h) / h);
                for (int xx = 0; xx < w; ++xx) {
                    const int sx = static_cast<int>((static_cast<long>(xx) * s.w) / w);
                    out.at(n, c, y, xx) = x.at(n, c, sy, sx);
                }
            }
    return out;
}

#define SYNTHCP_INSTANTIATE_OPS(T)                                                               \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int);                    \
    template Var<T> add(const Var<T>&, const Var<T>&);                                           \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                           \
    template Var<T> scale(const Var<T>&, T);                                                     \
    template Var<T> relu(const Var<T>&);                                                         \
    template Var<T> leaky_relu(const Var<T>&, T);                                                \
    template Var<T> sigmoid(const Var<T>&);                                                      \
    template Var<T> avg_pool2(const Var<T>&);                                                    \
    template Var<T> upsample2(const Var<T>&);                                                    \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                                 \
    template Var<T> instance_norm(const Var<T>&, T);                                             \
    template Var<T> global_avg_pool(const Var<T>&);                                              \
    template Var<T> repeat_batch(const Var<T>&, int);                                            \
    template Var<T> sum_all(const Var<T>&);                                                      \
    template Var<T> mean_all(const Var<T>&);                                                     \
    template Var<T> softmax_cross_entropy(const Var<T>&, const Tensor<int>&);                    \
    template Var<T> binary_cross_entropy(const Var<T>&, const Tensor<T>&, T);                    \
    template Var<T> masked_l1(const Var<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Var<T> mean_log(const Var<T>&, T);                                                  \
    template Var<T> mean_log1m(const Var<T>&, T);                                                \
    template Tensor<T> softmax_channels(const Tensor<T>&);                                       \
    template Tensor<T> resize_nearest(const Tensor<T>&, int, int);

SYNTHCP_INSTANTIATE_OPS(float)
SYNTHCP_INSTANTIATE_OPS(double)

}  // namespace synthcp::nn
