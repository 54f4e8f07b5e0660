#include "supermask/ops.hpp"

#include "supermask/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace supermask::ops {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw ShapeError(message);
}

} // namespace

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
            "matmul: cannot multiply " + shape_string(av.shape()) + " by " + shape_string(bv.shape()));
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    BasicTensor<T> out({m, n});
    kernels::gemm(m, n, k, av.ptr(), false, bv.ptr(), out.ptr(), false);
    return tape.record(
        std::move(out), {a, b},
        [a, b, m, n, k](Tape<T>& t, Var self) {
            const T* dy = t.grad_buffer(self).ptr();
            if (t.requires_grad(a)) {
                kernels::gemm_nt(m, k, n, dy, t.value(b).ptr(), t.grad_buffer(a).ptr(), true);
            }
            if (t.requires_grad(b)) {
                kernels::gemm(k, n, m, t.value(a).ptr(), true, dy, t.grad_buffer(b).ptr(), true);
            }
        },
        "matmul");
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w) {
    const auto& xv = tape.value(x);
    const auto& wv = tape.value(w);
    require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1),
            "linear: input " + shape_string(xv.shape()) + " does not match weight " +
                shape_string(wv.shape()));
    const std::size_t batch = xv.dim(0), in = xv.dim(1), out_features = wv.dim(0);
    BasicTensor<T> out({batch, out_features});
    kernels::gemm_nt(batch, out_features, in, xv.ptr(), wv.ptr(), out.ptr(), false);
    return tape.record(
        std::move(out), {x, w},
        [x, w, batch, in, out_features](Tape<T>& t, Var self) {
            const T* dy = t.grad_buffer(self).ptr();
            if (t.requires_grad(x)) {
                kernels::gemm(batch, in, out_features, dy, false, t.value(w).ptr(),
                              t.grad_buffer(x).ptr(), true);
            }
            if (t.requires_grad(w)) {
                kernels::gemm(out_features, in, batch, dy, true, t.value(x).ptr(),
                              t.grad_buffer(w).ptr(), true);
            }
        },
        "linear");
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::size_t stride, std::size_t pad) {
    const auto& xv = tape.value(x);
    const auto& wv = tape.value(w);
    require(xv.rank() == 4 && wv.rank() == 4, "conv2d: expects [N,C,H,W] input and [F,C,k,k] weight");
    require(xv.dim(1) == wv.dim(1), "conv2d: input has " + std::to_string(xv.dim(1)) +
                                        " channels, weight expects " + std::to_string(wv.dim(1)));
    require(wv.dim(2) == wv.dim(3), "conv2d: kernel must be square");
    require(stride >= 1, "conv2d: stride must be positive");
    const kernels::ConvGeometry g{xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(2), stride, pad};
    require(xv.dim(2) + 2 * pad >= g.kernel && xv.dim(3) + 2 * pad >= g.kernel,
            "conv2d: kernel larger than padded input");
    require((xv.dim(2) + 2 * pad - g.kernel) % stride == 0 &&
                (xv.dim(3) + 2 * pad - g.kernel) % stride == 0,
            "conv2d: output size is not an integer for input " + shape_string(xv.shape()));

    const std::size_t batch = xv.dim(0), filters = wv.dim(0);
    const std::size_t oh = g.out_height(), ow = g.out_width();
    const std::size_t pixels = oh * ow, patch = g.patch_size();
    const std::size_t in_stride = g.channels * g.height * g.width;

    BasicTensor<T> out({batch, filters, oh, ow});
    // The weight gradient needs every sample's columns again; keep them.
    const bool keep_cols = tape.requires_grad(w);
    auto saved = std::make_shared<std::vector<T>>(patch * pixels * (keep_cols ? batch : 1));
    for (std::size_t n = 0; n < batch; ++n) {
        T* cols = saved->data() + (keep_cols ? n * patch * pixels : 0);
        kernels::im2col(g, xv.ptr() + n * in_stride, cols);
        kernels::gemm(filters, pixels, patch, wv.ptr(), false, cols, out.ptr() + n * filters * pixels, false);
    }
    if (!keep_cols) saved.reset();
    return tape.record(
        std::move(out), {x, w},
        [x, w, g, batch, filters, pixels, patch, in_stride, saved](Tape<T>& t, Var self) {
            const T* dy = t.grad_buffer(self).ptr();
            const T* xin = t.value(x).ptr();
            const T* wt = t.value(w).ptr();
            const bool need_x = t.requires_grad(x);
            const bool need_w = t.requires_grad(w);
            T* dx = need_x ? t.grad_buffer(x).ptr() : nullptr;
            T* dw = need_w ? t.grad_buffer(w).ptr() : nullptr;
            std::vector<T> cols(patch * pixels);
            // dW^T [patch x filters] accumulates cols * dy^T over the batch;
            // transposing dy is cheaper than transposing cols.
            std::vector<T> dwt(need_w ? patch * filters : 0, T{0});
            std::vector<T> dyt(need_w ? pixels * filters : 0);
            for (std::size_t n = 0; n < batch; ++n) {
                const T* dyn = dy + n * filters * pixels;
                if (need_w) {
                    const T* xcols = cols.data();
                    if (saved) {
                        xcols = saved->data() + n * patch * pixels;
                    } else {
                        kernels::im2col(g, xin + n * in_stride, cols.data());
                    }
                    kernels::transpose(filters, pixels, dyn, dyt.data());
                    kernels::gemm(patch, filters, pixels, xcols, false, dyt.data(), dwt.data(), true);
                }
                if (need_x) {
                    kernels::gemm(patch, pixels, filters, wt, true, dyn, cols.data(), false);
                    kernels::col2im(g, cols.data(), dx + n * in_stride);
                }
            }
            if (need_w) {
                for (std::size_t f = 0; f < filters; ++f) {
                    for (std::size_t q = 0; q < patch; ++q) dw[f * patch + q] += dwt[q * filters + f];
                }
            }
        },
        "conv2d");
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    BasicTensor<T> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
    return tape.record(
        std::move(out), {x},
        [x](Tape<T>& t, Var self) {
            const auto& xin = t.value(x);
            const auto& dy = t.grad_buffer(self);
            auto& dx = t.grad_buffer(x);
            for (std::size_t i = 0; i < xin.size(); ++i) dx[i] += xin[i] > T{0} ? dy[i] : T{0};
        },
        "relu");
}

template <typename T>
Var max_pool2d(Tape<T>& tape, Var x, std::size_t size) {
    const auto& xv = tape.value(x);
    require(xv.rank() == 4, "max_pool2d: expects [N,C,H,W]");
    require(size >= 1 && xv.dim(2) >= size && xv.dim(3) >= size, "max_pool2d: window larger than input");
    const std::size_t planes = xv.dim(0) * xv.dim(1);
    const std::size_t h = xv.dim(2), w = xv.dim(3);
    const std::size_t oh = h / size, ow = w / size;
    BasicTensor<T> out({xv.dim(0), xv.dim(1), oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t p = 0; p < planes; ++p) {
        const T* plane = xv.ptr() + p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * size) * w + ox * size;
                for (std::size_t dy = 0; dy < size; ++dy) {
                    for (std::size_t dx = 0; dx < size; ++dx) {
                        const std::size_t idx = (oy * size + dy) * w + ox * size + dx;
                        if (plane[idx] > plane[best]) best = idx;
                    }
                }
                const std::size_t o = (p * oh + oy) * ow + ox;
                out[o] = plane[best];
                (*argmax)[o] = p * h * w + best;
            }
        }
    }
    return tape.record(
        std::move(out), {x},
        [x, argmax](Tape<T>& t, Var self) {
            const auto& dy = t.grad_buffer(self);
            auto& dx = t.grad_buffer(x);
            for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
        },
        "max_pool2d");
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, BatchNormState<T>& state, BatchNormMode mode) {
    const auto& xv = tape.value(x);
    require(xv.rank() == 2 || xv.rank() == 4, "batch_norm: expects [N,C] or [N,C,H,W]");
    const std::size_t batch = xv.dim(0), channels = xv.dim(1);
    require(channels == state.channels(), "batch_norm: input has " + std::to_string(channels) +
                                              " channels, state has " + std::to_string(state.channels()));
    const std::size_t spatial = xv.size() / (batch * channels);
    const std::size_t count = batch * spatial;
    require(count > 0, "batch_norm: empty input");

    auto inv_std = std::make_shared<std::vector<T>>(channels);
    BasicTensor<T> out(xv.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        double mean = 0.0, var = 0.0;
        if (mode == BatchNormMode::train) {
            for (std::size_t n = 0; n < batch; ++n) {
                const T* row = xv.ptr() + (n * channels + c) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) mean += row[s];
            }
            mean /= static_cast<double>(count);
            for (std::size_t n = 0; n < batch; ++n) {
                const T* row = xv.ptr() + (n * channels + c) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) {
                    const double d = row[s] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(count);
            const double unbiased = count > 1 ? var * count / (count - 1) : var;
            const double m = BatchNormState<T>::kMomentum;
            state.running_mean[c] = static_cast<T>((1.0 - m) * state.running_mean[c] + m * mean);
            state.running_var[c] = static_cast<T>((1.0 - m) * state.running_var[c] + m * unbiased);
        } else {
            mean = state.running_mean[c];
            var = state.running_var[c];
        }
        const double istd = 1.0 / std::sqrt(var + BatchNormState<T>::kEpsilon);
        (*inv_std)[c] = static_cast<T>(istd);
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
                out[base + s] = static_cast<T>((xv[base + s] - mean) * istd);
            }
        }
    }
    const bool train = mode == BatchNormMode::train;
    return tape.record(
        std::move(out), {x},
        [x, inv_std, batch, channels, spatial, count, train](Tape<T>& t, Var self) {
            const auto& dy = t.grad_buffer(self);
            const auto& xhat = t.value(self);
            auto& dx = t.grad_buffer(x);
            for (std::size_t c = 0; c < channels; ++c) {
                const double istd = (*inv_std)[c];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                if (train) {
                    for (std::size_t n = 0; n < batch; ++n) {
                        const std::size_t base = (n * channels + c) * spatial;
                        for (std::size_t s = 0; s < spatial; ++s) {
                            sum_dy += dy[base + s];
                            sum_dy_xhat += static_cast<double>(dy[base + s]) * xhat[base + s];
                        }
                    }
                }
                const double inv_count = 1.0 / static_cast<double>(count);
                for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t base = (n * channels + c) * spatial;
                    for (std::size_t s = 0; s < spatial; ++s) {
                        const std::size_t i = base + s;
                        if (train) {
                            dx[i] += static_cast<T>(istd * (dy[i] - inv_count * sum_dy -
                                                            inv_count * xhat[i] * sum_dy_xhat));
                        } else {
                            dx[i] += static_cast<T>(istd * dy[i]);
                        }
                    }
                }
            }
        },
        "batch_norm");
}

template <typename T>
Var flatten(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    require(xv.rank() >= 1, "flatten: scalar input");
    const std::size_t batch = xv.dim(0);
    const std::size_t rest = batch == 0 ? 0 : xv.size() / batch;
    return tape.record(
        xv.reshaped({batch, rest}), {x},
        [x](Tape<T>& t, Var self) {
            const auto& dy = t.grad_buffer(self);
            auto& dx = t.grad_buffer(x);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        },
        "flatten");
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int32_t> labels) {
    const auto& lv = tape.value(logits);
    require(lv.rank() == 2, "cross_entropy: logits must be [N, K]");
    const std::size_t batch = lv.dim(0), classes = lv.dim(1);
    require(labels.size() == batch, "cross_entropy: " + std::to_string(labels.size()) +
                                        " labels for batch of " + std::to_string(batch));
    require(batch > 0, "cross_entropy: empty batch");
    for (std::int32_t y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw InvalidArgument("cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(classes) + ")");
        }
    }
    auto probs = std::make_shared<std::vector<double>>(lv.size());
    double total = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
        const T* row = lv.ptr() + n * classes;
        const double top = *std::max_element(row, row + classes);
        double denom = 0.0;
        for (std::size_t k = 0; k < classes; ++k) denom += std::exp(row[k] - top);
        const double log_denom = std::log(denom);
        for (std::size_t k = 0; k < classes; ++k) {
            (*probs)[n * classes + k] = std::exp(row[k] - top - log_denom);
        }
        total += top + log_denom - row[labels[n]];
    }
    BasicTensor<T> out({1}, {static_cast<T>(total / static_cast<double>(batch))});
    std::vector<std::int32_t> saved(labels.begin(), labels.end());
    return tape.record(
        std::move(out), {logits},
        [logits, probs, saved = std::move(saved), batch, classes](Tape<T>& t, Var self) {
            const double scale = t.grad_buffer(self)[0] / static_cast<double>(batch);
            auto& dx = t.grad_buffer(logits);
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t k = 0; k < classes; ++k) {
                    double g = (*probs)[n * classes + k];
                    if (static_cast<std::int32_t>(k) == saved[n]) g -= 1.0;
                    dx[n * classes + k] += static_cast<T>(g * scale);
                }
            }
        },
        "cross_entropy");
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    double total = 0.0;
    for (T v : xv.data()) total += v;
    return tape.record(
        BasicTensor<T>({1}, {static_cast<T>(total)}), {x},
        [x](Tape<T>& t, Var self) {
            const T g = t.grad_buffer(self)[0];
            auto& dx = t.grad_buffer(x);
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
        },
        "sum");
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    require(av.shape() == bv.shape(),
            "mul: shape " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    BasicTensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return tape.record(
        std::move(out), {a, b},
        [a, b](Tape<T>& t, Var self) {
            const auto& dy = t.grad_buffer(self);
            if (t.requires_grad(a)) {
                auto& da = t.grad_buffer(a);
                const auto& bv2 = t.value(b);
                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv2[i];
            }
            if (t.requires_grad(b)) {
                auto& db = t.grad_buffer(b);
                const auto& av2 = t.value(a);
                for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av2[i];
            }
        },
        "mul");
}

#define SUPERMASK_INSTANTIATE(T)                                                           \
    template Var matmul<T>(Tape<T>&, Var, Var);                                            \
    template Var linear<T>(Tape<T>&, Var, Var);                                            \
    template Var conv2d<T>(Tape<T>&, Var, Var, std::size_t, std::size_t);                  \
    template Var relu<T>(Tape<T>&, Var);                                                   \
    template Var max_pool2d<T>(Tape<T>&, Var, std::size_t);                                \
    template Var batch_norm<T>(Tape<T>&, Var, BatchNormState<T>&, BatchNormMode);          \
    template Var flatten<T>(Tape<T>&, Var);                                                \
    template Var cross_entropy<T>(Tape<T>&, Var, std::span<const std::int32_t>);           \
    template Var sum<T>(Tape<T>&, Var);                                                    \
    template Var mul<T>(Tape<T>&, Var, Var);

SUPERMASK_INSTANTIATE(float)
SUPERMASK_INSTANTIATE(double)

#undef SUPERMASK_INSTANTIATE

} // namespace supermask::ops
