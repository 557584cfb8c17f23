#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "wlft/autodiff.hpp"

namespace wlft {

enum class Padding { kZero, kReflect };

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* where) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    const T* pa = a.value().ptr();
    const T* pb = b.value().ptr();
    T* po = out.ptr();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
    return make_op<T>("add", std::move(out), {a, b}, [](Node<T>& n) {
        accumulate_grad(n.parents[0], n.grad);
        accumulate_grad(n.parents[1], n.grad);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out(a.shape());
    const T* pa = a.value().ptr();
    const T* pb = b.value().ptr();
    T* po = out.ptr();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
    return make_op<T>("sub", std::move(out), {a, b}, [](Node<T>& n) {
        accumulate_grad(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor<T>& dst = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] -= n.grad.data[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out(a.shape());
    const T* pa = a.value().ptr();
    const T* pb = b.value().ptr();
    T* po = out.ptr();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
    return make_op<T>("mul", std::move(out), {a, b}, [](Node<T>& n) {
        const Tensor<T>& av = n.parents[0]->value;
        const Tensor<T>& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor<T>& da = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i] * bv.data[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<T>& db = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] += n.grad.data[i] * av.data[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out(a.shape());
    const T* pa = a.value().ptr();
    T* po = out.ptr();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * s;
    return make_op<T>("scale", std::move(out), {a}, [s](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T>& da = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i] * s;
        }
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T acc = 0;
    for (const T& v : a.value().data) acc += v;
    return make_op<T>("sum", Tensor<T>::from({1}, {acc}), {a}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T>& da = n.parents[0]->ensure_grad();
            const T g = n.grad.data[0];
            for (T& v : da.data) v += g;
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const T* pa = a.value().ptr();
    T* po = out.ptr();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
    return make_op<T>("relu", std::move(out), {a}, [](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor<T>& x = n.parents[0]->value;
        Tensor<T>& dx = n.parents[0]->ensure_grad();
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < dx.data.size(); ++i)
            if (x.data[i] > T(0)) dx.data[i] += n.grad.data[i];
    });
}

template <typename T>
Var<T> tanh_act(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const T* pa = a.value().ptr();
    T* po = out.ptr();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = std::tanh(pa[i]);
    return make_op<T>("tanh", std::move(out), {a}, [](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<T>& dx = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < dx.data.size(); ++i) {
            const T y = n.value.data[i];
            dx.data[i] += n.grad.data[i] * (T(1) - y * y);
        }
    });
}

// ---------------------------------------------------------------------------
// padding
// ---------------------------------------------------------------------------

inline int reflect_index(int j, int extent) {
    if (j < 0) return -j;
    if (j >= extent) return 2 * extent - 2 - j;
    return j;
}

template <typename T>
Var<T> pad2d(const Var<T>& x, int pad_h, int pad_w, Padding mode) {
    require_rank(x.value(), 4, "pad2d");
    if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("pad2d: negative padding");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (mode == Padding::kReflect && (pad_h > H - 1 || pad_w > W - 1))
        throw std::invalid_argument("pad2d: reflect pad exceeds spatial extent");
    const int Hp = H + 2 * pad_h, Wp = W + 2 * pad_w;
    Tensor<T> out({N, C, Hp, Wp});
    const T* px = x.value().ptr();
    T* po = out.ptr();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* plane = px + (static_cast<std::size_t>(n) * C + c) * H * W;
            T* oplane = po + (static_cast<std::size_t>(n) * C + c) * Hp * Wp;
            for (int i = 0; i < Hp; ++i) {
                const int hi = i - pad_h;
                for (int j = 0; j < Wp; ++j) {
                    const int wj = j - pad_w;
                    if (mode == Padding::kZero) {
                        oplane[i * Wp + j] = (hi >= 0 && hi < H && wj >= 0 && wj < W)
                                                 ? plane[hi * W + wj]
                                                 : T(0);
                    } else {
                        oplane[i * Wp + j] = plane[reflect_index(hi, H) * W + reflect_index(wj, W)];
                    }
                }
            }
        }
    return make_op<T>("pad2d", std::move(out), {x}, [=](Node<T>& n_) {
        if (!n_.parents[0]->requires_grad) return;
        Tensor<T>& dx = n_.parents[0]->ensure_grad();
        const T* g = n_.grad.ptr();
        T* pdx = dx.ptr();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                T* dplane = pdx + (static_cast<std::size_t>(n) * C + c) * H * W;
                const T* gplane = g + (static_cast<std::size_t>(n) * C + c) * Hp * Wp;
                for (int i = 0; i < Hp; ++i) {
                    const int hi = i - pad_h;
                    for (int j = 0; j < Wp; ++j) {
                        const int wj = j - pad_w;
                        if (mode == Padding::kZero) {
                            if (hi >= 0 && hi < H && wj >= 0 && wj < W)
                                dplane[hi * W + wj] += gplane[i * Wp + j];
                        } else {
                            dplane[reflect_index(hi, H) * W + reflect_index(wj, W)] +=
                                gplane[i * Wp + j];
                        }
                    }
                }
            }
    });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

// Valid (no padding) cross-correlation. Per output element the accumulation
// order is bias first, then channel-major (c, kh, kw); the naive reference in
// the tests follows the identical chain, which keeps the comparison exact.
template <typename T>
Var<T> conv2d_valid(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride) {
    require_rank(x.value(), 4, "conv2d");
    require_rank(w.value(), 4, "conv2d weight");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int F = w.shape()[0], kH = w.shape()[2], kW = w.shape()[3];
    if (w.shape()[1] != C)
        throw std::invalid_argument("conv2d: weight channels " + std::to_string(w.shape()[1]) +
                                    " do not match input channels " + std::to_string(C));
    if (kH % 2 == 0 || kW % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
    if (b.shape() != Shape{F}) throw std::invalid_argument("conv2d: bias shape mismatch");
    if (H < kH || W < kW) throw std::invalid_argument("conv2d: input smaller than kernel");
    const int Ho = (H - kH) / stride + 1;
    const int Wo = (W - kW) / stride + 1;

    Tensor<T> out({N, F, Ho, Wo});
    {
        const T* __restrict px = x.value().ptr();
        const T* __restrict pw = w.value().ptr();
        const T* pb = b.value().ptr();
        T* __restrict po = out.ptr();
        if (stride == 1) {
            // Output-stationary: each output element accumulates bias first,
            // then the (c, kh, kw) taps in ascending order, exactly the chain
            // a plain quadruple loop produces. Lane blocks just run several
            // such independent chains side by side.
            for (int n = 0; n < N; ++n)
                for (int f = 0; f < F; ++f) {
                    T* oplane = po + (static_cast<std::size_t>(n) * F + f) * Ho * Wo;
                    const T bias = pb[f];
                    const T* xbase = px + static_cast<std::size_t>(n) * C * H * W;
                    const T* wbase = pw + static_cast<std::size_t>(f) * C * kH * kW;
                    for (int oh = 0; oh < Ho; ++oh) {
                        T* out_row = oplane + oh * Wo;
                        int ow = 0;
                        for (; ow + 16 <= Wo; ow += 16) {
                            T acc[16];
                            for (int k = 0; k < 16; ++k) acc[k] = bias;
                            for (int c = 0; c < C; ++c) {
                                const T* xwin = xbase + c * H * W + oh * W + ow;
                                const T* wk = wbase + c * kH * kW;
                                for (int kh = 0; kh < kH; ++kh) {
                                    const T* r = xwin + kh * W;
                                    for (int kw = 0; kw < kW; ++kw) {
                                        const T wv = wk[kh * kW + kw];
                                        for (int k = 0; k < 16; ++k) acc[k] += wv * r[kw + k];
                                    }
                                }
                            }
                            for (int k = 0; k < 16; ++k) out_row[ow + k] = acc[k];
                        }
                        for (; ow + 8 <= Wo; ow += 8) {
                            T acc[8];
                            for (int k = 0; k < 8; ++k) acc[k] = bias;
                            for (int c = 0; c < C; ++c) {
                                const T* xwin = xbase + c * H * W + oh * W + ow;
                                const T* wk = wbase + c * kH * kW;
                                for (int kh = 0; kh < kH; ++kh) {
                                    const T* r = xwin + kh * W;
                                    for (int kw = 0; kw < kW; ++kw) {
                                        const T wv = wk[kh * kW + kw];
                                        for (int k = 0; k < 8; ++k) acc[k] += wv * r[kw + k];
                                    }
                                }
                            }
                            for (int k = 0; k < 8; ++k) out_row[ow + k] = acc[k];
                        }
                        for (; ow + 4 <= Wo; ow += 4) {
                            T acc[4];
                            for (int k = 0; k < 4; ++k) acc[k] = bias;
                            for (int c = 0; c < C; ++c) {
                                const T* xwin = xbase + c * H * W + oh * W + ow;
                                const T* wk = wbase + c * kH * kW;
                                for (int kh = 0; kh < kH; ++kh) {
                                    const T* r = xwin + kh * W;
                                    for (int kw = 0; kw < kW; ++kw) {
                                        const T wv = wk[kh * kW + kw];
                                        for (int k = 0; k < 4; ++k) acc[k] += wv * r[kw + k];
                                    }
                                }
                            }
                            for (int k = 0; k < 4; ++k) out_row[ow + k] = acc[k];
                        }
                        for (; ow < Wo; ++ow) {
                            T acc = bias;
                            for (int c = 0; c < C; ++c) {
                                const T* xwin = xbase + c * H * W + oh * W + ow;
                                const T* wk = wbase + c * kH * kW;
                                for (int kh = 0; kh < kH; ++kh)
                                    for (int kw = 0; kw < kW; ++kw)
                                        acc += wk[kh * kW + kw] * xwin[kh * W + kw];
                            }
                            out_row[ow] = acc;
                        }
                    }
                }
        } else {
            for (int n = 0; n < N; ++n)
                for (int f = 0; f < F; ++f) {
                    T* oplane = po + (static_cast<std::size_t>(n) * F + f) * Ho * Wo;
                    const T bias = pb[f];
                    for (int i = 0; i < Ho * Wo; ++i) oplane[i] = bias;
                    for (int c = 0; c < C; ++c) {
                        const T* xplane = px + (static_cast<std::size_t>(n) * C + c) * H * W;
                        const T* wk = pw + (static_cast<std::size_t>(f) * C + c) * kH * kW;
                        for (int kh = 0; kh < kH; ++kh)
                            for (int kw = 0; kw < kW; ++kw) {
                                const T wv = wk[kh * kW + kw];
                                for (int oh = 0; oh < Ho; ++oh) {
                                    const T* in_row = xplane + (oh * stride + kh) * W + kw;
                                    T* out_row = oplane + oh * Wo;
                                    for (int ow = 0; ow < Wo; ++ow)
                                        out_row[ow] += wv * in_row[ow * stride];
                                }
                            }
                    }
                }
        }
    }

    return make_op<T>("conv2d", std::move(out), {x, w, b}, [=](Node<T>& node) {
        const Tensor<T>& xv = node.parents[0]->value;
        const Tensor<T>& wv_ = node.parents[1]->value;
        const T* __restrict g = node.grad.ptr();
        if (node.parents[0]->requires_grad) {
            Tensor<T>& dx = node.parents[0]->ensure_grad();
            T* __restrict pdx = dx.ptr();
            const T* __restrict pw = wv_.ptr();
            for (int n = 0; n < N; ++n)
                for (int f = 0; f < F; ++f) {
                    const T* gplane = g + (static_cast<std::size_t>(n) * F + f) * Ho * Wo;
                    for (int c = 0; c < C; ++c) {
                        T* dplane = pdx + (static_cast<std::size_t>(n) * C + c) * H * W;
                        const T* wk = pw + (static_cast<std::size_t>(f) * C + c) * kH * kW;
                        for (int kh = 0; kh < kH; ++kh)
                            for (int kw = 0; kw < kW; ++kw) {
                                const T wval = wk[kh * kW + kw];
                                for (int oh = 0; oh < Ho; ++oh) {
                                    const T* g_row = gplane + oh * Wo;
                                    T* d_row = dplane + (oh * stride + kh) * W + kw;
                                    if (stride == 1) {
                                        for (int ow = 0; ow < Wo; ++ow) d_row[ow] += wval * g_row[ow];
                                    } else {
                                        for (int ow = 0; ow < Wo; ++ow)
                                            d_row[ow * stride] += wval * g_row[ow];
                                    }
                                }
                            }
                    }
                }
        }
        if (node.parents[1]->requires_grad) {
            Tensor<T>& dw = node.parents[1]->ensure_grad();
            T* __restrict pdw = dw.ptr();
            const T* __restrict px = xv.ptr();
            for (int n = 0; n < N; ++n)
                for (int f = 0; f < F; ++f) {
                    const T* gplane = g + (static_cast<std::size_t>(n) * F + f) * Ho * Wo;
                    for (int c = 0; c < C; ++c) {
                        const T* xplane = px + (static_cast<std::size_t>(n) * C + c) * H * W;
                        T* dwk = pdw + (static_cast<std::size_t>(f) * C + c) * kH * kW;
                        for (int kh = 0; kh < kH; ++kh)
                            for (int kw = 0; kw < kW; ++kw) {
                                // four independent partial sums keep the
                                // reduction off the fp-add latency chain
                                T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                                for (int oh = 0; oh < Ho; ++oh) {
                                    const T* in_row = xplane + (oh * stride + kh) * W + kw;
                                    const T* g_row = gplane + oh * Wo;
                                    if (stride == 1) {
                                        int ow = 0;
                                        for (; ow + 4 <= Wo; ow += 4) {
                                            a0 += in_row[ow] * g_row[ow];
                                            a1 += in_row[ow + 1] * g_row[ow + 1];
                                            a2 += in_row[ow + 2] * g_row[ow + 2];
                                            a3 += in_row[ow + 3] * g_row[ow + 3];
                                        }
                                        for (; ow < Wo; ++ow) a0 += in_row[ow] * g_row[ow];
                                    } else {
                                        for (int ow = 0; ow < Wo; ++ow)
                                            a0 += in_row[ow * stride] * g_row[ow];
                                    }
                                }
                                dwk[kh * kW + kw] += (a0 + a1) + (a2 + a3);
                            }
                    }
                }
        }
        if (node.parents[2]->requires_grad) {
            Tensor<T>& db = node.parents[2]->ensure_grad();
            const int M = Ho * Wo;
            for (int n = 0; n < N; ++n)
                for (int f = 0; f < F; ++f) {
                    const T* gplane = g + (static_cast<std::size_t>(n) * F + f) * Ho * Wo;
                    T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                    int i = 0;
                    for (; i + 4 <= M; i += 4) {
                        a0 += gplane[i];
                        a1 += gplane[i + 1];
                        a2 += gplane[i + 2];
                        a3 += gplane[i + 3];
                    }
                    for (; i < M; ++i) a0 += gplane[i];
                    db.data[static_cast<std::size_t>(f)] += (a0 + a1) + (a2 + a3);
                }
        }
    });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, Padding mode,
              int pad_h, int pad_w) {
    if (pad_h == 0 && pad_w == 0) return conv2d_valid(x, w, b, stride);
    return conv2d_valid(pad2d(x, pad_h, pad_w, mode), w, b, stride);
}

// Same-size convolution: pad = (k - 1) / 2 on each axis.
template <typename T>
Var<T> conv2d_same(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, Padding mode) {
    const int kH = w.shape()[2], kW = w.shape()[3];
    return conv2d(x, w, b, stride, mode, (kH - 1) / 2, (kW - 1) / 2);
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    require_rank(x.value(), 2, "linear");
    require_rank(w.value(), 2, "linear weight");
    const int N = x.shape()[0], D = x.shape()[1];
    const int K = w.shape()[0];
    if (w.shape()[1] != D)
        throw std::invalid_argument("linear: input dim " + std::to_string(D) +
                                    " does not match weight dim " + std::to_string(w.shape()[1]));
    if (b.shape() != Shape{K}) throw std::invalid_argument("linear: bias shape mismatch");

    Tensor<T> out({N, K});
    const T* px = x.value().ptr();
    const T* pw = w.value().ptr();
    const T* pb = b.value().ptr();
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
            T acc = pb[k];
            const T* xr = px + static_cast<std::size_t>(n) * D;
            const T* wr = pw + static_cast<std::size_t>(k) * D;
            for (int d = 0; d < D; ++d) acc += xr[d] * wr[d];
            out.at(n, k) = acc;
        }

    return make_op<T>("linear", std::move(out), {x, w, b}, [=](Node<T>& node) {
        const Tensor<T>& xv = node.parents[0]->value;
        const Tensor<T>& wv = node.parents[1]->value;
        const Tensor<T>& g = node.grad;
        if (node.parents[0]->requires_grad) {
            Tensor<T>& dx = node.parents[0]->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int k = 0; k < K; ++k) {
                    const T gv = g.at(n, k);
                    const T* wr = wv.ptr() + static_cast<std::size_t>(k) * D;
                    T* dxr = dx.ptr() + static_cast<std::size_t>(n) * D;
                    for (int d = 0; d < D; ++d) dxr[d] += gv * wr[d];
                }
        }
        if (node.parents[1]->requires_grad) {
            Tensor<T>& dw = node.parents[1]->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int k = 0; k < K; ++k) {
                    const T gv = g.at(n, k);
                    const T* xr = xv.ptr() + static_cast<std::size_t>(n) * D;
                    T* dwr = dw.ptr() + static_cast<std::size_t>(k) * D;
                    for (int d = 0; d < D; ++d) dwr[d] += gv * xr[d];
                }
        }
        if (node.parents[2]->requires_grad) {
            Tensor<T>& db = node.parents[2]->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int k = 0; k < K; ++k) db.data[static_cast<std::size_t>(k)] += g.at(n, k);
        }
    });
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

// Train mode normalizes with biased batch statistics and folds them into the
// running estimates (new observation weight = momentum, unbiased variance);
// eval mode uses the running estimates only.
template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                   T eps = T(1e-5), T momentum = T(0.1)) {
    require_rank(x.value(), 4, "batchnorm2d");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        throw std::invalid_argument("batchnorm2d: scale/shift shape mismatch");
    const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
    if (train && m < 2)
        throw std::invalid_argument("batchnorm2d: train mode needs at least 2 elements per channel");

    std::vector<T> mean(C), inv_std(C);
    if (train) {
        for (int c = 0; c < C; ++c) {
            double acc = 0;
            for (int n = 0; n < N; ++n) {
                const T* plane = x.value().ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                for (int i = 0; i < H * W; ++i) acc += static_cast<double>(plane[i]);
            }
            const double mu = acc / static_cast<double>(m);
            double vacc = 0;
            for (int n = 0; n < N; ++n) {
                const T* plane = x.value().ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                for (int i = 0; i < H * W; ++i) {
                    const double d = static_cast<double>(plane[i]) - mu;
                    vacc += d * d;
                }
            }
            const double var = vacc / static_cast<double>(m);
            mean[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            const double var_unbiased = vacc / static_cast<double>(m - 1);
            running_mean.data[c] = (T(1) - momentum) * running_mean.data[c] + momentum * static_cast<T>(mu);
            running_var.data[c] =
                (T(1) - momentum) * running_var.data[c] + momentum * static_cast<T>(var_unbiased);
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean.data[c];
            inv_std[c] = T(1) / std::sqrt(running_var.data[c] + eps);
        }
    }

    Tensor<T> xhat({N, C, H, W});
    Tensor<T> out({N, C, H, W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* plane = x.value().ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
            T* hplane = xhat.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
            T* oplane = out.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
            const T mu = mean[c], is = inv_std[c];
            const T gm = gamma.value().data[c], bt = beta.value().data[c];
            for (int i = 0; i < H * W; ++i) {
                hplane[i] = (plane[i] - mu) * is;
                oplane[i] = gm * hplane[i] + bt;
            }
        }

    return make_op<T>("batchnorm2d", std::move(out), {x, gamma, beta},
                      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& node) {
        const Tensor<T>& g = node.grad;
        const Tensor<T>& gmv = node.parents[1]->value;
        for (int c = 0; c < C; ++c) {
            double sum_g = 0, sum_gx = 0;
            for (int n = 0; n < N; ++n) {
                const T* gplane = g.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                const T* hplane = xhat.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                for (int i = 0; i < H * W; ++i) {
                    sum_g += static_cast<double>(gplane[i]);
                    sum_gx += static_cast<double>(gplane[i]) * static_cast<double>(hplane[i]);
                }
            }
            if (node.parents[1]->requires_grad)
                node.parents[1]->ensure_grad().data[c] += static_cast<T>(sum_gx);
            if (node.parents[2]->requires_grad)
                node.parents[2]->ensure_grad().data[c] += static_cast<T>(sum_g);
            if (node.parents[0]->requires_grad) {
                Tensor<T>& dx = node.parents[0]->ensure_grad();
                const T gm = gmv.data[c], is = inv_std[c];
                const T mg = static_cast<T>(sum_g / static_cast<double>(m));
                const T mgx = static_cast<T>(sum_gx / static_cast<double>(m));
                for (int n = 0; n < N; ++n) {
                    const T* gplane = g.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                    const T* hplane = xhat.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                    T* dplane = dx.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                    if (train) {
                        for (int i = 0; i < H * W; ++i)
                            dplane[i] += gm * is * (gplane[i] - mg - hplane[i] * mgx);
                    } else {
                        for (int i = 0; i < H * W; ++i) dplane[i] += gm * is * gplane[i];
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

// Padded cells never win the max; ties break to the first element row-major.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride, int pad) {
    require_rank(x.value(), 4, "maxpool2d");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (H + 2 * pad < k || W + 2 * pad < k)
        throw std::invalid_argument("maxpool2d: spatial dims smaller than kernel");
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    Tensor<T> out({N, C, Ho, Wo});
    std::vector<std::int32_t> argmax(static_cast<std::size_t>(out.numel()));
    const T* px = x.value().ptr();
    T* po = out.ptr();
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* plane = px + (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow, ++oi) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int32_t best_idx = -1;
                    for (int kh = 0; kh < k; ++kh) {
                        const int ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= H) continue;
                        for (int kw = 0; kw < k; ++kw) {
                            const int iw = ow * stride + kw - pad;
                            if (iw < 0 || iw >= W) continue;
                            const T v = plane[ih * W + iw];
                            if (v > best) {
                                best = v;
                                best_idx = ih * W + iw;
                            }
                        }
                    }
                    po[oi] = best;
                    argmax[oi] = best_idx;
                }
        }
    return make_op<T>("maxpool2d", std::move(out), {x},
                      [=, argmax = std::move(argmax)](Node<T>& node) {
        if (!node.parents[0]->requires_grad) return;
        Tensor<T>& dx = node.parents[0]->ensure_grad();
        std::size_t i = 0;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                T* dplane = dx.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                for (int o = 0; o < Ho * Wo; ++o, ++i) dplane[argmax[i]] += node.grad.data[i];
            }
    });
}

// [N,C,H,W] -> [N,C]; also serves as the per-channel spatial mean.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    require_rank(x.value(), 4, "global_avg_pool");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (H * W == 0) throw std::invalid_argument("global_avg_pool: empty spatial dims");
    Tensor<T> out({N, C});
    const T inv = T(1) / static_cast<T>(H * W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* plane = x.value().ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
            T acc = 0;
            for (int i = 0; i < H * W; ++i) acc += plane[i];
            out.at(n, c) = acc * inv;
        }
    return make_op<T>("global_avg_pool", std::move(out), {x}, [=](Node<T>& node) {
        if (!node.parents[0]->requires_grad) return;
        Tensor<T>& dx = node.parents[0]->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T g = node.grad.at(n, c) * inv;
                T* dplane = dx.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                for (int i = 0; i < H * W; ++i) dplane[i] += g;
            }
    });
}

// ---------------------------------------------------------------------------
// softmax / cross-entropy
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    require_rank(logits, 2, "softmax_rows");
    const int N = logits.shape[0], C = logits.shape[1];
    Tensor<T> p({N, C});
    for (int n = 0; n < N; ++n) {
        T mx = logits.at(n, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits.at(n, c));
        T denom = 0;
        for (int c = 0; c < C; ++c) {
            p.at(n, c) = std::exp(logits.at(n, c) - mx);
            denom += p.at(n, c);
        }
        for (int c = 0; c < C; ++c) p.at(n, c) /= denom;
    }
    return p;
}

// Mean over the batch of -log softmax(logits)[label], in log-sum-exp form.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
    require_rank(logits.value(), 2, "softmax_cross_entropy");
    const int N = logits.shape()[0], C = logits.shape()[1];
    if (static_cast<int>(labels.size()) != N)
        throw std::invalid_argument("softmax_cross_entropy: batch/label count mismatch");
    for (int lbl : labels)
        if (lbl < 0 || lbl >= C)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(lbl) +
                                        " out of range [0," + std::to_string(C) + ")");
    Tensor<T> probs = softmax_rows(logits.value());
    double loss = 0;
    for (int n = 0; n < N; ++n) {
        T mx = logits.value().at(n, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits.value().at(n, c));
        double denom = 0;
        for (int c = 0; c < C; ++c)
            denom += std::exp(static_cast<double>(logits.value().at(n, c) - mx));
        const double lse = static_cast<double>(mx) + std::log(denom);
        loss += lse - static_cast<double>(logits.value().at(n, labels[static_cast<std::size_t>(n)]));
    }
    loss /= static_cast<double>(N);
    return make_op<T>("softmax_cross_entropy", Tensor<T>::from({1}, {static_cast<T>(loss)}),
                      {logits}, [=, probs = std::move(probs)](Node<T>& node) {
        if (!node.parents[0]->requires_grad) return;
        Tensor<T>& dl = node.parents[0]->ensure_grad();
        const T g = node.grad.data[0] / static_cast<T>(N);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                T v = probs.at(n, c);
                if (c == labels[static_cast<std::size_t>(n)]) v -= T(1);
                dl.at(n, c) += g * v;
            }
    });
}

// ---------------------------------------------------------------------------
// strided slicing (the lazy wavelet split) and concatenation
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Var<T> stride2_gather(const Var<T>& x, int axis, int offset, const char* name) {
    require_rank(x.value(), 4, name);
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int extent = axis == 2 ? H : W;
    if (extent % 2 != 0)
        throw std::invalid_argument(std::string(name) + ": axis length " + std::to_string(extent) +
                                    " is odd");
    const int Ho = axis == 2 ? H / 2 : H;
    const int Wo = axis == 3 ? W / 2 : W;
    Tensor<T> out({N, C, Ho, Wo});
    const T* px = x.value().ptr();
    T* po = out.ptr();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* plane = px + (static_cast<std::size_t>(n) * C + c) * H * W;
            T* oplane = po + (static_cast<std::size_t>(n) * C + c) * Ho * Wo;
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    const int ih = axis == 2 ? 2 * i + offset : i;
                    const int iw = axis == 3 ? 2 * j + offset : j;
                    oplane[i * Wo + j] = plane[ih * W + iw];
                }
        }
    return make_op<T>(name, std::move(out), {x}, [=](Node<T>& node) {
        if (!node.parents[0]->requires_grad) return;
        Tensor<T>& dx = node.parents[0]->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                T* dplane = dx.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
                const T* gplane = node.grad.ptr() + (static_cast<std::size_t>(n) * C + c) * Ho * Wo;
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        const int ih = axis == 2 ? 2 * i + offset : i;
                        const int iw = axis == 3 ? 2 * j + offset : j;
                        dplane[ih * W + iw] += gplane[i * Wo + j];
                    }
            }
    });
}

}  // namespace detail

template <typename T>
Var<T> rows_even(const Var<T>& x) { return detail::stride2_gather(x, 2, 0, "rows_even"); }
template <typename T>
Var<T> rows_odd(const Var<T>& x) { return detail::stride2_gather(x, 2, 1, "rows_odd"); }
template <typename T>
Var<T> cols_even(const Var<T>& x) { return detail::stride2_gather(x, 3, 0, "cols_even"); }
template <typename T>
Var<T> cols_odd(const Var<T>& x) { return detail::stride2_gather(x, 3, 1, "cols_odd"); }

// Concatenate along dim 1; dim 0 and trailing dims must agree.
template <typename T>
Var<T> concat_dim1(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_dim1: no inputs");
    const Shape& s0 = parts[0].shape();
    if (s0.size() < 2) throw std::invalid_argument("concat_dim1: rank must be >= 2");
    const int N = s0[0];
    std::int64_t rest = 1;
    for (std::size_t i = 2; i < s0.size(); ++i) rest *= s0[i];
    int total_d1 = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size() || s[0] != N)
            throw std::invalid_argument("concat_dim1: incompatible shapes");
        std::int64_t r = 1;
        for (std::size_t i = 2; i < s.size(); ++i) r *= s[i];
        if (r != rest) throw std::invalid_argument("concat_dim1: trailing dims differ");
        total_d1 += s[1];
    }
    Shape out_shape = s0;
    out_shape[1] = total_d1;
    Tensor<T> out(out_shape);
    std::vector<int> d1s;
    for (const auto& p : parts) d1s.push_back(p.shape()[1]);
    for (int n = 0; n < N; ++n) {
        std::int64_t off = static_cast<std::int64_t>(n) * total_d1 * rest;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const std::int64_t blk = static_cast<std::int64_t>(d1s[pi]) * rest;
            const T* src = parts[pi].value().ptr() + static_cast<std::int64_t>(n) * blk;
            std::copy(src, src + blk, out.ptr() + off);
            off += blk;
        }
    }
    return make_op<T>("concat_dim1", std::move(out), parts,
                      [N, rest, total_d1, d1s](Node<T>& node) {
        for (int n = 0; n < N; ++n) {
            std::int64_t off = static_cast<std::int64_t>(n) * total_d1 * rest;
            for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
                const std::int64_t blk = static_cast<std::int64_t>(d1s[pi]) * rest;
                if (node.parents[pi]->requires_grad) {
                    Tensor<T>& dp = node.parents[pi]->ensure_grad();
                    T* dst = dp.ptr() + static_cast<std::int64_t>(n) * blk;
                    const T* src = node.grad.ptr() + off;
                    for (std::int64_t i = 0; i < blk; ++i) dst[i] += src[i];
                }
                off += blk;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// huber
// ---------------------------------------------------------------------------

// Mean over elements of the Huber penalty: quadratic within |v| <= delta,
// linear outside.
template <typename T>
Var<T> huber_mean(const Var<T>& x, T delta) {
    if (!(delta > T(0))) throw std::invalid_argument("huber_mean: delta must be positive");
    const std::int64_t M = x.value().numel();
    double acc = 0;
    for (const T& v : x.value().data) {
        const double a = std::abs(static_cast<double>(v));
        const double d = static_cast<double>(delta);
        acc += a <= d ? 0.5 * a * a : d * (a - 0.5 * d);
    }
    acc /= static_cast<double>(M);
    return make_op<T>("huber_mean", Tensor<T>::from({1}, {static_cast<T>(acc)}), {x},
                      [delta, M](Node<T>& node) {
        if (!node.parents[0]->requires_grad) return;
        const Tensor<T>& xv = node.parents[0]->value;
        Tensor<T>& dx = node.parents[0]->ensure_grad();
        const T g = node.grad.data[0] / static_cast<T>(M);
        for (std::size_t i = 0; i < dx.data.size(); ++i)
            dx.data[i] += g * std::clamp(xv.data[i], -delta, delta);
    });
}

}  // namespace wlft
