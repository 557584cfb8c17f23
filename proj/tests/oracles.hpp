#pragma once

// Test-only reference implementations and finite-difference machinery. These
// are written straight from the definitions, independently of the library
// code paths they check. Header is doctest-free so the acceptance binary can
// use it; the doctest-flavored wrappers at the bottom appear only when the
// including file pulled in doctest first.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wlft/autodiff.hpp"
#include "wlft/nn_ops.hpp"
#include "wlft/rng.hpp"
#include "wlft/tensor.hpp"

namespace oracle {

using wlft::Shape;
using wlft::Tensor;
using wlft::Var;

inline double rel_err(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite differences against reverse-mode gradients. make_loss must
// rebuild the graph from the given leaves on every call and return a scalar.
// Returns the worst relative error across every entry of every leaf.
template <typename MakeLoss>
double max_grad_rel_err(const std::vector<Var<double>>& leaves, MakeLoss make_loss,
                        double h = 1e-5) {
    for (auto l : leaves) l.grad().fill(0.0);
    Var<double> loss = make_loss();
    wlft::backward(loss);
    double worst = 0.0;
    for (auto l : leaves) {
        for (std::size_t i = 0; i < l.value().data.size(); ++i) {
            double& slot = l.value().data[i];
            const double orig = slot;
            slot = orig + h;
            const double fp = make_loss().value().data[0];
            slot = orig - h;
            const double fm = make_loss().value().data[0];
            slot = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            worst = std::max(worst, rel_err(l.grad().data[i], numeric));
        }
    }
    return worst;
}

// Same sweep but only over `samples` pseudo-randomly chosen entries per leaf;
// used where exhaustive sweeps would be too slow.
template <typename MakeLoss>
double sampled_grad_rel_err(const std::vector<Var<double>>& leaves, MakeLoss make_loss,
                            int samples, std::uint64_t seed, double h = 1e-5) {
    for (auto l : leaves) l.grad().fill(0.0);
    Var<double> loss = make_loss();
    wlft::backward(loss);
    double worst = 0.0;
    wlft::Rng rng(seed);
    for (auto l : leaves) {
        const std::size_t n = l.value().data.size();
        for (int s = 0; s < samples; ++s) {
            const std::size_t i = static_cast<std::size_t>(rng.uniform_int(n));
            double& slot = l.value().data[i];
            const double orig = slot;
            slot = orig + h;
            const double fp = make_loss().value().data[0];
            slot = orig - h;
            const double fm = make_loss().value().data[0];
            slot = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            worst = std::max(worst, rel_err(l.grad().data[i], numeric));
        }
    }
    return worst;
}

inline Tensor<double> random_tensor(Shape s, wlft::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) throw std::logic_error("max_abs_diff: shape mismatch");
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

// Quadruple-loop convolution, one output element at a time: bias first, then
// accumulation over (c, kh, kw).
template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                       int pad_h, int pad_w, bool reflect) {
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int F = w.shape[0], kH = w.shape[2], kW = w.shape[3];
    const int Ho = (H + 2 * pad_h - kH) / stride + 1;
    const int Wo = (W + 2 * pad_w - kW) / stride + 1;
    auto fetch = [&](int n, int c, int ih, int iw) -> T {
        if (reflect) {
            if (ih < 0) ih = -ih;
            if (ih >= H) ih = 2 * H - 2 - ih;
            if (iw < 0) iw = -iw;
            if (iw >= W) iw = 2 * W - 2 - iw;
            return x.at(n, c, ih, iw);
        }
        if (ih < 0 || ih >= H || iw < 0 || iw >= W) return T(0);
        return x.at(n, c, ih, iw);
    };
    Tensor<T> out({N, F, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    T acc = b.data[static_cast<std::size_t>(f)];
                    for (int c = 0; c < C; ++c)
                        for (int kh = 0; kh < kH; ++kh)
                            for (int kw = 0; kw < kW; ++kw)
                                acc += w.at(f, c, kh, kw) *
                                       fetch(n, c, oh * stride + kh - pad_h, ow * stride + kw - pad_w);
                    out.at(n, f, oh, ow) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> naive_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const int N = x.shape[0], D = x.shape[1], K = w.shape[0];
    Tensor<T> out({N, K});
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
            T acc = b.data[static_cast<std::size_t>(k)];
            for (int d = 0; d < D; ++d) acc += x.at(n, d) * w.at(k, d);
            out.at(n, k) = acc;
        }
    return out;
}

// L applications of the 2x2 block-mean, i.e. the repeated-Haar LL cascade,
// written directly from the block averaging definition.
template <typename T>
Tensor<T> haar_ll_cascade(Tensor<T> x, int levels) {
    for (int l = 0; l < levels; ++l) {
        const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
        Tensor<T> next({N, C, H / 2, W / 2});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < H / 2; ++i)
                    for (int j = 0; j < W / 2; ++j)
                        next.at(n, c, i, j) =
                            (x.at(n, c, 2 * i, 2 * j) + x.at(n, c, 2 * i, 2 * j + 1) +
                             x.at(n, c, 2 * i + 1, 2 * j) + x.at(n, c, 2 * i + 1, 2 * j + 1)) /
                            T(4);
        x = std::move(next);
    }
    return x;
}

// Straight-line transcription of the wavelet regularizer: alpha times the sum
// of per-level Huber means of the details plus beta times the sum of
// batch-averaged squared channel-mean gaps.
template <typename T>
double loss_wt_ref(const std::vector<Tensor<T>>& details,
                   const std::vector<std::pair<Tensor<T>, Tensor<T>>>& level_means, double alpha,
                   double beta, double delta) {
    double total = 0.0;
    for (const auto& d : details) {
        double h = 0.0;
        for (const T& v : d.data) {
            const double a = std::abs(static_cast<double>(v));
            h += a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
        }
        total += alpha * h / static_cast<double>(d.numel());
    }
    for (const auto& [mi, ma] : level_means) {
        const int N = mi.shape[0], C = mi.shape[1];
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
            double norm2 = 0.0;
            for (int c = 0; c < C; ++c) {
                const double diff = static_cast<double>(mi.at(n, c)) - static_cast<double>(ma.at(n, c));
                norm2 += diff * diff;
            }
            acc += norm2;
        }
        total += beta * acc / static_cast<double>(N);
    }
    return total;
}

// Pairwise Mann-Whitney statistic: fraction of (positive, negative) pairs in
// which the positive scores higher, ties counted one half.
inline double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    if (pairs == 0) throw std::logic_error("mann_whitney_auc: need both classes");
    return wins / static_cast<double>(pairs);
}

}  // namespace oracle

#ifdef DOCTEST_LIBRARY_INCLUDED
namespace oracle {

template <typename MakeLoss>
void expect_grads_match(const std::vector<Var<double>>& leaves, MakeLoss make_loss,
                        double tol = 1e-4, double h = 1e-5) {
    const double worst = max_grad_rel_err(leaves, make_loss, h);
    INFO("max relative error vs finite differences: " << worst);
    CHECK(worst < tol);
}

}  // namespace oracle
#endif
