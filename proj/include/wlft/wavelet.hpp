#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wlft/errors.hpp"
#include "wlft/layers.hpp"
#include "wlft/nn_ops.hpp"

namespace wlft {

// ---------------------------------------------------------------------------
// fixed Haar machinery
// ---------------------------------------------------------------------------

// Averaging normalization: LL is the 2x2 block mean, so mean(LL) == mean(x)
// and the mean-consistency term of the wavelet loss starts at zero.

template <typename T>
struct SubbandQuad {
    Var<T> ll, lh, hl, hh;
};

template <typename T>
struct TensorQuad {
    Tensor<T> ll, lh, hl, hh;
};

template <typename T>
SubbandQuad<T> haar_split(const Var<T>& x) {
    require_rank(x.value(), 4, "haar_split");
    if (x.shape()[2] % 2 != 0 || x.shape()[3] % 2 != 0)
        throw std::invalid_argument("haar_split: spatial dims must be even, got " +
                                    shape_str(x.shape()));
    auto top = rows_even(x), bot = rows_odd(x);
    auto a = cols_even(top), b = cols_odd(top);
    auto c = cols_even(bot), d = cols_odd(bot);
    const T q = T(0.25);
    SubbandQuad<T> out;
    out.ll = scale(add(add(a, b), add(c, d)), q);
    out.lh = scale(sub(add(a, b), add(c, d)), q);
    out.hl = scale(add(sub(a, b), sub(c, d)), q);
    out.hh = scale(sub(sub(a, b), sub(c, d)), q);
    return out;
}

template <typename T>
TensorQuad<T> haar_split_plain(const Tensor<T>& x) {
    require_rank(x, 4, "haar_split");
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("haar_split: spatial dims must be even, got " + shape_str(x.shape));
    TensorQuad<T> q{Tensor<T>({N, C, H / 2, W / 2}), Tensor<T>({N, C, H / 2, W / 2}),
                    Tensor<T>({N, C, H / 2, W / 2}), Tensor<T>({N, C, H / 2, W / 2})};
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H / 2; ++i)
                for (int j = 0; j < W / 2; ++j) {
                    const T a = x.at(n, c, 2 * i, 2 * j);
                    const T b = x.at(n, c, 2 * i, 2 * j + 1);
                    const T cc = x.at(n, c, 2 * i + 1, 2 * j);
                    const T d = x.at(n, c, 2 * i + 1, 2 * j + 1);
                    q.ll.at(n, c, i, j) = (a + b + cc + d) / T(4);
                    q.lh.at(n, c, i, j) = (a + b - cc - d) / T(4);
                    q.hl.at(n, c, i, j) = (a - b + cc - d) / T(4);
                    q.hh.at(n, c, i, j) = (a - b - cc + d) / T(4);
                }
    return q;
}

template <typename T>
Tensor<T> haar_inverse_plain(const TensorQuad<T>& q) {
    require_rank(q.ll, 4, "haar_inverse");
    if (q.lh.shape != q.ll.shape || q.hl.shape != q.ll.shape || q.hh.shape != q.ll.shape)
        throw std::invalid_argument("haar_inverse: subband shape mismatch");
    const int N = q.ll.shape[0], C = q.ll.shape[1], Hh = q.ll.shape[2], Wh = q.ll.shape[3];
    Tensor<T> x({N, C, 2 * Hh, 2 * Wh});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Hh; ++i)
                for (int j = 0; j < Wh; ++j) {
                    const T ll = q.ll.at(n, c, i, j), lh = q.lh.at(n, c, i, j);
                    const T hl = q.hl.at(n, c, i, j), hh = q.hh.at(n, c, i, j);
                    x.at(n, c, 2 * i, 2 * j) = ll + lh + hl + hh;
                    x.at(n, c, 2 * i, 2 * j + 1) = ll + lh - hl - hh;
                    x.at(n, c, 2 * i + 1, 2 * j) = ll - lh + hl - hh;
                    x.at(n, c, 2 * i + 1, 2 * j + 1) = ll - lh - hl + hh;
                }
    return x;
}

// De-interleave along one spatial axis (axis 2 or 3): evens first, odds second.
template <typename T>
std::pair<Var<T>, Var<T>> lazy_split(const Var<T>& x, int axis) {
    if (axis == 2) return {rows_even(x), rows_odd(x)};
    if (axis == 3) return {cols_even(x), cols_odd(x)};
    throw std::invalid_argument("lazy_split: axis must be 2 or 3");
}

template <typename T>
Tensor<T> interleave_plain(const Tensor<T>& even, const Tensor<T>& odd, int axis) {
    require_rank(even, 4, "interleave");
    if (even.shape != odd.shape) throw std::invalid_argument("interleave: shape mismatch");
    if (axis != 2 && axis != 3) throw std::invalid_argument("interleave: axis must be 2 or 3");
    Shape s = even.shape;
    s[static_cast<std::size_t>(axis)] *= 2;
    Tensor<T> out(s);
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const bool odd_slot = (axis == 2 ? i : j) % 2 != 0;
                    const int si = axis == 2 ? i / 2 : i;
                    const int sj = axis == 3 ? j / 2 : j;
                    out.at(n, c, i, j) = odd_slot ? odd.at(n, c, si, sj) : even.at(n, c, si, sj);
                }
    return out;
}

// (LH + HL + HH) / 3, the averaged high-frequency input to the lifting step.
template <typename T>
Var<T> high_avg(const SubbandQuad<T>& q) {
    return scale(add(add(q.lh, q.hl), q.hh), T(1) / T(3));
}

// Levels are bounded so the coarsest approximation keeps side >= 4.
inline int max_levels(int side) {
    if (side < 4) throw ConfigError("no valid decomposition for side " + std::to_string(side) +
                                    " (must be >= 4)");
    int n = 0;
    while (side >= 8) {
        side /= 2;
        ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// learnable lifting
// ---------------------------------------------------------------------------

template <typename T>
struct AwtmParams {
    PredictUpdateNet<T> p, u;

    static AwtmParams create(ParamStore<T>& store, const std::string& prefix, int c, Rng& rng) {
        AwtmParams a;
        a.p = PredictUpdateNet<T>::create(store, prefix + ".p", c, 3, 3, rng);
        a.u = PredictUpdateNet<T>::create(store, prefix + ".u", c, 3, 3, rng);
        return a;
    }
};

template <typename T>
struct LiftOutput {
    Var<T> approx, detail;
};

// One lifting level: Haar split, then predict the averaged highs from LL and
// update LL with the prediction residual.
template <typename T>
LiftOutput<T> awtm_forward(const Var<T>& x, const AwtmParams<T>& params) {
    SubbandQuad<T> q = haar_split(x);
    Var<T> h = high_avg(q);
    Var<T> d = sub(h, params.p.forward(q.ll));
    Var<T> a = add(q.ll, params.u.forward(d));
    return {a, d};
}

// Directional lifting: one horizontal pass (1x3 kernels) followed by two
// independent vertical passes (3x1 kernels) on its approximation and detail.
template <typename T>
struct DawnParams {
    PredictUpdateNet<T> p_h, u_h;    // horizontal
    PredictUpdateNet<T> p_va, u_va;  // vertical pass on the horizontal approximation
    PredictUpdateNet<T> p_vd, u_vd;  // vertical pass on the horizontal detail

    static DawnParams create(ParamStore<T>& store, const std::string& prefix, int c, Rng& rng) {
        DawnParams d;
        d.p_h = PredictUpdateNet<T>::create(store, prefix + ".ph", c, 1, 3, rng);
        d.u_h = PredictUpdateNet<T>::create(store, prefix + ".uh", c, 1, 3, rng);
        d.p_va = PredictUpdateNet<T>::create(store, prefix + ".pva", c, 3, 1, rng);
        d.u_va = PredictUpdateNet<T>::create(store, prefix + ".uva", c, 3, 1, rng);
        d.p_vd = PredictUpdateNet<T>::create(store, prefix + ".pvd", c, 3, 1, rng);
        d.u_vd = PredictUpdateNet<T>::create(store, prefix + ".uvd", c, 3, 1, rng);
        return d;
    }
};

template <typename T>
SubbandQuad<T> dawn_lifting_forward(const Var<T>& x, const DawnParams<T>& params) {
    require_rank(x.value(), 4, "dawn_lifting_forward");
    if (x.shape()[2] % 2 != 0 || x.shape()[3] % 2 != 0)
        throw std::invalid_argument("dawn_lifting_forward: spatial dims must be even, got " +
                                    shape_str(x.shape()));
    auto [even_w, odd_w] = lazy_split(x, 3);
    Var<T> d_h = sub(odd_w, params.p_h.forward(even_w));
    Var<T> c_h = add(even_w, params.u_h.forward(d_h));

    auto lift_v = [](const Var<T>& in, const PredictUpdateNet<T>& p,
                     const PredictUpdateNet<T>& u) {
        auto [even_h, odd_h] = lazy_split(in, 2);
        Var<T> d = sub(odd_h, p.forward(even_h));
        Var<T> c = add(even_h, u.forward(d));
        return std::pair<Var<T>, Var<T>>{c, d};
    };
    auto [ll, lh] = lift_v(c_h, params.p_va, params.u_va);
    auto [hl, hh] = lift_v(d_h, params.p_vd, params.u_vd);
    return {ll, lh, hl, hh};
}

// ---------------------------------------------------------------------------
// multi-level branch
// ---------------------------------------------------------------------------

enum class BranchKind { kAwtm, kDawn };

template <typename T>
struct WaveletBranchOutput {
    std::vector<Var<T>> details;                         // D_1..D_L
    std::vector<Var<T>> approxes;                        // A_1..A_L
    Var<T> final_approx;                                 // A_L, same node as approxes.back()
    std::vector<std::pair<Var<T>, Var<T>>> level_means;  // per-level ([N,C] input mean, [N,C] approx mean)
};

template <typename T>
struct WaveletBranch {
    BranchKind kind = BranchKind::kAwtm;
    int levels = 1;
    int channels = 0;
    std::vector<AwtmParams<T>> awtm;
    std::vector<DawnParams<T>> dawn;

    static WaveletBranch create(ParamStore<T>& store, const std::string& prefix, BranchKind kind,
                                int c, int levels, int input_side, Rng& rng) {
        if (levels < 1) throw ConfigError("wavelet branch needs at least 1 level");
        const int bound = max_levels(input_side);
        if (levels > bound)
            throw ConfigError("decomposition level " + std::to_string(levels) +
                              " exceeds the maximum " + std::to_string(bound) + " for side " +
                              std::to_string(input_side));
        WaveletBranch b;
        b.kind = kind;
        b.levels = levels;
        b.channels = c;
        for (int l = 1; l <= levels; ++l) {
            const std::string p = prefix + ".l" + std::to_string(l);
            if (kind == BranchKind::kAwtm)
                b.awtm.push_back(AwtmParams<T>::create(store, p, c, rng));
            else
                b.dawn.push_back(DawnParams<T>::create(store, p, c, rng));
        }
        return b;
    }

    // Per level the detail map is D_i for awtm and the channel-concatenated
    // (lh, hl, hh) triple for dawn; the approximation chains to the next level.
    WaveletBranchOutput<T> forward(const Var<T>& x) const {
        WaveletBranchOutput<T> out;
        Var<T> cur = x;
        for (int l = 0; l < levels; ++l) {
            Var<T> mean_in = global_avg_pool(cur);
            Var<T> approx, detail;
            if (kind == BranchKind::kAwtm) {
                LiftOutput<T> lo = awtm_forward(cur, awtm[static_cast<std::size_t>(l)]);
                approx = lo.approx;
                detail = lo.detail;
            } else {
                SubbandQuad<T> q = dawn_lifting_forward(cur, dawn[static_cast<std::size_t>(l)]);
                approx = q.ll;
                detail = concat_dim1<T>({q.lh, q.hl, q.hh});
            }
            out.details.push_back(detail);
            out.approxes.push_back(approx);
            out.level_means.emplace_back(mean_in, global_avg_pool(approx));
            cur = approx;
        }
        out.final_approx = cur;
        return out;
    }
};

// ---------------------------------------------------------------------------
// wavelet loss
// ---------------------------------------------------------------------------

// alpha * sum_i huber(D_i) + beta * sum_i ||m^I_i - m^A_i||^2, the squared
// norm taken over channels and averaged over the batch.
template <typename T>
Var<T> loss_wt(const WaveletBranchOutput<T>& branch, T alpha, T beta, T delta = T(1)) {
    if (branch.details.empty()) throw std::invalid_argument("loss_wt: empty branch output");
    Var<T> total = Var<T>::constant(Tensor<T>({1}));
    for (std::size_t i = 0; i < branch.details.size(); ++i) {
        total = add(total, scale(huber_mean(branch.details[i], delta), alpha));
        const auto& [m_in, m_ap] = branch.level_means[i];
        Var<T> diff = sub(m_in, m_ap);
        const T inv_batch = T(1) / static_cast<T>(m_in.shape()[0]);
        total = add(total, scale(sum(mul(diff, diff)), beta * inv_batch));
    }
    return total;
}

}  // namespace wlft
