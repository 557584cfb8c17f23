#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wlft/backbone.hpp"
#include "wlft/layers.hpp"
#include "wlft/wavelet.hpp"

namespace wlft {

enum class Variant { kAwtm, kDawn, kBackboneOnly };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kAwtm: return "awtm";
        case Variant::kDawn: return "dawn";
        case Variant::kBackboneOnly: return "backbone_only";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "awtm") return Variant::kAwtm;
    if (s == "dawn") return Variant::kDawn;
    if (s == "backbone_only") return Variant::kBackboneOnly;
    throw ConfigError("unknown variant '" + s + "' (expected awtm|dawn|backbone_only)");
}

struct ModelConfig {
    BackboneConfig backbone;
    Variant variant = Variant::kAwtm;
    Tap tap = Tap::kPos3;
    int levels = 0;  // 0 resolves to the tap's maximum
    int num_classes = 2;
    double alpha = 0.1;
    double beta = 0.1;
    double huber_delta = 1.0;

    int resolved_levels() const {
        if (variant == Variant::kBackboneOnly) return 0;
        const int bound = tap_max_levels(backbone, tap);
        if (levels == 0) {
            if (bound < 1)
                throw ConfigError("tap " + tap_name(tap) + " feature side " +
                                  std::to_string(backbone.tap_side(tap)) +
                                  " admits no decomposition level");
            return bound;
        }
        if (levels < 1 || levels > bound)
            throw ConfigError("decomposition level " + std::to_string(levels) +
                              " outside the valid range 1.." + std::to_string(bound) + " for tap " +
                              tap_name(tap));
        return levels;
    }
};

// Backbone plus a parallel lifting branch at one tap; pooled frequency
// features are concatenated with the pooled backbone features ahead of a
// single fully connected classifier.
template <typename T>
class Model {
  public:
    ModelConfig cfg;
    ParamStore<T> store;
    Backbone<T> backbone;
    WaveletBranch<T> branch;  // empty for backbone_only
    LinearLayer<T> fc;
    int levels = 0;
    int fc_in = 0;

    static std::unique_ptr<Model> create(const ModelConfig& cfg, std::uint64_t init_seed) {
        auto m = std::unique_ptr<Model>(new Model());
        m->cfg = cfg;
        m->levels = cfg.resolved_levels();
        Rng rng(init_seed);
        m->backbone = Backbone<T>::create(m->store, cfg.backbone, rng);
        const int c_tap = cfg.backbone.tap_channels(cfg.tap);
        int f_wt = 0;
        if (cfg.variant != Variant::kBackboneOnly) {
            const BranchKind kind =
                cfg.variant == Variant::kAwtm ? BranchKind::kAwtm : BranchKind::kDawn;
            m->branch = WaveletBranch<T>::create(m->store, "branch", kind, c_tap, m->levels,
                                                 cfg.backbone.tap_side(cfg.tap), rng);
            const int per_level = cfg.variant == Variant::kDawn ? 3 : 1;
            f_wt = (per_level * m->levels + 1) * c_tap;
        }
        m->fc_in = cfg.backbone.out_width() + f_wt;
        m->fc = LinearLayer<T>::create(m->store, "fc", m->fc_in, cfg.num_classes, rng);
        return m;
    }

    struct Output {
        Var<T> logits;
        WaveletBranchOutput<T> branch;
        bool has_branch = false;
    };

    Output forward(const Var<T>& x, bool train) {
        typename Backbone<T>::Features f = backbone.forward(x, train);
        Output out;
        std::vector<Var<T>> feats{f.f_cnn};
        if (cfg.variant != Variant::kBackboneOnly) {
            out.has_branch = true;
            out.branch = branch.forward(f.taps[static_cast<std::size_t>(tap_index(cfg.tap) - 1)]);
            for (const Var<T>& d : out.branch.details) feats.push_back(global_avg_pool(d));
            feats.push_back(global_avg_pool(out.branch.final_approx));
        }
        Var<T> head_in = feats.size() == 1 ? feats[0] : concat_dim1(feats);
        out.logits = fc.forward(head_in);
        return out;
    }

    struct LossParts {
        Var<T> total, ce, wt;  // wt stays undefined without a wavelet branch
        bool has_wt = false;
    };

    LossParts loss_parts(const Output& out, const std::vector<int>& labels) {
        LossParts parts;
        parts.ce = softmax_cross_entropy(out.logits, labels);
        if (out.has_branch) {
            parts.has_wt = true;
            parts.wt = loss_wt(out.branch, static_cast<T>(cfg.alpha), static_cast<T>(cfg.beta),
                               static_cast<T>(cfg.huber_delta));
            parts.total = add(parts.ce, parts.wt);
        } else {
            parts.total = parts.ce;
        }
        return parts;
    }

    Var<T> total_loss(const Output& out, const std::vector<int>& labels) {
        return loss_parts(out, labels).total;
    }

    std::vector<BatchNorm2dLayer<T>*> bn_layers() {
        std::vector<BatchNorm2dLayer<T>*> out;
        backbone.collect_bn(out);
        return out;
    }

    std::vector<Parameter<T>*> parameters() { return store.all(); }

  private:
    Model() = default;
};

template <typename T>
Tensor<T> predict_proba(const Tensor<T>& logits) {
    return softmax_rows(logits);
}

}  // namespace wlft
