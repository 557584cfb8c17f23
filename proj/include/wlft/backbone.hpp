#pragma once

#include <array>
#include <string>
#include <vector>

#include "wlft/layers.hpp"
#include "wlft/wavelet.hpp"

namespace wlft {

enum class Tap { kPos1 = 1, kPos2, kPos3, kPos4, kPos5 };

inline int tap_index(Tap t) { return static_cast<int>(t); }

inline Tap tap_from_index(int i) {
    if (i < 1 || i > 5) throw ConfigError("tap index " + std::to_string(i) + " out of range 1..5");
    return static_cast<Tap>(i);
}

inline std::string tap_name(Tap t) { return "pos" + std::to_string(tap_index(t)); }

inline Tap parse_tap(const std::string& s) {
    for (int i = 1; i <= 5; ++i)
        if (s == "pos" + std::to_string(i)) return static_cast<Tap>(i);
    throw ConfigError("unknown tap '" + s + "' (expected pos1..pos5)");
}

// Residual backbone shaped like ResNet18. The tiny preset keeps the topology
// (stem, four stages, five taps) while shrinking widths and depth so full
// training runs finish in minutes.
struct BackboneConfig {
    int preset_id = 0;  // 0 full, 1 tiny
    int input_channels = 1;
    int input_side = 256;
    int side_multiple = 32;
    int stem_kernel = 7;
    int stem_stride = 2;
    bool stem_maxpool = true;
    int w0 = 64;
    std::array<int, 4> widths{64, 128, 256, 512};
    std::array<int, 4> blocks{2, 2, 2, 2};

    static BackboneConfig full(int channels = 1, int side = 256) {
        BackboneConfig c;
        c.input_channels = channels;
        c.input_side = side;
        return c;
    }

    static BackboneConfig tiny(int channels = 1, int side = 32) {
        BackboneConfig c;
        c.preset_id = 1;
        c.input_channels = channels;
        c.input_side = side;
        c.side_multiple = 8;
        c.stem_kernel = 3;
        c.stem_stride = 1;
        c.stem_maxpool = false;
        c.w0 = 16;
        c.widths = {16, 32, 64, 128};
        c.blocks = {1, 1, 1, 1};
        return c;
    }

    static BackboneConfig preset(int preset_id, int channels, int side) {
        if (preset_id == 0) return full(channels, side);
        if (preset_id == 1) return tiny(channels, side);
        throw ConfigError("unknown backbone preset id " + std::to_string(preset_id));
    }

    void validate() const {
        if (input_side <= 0 || input_side % side_multiple != 0)
            throw ConfigError("input side " + std::to_string(input_side) + " must be a multiple of " +
                              std::to_string(side_multiple));
        if (input_channels != 1 && input_channels != 3)
            throw ConfigError("input channels must be 1 or 3");
    }

    int out_width() const { return widths[3]; }

    int tap_channels(Tap t) const {
        const int i = tap_index(t);
        return i == 1 ? w0 : widths[static_cast<std::size_t>(i - 2)];
    }

    // pos1 taps the stem activation before the maxpool; pos2..pos5 tap the
    // stage outputs. Stage 1 keeps resolution, stages 2..4 halve it.
    int tap_side(Tap t) const {
        const int stem_out = input_side / stem_stride;
        const int i = tap_index(t);
        if (i == 1) return stem_out;
        int side = stem_maxpool ? stem_out / 2 : stem_out;
        for (int stage = 2; stage <= i - 1; ++stage) side /= 2;
        return side;
    }
};

inline int tap_max_levels(const BackboneConfig& cfg, Tap t) {
    return max_levels(cfg.tap_side(t));
}

template <typename T>
struct BasicBlock {
    Conv2dLayer<T> conv1, conv2;
    BatchNorm2dLayer<T> bn1, bn2;
    bool has_proj = false;
    Conv2dLayer<T> proj;
    BatchNorm2dLayer<T> bn_proj;

    static BasicBlock create(ParamStore<T>& store, const std::string& name, int in_c, int out_c,
                             int stride, Rng& rng) {
        BasicBlock b;
        b.conv1 = Conv2dLayer<T>::create(store, name + ".conv1", in_c, out_c, 3, 3, stride,
                                         Padding::kZero, false, rng);
        b.bn1 = BatchNorm2dLayer<T>::create(store, name + ".bn1", out_c);
        b.conv2 = Conv2dLayer<T>::create(store, name + ".conv2", out_c, out_c, 3, 3, 1,
                                         Padding::kZero, false, rng);
        b.bn2 = BatchNorm2dLayer<T>::create(store, name + ".bn2", out_c);
        b.has_proj = stride != 1 || in_c != out_c;
        if (b.has_proj) {
            b.proj = Conv2dLayer<T>::create(store, name + ".proj", in_c, out_c, 1, 1, stride,
                                            Padding::kZero, false, rng);
            b.bn_proj = BatchNorm2dLayer<T>::create(store, name + ".bnp", out_c);
        }
        return b;
    }

    Var<T> forward(const Var<T>& x, bool train) {
        Var<T> h = relu(bn1.forward(conv1.forward(x), train));
        h = bn2.forward(conv2.forward(h), train);
        Var<T> shortcut = has_proj ? bn_proj.forward(proj.forward(x), train) : x;
        return relu(add(h, shortcut));
    }

    void collect_bn(std::vector<BatchNorm2dLayer<T>*>& out) {
        out.push_back(&bn1);
        out.push_back(&bn2);
        if (has_proj) out.push_back(&bn_proj);
    }
};

template <typename T>
struct Backbone {
    BackboneConfig cfg;
    Conv2dLayer<T> stem;
    BatchNorm2dLayer<T> stem_bn;
    std::vector<std::vector<BasicBlock<T>>> stages;

    static Backbone create(ParamStore<T>& store, const BackboneConfig& cfg, Rng& rng) {
        cfg.validate();
        Backbone b;
        b.cfg = cfg;
        b.stem = Conv2dLayer<T>::create(store, "backbone.stem", cfg.input_channels, cfg.w0,
                                        cfg.stem_kernel, cfg.stem_kernel, cfg.stem_stride,
                                        Padding::kZero, false, rng);
        b.stem_bn = BatchNorm2dLayer<T>::create(store, "backbone.stem_bn", cfg.w0);
        int in_c = cfg.w0;
        for (int s = 0; s < 4; ++s) {
            std::vector<BasicBlock<T>> stage;
            const int out_c = cfg.widths[static_cast<std::size_t>(s)];
            for (int k = 0; k < cfg.blocks[static_cast<std::size_t>(s)]; ++k) {
                const int stride = (k == 0 && s > 0) ? 2 : 1;
                stage.push_back(BasicBlock<T>::create(
                    store, "backbone.s" + std::to_string(s + 1) + "b" + std::to_string(k + 1),
                    in_c, out_c, stride, rng));
                in_c = out_c;
            }
            b.stages.push_back(std::move(stage));
        }
        return b;
    }

    struct Features {
        Var<T> f_cnn;                // pooled final activation [N, w4]
        std::array<Var<T>, 5> taps;  // pos1..pos5 activations
    };

    Features forward(const Var<T>& x, bool train) {
        if (x.shape()[1] != cfg.input_channels || x.shape()[2] != cfg.input_side ||
            x.shape()[3] != cfg.input_side)
            throw std::invalid_argument("backbone: input shape " + shape_str(x.shape()) +
                                        " does not match configured " +
                                        std::to_string(cfg.input_channels) + "x" +
                                        std::to_string(cfg.input_side) + " square input");
        Features f;
        Var<T> h = relu(stem_bn.forward(stem.forward(x), train));
        f.taps[0] = h;
        if (cfg.stem_maxpool) h = maxpool2d(h, 3, 2, 1);
        for (int s = 0; s < 4; ++s) {
            for (auto& block : stages[static_cast<std::size_t>(s)]) h = block.forward(h, train);
            f.taps[static_cast<std::size_t>(s + 1)] = h;
        }
        f.f_cnn = global_avg_pool(h);
        return f;
    }

    void collect_bn(std::vector<BatchNorm2dLayer<T>*>& out) {
        out.push_back(&stem_bn);
        for (auto& stage : stages)
            for (auto& block : stage) block.collect_bn(out);
    }
};

}  // namespace wlft
