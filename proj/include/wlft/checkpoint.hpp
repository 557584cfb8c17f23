#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "wlft/errors.hpp"
#include "wlft/model.hpp"
#include "wlft/tensor.hpp"

namespace wlft {

// Versioned binary container: magic `WLFT`, format version, record count,
// then per-record (name length, name UTF-8, rank, dims, raw little-endian
// 32-bit float payload). Reserved name prefixes carry non-parameter state:
//   bnstat:<layer>.{mean,var}   batchnorm running statistics
//   momentum:<param>            SGD momentum buffers
//   meta:{model,train}          encoded configuration / progress words
struct CkptRecord {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<CkptRecord>& records);
std::vector<CkptRecord> load_checkpoint(const std::string& path);

const CkptRecord* find_record(const std::vector<CkptRecord>& records, const std::string& name);

// Train-state words carried across save/resume. The 64-bit values are stored
// bit-exactly as pairs of float-aliased 32-bit halves.
struct TrainMeta {
    std::int64_t epoch_completed = 0;
    std::uint64_t seed = 0;
    double best_val_acc = -1.0;
};

inline std::vector<float> encode_u64(std::uint64_t v) {
    return {std::bit_cast<float>(static_cast<std::uint32_t>(v & 0xffffffffull)),
            std::bit_cast<float>(static_cast<std::uint32_t>(v >> 32))};
}

inline std::uint64_t decode_u64(float lo, float hi) {
    return static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(lo)) |
           (static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(hi)) << 32);
}

inline CkptRecord encode_train_meta(const TrainMeta& m) {
    std::vector<float> w;
    auto epoch = encode_u64(static_cast<std::uint64_t>(m.epoch_completed));
    auto seed = encode_u64(m.seed);
    auto best = encode_u64(std::bit_cast<std::uint64_t>(m.best_val_acc));
    w.insert(w.end(), epoch.begin(), epoch.end());
    w.insert(w.end(), seed.begin(), seed.end());
    w.insert(w.end(), best.begin(), best.end());
    return {"meta:train", {static_cast<int>(w.size())}, std::move(w)};
}

inline TrainMeta decode_train_meta(const CkptRecord& r) {
    if (r.data.size() != 6) throw DataError("checkpoint: malformed meta:train record");
    TrainMeta m;
    m.epoch_completed = static_cast<std::int64_t>(decode_u64(r.data[0], r.data[1]));
    m.seed = decode_u64(r.data[2], r.data[3]);
    m.best_val_acc = std::bit_cast<double>(decode_u64(r.data[4], r.data[5]));
    return m;
}

inline CkptRecord encode_model_meta(const ModelConfig& cfg, int resolved_levels) {
    std::vector<float> w{
        static_cast<float>(static_cast<int>(cfg.variant)),
        static_cast<float>(tap_index(cfg.tap)),
        static_cast<float>(resolved_levels),
        static_cast<float>(cfg.num_classes),
        static_cast<float>(cfg.backbone.input_channels),
        static_cast<float>(cfg.backbone.input_side),
        static_cast<float>(cfg.backbone.preset_id),
        static_cast<float>(cfg.alpha),
        static_cast<float>(cfg.beta),
        static_cast<float>(cfg.huber_delta),
    };
    return {"meta:model", {static_cast<int>(w.size())}, std::move(w)};
}

inline ModelConfig decode_model_meta(const CkptRecord& r) {
    if (r.data.size() != 10) throw DataError("checkpoint: malformed meta:model record");
    ModelConfig cfg;
    cfg.variant = static_cast<Variant>(static_cast<int>(r.data[0]));
    cfg.tap = tap_from_index(static_cast<int>(r.data[1]));
    cfg.levels = static_cast<int>(r.data[2]);
    cfg.num_classes = static_cast<int>(r.data[3]);
    cfg.backbone = BackboneConfig::preset(static_cast<int>(r.data[6]),
                                          static_cast<int>(r.data[4]),
                                          static_cast<int>(r.data[5]));
    cfg.alpha = static_cast<double>(r.data[7]);
    cfg.beta = static_cast<double>(r.data[8]);
    cfg.huber_delta = static_cast<double>(r.data[9]);
    if (cfg.variant == Variant::kBackboneOnly) cfg.levels = 0;
    return cfg;
}

// ---------------------------------------------------------------------------
// model <-> record conversion
// ---------------------------------------------------------------------------

template <typename T>
std::vector<float> to_f32(const Tensor<T>& t) {
    std::vector<float> out(t.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(t.data[i]);
    return out;
}

template <typename T>
void from_f32(const CkptRecord& r, Tensor<T>& dst) {
    for (std::size_t i = 0; i < r.data.size(); ++i) dst.data[i] = static_cast<T>(r.data[i]);
}

template <typename T>
std::vector<CkptRecord> model_records(Model<T>& m, bool with_momentum) {
    std::vector<CkptRecord> recs;
    for (Parameter<T>* p : m.parameters()) recs.push_back({p->name, p->tensor().shape, to_f32(p->tensor())});
    for (BatchNorm2dLayer<T>* bn : m.bn_layers()) {
        recs.push_back({"bnstat:" + bn->name + ".mean", bn->running_mean.shape, to_f32(bn->running_mean)});
        recs.push_back({"bnstat:" + bn->name + ".var", bn->running_var.shape, to_f32(bn->running_var)});
    }
    if (with_momentum)
        for (Parameter<T>* p : m.parameters())
            recs.push_back({"momentum:" + p->name, p->momentum.shape, to_f32(p->momentum)});
    recs.push_back(encode_model_meta(m.cfg, m.levels));
    return recs;
}

// Loads parameters and batchnorm state by name; collects every mismatch
// before failing so the error names all offenders at once.
template <typename T>
void load_model_records(Model<T>& m, const std::vector<CkptRecord>& recs, bool with_momentum) {
    std::vector<std::string> problems;
    auto pull = [&](const std::string& name, Tensor<T>& dst) {
        const CkptRecord* r = find_record(recs, name);
        if (!r) {
            problems.push_back("missing record " + name);
            return;
        }
        if (r->shape != dst.shape) {
            problems.push_back("shape mismatch for " + name + ": checkpoint " + shape_str(r->shape) +
                               " vs model " + shape_str(dst.shape));
            return;
        }
        from_f32(*r, dst);
    };
    for (Parameter<T>* p : m.parameters()) pull(p->name, p->tensor());
    for (BatchNorm2dLayer<T>* bn : m.bn_layers()) {
        pull("bnstat:" + bn->name + ".mean", bn->running_mean);
        pull("bnstat:" + bn->name + ".var", bn->running_var);
    }
    if (with_momentum)
        for (Parameter<T>* p : m.parameters()) pull("momentum:" + p->name, p->momentum);
    if (!problems.empty()) {
        std::string msg = "checkpoint incompatible with model:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw DataError(msg);
    }
}

}  // namespace wlft
