#pragma once

#include <cstdint>
#include <string>

#include "wlft/data.hpp"
#include "wlft/model.hpp"
#include "wlft/train.hpp"

namespace wlft {

// Flat key=value run description covering every model, training and
// augmentation knob plus the input/output paths. A config file fills it,
// command-line flags override single keys, and the fully resolved result is
// echoed next to the run's outputs so any artifact can be reproduced from
// its directory alone.
struct RunConfig {
    // model
    std::string variant = "awtm";
    std::string tap = "pos3";
    int levels = 0;  // 0 means auto: the tap's maximum depth
    std::string preset = "full";
    int side = 256;
    int channels = 1;
    int classes = 0;  // 0 means take the class count from the manifest
    double alpha = 0.1;
    double beta = 0.1;
    double huber_delta = 1.0;

    // training
    int epochs = 100;
    int batch_size = 8;
    double lr0 = 1e-3;
    double momentum = 0.9;
    int lr_half_period = 10;
    std::uint64_t seed = 0;
    int ckpt_every = 5;
    int positive_class = 1;
    std::string precision = "f32";

    // preprocessing and augmentation
    bool equalize = true;
    bool augment = true;
    double flip_p = 0.5;
    double rot_deg = 15.0;
    double translate_frac = 0.1;
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    double bright_lo = 0.8;
    double bright_hi = 1.2;

    // paths and selections
    std::string data;
    std::string out;
    std::string resume;
    std::string checkpoint;
    std::string split = "test";
};

// Sets one key. Both the file parser and the flag override path go through
// here, so they validate identically. Unknown keys and malformed values
// throw ConfigError.
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// Applies a key=value file on top of cfg. `#` starts a comment, blank lines
// are skipped, anything else must be a key=value pair.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Canonical echo: every key, fixed order, doubles at full precision, so the
// text round-trips through apply_config_kv without loss.
std::string resolved_config_text(const RunConfig& cfg);

// WLFT_THREADS, default 1; anything that is not a positive integer throws.
int worker_count();

// classes_from_data supplies the manifest's class count when cfg.classes is 0.
ModelConfig make_model_config(const RunConfig& cfg, int classes_from_data);

// Checkpoint dir and log path land under out_dir; empty out_dir disables both.
TrainConfig make_train_config(const RunConfig& cfg, const std::string& out_dir);

AugmentConfig make_augment_config(const RunConfig& cfg);

}  // namespace wlft
