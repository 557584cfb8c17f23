#pragma once

#include <string>
#include <vector>

#include "wlft/rng.hpp"
#include "wlft/tensor.hpp"

namespace wlft {

struct ManifestRow {
    std::string path;  // relative to the manifest's directory
    int label = 0;
    std::string split;  // train | val | test
};

struct Manifest {
    std::string root;  // directory containing the manifest file
    std::vector<ManifestRow> rows;
    int num_classes = 0;
};

// CSV with header `path,label,split`. Labels must cover 0..C-1, paths must be
// unique, and the train and test splits must both be nonempty.
Manifest load_manifest(const std::string& csv_path);
void save_manifest(const std::string& csv_path, const std::vector<ManifestRow>& rows);

struct AugmentConfig {
    double flip_p = 0.5;
    double rot_deg = 15.0;
    double translate_frac = 0.1;
    double scale_lo = 0.9, scale_hi = 1.1;
    double bright_lo = 0.8, bright_hi = 1.2;

    static AugmentConfig off() { return {0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0}; }
};

// 256-bin CDF equalization per channel; constant channels pass through.
Tensor<float> hist_equalize(const Tensor<float>& img);

// Flip / rotate / translate / scale via one composed inverse warp with
// bilinear sampling and edge replication, then a brightness scale. Always
// draws the same number of variates so parameter choices never shift the
// stream for later samples.
Tensor<float> augment(const Tensor<float>& img, const AugmentConfig& cfg, Rng& rng);

// Oriented sinusoidal gratings plus Gaussian noise; class identity is the
// (spatial frequency, orientation) pair. Writes `<root>/class<k>/img<i>.pgm`
// files and `<root>/manifest.csv` with a deterministic 80/20 train/test split.
Manifest synth_textures(int num_classes, int per_class, int side, std::uint64_t seed,
                        const std::string& root);

struct Batch {
    Tensor<float> x;  // [N,C,H,W]
    std::vector<int> labels;
};

// Loads every sample of a manifest up front (decode, resize, optional
// equalization); augmentation is applied per epoch in epoch_batches. Each
// sample's augmentation stream is keyed by (seed, epoch, row index), so
// batching order and worker count can never change the pixels.
class DataPipeline {
  public:
    DataPipeline(Manifest manifest, int side, bool equalize);

    int num_classes() const { return manifest_.num_classes; }
    int side() const { return side_; }
    int channels() const { return channels_; }
    const Manifest& manifest() const { return manifest_; }
    std::vector<int> split_indices(const std::string& split) const;
    bool has_split(const std::string& split) const;

    // train=true shuffles rows (keyed by seed and epoch) and augments each
    // sample; train=false keeps manifest order and raw pixels.
    std::vector<Batch> epoch_batches(const std::string& split, int batch_size, std::uint64_t seed,
                                     int epoch, bool train, const AugmentConfig& aug) const;

  private:
    Manifest manifest_;
    int side_;
    int channels_ = 1;
    std::vector<Tensor<float>> cache_;  // preprocessed [C,H,W] per row
};

}  // namespace wlft
