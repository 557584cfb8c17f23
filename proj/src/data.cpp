#include "wlft/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "wlft/errors.hpp"
#include "wlft/image.hpp"

namespace wlft {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

bool valid_split(const std::string& s) { return s == "train" || s == "val" || s == "test"; }

}  // namespace

Manifest load_manifest(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open manifest: " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest: " + csv_path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "path,label,split")
        throw DataError("manifest header must be `path,label,split`: " + csv_path);

    Manifest m;
    std::set<std::string> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw DataError("manifest line " + std::to_string(line_no) + " needs 3 fields: " +
                            csv_path);
        ManifestRow row;
        row.path = fields[0];
        try {
            size_t pos = 0;
            row.label = std::stoi(fields[1], &pos);
            if (pos != fields[1].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw DataError("manifest line " + std::to_string(line_no) + " has a bad label: " +
                            csv_path);
        }
        row.split = fields[2];
        if (row.path.empty() || row.label < 0 || !valid_split(row.split))
            throw DataError("manifest line " + std::to_string(line_no) + " is invalid: " +
                            csv_path);
        if (!seen.insert(row.path).second)
            throw DataError("duplicate manifest path: " + row.path);
        m.rows.push_back(std::move(row));
    }
    if (m.rows.empty()) throw DataError("manifest has no rows: " + csv_path);

    int max_label = 0;
    for (const auto& r : m.rows) max_label = std::max(max_label, r.label);
    m.num_classes = max_label + 1;
    std::vector<int> counts(static_cast<size_t>(m.num_classes), 0);
    int n_train = 0, n_test = 0;
    for (const auto& r : m.rows) {
        ++counts[static_cast<size_t>(r.label)];
        if (r.split == "train") ++n_train;
        if (r.split == "test") ++n_test;
    }
    for (int c = 0; c < m.num_classes; ++c) {
        if (counts[static_cast<size_t>(c)] == 0)
            throw DataError("manifest labels are not contiguous, class " + std::to_string(c) +
                            " is missing: " + csv_path);
    }
    if (n_train == 0) throw DataError("manifest has no train rows: " + csv_path);
    if (n_test == 0) throw DataError("manifest has no test rows: " + csv_path);

    std::filesystem::path dir = std::filesystem::path(csv_path).parent_path();
    m.root = dir.empty() ? std::string(".") : dir.string();
    return m;
}

void save_manifest(const std::string& csv_path, const std::vector<ManifestRow>& rows) {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write manifest: " + csv_path);
    out << "path,label,split\n";
    for (const auto& r : rows) out << r.path << ',' << r.label << ',' << r.split << '\n';
    if (!out) throw DataError("short write on manifest: " + csv_path);
}

Tensor<float> hist_equalize(const Tensor<float>& img) {
    require_rank(img, 3, "hist_equalize input");
    const int c_dim = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int total = h * w;
    Tensor<float> out(img.shape);
    for (int c = 0; c < c_dim; ++c) {
        int counts[256] = {0};
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                int bin = static_cast<int>(std::lround(v * 255.0f));
                ++counts[bin];
            }
        int cdf[256];
        int acc = 0;
        for (int b = 0; b < 256; ++b) {
            acc += counts[b];
            cdf[b] = acc;
        }
        int cdf_min = 0;
        for (int b = 0; b < 256; ++b) {
            if (counts[b] > 0) {
                cdf_min = cdf[b];
                break;
            }
        }
        if (cdf_min == total) {
            // constant channel, nothing to redistribute
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
            continue;
        }
        float lut[256];
        const float denom = static_cast<float>(total - cdf_min);
        for (int b = 0; b < 256; ++b)
            lut[b] = static_cast<float>(cdf[b] - cdf_min) / denom;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                int bin = static_cast<int>(std::lround(v * 255.0f));
                out.at(c, y, x) = lut[bin];
            }
    }
    return out;
}

namespace {

float sample_bilinear_clamped(const Tensor<float>& img, int c, double y, double x) {
    const int h = img.dim(1), w = img.dim(2);
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double wy = y - y0, wx = x - x0;
    const double top = (1.0 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
    const double bot = (1.0 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
    return static_cast<float>((1.0 - wy) * top + wy * bot);
}

}  // namespace

Tensor<float> augment(const Tensor<float>& img, const AugmentConfig& cfg, Rng& rng) {
    require_rank(img, 3, "augment input");
    const int c_dim = img.dim(0), h = img.dim(1), w = img.dim(2);

    // fixed draw order keeps the stream layout independent of the config
    const bool flip = rng.bernoulli(cfg.flip_p);
    const double rot = rng.uniform(-cfg.rot_deg, cfg.rot_deg) * (3.14159265358979323846 / 180.0);
    const double tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * w;
    const double ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * h;
    const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const double bright = rng.uniform(cfg.bright_lo, cfg.bright_hi);

    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double cosr = std::cos(rot), sinr = std::sin(rot);

    Tensor<float> out(img.shape);
    for (int yo = 0; yo < h; ++yo) {
        for (int xo = 0; xo < w; ++xo) {
            // invert translate, scale, rotate about the center, then flip
            double u = (xo - cx - tx) / scale;
            double v = (yo - cy - ty) / scale;
            double xs = cosr * u + sinr * v + cx;
            double ys = -sinr * u + cosr * v + cy;
            if (flip) xs = (w - 1) - xs;
            for (int c = 0; c < c_dim; ++c) {
                float s = sample_bilinear_clamped(img, c, ys, xs);
                out.at(c, yo, xo) = std::clamp(static_cast<float>(s * bright), 0.0f, 1.0f);
            }
        }
    }
    return out;
}

Manifest synth_textures(int num_classes, int per_class, int side, std::uint64_t seed,
                        const std::string& root) {
    if (num_classes < 2 || per_class < 5 || side < 8)
        throw ConfigError("synth_textures needs >=2 classes, >=5 images per class, side >=8");
    static const double orients[3] = {0.0, 3.14159265358979323846 / 2.0,
                                      3.14159265358979323846 / 4.0};
    std::filesystem::create_directories(root);

    std::vector<ManifestRow> rows;
    const int n_train = per_class * 4 / 5;
    for (int k = 0; k < num_classes; ++k) {
        const std::string cls_dir = root + "/class" + std::to_string(k);
        std::filesystem::create_directories(cls_dir);
        const double freq = 4.0 * std::pow(2.0, k / 3);
        const double theta = orients[k % 3];
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int i = 0; i < per_class; ++i) {
            Rng r(mix_seed(seed, 4, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)));
            const double phase = r.uniform(0.0, 2.0 * 3.14159265358979323846);
            Tensor<float> img({1, side, side});
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x) {
                    const double arg =
                        2.0 * 3.14159265358979323846 * freq * (x * ct + y * st) / side + phase;
                    double v = 0.5 + 0.3 * std::sin(arg) + 0.1 * r.normal();
                    img.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
            const std::string rel = "class" + std::to_string(k) + "/img" + std::to_string(i) +
                                    ".pgm";
            save_pgm(root + "/" + rel, img);
            rows.push_back({rel, k, i < n_train ? "train" : "test"});
        }
    }
    save_manifest(root + "/manifest.csv", rows);
    return load_manifest(root + "/manifest.csv");
}

DataPipeline::DataPipeline(Manifest manifest, int side, bool equalize)
    : manifest_(std::move(manifest)), side_(side) {
    if (side_ < 1) throw ConfigError("pipeline side must be positive");
    cache_.reserve(manifest_.rows.size());
    for (const auto& row : manifest_.rows) {
        Tensor<float> img = load_netpbm(manifest_.root + "/" + row.path);
        if (cache_.empty()) {
            channels_ = img.dim(0);
        } else if (img.dim(0) != channels_) {
            throw DataError("mixed channel counts in dataset: " + row.path);
        }
        if (img.dim(1) != side_ || img.dim(2) != side_) img = resize_bilinear(img, side_, side_);
        if (equalize) img = hist_equalize(img);
        cache_.push_back(std::move(img));
    }
}

std::vector<int> DataPipeline::split_indices(const std::string& split) const {
    std::vector<int> idx;
    for (size_t i = 0; i < manifest_.rows.size(); ++i)
        if (manifest_.rows[i].split == split) idx.push_back(static_cast<int>(i));
    return idx;
}

bool DataPipeline::has_split(const std::string& split) const {
    return !split_indices(split).empty();
}

std::vector<Batch> DataPipeline::epoch_batches(const std::string& split, int batch_size,
                                               std::uint64_t seed, int epoch, bool train,
                                               const AugmentConfig& aug) const {
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    std::vector<int> idx = split_indices(split);
    if (idx.empty()) throw DataError("split has no rows: " + split);
    if (train) {
        Rng shuffle_rng(mix_seed(seed, 2, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(idx);
    }

    std::vector<Batch> batches;
    for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(idx.size(), start + static_cast<size_t>(batch_size));
        const int n = static_cast<int>(end - start);
        Batch b;
        b.x = Tensor<float>({n, channels_, side_, side_});
        b.labels.resize(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            const int row = idx[start + static_cast<size_t>(j)];
            b.labels[static_cast<size_t>(j)] = manifest_.rows[static_cast<size_t>(row)].label;
            Tensor<float> img = cache_[static_cast<size_t>(row)];
            if (train) {
                Rng aug_rng(mix_seed(seed, 3, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(row)));
                img = augment(img, aug, aug_rng);
            }
            float* dst = b.x.ptr() + static_cast<size_t>(j) * img.numel();
            std::copy(img.data.begin(), img.data.end(), dst);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace wlft
