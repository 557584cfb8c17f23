#include "wlft/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "wlft/errors.hpp"

namespace wlft {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not an integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("");
        std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + value +
                          "' is not a non-negative integer");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw ConfigError("config key '" + key + "': '" + value + "' is not a boolean (0/1/true/false)");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "variant") {
        parse_variant(value);  // validates
        cfg.variant = value;
    } else if (key == "tap") {
        parse_tap(value);
        cfg.tap = value;
    } else if (key == "levels") {
        if (value == "auto") {
            cfg.levels = 0;
        } else {
            long long v = parse_int(key, value);
            if (v < 1) throw ConfigError("config key 'levels': expected 'auto' or a positive integer");
            cfg.levels = static_cast<int>(v);
        }
    } else if (key == "preset") {
        if (value != "full" && value != "tiny")
            throw ConfigError("config key 'preset': expected full or tiny");
        cfg.preset = value;
    } else if (key == "side") {
        cfg.side = static_cast<int>(parse_int(key, value));
    } else if (key == "channels") {
        cfg.channels = static_cast<int>(parse_int(key, value));
    } else if (key == "classes") {
        if (value == "auto") {
            cfg.classes = 0;
        } else {
            cfg.classes = static_cast<int>(parse_int(key, value));
        }
    } else if (key == "alpha") {
        cfg.alpha = parse_double(key, value);
    } else if (key == "beta") {
        cfg.beta = parse_double(key, value);
    } else if (key == "huber_delta") {
        cfg.huber_delta = parse_double(key, value);
    } else if (key == "epochs") {
        cfg.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "batch_size") {
        cfg.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "lr0") {
        cfg.lr0 = parse_double(key, value);
    } else if (key == "momentum") {
        cfg.momentum = parse_double(key, value);
    } else if (key == "lr_half_period") {
        cfg.lr_half_period = static_cast<int>(parse_int(key, value));
    } else if (key == "seed") {
        cfg.seed = parse_u64(key, value);
    } else if (key == "ckpt_every") {
        cfg.ckpt_every = static_cast<int>(parse_int(key, value));
    } else if (key == "positive_class") {
        cfg.positive_class = static_cast<int>(parse_int(key, value));
    } else if (key == "precision") {
        if (value != "f32" && value != "f64")
            throw ConfigError("config key 'precision': expected f32 or f64");
        cfg.precision = value;
    } else if (key == "equalize") {
        cfg.equalize = parse_bool(key, value);
    } else if (key == "augment") {
        cfg.augment = parse_bool(key, value);
    } else if (key == "flip_p") {
        cfg.flip_p = parse_double(key, value);
    } else if (key == "rot_deg") {
        cfg.rot_deg = parse_double(key, value);
    } else if (key == "translate_frac") {
        cfg.translate_frac = parse_double(key, value);
    } else if (key == "scale_lo") {
        cfg.scale_lo = parse_double(key, value);
    } else if (key == "scale_hi") {
        cfg.scale_hi = parse_double(key, value);
    } else if (key == "bright_lo") {
        cfg.bright_lo = parse_double(key, value);
    } else if (key == "bright_hi") {
        cfg.bright_hi = parse_double(key, value);
    } else if (key == "data") {
        cfg.data = value;
    } else if (key == "out") {
        cfg.out = value;
    } else if (key == "resume") {
        cfg.resume = value;
    } else if (key == "checkpoint") {
        cfg.checkpoint = value;
    } else if (key == "split") {
        cfg.split = value;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        apply_config_kv(cfg, key, value);
    }
}

std::string resolved_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    os << "variant=" << cfg.variant << "\n";
    os << "tap=" << cfg.tap << "\n";
    os << "levels=" << (cfg.levels == 0 ? std::string("auto") : std::to_string(cfg.levels)) << "\n";
    os << "preset=" << cfg.preset << "\n";
    os << "side=" << cfg.side << "\n";
    os << "channels=" << cfg.channels << "\n";
    os << "classes=" << (cfg.classes == 0 ? std::string("auto") : std::to_string(cfg.classes))
       << "\n";
    os << "alpha=" << fmt_double(cfg.alpha) << "\n";
    os << "beta=" << fmt_double(cfg.beta) << "\n";
    os << "huber_delta=" << fmt_double(cfg.huber_delta) << "\n";
    os << "epochs=" << cfg.epochs << "\n";
    os << "batch_size=" << cfg.batch_size << "\n";
    os << "lr0=" << fmt_double(cfg.lr0) << "\n";
    os << "momentum=" << fmt_double(cfg.momentum) << "\n";
    os << "lr_half_period=" << cfg.lr_half_period << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "ckpt_every=" << cfg.ckpt_every << "\n";
    os << "positive_class=" << cfg.positive_class << "\n";
    os << "precision=" << cfg.precision << "\n";
    os << "equalize=" << (cfg.equalize ? "true" : "false") << "\n";
    os << "augment=" << (cfg.augment ? "true" : "false") << "\n";
    os << "flip_p=" << fmt_double(cfg.flip_p) << "\n";
    os << "rot_deg=" << fmt_double(cfg.rot_deg) << "\n";
    os << "translate_frac=" << fmt_double(cfg.translate_frac) << "\n";
    os << "scale_lo=" << fmt_double(cfg.scale_lo) << "\n";
    os << "scale_hi=" << fmt_double(cfg.scale_hi) << "\n";
    os << "bright_lo=" << fmt_double(cfg.bright_lo) << "\n";
    os << "bright_hi=" << fmt_double(cfg.bright_hi) << "\n";
    os << "data=" << cfg.data << "\n";
    os << "out=" << cfg.out << "\n";
    os << "resume=" << cfg.resume << "\n";
    os << "checkpoint=" << cfg.checkpoint << "\n";
    os << "split=" << cfg.split << "\n";
    return os.str();
}

int worker_count() {
    const char* env = std::getenv("WLFT_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    const std::string value(env);
    long long v;
    try {
        std::size_t pos = 0;
        v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw ConfigError("WLFT_THREADS='" + value + "' is not a positive integer");
    }
    if (v < 1) throw ConfigError("WLFT_THREADS must be >= 1");
    return static_cast<int>(v);
}

ModelConfig make_model_config(const RunConfig& cfg, int classes_from_data) {
    ModelConfig mc;
    mc.backbone = BackboneConfig::preset(cfg.preset == "tiny" ? 1 : 0, cfg.channels, cfg.side);
    mc.variant = parse_variant(cfg.variant);
    mc.tap = parse_tap(cfg.tap);
    mc.levels = cfg.levels;
    mc.num_classes = cfg.classes != 0 ? cfg.classes : classes_from_data;
    mc.alpha = cfg.alpha;
    mc.beta = cfg.beta;
    mc.huber_delta = cfg.huber_delta;
    if (mc.num_classes < 2) throw ConfigError("need at least 2 classes");
    mc.backbone.validate();
    mc.resolved_levels();  // surfaces level/tap mismatches before any work
    return mc;
}

TrainConfig make_train_config(const RunConfig& cfg, const std::string& out_dir) {
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr0 = cfg.lr0;
    tc.momentum = cfg.momentum;
    tc.lr_half_period = cfg.lr_half_period;
    tc.seed = cfg.seed;
    tc.ckpt_every = cfg.ckpt_every;
    tc.positive_class = cfg.positive_class;
    tc.augment_train = cfg.augment;
    tc.aug = make_augment_config(cfg);
    tc.workers = worker_count();
    if (!out_dir.empty()) {
        tc.checkpoint_dir = out_dir + "/checkpoints";
        tc.log_path = out_dir + "/log.csv";
    }
    tc.validate();
    return tc;
}

AugmentConfig make_augment_config(const RunConfig& cfg) {
    AugmentConfig a;
    a.flip_p = cfg.flip_p;
    a.rot_deg = cfg.rot_deg;
    a.translate_frac = cfg.translate_frac;
    a.scale_lo = cfg.scale_lo;
    a.scale_hi = cfg.scale_hi;
    a.bright_lo = cfg.bright_lo;
    a.bright_hi = cfg.bright_hi;
    return a;
}

}  // namespace wlft
