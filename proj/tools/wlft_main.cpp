// Command-line driver: train / eval / decompose / gradcheck / synth.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical abort,
// 5 gradient check failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "wlft/checkpoint.hpp"
#include "wlft/config.hpp"
#include "wlft/data.hpp"
#include "wlft/errors.hpp"
#include "wlft/gradcheck.hpp"
#include "wlft/image.hpp"
#include "wlft/metrics.hpp"
#include "wlft/model.hpp"
#include "wlft/train.hpp"
#include "wlft/wavelet.hpp"

namespace {

using namespace wlft;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    if (!out) throw DataError("short write: " + path);
}

// Collects config sources for the RunConfig commands. Dedicated flags and
// --set pairs funnel through apply_config_kv, so a flag and a file line are
// validated by the same code. Precedence: defaults < file < --set < flags.
struct KvFlags {
    std::string config;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> pairs;

    void opt(CLI::App* cmd, const char* flag, const char* key, const char* desc) {
        cmd->add_option_function<std::string>(
            flag, [this, k = std::string(key)](const std::string& v) { pairs.emplace_back(k, v); },
            desc);
    }

    void common(CLI::App* cmd) {
        cmd->add_option("--config", config, "key=value config file applied before any flag");
        cmd->add_option("--set", sets, "override one config key (key=value, repeatable)");
    }

    RunConfig resolve() const {
        RunConfig rc;
        if (!config.empty()) apply_config_file(rc, config);
        for (const std::string& s : sets) {
            std::size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + s + "'");
            apply_config_kv(rc, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
        for (const auto& [k, v] : pairs) apply_config_kv(rc, k, v);
        return rc;
    }
};

void add_train_flags(CLI::App* cmd, KvFlags& f) {
    f.common(cmd);
    f.opt(cmd, "--data", "data", "dataset manifest csv");
    f.opt(cmd, "--out", "out", "output directory (log, checkpoints, resolved config)");
    f.opt(cmd, "--resume", "resume", "checkpoint to continue from");
    f.opt(cmd, "--variant", "variant", "awtm | dawn | backbone_only");
    f.opt(cmd, "--tap", "tap", "branch insertion point pos1..pos5");
    f.opt(cmd, "--levels", "levels", "decomposition levels, integer or 'auto'");
    f.opt(cmd, "--preset", "preset", "backbone preset: full | tiny");
    f.opt(cmd, "--side", "side", "input image side");
    f.opt(cmd, "--channels", "channels", "input channels (1 or 3)");
    f.opt(cmd, "--classes", "classes", "class count, integer or 'auto' (from manifest)");
    f.opt(cmd, "--alpha", "alpha", "detail sparsity weight");
    f.opt(cmd, "--beta", "beta", "mean preservation weight");
    f.opt(cmd, "--huber-delta", "huber_delta", "huber threshold for the detail term");
    f.opt(cmd, "--epochs", "epochs", "training epochs");
    f.opt(cmd, "--batch-size", "batch_size", "batch size");
    f.opt(cmd, "--lr0", "lr0", "initial learning rate");
    f.opt(cmd, "--momentum", "momentum", "sgd momentum");
    f.opt(cmd, "--lr-half-period", "lr_half_period", "epochs per learning-rate halving");
    f.opt(cmd, "--seed", "seed", "run seed");
    f.opt(cmd, "--ckpt-every", "ckpt_every", "periodic checkpoint cadence, 0 disables");
    f.opt(cmd, "--positive-class", "positive_class", "class treated as positive for recall");
    f.opt(cmd, "--precision", "precision", "f32 | f64");
    f.opt(cmd, "--equalize", "equalize", "histogram equalization on load (0/1)");
    f.opt(cmd, "--augment", "augment", "train-time augmentation (0/1)");
}

void add_eval_flags(CLI::App* cmd, KvFlags& f) {
    f.common(cmd);
    f.opt(cmd, "--checkpoint", "checkpoint", "checkpoint to evaluate");
    f.opt(cmd, "--data", "data", "dataset manifest csv");
    f.opt(cmd, "--split", "split", "manifest split to score");
    f.opt(cmd, "--out", "out", "output directory for metrics/roc/predictions");
    f.opt(cmd, "--batch-size", "batch_size", "batch size");
    f.opt(cmd, "--equalize", "equalize", "histogram equalization on load (0/1)");
    f.opt(cmd, "--positive-class", "positive_class", "class treated as positive");
    f.opt(cmd, "--seed", "seed", "seed echoed into the resolved config");
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void check_resume_compatible(const ModelConfig& want, int want_levels,
                             const std::vector<CkptRecord>& recs, const std::string& path) {
    const CkptRecord* mm = find_record(recs, "meta:model");
    if (!mm) throw DataError("checkpoint lacks a model description: " + path);
    ModelConfig have = decode_model_meta(*mm);
    std::vector<std::string> diffs;
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) diffs.push_back(what);
    };
    need(have.variant == want.variant, "variant");
    need(tap_index(have.tap) == tap_index(want.tap), "tap");
    need(have.levels == want_levels, "levels");
    need(have.num_classes == want.num_classes, "classes");
    need(have.backbone.input_channels == want.backbone.input_channels, "channels");
    need(have.backbone.input_side == want.backbone.input_side, "side");
    need(have.backbone.preset_id == want.backbone.preset_id, "preset");
    if (!diffs.empty()) {
        std::string msg = "resume checkpoint " + path + " was trained with a different";
        for (std::size_t i = 0; i < diffs.size(); ++i) msg += (i ? ", " : " ") + diffs[i];
        throw DataError(msg);
    }
}

template <typename T>
int run_train(const RunConfig& rc, const ModelConfig& mc, const DataPipeline& pipe,
              TrainConfig tc) {
    auto model = Model<T>::create(mc, mix_seed(rc.seed, 1));
    std::int64_t start = 0;
    double best = -1.0;
    if (!rc.resume.empty()) {
        check_resume_compatible(mc, model->levels, load_checkpoint(rc.resume), rc.resume);
        TrainMeta meta = restore_train_state(*model, rc.resume);
        start = meta.epoch_completed;
        best = meta.best_val_acc;
        tc.seed = meta.seed;
        std::printf("resuming %s at epoch %lld\n", rc.resume.c_str(),
                    static_cast<long long>(start));
    }
    Trainer<T> trainer(*model, pipe, tc);
    std::vector<EpochLog> log = trainer.run(start, best);
    if (log.empty()) {
        std::printf("nothing to train: already at epoch %lld of %d\n",
                    static_cast<long long>(start), tc.epochs);
    } else {
        const EpochLog& last = log.back();
        std::printf("trained epochs %lld..%d, final %s accuracy %.3f%%\n",
                    static_cast<long long>(start), tc.epochs - 1, trainer.eval_split().c_str(),
                    100.0 * last.val_acc);
    }
    std::printf("artifacts under %s\n", rc.out.c_str());
    return 0;
}

int cmd_train(const KvFlags& flags) {
    RunConfig rc = flags.resolve();
    if (rc.data.empty()) throw ConfigError("train needs --data (or data= in the config)");
    if (rc.out.empty()) throw ConfigError("train needs --out (or out= in the config)");
    Manifest man = load_manifest(rc.data);
    ModelConfig mc = make_model_config(rc, man.num_classes);
    TrainConfig tc = make_train_config(rc, rc.out);

    std::filesystem::create_directories(rc.out);
    const std::string resolved = resolved_config_text(rc);
    write_text_file(rc.out + "/config_resolved.txt", resolved);
    std::fputs(resolved.c_str(), stdout);

    DataPipeline pipe(man, mc.backbone.input_side, rc.equalize);
    if (rc.precision == "f64") return run_train<double>(rc, mc, pipe, tc);
    return run_train<float>(rc, mc, pipe, tc);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const KvFlags& flags) {
    RunConfig rc = flags.resolve();
    if (rc.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
    if (rc.data.empty()) throw ConfigError("eval needs --data");
    if (rc.out.empty()) throw ConfigError("eval needs --out");

    auto recs = load_checkpoint(rc.checkpoint);
    const CkptRecord* mm = find_record(recs, "meta:model");
    if (!mm) throw DataError("checkpoint lacks a model description: " + rc.checkpoint);
    ModelConfig mc = decode_model_meta(*mm);

    Manifest man = load_manifest(rc.data);
    if (man.num_classes != mc.num_classes)
        throw DataError("dataset has " + std::to_string(man.num_classes) +
                        " classes but the checkpoint was trained with " +
                        std::to_string(mc.num_classes));

    auto model = Model<float>::create(mc, 0);
    load_model_records(*model, recs, false);

    DataPipeline pipe(man, mc.backbone.input_side, rc.equalize);
    if (!pipe.has_split(rc.split)) throw DataError("split '" + rc.split + "' has no samples");

    TrainConfig tc;
    tc.batch_size = rc.batch_size;
    tc.seed = rc.seed;
    tc.positive_class = rc.positive_class;
    tc.augment_train = false;
    tc.workers = worker_count();
    Trainer<float> trainer(*model, pipe, tc);
    EvalResult ev = trainer.evaluate(rc.split, rc.positive_class);

    std::filesystem::create_directories(rc.out);
    write_text_file(rc.out + "/config_resolved.txt", resolved_config_text(rc));

    const ConfusionMatrix cm = confusion(ev.preds, ev.labels, rc.positive_class);
    long long pos = cm.tp + cm.fn, neg = cm.fp + cm.tn;
    std::vector<std::pair<std::string, double>> rows{{"accuracy", ev.acc}};
    if (pos > 0) rows.emplace_back("recall", recall(cm));
    bool have_auc = pos > 0 && neg > 0;
    RocResult roc;
    if (have_auc) {
        roc = roc_auc(ev.pos_scores, ev.labels, rc.positive_class);
        rows.emplace_back("auc", roc.auc);
    }
    rows.emplace_back("tp", static_cast<double>(cm.tp));
    rows.emplace_back("fp", static_cast<double>(cm.fp));
    rows.emplace_back("fn", static_cast<double>(cm.fn));
    rows.emplace_back("tn", static_cast<double>(cm.tn));
    write_metrics_csv(rc.out + "/metrics.csv", rows);
    if (have_auc) write_roc_csv(rc.out + "/roc.csv", roc);

    // one row per sample in split order, enough to recompute every metric
    {
        std::vector<int> split_rows = pipe.split_indices(rc.split);
        std::FILE* f = std::fopen((rc.out + "/predictions.csv").c_str(), "wb");
        if (!f) throw DataError("cannot write " + rc.out + "/predictions.csv");
        std::fprintf(f, "index,path,label,pred,score\n");
        for (std::size_t i = 0; i < ev.preds.size(); ++i)
            std::fprintf(f, "%zu,%s,%d,%d,%.17g\n", i,
                         pipe.manifest().rows[static_cast<std::size_t>(split_rows[i])].path.c_str(),
                         ev.labels[i], ev.preds[i], ev.pos_scores[i]);
        std::fclose(f);
    }

    std::printf("split %s: %zu samples, accuracy %.3f%%\n", rc.split.c_str(), ev.labels.size(),
                100.0 * ev.acc);
    if (pos > 0) std::printf("recall(class %d) %.3f%%\n", rc.positive_class, 100.0 * recall(cm));
    if (have_auc) std::printf("auc %.5f\n", roc.auc);
    std::printf("confusion vs class %d: tp %lld fp %lld fn %lld tn %lld\n", rc.positive_class,
                cm.tp, cm.fp, cm.fn, cm.tn);
    std::printf("artifacts under %s\n", rc.out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

Tensor<float> minmax_plane(const Tensor<float>& t, int c, int h, int w) {
    Tensor<float> plane({1, h, w});
    float lo = t.at(0, c, 0, 0), hi = lo;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const float v = t.at(0, c, i, j);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            plane.at(0, i, j) = hi > lo ? (t.at(0, c, i, j) - lo) / (hi - lo) : 0.5f;
    return plane;
}

int dump_subbands(const WaveletBranchOutput<float>& br, int levels, const std::string& out_dir,
                  const std::string& stem) {
    int written = 0;
    auto dump = [&](const Tensor<float>& t, int level, char tag) {
        const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
        for (int ch = 0; ch < c; ++ch) {
            const std::string path = out_dir + "/" + stem + "_L" + std::to_string(level) + "_" +
                                     tag + "_c" + std::to_string(ch) + ".pgm";
            save_pgm(path, minmax_plane(t, ch, h, w));
            ++written;
        }
    };
    for (int l = 0; l < levels; ++l) {
        dump(br.approxes[static_cast<std::size_t>(l)].value(), l + 1, 'A');
        dump(br.details[static_cast<std::size_t>(l)].value(), l + 1, 'D');
    }
    return written;
}

struct DecomposeArgs {
    std::string checkpoint, image, out;
    bool identity = false;
    int levels = 0;  // 0 means the maximum available
};

int cmd_decompose(const DecomposeArgs& a) {
    if (a.identity == !a.checkpoint.empty())
        throw ConfigError("decompose needs exactly one of --identity or --checkpoint");
    if (a.out.empty()) throw ConfigError("decompose needs --out");
    if (a.levels < 0) throw ConfigError("levels must be positive or omitted");

    Tensor<float> img = load_netpbm(a.image);
    const std::string stem = std::filesystem::path(a.image).stem().string();
    std::filesystem::create_directories(a.out);

    WaveletBranchOutput<float> br;
    int levels = a.levels;
    std::string mode;
    if (a.identity) {
        mode = "identity";
        const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
        if (h != w) throw DataError("decompose needs a square image, got " + std::to_string(h) +
                                    "x" + std::to_string(w));
        const int bound = max_levels(w);
        if (levels == 0) levels = bound;
        if (levels > bound)
            throw ConfigError("levels " + std::to_string(levels) + " exceeds the maximum " +
                              std::to_string(bound) + " for side " + std::to_string(w));
        ParamStore<float> store;
        Rng rng(0);
        WaveletBranch<float> branch =
            WaveletBranch<float>::create(store, "branch", BranchKind::kAwtm, c, levels, w, rng);
        Tensor<float> x({1, c, h, w});
        std::copy(img.data.begin(), img.data.end(), x.data.begin());
        br = branch.forward(Var<float>::constant(x));
    } else {
        mode = "checkpoint";
        auto recs = load_checkpoint(a.checkpoint);
        const CkptRecord* mm = find_record(recs, "meta:model");
        if (!mm) throw DataError("checkpoint lacks a model description: " + a.checkpoint);
        ModelConfig mc = decode_model_meta(*mm);
        if (mc.variant == Variant::kBackboneOnly)
            throw ConfigError("checkpoint is a backbone_only model: it has no wavelet branch");
        if (img.dim(0) != mc.backbone.input_channels)
            throw DataError("image has " + std::to_string(img.dim(0)) +
                            " channels but the model expects " +
                            std::to_string(mc.backbone.input_channels));
        auto model = Model<float>::create(mc, 0);
        load_model_records(*model, recs, false);
        if (levels == 0) levels = model->levels;
        if (levels > model->levels)
            throw ConfigError("levels " + std::to_string(levels) + " exceeds the checkpoint's " +
                              std::to_string(model->levels));
        const int side = mc.backbone.input_side;
        Tensor<float> resized = resize_bilinear(img, side, side);
        Tensor<float> x({1, img.dim(0), side, side});
        std::copy(resized.data.begin(), resized.data.end(), x.data.begin());
        auto out = model->forward(Var<float>::constant(x), false);
        br = out.branch;
    }

    const int written = dump_subbands(br, levels, a.out, stem);
    std::string echo;
    echo += "command=decompose\n";
    echo += "mode=" + mode + "\n";
    echo += "checkpoint=" + a.checkpoint + "\n";
    echo += "image=" + a.image + "\n";
    echo += "levels=" + std::to_string(levels) + "\n";
    echo += "out=" + a.out + "\n";
    write_text_file(a.out + "/config_resolved.txt", echo);
    std::printf("wrote %d subband images under %s\n", written, a.out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
    std::string variant = "awtm";
    std::string tap = "pos3";
    std::string levels = "auto";
    int samples = 3;
    std::uint64_t seed = 0;
    double step = 1e-6;
    double corrupt = 0.0;  // test hook: offsets one analytic gradient entry
};

int cmd_gradcheck(const GradcheckArgs& a) {
    ModelConfig mc;
    mc.backbone = BackboneConfig::tiny(1, 32);
    mc.variant = parse_variant(a.variant);
    mc.tap = parse_tap(a.tap);
    if (a.levels == "auto") {
        mc.levels = 0;
    } else {
        try {
            std::size_t pos = 0;
            mc.levels = std::stoi(a.levels, &pos);
            if (pos != a.levels.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ConfigError("--levels expects an integer or 'auto', got '" + a.levels + "'");
        }
    }
    mc.num_classes = 3;

    auto model = Model<double>::create(mc, mix_seed(a.seed, 1));
    // push every tensor off its initial point so the identity-lifting zeros
    // do not hide whole code paths from the check
    Rng nudge(mix_seed(a.seed, 5));
    for (Parameter<double>* p : model->parameters())
        for (double& v : p->tensor().data) v += nudge.uniform(-0.05, 0.05);

    Rng xrng(mix_seed(a.seed, 6));
    Tensor<double> x({2, 1, 32, 32});
    for (double& v : x.data) v = xrng.uniform();
    const std::vector<int> labels{0, 1};

    GradcheckReport rep =
        gradcheck_model(*model, x, labels, a.samples, mix_seed(a.seed, 7), a.step, a.corrupt);

    for (const GradcheckGroup& g : rep.groups)
        std::printf("%-44s max_rel_err %.3e  (%d entries)\n", g.name.c_str(), g.max_rel_err,
                    g.entries);

    const double tol = 1e-3;
    if (rep.pass(tol)) {
        std::printf("gradcheck passed: %zu parameter groups, worst %.3e (%s)\n", rep.groups.size(),
                    rep.max_rel_err, rep.worst_group.c_str());
        return 0;
    }
    std::vector<GradcheckGroup> bad;
    for (const GradcheckGroup& g : rep.groups)
        if (g.max_rel_err >= tol) bad.push_back(g);
    std::sort(bad.begin(), bad.end(),
              [](const GradcheckGroup& l, const GradcheckGroup& r) {
                  return l.max_rel_err > r.max_rel_err;
              });
    std::fprintf(stderr, "gradcheck FAILED against tolerance %.0e, worst offenders:\n", tol);
    for (const GradcheckGroup& g : bad)
        std::fprintf(stderr, "  %s  max_rel_err %.3e\n", g.name.c_str(), g.max_rel_err);
    return 5;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    int classes = 4;
    int per_class = 100;
    int side = 32;
    std::uint64_t seed = 7;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    if (a.out.empty()) throw ConfigError("synth needs --out");
    Manifest man = synth_textures(a.classes, a.per_class, a.side, a.seed, a.out);
    std::printf("wrote %zu images across %d classes under %s\n", man.rows.size(), man.num_classes,
                a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"texture classification with a learnable lifting-wavelet branch"};
    app.require_subcommand(1);

    KvFlags train_flags;
    CLI::App* train = app.add_subcommand("train", "train a model");
    add_train_flags(train, train_flags);

    KvFlags eval_flags;
    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a manifest split");
    add_eval_flags(eval, eval_flags);

    DecomposeArgs dec;
    CLI::App* decompose =
        app.add_subcommand("decompose", "dump per-level approximation/detail images");
    decompose->add_option("--checkpoint", dec.checkpoint, "use the branch of a trained model");
    decompose->add_flag("--identity", dec.identity, "use zero-initialized lifting (Haar cascade)");
    decompose->add_option("--image", dec.image, "input pgm/ppm")->required();
    decompose->add_option("--levels", dec.levels, "levels to dump (default: the maximum)");
    decompose->add_option("--out", dec.out, "output directory")->required();

    GradcheckArgs gc;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check on a tiny 64-bit model");
    gradcheck->add_option("--variant", gc.variant, "awtm | dawn | backbone_only");
    gradcheck->add_option("--tap", gc.tap, "branch insertion point pos1..pos5");
    gradcheck->add_option("--levels", gc.levels, "decomposition levels, integer or 'auto'");
    gradcheck->add_option("--samples", gc.samples, "probed entries per parameter tensor");
    gradcheck->add_option("--seed", gc.seed, "seed for the probe model and input");
    gradcheck->add_option("--step", gc.step, "finite-difference step");
    gradcheck->add_option("--corrupt-backward", gc.corrupt, "")->group("");

    SynthArgs sy;
    CLI::App* synth = app.add_subcommand("synth", "generate the oriented-grating toy corpus");
    synth->add_option("--classes", sy.classes, "number of classes");
    synth->add_option("--per-class", sy.per_class, "images per class");
    synth->add_option("--side", sy.side, "image side");
    synth->add_option("--seed", sy.seed, "corpus seed");
    synth->add_option("--out", sy.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(train_flags);
        if (app.got_subcommand(eval)) return cmd_eval(eval_flags);
        if (app.got_subcommand(decompose)) return cmd_decompose(dec);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc);
        if (app.got_subcommand(synth)) return cmd_synth(sy);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
