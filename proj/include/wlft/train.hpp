#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "wlft/checkpoint.hpp"
#include "wlft/data.hpp"
#include "wlft/errors.hpp"
#include "wlft/metrics.hpp"
#include "wlft/model.hpp"
#include "wlft/optimizer.hpp"

namespace wlft {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;
    double lr0 = 1e-3;
    double momentum = 0.9;
    int lr_half_period = 10;  // epochs per halving
    std::uint64_t seed = 0;
    std::string checkpoint_dir;  // empty disables checkpoint files
    std::string log_path;        // empty disables the csv log
    int ckpt_every = 5;          // periodic checkpoint cadence, 0 disables
    int positive_class = 1;
    bool augment_train = true;
    AugmentConfig aug;
    int workers = 1;  // evaluation-only parallelism

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (lr0 <= 0.0) throw ConfigError("lr0 must be positive");
        if (momentum < 0.0) throw ConfigError("momentum must be non-negative");
        if (lr_half_period < 1) throw ConfigError("lr_half_period must be >= 1");
        if (ckpt_every < 0) throw ConfigError("ckpt_every must be >= 0");
        if (workers < 1) throw ConfigError("workers must be >= 1");
    }
};

inline double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ConfigError("epoch must be non-negative");
    return cfg.lr0 * std::ldexp(1.0, -(epoch / cfg.lr_half_period));
}

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_ce = 0.0;
    double train_loss_wt = 0.0;
    double val_acc = 0.0;
    double val_recall = 0.0;
};

struct EvalResult {
    double acc = 0.0;
    double rec = 0.0;
    bool has_recall = false;  // false when the split holds no positives
    std::vector<int> preds;
    std::vector<int> labels;
    std::vector<double> pos_scores;  // positive-class probability per sample
};

template <typename T>
class Trainer {
  public:
    Trainer(Model<T>& model, const DataPipeline& data, TrainConfig cfg)
        : model_(model), data_(data), cfg_(std::move(cfg)) {
        cfg_.validate();
        eval_split_ = data_.has_split("val") ? "val" : "test";
        if (data_.num_classes() != model_.cfg.num_classes)
            throw DataError("dataset has " + std::to_string(data_.num_classes()) +
                            " classes but the model head expects " +
                            std::to_string(model_.cfg.num_classes));
    }

    const std::string& eval_split() const { return eval_split_; }

    // Trains epochs [start_epoch, cfg.epochs). A resumed run passes the
    // restored epoch counter and best score; a fresh run passes defaults.
    std::vector<EpochLog> run(std::int64_t start_epoch = 0, double best_val_acc = -1.0) {
        std::vector<EpochLog> log;
        if (start_epoch >= cfg_.epochs) return log;  // nothing left to train

        if (!cfg_.checkpoint_dir.empty())
            std::filesystem::create_directories(cfg_.checkpoint_dir);
        std::vector<Parameter<T>*> params = model_.parameters();
        double best = best_val_acc;

        for (int epoch = static_cast<int>(start_epoch); epoch < cfg_.epochs; ++epoch) {
            const double lr = lr_schedule(epoch, cfg_);
            auto batches = data_.epoch_batches("train", cfg_.batch_size, cfg_.seed, epoch,
                                               cfg_.augment_train, cfg_.aug);
            double sum_total = 0.0, sum_ce = 0.0, sum_wt = 0.0;
            for (std::size_t b = 0; b < batches.size(); ++b) {
                try {
                    auto parts = forward_loss(batches[b], true);
                    const double total = value_of(parts.total);
                    const double ce = value_of(parts.ce);
                    const double wt = parts.has_wt ? value_of(parts.wt) : 0.0;
                    if (!std::isfinite(total)) throw NumericError("non-finite total loss");
                    if (std::abs(total - (ce + wt)) > 1e-6 * std::max(1.0, std::abs(total)))
                        throw NumericError("loss decomposition drifted");
                    backward(parts.total);
                    sgd_step(params, static_cast<T>(lr), static_cast<T>(cfg_.momentum));
                    zero_grad(params);
                    sum_total += total;
                    sum_ce += ce;
                    sum_wt += wt;
                } catch (const NumericError& e) {
                    throw NumericError("training aborted at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(b) + ": " + e.what());
                }
            }
            const double nb = static_cast<double>(batches.size());

            EpochLog row;
            row.epoch = epoch;
            row.lr = lr;
            row.train_loss = sum_total / nb;
            row.train_ce = sum_ce / nb;
            row.train_loss_wt = sum_wt / nb;
            EvalResult ev = evaluate(eval_split_, cfg_.positive_class);
            row.val_acc = ev.acc;
            row.val_recall = ev.has_recall ? ev.rec : std::nan("");
            log.push_back(row);
            append_log(row, epoch == 0);

            if (ev.acc > best) {
                best = ev.acc;
                write_checkpoint("best.ckpt", epoch + 1, best);
            }
            if (cfg_.ckpt_every > 0 && (epoch + 1) % cfg_.ckpt_every == 0)
                write_checkpoint("ckpt_epoch" + std::to_string(epoch + 1) + ".ckpt", epoch + 1,
                                 best);
        }
        write_checkpoint("final.ckpt", cfg_.epochs, best);
        return log;
    }

    EvalResult evaluate(const std::string& split, int positive_class = 1) {
        auto batches = data_.epoch_batches(split, cfg_.batch_size, cfg_.seed, 0, false, cfg_.aug);
        std::vector<std::vector<int>> preds(batches.size());
        std::vector<std::vector<double>> scores(batches.size());

        auto eval_batch = [&](std::size_t b) {
            auto out = model_.forward(Var<T>::constant(to_precision(batches[b].x)), false);
            Tensor<T> probs = predict_proba(out.logits.value());
            const int n = probs.dim(0), c = probs.dim(1);
            for (int i = 0; i < n; ++i) {
                int arg = 0;
                for (int j = 1; j < c; ++j)
                    if (probs.at(i, j) > probs.at(i, arg)) arg = j;
                preds[b].push_back(arg);
                scores[b].push_back(positive_class < c
                                        ? static_cast<double>(probs.at(i, positive_class))
                                        : 0.0);
            }
        };
        if (cfg_.workers <= 1 || batches.size() < 2) {
            for (std::size_t b = 0; b < batches.size(); ++b) eval_batch(b);
        } else {
            // forward passes share read-only parameters, so batches can fan
            // out across threads; slots keep the merged order deterministic
            const int nw = std::min<int>(cfg_.workers, static_cast<int>(batches.size()));
            std::vector<std::thread> pool;
            for (int w = 0; w < nw; ++w)
                pool.emplace_back([&, w] {
                    for (std::size_t b = static_cast<std::size_t>(w); b < batches.size();
                         b += static_cast<std::size_t>(nw))
                        eval_batch(b);
                });
            for (auto& t : pool) t.join();
        }

        EvalResult ev;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            ev.preds.insert(ev.preds.end(), preds[b].begin(), preds[b].end());
            ev.labels.insert(ev.labels.end(), batches[b].labels.begin(), batches[b].labels.end());
            ev.pos_scores.insert(ev.pos_scores.end(), scores[b].begin(), scores[b].end());
        }
        ev.acc = multiclass_accuracy(ev.preds, ev.labels);
        long long positives = 0;
        for (int l : ev.labels) positives += l == positive_class ? 1 : 0;
        if (positives > 0) {
            ev.has_recall = true;
            ev.rec = recall(confusion(ev.preds, ev.labels, positive_class));
        }
        return ev;
    }

  private:
    typename Model<T>::LossParts forward_loss(const Batch& batch, bool train) {
        auto out = model_.forward(Var<T>::constant(to_precision(batch.x)), train);
        return model_.loss_parts(out, batch.labels);
    }

    static double value_of(const Var<T>& v) { return static_cast<double>(v.value().data[0]); }

    static Tensor<T> to_precision(const Tensor<float>& x) {
        if constexpr (std::is_same_v<T, float>) {
            return x;
        } else {
            Tensor<T> out(x.shape);
            for (int i = 0; i < x.numel(); ++i) out.data[i] = static_cast<T>(x.data[i]);
            return out;
        }
    }

    void write_checkpoint(const std::string& name, std::int64_t epochs_completed, double best) {
        if (cfg_.checkpoint_dir.empty()) return;
        auto recs = model_records(model_, true);
        recs.push_back(encode_train_meta({epochs_completed, cfg_.seed, best}));
        save_checkpoint(cfg_.checkpoint_dir + "/" + name, recs);
    }

    void append_log(const EpochLog& row, bool fresh_file) {
        if (cfg_.log_path.empty()) return;
        std::FILE* f = std::fopen(cfg_.log_path.c_str(), fresh_file ? "wb" : "ab");
        if (!f) throw DataError("cannot write training log: " + cfg_.log_path);
        if (fresh_file)
            std::fprintf(f, "epoch,lr,train_loss,train_ce,train_loss_wt,val_acc,val_recall\n");
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.epoch, row.lr,
                     row.train_loss, row.train_ce, row.train_loss_wt, row.val_acc,
                     row.val_recall);
        std::fclose(f);
    }

    Model<T>& model_;
    const DataPipeline& data_;
    TrainConfig cfg_;
    std::string eval_split_;
};

// Restores parameters, momentum buffers, batchnorm statistics, and the
// training progress words from a checkpoint written by Trainer.
template <typename T>
TrainMeta restore_train_state(Model<T>& m, const std::string& ckpt_path) {
    auto recs = load_checkpoint(ckpt_path);
    load_model_records(m, recs, true);
    const CkptRecord* mt = find_record(recs, "meta:train");
    if (!mt) throw DataError("checkpoint lacks training progress state: " + ckpt_path);
    return decode_train_meta(*mt);
}

}  // namespace wlft
