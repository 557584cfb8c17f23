#include "wlft/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "wlft/errors.hpp"

namespace wlft {

ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth,
                          int positive_class) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("confusion: prediction and label counts differ");
    if (pred.empty()) throw std::invalid_argument("confusion: no samples");
    ConfusionMatrix cm;
    cm.positive_class = positive_class;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == positive_class;
        const bool t = truth[i] == positive_class;
        if (p && t) ++cm.tp;
        else if (p && !t) ++cm.fp;
        else if (!p && t) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    const long long total = cm.total();
    if (total == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
    return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(total);
}

double recall(const ConfusionMatrix& cm) {
    if (cm.tp + cm.fn == 0) throw std::invalid_argument("recall: no positive samples");
    return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
}

double multiclass_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("accuracy: prediction and label counts differ");
    if (pred.empty()) throw std::invalid_argument("accuracy: no samples");
    long long hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& truth,
                  int positive_class) {
    if (scores.size() != truth.size())
        throw std::invalid_argument("roc_auc: score and label counts differ");
    if (scores.empty()) throw std::invalid_argument("roc_auc: no samples");

    long long pos = 0, neg = 0;
    for (int t : truth) (t == positive_class ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("roc_auc: needs both classes present");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    RocResult out;
    out.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    long long tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        const double t = scores[order[i]];
        // consume the whole tie group before emitting a point
        while (i < order.size() && scores[order[i]] == t) {
            (truth[order[i]] == positive_class ? tp : fp) += 1;
            ++i;
        }
        out.curve.push_back({t, static_cast<double>(fp) / static_cast<double>(neg),
                             static_cast<double>(tp) / static_cast<double>(pos)});
    }

    double auc = 0.0;
    for (size_t k = 1; k < out.curve.size(); ++k) {
        const auto& a = out.curve[k - 1];
        const auto& b = out.curve[k];
        auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    out.auc = auc;
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<std::string, double>>& rows) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot write metrics file: " + path);
    std::fprintf(f.get(), "metric,value\n");
    for (const auto& [name, value] : rows) std::fprintf(f.get(), "%s,%.17g\n", name.c_str(), value);
}

void write_roc_csv(const std::string& path, const RocResult& roc) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot write roc file: " + path);
    std::fprintf(f.get(), "threshold,fpr,tpr\n");
    for (const auto& p : roc.curve)
        std::fprintf(f.get(), "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
}

}  // namespace wlft
