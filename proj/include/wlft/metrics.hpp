#pragma once

#include <string>
#include <utility>
#include <vector>

namespace wlft {

// One-vs-rest counts against a fixed positive class.
struct ConfusionMatrix {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    int positive_class = 1;

    long long total() const { return tp + fp + fn + tn; }
};

ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth,
                          int positive_class);

double accuracy(const ConfusionMatrix& cm);

// tp / (tp + fn); requires at least one positive sample
double recall(const ConfusionMatrix& cm);

// plain top-1 correctness over any number of classes
double multiclass_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocResult {
    std::vector<RocPoint> curve;  // starts at (0,0), ends at (1,1)
    double auc = 0.0;
};

// Sweeps every distinct score as a `classify positive when score >= t`
// threshold, grouping ties into one step, and integrates by trapezoid.
// Both classes must be present one-vs-rest.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& truth,
                  int positive_class = 1);

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<std::string, double>>& rows);
void write_roc_csv(const std::string& path, const RocResult& roc);

}  // namespace wlft
