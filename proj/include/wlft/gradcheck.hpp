#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wlft/model.hpp"
#include "wlft/optimizer.hpp"
#include "wlft/rng.hpp"

namespace wlft {

struct GradcheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    int entries = 0;
};

struct GradcheckReport {
    std::vector<GradcheckGroup> groups;  // one per parameter tensor
    double max_rel_err = 0.0;
    std::string worst_group;

    bool pass(double tol) const { return max_rel_err < tol; }
};

// Central finite differences against the analytic gradients of the full
// training loss, probing a few random entries per parameter tensor. Always
// run at 64-bit; float-precision parameters would drown the comparison in
// rounding noise. `corruption` is a test hook that biases one analytic
// gradient entry so the failure path stays exercised.
inline GradcheckReport gradcheck_model(Model<double>& m, const Tensor<double>& x,
                                       const std::vector<int>& labels, int samples_per_tensor,
                                       std::uint64_t seed, double step = 1e-5,
                                       double corruption = 0.0) {
    if (samples_per_tensor < 1) throw ConfigError("gradcheck needs at least one probe per tensor");
    auto loss_value = [&]() {
        auto out = m.forward(Var<double>::constant(x), true);
        return m.total_loss(out, labels).value().data[0];
    };

    std::vector<Parameter<double>*> params = m.parameters();
    zero_grad(params);
    {
        auto out = m.forward(Var<double>::constant(x), true);
        auto loss = m.total_loss(out, labels);
        backward(loss);
    }
    if (corruption != 0.0 && !params.empty()) params[0]->var.grad().data[0] += corruption;

    Rng rng(seed);
    GradcheckReport rep;
    for (Parameter<double>* p : params) {
        Tensor<double>& t = p->tensor();
        const Tensor<double> analytic = p->var.grad();
        GradcheckGroup group;
        group.name = p->name;
        const int n = t.numel();
        const int probes = std::min(samples_per_tensor, n);
        for (int s = 0; s < probes; ++s) {
            // entry 0 is always probed; the rest are sampled
            const int i = (n <= samples_per_tensor || s == 0)
                              ? s
                              : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
            const double v = t.data[i];
            t.data[i] = v + step;
            const double lp = loss_value();
            t.data[i] = v - step;
            const double lm = loss_value();
            t.data[i] = v;
            const double fd = (lp - lm) / (2.0 * step);
            const double an = analytic.data[i];
            const double rel =
                std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
            ++group.entries;
            group.max_rel_err = std::max(group.max_rel_err, rel);
        }
        if (rep.worst_group.empty() || group.max_rel_err > rep.max_rel_err) {
            rep.max_rel_err = group.max_rel_err;
            rep.worst_group = group.name;
        }
        rep.groups.push_back(std::move(group));
    }
    zero_grad(params);
    return rep;
}

}  // namespace wlft
