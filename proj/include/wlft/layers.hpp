#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "wlft/autodiff.hpp"
#include "wlft/nn_ops.hpp"
#include "wlft/rng.hpp"

namespace wlft {

// Owns every learnable tensor of a model. Pointers returned by add() stay
// valid for the store's lifetime; registration order fixes checkpoint layout
// and rng consumption, so construction order is part of reproducibility.
template <typename T>
class ParamStore {
  public:
    Parameter<T>* add(std::string name, Tensor<T> init) {
        if (!names_.insert(name).second)
            throw std::logic_error("duplicate parameter name: " + name);
        params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(init)));
        return params_.back().get();
    }

    std::vector<Parameter<T>*> all() {
        std::vector<Parameter<T>*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    Parameter<T>* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    std::size_t size() const { return params_.size(); }

  private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::unordered_set<std::string> names_;
};

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, int fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
struct Conv2dLayer {
    Parameter<T>* w = nullptr;
    Parameter<T>* b = nullptr;  // null for bias-free layers (those followed by batchnorm)
    int stride = 1;
    Padding mode = Padding::kZero;
    int pad_h = 0, pad_w = 0;

    static Conv2dLayer create(ParamStore<T>& store, const std::string& name, int in_c, int out_c,
                              int kh, int kw, int stride, Padding mode, bool bias, Rng& rng,
                              bool zero_init = false) {
        Conv2dLayer l;
        l.stride = stride;
        l.mode = mode;
        l.pad_h = (kh - 1) / 2;
        l.pad_w = (kw - 1) / 2;
        const int fan_in = in_c * kh * kw;
        Tensor<T> wt = zero_init ? Tensor<T>({out_c, in_c, kh, kw})
                                 : kaiming_uniform<T>({out_c, in_c, kh, kw}, fan_in, rng);
        l.w = store.add(name + ".w", std::move(wt));
        if (bias) l.b = store.add(name + ".b", Tensor<T>({out_c}));
        return l;
    }

    Var<T> forward(const Var<T>& x) const {
        Var<T> bias = b ? b->var : Var<T>::constant(Tensor<T>({w->tensor().shape[0]}));
        return conv2d(x, w->var, bias, stride, mode, pad_h, pad_w);
    }
};

template <typename T>
struct LinearLayer {
    Parameter<T>* w = nullptr;
    Parameter<T>* b = nullptr;

    static LinearLayer create(ParamStore<T>& store, const std::string& name, int in_d, int out_d,
                              Rng& rng) {
        LinearLayer l;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_d));
        Tensor<T> wt({out_d, in_d});
        for (T& v : wt.data) v = static_cast<T>(rng.uniform(-bound, bound));
        Tensor<T> bt({out_d});
        for (T& v : bt.data) v = static_cast<T>(rng.uniform(-bound, bound));
        l.w = store.add(name + ".w", std::move(wt));
        l.b = store.add(name + ".b", std::move(bt));
        return l;
    }

    Var<T> forward(const Var<T>& x) const { return linear(x, w->var, b->var); }
};

template <typename T>
struct BatchNorm2dLayer {
    std::string name;
    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;
    Tensor<T> running_mean, running_var;

    static BatchNorm2dLayer create(ParamStore<T>& store, const std::string& name, int c) {
        BatchNorm2dLayer l;
        l.name = name;
        l.gamma = store.add(name + ".gamma", Tensor<T>::full({c}, T(1)));
        l.beta = store.add(name + ".beta", Tensor<T>({c}));
        l.running_mean = Tensor<T>({c});
        l.running_var = Tensor<T>::full({c}, T(1));
        return l;
    }

    Var<T> forward(const Var<T>& x, bool train) {
        return batchnorm2d(x, gamma->var, beta->var, running_mean, running_var, train);
    }
};

// Two conv layers, tanh after each. Serves as both the predictor P and the
// updater U of a lifting level. The final layer starts at zero so the whole
// net maps everything to zero initially and the lifting level begins as an
// exact Haar step.
template <typename T>
struct PredictUpdateNet {
    Conv2dLayer<T> c1, c2;

    static PredictUpdateNet create(ParamStore<T>& store, const std::string& name, int c, int kh,
                                   int kw, Rng& rng) {
        PredictUpdateNet n;
        n.c1 = Conv2dLayer<T>::create(store, name + ".c1", c, c, kh, kw, 1, Padding::kReflect,
                                      true, rng);
        n.c2 = Conv2dLayer<T>::create(store, name + ".c2", c, c, kh, kw, 1, Padding::kReflect,
                                      true, rng, /*zero_init=*/true);
        return n;
    }

    Var<T> forward(const Var<T>& x) const {
        return tanh_act(c2.forward(tanh_act(c1.forward(x))));
    }
};

}  // namespace wlft
