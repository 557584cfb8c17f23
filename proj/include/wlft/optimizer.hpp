#pragma once

#include <stdexcept>
#include <vector>

#include "wlft/autodiff.hpp"

namespace wlft {

// Classic momentum: buf <- m * buf + grad; p <- p - lr * buf.
template <typename T>
void sgd_step(std::vector<Parameter<T>*>& params, T lr, T momentum) {
    if (!(lr > T(0))) throw std::invalid_argument("sgd_step: learning rate must be positive");
    if (momentum < T(0)) throw std::invalid_argument("sgd_step: momentum must be non-negative");
    for (Parameter<T>* p : params) {
        Tensor<T>& g = p->grad();
        if (!p->momentum.defined()) p->momentum = Tensor<T>::zeros(p->tensor().shape);
        Tensor<T>& buf = p->momentum;
        Tensor<T>& w = p->tensor();
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            buf.data[i] = momentum * buf.data[i] + g.data[i];
            w.data[i] -= lr * buf.data[i];
        }
    }
}

template <typename T>
void zero_grad(std::vector<Parameter<T>*>& params) {
    for (Parameter<T>* p : params) p->grad().fill(T(0));
}

}  // namespace wlft
