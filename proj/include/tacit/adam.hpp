#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tacit/error.hpp"
#include "tacit/tensor.hpp"

namespace tacit {

template <typename T>
struct AdamConfig {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

/// First/second moment slots parallel to a fixed parameter list, plus the
/// shared step counter.
template <typename T>
struct AdamState {
    AdamConfig<T> config;
    uint64_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;

    static AdamState init(const std::vector<Tensor<T>*>& params, AdamConfig<T> cfg = {}) {
        AdamState st;
        st.config = cfg;
        st.m.reserve(params.size());
        st.v.reserve(params.size());
        for (const Tensor<T>* p : params) {
            st.m.push_back(Tensor<T>(p->shape));
            st.v.push_back(Tensor<T>(p->shape));
        }
        return st;
    }
};

/// One bias-corrected Adam update over a parameter list.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state) {
    require(params.size() == grads.size() && params.size() == state.m.size(),
            ErrorCategory::invalid_argument, "adam_step: list length mismatch");
    state.step += 1;
    const T b1 = state.config.beta1;
    const T b2 = state.config.beta2;
    const T corr1 = T(1) - std::pow(b1, T(state.step));
    const T corr2 = T(1) - std::pow(b2, T(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = *grads[i];
        require(p.same_shape(g) && p.same_shape(state.m[i]), ErrorCategory::invalid_argument,
                "adam_step: shape mismatch at tensor " + std::to_string(i));
        T* mp = state.m[i].data.data();
        T* vp = state.v[i].data.data();
        for (size_t j = 0; j < p.numel(); ++j) {
            mp[j] = b1 * mp[j] + (T(1) - b1) * g.data[j];
            vp[j] = b2 * vp[j] + (T(1) - b2) * g.data[j] * g.data[j];
            const T mhat = mp[j] / corr1;
            const T vhat = vp[j] / corr2;
            p.data[j] -= state.config.lr * mhat / (std::sqrt(vhat) + state.config.eps);
        }
    }
}

}  // namespace tacit
