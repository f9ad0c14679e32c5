#include "gtmsm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gtmsm {

AdamState AdamState::init(const Params& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& g : params.groups()) {
        s.m.push_back(Tensor::zeros(g.value.shape(), g.value.precision()));
        s.v.push_back(Tensor::zeros(g.value.shape(), g.value.precision()));
    }
    return s;
}

bool AdamState::matches(const Params& params) const {
    if (m.size() != params.size() || v.size() != params.size()) return false;
    for (size_t i = 0; i < m.size(); ++i) {
        if (m[i].shape() != params.groups()[i].value.shape()) return false;
        if (v[i].shape() != params.groups()[i].value.shape()) return false;
    }
    return true;
}

void adam_step(Params& params, AdamState& state, const AdamConfig& cfg) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("adam: lr must be positive");
    if (!state.matches(params)) throw std::invalid_argument("adam: state does not match params");

    state.step += 1;
    double t = static_cast<double>(state.step);
    double bc1 = 1.0 - std::pow(cfg.beta1, t);
    double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (size_t gi = 0; gi < params.size(); ++gi) {
        ParamGroup& p = params.groups()[gi];
        Tensor& m = state.m[gi];
        Tensor& v = state.v[gi];
        for (int64_t i = 0; i < p.value.size(); ++i) {
            double g = p.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        m.round_to_precision();
        v.round_to_precision();
        p.value.round_to_precision();
    }
}

} // namespace gtmsm
