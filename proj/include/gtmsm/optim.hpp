// Adam with bias correction, plus the linear learning-rate anneal schedule.
#pragma once

#include "gtmsm/params.hpp"

#include <cstdint>
#include <vector>

namespace gtmsm {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    int64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const Params& params);
    bool matches(const Params& params) const;
};

// One descent step using the gradients currently stored in `params`.
void adam_step(Params& params, AdamState& state, const AdamConfig& cfg);

struct LrSchedule {
    double lr_start = 1e-3;
    double lr_end = 5e-5;
    int64_t anneal_updates = 50000;

    double at(int64_t update) const {
        if (anneal_updates <= 0) return lr_end;
        double f = static_cast<double>(update) / static_cast<double>(anneal_updates);
        if (f >= 1.0) return lr_end;
        return lr_start + (lr_end - lr_start) * f;
    }
};

} // namespace gtmsm
