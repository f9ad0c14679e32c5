// Shared toy configurations and datasets for model-level tests.
#pragma once

#include "gtmsm/config.hpp"
#include "gtmsm/dataset.hpp"

#include <filesystem>
#include <string>

namespace gtmsm::testutil {

inline RunConfig toy_config(TransitionVariant variant, bool landmark = false) {
    RunConfig c;
    c.variant = variant;
    switch (variant) {
        case TransitionVariant::linear:
        case TransitionVariant::walled:
            c.env.kind = EnvKind::image_nav;
            c.env.world_size = 6;
            c.env.crop = 2;
            c.env.positions_per_dim = 3;
            break;
        case TransitionVariant::rotational:
            c.env.kind = EnvKind::panorama;
            c.env.period = 4;
            c.env.window = 4;
            c.env.strip_height = 4;
            c.env.strip_width = 8;
            break;
        case TransitionVariant::momentum:
            c.env.kind = EnvKind::momentum;
            c.env.world_size = 6;
            c.env.crop = 2;
            c.disp_loss = true;
            break;
    }
    c.env.apply_defaults();
    c.tau = 3;
    c.pred_train = 3;
    c.pred_test = 3;
    c.k = 2;
    c.k_prime = 2;
    c.z_dim = 4;
    c.enc_hidden = 8;
    c.gate_hidden = 4;
    c.beta_hidden = 4;
    c.sigma_hidden = 8;
    c.r = 1e-2;
    c.batch = 2;
    c.updates = 4;
    c.ckpt_every = 2;
    c.precision = "f64";
    c.landmark = landmark;
    c.seed = 12;
    return c;
}

struct ToyData {
    std::filesystem::path dir;
    explicit ToyData(const RunConfig& cfg, const std::string& name, int n = 4,
                     uint64_t seed = 101) {
        dir = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(dir);
        Dataset::generate(cfg.env, dir.string(), n, cfg.tau, cfg.pred_train, seed);
    }
    ~ToyData() { std::filesystem::remove_all(dir); }
    Dataset open() const { return Dataset::open(dir.string()); }
};

} // namespace gtmsm::testutil
