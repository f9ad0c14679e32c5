// Experiment configuration: a flat key-value document. Files use one
// `key = value` pair per line with '#' comments; unknown keys are rejected.
// The canonical serialization (sorted keys) is hashed into checkpoints.
#pragma once

#include "gtmsm/dataset.hpp"
#include "gtmsm/memory.hpp"
#include "gtmsm/ssm.hpp"
#include "gtmsm/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace gtmsm {

struct RunConfig {
    EnvConfig env;

    TransitionVariant variant = TransitionVariant::walled;
    std::string metric = "auto"; // auto | euclidean | angular | angular-linear
    int tau = 64;
    int pred_train = 16;
    int pred_test = 128;
    int k = 5;
    int k_prime = 4;
    double delta = 1e-4;
    double r = 1e-3;
    int z_dim = 16;
    int enc_hidden = 64;
    int gate_hidden = 16;
    int beta_hidden = 16;
    int sigma_hidden = 32;
    bool landmark = false;
    bool disp_loss = false;
    double disp_weight = 1.0;
    bool conv_vae = false;
    std::string decoder = "gaussian"; // gaussian | bernoulli
    double obs_noise = 0.1;           // gaussian decoder observation stddev
    bool sample_generation = false;
    bool gate_per_dim = false;
    std::string precision = "f32"; // f32 | f64

    double lr_start = 1e-3;
    double lr_end = 5e-5;
    int anneal_updates = 50000;
    // Curriculum: KL weight ramps linearly from 0 to 1 over this many updates
    // (0 = full weight from the start). The logged objective is always the
    // unweighted ELBO.
    int kl_warmup = 0;
    // Free-bits floor (nats per step) on the trained z-KL; below the floor
    // the KL contributes a constant, so encodings cannot collapse. 0 turns
    // it off. Only the training gradient changes; logs stay unweighted.
    double free_bits = 0.0;
    // Lower clamp for the encoder's log-variance head (z statistics).
    double z_logvar_min = -6.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch = 16;
    int updates = 50000;
    int ckpt_every = 5000;
    uint64_t seed = 1;
    int threads = 1;

    Precision precision_tag() const;
    DistanceMetric distance_metric() const;
    std::array<int, 3> frame_shape() const;
    int state_dim() const;

    // Throws on internally inconsistent settings (variant vs env kind, dims).
    void validate() const;

    std::string canonical() const;        // sorted key = value lines
    std::string hash() const;             // FNV-1a over canonical(), hex
    static RunConfig from_text(const std::string& text);
    static RunConfig load(const std::string& path);
    void set(const std::string& key, const std::string& value); // one override
};

// Built-in starting points per experiment; see RunConfig::set for overrides.
RunConfig preset_config(const std::string& name);

} // namespace gtmsm
