// Model assembly: past encoder (memorization phase), ELBO objective over the
// prediction phase, landmark-corrected state inference, displacement
// regression, and action-conditioned generation.
#pragma once

#include "gtmsm/config.hpp"
#include "gtmsm/dataset.hpp"
#include "gtmsm/memory.hpp"
#include "gtmsm/ssm.hpp"
#include "gtmsm/vae.hpp"

#include <vector>

namespace gtmsm {

struct LandmarkNets {
    int k_prime = 4;
    int state_dim = 2;
    // beta net: scalar z-space distance -> beta in (0,1)
    int beta_w1 = -1, beta_b1 = -1, beta_w2 = -1, beta_b2 = -1;
    // sigma net: (deltas, retrieved key log-variances, prior log-variance)
    // -> additive log-variance correction; final layer starts at zero.
    int sig_w1 = -1, sig_b1 = -1, sig_w2 = -1, sig_b2 = -1;

    int sigma_in_dim() const { return k_prime + k_prime * state_dim + state_dim; }

    static LandmarkNets create(Params& params, int k_prime, int state_dim, int beta_hidden,
                               int sigma_hidden, RngStream rng, Precision prec);
};

struct Model {
    RunConfig cfg;
    Params params;
    TransitionParams trans;
    VaeNets vae;
    LandmarkNets lm;
    DistanceMetric metric;
};

Model build_model(const RunConfig& cfg);

// Pushes the landmark correction to an exact no-op: beta ~ 0 and a zero
// variance correction. Used to check the reduction to the plain objective.
void zero_landmark_correction(Model& m);

struct PastEncodeResult {
    SpatialMemory memory; // frozen, tau entries
    GaussianStats s_tau;
    std::vector<double> d_tau;
    std::vector<std::vector<double>> states; // key means s_1..s_tau
};

// Memorization phase: deterministic mean propagation of the state (landmark
// posterior means when the model is configured with landmark inference),
// frame encodings as values. Stored contents are constants for all later
// differentiation.
PastEncodeResult past_encode(const Model& m, const Episode& ep);

struct ElboNoise {
    std::vector<std::vector<double>> state_eps;
    std::vector<std::vector<double>> z_eps;
};

ElboNoise draw_elbo_noise(const Model& m, int pred_len, RngStream rng);

struct ElboResult {
    Val objective;             // scalar graph node, sum over prediction steps
    double value = 0.0;
    std::vector<double> recon; // per-step diagnostics
    std::vector<double> kl_z;
    std::vector<double> kl_s;  // landmark runs only
    std::vector<Val> disp_nodes;
};

// Builds the prediction-phase objective against a fixed memory. The episode
// may carry a longer prediction segment than wanted; `pred_len` limits it
// (-1 = use everything past tau). `kl_weight` scales the KL terms in the
// returned objective node (warm-up curriculum); `value` always reports the
// unweighted ELBO.
ElboResult build_elbo(Graph& g, const Model& m, const Episode& ep, const PastEncodeResult& pe,
                      const ElboNoise& noise, int pred_len = -1, double kl_weight = 1.0);

// weight * mean squared error between model displacements and recorded ones.
// Momentum variant only; targets stay out of the forward pass.
Val displacement_loss_nodes(Graph& g, const std::vector<Val>& d_nodes,
                            const std::vector<std::vector<float>>& true_disp, int tau,
                            double weight);

struct PredictResult {
    std::vector<std::vector<double>> frames; // per-step pixel probabilities
    std::vector<std::vector<double>> states; // deterministic transition means
    std::vector<std::vector<double>> disps;  // model displacements d_t
    std::vector<std::vector<double>> zs;
};

// Forward generation from the frozen memory; never sees prediction frames.
PredictResult predict(const Model& m, const PastEncodeResult& pe,
                      const std::vector<uint8_t>& actions, RngStream* rng = nullptr);

// Convenience: numeric objective of one episode under fresh noise.
double episode_objective(const Model& m, const Episode& ep, RngStream noise_rng,
                         int pred_len = -1);

} // namespace gtmsm
