// Frame encoder q(z|x), Bernoulli decoder p(x|z), and the memory-conditioned
// mixture prior p(z|s,m) with weights inversely proportional to squared key
// distance.
#pragma once

#include "gtmsm/gaussian.hpp"
#include "gtmsm/graph.hpp"
#include "gtmsm/memory.hpp"
#include "gtmsm/rng.hpp"

#include <array>
#include <vector>

namespace gtmsm {

// Log-variance outputs are clamped to this range before exponentiation.
constexpr double kLogVarClampLo = -10.0;
constexpr double kLogVarClampHi = 10.0;

struct VaeNets {
    bool conv = false;
    int z_dim = 16;
    std::array<int, 3> frame_shape{1, 4, 4}; // (c, h, w)
    // Encoder log-variance window. The lower edge keeps the stored mixture
    // components non-degenerate; the single-sample KL estimator is unusable
    // against near-delta components.
    double logvar_min = kLogVarClampLo;

    // fully connected pair
    int enc_w1 = -1, enc_b1 = -1;
    int enc_wm = -1, enc_bm = -1, enc_wv = -1, enc_bv = -1;
    int dec_w1 = -1, dec_b1 = -1, dec_w2 = -1, dec_b2 = -1;

    // 3-layer convolutional pair (used when conv is set)
    int cw1 = -1, cb1 = -1, cw2 = -1, cb2 = -1, cw3 = -1, cb3 = -1;
    int dw1 = -1, db1 = -1, dcw1 = -1, dcb1 = -1, dcw2 = -1, dcb2 = -1, dcw3 = -1, dcb3 = -1;

    int frame_dim() const { return frame_shape[0] * frame_shape[1] * frame_shape[2]; }

    static VaeNets create(Params& params, std::array<int, 3> frame_shape, int z_dim, int hidden,
                          bool conv, RngStream rng, Precision prec,
                          double logvar_min = kLogVarClampLo);
};

GaussianStats encode(const Params& params, const VaeNets& nets, const std::vector<float>& frame);
std::vector<double> decode_logits(const Params& params, const VaeNets& nets,
                                  const std::vector<double>& z);
std::vector<double> decode_probs(const Params& params, const VaeNets& nets,
                                 const std::vector<double>& z);

StatsNodes encode_nodes(Graph& g, const Params& params, const VaeNets& nets,
                        const std::vector<float>& frame);
Val decode_logits_nodes(Graph& g, const Params& params, const VaeNets& nets, Val z);

// Gaussian frame likelihood with fixed observation noise: the pixel mean is
// sigmoid(logits), so generated frames stay in (0,1).
Val gaussian_frame_ll_nodes(Graph& g, Val logits, const std::vector<double>& targets,
                            double obs_noise);

// ---------------------------------------------------------------------------
// mixture prior
// ---------------------------------------------------------------------------

struct MixturePrior {
    std::vector<double> weights;           // normalized, sum 1
    std::vector<GaussianStats> components; // retrieved z statistics
    std::vector<double> distances;         // key-space distances d_k
    std::vector<int> entry_indices;

    int k() const { return static_cast<int>(weights.size()); }
};

// Retrieves the K nearest keys to `s` and weights them by 1/(d^2 + delta).
MixturePrior mixture_prior(const std::vector<double>& s, const SpatialMemory& memory, int k,
                           double delta, const DistanceMetric& metric,
                           QueryMode mode = QueryMode::exact);

double mixture_log_density(const MixturePrior& prior, const std::vector<double>& z);

// Single-sample KL estimate log q(z) - log p(z) at z = mean + std * noise.
double kl_mc(const GaussianStats& q, const MixturePrior& prior, const std::vector<double>& noise);

struct MixturePriorNodes {
    std::vector<Val> log_weights;
    MixturePrior concrete; // numeric snapshot (weights/components/distances)
};

// Graph version: neighbour selection uses the current value of `s`; the
// weights are differentiable through the distances, while the retrieved
// statistics enter as constants.
MixturePriorNodes mixture_prior_nodes(Graph& g, Val s, const SpatialMemory& memory, int k,
                                      double delta, const DistanceMetric& metric,
                                      QueryMode mode = QueryMode::exact);

Val mixture_log_density_nodes(Graph& g, const MixturePriorNodes& prior, Val z);

struct KlMcNodes {
    Val kl;
    Val z;
};

KlMcNodes kl_mc_nodes(Graph& g, StatsNodes q, const MixturePriorNodes& prior,
                      const std::vector<double>& noise);

// Generation-time latent: mean of the highest-weight component, or an
// ancestral draw (component ~ weights, then Gaussian) when `sample` is set.
std::vector<double> generate_z(const MixturePrior& prior, bool sample, RngStream* rng);

} // namespace gtmsm
