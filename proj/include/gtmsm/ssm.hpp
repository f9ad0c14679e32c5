// State transition densities p(s_t | s_{t-1}, a_t): linear, wall-gated,
// rotational, and momentum/friction/saturation variants, plus marginal-state
// rollout by ancestral sampling.
#pragma once

#include "gtmsm/gaussian.hpp"
#include "gtmsm/graph.hpp"
#include "gtmsm/rng.hpp"

#include <array>
#include <string>
#include <vector>

namespace gtmsm {

enum class TransitionVariant : uint8_t { linear, walled, rotational, momentum };

const char* transition_variant_name(TransitionVariant v);
TransitionVariant transition_variant_from_name(const std::string& name);

// Parameter-group handles into a Params collection. The saturation scale is
// kept as softplus(c_s_raw) so it stays strictly positive while training.
struct TransitionParams {
    TransitionVariant variant = TransitionVariant::linear;
    int state_dim = 2;
    int action_count = 5;
    double r = 1e-3; // transition noise standard deviation (fixed, not learned)

    int M = -1; // [state_dim x action_count]

    // walled: scalar gate MLP sigma_d(projected position) in (0,1)
    int gate_w1 = -1, gate_b1 = -1, gate_w2 = -1, gate_b2 = -1;
    bool gate_per_dim = false;

    // momentum
    int c_f = -1;
    int c_s_raw = -1;

    static TransitionParams create(Params& params, TransitionVariant variant, int action_count,
                                   double r, int gate_hidden, RngStream rng,
                                   Precision prec, bool gate_per_dim = false);
    double logvar() const; // log(r^2)
};

std::array<std::array<double, 3>, 3> rotation_matrix(double theta);

struct TransStep {
    std::vector<double> mean;
    std::vector<double> d; // agent-frame displacement (momentum) / applied displacement
};

TransStep transition_mean(const Params& params, const TransitionParams& tp,
                          const std::vector<double>& s_prev, const std::vector<double>& d_prev,
                          int action);

struct TransStepNodes {
    Val mean;
    Val d;
};

TransStepNodes transition_nodes(Graph& g, const Params& params, const TransitionParams& tp,
                                Val s_prev, Val d_prev, int action);

double transition_log_density(const Params& params, const TransitionParams& tp,
                              const std::vector<double>& s_t, const std::vector<double>& s_prev,
                              const std::vector<double>& d_prev, int action);

Val transition_log_density_nodes(Graph& g, const Params& params, const TransitionParams& tp,
                                 const std::vector<double>& s_t, Val s_prev, Val d_prev,
                                 int action);

struct StatePath {
    std::vector<std::vector<double>> means;        // per-step transition means
    std::vector<std::vector<double>> samples;      // mean + r * noise
    std::vector<std::vector<double>> displacements;
    std::vector<std::vector<double>> noises;       // standard-normal draws (empty rows if deterministic)
};

// Iterates the transition from (s0, d0) through `actions`. Deterministic mode
// propagates means with zero noise; stochastic mode draws per-step noise from
// `rng`.
StatePath rollout(const Params& params, const TransitionParams& tp, std::vector<double> s0,
                  std::vector<double> d0, const std::vector<uint8_t>& actions, bool deterministic,
                  RngStream* rng);

} // namespace gtmsm
