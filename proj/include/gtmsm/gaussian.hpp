// Diagonal-Gaussian sufficient statistics and density helpers, in both plain
// and graph-node form.
#pragma once

#include "gtmsm/graph.hpp"

#include <vector>

namespace gtmsm {

struct GaussianStats {
    std::vector<double> mean;
    std::vector<double> logvar;

    int dim() const { return static_cast<int>(mean.size()); }
    bool consistent() const { return mean.size() == logvar.size(); }
    bool finite() const;

    static GaussianStats isotropic(std::vector<double> mean, double logvar);
};

// log N(x; mean, exp(logvar)) with a diagonal covariance.
double gaussian_log_density(const std::vector<double>& x, const GaussianStats& g);

// KL[q || p] for diagonal Gaussians; nonnegative, zero iff q == p.
double gaussian_kl(const GaussianStats& q, const GaussianStats& p);

// Symmetrized KL (Jeffreys divergence): 0.5*(KL[a||b] + KL[b||a]).
double gaussian_jeffreys(const GaussianStats& a, const GaussianStats& b);

// ---- graph-node versions ----

struct StatsNodes {
    Val mean;
    Val logvar;
};

Val gaussian_log_density_nodes(Graph& g, Val x, Val mean, Val logvar);
Val gaussian_log_density_nodes(Graph& g, Val x, const GaussianStats& stats); // constant stats
Val gaussian_kl_nodes(Graph& g, StatsNodes q, StatsNodes p);

// Bernoulli log-likelihood of targets (constants in [0,1]) under logits:
// sum(t*l - softplus(l)).
Val bernoulli_log_likelihood_nodes(Graph& g, Val logits, const std::vector<double>& targets);

} // namespace gtmsm
