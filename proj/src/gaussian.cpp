#include "gtmsm/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace gtmsm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

bool GaussianStats::finite() const {
    for (double v : mean)
        if (!std::isfinite(v)) return false;
    for (double v : logvar)
        if (!std::isfinite(v)) return false;
    return true;
}

GaussianStats GaussianStats::isotropic(std::vector<double> mean, double logvar) {
    GaussianStats s;
    s.logvar.assign(mean.size(), logvar);
    s.mean = std::move(mean);
    return s;
}

double gaussian_log_density(const std::vector<double>& x, const GaussianStats& g) {
    if (x.size() != g.mean.size() || !g.consistent())
        throw std::invalid_argument("gaussian_log_density: dimension mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - g.mean[i];
        acc += kLog2Pi + g.logvar[i] + d * d * std::exp(-g.logvar[i]);
    }
    return -0.5 * acc;
}

double gaussian_kl(const GaussianStats& q, const GaussianStats& p) {
    if (q.dim() != p.dim() || !q.consistent() || !p.consistent())
        throw std::invalid_argument("gaussian_kl: dimension mismatch");
    double acc = 0.0;
    for (int i = 0; i < q.dim(); ++i) {
        double d = q.mean[i] - p.mean[i];
        acc += p.logvar[i] - q.logvar[i] +
               (std::exp(q.logvar[i]) + d * d) * std::exp(-p.logvar[i]) - 1.0;
    }
    return 0.5 * acc;
}

double gaussian_jeffreys(const GaussianStats& a, const GaussianStats& b) {
    return 0.5 * (gaussian_kl(a, b) + gaussian_kl(b, a));
}

Val gaussian_log_density_nodes(Graph& g, Val x, Val mean, Val logvar) {
    Val d2 = g.square(g.sub(x, mean));
    Val inv_var = g.exp(g.scale(logvar, -1.0));
    Val per_dim = g.add(g.offset(logvar, kLog2Pi), g.mul(d2, inv_var));
    return g.scale(g.sum(per_dim), -0.5);
}

Val gaussian_log_density_nodes(Graph& g, Val x, const GaussianStats& stats) {
    return gaussian_log_density_nodes(g, x, g.constant(stats.mean), g.constant(stats.logvar));
}

Val gaussian_kl_nodes(Graph& g, StatsNodes q, StatsNodes p) {
    Val d2 = g.square(g.sub(q.mean, p.mean));
    Val inv_vp = g.exp(g.scale(p.logvar, -1.0));
    Val ratio = g.mul(g.add(g.exp(q.logvar), d2), inv_vp);
    Val per_dim = g.offset(g.add(g.sub(p.logvar, q.logvar), ratio), -1.0);
    return g.scale(g.sum(per_dim), 0.5);
}

Val bernoulli_log_likelihood_nodes(Graph& g, Val logits, const std::vector<double>& targets) {
    Val t = g.constant(targets);
    return g.sub(g.sum(g.mul(t, logits)), g.sum(g.softplus(logits)));
}

} // namespace gtmsm
