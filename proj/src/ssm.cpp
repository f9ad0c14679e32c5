#include "gtmsm/ssm.hpp"

#include <cmath>
#include <stdexcept>

namespace gtmsm {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

std::vector<double> m_column(const Tensor& m, int action) {
    int rows = m.dim(0);
    std::vector<double> col(static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) col[static_cast<size_t>(i)] = m.at(i, action);
    return col;
}

Tensor random_tensor(std::vector<int> shape, double stddev, RngStream& rng, Precision prec) {
    Tensor t(std::move(shape), prec);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * stddev;
    t.round_to_precision();
    return t;
}

} // namespace

const char* transition_variant_name(TransitionVariant v) {
    switch (v) {
        case TransitionVariant::linear: return "linear";
        case TransitionVariant::walled: return "walled";
        case TransitionVariant::rotational: return "rotational";
        case TransitionVariant::momentum: return "momentum";
    }
    return "?";
}

TransitionVariant transition_variant_from_name(const std::string& name) {
    if (name == "linear") return TransitionVariant::linear;
    if (name == "walled") return TransitionVariant::walled;
    if (name == "rotational") return TransitionVariant::rotational;
    if (name == "momentum") return TransitionVariant::momentum;
    throw std::invalid_argument("unknown transition variant '" + name + "'");
}

TransitionParams TransitionParams::create(Params& params, TransitionVariant variant,
                                          int action_count, double r, int gate_hidden,
                                          RngStream rng, Precision prec, bool gate_per_dim) {
    if (r <= 0.0) throw std::invalid_argument("transition: r must be positive");
    TransitionParams tp;
    tp.variant = variant;
    tp.state_dim = (variant == TransitionVariant::linear || variant == TransitionVariant::walled)
                       ? 2
                       : 3;
    tp.action_count = action_count;
    tp.r = r;
    tp.gate_per_dim = gate_per_dim;

    // Opposite-action columns start as exact negatives (random directions,
    // zero unpaired/stay column): with i.i.d. columns the propagated state
    // depends on action counts rather than positions, and revisited places
    // never map to nearby keys, which stalls retrieval learning.
    {
        Tensor m({tp.state_dim, action_count}, prec);
        for (int c = 0; c + 1 < action_count; c += 2) {
            for (int r_ = 0; r_ < tp.state_dim; ++r_) {
                double v = rng.normal() * 0.1;
                m.at(r_, c) = v;
                m.at(r_, c + 1) = -v;
            }
        }
        m.round_to_precision();
        tp.M = params.add("trans.M", std::move(m));
    }
    if (variant == TransitionVariant::walled) {
        int out = gate_per_dim ? tp.state_dim : 1;
        tp.gate_w1 = params.add("trans.gate_w1",
                                random_tensor({gate_hidden, tp.state_dim}, 1.0, rng, prec));
        tp.gate_b1 = params.add("trans.gate_b1", Tensor::zeros({gate_hidden}, prec));
        // Small output weights keep the initial gate nearly constant, so
        // revisited positions land on nearly identical keys before training.
        tp.gate_w2 = params.add("trans.gate_w2",
                                random_tensor({out, gate_hidden}, 0.1, rng, prec));
        // Positive output bias opens the gate at initialization.
        tp.gate_b2 = params.add("trans.gate_b2", Tensor::full({out}, 2.0, prec));
    }
    if (variant == TransitionVariant::momentum) {
        tp.c_f = params.add("trans.c_f", Tensor::zeros({tp.state_dim}, prec));
        tp.c_s_raw = params.add("trans.c_s_raw", Tensor::zeros({tp.state_dim}, prec));
    }
    return tp;
}

double TransitionParams::logvar() const { return 2.0 * std::log(r); }

std::array<std::array<double, 3>, 3> rotation_matrix(double theta) {
    double c = std::cos(theta), s = std::sin(theta);
    return {{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

TransStep transition_mean(const Params& params, const TransitionParams& tp,
                          const std::vector<double>& s_prev, const std::vector<double>& d_prev,
                          int action) {
    if (action < 0 || action >= tp.action_count)
        throw std::invalid_argument("transition: invalid action " + std::to_string(action));
    if (static_cast<int>(s_prev.size()) != tp.state_dim)
        throw std::invalid_argument("transition: state dimension mismatch");

    const Tensor& m = params.group(tp.M).value;
    std::vector<double> ma = m_column(m, action);
    TransStep out;

    switch (tp.variant) {
        case TransitionVariant::linear: {
            out.d = ma;
            out.mean = s_prev;
            for (int i = 0; i < tp.state_dim; ++i) out.mean[static_cast<size_t>(i)] += ma[static_cast<size_t>(i)];
            return out;
        }
        case TransitionVariant::walled: {
            std::vector<double> proj(s_prev);
            for (int i = 0; i < tp.state_dim; ++i) proj[static_cast<size_t>(i)] += ma[static_cast<size_t>(i)];
            const Tensor& w1 = params.group(tp.gate_w1).value;
            const Tensor& b1 = params.group(tp.gate_b1).value;
            const Tensor& w2 = params.group(tp.gate_w2).value;
            const Tensor& b2 = params.group(tp.gate_b2).value;
            int hidden = w1.dim(0);
            std::vector<double> h(static_cast<size_t>(hidden));
            for (int r_ = 0; r_ < hidden; ++r_) {
                double acc = b1[r_];
                for (int c = 0; c < tp.state_dim; ++c) acc += w1.at(r_, c) * proj[static_cast<size_t>(c)];
                h[static_cast<size_t>(r_)] = std::tanh(acc);
            }
            int gates = w2.dim(0);
            out.d = ma;
            out.mean = s_prev;
            for (int gi = 0; gi < gates; ++gi) {
                double acc = b2[gi];
                for (int c = 0; c < hidden; ++c) acc += w2.at(gi, c) * h[static_cast<size_t>(c)];
                double gate = sigmoid(acc);
                if (tp.gate_per_dim) {
                    out.d[static_cast<size_t>(gi)] *= gate;
                } else {
                    for (int i = 0; i < tp.state_dim; ++i) out.d[static_cast<size_t>(i)] *= gate;
                }
            }
            for (int i = 0; i < tp.state_dim; ++i) out.mean[static_cast<size_t>(i)] += out.d[static_cast<size_t>(i)];
            return out;
        }
        case TransitionVariant::rotational: {
            out.d = ma;
            double theta = s_prev[2];
            auto r_ = rotation_matrix(theta);
            out.mean = s_prev;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    out.mean[static_cast<size_t>(i)] += r_[static_cast<size_t>(i)][static_cast<size_t>(j)] * ma[static_cast<size_t>(j)];
            return out;
        }
        case TransitionVariant::momentum: {
            if (d_prev.size() != 3)
                throw std::invalid_argument("transition: momentum needs a 3-dim displacement");
            const Tensor& cf = params.group(tp.c_f).value;
            const Tensor& csr = params.group(tp.c_s_raw).value;
            out.d.resize(3);
            for (int i = 0; i < 3; ++i) {
                double u = sigmoid(cf[i]) * d_prev[static_cast<size_t>(i)] + ma[static_cast<size_t>(i)];
                out.d[static_cast<size_t>(i)] = softplus(csr[i]) * std::tanh(u);
            }
            double theta = s_prev[2];
            auto r_ = rotation_matrix(theta);
            out.mean = s_prev;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    out.mean[static_cast<size_t>(i)] += r_[static_cast<size_t>(i)][static_cast<size_t>(j)] * out.d[static_cast<size_t>(j)];
            return out;
        }
    }
    throw std::logic_error("transition: unknown variant");
}

namespace {

Val rotate_by_state_angle(Graph& g, Val s_prev, Val d) {
    Val theta = g.index(s_prev, 2);
    Val c = g.cos(theta);
    Val s = g.sin(theta);
    Val d0 = g.index(d, 0);
    Val d1 = g.index(d, 1);
    Val d2 = g.index(d, 2);
    Val x = g.sub(g.mul(c, d0), g.mul(s, d1));
    Val y = g.add(g.mul(s, d0), g.mul(c, d1));
    return g.concat({x, y, d2});
}

} // namespace

TransStepNodes transition_nodes(Graph& g, const Params& params, const TransitionParams& tp,
                                Val s_prev, Val d_prev, int action) {
    if (action < 0 || action >= tp.action_count)
        throw std::invalid_argument("transition: invalid action " + std::to_string(action));

    // M * a for a one-hot action is a column pick; build it with index ops so
    // gradients land in the right entries of M.
    Val m = g.param(params, tp.M);
    std::vector<Val> col;
    for (int i = 0; i < tp.state_dim; ++i)
        col.push_back(g.index(m, i * tp.action_count + action));
    Val ma = g.concat(col);

    switch (tp.variant) {
        case TransitionVariant::linear:
            return {g.add(s_prev, ma), ma};
        case TransitionVariant::walled: {
            Val proj = g.add(s_prev, ma);
            Val h = g.tanh(g.add(g.matvec(g.param(params, tp.gate_w1), proj),
                                 g.param(params, tp.gate_b1)));
            Val gate = g.sigmoid(g.add(g.matvec(g.param(params, tp.gate_w2), h),
                                       g.param(params, tp.gate_b2)));
            Val gate_vec = tp.gate_per_dim ? gate : g.broadcast(gate, tp.state_dim);
            Val d = g.mul(ma, gate_vec);
            return {g.add(s_prev, d), d};
        }
        case TransitionVariant::rotational:
            return {g.add(s_prev, rotate_by_state_angle(g, s_prev, ma)), ma};
        case TransitionVariant::momentum: {
            Val friction = g.sigmoid(g.param(params, tp.c_f));
            Val cs = g.softplus(g.param(params, tp.c_s_raw));
            Val u = g.add(g.mul(friction, d_prev), ma);
            Val d = g.mul(cs, g.tanh(u));
            return {g.add(s_prev, rotate_by_state_angle(g, s_prev, d)), d};
        }
    }
    throw std::logic_error("transition: unknown variant");
}

double transition_log_density(const Params& params, const TransitionParams& tp,
                              const std::vector<double>& s_t, const std::vector<double>& s_prev,
                              const std::vector<double>& d_prev, int action) {
    TransStep step = transition_mean(params, tp, s_prev, d_prev, action);
    return gaussian_log_density(s_t, GaussianStats::isotropic(step.mean, tp.logvar()));
}

Val transition_log_density_nodes(Graph& g, const Params& params, const TransitionParams& tp,
                                 const std::vector<double>& s_t, Val s_prev, Val d_prev,
                                 int action) {
    TransStepNodes step = transition_nodes(g, params, tp, s_prev, d_prev, action);
    Val logvar = g.constant(std::vector<double>(static_cast<size_t>(tp.state_dim), tp.logvar()));
    return gaussian_log_density_nodes(g, g.constant(s_t), step.mean, logvar);
}

StatePath rollout(const Params& params, const TransitionParams& tp, std::vector<double> s0,
                  std::vector<double> d0, const std::vector<uint8_t>& actions, bool deterministic,
                  RngStream* rng) {
    if (actions.empty()) throw std::invalid_argument("rollout: empty action sequence");
    if (!deterministic && rng == nullptr)
        throw std::invalid_argument("rollout: stochastic mode needs an rng stream");

    StatePath path;
    std::vector<double> s = std::move(s0);
    std::vector<double> d = std::move(d0);
    for (uint8_t a : actions) {
        TransStep step = transition_mean(params, tp, s, d, a);
        std::vector<double> noise(static_cast<size_t>(tp.state_dim), 0.0);
        std::vector<double> sample = step.mean;
        if (!deterministic) {
            for (int i = 0; i < tp.state_dim; ++i) {
                noise[static_cast<size_t>(i)] = rng->normal();
                sample[static_cast<size_t>(i)] += tp.r * noise[static_cast<size_t>(i)];
            }
        }
        path.means.push_back(step.mean);
        path.samples.push_back(sample);
        path.displacements.push_back(step.d);
        path.noises.push_back(noise);
        s = path.samples.back();
        d = step.d;
    }
    return path;
}

} // namespace gtmsm
