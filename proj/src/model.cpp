#include "gtmsm/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtmsm {

namespace {

// Squared-distance filler for missing landmark slots.
constexpr double kDeltaPad = 1e3;

Tensor gauss_tensor(std::vector<int> shape, double stddev, RngStream& rng, Precision prec) {
    Tensor t(std::move(shape), prec);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * stddev;
    t.round_to_precision();
    return t;
}

} // namespace

LandmarkNets LandmarkNets::create(Params& params, int k_prime, int state_dim, int beta_hidden,
                                  int sigma_hidden, RngStream rng, Precision prec) {
    LandmarkNets n;
    n.k_prime = k_prime;
    n.state_dim = state_dim;
    n.beta_w1 = params.add("lm.beta_w1", gauss_tensor({beta_hidden, 1}, 1.0, rng, prec));
    n.beta_b1 = params.add("lm.beta_b1", Tensor::zeros({beta_hidden}, prec));
    n.beta_w2 = params.add("lm.beta_w2", gauss_tensor({1, beta_hidden}, 0.5, rng, prec));
    // Start with small corrections: beta ~ sigmoid(-2).
    n.beta_b2 = params.add("lm.beta_b2", Tensor::full({1}, -2.0, prec));
    n.sig_w1 = params.add("lm.sig_w1",
                          gauss_tensor({sigma_hidden, n.sigma_in_dim()}, 0.3, rng, prec));
    n.sig_b1 = params.add("lm.sig_b1", Tensor::zeros({sigma_hidden}, prec));
    n.sig_w2 = params.add("lm.sig_w2", Tensor::zeros({state_dim, sigma_hidden}, prec));
    n.sig_b2 = params.add("lm.sig_b2", Tensor::zeros({state_dim}, prec));
    return n;
}

Model build_model(const RunConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    m.cfg.env.apply_defaults();
    Precision prec = cfg.precision_tag();
    RngStream rng = RngStream::root(cfg.seed).split("init");

    int action_count = 0;
    switch (cfg.env.kind) {
        case EnvKind::image_nav: action_count = 5; break;
        case EnvKind::panorama: action_count = 3; break;
        case EnvKind::momentum:
            action_count = static_cast<int>(m.cfg.env.m_true[0].size());
            break;
    }
    m.trans = TransitionParams::create(m.params, cfg.variant, action_count, cfg.r,
                                       cfg.gate_hidden, rng.split("trans"), prec,
                                       cfg.gate_per_dim);
    m.vae = VaeNets::create(m.params, cfg.frame_shape(), cfg.z_dim, cfg.enc_hidden, cfg.conv_vae,
                            rng.split("vae"), prec, cfg.z_logvar_min);
    m.lm = LandmarkNets::create(m.params, cfg.k_prime, cfg.state_dim(), cfg.beta_hidden,
                                cfg.sigma_hidden, rng.split("lm"), prec);
    m.metric = cfg.distance_metric();
    return m;
}

void zero_landmark_correction(Model& m) {
    m.params.group(m.lm.beta_w2).value.fill(0.0);
    m.params.group(m.lm.beta_b2).value.fill(-50.0);
    m.params.group(m.lm.sig_w2).value.fill(0.0);
    m.params.group(m.lm.sig_b2).value.fill(0.0);
}

// ---------------------------------------------------------------------------
// landmark posterior
// ---------------------------------------------------------------------------

namespace {

struct LandmarkPosterior {
    StatsNodes stats;
};

Val beta_net_nodes(Graph& g, const Model& m, Val delta_scalar) {
    Val h = g.tanh(g.add(g.matvec(g.param(m.params, m.lm.beta_w1), delta_scalar),
                         g.param(m.params, m.lm.beta_b1)));
    return g.sigmoid(g.add(g.matvec(g.param(m.params, m.lm.beta_w2), h),
                           g.param(m.params, m.lm.beta_b2)));
}

// q(s_t | s_{t-1}, a_t, z_t, m): prior mean moved toward reverse-retrieved
// states, with a learned additive log-variance correction. The nets consume
// squared z-space distances: a monotone reparameterization of the retrieval
// distance that stays differentiable at exact frame matches (distance 0).
LandmarkPosterior landmark_posterior_nodes(Graph& g, const Model& m, Val prior_mean,
                                           Val prior_logvar, Val z_query,
                                           const SpatialMemory& memory, QueryMode mode) {
    const int kp = m.lm.k_prime;
    const int sd = m.lm.state_dim;

    std::vector<Retrieved> hits;
    if (!memory.empty())
        hits = memory.reverse_query(g.value(z_query).to_vector(), kp, mode);

    std::vector<Val> deltas;   // k_prime squared distances, padded
    std::vector<Val> sig_in;   // deltas, key logvars, prior logvar
    Val mu_q = prior_mean;
    for (int k = 0; k < kp; ++k) {
        if (k < static_cast<int>(hits.size())) {
            Val dz = g.sub(z_query, g.constant(hits[static_cast<size_t>(k)].entry->value.mean));
            Val delta_sq = g.sum(g.square(dz));
            deltas.push_back(delta_sq);
            Val beta = beta_net_nodes(g, m, delta_sq);
            Val mu_k = g.constant(hits[static_cast<size_t>(k)].entry->key.mean);
            mu_q = g.add(mu_q, g.mul(g.broadcast(beta, sd), g.sub(mu_k, prior_mean)));
        } else {
            deltas.push_back(g.scalar(kDeltaPad));
        }
    }
    for (Val d : deltas) sig_in.push_back(d);
    for (int k = 0; k < kp; ++k) {
        if (k < static_cast<int>(hits.size()))
            sig_in.push_back(g.constant(hits[static_cast<size_t>(k)].entry->key.logvar));
        else
            sig_in.push_back(prior_logvar);
    }
    sig_in.push_back(prior_logvar);

    Val h = g.tanh(g.add(g.matvec(g.param(m.params, m.lm.sig_w1), g.concat(sig_in)),
                         g.param(m.params, m.lm.sig_b1)));
    Val correction = g.add(g.matvec(g.param(m.params, m.lm.sig_w2), h),
                           g.param(m.params, m.lm.sig_b2));
    Val logvar_q = g.clamp(g.add(prior_logvar, correction), kLogVarClampLo, kLogVarClampHi);
    return {StatsNodes{mu_q, logvar_q}};
}

} // namespace

// ---------------------------------------------------------------------------
// past encoder
// ---------------------------------------------------------------------------

PastEncodeResult past_encode(const Model& m, const Episode& ep) {
    if (ep.tau < 1 || ep.steps() < ep.tau)
        throw std::invalid_argument("past_encode: bad episode split");
    const int sd = m.cfg.state_dim();
    const double logvar = m.trans.logvar();

    PastEncodeResult pe;
    std::vector<double> s(static_cast<size_t>(sd), 0.0);
    std::vector<double> d(static_cast<size_t>(sd), 0.0);

    for (int t = 0; t < ep.tau; ++t) {
        TransStep step = transition_mean(m.params, m.trans, s, d, ep.actions[static_cast<size_t>(t)]);
        GaussianStats value = encode(m.params, m.vae, ep.frames[static_cast<size_t>(t)]);
        GaussianStats key;

        if (!m.cfg.landmark) {
            key = GaussianStats::isotropic(step.mean, logvar);
        } else {
            // Landmark-corrected filtering against the memory built so far.
            Graph g(m.cfg.precision_tag());
            Val prior_mean = g.constant(step.mean);
            Val prior_logvar = g.constant(std::vector<double>(static_cast<size_t>(sd), logvar));
            Val zq = g.constant(value.mean);
            LandmarkPosterior post = landmark_posterior_nodes(g, m, prior_mean, prior_logvar, zq,
                                                              pe.memory, QueryMode::exact);
            key = GaussianStats{g.value(post.stats.mean).to_vector(),
                                g.value(post.stats.logvar).to_vector()};
        }

        pe.memory.insert(key, value, t + 1);
        pe.states.push_back(key.mean);
        s = key.mean;
        d = step.d;
    }
    pe.memory.freeze(m.metric);
    pe.s_tau = GaussianStats::isotropic(s, logvar);
    pe.d_tau = d;
    return pe;
}

// ---------------------------------------------------------------------------
// ELBO
// ---------------------------------------------------------------------------

ElboNoise draw_elbo_noise(const Model& m, int pred_len, RngStream rng) {
    ElboNoise n;
    RngStream s_rng = rng.split("state");
    RngStream z_rng = rng.split("z");
    for (int t = 0; t < pred_len; ++t) {
        std::vector<double> se(static_cast<size_t>(m.cfg.state_dim()));
        for (auto& v : se) v = s_rng.normal();
        std::vector<double> ze(static_cast<size_t>(m.cfg.z_dim));
        for (auto& v : ze) v = z_rng.normal();
        n.state_eps.push_back(std::move(se));
        n.z_eps.push_back(std::move(ze));
    }
    return n;
}

ElboResult build_elbo(Graph& g, const Model& m, const Episode& ep, const PastEncodeResult& pe,
                      const ElboNoise& noise, int pred_len, double kl_weight) {
    const int tau = ep.tau;
    int avail = ep.steps() - tau;
    if (pred_len < 0) pred_len = avail;
    if (pred_len > avail) throw std::invalid_argument("elbo: prediction window exceeds episode");
    if (static_cast<int>(noise.state_eps.size()) < pred_len)
        throw std::invalid_argument("elbo: not enough noise draws");
    if (!pe.memory.frozen()) throw std::invalid_argument("elbo: memory must be frozen");
    if (static_cast<int>(pe.memory.size()) != tau)
        throw std::invalid_argument("elbo: memory does not match the episode split");

    ElboResult out;
    if (pred_len == 0) {
        out.objective = g.scalar(0.0);
        out.value = 0.0;
        return out;
    }

    const int sd = m.cfg.state_dim();
    const double logvar = m.trans.logvar();
    Val s_node = g.constant(pe.s_tau.mean);
    Val d_node = g.constant(pe.d_tau);
    Val prior_logvar = g.constant(std::vector<double>(static_cast<size_t>(sd), logvar));

    std::vector<Val> terms;
    for (int j = 0; j < pred_len; ++j) {
        int t = tau + j;
        int a = ep.actions[static_cast<size_t>(t)];
        const auto& frame = ep.frames[static_cast<size_t>(t)];

        TransStepNodes step = transition_nodes(g, m.params, m.trans, s_node, d_node, a);
        StatsNodes q = encode_nodes(g, m.params, m.vae, frame);

        Val kl_s_node{};
        Val kl_s_warm{};
        if (!m.cfg.landmark) {
            // Ancestral sample from the marginal state path.
            std::vector<double> eps = noise.state_eps[static_cast<size_t>(j)];
            for (auto& v : eps) v *= m.trans.r;
            s_node = g.add(step.mean, g.constant(eps));
        } else {
            LandmarkPosterior post = landmark_posterior_nodes(g, m, step.mean, prior_logvar,
                                                              q.mean, pe.memory, QueryMode::tree);
            s_node = g.gaussian_sample(post.stats.mean, post.stats.logvar,
                                       noise.state_eps[static_cast<size_t>(j)]);
            kl_s_node = gaussian_kl_nodes(g, post.stats, StatsNodes{step.mean, prior_logvar});
            if (kl_weight != 1.0) kl_s_warm = g.scale(kl_s_node, kl_weight);
        }

        MixturePriorNodes prior = mixture_prior_nodes(g, s_node, pe.memory, m.cfg.k, m.cfg.delta,
                                                      m.metric, QueryMode::tree);
        Val z = g.gaussian_sample(q.mean, q.logvar, noise.z_eps[static_cast<size_t>(j)]);
        Val logq = gaussian_log_density_nodes(g, z, q.mean, q.logvar);
        Val logp = mixture_log_density_nodes(g, prior, z);
        Val kl_full = g.sub(logq, logp);
        Val kl_train = m.cfg.free_bits > 0.0 ? g.clamp(kl_full, m.cfg.free_bits, 1e300)
                                             : kl_full;
        Val kl_term = kl_weight == 1.0 ? kl_train : g.scale(kl_train, kl_weight);
        Val logits = decode_logits_nodes(g, m.params, m.vae, z);
        std::vector<double> targets(frame.begin(), frame.end());
        Val recon = m.cfg.decoder == "gaussian"
                        ? gaussian_frame_ll_nodes(g, logits, targets, m.cfg.obs_noise)
                        : bernoulli_log_likelihood_nodes(g, logits, targets);

        Val term = g.sub(recon, kl_term);
        if (m.cfg.landmark) term = g.sub(term, kl_weight == 1.0 ? kl_s_node : kl_s_warm);
        terms.push_back(term);

        out.recon.push_back(g.scalar_value(recon));
        out.kl_z.push_back(g.scalar_value(kl_full));
        if (m.cfg.landmark) out.kl_s.push_back(g.scalar_value(kl_s_node));
        out.disp_nodes.push_back(step.d);
        d_node = step.d;
    }

    Val obj = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) obj = g.add(obj, terms[i]);
    out.objective = obj;
    if (kl_weight == 1.0 && m.cfg.free_bits == 0.0) {
        out.value = g.scalar_value(obj);
    } else {
        // The objective node carries curriculum weights; report the plain ELBO.
        out.value = 0.0;
        for (size_t j = 0; j < out.recon.size(); ++j) {
            out.value += out.recon[j] - out.kl_z[j];
            if (m.cfg.landmark) out.value -= out.kl_s[j];
        }
    }
    return out;
}

Val displacement_loss_nodes(Graph& g, const std::vector<Val>& d_nodes,
                            const std::vector<std::vector<float>>& true_disp, int tau,
                            double weight) {
    if (d_nodes.empty()) throw std::invalid_argument("displacement loss: no steps");
    if (static_cast<size_t>(tau) + d_nodes.size() > true_disp.size())
        throw std::invalid_argument("displacement loss: length mismatch");
    std::vector<Val> sq;
    for (size_t j = 0; j < d_nodes.size(); ++j) {
        const auto& td = true_disp[static_cast<size_t>(tau) + j];
        Val diff = g.sub(d_nodes[j], g.constant(std::vector<double>(td.begin(), td.end())));
        sq.push_back(g.square(diff));
    }
    return g.scale(g.mean(g.concat(sq)), weight);
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

PredictResult predict(const Model& m, const PastEncodeResult& pe,
                      const std::vector<uint8_t>& actions, RngStream* rng) {
    if (actions.empty()) throw std::invalid_argument("predict: empty action sequence");
    if (!pe.memory.frozen()) throw std::invalid_argument("predict: memory must be frozen");

    PredictResult out;
    std::vector<double> s = pe.s_tau.mean;
    std::vector<double> d = pe.d_tau;
    for (uint8_t a : actions) {
        TransStep step = transition_mean(m.params, m.trans, s, d, a);
        s = step.mean;
        d = step.d;
        MixturePrior prior =
            mixture_prior(s, pe.memory, m.cfg.k, m.cfg.delta, m.metric, QueryMode::tree);
        std::vector<double> z = generate_z(prior, m.cfg.sample_generation, rng);
        out.frames.push_back(decode_probs(m.params, m.vae, z));
        out.states.push_back(s);
        out.disps.push_back(d);
        out.zs.push_back(std::move(z));
    }
    return out;
}

double episode_objective(const Model& m, const Episode& ep, RngStream noise_rng, int pred_len) {
    PastEncodeResult pe = past_encode(m, ep);
    int n = pred_len < 0 ? ep.steps() - ep.tau : pred_len;
    ElboNoise noise = draw_elbo_noise(m, n, noise_rng);
    Graph g(m.cfg.precision_tag());
    ElboResult r = build_elbo(g, m, ep, pe, noise, pred_len);
    return r.value;
}

} // namespace gtmsm
