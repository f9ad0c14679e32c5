#include "gtmsm/vae.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtmsm {

namespace {

Tensor xavier(std::vector<int> shape, RngStream& rng, Precision prec) {
    Tensor t(shape, prec);
    double fan_in = static_cast<double>(shape.size() == 2 ? shape[1] : shape[0]);
    double stddev = 1.0 / std::sqrt(std::max(1.0, fan_in));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * stddev;
    t.round_to_precision();
    return t;
}

Tensor conv_init(int cout, int cin, int k, RngStream& rng, Precision prec) {
    Tensor t({cout, cin * k * k}, prec);
    double stddev = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * stddev;
    t.round_to_precision();
    return t;
}

std::vector<double> widen(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

Precision params_precision(const Params& params) {
    return params.size() ? params.group(0).value.precision() : Precision::f64;
}

} // namespace

VaeNets VaeNets::create(Params& params, std::array<int, 3> frame_shape, int z_dim, int hidden,
                        bool conv, RngStream rng, Precision prec, double logvar_min) {
    VaeNets n;
    n.conv = conv;
    n.z_dim = z_dim;
    n.frame_shape = frame_shape;
    n.logvar_min = logvar_min;
    if (z_dim <= 0 || hidden <= 0) throw std::invalid_argument("vae: bad dimensions");
    if (logvar_min < kLogVarClampLo || logvar_min >= kLogVarClampHi)
        throw std::invalid_argument("vae: logvar_min outside the clamp window");

    if (!conv) {
        int fd = n.frame_dim();
        n.enc_w1 = params.add("vae.enc_w1", xavier({hidden, fd}, rng, prec));
        n.enc_b1 = params.add("vae.enc_b1", Tensor::zeros({hidden}, prec));
        n.enc_wm = params.add("vae.enc_wm", xavier({z_dim, hidden}, rng, prec));
        n.enc_bm = params.add("vae.enc_bm", Tensor::zeros({z_dim}, prec));
        n.enc_wv = params.add("vae.enc_wv", xavier({z_dim, hidden}, rng, prec));
        // Encodings start sharp; a unit-variance start drowns the decoder
        // input in sampling noise and stalls reconstruction.
        n.enc_bv = params.add("vae.enc_bv", Tensor::full({z_dim}, -2.0, prec));
        n.dec_w1 = params.add("vae.dec_w1", xavier({hidden, z_dim}, rng, prec));
        n.dec_b1 = params.add("vae.dec_b1", Tensor::zeros({hidden}, prec));
        n.dec_w2 = params.add("vae.dec_w2", xavier({fd, hidden}, rng, prec));
        n.dec_b2 = params.add("vae.dec_b2", Tensor::zeros({fd}, prec));
        return n;
    }

    auto [c, h, w] = frame_shape;
    if (h % 8 != 0 || w % 8 != 0)
        throw std::invalid_argument("vae: conv mode needs frame sides divisible by 8");
    int flat = 32 * (h / 8) * (w / 8);
    n.cw1 = params.add("vae.cw1", conv_init(8, c, 3, rng, prec));
    n.cb1 = params.add("vae.cb1", Tensor::zeros({8}, prec));
    n.cw2 = params.add("vae.cw2", conv_init(16, 8, 3, rng, prec));
    n.cb2 = params.add("vae.cb2", Tensor::zeros({16}, prec));
    n.cw3 = params.add("vae.cw3", conv_init(32, 16, 3, rng, prec));
    n.cb3 = params.add("vae.cb3", Tensor::zeros({32}, prec));
    n.enc_wm = params.add("vae.enc_wm", xavier({z_dim, flat}, rng, prec));
    n.enc_bm = params.add("vae.enc_bm", Tensor::zeros({z_dim}, prec));
    n.enc_wv = params.add("vae.enc_wv", xavier({z_dim, flat}, rng, prec));
    n.enc_bv = params.add("vae.enc_bv", Tensor::full({z_dim}, -2.0, prec));

    n.dw1 = params.add("vae.dw1", xavier({flat, z_dim}, rng, prec));
    n.db1 = params.add("vae.db1", Tensor::zeros({flat}, prec));
    n.dcw1 = params.add("vae.dcw1", conv_init(16, 32, 3, rng, prec));
    n.dcb1 = params.add("vae.dcb1", Tensor::zeros({16}, prec));
    n.dcw2 = params.add("vae.dcw2", conv_init(8, 16, 3, rng, prec));
    n.dcb2 = params.add("vae.dcb2", Tensor::zeros({8}, prec));
    n.dcw3 = params.add("vae.dcw3", conv_init(c, 8, 3, rng, prec));
    n.dcb3 = params.add("vae.dcb3", Tensor::zeros({c}, prec));
    return n;
}

namespace {

Val encoder_features(Graph& g, const Params& params, const VaeNets& nets, Val x) {
    if (!nets.conv)
        return g.tanh(g.add(g.matvec(g.param(params, nets.enc_w1), x),
                            g.param(params, nets.enc_b1)));
    auto [c, h, w] = nets.frame_shape;
    ConvDims d1{c, h, w, 8, 3, 2, 1};
    Val h1 = g.tanh(g.conv2d(x, g.param(params, nets.cw1), g.param(params, nets.cb1), d1));
    ConvDims d2{8, h / 2, w / 2, 16, 3, 2, 1};
    Val h2 = g.tanh(g.conv2d(h1, g.param(params, nets.cw2), g.param(params, nets.cb2), d2));
    ConvDims d3{16, h / 4, w / 4, 32, 3, 2, 1};
    return g.tanh(g.conv2d(h2, g.param(params, nets.cw3), g.param(params, nets.cb3), d3));
}

Val decoder_logits(Graph& g, const Params& params, const VaeNets& nets, Val z) {
    if (!nets.conv) {
        Val h = g.tanh(g.add(g.matvec(g.param(params, nets.dec_w1), z),
                             g.param(params, nets.dec_b1)));
        return g.add(g.matvec(g.param(params, nets.dec_w2), h), g.param(params, nets.dec_b2));
    }
    auto [c, h, w] = nets.frame_shape;
    int fh = h / 8, fw = w / 8;
    Val flat = g.tanh(g.add(g.matvec(g.param(params, nets.dw1), z), g.param(params, nets.db1)));
    Val u1 = g.upsample2(flat, 32, fh, fw);
    ConvDims c1{32, fh * 2, fw * 2, 16, 3, 1, 1};
    Val h1 = g.tanh(g.conv2d(u1, g.param(params, nets.dcw1), g.param(params, nets.dcb1), c1));
    Val u2 = g.upsample2(h1, 16, fh * 2, fw * 2);
    ConvDims c2{16, fh * 4, fw * 4, 8, 3, 1, 1};
    Val h2 = g.tanh(g.conv2d(u2, g.param(params, nets.dcw2), g.param(params, nets.dcb2), c2));
    Val u3 = g.upsample2(h2, 8, fh * 4, fw * 4);
    ConvDims c3{8, h, w, c, 3, 1, 1};
    return g.conv2d(u3, g.param(params, nets.dcw3), g.param(params, nets.dcb3), c3);
}

} // namespace

StatsNodes encode_nodes(Graph& g, const Params& params, const VaeNets& nets,
                        const std::vector<float>& frame) {
    if (frame.size() != static_cast<size_t>(nets.frame_dim()))
        throw std::invalid_argument("encode: frame size " + std::to_string(frame.size()) +
                                    " != " + std::to_string(nets.frame_dim()));
    Val x = g.constant(widen(frame));
    Val feat = encoder_features(g, params, nets, x);
    Val mean = g.add(g.matvec(g.param(params, nets.enc_wm), feat), g.param(params, nets.enc_bm));
    Val logvar = g.clamp(g.add(g.matvec(g.param(params, nets.enc_wv), feat),
                               g.param(params, nets.enc_bv)),
                         nets.logvar_min, kLogVarClampHi);
    return {mean, logvar};
}

Val decode_logits_nodes(Graph& g, const Params& params, const VaeNets& nets, Val z) {
    if (g.value(z).size() != nets.z_dim)
        throw std::invalid_argument("decode: z dimension mismatch");
    return decoder_logits(g, params, nets, z);
}

GaussianStats encode(const Params& params, const VaeNets& nets, const std::vector<float>& frame) {
    Graph g(params_precision(params));
    StatsNodes s = encode_nodes(g, params, nets, frame);
    return GaussianStats{g.value(s.mean).to_vector(), g.value(s.logvar).to_vector()};
}

std::vector<double> decode_logits(const Params& params, const VaeNets& nets,
                                  const std::vector<double>& z) {
    Graph g(params_precision(params));
    Val out = decode_logits_nodes(g, params, nets, g.constant(z));
    return g.value(out).to_vector();
}

std::vector<double> decode_probs(const Params& params, const VaeNets& nets,
                                 const std::vector<double>& z) {
    Graph g(params_precision(params));
    Val out = g.sigmoid(decode_logits_nodes(g, params, nets, g.constant(z)));
    return g.value(out).to_vector();
}

Val gaussian_frame_ll_nodes(Graph& g, Val logits, const std::vector<double>& targets,
                            double obs_noise) {
    if (obs_noise <= 0.0) throw std::invalid_argument("frame ll: obs_noise must be positive");
    constexpr double kLog2Pi = 1.8378770664093454836;
    Val mu = g.sigmoid(logits);
    Val se = g.sum(g.square(g.sub(g.constant(targets), mu)));
    double n = static_cast<double>(targets.size());
    double log_norm = -0.5 * n * (kLog2Pi + 2.0 * std::log(obs_noise));
    return g.offset(g.scale(se, -0.5 / (obs_noise * obs_noise)), log_norm);
}

// ---------------------------------------------------------------------------
// mixture prior
// ---------------------------------------------------------------------------

MixturePrior mixture_prior(const std::vector<double>& s, const SpatialMemory& memory, int k,
                           double delta, const DistanceMetric& metric, QueryMode mode) {
    if (delta <= 0.0) throw std::invalid_argument("mixture: delta must be positive");
    std::vector<Retrieved> nb = memory.query(s, k, metric, mode);
    MixturePrior prior;
    double total = 0.0;
    for (const auto& r : nb) {
        double w = 1.0 / (r.distance * r.distance + delta);
        prior.weights.push_back(w);
        prior.components.push_back(r.entry->value);
        prior.distances.push_back(r.distance);
        prior.entry_indices.push_back(r.entry_index);
        total += w;
    }
    for (auto& w : prior.weights) w /= total;
    return prior;
}

double mixture_log_density(const MixturePrior& prior, const std::vector<double>& z) {
    if (prior.weights.empty()) throw std::invalid_argument("mixture: empty prior");
    double best = -1e300;
    std::vector<double> terms;
    terms.reserve(prior.weights.size());
    for (size_t i = 0; i < prior.weights.size(); ++i) {
        double t = std::log(prior.weights[i]) + gaussian_log_density(z, prior.components[i]);
        terms.push_back(t);
        best = std::max(best, t);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
}

double kl_mc(const GaussianStats& q, const MixturePrior& prior, const std::vector<double>& noise) {
    if (noise.size() != q.mean.size()) throw std::invalid_argument("kl_mc: noise dim mismatch");
    std::vector<double> z(q.mean);
    for (size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * q.logvar[i]) * noise[i];
    return gaussian_log_density(z, q) - mixture_log_density(prior, z);
}

namespace {

Val embed_nodes(Graph& g, Val s, const DistanceMetric& metric) {
    switch (metric.kind) {
        case MetricKind::euclidean:
            return s;
        case MetricKind::angular:
        case MetricKind::angular_linear: {
            Val theta = g.index(s, 2);
            Val e = g.concat({g.index(s, 0), g.index(s, 1), g.cos(theta), g.sin(theta)});
            if (metric.kind == MetricKind::angular) return e;
            int rows = static_cast<int>(metric.embed_matrix.size());
            std::vector<double> flat;
            for (const auto& row : metric.embed_matrix)
                flat.insert(flat.end(), row.begin(), row.end());
            Tensor m({rows, static_cast<int>(metric.embed_matrix[0].size())}, flat);
            return g.matvec(g.constant(m), e);
        }
        case MetricKind::jeffreys:
            throw std::invalid_argument("mixture: jeffreys metric is not usable for the prior");
    }
    throw std::logic_error("mixture: unknown metric kind");
}

} // namespace

MixturePriorNodes mixture_prior_nodes(Graph& g, Val s, const SpatialMemory& memory, int k,
                                      double delta, const DistanceMetric& metric,
                                      QueryMode mode) {
    if (delta <= 0.0) throw std::invalid_argument("mixture: delta must be positive");
    std::vector<double> s_val = g.value(s).to_vector();
    std::vector<Retrieved> nb = memory.query(s_val, k, metric, mode);

    MixturePriorNodes out;
    Val es = embed_nodes(g, s, metric);
    std::vector<Val> unnorm;
    double total = 0.0;
    for (const auto& r : nb) {
        Val ek = g.constant(metric.embed_point(r.entry->key.mean));
        Val d2 = g.sum(g.square(g.sub(es, ek)));
        Val w = g.reciprocal(g.offset(d2, delta));
        unnorm.push_back(w);

        double wc = 1.0 / (r.distance * r.distance + delta);
        out.concrete.weights.push_back(wc);
        out.concrete.components.push_back(r.entry->value);
        out.concrete.distances.push_back(r.distance);
        out.concrete.entry_indices.push_back(r.entry_index);
        total += wc;
    }
    for (auto& w : out.concrete.weights) w /= total;

    Val log_total = g.log(g.sum(g.concat(unnorm)));
    for (Val w : unnorm) out.log_weights.push_back(g.sub(g.log(w), log_total));
    return out;
}

Val mixture_log_density_nodes(Graph& g, const MixturePriorNodes& prior, Val z) {
    if (prior.log_weights.empty()) throw std::invalid_argument("mixture: empty prior");
    std::vector<Val> terms;
    for (size_t i = 0; i < prior.log_weights.size(); ++i) {
        Val ln = gaussian_log_density_nodes(g, z, prior.concrete.components[i]);
        terms.push_back(g.add(prior.log_weights[i], ln));
    }
    return g.logsumexp(g.concat(terms));
}

KlMcNodes kl_mc_nodes(Graph& g, StatsNodes q, const MixturePriorNodes& prior,
                      const std::vector<double>& noise) {
    Val z = g.gaussian_sample(q.mean, q.logvar, noise);
    Val logq = gaussian_log_density_nodes(g, z, q.mean, q.logvar);
    Val logp = mixture_log_density_nodes(g, prior, z);
    return {g.sub(logq, logp), z};
}

std::vector<double> generate_z(const MixturePrior& prior, bool sample, RngStream* rng) {
    if (prior.weights.empty()) throw std::invalid_argument("generate_z: empty prior");
    if (!sample) {
        size_t best = 0;
        for (size_t i = 1; i < prior.weights.size(); ++i)
            if (prior.weights[i] > prior.weights[best]) best = i;
        return prior.components[best].mean;
    }
    if (rng == nullptr) throw std::invalid_argument("generate_z: sampling needs an rng stream");
    double u = rng->uniform();
    size_t pick = prior.weights.size() - 1;
    double acc = 0.0;
    for (size_t i = 0; i < prior.weights.size(); ++i) {
        acc += prior.weights[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    const GaussianStats& c = prior.components[pick];
    std::vector<double> z(c.mean);
    for (size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * c.logvar[i]) * rng->normal();
    return z;
}

} // namespace gtmsm
