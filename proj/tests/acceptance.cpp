// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line; the exit
// code is the number of failed criteria in the selected set.
//
//   acceptance <n>    run criterion n (1..8; 5-7 also check criterion 9 on
//                     their own training logs)
//   acceptance all    run everything
//
// Training runs cache their checkpoints under the working directory, so a
// re-run scores the same model instead of retraining.

#include "gtmsm/checkpoint.hpp"
#include "gtmsm/evaluate.hpp"
#include "gtmsm/gradcheck.hpp"
#include "gtmsm/model.hpp"
#include "gtmsm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gtmsm;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << detail << "\n";
    std::cout.flush();
    if (!pass) ++g_failures;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const clock::time_point t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

void ensure_dataset(const std::string& dir, const EnvConfig& env, int n, int tau, int pred,
                    uint64_t seed) {
    if (fs::exists(fs::path(dir) / "manifest.json")) return;
    Dataset::generate(env, dir, n, tau, pred, seed);
}

struct TrainedModel {
    Model model;
    bool fresh = false; // trained in this invocation (budget enforced)
    double train_seconds = 0.0;
};

TrainedModel train_cached(const RunConfig& cfg, const std::string& data_dir,
                          const std::string& run_dir) {
    TrainedModel out{build_model(cfg), false, 0.0};
    std::string final_ckpt = (fs::path(run_dir) / ("ckpt_" + std::to_string(cfg.updates))).string();
    if (fs::exists(fs::path(final_ckpt) / "manifest.json")) {
        AdamState adam = AdamState::init(out.model.params);
        load_checkpoint_into(final_ckpt, out.model, adam);
        return out;
    }
    Dataset d = Dataset::open(data_dir);
    TrainOptions opt;
    opt.out_dir = run_dir;
    for (int64_t u = cfg.updates - cfg.ckpt_every; u > 0; u -= cfg.ckpt_every) {
        std::string c = (fs::path(run_dir) / ("ckpt_" + std::to_string(u))).string();
        if (fs::exists(fs::path(c) / "manifest.json")) {
            opt.resume_ckpt = c;
            break;
        }
    }
    double t0 = now_seconds();
    TrainResult r = train(out.model, d, opt);
    out.train_seconds = now_seconds() - t0;
    out.fresh = true;
    if (r.aborted_nan) throw std::runtime_error("training aborted on a non-finite objective");
    return out;
}

// Criterion 9: smoothed objective (window 500) may not drop by more than 1%
// of the window-start value inside any 5000-update span after a 1000-update
// warmup; every logged value must be finite.
bool training_health(const std::string& metrics_path, int warmup, std::string* detail) {
    std::ifstream is(metrics_path);
    if (!is) {
        *detail = "missing metrics log";
        return false;
    }
    std::vector<double> obj;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long long u;
        double o;
        ls >> u >> o;
        if (!std::isfinite(o)) {
            *detail = "non-finite objective at update " + std::to_string(u);
            return false;
        }
        obj.push_back(o);
    }
    const int window = 500, span = 5000;
    if (static_cast<int>(obj.size()) < warmup + window + 200) {
        *detail = "log too short (" + std::to_string(obj.size()) + " updates)";
        return false;
    }
    std::vector<double> smooth(obj.size(), 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < obj.size(); ++i) {
        acc += obj[i];
        if (i >= static_cast<size_t>(window)) acc -= obj[i - static_cast<size_t>(window)];
        smooth[i] = acc / std::min<double>(static_cast<double>(window), static_cast<double>(i + 1));
    }
    double worst_drop = 0.0;
    for (size_t a = static_cast<size_t>(warmup + window); a < obj.size(); a += 100) {
        for (size_t b = a + 100; b < std::min(obj.size(), a + static_cast<size_t>(span) + 1);
             b += 100) {
            double allowed = smooth[a] - 0.01 * std::abs(smooth[a]);
            if (smooth[b] < allowed)
                worst_drop = std::max(worst_drop, (allowed - smooth[b]) / std::abs(smooth[a]));
        }
    }
    *detail = "worst windowed drop beyond tolerance: " + fmt(worst_drop * 100, 3) + "%";
    return worst_drop == 0.0;
}

double frame_mse(const std::vector<double>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double frame_mse_f(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// criterion 1: gradient integrity
// ---------------------------------------------------------------------------

RunConfig toy_cfg(TransitionVariant variant, bool landmark) {
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
    c.pred_train = 3; // T = 6
    c.pred_test = 3;
    c.k = 2;
    c.k_prime = 2;
    c.z_dim = 4;
    c.enc_hidden = 8;
    c.gate_hidden = 4;
    c.beta_hidden = 4;
    c.sigma_hidden = 8;
    c.r = 1e-2;
    c.precision = "f64";
    c.landmark = landmark;
    c.seed = 21;
    return c;
}

void criterion_1() {
    double t0 = now_seconds();
    double worst = 0.0;
    std::string worst_combo;
    bool all_pass = true;

    for (TransitionVariant v : {TransitionVariant::linear, TransitionVariant::walled,
                                TransitionVariant::rotational, TransitionVariant::momentum}) {
        for (bool landmark : {false, true}) {
            RunConfig cfg = toy_cfg(v, landmark);
            Model m = build_model(cfg);

            fs::path tmp = fs::path("acc_c1_data") /
                           (std::string(transition_variant_name(v)) + (landmark ? "_lm" : ""));
            ensure_dataset(tmp.string(), cfg.env, 1, cfg.tau, cfg.pred_train, cfg.seed);
            Episode ep = Dataset::open(tmp.string()).episode(0);
            ep.tau = cfg.tau;

            PastEncodeResult pe = past_encode(m, ep);
            ElboNoise noise = draw_elbo_noise(m, cfg.pred_train, RngStream::root(33));
            auto loss_fn = [&](bool with_grad) {
                Graph g(Precision::f64);
                ElboResult r = build_elbo(g, m, ep, pe, noise);
                Val total = r.objective;
                if (cfg.disp_loss)
                    total = g.sub(total, displacement_loss_nodes(g, r.disp_nodes,
                                                                 ep.displacements, ep.tau,
                                                                 cfg.disp_weight));
                Val loss = g.scale(total, -1.0);
                if (with_grad) {
                    GradBuffer gb(m.params);
                    g.backward(loss, gb);
                    gb.add_scaled_to(m.params, 1.0);
                }
                return g.scalar_value(loss);
            };
            GradCheckReport rep = grad_check(loss_fn, m.params, 1e-5, 1e-4, 0);
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_combo = std::string(transition_variant_name(v)) +
                              (landmark ? "+landmark" : "+plain");
            }
            all_pass = all_pass && rep.pass;
        }
    }
    double dt = now_seconds() - t0;
    report("criterion 1 (gradient integrity)", all_pass && dt < 120.0,
           "max rel err " + fmt(worst, 3) + " (worst: " + worst_combo + ", tol 1e-4), " +
               fmt(dt, 3) + "s of 120s budget, all variants x {plain, landmark}");
}

// ---------------------------------------------------------------------------
// criterion 2: memory oracle equivalence
// ---------------------------------------------------------------------------

std::vector<std::pair<double, int>> scan_oracle(const std::vector<std::vector<double>>& pts,
                                                const std::vector<double>& q, int k) {
    std::vector<std::pair<double, int>> all;
    for (size_t i = 0; i < pts.size(); ++i) {
        double d2 = 0.0;
        for (size_t j = 0; j < q.size(); ++j) {
            double d = q[j] - pts[i][j];
            d2 += d * d;
        }
        all.emplace_back(d2, static_cast<int>(i));
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    all.resize(std::min(all.size(), static_cast<size_t>(k)));
    return all;
}

void criterion_2() {
    double t0 = now_seconds();
    RngStream rng = RngStream::root(20240);
    const int instances = 10000;
    int bad = 0;
    const int kk[4] = {1, 3, 4, 5};

    for (int inst = 0; inst < instances && bad == 0; ++inst) {
        bool reverse = inst % 2 == 1;
        bool angular = inst % 4 >= 2;
        int n = 1 + rng.uniform_int(200);
        int k = kk[rng.uniform_int(4)];
        double scale = 0.25 * (1 + rng.uniform_int(4));

        DistanceMetric metric;
        metric.kind = angular ? MetricKind::angular : MetricKind::euclidean;
        int sdim = angular ? 3 : 2;

        SpatialMemory mem;
        std::vector<std::vector<double>> keys, values;
        for (int i = 0; i < n; ++i) {
            std::vector<double> key(static_cast<size_t>(sdim));
            for (auto& v : key) v = scale * rng.uniform_int(5); // lattice: exact ties
            std::vector<double> val(8);
            for (auto& v : val) v = 0.5 * rng.uniform_int(3);
            keys.push_back(metric.embed_point(key));
            values.push_back(val);
            mem.insert(GaussianStats{key, std::vector<double>(static_cast<size_t>(sdim), -2.0)},
                       GaussianStats{val, std::vector<double>(8, -1.0)}, i + 1);
        }
        mem.freeze(metric);

        if (!reverse) {
            std::vector<double> q(static_cast<size_t>(sdim));
            for (auto& v : q) v = scale * rng.uniform_int(5) + (rng.uniform() - 0.5) * 0.01;
            auto oracle = scan_oracle(keys, metric.embed_point(q), k);
            auto exact = mem.query(q, k, metric, QueryMode::exact);
            auto tree = mem.query(q, k, metric, QueryMode::tree);
            if (exact.size() != oracle.size() || tree.size() != oracle.size()) { ++bad; break; }
            for (size_t i = 0; i < oracle.size(); ++i)
                if (exact[i].entry_index != oracle[i].second ||
                    tree[i].entry_index != oracle[i].second ||
                    exact[i].distance != tree[i].distance)
                    ++bad;
        } else {
            std::vector<double> q(8);
            for (auto& v : q) v = 0.5 * rng.uniform_int(3) + (rng.uniform() - 0.5) * 0.01;
            auto oracle = scan_oracle(values, q, k);
            auto exact = mem.reverse_query(q, k, QueryMode::exact);
            auto tree = mem.reverse_query(q, k, QueryMode::tree);
            if (exact.size() != oracle.size() || tree.size() != oracle.size()) { ++bad; break; }
            for (size_t i = 0; i < oracle.size(); ++i)
                if (exact[i].entry_index != oracle[i].second ||
                    tree[i].entry_index != oracle[i].second ||
                    exact[i].distance != tree[i].distance)
                    ++bad;
        }
    }
    double dt = now_seconds() - t0;
    report("criterion 2 (memory oracle equivalence)", bad == 0 && dt < 60.0,
           std::to_string(instances) + " instances, " + std::to_string(bad) +
               " mismatches, tie-breaks included, " + fmt(dt, 3) + "s of 60s budget");
}

// ---------------------------------------------------------------------------
// criterion 3: mixture prior correctness
// ---------------------------------------------------------------------------

void criterion_3() {
    RngStream rng = RngStream::root(303);
    bool ok = true;
    std::string detail;

    // Weight normalization to 1e-12 across random mixtures.
    double worst_norm = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 1 + rng.uniform_int(40);
        SpatialMemory mem;
        for (int i = 0; i < n; ++i) {
            std::vector<double> key = {rng.normal(), rng.normal()};
            std::vector<double> val = {rng.normal(), rng.normal(), rng.normal()};
            mem.insert(GaussianStats{key, {-2, -2}}, GaussianStats{val, {-1, -1, -1}}, i + 1);
        }
        mem.freeze(DistanceMetric{});
        MixturePrior p = mixture_prior({rng.normal(), rng.normal()}, mem,
                                       1 + rng.uniform_int(5), 1e-4, DistanceMetric{});
        double total = 0.0;
        for (double w : p.weights) total += w;
        worst_norm = std::max(worst_norm, std::abs(total - 1.0));
    }
    if (worst_norm > 1e-12) {
        ok = false;
        detail += "normalization off by " + fmt(worst_norm) + "; ";
    }

    // The pinned (0.1, 0.3) example.
    SpatialMemory m2;
    m2.insert(GaussianStats{{0.1, 0.0}, {-2, -2}}, GaussianStats{{1.0}, {-1}}, 1);
    m2.insert(GaussianStats{{0.3, 0.0}, {-2, -2}}, GaussianStats{{2.0}, {-1}}, 2);
    m2.freeze(DistanceMetric{});
    MixturePrior px = mixture_prior({0.0, 0.0}, m2, 2, 1e-4, DistanceMetric{});
    if (std::abs(px.weights[0] - 0.8992) > 1e-4 || std::abs(px.weights[1] - 0.1008) > 1e-4) {
        ok = false;
        detail += "(0.1,0.3) weights (" + fmt(px.weights[0]) + "," + fmt(px.weights[1]) + "); ";
    }

    // Log density against direct 64-bit summation.
    double worst_ld = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        MixturePrior prior;
        int k = 1 + rng.uniform_int(5);
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            GaussianStats c;
            for (int d = 0; d < 4; ++d) {
                c.mean.push_back(rng.normal());
                c.logvar.push_back(rng.normal() * 0.5);
            }
            prior.components.push_back(c);
            double w = rng.uniform() + 0.05;
            prior.weights.push_back(w);
            total += w;
        }
        for (auto& w : prior.weights) w /= total;
        std::vector<double> z = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        double direct = 0.0;
        for (int i = 0; i < k; ++i)
            direct += prior.weights[static_cast<size_t>(i)] *
                      std::exp(gaussian_log_density(z, prior.components[static_cast<size_t>(i)]));
        worst_ld = std::max(worst_ld, std::abs(mixture_log_density(prior, z) - std::log(direct)));
    }
    if (worst_ld > 1e-10) {
        ok = false;
        detail += "log-density off by " + fmt(worst_ld) + "; ";
    }

    report("criterion 3 (mixture prior correctness)", ok,
           ok ? "normalization <= " + fmt(worst_norm) + ", (0.1,0.3) -> (" + fmt(px.weights[0]) +
                    ", " + fmt(px.weights[1]) + "), summation-oracle gap <= " + fmt(worst_ld)
              : detail);
}

// ---------------------------------------------------------------------------
// criterion 4: transition algebra
// ---------------------------------------------------------------------------

void criterion_4() {
    RngStream rng = RngStream::root(404);
    bool ok = true;
    std::string detail;

    // Rotation matrix algebra.
    double worst_rot = 0.0;
    for (int t = 0; t < 200; ++t) {
        double theta = rng.normal() * 4.0;
        auto r = rotation_matrix(theta);
        auto ri = rotation_matrix(-theta);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                double prod = 0.0, gram = 0.0;
                for (int kx = 0; kx < 3; ++kx) {
                    prod += r[static_cast<size_t>(i)][static_cast<size_t>(kx)] *
                            ri[static_cast<size_t>(kx)][static_cast<size_t>(j)];
                    gram += r[static_cast<size_t>(kx)][static_cast<size_t>(i)] *
                            r[static_cast<size_t>(kx)][static_cast<size_t>(j)];
                }
                double want = i == j ? 1.0 : 0.0;
                worst_rot = std::max({worst_rot, std::abs(prod - want), std::abs(gram - want)});
            }
        }
        double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        worst_rot = std::max(worst_rot, std::abs(det - 1.0));
    }
    if (worst_rot > 1e-12) {
        ok = false;
        detail += "rotation algebra off by " + fmt(worst_rot) + "; ";
    }

    // Momentum displacements bounded by c_s.
    bool bounded = true;
    {
        Params params;
        TransitionParams tp = TransitionParams::create(params, TransitionVariant::momentum, 5,
                                                       1e-2, 4, rng.split("mom"), Precision::f64);
        for (int64_t i = 0; i < params.group(tp.M).value.size(); ++i)
            params.group(tp.M).value[i] = rng.normal() * 3.0;
        for (int64_t i = 0; i < 3; ++i) params.group(tp.c_s_raw).value[i] = rng.normal();
        std::vector<double> cs(3);
        for (int i = 0; i < 3; ++i)
            cs[static_cast<size_t>(i)] = std::log1p(std::exp(params.group(tp.c_s_raw).value[i]));
        std::vector<double> s(3, 0.0), d(3, 0.0);
        for (int t = 0; t < 2000; ++t) {
            TransStep step = transition_mean(params, tp, s, d, rng.uniform_int(5));
            for (int i = 0; i < 3; ++i)
                bounded = bounded &&
                          std::abs(step.d[static_cast<size_t>(i)]) < cs[static_cast<size_t>(i)];
            s = step.mean;
            d = step.d;
        }
    }
    if (!bounded) {
        ok = false;
        detail += "momentum displacement exceeded c_s; ";
    }

    // Angular embedding periodicity to machine precision.
    double worst_ang = 0.0;
    for (int t = 0; t < 500; ++t) {
        std::vector<double> s = {rng.normal(), rng.normal(), rng.normal() * 3};
        auto a = angular_embed(s);
        auto b = angular_embed({s[0], s[1], s[2] + 2 * 3.14159265358979323846});
        for (int i = 0; i < 4; ++i)
            worst_ang = std::max(worst_ang, std::abs(a[static_cast<size_t>(i)] -
                                                     b[static_cast<size_t>(i)]));
    }
    if (worst_ang > 1e-12) {
        ok = false;
        detail += "angular embedding periodicity off by " + fmt(worst_ang) + "; ";
    }

    // Walled transition never amplifies: 9x9 grid x 5 actions x 100 weights.
    bool never_amplifies = true;
    for (int w = 0; w < 100; ++w) {
        Params params;
        TransitionParams tp = TransitionParams::create(
            params, TransitionVariant::walled, 5, 1e-3, 16,
            rng.split(static_cast<uint64_t>(w) + 1000), Precision::f64);
        for (size_t gi = 0; gi < params.size(); ++gi)
            for (int64_t i = 0; i < params.groups()[gi].value.size(); ++i)
                params.groups()[gi].value[i] = rng.normal();
        const Tensor& mm = params.group(tp.M).value;
        for (int gx = 0; gx < 9; ++gx) {
            for (int gy = 0; gy < 9; ++gy) {
                std::vector<double> s = {gx * 0.25 - 1.0, gy * 0.25 - 1.0};
                for (int a = 0; a < 5; ++a) {
                    TransStep step = transition_mean(params, tp, s, {}, a);
                    for (int i = 0; i < 2; ++i)
                        never_amplifies =
                            never_amplifies &&
                            std::abs(step.mean[static_cast<size_t>(i)] - s[static_cast<size_t>(i)]) <=
                                std::abs(mm.at(i, a)) + 1e-15;
                }
            }
        }
    }
    if (!never_amplifies) {
        ok = false;
        detail += "walled transition amplified a displacement; ";
    }

    report("criterion 4 (transition algebra)", ok,
           ok ? "rotation err " + fmt(worst_rot) + ", momentum bounded, angular periodicity err " +
                    fmt(worst_ang) + ", gate exhaustive 9x9x5x100 clean"
              : detail);
}

// ---------------------------------------------------------------------------
// criterion 5 (+9): desk-scale image navigation
// ---------------------------------------------------------------------------

void criterion_5() {
    RunConfig cfg = preset_config("imagenav-small");
    ensure_dataset("acc_c5_train", cfg.env, 2000, cfg.tau, cfg.pred_train, 11);
    ensure_dataset("acc_c5_test", cfg.env, 32, cfg.tau, 128, 999);

    TrainedModel tm = train_cached(cfg, "acc_c5_train", "acc_c5_run");
    const Model& m = tm.model;

    Dataset train = Dataset::open("acc_c5_train");
    Dataset test = Dataset::open("acc_c5_test");
    std::vector<float> mean_frame = dataset_mean_frame(train);

    double pred_h128 = 0.0, base_h128 = 0.0, recon_mse = 0.0;
    int64_t recon_count = 0;
    std::vector<std::vector<double>> all_states, all_pos;
    for (size_t i = 0; i < test.size(); ++i) {
        Episode ep = test.episode(i);
        ep.tau = cfg.tau;
        PastEncodeResult pe = past_encode(m, ep);
        std::vector<uint8_t> actions(ep.actions.begin() + ep.tau, ep.actions.end());
        PredictResult pr = predict(m, pe, actions);

        pred_h128 += frame_mse(pr.frames[127], ep.frames[static_cast<size_t>(ep.tau) + 127]);
        std::vector<double> mf(mean_frame.begin(), mean_frame.end());
        base_h128 += frame_mse(mf, ep.frames[static_cast<size_t>(ep.tau) + 127]);

        for (int t = 0; t < 128; ++t) {
            const auto& truth = ep.frames[static_cast<size_t>(ep.tau + t)];
            GaussianStats q = encode(m.params, m.vae, truth);
            recon_mse += frame_mse(decode_probs(m.params, m.vae, q.mean), truth);
            ++recon_count;
            all_states.push_back(pr.states[static_cast<size_t>(t)]);
            all_pos.push_back({ep.positions[static_cast<size_t>(ep.tau + t)][0],
                               ep.positions[static_cast<size_t>(ep.tau + t)][1]});
        }
    }
    pred_h128 /= static_cast<double>(test.size());
    base_h128 /= static_cast<double>(test.size());
    recon_mse /= static_cast<double>(recon_count);

    AffineReport ar = eval_affine_alignment(all_states, all_pos);

    bool pass_a = pred_h128 <= 2.0 * recon_mse && pred_h128 <= 0.5 * base_h128;
    bool pass_b = ar.r2 >= 0.95;
    bool budget = !tm.fresh || tm.train_seconds < 7200.0;
    report("criterion 5 (image navigation, tau=64, horizon 128)", pass_a && pass_b && budget,
           "pred MSE@128 " + fmt(pred_h128) + " vs 2x recon " + fmt(2 * recon_mse) +
               " and 0.5x mean-frame " + fmt(0.5 * base_h128) + "; affine R^2 " + fmt(ar.r2, 4) +
               " (>= 0.95); " +
               (tm.fresh ? "trained in " + fmt(tm.train_seconds, 3) + "s of 7200s budget"
                         : "cached checkpoint"));

    std::string hd;
    bool healthy = training_health("acc_c5_run/metrics.log", 1000 + cfg.kl_warmup, &hd);
    report("criterion 9 (training health, image-nav run)", healthy, hd);
}

// ---------------------------------------------------------------------------
// criterion 6 (+9): panorama rotation
// ---------------------------------------------------------------------------

void criterion_6() {
    RunConfig cfg = preset_config("panorama");
    ensure_dataset("acc_c6_train", cfg.env, 2000, cfg.tau, cfg.pred_train, 12);
    ensure_dataset("acc_c6_test", cfg.env, 32, cfg.tau, 44, 998);

    TrainedModel tm = train_cached(cfg, "acc_c6_train", "acc_c6_run");
    const Model& m = tm.model;
    Dataset test = Dataset::open("acc_c6_test");

    double model_mse = 0.0, baseline_mse = 0.0;
    for (size_t i = 0; i < test.size(); ++i) {
        Episode ep = test.episode(i);
        ep.tau = cfg.tau;
        PastEncodeResult pe = past_encode(m, ep);
        std::vector<uint8_t> actions(ep.actions.begin() + ep.tau, ep.actions.end());
        PredictResult pr = predict(m, pe, actions);
        const auto& last_seen = ep.frames[static_cast<size_t>(ep.tau) - 1];
        for (size_t t = 0; t < actions.size(); ++t) {
            const auto& truth = ep.frames[static_cast<size_t>(ep.tau) + t];
            model_mse += frame_mse(pr.frames[t], truth);
            baseline_mse += frame_mse_f(last_seen, truth);
        }
    }
    double steps = static_cast<double>(test.size()) * 44.0;
    model_mse /= steps;
    baseline_mse /= steps;

    bool pass = model_mse <= 0.7 * baseline_mse;
    bool budget = !tm.fresh || tm.train_seconds < 3600.0;
    report("criterion 6 (panorama, predict t=34..77 incl. unseen arc)", pass && budget,
           "model mean MSE " + fmt(model_mse) + " vs 0.7x last-frame baseline " +
               fmt(0.7 * baseline_mse) + "; " +
               (tm.fresh ? "trained in " + fmt(tm.train_seconds, 3) + "s of 3600s budget"
                         : "cached checkpoint"));

    std::string hd;
    bool healthy = training_health("acc_c6_run/metrics.log", 1000 + cfg.kl_warmup, &hd);
    report("criterion 9 (training health, panorama run)", healthy, hd);
}

// ---------------------------------------------------------------------------
// criterion 7 (+9): momentum displacement recovery
// ---------------------------------------------------------------------------

void criterion_7() {
    RunConfig cfg = preset_config("momentum");
    ensure_dataset("acc_c7_train", cfg.env, 2000, cfg.tau, cfg.pred_train, 13);
    ensure_dataset("acc_c7_test", cfg.env, 32, cfg.tau, 64, 997);

    TrainedModel tm = train_cached(cfg, "acc_c7_train", "acc_c7_run");
    const Model& m = tm.model;
    Dataset test = Dataset::open("acc_c7_test");

    double se = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i < test.size(); ++i) {
        Episode ep = test.episode(i);
        ep.tau = cfg.tau;
        PastEncodeResult pe = past_encode(m, ep);
        std::vector<uint8_t> actions(ep.actions.begin() + ep.tau, ep.actions.end());
        PredictResult pr = predict(m, pe, actions);
        for (size_t t = 0; t < actions.size(); ++t) {
            for (int dd = 0; dd < 3; ++dd) {
                double e = pr.disps[t][static_cast<size_t>(dd)] -
                           static_cast<double>(
                               ep.displacements[static_cast<size_t>(ep.tau) + t][static_cast<size_t>(dd)]);
                se += e * e;
                ++count;
            }
        }
    }
    double rmse = std::sqrt(se / static_cast<double>(count));
    double cs_max = 0.0;
    for (double v : test.env_config().c_s_true) cs_max = std::max(cs_max, std::abs(v));
    double bound = 0.05 * cs_max;

    bool pass = rmse <= bound;
    bool budget = !tm.fresh || tm.train_seconds < 7200.0;
    report("criterion 7 (momentum displacement recovery)", pass && budget,
           "held-out displacement RMSE " + fmt(rmse) + " vs bound " + fmt(bound) +
               " (5% of max |c_s_true| = " + fmt(cs_max, 3) + ") with the regression loss on; " +
               "without the loss the bound is not required (expected degradation); " +
               (tm.fresh ? "trained in " + fmt(tm.train_seconds, 3) + "s of 7200s budget"
                         : "cached checkpoint"));

    std::string hd;
    bool healthy = training_health("acc_c7_run/metrics.log", 1000 + cfg.kl_warmup, &hd);
    report("criterion 9 (training health, momentum run)", healthy, hd);
}

// ---------------------------------------------------------------------------
// criterion 8: landmark inference on obstacle episodes
// ---------------------------------------------------------------------------

int obstacle_blocked_moves(const Episode& ep, int grid, int upto) {
    static constexpr int dx[4] = {0, 0, -1, 1};
    static constexpr int dy[4] = {-1, 1, 0, 0};
    int count = 0;
    for (int t = 0; t < upto; ++t) {
        int a = ep.actions[static_cast<size_t>(t)];
        if (a == 4) continue;
        double px = t == 0 ? ep.start[0] : ep.positions[static_cast<size_t>(t) - 1][0];
        double py = t == 0 ? ep.start[1] : ep.positions[static_cast<size_t>(t) - 1][1];
        int tx = static_cast<int>(px) + dx[a];
        int ty = static_cast<int>(py) + dy[a];
        if (tx < 0 || tx >= grid || ty < 0 || ty >= grid) continue; // wall, not obstacle
        bool in_obstacle = false;
        for (const auto& r : ep.obstacles) in_obstacle = in_obstacle || r.contains(tx, ty);
        bool moved = ep.positions[static_cast<size_t>(t)][0] != static_cast<float>(px) ||
                     ep.positions[static_cast<size_t>(t)][1] != static_cast<float>(py);
        if (in_obstacle && !moved) ++count;
    }
    return count;
}

double binom_upper_tail(int n, int k) {
    // P(Bin(n, 1/2) >= k), exact via log factorials.
    double p = 0.0;
    for (int i = k; i <= n; ++i) {
        double logc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
        p += std::exp(logc - n * std::log(2.0));
    }
    return std::min(1.0, p);
}

void criterion_8() {
    RunConfig lm_cfg = preset_config("imagenav-obstacles"); // landmark on
    RunConfig plain_cfg = lm_cfg;
    plain_cfg.landmark = false;

    ensure_dataset("acc_c8_train", lm_cfg.env, 2000, lm_cfg.tau, lm_cfg.pred_train, 14);
    ensure_dataset("acc_c8_test", lm_cfg.env, 220, lm_cfg.tau, 8, 996);

    TrainedModel lm = train_cached(lm_cfg, "acc_c8_train", "acc_c8_run_lm");
    TrainedModel plain = train_cached(plain_cfg, "acc_c8_train", "acc_c8_run_plain");

    Dataset test = Dataset::open("acc_c8_test");
    const int grid = lm_cfg.env.positions_per_dim;
    const int calib_count = 30;

    // One affine calibration per model, pooled over the calibration episodes.
    auto calibrate = [&](const Model& m) {
        std::vector<std::vector<double>> states, pos;
        for (int i = 0; i < calib_count; ++i) {
            Episode ep = test.episode(static_cast<size_t>(i));
            ep.tau = lm_cfg.tau;
            PastEncodeResult pe = past_encode(m, ep);
            for (int t = 0; t < ep.tau; ++t) {
                states.push_back(pe.states[static_cast<size_t>(t)]);
                pos.push_back({ep.positions[static_cast<size_t>(t)][0],
                               ep.positions[static_cast<size_t>(t)][1]});
            }
        }
        return fit_affine(states, pos);
    };
    AffineMap map_lm = calibrate(lm.model);
    AffineMap map_plain = calibrate(plain.model);

    // Paired end-of-memorization errors on blocked-heavy episodes.
    int wins = 0, losses = 0, used = 0;
    double err_lm_sum = 0.0, err_plain_sum = 0.0;
    for (size_t i = calib_count; i < test.size() && used < 60; ++i) {
        Episode ep = test.episode(i);
        ep.tau = lm_cfg.tau;
        if (obstacle_blocked_moves(ep, grid, ep.tau) < 3) continue;
        ++used;

        auto end_error = [&](const Model& m, const AffineMap& map) {
            PastEncodeResult pe = past_encode(m, ep);
            std::vector<double> mapped = map.apply(pe.states.back());
            double ex = mapped[0] - ep.positions[static_cast<size_t>(ep.tau) - 1][0];
            double ey = mapped[1] - ep.positions[static_cast<size_t>(ep.tau) - 1][1];
            return std::sqrt(ex * ex + ey * ey);
        };
        double e_lm = end_error(lm.model, map_lm);
        double e_plain = end_error(plain.model, map_plain);
        err_lm_sum += e_lm;
        err_plain_sum += e_plain;
        if (e_lm < e_plain) ++wins;
        else if (e_lm > e_plain) ++losses;
    }
    double pval = binom_upper_tail(wins + losses, wins);
    bool enough = used >= 50;
    bool mean_better = err_lm_sum / used < err_plain_sum / used;
    bool sig = pval < 0.05;

    // Zero-correction reduction: landmark objective == plain objective.
    double reduction_gap = 0.0;
    {
        RunConfig t_plain = toy_cfg(TransitionVariant::walled, false);
        RunConfig t_lm = toy_cfg(TransitionVariant::walled, true);
        Model mp = build_model(t_plain);
        Model ml = build_model(t_lm);
        for (size_t i = 0; i < mp.params.size(); ++i) {
            const ParamGroup& src = mp.params.group(static_cast<int>(i));
            ml.params.group(ml.params.find(src.name)).value = src.value;
        }
        zero_landmark_correction(ml);
        ensure_dataset("acc_c8_toy", t_plain.env, 1, t_plain.tau, t_plain.pred_train, 71);
        Episode ep = Dataset::open("acc_c8_toy").episode(0);
        ep.tau = t_plain.tau;
        PastEncodeResult pep = past_encode(mp, ep);
        PastEncodeResult pel = past_encode(ml, ep);
        ElboNoise noise = draw_elbo_noise(mp, t_plain.pred_train, RngStream::root(9));
        Graph g1(Precision::f64), g2(Precision::f64);
        double o1 = build_elbo(g1, mp, ep, pep, noise).value;
        double o2 = build_elbo(g2, ml, ep, pel, noise).value;
        reduction_gap = std::abs(o1 - o2);
    }
    bool reduces = reduction_gap < 1e-10;

    report("criterion 8 (landmark inference on obstacles)",
           enough && mean_better && sig && reduces,
           "paired episodes " + std::to_string(used) + " (>= 50 with >= 3 obstacle blocks), " +
               "mean aligned end error " + fmt(err_lm_sum / used) + " (landmark) vs " +
               fmt(err_plain_sum / used) + " (plain), sign test wins " + std::to_string(wins) +
               "/" + std::to_string(wins + losses) + ", one-sided p " + fmt(pval) +
               " (< 0.05); zero-correction reduction gap " + fmt(reduction_gap) + " (< 1e-10)");
}

} // namespace

int main(int argc, char** argv) {
    std::string which = argc > 1 ? argv[1] : "all";
    try {
        if (which == "1" || which == "all") criterion_1();
        if (which == "2" || which == "all") criterion_2();
        if (which == "3" || which == "all") criterion_3();
        if (which == "4" || which == "all") criterion_4();
        if (which == "5" || which == "all") criterion_5();
        if (which == "6" || which == "all") criterion_6();
        if (which == "7" || which == "all") criterion_7();
        if (which == "8" || which == "all") criterion_8();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 99;
    }
    return g_failures;
}
