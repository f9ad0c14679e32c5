#include "gtmsm/train.hpp"

#include "gtmsm/checkpoint.hpp"
#include "gtmsm/gradcheck.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;

namespace gtmsm {

namespace {

void check_compatible(const Model& m, const Dataset& data) {
    if (data.env_config().kind != m.cfg.env.kind)
        throw std::invalid_argument("train: dataset env kind does not match the config");
    if (data.tau() != m.cfg.tau)
        throw std::invalid_argument("train: dataset tau " + std::to_string(data.tau()) +
                                    " != config tau " + std::to_string(m.cfg.tau));
    if (data.pred_len() < m.cfg.pred_train)
        throw std::invalid_argument("train: dataset prediction segment shorter than pred_train");
    auto fs_ = data.frame_shape();
    if (fs_ != m.cfg.frame_shape())
        throw std::invalid_argument("train: dataset frame shape mismatch");
    if (data.action_count() != m.trans.action_count)
        throw std::invalid_argument("train: dataset action count mismatch");
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
}

struct SlotOutcome {
    double objective = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

} // namespace

Episode training_episode(const Model& m, const Dataset& data, size_t index) {
    Episode ep = data.episode(index);
    ep.tau = m.cfg.tau;
    return ep;
}

TrainResult train(Model& m, const Dataset& data, const TrainOptions& opt) {
    check_compatible(m, data);
    fs::create_directories(opt.out_dir);

    AdamState adam = AdamState::init(m.params);
    int64_t start_update = 0;
    if (!opt.resume_ckpt.empty()) start_update = load_checkpoint_into(opt.resume_ckpt, m, adam);

    int64_t total_updates = opt.updates_override >= 0 ? opt.updates_override : m.cfg.updates;
    LrSchedule sched{m.cfg.lr_start, m.cfg.lr_end, m.cfg.anneal_updates};
    RngStream root = RngStream::root(m.cfg.seed);
    RngStream pick_root = root.split("episodes");
    RngStream noise_root = root.split("noise");

    std::ofstream log(fs::path(opt.out_dir) / "metrics.log", std::ios::app);
    if (!log) throw std::runtime_error("train: cannot open metrics.log in '" + opt.out_dir + "'");
    if (start_update == 0)
        log << "# update\tobjective\treconstruction\tkl\tlr\twall_seconds\n";

    const int batch = m.cfg.batch;
    std::vector<GradBuffer> buffers;
    for (int i = 0; i < batch; ++i) buffers.emplace_back(m.params);
    std::vector<SlotOutcome> outcomes(static_cast<size_t>(batch));

    // KL weight: linear ramp to full weight with a small floor, so the
    // variational scale stays regularized from the first update.
    auto kl_weight_at = [&](int64_t update) {
        if (m.cfg.kl_warmup <= 0) return 1.0;
        return std::clamp(static_cast<double>(update) / m.cfg.kl_warmup, 0.05, 1.0);
    };

    auto run_slot = [&](int64_t update, int slot) {
        RngStream lane = pick_root.split(static_cast<uint64_t>(update)).split(static_cast<uint64_t>(slot));
        size_t idx = static_cast<size_t>(lane.uniform_int(static_cast<int>(data.size())));
        Episode ep = training_episode(m, data, idx);

        PastEncodeResult pe = past_encode(m, ep);
        ElboNoise noise = draw_elbo_noise(
            m, m.cfg.pred_train,
            noise_root.split(static_cast<uint64_t>(update)).split(static_cast<uint64_t>(slot)));

        Graph g(m.cfg.precision_tag());
        ElboResult elbo = build_elbo(g, m, ep, pe, noise, m.cfg.pred_train, kl_weight_at(update));
        Val total = elbo.objective;
        if (m.cfg.disp_loss)
            total = g.sub(total, displacement_loss_nodes(g, elbo.disp_nodes, ep.displacements,
                                                         ep.tau, m.cfg.disp_weight));
        Val loss = g.scale(total, -1.0);

        buffers[static_cast<size_t>(slot)].zero();
        g.backward(loss, buffers[static_cast<size_t>(slot)]);

        SlotOutcome& oc = outcomes[static_cast<size_t>(slot)];
        oc.objective = elbo.value; // true ELBO, independent of the warm-up weight
        oc.recon = 0.0;
        oc.kl = 0.0;
        for (double v : elbo.recon) oc.recon += v;
        for (double v : elbo.kl_z) oc.kl += v;
        for (double v : elbo.kl_s) oc.kl += v;
    };

    TrainResult result;
    auto t0 = std::chrono::steady_clock::now();

    if (opt.grad_check_first && start_update == 0) {
        RngStream lane = pick_root.split(uint64_t{0}).split(uint64_t{0});
        size_t idx = static_cast<size_t>(lane.uniform_int(static_cast<int>(data.size())));
        Episode ep = training_episode(m, data, idx);
        PastEncodeResult pe = past_encode(m, ep);
        ElboNoise noise = draw_elbo_noise(m, m.cfg.pred_train, noise_root.split("gradcheck"));
        auto loss_fn = [&](bool with_grad) {
            Graph g(m.cfg.precision_tag());
            ElboResult elbo = build_elbo(g, m, ep, pe, noise, m.cfg.pred_train);
            Val total = elbo.objective;
            if (m.cfg.disp_loss)
                total = g.sub(total, displacement_loss_nodes(g, elbo.disp_nodes, ep.displacements,
                                                             ep.tau, m.cfg.disp_weight));
            Val loss = g.scale(total, -1.0);
            if (with_grad) {
                GradBuffer gb(m.params);
                g.backward(loss, gb);
                gb.add_scaled_to(m.params, 1.0);
            }
            return g.scalar_value(loss);
        };
        bool f64 = m.cfg.precision_tag() == Precision::f64;
        GradCheckReport rep = grad_check(loss_fn, m.params, f64 ? 1e-5 : 1e-3,
                                         f64 ? 1e-4 : 1e-2, 64, RngStream::root(m.cfg.seed));
        std::cout << "grad check (first batch): " << rep.summary() << "\n";
        if (!rep.pass) throw std::runtime_error("train: first-batch gradient check failed");
        m.params.zero_grad();
    }

    for (int64_t update = start_update; update < total_updates; ++update) {
        if (m.cfg.threads <= 1 || batch == 1) {
            for (int slot = 0; slot < batch; ++slot) run_slot(update, slot);
        } else {
            int workers = std::min(m.cfg.threads, batch);
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
            for (int w = 0; w < workers; ++w) {
                pool.emplace_back([&, w]() {
                    try {
                        for (int slot = w; slot < batch; slot += workers) run_slot(update, slot);
                    } catch (...) {
                        errors[static_cast<size_t>(w)] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }

        double obj = 0.0, recon = 0.0, kl = 0.0;
        for (const auto& oc : outcomes) {
            obj += oc.objective;
            recon += oc.recon;
            kl += oc.kl;
        }
        obj /= batch;
        recon /= batch;
        kl /= batch;

        if (!std::isfinite(obj)) {
            result.aborted_nan = true;
            result.updates_done = update - start_update;
            std::cerr << "train: non-finite objective at update " << update
                      << ", keeping last checkpoint\n";
            return result;
        }

        m.params.zero_grad();
        for (int slot = 0; slot < batch; ++slot)
            buffers[static_cast<size_t>(slot)].add_scaled_to(m.params, 1.0 / batch);

        AdamConfig acfg{sched.at(update), m.cfg.adam_beta1, m.cfg.adam_beta2, m.cfg.adam_eps};
        adam_step(m.params, adam, acfg);

        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char line[192];
        std::snprintf(line, sizeof(line), "%lld\t%.6f\t%.6f\t%.6f\t%.8f\t%.3f\n",
                      static_cast<long long>(update), obj, recon, kl, acfg.lr, wall);
        log << line;
        result.final_objective = obj;

        int64_t done = update + 1;
        if (done % m.cfg.ckpt_every == 0 || done == total_updates) {
            std::string dir = (fs::path(opt.out_dir) /
                               ("ckpt_" + std::to_string(done))).string();
            save_checkpoint(dir, m, adam, done);
            result.last_checkpoint = dir;
            log.flush();
            if (!opt.quiet)
                std::cout << "update " << done << "/" << total_updates << " objective " << obj
                          << " lr " << acfg.lr << "\n";
        }
    }
    result.updates_done = total_updates - start_update;
    return result;
}

} // namespace gtmsm
