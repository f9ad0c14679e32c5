// Command-line surface: dataset generation, training, prediction, evaluation,
// gradient checking, rendering, and dataset verification.

#include "gtmsm/checkpoint.hpp"
#include "gtmsm/evaluate.hpp"
#include "gtmsm/gradcheck.hpp"
#include "gtmsm/model.hpp"
#include "gtmsm/pixmap.hpp"
#include "gtmsm/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gtmsm;

namespace {

// Bare relative paths resolve under GTMSM_DATA_ROOT when it is set.
std::string resolve_path(const std::string& p) {
    if (p.empty()) return p;
    const char* root = std::getenv("GTMSM_DATA_ROOT");
    if (root == nullptr || p[0] == '/' || p.rfind("./", 0) == 0 || p.rfind("../", 0) == 0)
        return p;
    return (fs::path(root) / p).string();
}

RunConfig config_from_options(const std::string& preset, const std::string& config_file,
                              const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!preset.empty() && !config_file.empty())
        throw std::invalid_argument("give either --preset or --config, not both");
    if (!config_file.empty())
        cfg = RunConfig::load(resolve_path(config_file));
    else
        cfg = preset_config(preset.empty() ? "imagenav-small" : preset);
    for (const std::string& kv : overrides) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.env.apply_defaults();
    cfg.validate();
    return cfg;
}

void write_f32_file(const std::string& path, const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& row : rows) {
        for (double v : row) {
            float f = static_cast<float>(v);
            uint32_t u;
            std::memcpy(&u, &f, 4);
            char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8),
                         static_cast<char>(u >> 16), static_cast<char>(u >> 24)};
            os.write(b, 4);
        }
    }
}

std::vector<std::vector<double>> read_f32_file(const std::string& path, int row_len) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    if (row_len <= 0 || bytes.size() % (static_cast<size_t>(row_len) * 4) != 0)
        throw std::runtime_error("size mismatch reading '" + path + "'");
    std::vector<std::vector<double>> rows(bytes.size() / (static_cast<size_t>(row_len) * 4),
                                          std::vector<double>(static_cast<size_t>(row_len)));
    size_t p = 0;
    for (auto& row : rows)
        for (auto& v : row) {
            uint32_t u = static_cast<uint32_t>(bytes[p]) |
                         (static_cast<uint32_t>(bytes[p + 1]) << 8) |
                         (static_cast<uint32_t>(bytes[p + 2]) << 16) |
                         (static_cast<uint32_t>(bytes[p + 3]) << 24);
            float f;
            std::memcpy(&f, &u, 4);
            v = static_cast<double>(f);
            p += 4;
        }
    return rows;
}

int cmd_gen_data(const std::string& env_name, const std::string& out, int n, int tau, int pred,
                 uint64_t seed, int world, int crop, int grid, int channels, int noise_scale,
                 bool obstacles, int period, int window, int strip_h, int strip_w,
                 const std::string& image, double repeat_rate, double wall_bump_keep,
                 bool verify_after) {
    EnvConfig env;
    env.kind = env_kind_from_name(env_name);
    env.world_size = world;
    env.crop = crop;
    env.positions_per_dim = grid;
    env.channels = channels;
    env.noise_scale = noise_scale;
    env.obstacles = obstacles;
    env.period = period;
    env.window = window;
    env.strip_height = strip_h;
    env.strip_width = strip_w;
    env.image_path = image;
    env.policy.repeat_rate = repeat_rate;
    env.wall_bump_keep = wall_bump_keep;
    env.apply_defaults();

    std::string dir = resolve_path(out);
    Dataset::generate(env, dir, n, tau, pred, seed);
    std::cout << "wrote " << n << " sequences of " << tau + pred << " steps to " << dir << "\n";
    if (verify_after) {
        std::string err;
        int bad = Dataset::open(dir).verify(&err);
        if (bad != 0) throw std::runtime_error("verification failed: " + err);
        std::cout << "verified: all sequences regenerate bit-exactly\n";
    }
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data, const std::string& out,
              const std::string& resume, bool grad_check_first, int64_t updates_override) {
    Dataset d = Dataset::open(resolve_path(data));
    Model m = build_model(cfg);
    TrainOptions opt;
    opt.out_dir = resolve_path(out);
    opt.resume_ckpt = resume.empty() ? "" : resolve_path(resume);
    opt.grad_check_first = grad_check_first;
    opt.updates_override = updates_override;
    TrainResult r = train(m, d, opt);
    if (r.aborted_nan) throw std::runtime_error("training aborted on a non-finite objective");
    std::cout << "trained " << r.updates_done << " updates, final objective " << r.final_objective
              << ", last checkpoint " << r.last_checkpoint << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& data, int episode, int horizon,
                const std::string& out) {
    std::string cdir = resolve_path(ckpt);
    RunConfig cfg = checkpoint_config(cdir);
    Model m = build_model(cfg);
    AdamState adam = AdamState::init(m.params);
    load_checkpoint_into(cdir, m, adam);

    Dataset d = Dataset::open(resolve_path(data));
    if (episode < 0 || static_cast<size_t>(episode) >= d.size())
        throw std::invalid_argument("episode index out of range");
    Episode ep = d.episode(static_cast<size_t>(episode));
    ep.tau = cfg.tau;
    if (horizon < 0) horizon = std::min(cfg.pred_test, ep.steps() - ep.tau);
    if (horizon > static_cast<int>(ep.actions.size()) - ep.tau)
        throw std::invalid_argument("horizon exceeds the episode's action sequence");

    PastEncodeResult pe = past_encode(m, ep);

    std::string dir = resolve_path(out);
    fs::create_directories(dir);
    pe.memory.save((fs::path(dir) / "memory.dnd").string());

    json meta;
    meta["config_hash"] = cfg.hash();
    meta["episode"] = episode;
    meta["tau"] = ep.tau;
    meta["horizon"] = horizon;
    meta["frame_shape"] = cfg.frame_shape();
    meta["state_dim"] = cfg.state_dim();

    if (horizon > 0) {
        std::vector<uint8_t> actions(ep.actions.begin() + ep.tau,
                                     ep.actions.begin() + ep.tau + horizon);
        RngStream gen_rng = RngStream::root(cfg.seed).split("generate");
        PredictResult pr = predict(m, pe, actions, &gen_rng);
        write_f32_file((fs::path(dir) / "frames.f32").string(), pr.frames);
        write_f32_file((fs::path(dir) / "states.f32").string(), pr.states);
        write_f32_file((fs::path(dir) / "displacements.f32").string(), pr.disps);
    }
    std::ofstream os(fs::path(dir) / "predict.json");
    os << meta.dump(2) << "\n";
    std::cout << "wrote prediction outputs to " << dir << "\n";
    return 0;
}

int cmd_eval(const std::string& pred, const std::string& data, int episode,
             const std::string& train_data, const std::string& out) {
    std::string pdir = resolve_path(pred);
    std::ifstream mis(fs::path(pdir) / "predict.json");
    if (!mis) throw std::runtime_error("no predict.json in '" + pdir + "'");
    json meta = json::parse(mis);
    int tau = meta.at("tau").get<int>();
    int horizon = meta.at("horizon").get<int>();
    auto fshape = meta.at("frame_shape").get<std::vector<int>>();
    int frame_dim = fshape[0] * fshape[1] * fshape[2];
    int state_dim = meta.at("state_dim").get<int>();
    if (episode < 0) episode = meta.at("episode").get<int>();

    Dataset d = Dataset::open(resolve_path(data));
    Episode ep = d.episode(static_cast<size_t>(episode));
    if (tau + horizon > ep.steps())
        throw std::runtime_error("prediction horizon exceeds the episode length");

    auto gen = read_f32_file((fs::path(pdir) / "frames.f32").string(), frame_dim);
    auto states = read_f32_file((fs::path(pdir) / "states.f32").string(), state_dim);
    if (static_cast<int>(gen.size()) != horizon)
        throw std::runtime_error("generated frame count does not match the horizon");

    std::vector<std::vector<float>> truth(ep.frames.begin() + tau,
                                          ep.frames.begin() + tau + horizon);
    std::vector<float> mean_frame =
        dataset_mean_frame(train_data.empty() ? d : Dataset::open(resolve_path(train_data)));
    std::vector<float> last_frame = ep.frames[static_cast<size_t>(tau - 1)];

    PredictionErrorReport per = eval_prediction_error(gen, truth, mean_frame, last_frame);

    json rep;
    rep["episode"] = episode;
    rep["horizon"] = horizon;
    rep["per_step_mse"] = per.mse;
    rep["per_step_bce"] = per.bce;
    rep["baseline_mean_frame_mse"] = per.baseline_mean_mse;
    rep["baseline_last_frame_mse"] = per.baseline_last_mse;
    rep["mean_mse"] = per.mean_mse;
    rep["mean_bce"] = per.mean_bce;
    for (auto& [h, v] : per.horizon_mse) rep["horizon_mse"][std::to_string(h)] = v;
    for (auto& [h, v] : per.horizon_bce) rep["horizon_bce"][std::to_string(h)] = v;

    // Affine alignment of rollout states against true positions (position
    // components only; the heading has no ground-truth analogue here).
    std::vector<std::vector<double>> spath, ppath;
    int pos_dim = d.pos_dim() == 3 ? 2 : d.pos_dim();
    for (int t = 0; t < horizon; ++t) {
        std::vector<double> s(states[static_cast<size_t>(t)].begin(),
                              states[static_cast<size_t>(t)].begin() +
                                  std::min(state_dim, pos_dim == 1 ? state_dim : 2));
        std::vector<double> p;
        for (int dd = 0; dd < pos_dim; ++dd)
            p.push_back(ep.positions[static_cast<size_t>(tau + t)][static_cast<size_t>(dd)]);
        spath.push_back(s);
        ppath.push_back(p);
    }
    try {
        AffineReport ar = eval_affine_alignment(spath, ppath);
        rep["affine_r2"] = ar.r2;
        rep["affine_rmse"] = ar.rmse;
    } catch (const std::exception& e) {
        rep["affine_error"] = e.what();
    }

    if (d.env_config().kind == EnvKind::momentum) {
        auto disps = read_f32_file((fs::path(pdir) / "displacements.f32").string(), d.disp_dim());
        rep["displacement_rmse"] = displacement_rmse(disps, ep.displacements, tau);
    }

    std::string out_path = out.empty() ? (fs::path(pdir) / "report.json").string()
                                       : resolve_path(out);
    std::ofstream os(out_path);
    os << rep.dump(2) << "\n";
    std::cout << "wrote " << out_path << "\n";
    std::cout << "mean MSE " << per.mean_mse;
    if (rep.contains("affine_r2")) std::cout << ", affine R^2 " << rep["affine_r2"].get<double>();
    std::cout << "\n";
    return 0;
}

int cmd_render(const std::string& pred, const std::string& data, int episode, int cols,
               const std::string& out) {
    std::string dir = resolve_path(out);
    fs::create_directories(dir);

    std::string pdir = resolve_path(pred);
    std::ifstream mis(fs::path(pdir) / "predict.json");
    if (!mis) throw std::runtime_error("no predict.json in '" + pdir + "'");
    json meta = json::parse(mis);
    auto fshape = meta.at("frame_shape").get<std::vector<int>>();
    int c = fshape[0], h = fshape[1], w = fshape[2];
    int tau = meta.at("tau").get<int>();

    auto gen = read_f32_file((fs::path(pdir) / "frames.f32").string(), c * h * w);
    std::vector<std::vector<float>> frames;
    for (const auto& f : gen) frames.emplace_back(f.begin(), f.end());

    for (size_t t = 0; t < frames.size(); ++t) {
        char name[48];
        std::snprintf(name, sizeof(name), "gen_%04zu.%s", t, c == 1 ? "pgm" : "ppm");
        write_pnm((fs::path(dir) / name).string(), frames[t], c, h, w);
    }
    int gh = 0, gw = 0;
    std::vector<float> grid = compose_grid(frames, c, h, w, cols, &gh, &gw);
    write_pnm((fs::path(dir) / (c == 1 ? "generated_grid.pgm" : "generated_grid.ppm")).string(),
              grid, c, gh, gw);

    if (!data.empty()) {
        Dataset d = Dataset::open(resolve_path(data));
        if (episode < 0) episode = meta.at("episode").get<int>();
        Episode ep = d.episode(static_cast<size_t>(episode));
        // Interleave rows: truth row above its generated row, `cols` per row.
        std::vector<std::vector<float>> side;
        for (size_t base = 0; base < frames.size(); base += static_cast<size_t>(cols)) {
            for (size_t i = base; i < std::min(frames.size(), base + cols); ++i)
                side.push_back(ep.frames[static_cast<size_t>(tau) + i]);
            for (size_t i = base; i < std::min(frames.size(), base + cols); ++i)
                side.push_back(frames[i]);
        }
        grid = compose_grid(side, c, h, w, cols, &gh, &gw);
        write_pnm((fs::path(dir) / (c == 1 ? "true_vs_generated.pgm" : "true_vs_generated.ppm"))
                      .string(),
                  grid, c, gh, gw);
    }
    std::cout << "wrote " << frames.size() << " frames and grids to " << dir << "\n";
    return 0;
}

int cmd_gradcheck(RunConfig cfg, double eps, double tol, int64_t max_per_group, bool keep_precision) {
    if (!keep_precision) cfg.precision = "f64"; // finite differences want doubles
    cfg.validate();
    Model m = build_model(cfg);

    fs::path tmp = fs::temp_directory_path() /
                   ("gtmsm_gradcheck_" + std::to_string(static_cast<unsigned long long>(cfg.seed)));
    fs::remove_all(tmp);
    Dataset::generate(cfg.env, tmp.string(), 1, cfg.tau, std::max(1, cfg.pred_train), cfg.seed);
    Dataset d = Dataset::open(tmp.string());
    Episode ep = d.episode(0);
    ep.tau = cfg.tau;
    fs::remove_all(tmp);

    PastEncodeResult pe = past_encode(m, ep);
    ElboNoise noise = draw_elbo_noise(m, cfg.pred_train, RngStream::root(cfg.seed).split("gc"));
    auto loss_fn = [&](bool with_grad) {
        Graph g(m.cfg.precision_tag());
        ElboResult r = build_elbo(g, m, ep, pe, noise, cfg.pred_train);
        Val total = r.objective;
        if (cfg.disp_loss)
            total = g.sub(total, displacement_loss_nodes(g, r.disp_nodes, ep.displacements,
                                                         ep.tau, cfg.disp_weight));
        Val loss = g.scale(total, -1.0);
        if (with_grad) {
            GradBuffer gb(m.params);
            g.backward(loss, gb);
            gb.add_scaled_to(m.params, 1.0);
        }
        return g.scalar_value(loss);
    };
    GradCheckReport rep =
        grad_check(loss_fn, m.params, eps, tol, max_per_group, RngStream::root(cfg.seed));
    std::cout << rep.summary() << "\n";
    return rep.pass ? 0 : 1;
}

int cmd_verify(const std::string& data) {
    Dataset d = Dataset::open(resolve_path(data));
    std::string err;
    int bad = d.verify(&err);
    if (bad != 0) throw std::runtime_error(std::to_string(bad) + " sequences mismatch: " + err);
    std::cout << "verified " << d.size() << " sequences: bit-exact\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"generative temporal model with spatial memory"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a trajectory dataset");
    std::string g_env = "image-nav", g_out, g_image;
    int g_n = 100, g_tau = 64, g_pred = 16, g_world = 16, g_crop = 4, g_grid = 5, g_channels = 1;
    int g_noise_scale = 4;
    int g_period = 41, g_window = 16, g_strip_h = 16, g_strip_w = 82;
    uint64_t g_seed = 1;
    double g_rate = 2.0, g_wall_keep = 0.25;
    bool g_obstacles = false, g_verify = false;
    gen->add_option("--env", g_env, "image-nav | panorama | momentum");
    gen->add_option("--out", g_out)->required();
    gen->add_option("--n", g_n, "number of sequences");
    gen->add_option("--tau", g_tau, "memorization steps");
    gen->add_option("--pred", g_pred, "prediction steps");
    gen->add_option("--seed", g_seed);
    gen->add_option("--world", g_world, "world image side");
    gen->add_option("--crop", g_crop, "observation crop side");
    gen->add_option("--grid", g_grid, "positions per dimension");
    gen->add_option("--channels", g_channels, "1 or 3");
    gen->add_option("--noise-scale", g_noise_scale, "procedural texture coarseness (pixels)");
    gen->add_flag("--obstacles", g_obstacles, "random rectangular obstacles");
    gen->add_option("--period", g_period, "panorama rotational period");
    gen->add_option("--window", g_window, "panorama window columns");
    gen->add_option("--strip-height", g_strip_h);
    gen->add_option("--strip-width", g_strip_w);
    gen->add_option("--image", g_image, "world image file (PGM/PPM) instead of noise");
    gen->add_option("--repeat-rate", g_rate, "Poisson action-repeat rate");
    gen->add_option("--wall-keep", g_wall_keep, "P(keep a sampled action that bumps a wall)");
    gen->add_flag("--verify", g_verify, "re-derive and diff after writing");

    // shared config options for train/gradcheck
    std::string t_preset, t_config, t_data, t_out, t_resume;
    std::vector<std::string> t_sets;
    bool t_gcf = false;
    int64_t t_updates = -1;
    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--preset", t_preset, "imagenav-small | imagenav-full | imagenav-obstacles | panorama | momentum");
    tr->add_option("--config", t_config, "config file (key = value lines)");
    tr->add_option("--set", t_sets, "override, e.g. --set updates=1000")->take_all();
    tr->add_option("--data", t_data)->required();
    tr->add_option("--out", t_out)->required();
    tr->add_option("--resume", t_resume, "checkpoint directory to continue from");
    tr->add_flag("--grad-check-first", t_gcf, "finite-difference gate before training");
    tr->add_option("--updates", t_updates, "stop after this many updates");

    // predict
    auto* pr = app.add_subcommand("predict", "generate frames from actions and memory");
    std::string p_ckpt, p_data, p_out;
    int p_episode = 0, p_horizon = -1;
    pr->add_option("--ckpt", p_ckpt)->required();
    pr->add_option("--data", p_data)->required();
    pr->add_option("--episode", p_episode);
    pr->add_option("--horizon", p_horizon, "prediction steps (default: config pred_test)");
    pr->add_option("--out", p_out)->required();

    // eval
    auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
    std::string e_pred, e_data, e_train_data, e_out;
    int e_episode = -1;
    ev->add_option("--pred", e_pred)->required();
    ev->add_option("--data", e_data)->required();
    ev->add_option("--episode", e_episode, "episode index (default: the predicted one)");
    ev->add_option("--train-data", e_train_data, "dataset for the mean-frame baseline");
    ev->add_option("--out", e_out, "report path (default: <pred>/report.json)");

    // render
    auto* re = app.add_subcommand("render", "write PGM/PPM frames and grids");
    std::string r_pred, r_data, r_out;
    int r_cols = 8, r_episode = -1;
    re->add_option("--pred", r_pred)->required();
    re->add_option("--data", r_data, "dataset for true-vs-generated grids");
    re->add_option("--episode", r_episode);
    re->add_option("--cols", r_cols, "frames per grid row");
    re->add_option("--out", r_out)->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
    std::string c_preset, c_config;
    std::vector<std::string> c_sets;
    double c_eps = 1e-5, c_tol = 1e-4;
    int64_t c_max = 0;
    bool c_keep = false;
    gc->add_option("--preset", c_preset);
    gc->add_option("--config", c_config);
    gc->add_option("--set", c_sets)->take_all();
    gc->add_option("--eps", c_eps);
    gc->add_option("--tol", c_tol);
    gc->add_option("--max-per-group", c_max, "0 = every element");
    gc->add_flag("--keep-precision", c_keep, "skip the forced 64-bit mode");

    // verify
    auto* ve = app.add_subcommand("verify", "re-derive a dataset from metadata and diff");
    std::string v_data;
    ve->add_option("--data", v_data)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(g_env, g_out, g_n, g_tau, g_pred, g_seed, g_world, g_crop, g_grid,
                                g_channels, g_noise_scale, g_obstacles, g_period, g_window,
                                g_strip_h, g_strip_w, g_image, g_rate, g_wall_keep, g_verify);
        if (tr->parsed())
            return cmd_train(config_from_options(t_preset, t_config, t_sets), t_data, t_out,
                             t_resume, t_gcf, t_updates);
        if (pr->parsed()) return cmd_predict(p_ckpt, p_data, p_episode, p_horizon, p_out);
        if (ev->parsed()) return cmd_eval(e_pred, e_data, e_episode, e_train_data, e_out);
        if (re->parsed()) return cmd_render(r_pred, r_data, r_episode, r_cols, r_out);
        if (gc->parsed())
            return cmd_gradcheck(config_from_options(c_preset, c_config, c_sets), c_eps, c_tol,
                                 c_max, c_keep);
        if (ve->parsed()) return cmd_verify(v_data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
