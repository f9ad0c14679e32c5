#include "gtmsm/checkpoint.hpp"
#include "gtmsm/config.hpp"
#include "gtmsm/train.hpp"
#include "toy.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

using namespace gtmsm;
using namespace gtmsm::testutil;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}
} // namespace

TEST_CASE("config round-trips through its canonical text") {
    RunConfig a = preset_config("panorama");
    a.set("z_dim", "11");
    a.set("landmark", "true");
    RunConfig b = RunConfig::from_text(a.canonical());
    CHECK(b.canonical() == a.canonical());
    CHECK(b.hash() == a.hash());
    CHECK(b.z_dim == 11);
    CHECK(b.landmark);

    a.set("delta", "0.001");
    CHECK(a.hash() != b.hash());
}

TEST_CASE("config files accept comments and reject junk") {
    RunConfig c = RunConfig::from_text("# comment\n  tau = 9\n\nk = 3\n");
    CHECK(c.tau == 9);
    CHECK(c.k == 3);
    CHECK_THROWS_AS(RunConfig::from_text("nonsense_key = 1\n"), std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_text("tau 9\n"), std::invalid_argument);
}

TEST_CASE("config validation catches inconsistent combinations") {
    RunConfig c = preset_config("imagenav-small");
    c.variant = TransitionVariant::rotational;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);

    RunConfig d = preset_config("imagenav-small");
    d.metric = "angular";
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);

    RunConfig e = preset_config("imagenav-small");
    e.disp_loss = true;
    CHECK_THROWS_AS(e.validate(), std::invalid_argument);

    RunConfig f = preset_config("momentum");
    f.validate(); // momentum with displacement loss is fine

    RunConfig g = preset_config("panorama");
    g.env.obstacles = true;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("checkpoints restore bit-identical model behaviour") {
    RunConfig cfg = toy_config(TransitionVariant::walled);
    Model m = build_model(cfg);
    AdamState adam = AdamState::init(m.params);

    ToyData data(cfg, "gtmsm_ckpt_probe", 2);
    Dataset d = data.open();
    Episode probe = d.episode(0);
    probe.tau = cfg.tau;
    double before = episode_objective(m, probe, RngStream::root(55));

    fs::path dir = fs::temp_directory_path() / "gtmsm_ckpt_a";
    fs::remove_all(dir);
    save_checkpoint(dir.string(), m, adam, 17);

    Model fresh = build_model(cfg);
    AdamState fresh_adam = AdamState::init(fresh.params);
    // Perturb, then restore.
    fresh.params.group(0).value.fill(123.0);
    int64_t update = load_checkpoint_into(dir.string(), fresh, fresh_adam);
    CHECK(update == 17);
    double after = episode_objective(fresh, probe, RngStream::root(55));
    CHECK(after == before); // bit-exact on the probe episode

    // save -> load -> save is byte-idempotent.
    fs::path dir2 = fs::temp_directory_path() / "gtmsm_ckpt_b";
    fs::remove_all(dir2);
    save_checkpoint(dir2.string(), fresh, fresh_adam, 17);
    CHECK(slurp(dir / "params.bin") == slurp(dir2 / "params.bin"));
    CHECK(slurp(dir / "adam.bin") == slurp(dir2 / "adam.bin"));
    CHECK(slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json"));

    // Config-hash mismatches are rejected.
    RunConfig other_cfg = toy_config(TransitionVariant::walled);
    other_cfg.z_dim = 5;
    Model other = build_model(other_cfg);
    AdamState oa = AdamState::init(other.params);
    CHECK_THROWS_AS(load_checkpoint_into(dir.string(), other, oa), std::runtime_error);

    // The embedded config rebuilds the model standalone.
    RunConfig embedded = checkpoint_config(dir.string());
    CHECK(embedded.hash() == cfg.hash());

    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("unknown checkpoint versions are rejected") {
    fs::path dir = fs::temp_directory_path() / "gtmsm_ckpt_ver";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "manifest.json");
        os << "{\"format_version\": 99}\n";
    }
    RunConfig cfg = toy_config(TransitionVariant::walled);
    Model m = build_model(cfg);
    AdamState adam = AdamState::init(m.params);
    CHECK_THROWS_AS(load_checkpoint_into(dir.string(), m, adam), std::runtime_error);
    CHECK_THROWS_AS(checkpoint_config(dir.string()), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("training runs, logs, checkpoints, and resumes identically") {
    RunConfig cfg = toy_config(TransitionVariant::walled);
    cfg.precision = "f32";
    cfg.updates = 6;
    cfg.ckpt_every = 3;

    ToyData data(cfg, "gtmsm_train_toy", 3);
    Dataset d = data.open();

    fs::path out_a = fs::temp_directory_path() / "gtmsm_train_a";
    fs::remove_all(out_a);
    Model a = build_model(cfg);
    TrainOptions opt_a;
    opt_a.out_dir = out_a.string();
    opt_a.quiet = true;
    TrainResult res_a = train(a, d, opt_a);
    CHECK(res_a.updates_done == 6);
    CHECK(!res_a.aborted_nan);
    CHECK(fs::exists(out_a / "metrics.log"));
    CHECK(fs::exists(out_a / "ckpt_6"));

    // metrics.log carries one line per update plus the header.
    std::ifstream log(out_a / "metrics.log");
    int lines = 0;
    std::string line;
    while (std::getline(log, line)) ++lines;
    CHECK(lines == 7);

    // Stop at 3 and resume to 6: parameters must match the straight run.
    fs::path out_b = fs::temp_directory_path() / "gtmsm_train_b";
    fs::remove_all(out_b);
    Model b1 = build_model(cfg);
    TrainOptions opt_b;
    opt_b.out_dir = out_b.string();
    opt_b.quiet = true;
    opt_b.updates_override = 3;
    train(b1, d, opt_b);

    Model b2 = build_model(cfg);
    TrainOptions opt_b2;
    opt_b2.out_dir = out_b.string();
    opt_b2.quiet = true;
    opt_b2.resume_ckpt = (out_b / "ckpt_3").string();
    train(b2, d, opt_b2);

    for (size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params.group(static_cast<int>(i)).value.to_vector() ==
              b2.params.group(static_cast<int>(i)).value.to_vector());

    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

TEST_CASE("threaded batches reproduce the single-threaded run exactly") {
    RunConfig cfg = toy_config(TransitionVariant::walled);
    cfg.precision = "f32";
    cfg.updates = 3;
    cfg.batch = 4;

    ToyData data(cfg, "gtmsm_train_threads", 3);
    Dataset d = data.open();

    auto run_with = [&](int threads) {
        RunConfig c = cfg;
        c.threads = threads;
        Model m = build_model(c);
        fs::path out = fs::temp_directory_path() / ("gtmsm_thr_" + std::to_string(threads));
        fs::remove_all(out);
        TrainOptions opt;
        opt.out_dir = out.string();
        opt.quiet = true;
        train(m, d, opt);
        fs::remove_all(out);
        std::vector<std::vector<double>> vals;
        for (size_t i = 0; i < m.params.size(); ++i)
            vals.push_back(m.params.group(static_cast<int>(i)).value.to_vector());
        return vals;
    };
    CHECK(run_with(1) == run_with(2));
}
