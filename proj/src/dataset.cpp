#include "gtmsm/dataset.hpp"

#include "gtmsm/pixmap.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gtmsm {

namespace {

constexpr int kFormatVersion = 1;

std::string seq_file(const std::string& dir, size_t i, const char* what) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ep%06zu.%s.bin", i, what);
    return (fs::path(dir) / buf).string();
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dataset: cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("dataset: write failed for '" + path + "'");
}

std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open '" + path + "'");
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
}

std::vector<uint8_t> f32le_bytes(const std::vector<std::vector<float>>& rows) {
    std::vector<uint8_t> out;
    for (const auto& row : rows) {
        for (float v : row) {
            uint32_t u;
            std::memcpy(&u, &v, 4);
            out.push_back(static_cast<uint8_t>(u));
            out.push_back(static_cast<uint8_t>(u >> 8));
            out.push_back(static_cast<uint8_t>(u >> 16));
            out.push_back(static_cast<uint8_t>(u >> 24));
        }
    }
    return out;
}

std::vector<std::vector<float>> f32le_rows(const std::vector<uint8_t>& bytes, int row_len) {
    if (row_len <= 0 || bytes.size() % (static_cast<size_t>(row_len) * 4) != 0)
        throw std::runtime_error("dataset: f32 payload size mismatch");
    size_t rows = bytes.size() / (static_cast<size_t>(row_len) * 4);
    std::vector<std::vector<float>> out(rows, std::vector<float>(static_cast<size_t>(row_len)));
    size_t p = 0;
    for (auto& row : out) {
        for (auto& v : row) {
            uint32_t u = static_cast<uint32_t>(bytes[p]) | (static_cast<uint32_t>(bytes[p + 1]) << 8) |
                         (static_cast<uint32_t>(bytes[p + 2]) << 16) |
                         (static_cast<uint32_t>(bytes[p + 3]) << 24);
            std::memcpy(&v, &u, 4);
            p += 4;
        }
    }
    return out;
}

json env_to_json(const EnvConfig& c) {
    json j;
    j["kind"] = env_kind_name(c.kind);
    j["world_size"] = c.world_size;
    j["crop"] = c.crop;
    j["positions_per_dim"] = c.positions_per_dim;
    j["channels"] = c.channels;
    j["noise_scale"] = c.noise_scale;
    j["wall_bump_keep"] = c.wall_bump_keep;
    j["obstacles"] = c.obstacles;
    j["period"] = c.period;
    j["window"] = c.window;
    j["strip_height"] = c.strip_height;
    j["strip_width"] = c.strip_width;
    j["m_true"] = c.m_true;
    j["c_f_true"] = c.c_f_true;
    j["c_s_true"] = c.c_s_true;
    j["image_path"] = c.image_path;
    j["policy_kind"] = c.policy.kind == PolicySpec::Kind::poisson_uniform ? "poisson" : "constant";
    j["policy_repeat_rate"] = c.policy.repeat_rate;
    j["policy_constant_action"] = c.policy.constant_action;
    return j;
}

EnvConfig env_from_json(const json& j) {
    EnvConfig c;
    c.kind = env_kind_from_name(j.at("kind").get<std::string>());
    c.world_size = j.at("world_size").get<int>();
    c.crop = j.at("crop").get<int>();
    c.positions_per_dim = j.at("positions_per_dim").get<int>();
    c.channels = j.at("channels").get<int>();
    c.noise_scale = j.value("noise_scale", 4);
    c.wall_bump_keep = j.value("wall_bump_keep", 0.25);
    c.obstacles = j.at("obstacles").get<bool>();
    c.period = j.at("period").get<int>();
    c.window = j.at("window").get<int>();
    c.strip_height = j.at("strip_height").get<int>();
    c.strip_width = j.at("strip_width").get<int>();
    c.m_true = j.at("m_true").get<std::vector<std::vector<double>>>();
    c.c_f_true = j.at("c_f_true").get<std::vector<double>>();
    c.c_s_true = j.at("c_s_true").get<std::vector<double>>();
    c.image_path = j.at("image_path").get<std::string>();
    c.policy.kind = j.at("policy_kind").get<std::string>() == "poisson"
                        ? PolicySpec::Kind::poisson_uniform
                        : PolicySpec::Kind::constant;
    c.policy.repeat_rate = j.at("policy_repeat_rate").get<double>();
    c.policy.constant_action = j.at("policy_constant_action").get<int>();
    return c;
}

} // namespace

void EnvConfig::apply_defaults() {
    if (kind == EnvKind::momentum) {
        if (m_true.empty()) m_true = MomentumEnv::default_m_true();
        if (c_f_true.empty()) c_f_true = MomentumEnv::default_c_f_true();
        if (c_s_true.empty()) c_s_true = MomentumEnv::default_c_s_true();
    }
    if (kind == EnvKind::panorama && policy.kind == PolicySpec::Kind::poisson_uniform) {
        // The rotation protocol sweeps steadily through the panorama.
        policy.kind = PolicySpec::Kind::constant;
        policy.constant_action = 1; // rotate-right
    }
}

std::unique_ptr<Env> build_env(const EnvConfig& cfg, uint64_t world_seed,
                               std::vector<ObstacleRect>* out_obstacles) {
    RngStream rng = RngStream::root(world_seed);
    auto world = [&](int h, int w) {
        if (!cfg.image_path.empty()) return read_pnm(cfg.image_path);
        return make_noise_image(h, w, cfg.channels, rng.split("image"), cfg.noise_scale);
    };
    switch (cfg.kind) {
        case EnvKind::image_nav: {
            std::vector<ObstacleRect> obs;
            if (cfg.obstacles) {
                RngStream orng = rng.split("obstacles");
                obs = sample_obstacles(orng, cfg.positions_per_dim);
            }
            if (out_obstacles) *out_obstacles = obs;
            return std::make_unique<ImageNavEnv>(world(cfg.world_size, cfg.world_size), cfg.crop,
                                                 cfg.positions_per_dim, obs, cfg.wall_bump_keep);
        }
        case EnvKind::panorama:
            if (out_obstacles) out_obstacles->clear();
            return std::make_unique<PanoramaEnv>(world(cfg.strip_height, cfg.strip_width),
                                                 cfg.window, cfg.period);
        case EnvKind::momentum: {
            if (out_obstacles) out_obstacles->clear();
            EnvConfig c = cfg;
            c.apply_defaults();
            return std::make_unique<MomentumEnv>(world(cfg.world_size, cfg.world_size), cfg.crop,
                                                 c.m_true, c.c_f_true, c.c_s_true);
        }
    }
    throw std::logic_error("build_env: unknown kind");
}

std::vector<uint8_t> quantize_frames(const std::vector<std::vector<float>>& frames) {
    std::vector<uint8_t> out;
    for (const auto& f : frames)
        for (float v : f)
            out.push_back(static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    return out;
}

void Dataset::generate(const EnvConfig& cfg_in, const std::string& dir, int num_sequences,
                       int tau, int pred_len, uint64_t seed) {
    if (tau < 1 || pred_len < 1)
        throw std::invalid_argument("dataset: tau and pred_len must be >= 1");
    if (num_sequences < 0) throw std::invalid_argument("dataset: negative sequence count");
    EnvConfig cfg = cfg_in;
    cfg.apply_defaults();

    fs::create_directories(dir);
    int steps = tau + pred_len;
    RngStream root = RngStream::root(seed);

    json seqs = json::array();
    std::array<int, 3> frame_shape{0, 0, 0};
    int pos_dim = 0, disp_dim = 0, action_count = 0;
    for (int i = 0; i < num_sequences; ++i) {
        RngStream lane = root.split(static_cast<uint64_t>(i));
        uint64_t world_seed = lane.split("world").next_u64();
        uint64_t traj_seed = lane.split("traj").next_u64();

        std::vector<ObstacleRect> obstacles;
        std::unique_ptr<Env> env = build_env(cfg, world_seed, &obstacles);
        frame_shape = env->frame_shape();
        pos_dim = env->pos_dim();
        disp_dim = env->disp_dim();
        action_count = env->action_count();

        Trajectory traj = generate_trajectory(*env, RngStream::root(traj_seed), steps, cfg.policy);

        write_bytes(seq_file(dir, static_cast<size_t>(i), "frames"), quantize_frames(traj.frames));
        write_bytes(seq_file(dir, static_cast<size_t>(i), "actions"), traj.actions);
        write_bytes(seq_file(dir, static_cast<size_t>(i), "positions"), f32le_bytes(traj.positions));
        write_bytes(seq_file(dir, static_cast<size_t>(i), "displacements"),
                    f32le_bytes(traj.displacements));

        json s;
        s["world_seed"] = world_seed;
        s["traj_seed"] = traj_seed;
        s["start"] = traj.start;
        json obs = json::array();
        for (const auto& r : obstacles) obs.push_back({r.x, r.y, r.w, r.h});
        s["obstacles"] = obs;
        seqs.push_back(std::move(s));
    }

    if (num_sequences == 0) {
        // Shapes still need to be derivable for an empty dataset.
        std::unique_ptr<Env> env = build_env(cfg, root.split("probe").next_u64(), nullptr);
        frame_shape = env->frame_shape();
        pos_dim = env->pos_dim();
        disp_dim = env->disp_dim();
        action_count = env->action_count();
    }

    json m;
    m["format_version"] = kFormatVersion;
    m["env"] = env_to_json(cfg);
    m["tau"] = tau;
    m["pred_len"] = pred_len;
    m["steps"] = steps;
    m["num_sequences"] = num_sequences;
    m["frame_shape"] = frame_shape;
    m["pos_dim"] = pos_dim;
    m["disp_dim"] = disp_dim;
    m["action_count"] = action_count;
    m["seed"] = seed;
    m["dtypes"] = {{"frames", "u8"}, {"actions", "u8"}, {"positions", "f32le"},
                   {"displacements", "f32le"}};
    m["layout"] = "per sequence: frames = steps*c*h*w bytes (CHW row-major per step, pixel = "
                  "byte/255), actions = steps bytes, positions = steps*pos_dim f32 LE, "
                  "displacements = steps*disp_dim f32 LE";
    m["sequences"] = std::move(seqs);

    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) throw std::runtime_error("dataset: cannot write manifest in '" + dir + "'");
    os << m.dump(2) << "\n";
}

Dataset Dataset::open(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("dataset: no manifest.json in '" + dir + "'");
    json m = json::parse(is);
    int version = m.at("format_version").get<int>();
    if (version != kFormatVersion)
        throw std::runtime_error("dataset: unsupported format version " + std::to_string(version));

    Dataset d;
    d.dir_ = dir;
    d.env_cfg_ = env_from_json(m.at("env"));
    d.tau_ = m.at("tau").get<int>();
    d.pred_len_ = m.at("pred_len").get<int>();
    auto fs_ = m.at("frame_shape").get<std::vector<int>>();
    d.frame_shape_ = {fs_[0], fs_[1], fs_[2]};
    d.pos_dim_ = m.at("pos_dim").get<int>();
    d.disp_dim_ = m.at("disp_dim").get<int>();
    d.action_count_ = m.at("action_count").get<int>();
    for (const auto& s : m.at("sequences")) {
        SequenceMeta sm;
        sm.world_seed = s.at("world_seed").get<uint64_t>();
        sm.traj_seed = s.at("traj_seed").get<uint64_t>();
        sm.start = s.at("start").get<std::vector<float>>();
        for (const auto& r : s.at("obstacles"))
            sm.obstacles.push_back(ObstacleRect{r[0].get<int>(), r[1].get<int>(), r[2].get<int>(),
                                                r[3].get<int>()});
        d.sequences_.push_back(std::move(sm));
    }
    return d;
}

Episode Dataset::episode(size_t i) const {
    if (i >= sequences_.size()) throw std::out_of_range("dataset: episode index out of range");
    int n_steps = steps();
    int fd = frame_dim();

    Episode ep;
    ep.tau = tau_;
    ep.start = sequences_[i].start;
    ep.obstacles = sequences_[i].obstacles;

    std::vector<uint8_t> fb = read_bytes(seq_file(dir_, i, "frames"));
    if (fb.size() != static_cast<size_t>(n_steps) * fd)
        throw std::runtime_error("dataset: frames payload size mismatch");
    ep.frames.assign(static_cast<size_t>(n_steps), std::vector<float>(static_cast<size_t>(fd)));
    for (int t = 0; t < n_steps; ++t)
        for (int p = 0; p < fd; ++p)
            ep.frames[static_cast<size_t>(t)][static_cast<size_t>(p)] =
                static_cast<float>(fb[static_cast<size_t>(t) * fd + p]) / 255.0f;

    ep.actions = read_bytes(seq_file(dir_, i, "actions"));
    if (ep.actions.size() != static_cast<size_t>(n_steps))
        throw std::runtime_error("dataset: actions payload size mismatch");
    ep.positions = f32le_rows(read_bytes(seq_file(dir_, i, "positions")), pos_dim_);
    ep.displacements = f32le_rows(read_bytes(seq_file(dir_, i, "displacements")), disp_dim_);
    if (ep.positions.size() != static_cast<size_t>(n_steps) ||
        ep.displacements.size() != static_cast<size_t>(n_steps))
        throw std::runtime_error("dataset: position/displacement length mismatch");
    return ep;
}

int Dataset::verify(std::string* first_error) const {
    int bad = 0;
    for (size_t i = 0; i < sequences_.size(); ++i) {
        const SequenceMeta& sm = sequences_[i];
        std::unique_ptr<Env> env = build_env(env_cfg_, sm.world_seed, nullptr);
        Trajectory traj =
            generate_trajectory(*env, RngStream::root(sm.traj_seed), steps(), env_cfg_.policy);
        bool ok = quantize_frames(traj.frames) == read_bytes(seq_file(dir_, i, "frames")) &&
                  traj.actions == read_bytes(seq_file(dir_, i, "actions")) &&
                  f32le_bytes(traj.positions) == read_bytes(seq_file(dir_, i, "positions")) &&
                  f32le_bytes(traj.displacements) ==
                      read_bytes(seq_file(dir_, i, "displacements"));
        if (!ok) {
            ++bad;
            if (first_error && first_error->empty())
                *first_error = "sequence " + std::to_string(i) + " does not regenerate";
        }
    }
    return bad;
}

} // namespace gtmsm
