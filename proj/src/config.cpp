#include "gtmsm/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gtmsm {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean '" + v + "'");
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string join_matrix(const std::vector<std::vector<double>>& m) {
    std::string out;
    for (size_t r = 0; r < m.size(); ++r) {
        if (r) out += ";";
        for (size_t c = 0; c < m[r].size(); ++c) {
            if (c) out += ",";
            out += fmt_double(m[r][c]);
        }
    }
    return out;
}

std::vector<std::vector<double>> parse_matrix(const std::string& s) {
    std::vector<std::vector<double>> out;
    if (s.empty()) return out;
    std::stringstream rows(s);
    std::string row;
    while (std::getline(rows, row, ';')) {
        std::vector<double> vals;
        std::stringstream cols(row);
        std::string v;
        while (std::getline(cols, v, ',')) vals.push_back(std::stod(v));
        out.push_back(std::move(vals));
    }
    return out;
}

std::string join_vec(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

std::vector<double> parse_vec(const std::string& s) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string v;
    while (std::getline(ss, v, ',')) out.push_back(std::stod(v));
    return out;
}

} // namespace

Precision RunConfig::precision_tag() const {
    if (precision == "f32") return Precision::f32;
    if (precision == "f64") return Precision::f64;
    throw std::invalid_argument("config: precision must be f32 or f64");
}

int RunConfig::state_dim() const {
    return (variant == TransitionVariant::linear || variant == TransitionVariant::walled) ? 2 : 3;
}

DistanceMetric RunConfig::distance_metric() const {
    std::string m = metric;
    if (m == "auto") m = state_dim() == 2 ? "euclidean" : "angular";
    DistanceMetric dm;
    if (m == "euclidean") {
        dm.kind = MetricKind::euclidean;
    } else if (m == "angular") {
        dm.kind = MetricKind::angular;
    } else if (m == "angular-linear") {
        dm.kind = MetricKind::angular_linear;
        dm.embed_matrix = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    } else {
        throw std::invalid_argument("config: unknown metric '" + metric + "'");
    }
    return dm;
}

std::array<int, 3> RunConfig::frame_shape() const {
    switch (env.kind) {
        case EnvKind::image_nav:
        case EnvKind::momentum:
            return {env.channels, env.crop, env.crop};
        case EnvKind::panorama:
            return {env.channels, env.strip_height, env.window};
    }
    throw std::logic_error("config: unknown env kind");
}

void RunConfig::validate() const {
    switch (env.kind) {
        case EnvKind::image_nav:
            if (variant != TransitionVariant::linear && variant != TransitionVariant::walled)
                throw std::invalid_argument("config: image-nav needs the linear or walled variant");
            break;
        case EnvKind::panorama:
            if (variant != TransitionVariant::rotational)
                throw std::invalid_argument("config: panorama needs the rotational variant");
            break;
        case EnvKind::momentum:
            if (variant != TransitionVariant::momentum)
                throw std::invalid_argument("config: momentum env needs the momentum variant");
            break;
    }
    if (env.obstacles && env.kind != EnvKind::image_nav)
        throw std::invalid_argument("config: obstacles are an image-nav feature");
    if (tau < 1) throw std::invalid_argument("config: tau must be >= 1");
    if (pred_train < 0 || pred_test < 0) throw std::invalid_argument("config: negative horizon");
    if (k < 1 || k_prime < 1) throw std::invalid_argument("config: k and k_prime must be >= 1");
    if (delta <= 0.0) throw std::invalid_argument("config: delta must be positive");
    if (r <= 0.0) throw std::invalid_argument("config: r must be positive");
    if (z_dim < 1 || enc_hidden < 1 || gate_hidden < 1 || beta_hidden < 1 || sigma_hidden < 1)
        throw std::invalid_argument("config: net sizes must be positive");
    if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
    if (kl_warmup < 0) throw std::invalid_argument("config: kl_warmup must be >= 0");
    if (free_bits < 0.0) throw std::invalid_argument("config: free_bits must be >= 0");
    if (z_logvar_min < -10.0 || z_logvar_min >= 10.0)
        throw std::invalid_argument("config: z_logvar_min outside [-10, 10)");
    if (decoder != "gaussian" && decoder != "bernoulli")
        throw std::invalid_argument("config: decoder must be gaussian or bernoulli");
    if (obs_noise <= 0.0) throw std::invalid_argument("config: obs_noise must be positive");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    if (disp_loss && variant != TransitionVariant::momentum)
        throw std::invalid_argument("config: the displacement loss applies to the momentum variant only");
    auto m = metric;
    if (m != "auto" && m != "euclidean" && m != "angular" && m != "angular-linear")
        throw std::invalid_argument("config: unknown metric '" + metric + "'");
    if ((m == "angular" || m == "angular-linear") && state_dim() != 3)
        throw std::invalid_argument("config: angular metrics need a 3-dim state");
    precision_tag();
}

std::string RunConfig::canonical() const {
    std::map<std::string, std::string> kv;
    kv["env.kind"] = env_kind_name(env.kind);
    kv["env.world_size"] = std::to_string(env.world_size);
    kv["env.crop"] = std::to_string(env.crop);
    kv["env.positions_per_dim"] = std::to_string(env.positions_per_dim);
    kv["env.channels"] = std::to_string(env.channels);
    kv["env.noise_scale"] = std::to_string(env.noise_scale);
    kv["env.wall_bump_keep"] = fmt_double(env.wall_bump_keep);
    kv["env.obstacles"] = fmt_bool(env.obstacles);
    kv["env.period"] = std::to_string(env.period);
    kv["env.window"] = std::to_string(env.window);
    kv["env.strip_height"] = std::to_string(env.strip_height);
    kv["env.strip_width"] = std::to_string(env.strip_width);
    kv["env.m_true"] = join_matrix(env.m_true);
    kv["env.c_f_true"] = join_vec(env.c_f_true);
    kv["env.c_s_true"] = join_vec(env.c_s_true);
    kv["env.image_path"] = env.image_path;
    kv["env.policy"] =
        env.policy.kind == PolicySpec::Kind::poisson_uniform ? "poisson" : "constant";
    kv["env.repeat_rate"] = fmt_double(env.policy.repeat_rate);
    kv["env.constant_action"] = std::to_string(env.policy.constant_action);

    kv["variant"] = transition_variant_name(variant);
    kv["metric"] = metric;
    kv["tau"] = std::to_string(tau);
    kv["pred_train"] = std::to_string(pred_train);
    kv["pred_test"] = std::to_string(pred_test);
    kv["k"] = std::to_string(k);
    kv["k_prime"] = std::to_string(k_prime);
    kv["delta"] = fmt_double(delta);
    kv["r"] = fmt_double(r);
    kv["z_dim"] = std::to_string(z_dim);
    kv["enc_hidden"] = std::to_string(enc_hidden);
    kv["gate_hidden"] = std::to_string(gate_hidden);
    kv["beta_hidden"] = std::to_string(beta_hidden);
    kv["sigma_hidden"] = std::to_string(sigma_hidden);
    kv["landmark"] = fmt_bool(landmark);
    kv["disp_loss"] = fmt_bool(disp_loss);
    kv["disp_weight"] = fmt_double(disp_weight);
    kv["conv_vae"] = fmt_bool(conv_vae);
    kv["decoder"] = decoder;
    kv["obs_noise"] = fmt_double(obs_noise);
    kv["sample_generation"] = fmt_bool(sample_generation);
    kv["gate_per_dim"] = fmt_bool(gate_per_dim);
    kv["precision"] = precision;

    kv["lr_start"] = fmt_double(lr_start);
    kv["lr_end"] = fmt_double(lr_end);
    kv["anneal_updates"] = std::to_string(anneal_updates);
    kv["kl_warmup"] = std::to_string(kl_warmup);
    kv["free_bits"] = fmt_double(free_bits);
    kv["z_logvar_min"] = fmt_double(z_logvar_min);
    kv["adam_beta1"] = fmt_double(adam_beta1);
    kv["adam_beta2"] = fmt_double(adam_beta2);
    kv["adam_eps"] = fmt_double(adam_eps);
    kv["batch"] = std::to_string(batch);
    kv["seed"] = std::to_string(seed);
    // threads, updates, and ckpt_every are runtime choices: they never change
    // the result of any given update, so they stay out of the canonical form
    // and the hash (a checkpoint can be extended or re-scheduled).

    std::string out;
    for (const auto& [k_, v] : kv) out += k_ + " = " + v + "\n";
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "env.kind") env.kind = env_kind_from_name(value);
    else if (key == "env.world_size") env.world_size = std::stoi(value);
    else if (key == "env.crop") env.crop = std::stoi(value);
    else if (key == "env.positions_per_dim") env.positions_per_dim = std::stoi(value);
    else if (key == "env.channels") env.channels = std::stoi(value);
    else if (key == "env.noise_scale") env.noise_scale = std::stoi(value);
    else if (key == "env.wall_bump_keep") env.wall_bump_keep = std::stod(value);
    else if (key == "env.obstacles") env.obstacles = parse_bool(value);
    else if (key == "env.period") env.period = std::stoi(value);
    else if (key == "env.window") env.window = std::stoi(value);
    else if (key == "env.strip_height") env.strip_height = std::stoi(value);
    else if (key == "env.strip_width") env.strip_width = std::stoi(value);
    else if (key == "env.m_true") env.m_true = parse_matrix(value);
    else if (key == "env.c_f_true") env.c_f_true = parse_vec(value);
    else if (key == "env.c_s_true") env.c_s_true = parse_vec(value);
    else if (key == "env.image_path") env.image_path = value;
    else if (key == "env.policy")
        env.policy.kind = value == "poisson" ? PolicySpec::Kind::poisson_uniform
                                             : PolicySpec::Kind::constant;
    else if (key == "env.repeat_rate") env.policy.repeat_rate = std::stod(value);
    else if (key == "env.constant_action") env.policy.constant_action = std::stoi(value);
    else if (key == "variant") variant = transition_variant_from_name(value);
    else if (key == "metric") metric = value;
    else if (key == "tau") tau = std::stoi(value);
    else if (key == "pred_train") pred_train = std::stoi(value);
    else if (key == "pred_test") pred_test = std::stoi(value);
    else if (key == "k") k = std::stoi(value);
    else if (key == "k_prime") k_prime = std::stoi(value);
    else if (key == "delta") delta = std::stod(value);
    else if (key == "r") r = std::stod(value);
    else if (key == "z_dim") z_dim = std::stoi(value);
    else if (key == "enc_hidden") enc_hidden = std::stoi(value);
    else if (key == "gate_hidden") gate_hidden = std::stoi(value);
    else if (key == "beta_hidden") beta_hidden = std::stoi(value);
    else if (key == "sigma_hidden") sigma_hidden = std::stoi(value);
    else if (key == "landmark") landmark = parse_bool(value);
    else if (key == "disp_loss") disp_loss = parse_bool(value);
    else if (key == "disp_weight") disp_weight = std::stod(value);
    else if (key == "conv_vae") conv_vae = parse_bool(value);
    else if (key == "decoder") decoder = value;
    else if (key == "obs_noise") obs_noise = std::stod(value);
    else if (key == "sample_generation") sample_generation = parse_bool(value);
    else if (key == "gate_per_dim") gate_per_dim = parse_bool(value);
    else if (key == "precision") precision = value;
    else if (key == "lr_start") lr_start = std::stod(value);
    else if (key == "lr_end") lr_end = std::stod(value);
    else if (key == "anneal_updates") anneal_updates = std::stoi(value);
    else if (key == "kl_warmup") kl_warmup = std::stoi(value);
    else if (key == "free_bits") free_bits = std::stod(value);
    else if (key == "z_logvar_min") z_logvar_min = std::stod(value);
    else if (key == "adam_beta1") adam_beta1 = std::stod(value);
    else if (key == "adam_beta2") adam_beta2 = std::stod(value);
    else if (key == "adam_eps") adam_eps = std::stod(value);
    else if (key == "batch") batch = std::stoi(value);
    else if (key == "updates") updates = std::stoi(value);
    else if (key == "ckpt_every") ckpt_every = std::stoi(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "threads") threads = std::stoi(value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: malformed line '" + line + "'");
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return from_text(buf.str());
}

std::string RunConfig::hash() const {
    std::string c = canonical();
    uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : c) {
        h ^= static_cast<uint8_t>(ch);
        h *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig preset_config(const std::string& name) {
    RunConfig c;
    if (name == "imagenav-small") {
        c.env.kind = EnvKind::image_nav;
        c.env.world_size = 16;
        c.env.crop = 4;
        c.env.positions_per_dim = 5;
        c.env.channels = 3;
        c.env.noise_scale = 8;
        c.env.wall_bump_keep = 0.05;
        c.variant = TransitionVariant::walled;
        c.tau = 64;
        c.pred_train = 16;
        c.pred_test = 128;
        c.r = 1e-3;
        c.z_dim = 16;
        c.enc_hidden = 64;
        c.batch = 8;
        c.updates = 25000;
        c.anneal_updates = 20000;
        c.kl_warmup = 2000;
        c.ckpt_every = 5000;
    } else if (name == "imagenav-full") {
        c.env.kind = EnvKind::image_nav;
        c.env.world_size = 32;
        c.env.crop = 8;
        c.env.positions_per_dim = 9;
        c.variant = TransitionVariant::walled;
        c.tau = 256;
        c.pred_train = 32;
        c.pred_test = 256;
        c.r = 1e-3;
        c.z_dim = 16;
        c.enc_hidden = 256;
        c.batch = 16;
        c.updates = 50000;
        c.anneal_updates = 50000;
        c.kl_warmup = 2000;
        c.ckpt_every = 5000;
    } else if (name == "imagenav-obstacles") {
        c = preset_config("imagenav-small");
        c.env.obstacles = true;
        c.landmark = true;
        c.updates = 10000;
        c.anneal_updates = 8000;
    } else if (name == "panorama") {
        c.env.kind = EnvKind::panorama;
        c.env.period = 41;
        c.env.window = 16;
        c.env.strip_height = 16;
        c.env.strip_width = 82;
        c.variant = TransitionVariant::rotational;
        c.tau = 33;
        c.pred_train = 16;
        c.pred_test = 44;
        c.r = 1e-2;
        c.z_dim = 16;
        c.enc_hidden = 64;
        c.batch = 8;
        c.updates = 12000;
        c.anneal_updates = 10000;
        c.kl_warmup = 2000;
        c.ckpt_every = 4000;
    } else if (name == "momentum") {
        c.env.kind = EnvKind::momentum;
        c.env.world_size = 32;
        c.env.crop = 8;
        c.env.noise_scale = 8;
        c.variant = TransitionVariant::momentum;
        c.tau = 64;
        c.pred_train = 32;
        c.pred_test = 64;
        c.r = 1e-2;
        c.z_dim = 16;
        c.enc_hidden = 64;
        c.disp_loss = true;
        c.batch = 8;
        c.updates = 12000;
        c.anneal_updates = 10000;
        c.kl_warmup = 2000;
        c.ckpt_every = 4000;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    c.env.apply_defaults();
    return c;
}

} // namespace gtmsm
