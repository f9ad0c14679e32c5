#include "gtmsm/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gtmsm {

namespace {

constexpr int kCkptVersion = 1;

void append_array(std::vector<uint8_t>& out, const Tensor& t, bool f32) {
    for (int64_t i = 0; i < t.size(); ++i) {
        if (f32) {
            float f = static_cast<float>(t[i]);
            uint32_t u;
            std::memcpy(&u, &f, 4);
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<uint8_t>(u >> (8 * b)));
        } else {
            double d = t[i];
            uint64_t u;
            std::memcpy(&u, &d, 8);
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<uint8_t>(u >> (8 * b)));
        }
    }
}

void read_array(const std::vector<uint8_t>& in, size_t& off, Tensor& t, bool f32) {
    size_t width = f32 ? 4 : 8;
    if (off + width * static_cast<size_t>(t.size()) > in.size())
        throw std::runtime_error("checkpoint: truncated array data");
    for (int64_t i = 0; i < t.size(); ++i) {
        if (f32) {
            uint32_t u = 0;
            for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(in[off + b]) << (8 * b);
            float f;
            std::memcpy(&f, &u, 4);
            t[i] = static_cast<double>(f);
            off += 4;
        } else {
            uint64_t u = 0;
            for (int b = 0; b < 8; ++b) u |= static_cast<uint64_t>(in[off + b]) << (8 * b);
            double d;
            std::memcpy(&d, &u, 8);
            t[i] = d;
            off += 8;
        }
    }
}

std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
}

} // namespace

void save_checkpoint(const std::string& dir, const Model& m, const AdamState& adam,
                     int64_t update) {
    fs::create_directories(dir);
    bool f32 = m.cfg.precision_tag() == Precision::f32;

    json groups = json::array();
    std::vector<uint8_t> params_bin, adam_bin;
    for (size_t i = 0; i < m.params.size(); ++i) {
        const ParamGroup& g = m.params.group(static_cast<int>(i));
        json e;
        e["name"] = g.name;
        e["shape"] = g.value.shape();
        groups.push_back(std::move(e));
        append_array(params_bin, g.value, f32);
        append_array(adam_bin, adam.m[i], f32);
        append_array(adam_bin, adam.v[i], f32);
    }

    json man;
    man["format_version"] = kCkptVersion;
    man["config_hash"] = m.cfg.hash();
    man["config"] = m.cfg.canonical();
    man["update"] = update;
    man["adam_step"] = adam.step;
    man["dtype"] = f32 ? "f32le" : "f64le";
    man["groups"] = std::move(groups);

    {
        std::ofstream os(fs::path(dir) / "manifest.json");
        if (!os) throw std::runtime_error("checkpoint: cannot write manifest in '" + dir + "'");
        os << man.dump(2) << "\n";
    }
    for (auto [name, data] : {std::pair{"params.bin", &params_bin}, {"adam.bin", &adam_bin}}) {
        std::ofstream os(fs::path(dir) / name, std::ios::binary);
        if (!os) throw std::runtime_error("checkpoint: cannot write arrays in '" + dir + "'");
        os.write(reinterpret_cast<const char*>(data->data()),
                 static_cast<std::streamsize>(data->size()));
    }
}

RunConfig checkpoint_config(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("checkpoint: no manifest.json in '" + dir + "'");
    json man = json::parse(is);
    int version = man.at("format_version").get<int>();
    if (version != kCkptVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    return RunConfig::from_text(man.at("config").get<std::string>());
}

int64_t load_checkpoint_into(const std::string& dir, Model& m, AdamState& adam) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("checkpoint: no manifest.json in '" + dir + "'");
    json man = json::parse(is);
    int version = man.at("format_version").get<int>();
    if (version != kCkptVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    if (man.at("config_hash").get<std::string>() != m.cfg.hash())
        throw std::runtime_error("checkpoint: config hash mismatch (checkpoint " +
                                 man.at("config_hash").get<std::string>() + ", model " +
                                 m.cfg.hash() + ")");

    bool f32 = man.at("dtype").get<std::string>() == "f32le";
    const json& groups = man.at("groups");
    if (groups.size() != m.params.size())
        throw std::runtime_error("checkpoint: parameter group count mismatch");

    std::vector<uint8_t> params_bin = slurp((fs::path(dir) / "params.bin").string());
    std::vector<uint8_t> adam_bin = slurp((fs::path(dir) / "adam.bin").string());
    if (!adam.matches(m.params)) adam = AdamState::init(m.params);

    size_t poff = 0, aoff = 0;
    for (size_t i = 0; i < m.params.size(); ++i) {
        ParamGroup& g = m.params.group(static_cast<int>(i));
        if (groups[i].at("name").get<std::string>() != g.name)
            throw std::runtime_error("checkpoint: group order mismatch at '" + g.name + "'");
        if (groups[i].at("shape").get<std::vector<int>>() != g.value.shape())
            throw std::runtime_error("checkpoint: shape mismatch for '" + g.name + "'");
        read_array(params_bin, poff, g.value, f32);
        read_array(adam_bin, aoff, adam.m[i], f32);
        read_array(adam_bin, aoff, adam.v[i], f32);
        g.value.round_to_precision();
        adam.m[i].round_to_precision();
        adam.v[i].round_to_precision();
    }
    adam.step = man.at("adam_step").get<int64_t>();
    return man.at("update").get<int64_t>();
}

} // namespace gtmsm
