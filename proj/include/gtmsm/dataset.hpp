// Trajectory dataset container: a directory with manifest.json and raw
// little-endian per-sequence files (frames u8, actions u8, positions f32,
// displacements f32). Every sequence is regenerable from its recorded seeds.
#pragma once

#include "gtmsm/env.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gtmsm {

struct EnvConfig {
    EnvKind kind = EnvKind::image_nav;
    int world_size = 16;
    int crop = 4;
    int positions_per_dim = 5;
    int channels = 1;
    int noise_scale = 4;
    double wall_bump_keep = 0.25; // image-nav data policy: P(keep a wall bump)
    bool obstacles = false;
    int period = 41;
    int window = 16;
    int strip_height = 16;
    int strip_width = 82;
    std::vector<std::vector<double>> m_true; // momentum truth; defaults when empty
    std::vector<double> c_f_true;
    std::vector<double> c_s_true;
    std::string image_path; // fixed world image instead of procedural noise
    PolicySpec policy;      // panorama defaults to constant rotate-right

    void apply_defaults();
};

std::unique_ptr<Env> build_env(const EnvConfig& cfg, uint64_t world_seed,
                               std::vector<ObstacleRect>* out_obstacles = nullptr);

struct SequenceMeta {
    uint64_t world_seed = 0;
    uint64_t traj_seed = 0;
    std::vector<float> start;
    std::vector<ObstacleRect> obstacles;
};

struct Episode {
    std::vector<std::vector<float>> frames;
    std::vector<uint8_t> actions;
    std::vector<std::vector<float>> positions;
    std::vector<std::vector<float>> displacements;
    std::vector<float> start;
    std::vector<ObstacleRect> obstacles;
    int tau = 0;

    int steps() const { return static_cast<int>(frames.size()); }
    int pred_len() const { return steps() - tau; }
};

class Dataset {
public:
    static void generate(const EnvConfig& cfg, const std::string& dir, int num_sequences,
                         int tau, int pred_len, uint64_t seed);

    static Dataset open(const std::string& dir);

    size_t size() const { return sequences_.size(); }
    int tau() const { return tau_; }
    int pred_len() const { return pred_len_; }
    int steps() const { return tau_ + pred_len_; }
    const EnvConfig& env_config() const { return env_cfg_; }
    std::array<int, 3> frame_shape() const { return frame_shape_; }
    int frame_dim() const { return frame_shape_[0] * frame_shape_[1] * frame_shape_[2]; }
    int pos_dim() const { return pos_dim_; }
    int disp_dim() const { return disp_dim_; }
    int action_count() const { return action_count_; }
    const SequenceMeta& sequence_meta(size_t i) const { return sequences_[i]; }

    Episode episode(size_t i) const;

    // Re-derives every sequence from its metadata and compares byte-for-byte
    // with the stored files. Returns the number of mismatching sequences.
    int verify(std::string* first_error = nullptr) const;

private:
    std::string dir_;
    EnvConfig env_cfg_;
    int tau_ = 0, pred_len_ = 0;
    std::array<int, 3> frame_shape_{0, 0, 0};
    int pos_dim_ = 0, disp_dim_ = 0, action_count_ = 0;
    std::vector<SequenceMeta> sequences_;
};

// Observation bytes as stored on disk (u8, pixel = byte / 255).
std::vector<uint8_t> quantize_frames(const std::vector<std::vector<float>>& frames);

} // namespace gtmsm
