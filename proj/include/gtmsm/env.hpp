// Procedural partially-observed 2D environments: image navigation with walls
// and optional obstacles, panoramic rotation, and a momentum walker. Envs are
// immutable after construction; stepping and observing are pure functions.
#pragma once

#include "gtmsm/rng.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gtmsm {

struct WorldImage {
    int h = 0, w = 0, c = 1;
    std::vector<float> pix; // planar CHW, values in [0,1]

    float at(int ch, int y, int x) const {
        return pix[(static_cast<size_t>(ch) * h + y) * w + x];
    }
    float& at(int ch, int y, int x) {
        return pix[(static_cast<size_t>(ch) * h + y) * w + x];
    }
    bool valid() const;
};

// Band-limited smoothed noise, min-max normalized per channel. `scale` is
// the coarse lattice spacing in pixels (the second octave uses scale/2).
WorldImage make_noise_image(int h, int w, int channels, RngStream rng, int scale = 4);

struct AgentState {
    std::vector<double> pos; // grid (x,y) | angle | continuous (x,y,theta)
    std::vector<double> vel; // momentum walker only: agent-frame displacement
};

struct ObstacleRect {
    int x = 0, y = 0, w = 0, h = 0;
    bool contains(int cx, int cy) const { return cx >= x && cx < x + w && cy >= y && cy < y + h; }
};

enum class EnvKind : uint8_t { image_nav, panorama, momentum };

const char* env_kind_name(EnvKind k);
EnvKind env_kind_from_name(const std::string& name);

class Env {
public:
    virtual ~Env() = default;
    virtual EnvKind kind() const = 0;
    virtual int action_count() const = 0;
    virtual std::array<int, 3> frame_shape() const = 0; // (c, h, w)
    virtual int pos_dim() const = 0;
    virtual int disp_dim() const = 0;

    virtual AgentState init_state(RngStream& rng) const = 0;
    virtual AgentState step(const AgentState& s, int action) const = 0;
    virtual std::vector<float> observe(const AgentState& s) const = 0;

    // Achieved per-step displacement, the quantity an agent "feels".
    virtual std::vector<double> displacement(const AgentState& prev,
                                             const AgentState& next) const = 0;

    // Data-generation hook: may replace a sampled action (e.g. to steer away
    // from boundaries). Default keeps the proposal.
    virtual int safe_action(const AgentState&, int proposed, RngStream&) const {
        return proposed;
    }

    int frame_dim() const {
        auto s = frame_shape();
        return s[0] * s[1] * s[2];
    }
};

// Five actions: 0 up, 1 down, 2 left, 3 right, 4 stay. Moves that would leave
// the grid or enter an obstacle leave the position unchanged.
class ImageNavEnv : public Env {
public:
    ImageNavEnv(WorldImage image, int crop, int positions_per_dim,
                std::vector<ObstacleRect> obstacles = {}, double wall_bump_keep = 0.25);

    EnvKind kind() const override { return EnvKind::image_nav; }
    int action_count() const override { return 5; }
    std::array<int, 3> frame_shape() const override { return {image_.c, crop_, crop_}; }
    int pos_dim() const override { return 2; }
    int disp_dim() const override { return 2; }

    AgentState init_state(RngStream& rng) const override;
    AgentState step(const AgentState& s, int action) const override;
    std::vector<float> observe(const AgentState& s) const override;
    std::vector<double> displacement(const AgentState& prev, const AgentState& next) const override;

    // Mostly sidesteps wall bumps while keeping a fraction for training
    // signal; obstacle bumps always go through.
    int safe_action(const AgentState& s, int proposed, RngStream& rng) const override;

    int grid_size() const { return grid_; }
    int stride() const { return stride_; }
    bool blocked(int x, int y) const;
    // True when `action` from (x, y) is stopped by an obstacle (not a wall).
    bool obstacle_blocks(const AgentState& s, int action) const;
    const std::vector<ObstacleRect>& obstacles() const { return obstacles_; }
    const WorldImage& image() const { return image_; }

private:
    WorldImage image_;
    int crop_;
    int grid_;
    int stride_;
    std::vector<ObstacleRect> obstacles_;
    double wall_bump_keep_;
};

// Rejection-samples 1-2 axis-aligned rectangles (side 2..min(4, grid-2))
// keeping the free space connected and nonempty.
std::vector<ObstacleRect> sample_obstacles(RngStream& rng, int grid_size);

// Three actions: 0 rotate-left, 1 rotate-right, 2 stay. The window is `window`
// columns wide, centered by the orientation with circular wrap. Orientations
// are exact multiples of 2*pi/period, so composing `period` rotations is the
// identity.
class PanoramaEnv : public Env {
public:
    PanoramaEnv(WorldImage strip, int window, int period);

    EnvKind kind() const override { return EnvKind::panorama; }
    int action_count() const override { return 3; }
    std::array<int, 3> frame_shape() const override { return {strip_.c, strip_.h, window_}; }
    int pos_dim() const override { return 1; }
    int disp_dim() const override { return 1; }

    AgentState init_state(RngStream& rng) const override;
    AgentState step(const AgentState& s, int action) const override;
    std::vector<float> observe(const AgentState& s) const override;
    std::vector<double> displacement(const AgentState& prev, const AgentState& next) const override;

    int period() const { return period_; }
    const WorldImage& strip() const { return strip_; }

private:
    int orientation_index(double angle) const;

    WorldImage strip_;
    int window_;
    int period_;
};

// Continuous walker with momentum, friction and tanh saturation. State is
// (x, y, theta) in pixel/radian units plus the agent-frame displacement as
// velocity; observations are bilinear crops at (x, y). Five actions:
// 0 forward, 1 backward, 2 turn-left, 3 turn-right, 4 stay.
class MomentumEnv : public Env {
public:
    MomentumEnv(WorldImage image, int crop, std::vector<std::vector<double>> m_true,
                std::vector<double> c_f_true, std::vector<double> c_s_true);

    EnvKind kind() const override { return EnvKind::momentum; }
    int action_count() const override { return static_cast<int>(m_true_[0].size()); }
    std::array<int, 3> frame_shape() const override { return {image_.c, crop_, crop_}; }
    int pos_dim() const override { return 3; }
    int disp_dim() const override { return 3; }

    AgentState init_state(RngStream& rng) const override;
    AgentState step(const AgentState& s, int action) const override;
    std::vector<float> observe(const AgentState& s) const override;
    std::vector<double> displacement(const AgentState& prev, const AgentState& next) const override;
    int safe_action(const AgentState& s, int proposed, RngStream& rng) const override;

    double max_anchor() const { return static_cast<double>(image_.w - crop_); }
    const std::vector<double>& c_s_true() const { return c_s_true_; }
    static std::vector<std::vector<double>> default_m_true();
    static std::vector<double> default_c_f_true();
    static std::vector<double> default_c_s_true();

private:
    WorldImage image_;
    int crop_;
    std::vector<std::vector<double>> m_true_; // 3 x action_count
    std::vector<double> c_f_true_;
    std::vector<double> c_s_true_;
    double margin_;
};

// i.i.d. uniform actions, each held for 1 + Poisson(repeat_rate) steps.
std::vector<uint8_t> sample_policy(RngStream rng, int length, double repeat_rate,
                                   int action_count);

struct PolicySpec {
    enum class Kind : uint8_t { poisson_uniform, constant };
    Kind kind = Kind::poisson_uniform;
    double repeat_rate = 2.0;
    int constant_action = 0;
};

struct Trajectory {
    std::vector<std::vector<float>> frames;        // T x frame_dim, in [0,1]
    std::vector<uint8_t> actions;                  // T
    std::vector<std::vector<float>> positions;     // T x pos_dim
    std::vector<std::vector<float>> displacements; // T x disp_dim
    std::vector<float> start;                      // initial position (pre-action)

    size_t length() const { return frames.size(); }
};

Trajectory generate_trajectory(const Env& env, RngStream rng, int steps,
                               const PolicySpec& policy);

} // namespace gtmsm
