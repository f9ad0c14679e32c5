#include "gtmsm/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtmsm {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    return a;
}
} // namespace

bool WorldImage::valid() const {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3)) return false;
    if (pix.size() != static_cast<size_t>(c) * h * w) return false;
    for (float v : pix)
        if (!(v >= 0.0f && v <= 1.0f)) return false;
    return true;
}

const char* env_kind_name(EnvKind k) {
    switch (k) {
        case EnvKind::image_nav: return "image-nav";
        case EnvKind::panorama: return "panorama";
        case EnvKind::momentum: return "momentum";
    }
    return "?";
}

EnvKind env_kind_from_name(const std::string& name) {
    if (name == "image-nav") return EnvKind::image_nav;
    if (name == "panorama") return EnvKind::panorama;
    if (name == "momentum") return EnvKind::momentum;
    throw std::invalid_argument("unknown env kind '" + name + "'");
}

WorldImage make_noise_image(int h, int w, int channels, RngStream rng, int scale) {
    if (h <= 0 || w <= 0 || (channels != 1 && channels != 3))
        throw std::invalid_argument("noise image: bad dimensions");
    if (scale < 2) throw std::invalid_argument("noise image: scale must be >= 2");
    WorldImage img;
    img.h = h;
    img.w = w;
    img.c = channels;
    img.pix.assign(static_cast<size_t>(channels) * h * w, 0.0f);

    auto octave = [&](int spacing, RngStream r, std::vector<double>& out) {
        int gy = h / spacing + 2, gx = w / spacing + 2;
        std::vector<double> lattice(static_cast<size_t>(gy) * gx);
        for (auto& v : lattice) v = r.uniform();
        for (int y = 0; y < h; ++y) {
            double fy = static_cast<double>(y) / spacing;
            int y0 = static_cast<int>(fy);
            double ty = fy - y0;
            for (int x = 0; x < w; ++x) {
                double fx = static_cast<double>(x) / spacing;
                int x0 = static_cast<int>(fx);
                double tx = fx - x0;
                double v00 = lattice[static_cast<size_t>(y0) * gx + x0];
                double v01 = lattice[static_cast<size_t>(y0) * gx + x0 + 1];
                double v10 = lattice[static_cast<size_t>(y0 + 1) * gx + x0];
                double v11 = lattice[static_cast<size_t>(y0 + 1) * gx + x0 + 1];
                out[static_cast<size_t>(y) * w + x] =
                    (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
            }
        }
    };

    std::vector<double> coarse(static_cast<size_t>(h) * w), fine(static_cast<size_t>(h) * w);
    for (int ch = 0; ch < channels; ++ch) {
        octave(scale, rng.split(static_cast<uint64_t>(ch) * 2), coarse);
        octave(std::max(2, scale / 2), rng.split(static_cast<uint64_t>(ch) * 2 + 1), fine);
        double lo = 1e30, hi = -1e30;
        std::vector<double> mix(static_cast<size_t>(h) * w);
        for (size_t i = 0; i < mix.size(); ++i) {
            mix[i] = 0.65 * coarse[i] + 0.35 * fine[i];
            lo = std::min(lo, mix[i]);
            hi = std::max(hi, mix[i]);
        }
        double range = hi - lo;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(ch, y, x) = range > 1e-12
                                       ? static_cast<float>((mix[static_cast<size_t>(y) * w + x] - lo) / range)
                                       : 0.5f;
    }
    return img;
}

// ---------------------------------------------------------------------------
// ImageNavEnv
// ---------------------------------------------------------------------------

ImageNavEnv::ImageNavEnv(WorldImage image, int crop, int positions_per_dim,
                         std::vector<ObstacleRect> obstacles, double wall_bump_keep)
    : image_(std::move(image)), crop_(crop), grid_(positions_per_dim),
      obstacles_(std::move(obstacles)), wall_bump_keep_(wall_bump_keep) {
    if (wall_bump_keep_ < 0.0 || wall_bump_keep_ > 1.0)
        throw std::invalid_argument("image-nav: wall_bump_keep must be in [0,1]");
    if (!image_.valid()) throw std::invalid_argument("image-nav: invalid world image");
    if (image_.h != image_.w) throw std::invalid_argument("image-nav: world image must be square");
    if (crop_ <= 0 || crop_ > image_.w) throw std::invalid_argument("image-nav: crop larger than image");
    if (grid_ < 1) throw std::invalid_argument("image-nav: positions_per_dim must be >= 1");
    if (grid_ == 1) {
        if (crop_ != image_.w)
            throw std::invalid_argument("image-nav: single position requires crop == image size");
        stride_ = 0;
    } else {
        int span = image_.w - crop_;
        if (span <= 0 || span % (grid_ - 1) != 0)
            throw std::invalid_argument("image-nav: stride (" + std::to_string(span) + "/" +
                                        std::to_string(grid_ - 1) + ") is not a positive integer");
        stride_ = span / (grid_ - 1);
    }
    int free_cells = 0;
    for (const auto& r : obstacles_) {
        if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > grid_ || r.y + r.h > grid_)
            throw std::invalid_argument("image-nav: obstacle outside the grid");
    }
    for (int y = 0; y < grid_; ++y)
        for (int x = 0; x < grid_; ++x) free_cells += blocked(x, y) ? 0 : 1;
    if (free_cells == 0) throw std::invalid_argument("image-nav: obstacles cover the whole grid");
}

bool ImageNavEnv::blocked(int x, int y) const {
    for (const auto& r : obstacles_)
        if (r.contains(x, y)) return true;
    return false;
}

bool ImageNavEnv::obstacle_blocks(const AgentState& s, int action) const {
    if (action == 4) return false;
    static constexpr int dx[4] = {0, 0, -1, 1};
    static constexpr int dy[4] = {-1, 1, 0, 0};
    int x = static_cast<int>(s.pos[0]) + dx[action];
    int y = static_cast<int>(s.pos[1]) + dy[action];
    if (x < 0 || x >= grid_ || y < 0 || y >= grid_) return false; // wall, not obstacle
    return blocked(x, y);
}

int ImageNavEnv::safe_action(const AgentState& s, int proposed, RngStream& rng) const {
    if (proposed == 4) return proposed;
    static constexpr int dx[4] = {0, 0, -1, 1};
    static constexpr int dy[4] = {-1, 1, 0, 0};
    int tx = static_cast<int>(s.pos[0]) + dx[proposed];
    int ty = static_cast<int>(s.pos[1]) + dy[proposed];
    bool wall = tx < 0 || tx >= grid_ || ty < 0 || ty >= grid_;
    if (!wall) return proposed; // free moves and obstacle bumps both go through
    if (rng.uniform() < wall_bump_keep_) return proposed;
    // Redraw among actions that do not push into a wall.
    std::vector<int> open_moves;
    for (int a = 0; a < 4; ++a) {
        int nx = static_cast<int>(s.pos[0]) + dx[a];
        int ny = static_cast<int>(s.pos[1]) + dy[a];
        if (nx >= 0 && nx < grid_ && ny >= 0 && ny < grid_) open_moves.push_back(a);
    }
    if (open_moves.empty()) return 4;
    return open_moves[static_cast<size_t>(rng.uniform_int(static_cast<int>(open_moves.size())))];
}

AgentState ImageNavEnv::init_state(RngStream& rng) const {
    std::vector<std::pair<int, int>> free;
    for (int y = 0; y < grid_; ++y)
        for (int x = 0; x < grid_; ++x)
            if (!blocked(x, y)) free.emplace_back(x, y);
    auto [x, y] = free[static_cast<size_t>(rng.uniform_int(static_cast<int>(free.size())))];
    return AgentState{{static_cast<double>(x), static_cast<double>(y)}, {}};
}

AgentState ImageNavEnv::step(const AgentState& s, int action) const {
    if (action < 0 || action >= action_count())
        throw std::invalid_argument("image-nav: invalid action " + std::to_string(action));
    int x = static_cast<int>(s.pos[0]);
    int y = static_cast<int>(s.pos[1]);
    if (action != 4) {
        static constexpr int dx[4] = {0, 0, -1, 1};
        static constexpr int dy[4] = {-1, 1, 0, 0};
        int nx = x + dx[action];
        int ny = y + dy[action];
        if (nx >= 0 && nx < grid_ && ny >= 0 && ny < grid_ && !blocked(nx, ny)) {
            x = nx;
            y = ny;
        }
    }
    return AgentState{{static_cast<double>(x), static_cast<double>(y)}, {}};
}

std::vector<float> ImageNavEnv::observe(const AgentState& s) const {
    int ax = static_cast<int>(s.pos[0]) * stride_;
    int ay = static_cast<int>(s.pos[1]) * stride_;
    std::vector<float> frame(static_cast<size_t>(image_.c) * crop_ * crop_);
    size_t i = 0;
    for (int ch = 0; ch < image_.c; ++ch)
        for (int y = 0; y < crop_; ++y)
            for (int x = 0; x < crop_; ++x) frame[i++] = image_.at(ch, ay + y, ax + x);
    return frame;
}

std::vector<double> ImageNavEnv::displacement(const AgentState& prev, const AgentState& next) const {
    return {next.pos[0] - prev.pos[0], next.pos[1] - prev.pos[1]};
}

std::vector<ObstacleRect> sample_obstacles(RngStream& rng, int grid_size) {
    if (grid_size < 4) throw std::invalid_argument("obstacles: grid too small");
    int max_side = std::min(4, grid_size - 2);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        int count = 1 + rng.uniform_int(2);
        std::vector<ObstacleRect> rects;
        for (int i = 0; i < count; ++i) {
            ObstacleRect r;
            r.w = 2 + rng.uniform_int(max_side - 1);
            r.h = 2 + rng.uniform_int(max_side - 1);
            r.x = rng.uniform_int(grid_size - r.w + 1);
            r.y = rng.uniform_int(grid_size - r.h + 1);
            rects.push_back(r);
        }
        // Free space must be nonempty and 4-connected.
        std::vector<uint8_t> blocked(static_cast<size_t>(grid_size) * grid_size, 0);
        for (const auto& r : rects)
            for (int y = r.y; y < r.y + r.h; ++y)
                for (int x = r.x; x < r.x + r.w; ++x)
                    blocked[static_cast<size_t>(y) * grid_size + x] = 1;
        int free_total = 0;
        int start = -1;
        for (int i = 0; i < grid_size * grid_size; ++i) {
            if (!blocked[static_cast<size_t>(i)]) {
                ++free_total;
                if (start < 0) start = i;
            }
        }
        if (free_total < grid_size) continue; // keep a reasonable amount of walkable space
        std::vector<int> stack{start};
        std::vector<uint8_t> seen(blocked.size(), 0);
        seen[static_cast<size_t>(start)] = 1;
        int reached = 0;
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            ++reached;
            int cx = cur % grid_size, cy = cur / grid_size;
            const int nx[4] = {cx, cx, cx - 1, cx + 1};
            const int ny[4] = {cy - 1, cy + 1, cy, cy};
            for (int d = 0; d < 4; ++d) {
                if (nx[d] < 0 || nx[d] >= grid_size || ny[d] < 0 || ny[d] >= grid_size) continue;
                int ni = ny[d] * grid_size + nx[d];
                if (!blocked[static_cast<size_t>(ni)] && !seen[static_cast<size_t>(ni)]) {
                    seen[static_cast<size_t>(ni)] = 1;
                    stack.push_back(ni);
                }
            }
        }
        if (reached == free_total) return rects;
    }
    throw std::runtime_error("obstacles: rejection sampling failed to find a connected layout");
}

// ---------------------------------------------------------------------------
// PanoramaEnv
// ---------------------------------------------------------------------------

PanoramaEnv::PanoramaEnv(WorldImage strip, int window, int period)
    : strip_(std::move(strip)), window_(window), period_(period) {
    if (!strip_.valid()) throw std::invalid_argument("panorama: invalid strip image");
    if (window_ <= 0 || window_ > strip_.w)
        throw std::invalid_argument("panorama: window wider than strip");
    if (period_ < 3) throw std::invalid_argument("panorama: period must be >= 3");
}

int PanoramaEnv::orientation_index(double angle) const {
    int k = static_cast<int>(std::lround(angle / (kTwoPi / period_)));
    return ((k % period_) + period_) % period_;
}

AgentState PanoramaEnv::init_state(RngStream& rng) const {
    int k = rng.uniform_int(period_);
    return AgentState{{k * (kTwoPi / period_)}, {}};
}

AgentState PanoramaEnv::step(const AgentState& s, int action) const {
    if (action < 0 || action >= 3)
        throw std::invalid_argument("panorama: invalid action " + std::to_string(action));
    int k = orientation_index(s.pos[0]);
    if (action == 0) k = (k - 1 + period_) % period_;
    if (action == 1) k = (k + 1) % period_;
    return AgentState{{k * (kTwoPi / period_)}, {}};
}

std::vector<float> PanoramaEnv::observe(const AgentState& s) const {
    // Window centered at angle * W / (2*pi) with circular wrap.
    double center = s.pos[0] * strip_.w / kTwoPi;
    int start = static_cast<int>(std::lround(center - window_ / 2.0));
    std::vector<float> frame(static_cast<size_t>(strip_.c) * strip_.h * window_);
    size_t i = 0;
    for (int ch = 0; ch < strip_.c; ++ch)
        for (int y = 0; y < strip_.h; ++y)
            for (int x = 0; x < window_; ++x) {
                int col = ((start + x) % strip_.w + strip_.w) % strip_.w;
                frame[i++] = strip_.at(ch, y, col);
            }
    return frame;
}

std::vector<double> PanoramaEnv::displacement(const AgentState& prev, const AgentState& next) const {
    double d = next.pos[0] - prev.pos[0];
    if (d > kTwoPi / 2) d -= kTwoPi;
    if (d < -kTwoPi / 2) d += kTwoPi;
    return {d};
}

// ---------------------------------------------------------------------------
// MomentumEnv
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> MomentumEnv::default_m_true() {
    // Columns: forward, backward, turn-left, turn-right, stay.
    return {{1.2, -1.2, 0.0, 0.0, 0.0},
            {0.0, 0.0, 0.0, 0.0, 0.0},
            {0.0, 0.0, 0.8, -0.8, 0.0}};
}

std::vector<double> MomentumEnv::default_c_f_true() { return {0.5, 0.5, -2.0}; }
std::vector<double> MomentumEnv::default_c_s_true() { return {0.8, 0.8, 0.35}; }

MomentumEnv::MomentumEnv(WorldImage image, int crop, std::vector<std::vector<double>> m_true,
                         std::vector<double> c_f_true, std::vector<double> c_s_true)
    : image_(std::move(image)), crop_(crop), m_true_(std::move(m_true)),
      c_f_true_(std::move(c_f_true)), c_s_true_(std::move(c_s_true)) {
    if (!image_.valid()) throw std::invalid_argument("momentum: invalid world image");
    if (image_.h != image_.w) throw std::invalid_argument("momentum: world image must be square");
    if (crop_ <= 0 || crop_ >= image_.w) throw std::invalid_argument("momentum: bad crop");
    if (m_true_.size() != 3) throw std::invalid_argument("momentum: M must have 3 rows");
    size_t cols = m_true_[0].size();
    for (const auto& row : m_true_)
        if (row.size() != cols || cols == 0)
            throw std::invalid_argument("momentum: ragged transition matrix");
    if (c_f_true_.size() != 3 || c_s_true_.size() != 3)
        throw std::invalid_argument("momentum: constants must be 3-vectors");
    for (double v : c_f_true_)
        if (!std::isfinite(v)) throw std::invalid_argument("momentum: non-finite friction");
    for (double v : c_s_true_)
        if (!(v > 0.0)) throw std::invalid_argument("momentum: saturation scale must be positive");
    margin_ = 3.0 * std::max(c_s_true_[0], c_s_true_[1]);
}

AgentState MomentumEnv::init_state(RngStream& rng) const {
    double lo = margin_, hi = max_anchor() - margin_;
    if (hi <= lo) { lo = 0.0; hi = max_anchor(); }
    return AgentState{{lo + rng.uniform() * (hi - lo), lo + rng.uniform() * (hi - lo),
                       rng.uniform() * kTwoPi},
                      {0.0, 0.0, 0.0}};
}

AgentState MomentumEnv::step(const AgentState& s, int action) const {
    if (action < 0 || action >= action_count())
        throw std::invalid_argument("momentum: invalid action " + std::to_string(action));
    double theta = s.pos[2];
    std::vector<double> d(3);
    for (int i = 0; i < 3; ++i) {
        double friction = 1.0 / (1.0 + std::exp(-c_f_true_[static_cast<size_t>(i)]));
        double u = friction * s.vel[static_cast<size_t>(i)] +
                   m_true_[static_cast<size_t>(i)][static_cast<size_t>(action)];
        d[static_cast<size_t>(i)] = c_s_true_[static_cast<size_t>(i)] * std::tanh(u);
    }
    double ct = std::cos(theta), st = std::sin(theta);
    double wx = ct * d[0] - st * d[1];
    double wy = st * d[0] + ct * d[1];
    double nx = s.pos[0] + wx;
    double ny = s.pos[1] + wy;
    double cx = std::clamp(nx, 0.0, max_anchor());
    double cy = std::clamp(ny, 0.0, max_anchor());
    double ntheta = wrap_angle(theta + d[2]);

    AgentState out;
    out.pos = {cx, cy, ntheta};
    if (cx == nx && cy == ny) {
        out.vel = d; // untouched step: the achieved displacement is d itself
    } else {
        // Contact: keep only the achieved motion, rotated back to agent frame.
        double ax = cx - s.pos[0], ay = cy - s.pos[1];
        out.vel = {ct * ax + st * ay, -st * ax + ct * ay, d[2]};
    }
    return out;
}

std::vector<float> MomentumEnv::observe(const AgentState& s) const {
    std::vector<float> frame(static_cast<size_t>(image_.c) * crop_ * crop_);
    size_t i = 0;
    for (int ch = 0; ch < image_.c; ++ch) {
        for (int y = 0; y < crop_; ++y) {
            for (int x = 0; x < crop_; ++x) {
                double sy = s.pos[1] + y;
                double sx = s.pos[0] + x;
                int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
                double ty = sy - y0, tx = sx - x0;
                int y1 = std::min(y0 + 1, image_.h - 1);
                int x1 = std::min(x0 + 1, image_.w - 1);
                double v = (1 - ty) * ((1 - tx) * image_.at(ch, y0, x0) + tx * image_.at(ch, y0, x1)) +
                           ty * ((1 - tx) * image_.at(ch, y1, x0) + tx * image_.at(ch, y1, x1));
                frame[i++] = static_cast<float>(v);
            }
        }
    }
    return frame;
}

std::vector<double> MomentumEnv::displacement(const AgentState&, const AgentState& next) const {
    return next.vel;
}

int MomentumEnv::safe_action(const AgentState& s, int proposed, RngStream&) const {
    AgentState probe = step(s, proposed);
    double lo = margin_, hi = max_anchor() - margin_;
    if (probe.pos[0] < lo || probe.pos[0] > hi || probe.pos[1] < lo || probe.pos[1] > hi)
        return 2; // steer: turn-left until the heading clears the boundary
    return proposed;
}

// ---------------------------------------------------------------------------
// policy and trajectories
// ---------------------------------------------------------------------------

std::vector<uint8_t> sample_policy(RngStream rng, int length, double repeat_rate,
                                   int action_count) {
    if (length <= 0) throw std::invalid_argument("policy: length must be positive");
    if (repeat_rate < 0.0) throw std::invalid_argument("policy: repeat rate must be nonnegative");
    std::vector<uint8_t> actions;
    actions.reserve(static_cast<size_t>(length));
    while (static_cast<int>(actions.size()) < length) {
        uint8_t a = static_cast<uint8_t>(rng.uniform_int(action_count));
        int run = 1 + rng.poisson(repeat_rate);
        for (int i = 0; i < run && static_cast<int>(actions.size()) < length; ++i)
            actions.push_back(a);
    }
    return actions;
}

Trajectory generate_trajectory(const Env& env, RngStream rng, int steps,
                               const PolicySpec& policy) {
    if (steps <= 0) throw std::invalid_argument("trajectory: steps must be positive");
    RngStream init_rng = rng.split("init");
    RngStream policy_rng = rng.split("policy");

    std::vector<uint8_t> proposed;
    if (policy.kind == PolicySpec::Kind::poisson_uniform) {
        proposed = sample_policy(policy_rng, steps, policy.repeat_rate, env.action_count());
    } else {
        if (policy.constant_action < 0 || policy.constant_action >= env.action_count())
            throw std::invalid_argument("trajectory: constant action out of range");
        proposed.assign(static_cast<size_t>(steps), static_cast<uint8_t>(policy.constant_action));
    }

    RngStream steer_rng = rng.split("steer");

    Trajectory traj;
    AgentState state = env.init_state(init_rng);
    traj.start.assign(state.pos.begin(), state.pos.end());
    traj.frames.reserve(static_cast<size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        int a = env.safe_action(state, proposed[static_cast<size_t>(t)], steer_rng);
        AgentState next = env.step(state, a);
        std::vector<double> d = env.displacement(state, next);
        traj.actions.push_back(static_cast<uint8_t>(a));
        traj.positions.emplace_back(next.pos.begin(), next.pos.end());
        traj.displacements.emplace_back(d.begin(), d.end());
        traj.frames.push_back(env.observe(next));
        state = std::move(next);
    }
    return traj;
}

} // namespace gtmsm
