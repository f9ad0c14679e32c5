#include "gtmsm/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gtmsm {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

// (squared distance, index) ordering: nearer first, lower index on ties.
bool better(const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
}

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, double v) {
    float f = static_cast<float>(v);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    write_u32(os, u);
}

double read_f32(std::istream& is) {
    uint32_t u = read_u32(is);
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
}

constexpr char kMagic[4] = {'D', 'N', 'D', 'S'};
constexpr uint32_t kVersion = 1;

} // namespace

std::vector<double> angular_embed(const std::vector<double>& s) {
    if (s.size() != 3)
        throw std::invalid_argument("angular_embed: expected a 3-vector, got dim " +
                                    std::to_string(s.size()));
    return {s[0], s[1], std::cos(s[2]), std::sin(s[2])};
}

std::vector<double> DistanceMetric::embed_point(const std::vector<double>& s) const {
    switch (kind) {
        case MetricKind::euclidean:
            return s;
        case MetricKind::angular:
            return angular_embed(s);
        case MetricKind::angular_linear: {
            std::vector<double> e = angular_embed(s);
            if (embed_matrix.empty())
                throw std::invalid_argument("metric: angular_linear requires an embed matrix");
            std::vector<double> out(embed_matrix.size(), 0.0);
            for (size_t r = 0; r < embed_matrix.size(); ++r) {
                if (embed_matrix[r].size() != e.size())
                    throw std::invalid_argument("metric: embed matrix column count mismatch");
                double acc = 0.0;
                for (size_t c = 0; c < e.size(); ++c) acc += embed_matrix[r][c] * e[c];
                out[r] = acc;
            }
            return out;
        }
        case MetricKind::jeffreys:
            throw std::invalid_argument("metric: jeffreys has no point embedding; use query_stats");
    }
    throw std::logic_error("metric: unknown kind");
}

bool DistanceMetric::same_as(const DistanceMetric& o) const {
    return kind == o.kind && embed_matrix == o.embed_matrix;
}

// ---------------------------------------------------------------------------
// KdTree
// ---------------------------------------------------------------------------

void KdTree::build(const std::vector<std::vector<double>>& points) {
    points_ = points;
    nodes_.clear();
    order_.resize(points_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    if (points_.empty()) return;
    dim_ = static_cast<int>(points_[0].size());
    for (const auto& p : points_)
        if (static_cast<int>(p.size()) != dim_)
            throw std::invalid_argument("kdtree: inconsistent point dimensions");
    build_range(0, static_cast<int>(points_.size()));
}

int KdTree::build_range(int begin, int end) {
    constexpr int kLeafSize = 8;
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{});
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }

    // Split along the widest axis at the median.
    int axis = 0;
    double best_range = -1.0;
    for (int a = 0; a < dim_; ++a) {
        double lo = points_[static_cast<size_t>(order_[begin])][a];
        double hi = lo;
        for (int i = begin + 1; i < end; ++i) {
            double v = points_[static_cast<size_t>(order_[i])][a];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > best_range) {
            best_range = hi - lo;
            axis = a;
        }
    }
    int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         double va = points_[static_cast<size_t>(a)][axis];
                         double vb = points_[static_cast<size_t>(b)][axis];
                         if (va != vb) return va < vb;
                         return a < b;
                     });
    double split = points_[static_cast<size_t>(order_[mid])][axis];

    nodes_[id].axis = axis;
    nodes_[id].split = split;
    int left = build_range(begin, mid);
    int right = build_range(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void KdTree::search(int node, const std::vector<double>& q, int k,
                    std::vector<std::pair<double, int>>& heap) const {
    const Node& n = nodes_[static_cast<size_t>(node)];
    auto worse_on_heap = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
        return better(a, b); // max-heap by "worseness": top is the worst kept
    };
    if (n.axis < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            int pi = order_[static_cast<size_t>(i)];
            std::pair<double, int> cand{sq_dist(q, points_[static_cast<size_t>(pi)]), pi};
            if (static_cast<int>(heap.size()) < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end(), worse_on_heap);
            } else if (better(cand, heap.front())) {
                std::pop_heap(heap.begin(), heap.end(), worse_on_heap);
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end(), worse_on_heap);
            }
        }
        return;
    }
    double diff = q[static_cast<size_t>(n.axis)] - n.split;
    int near = diff <= 0.0 ? n.left : n.right;
    int far = diff <= 0.0 ? n.right : n.left;
    search(near, q, k, heap);
    // Visit the far side unless every point there is strictly worse than the
    // current worst candidate; equal distances must be visited so that lower
    // insertion indices can win ties.
    double gap_sq = diff * diff;
    if (static_cast<int>(heap.size()) < k || gap_sq <= heap.front().first)
        search(far, q, k, heap);
}

std::vector<std::pair<double, int>> KdTree::knn(const std::vector<double>& q, int k) const {
    if (points_.empty()) throw std::invalid_argument("kdtree: empty tree");
    if (static_cast<int>(q.size()) != dim_)
        throw std::invalid_argument("kdtree: query dimension " + std::to_string(q.size()) +
                                    " != point dimension " + std::to_string(dim_));
    k = std::min<int>(k, static_cast<int>(points_.size()));
    std::vector<std::pair<double, int>> heap;
    heap.reserve(static_cast<size_t>(k) + 1);
    search(0, q, k, heap);
    std::sort(heap.begin(), heap.end(), better);
    return heap;
}

// ---------------------------------------------------------------------------
// SpatialMemory
// ---------------------------------------------------------------------------

int64_t SpatialMemory::insert(const GaussianStats& key, const GaussianStats& value, int64_t t) {
    if (frozen_) throw std::runtime_error("memory: insert after freeze");
    if (!key.consistent() || !value.consistent())
        throw std::invalid_argument("memory: mean/logvar dimension mismatch");
    if (!key.finite() || !value.finite())
        throw std::invalid_argument("memory: non-finite statistics (variances must be positive)");
    if (!entries_.empty()) {
        const MemoryEntry& last = entries_.back();
        if (t <= last.t)
            throw std::invalid_argument("memory: insertion index " + std::to_string(t) +
                                        " not greater than " + std::to_string(last.t));
        if (key.dim() != last.key.dim() || value.dim() != last.value.dim())
            throw std::invalid_argument("memory: entry dimensions changed");
    }
    entries_.push_back(MemoryEntry{key, value, t});
    return static_cast<int64_t>(entries_.size()) - 1;
}

void SpatialMemory::freeze(const DistanceMetric& metric) {
    if (!metric.positional())
        throw std::invalid_argument("memory: cannot freeze under a non-positional metric");
    std::vector<std::vector<double>> keys, values;
    keys.reserve(entries_.size());
    values.reserve(entries_.size());
    for (const auto& e : entries_) {
        keys.push_back(metric.embed_point(e.key.mean));
        values.push_back(e.value.mean);
    }
    key_tree_.build(keys);
    value_tree_.build(values);
    frozen_metric_ = metric;
    frozen_ = true;
}

std::vector<Retrieved> SpatialMemory::finish(std::vector<std::pair<double, int>> hits) const {
    std::vector<Retrieved> out;
    out.reserve(hits.size());
    for (auto& [d2, idx] : hits)
        out.push_back(Retrieved{std::sqrt(d2), idx, &entries_[static_cast<size_t>(idx)]});
    return out;
}

std::vector<Retrieved> SpatialMemory::query(const std::vector<double>& point, int k,
                                            const DistanceMetric& metric, QueryMode mode) const {
    if (entries_.empty()) throw std::runtime_error("memory: query on empty memory");
    if (k <= 0) throw std::invalid_argument("memory: k must be positive");
    if (!metric.positional())
        throw std::invalid_argument("memory: point query needs a positional metric");
    std::vector<double> q = metric.embed_point(point);
    k = std::min<int>(k, static_cast<int>(entries_.size()));

    if (mode == QueryMode::tree) {
        if (!frozen_) throw std::runtime_error("memory: tree query before freeze");
        if (!frozen_metric_->same_as(metric))
            throw std::invalid_argument("memory: tree query metric differs from frozen metric");
        return finish(key_tree_.knn(q, k));
    }

    std::vector<std::pair<double, int>> all;
    all.reserve(entries_.size());
    for (size_t i = 0; i < entries_.size(); ++i) {
        std::vector<double> ek = metric.embed_point(entries_[i].key.mean);
        if (ek.size() != q.size())
            throw std::invalid_argument("memory: query dimension mismatch");
        all.emplace_back(sq_dist(q, ek), static_cast<int>(i));
    }
    std::partial_sort(all.begin(), all.begin() + k, all.end(), better);
    all.resize(static_cast<size_t>(k));
    return finish(std::move(all));
}

std::vector<Retrieved> SpatialMemory::query_stats(const GaussianStats& q, int k) const {
    if (entries_.empty()) throw std::runtime_error("memory: query on empty memory");
    if (k <= 0) throw std::invalid_argument("memory: k must be positive");
    k = std::min<int>(k, static_cast<int>(entries_.size()));
    std::vector<std::pair<double, int>> all;
    all.reserve(entries_.size());
    for (size_t i = 0; i < entries_.size(); ++i)
        all.emplace_back(gaussian_jeffreys(q, entries_[i].key), static_cast<int>(i));
    std::partial_sort(all.begin(), all.begin() + k, all.end(), better);
    all.resize(static_cast<size_t>(k));
    std::vector<Retrieved> out;
    out.reserve(all.size());
    for (auto& [d, idx] : all)
        out.push_back(Retrieved{d, idx, &entries_[static_cast<size_t>(idx)]});
    return out;
}

std::vector<Retrieved> SpatialMemory::reverse_query(const std::vector<double>& z_point, int k,
                                                    QueryMode mode) const {
    if (entries_.empty()) throw std::runtime_error("memory: reverse query on empty memory");
    if (k <= 0) throw std::invalid_argument("memory: k must be positive");
    if (z_point.size() != static_cast<size_t>(entries_[0].value.dim()))
        throw std::invalid_argument("memory: reverse query dimension mismatch");
    k = std::min<int>(k, static_cast<int>(entries_.size()));

    if (mode == QueryMode::tree) {
        if (!frozen_) throw std::runtime_error("memory: tree query before freeze");
        return finish(value_tree_.knn(z_point, k));
    }

    std::vector<std::pair<double, int>> all;
    all.reserve(entries_.size());
    for (size_t i = 0; i < entries_.size(); ++i)
        all.emplace_back(sq_dist(z_point, entries_[i].value.mean), static_cast<int>(i));
    std::partial_sort(all.begin(), all.begin() + k, all.end(), better);
    all.resize(static_cast<size_t>(k));
    return finish(std::move(all));
}

void SpatialMemory::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("memory: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(entries_.size()));
    uint32_t kd = entries_.empty() ? 0 : static_cast<uint32_t>(entries_[0].key.dim());
    uint32_t vd = entries_.empty() ? 0 : static_cast<uint32_t>(entries_[0].value.dim());
    write_u32(os, kd);
    write_u32(os, vd);
    for (const auto& e : entries_) {
        write_f32(os, static_cast<double>(e.t));
        for (double v : e.key.mean) write_f32(os, v);
        for (double v : e.key.logvar) write_f32(os, v);
        for (double v : e.value.mean) write_f32(os, v);
        for (double v : e.value.logvar) write_f32(os, v);
    }
    if (!os) throw std::runtime_error("memory: write failed for '" + path + "'");
}

SpatialMemory SpatialMemory::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("memory: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("memory: '" + path + "' is not a memory snapshot");
    uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("memory: unsupported snapshot version " + std::to_string(version));
    uint32_t count = read_u32(is);
    uint32_t kd = read_u32(is);
    uint32_t vd = read_u32(is);
    SpatialMemory m;
    for (uint32_t i = 0; i < count; ++i) {
        MemoryEntry e;
        e.t = static_cast<int64_t>(read_f32(is));
        e.key.mean.resize(kd);
        e.key.logvar.resize(kd);
        e.value.mean.resize(vd);
        e.value.logvar.resize(vd);
        for (auto& v : e.key.mean) v = read_f32(is);
        for (auto& v : e.key.logvar) v = read_f32(is);
        for (auto& v : e.value.mean) v = read_f32(is);
        for (auto& v : e.value.logvar) v = read_f32(is);
        if (!is) throw std::runtime_error("memory: truncated snapshot '" + path + "'");
        m.insert(e.key, e.value, e.t);
    }
    return m;
}

} // namespace gtmsm
