// Append-only episodic (key, value) memory over Gaussian statistics with
// forward (key-space) and reverse (value-space) exact k-nearest-neighbour
// retrieval. Entries are frozen numeric snapshots: nothing downstream
// differentiates through stored contents.
#pragma once

#include "gtmsm/gaussian.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gtmsm {

struct MemoryEntry {
    GaussianStats key;   // state statistics (dim 2 or 3)
    GaussianStats value; // frame-encoding statistics (dim d_z)
    int64_t t = 0;       // insertion time step, strictly increasing
};

enum class MetricKind : uint8_t {
    euclidean,      // distance between raw key means
    angular,        // (s1, s2, cos s3, sin s3) embedding, then Euclidean
    angular_linear, // angular embedding followed by a fixed linear map
    jeffreys,       // symmetrized KL between full statistics (exact scan only)
};

// (s1, s2, cos s3, sin s3); the third component is treated as an angle.
std::vector<double> angular_embed(const std::vector<double>& s);

struct DistanceMetric {
    MetricKind kind = MetricKind::euclidean;
    // Row-major [rows x cols] linear map applied after the angular embedding
    // (angular_linear only). Fixed content; not trained.
    std::vector<std::vector<double>> embed_matrix;

    bool positional() const { return kind != MetricKind::jeffreys; }
    std::vector<double> embed_point(const std::vector<double>& s) const;
    bool same_as(const DistanceMetric& o) const;
};

struct Retrieved {
    double distance = 0.0;
    int entry_index = -1;
    const MemoryEntry* entry = nullptr;
};

enum class QueryMode : uint8_t { exact, tree };

// Exact kd-tree k-NN with deterministic tie-breaking (lower point index
// wins at equal distance). Search results are identical to a linear scan.
class KdTree {
public:
    void build(const std::vector<std::vector<double>>& points);
    bool built() const { return !points_.empty(); }
    // Returns (squared distance, point index) pairs sorted ascending.
    std::vector<std::pair<double, int>> knn(const std::vector<double>& q, int k) const;

private:
    struct Node {
        int axis = -1;       // -1 for leaves
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0; // leaf range into order_
    };
    void search(int node, const std::vector<double>& q, int k,
                std::vector<std::pair<double, int>>& heap) const;
    int build_range(int begin, int end);

    std::vector<std::vector<double>> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int dim_ = 0;
};

class SpatialMemory {
public:
    // Appends a frozen copy; `t` must exceed the previous insertion index.
    int64_t insert(const GaussianStats& key, const GaussianStats& value, int64_t t);

    // Ends the write phase: builds the key-space tree under `metric` and the
    // value-space tree. Queries in tree mode are valid only after this.
    void freeze(const DistanceMetric& metric);
    bool frozen() const { return frozen_; }

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const MemoryEntry& entry(size_t i) const { return entries_[i]; }

    // K nearest entries by metric distance between `point` and key means.
    std::vector<Retrieved> query(const std::vector<double>& point, int k,
                                 const DistanceMetric& metric, QueryMode mode) const;

    // K nearest entries under the Jeffreys divergence between statistics.
    std::vector<Retrieved> query_stats(const GaussianStats& q, int k) const;

    // K' nearest entries by Euclidean distance between z_point and value means.
    std::vector<Retrieved> reverse_query(const std::vector<double>& z_point, int k,
                                         QueryMode mode = QueryMode::exact) const;

    void save(const std::string& path) const;
    static SpatialMemory load(const std::string& path);

private:
    std::vector<Retrieved> finish(std::vector<std::pair<double, int>> hits) const;

    std::vector<MemoryEntry> entries_;
    bool frozen_ = false;
    std::optional<DistanceMetric> frozen_metric_;
    KdTree key_tree_;
    KdTree value_tree_;
};

} // namespace gtmsm
