// Named trainable arrays with paired gradient accumulators.
#pragma once

#include "gtmsm/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace gtmsm {

struct ParamGroup {
    std::string name;
    Tensor value;
    Tensor grad; // same shape as value
};

class Params {
public:
    // Registers a new group; names must be unique.
    int add(const std::string& name, Tensor init);

    int find(const std::string& name) const; // -1 when absent

    ParamGroup& group(int id) { return groups_[static_cast<size_t>(id)]; }
    const ParamGroup& group(int id) const { return groups_[static_cast<size_t>(id)]; }

    size_t size() const { return groups_.size(); }
    void zero_grad();

    std::vector<ParamGroup>& groups() { return groups_; }
    const std::vector<ParamGroup>& groups() const { return groups_; }

    int64_t total_elements() const;

private:
    std::vector<ParamGroup> groups_;
    std::unordered_map<std::string, int> index_;
};

// Per-episode gradient buffer; lets batch members be evaluated independently
// and summed in a fixed order afterwards.
class GradBuffer {
public:
    explicit GradBuffer(const Params& params);
    Tensor& grad(int group_id) { return grads_[static_cast<size_t>(group_id)]; }
    const Tensor& grad(int group_id) const { return grads_[static_cast<size_t>(group_id)]; }
    void zero();
    void add_scaled_to(Params& params, double scale) const;
    size_t size() const { return grads_.size(); }

private:
    std::vector<Tensor> grads_;
};

} // namespace gtmsm
