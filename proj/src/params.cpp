#include "gtmsm/params.hpp"

#include <stdexcept>

namespace gtmsm {

int Params::add(const std::string& name, Tensor init) {
    if (index_.count(name))
        throw std::invalid_argument("params: duplicate group name '" + name + "'");
    int id = static_cast<int>(groups_.size());
    Tensor grad = Tensor::zeros(init.shape(), init.precision());
    groups_.push_back(ParamGroup{name, std::move(init), std::move(grad)});
    index_[name] = id;
    return id;
}

int Params::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

void Params::zero_grad() {
    for (auto& g : groups_) g.grad.fill(0.0);
}

int64_t Params::total_elements() const {
    int64_t n = 0;
    for (const auto& g : groups_) n += g.value.size();
    return n;
}

GradBuffer::GradBuffer(const Params& params) {
    grads_.reserve(params.size());
    for (const auto& g : params.groups())
        grads_.push_back(Tensor::zeros(g.value.shape(), g.value.precision()));
}

void GradBuffer::zero() {
    for (auto& t : grads_) t.fill(0.0);
}

void GradBuffer::add_scaled_to(Params& params, double scale) const {
    if (grads_.size() != params.size())
        throw std::invalid_argument("grad buffer: group count mismatch");
    for (size_t i = 0; i < grads_.size(); ++i) {
        Tensor& dst = params.groups()[i].grad;
        const Tensor& src = grads_[i];
        for (int64_t j = 0; j < src.size(); ++j) dst[j] += scale * src[j];
        dst.round_to_precision();
    }
}

} // namespace gtmsm
