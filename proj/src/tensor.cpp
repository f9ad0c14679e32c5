#include "gtmsm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gtmsm {

int64_t Tensor::shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("tensor: negative extent");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, Precision prec)
    : shape_(std::move(shape)), prec_(prec) {
    data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, Precision prec)
    : shape_(std::move(shape)), data_(std::move(data)), prec_(prec) {
    if (static_cast<int64_t>(data_.size()) != shape_size(shape_)) {
        throw std::invalid_argument("tensor: element count " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str());
    }
    round_to_precision();
}

Tensor Tensor::zeros(std::vector<int> shape, Precision prec) {
    return Tensor(std::move(shape), prec);
}

Tensor Tensor::full(std::vector<int> shape, double v, Precision prec) {
    Tensor t(std::move(shape), prec);
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(double v, Precision prec) {
    return Tensor({1}, {v}, prec);
}

Tensor Tensor::vector(std::vector<double> v, Precision prec) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v), prec);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::round_to_precision() {
    if (prec_ != Precision::f32) return;
    for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

void Tensor::fill(double v) {
    if (prec_ == Precision::f32) v = static_cast<double>(static_cast<float>(v));
    for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

void validate_finite(const Tensor& t, const std::string& where) {
    if (!t.all_finite())
        throw std::runtime_error("non-finite value in " + where);
}

} // namespace gtmsm
