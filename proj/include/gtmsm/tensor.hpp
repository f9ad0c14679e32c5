// Dense row-major tensors with a 32/64-bit precision tag.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gtmsm {

enum class Precision : uint8_t { f32, f64 };

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, Precision prec = Precision::f64);
    Tensor(std::vector<int> shape, std::vector<double> data, Precision prec = Precision::f64);

    static Tensor zeros(std::vector<int> shape, Precision prec = Precision::f64);
    static Tensor full(std::vector<int> shape, double v, Precision prec = Precision::f64);
    static Tensor scalar(double v, Precision prec = Precision::f64);
    static Tensor vector(std::vector<double> v, Precision prec = Precision::f64);

    const std::vector<int>& shape() const { return shape_; }
    Precision precision() const { return prec_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D access, row-major
    double& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    // Rounds every element to float when the tag is f32. No-op for f64.
    void round_to_precision();

    void fill(double v);
    std::vector<double> to_vector() const { return data_; }

    std::string shape_str() const;
    static int64_t shape_size(const std::vector<int>& shape);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
    Precision prec_ = Precision::f64;
};

// Throws std::runtime_error naming `where` if any element is non-finite.
void validate_finite(const Tensor& t, const std::string& where);

} // namespace gtmsm
