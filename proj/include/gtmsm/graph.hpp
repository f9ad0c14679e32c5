// Define-by-run computation graph with reverse-mode differentiation.
//
// A Graph is built fresh per evaluation: leaves are constants, named inputs,
// or parameter snapshots; every op evaluates eagerly at creation. backward()
// accumulates loss gradients into a GradBuffer indexed by parameter group.
#pragma once

#include "gtmsm/params.hpp"
#include "gtmsm/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gtmsm {

class Graph;

// Lightweight node handle. Valid only while its Graph is alive.
struct Val {
    int id = -1;
    Graph* g = nullptr;
    bool valid() const { return id >= 0 && g != nullptr; }
};

enum class Op : uint8_t {
    kConst, kInput, kParam,
    kAdd, kSub, kMul, kDiv,
    kScale, kOffset,
    kMatVec,
    kIndex, kConcat, kBroadcast,
    kSum, kLogSumExp,
    kTanh, kSigmoid, kSoftplus, kExp, kLog, kCos, kSin, kSqrt, kSquare, kReciprocal,
    kClamp,
    kConv2d, kUpsample2,
};

const char* op_name(Op op);

struct ConvDims {
    int cin = 0, h = 0, w = 0;
    int cout = 0, k = 0, stride = 1, pad = 0;
    int out_h() const { return (h + 2 * pad - k) / stride + 1; }
    int out_w() const { return (w + 2 * pad - k) / stride + 1; }
};

class Graph {
public:
    explicit Graph(Precision prec = Precision::f64, bool check_finite = true);

    Precision precision() const { return prec_; }
    size_t node_count() const { return nodes_.size(); }

    // ---- leaves ----
    Val constant(Tensor t);
    Val constant(const std::vector<double>& v);
    Val scalar(double v);
    Val input(const std::string& name, Tensor t);
    Val param(const Params& params, int group_id);

    // ---- elementwise / structural ops ----
    Val add(Val a, Val b);
    Val sub(Val a, Val b);
    Val mul(Val a, Val b);
    Val div(Val a, Val b);
    Val scale(Val a, double c);
    Val offset(Val a, double c);
    Val matvec(Val w, Val x);
    Val index(Val a, int i);
    Val concat(const std::vector<Val>& parts);
    Val broadcast(Val a, int n);
    Val sum(Val a);
    Val mean(Val a);
    Val logsumexp(Val a);
    Val tanh(Val a);
    Val sigmoid(Val a);
    Val softplus(Val a);
    Val exp(Val a);
    Val log(Val a);
    Val cos(Val a);
    Val sin(Val a);
    Val sqrt(Val a);
    Val square(Val a);
    Val reciprocal(Val a);
    Val clamp(Val a, double lo, double hi);
    Val conv2d(Val x, Val w, Val b, const ConvDims& dims);
    Val upsample2(Val x, int c, int h, int w);

    // Convenience compositions.
    Val dot(Val a, Val b) { return sum(mul(a, b)); }
    Val neg(Val a) { return scale(a, -1.0); }

    // (mean, logvar, noise) -> mean + exp(logvar/2) * noise. Noise is a
    // constant: gradients flow through mean and the standard deviation only.
    Val gaussian_sample(Val mean, Val logvar, const std::vector<double>& noise);

    // ---- evaluation ----
    const Tensor& value(Val v) const;
    double scalar_value(Val v) const;

    // Rebinds a named input; forward values are stale until recompute().
    void set_input(const std::string& name, Tensor t);
    void recompute();

    // Accumulates d(loss)/d(param) into `sink` for every parameter group
    // reachable from `loss`. Requires a scalar, up-to-date loss node.
    void backward(Val loss, GradBuffer& sink);

private:
    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        std::vector<int> many; // concat parents
        Tensor val;
        double p0 = 0.0, p1 = 0.0;
        int i0 = 0;
        ConvDims conv;
        int param_id = -1;
        int input_slot = -1;
    };

    int push(Node n);
    Val make(Op op, int a, int b, Tensor val);
    void eval_node(Node& n);
    Tensor& grad_of(std::vector<Tensor>& grads, int id);
    const Node& node(Val v) const;
    void check(Val v) const;
    [[noreturn]] void fail(const Node& n, int id, const std::string& msg) const;

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, int>> inputs_;
    Precision prec_;
    bool check_finite_;
    bool dirty_ = false;
};

// Operator sugar for graph handles.
inline Val operator+(Val a, Val b) { return a.g->add(a, b); }
inline Val operator-(Val a, Val b) { return a.g->sub(a, b); }
inline Val operator*(Val a, Val b) { return a.g->mul(a, b); }
inline Val operator/(Val a, Val b) { return a.g->div(a, b); }
inline Val operator-(Val a) { return a.g->scale(a, -1.0); }

} // namespace gtmsm
