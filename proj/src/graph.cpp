#include "gtmsm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtmsm {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    // max(x,0) + log1p(exp(-|x|))
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

} // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::kConst: return "const";
        case Op::kInput: return "input";
        case Op::kParam: return "param";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kMul: return "mul";
        case Op::kDiv: return "div";
        case Op::kScale: return "scale";
        case Op::kOffset: return "offset";
        case Op::kMatVec: return "matvec";
        case Op::kIndex: return "index";
        case Op::kConcat: return "concat";
        case Op::kBroadcast: return "broadcast";
        case Op::kSum: return "sum";
        case Op::kLogSumExp: return "logsumexp";
        case Op::kTanh: return "tanh";
        case Op::kSigmoid: return "sigmoid";
        case Op::kSoftplus: return "softplus";
        case Op::kExp: return "exp";
        case Op::kLog: return "log";
        case Op::kCos: return "cos";
        case Op::kSin: return "sin";
        case Op::kSqrt: return "sqrt";
        case Op::kSquare: return "square";
        case Op::kReciprocal: return "reciprocal";
        case Op::kClamp: return "clamp";
        case Op::kConv2d: return "conv2d";
        case Op::kUpsample2: return "upsample2";
    }
    return "?";
}

Graph::Graph(Precision prec, bool check_finite)
    : prec_(prec), check_finite_(check_finite) {
    nodes_.reserve(256);
}

void Graph::check(Val v) const {
    if (!v.valid() || v.g != this || v.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("graph: handle does not belong to this graph");
}

void Graph::fail(const Node& n, int id, const std::string& msg) const {
    throw std::invalid_argument(std::string("graph: op ") + op_name(n.op) + " (node " +
                                std::to_string(id) + "): " + msg);
}

const Graph::Node& Graph::node(Val v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)];
}

int Graph::push(Node n) {
    int id = static_cast<int>(nodes_.size());
    eval_node(n);
    n.val.round_to_precision();
    if (check_finite_ && !n.val.all_finite())
        throw std::runtime_error(std::string("graph: non-finite value in op ") + op_name(n.op) +
                                 " (node " + std::to_string(id) + ")");
    nodes_.push_back(std::move(n));
    return id;
}

Val Graph::constant(Tensor t) {
    Node n;
    n.op = Op::kConst;
    n.val = Tensor(t.shape(), t.to_vector(), prec_);
    return Val{push(std::move(n)), this};
}

Val Graph::constant(const std::vector<double>& v) {
    return constant(Tensor::vector(v, prec_));
}

Val Graph::scalar(double v) { return constant(Tensor::scalar(v, prec_)); }

Val Graph::input(const std::string& name, Tensor t) {
    Node n;
    n.op = Op::kInput;
    n.val = Tensor(t.shape(), t.to_vector(), prec_);
    n.input_slot = static_cast<int>(inputs_.size());
    int id = push(std::move(n));
    inputs_.emplace_back(name, id);
    return Val{id, this};
}

Val Graph::param(const Params& params, int group_id) {
    if (group_id < 0 || group_id >= static_cast<int>(params.size()))
        throw std::invalid_argument("graph: bad parameter group id");
    const Tensor& v = params.group(group_id).value;
    Node n;
    n.op = Op::kParam;
    n.val = Tensor(v.shape(), v.to_vector(), prec_);
    n.param_id = group_id;
    return Val{push(std::move(n)), this};
}

Val Graph::make(Op op, int a, int b, Tensor val) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = std::move(val);
    return Val{push(std::move(n)), this};
}

// Forward evaluation; also used by recompute().
void Graph::eval_node(Node& n) {
    auto& N = nodes_;
    auto val_of = [&](int id) -> const Tensor& { return N[static_cast<size_t>(id)].val; };
    switch (n.op) {
        case Op::kConst:
        case Op::kInput:
        case Op::kParam:
            return;
        case Op::kAdd:
        case Op::kSub:
        case Op::kMul:
        case Op::kDiv: {
            const Tensor& a = val_of(n.a);
            const Tensor& b = val_of(n.b);
            if (!a.same_shape(b))
                fail(n, static_cast<int>(N.size()),
                     "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
            if (n.val.size() != a.size()) n.val = Tensor(a.shape(), prec_);
            double* o = n.val.data();
            const double* pa = a.data();
            const double* pb = b.data();
            int64_t m = a.size();
            switch (n.op) {
                case Op::kAdd: for (int64_t i = 0; i < m; ++i) o[i] = pa[i] + pb[i]; break;
                case Op::kSub: for (int64_t i = 0; i < m; ++i) o[i] = pa[i] - pb[i]; break;
                case Op::kMul: for (int64_t i = 0; i < m; ++i) o[i] = pa[i] * pb[i]; break;
                default:       for (int64_t i = 0; i < m; ++i) o[i] = pa[i] / pb[i]; break;
            }
            return;
        }
        case Op::kScale:
        case Op::kOffset: {
            const Tensor& a = val_of(n.a);
            if (n.val.size() != a.size()) n.val = Tensor(a.shape(), prec_);
            double* o = n.val.data();
            const double* pa = a.data();
            for (int64_t i = 0; i < a.size(); ++i)
                o[i] = n.op == Op::kScale ? pa[i] * n.p0 : pa[i] + n.p0;
            return;
        }
        case Op::kMatVec: {
            const Tensor& w = val_of(n.a);
            const Tensor& x = val_of(n.b);
            if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0))
                fail(n, static_cast<int>(N.size()),
                     "expected [m,n] x [n], got " + w.shape_str() + " x " + x.shape_str());
            int m = w.dim(0), k = w.dim(1);
            if (n.val.size() != m) n.val = Tensor({m}, prec_);
            const double* pw = w.data();
            const double* px = x.data();
            double* o = n.val.data();
            for (int r = 0; r < m; ++r) {
                double acc = 0.0;
                const double* row = pw + static_cast<int64_t>(r) * k;
                for (int j = 0; j < k; ++j) acc += row[j] * px[j];
                o[r] = acc;
            }
            return;
        }
        case Op::kIndex: {
            const Tensor& a = val_of(n.a);
            if (n.i0 < 0 || n.i0 >= a.size())
                fail(n, static_cast<int>(N.size()), "index out of range");
            if (n.val.size() != 1) n.val = Tensor({1}, prec_);
            n.val[0] = a[n.i0];
            return;
        }
        case Op::kConcat: {
            int64_t total = 0;
            for (int p : n.many) total += val_of(p).size();
            if (n.val.size() != total) n.val = Tensor({static_cast<int>(total)}, prec_);
            int64_t off = 0;
            for (int p : n.many) {
                const Tensor& t = val_of(p);
                for (int64_t i = 0; i < t.size(); ++i) n.val[off + i] = t[i];
                off += t.size();
            }
            return;
        }
        case Op::kBroadcast: {
            const Tensor& a = val_of(n.a);
            if (a.size() != 1) fail(n, static_cast<int>(N.size()), "broadcast expects a scalar");
            if (n.val.size() != n.i0) n.val = Tensor({n.i0}, prec_);
            for (int64_t i = 0; i < n.val.size(); ++i) n.val[i] = a[0];
            return;
        }
        case Op::kSum: {
            const Tensor& a = val_of(n.a);
            if (n.val.size() != 1) n.val = Tensor({1}, prec_);
            double acc = 0.0;
            for (int64_t i = 0; i < a.size(); ++i) acc += a[i];
            n.val[0] = acc;
            return;
        }
        case Op::kLogSumExp: {
            const Tensor& a = val_of(n.a);
            if (a.size() == 0) fail(n, static_cast<int>(N.size()), "empty input");
            if (n.val.size() != 1) n.val = Tensor({1}, prec_);
            double m = a[0];
            for (int64_t i = 1; i < a.size(); ++i) m = std::max(m, a[i]);
            double acc = 0.0;
            for (int64_t i = 0; i < a.size(); ++i) acc += std::exp(a[i] - m);
            n.val[0] = m + std::log(acc);
            return;
        }
        case Op::kTanh:
        case Op::kSigmoid:
        case Op::kSoftplus:
        case Op::kExp:
        case Op::kLog:
        case Op::kCos:
        case Op::kSin:
        case Op::kSqrt:
        case Op::kSquare:
        case Op::kReciprocal:
        case Op::kClamp: {
            const Tensor& a = val_of(n.a);
            if (n.val.size() != a.size()) n.val = Tensor(a.shape(), prec_);
            double* o = n.val.data();
            const double* pa = a.data();
            for (int64_t i = 0; i < a.size(); ++i) {
                double x = pa[i];
                switch (n.op) {
                    case Op::kTanh: o[i] = std::tanh(x); break;
                    case Op::kSigmoid: o[i] = stable_sigmoid(x); break;
                    case Op::kSoftplus: o[i] = stable_softplus(x); break;
                    case Op::kExp: o[i] = std::exp(x); break;
                    case Op::kLog: o[i] = std::log(x); break;
                    case Op::kCos: o[i] = std::cos(x); break;
                    case Op::kSin: o[i] = std::sin(x); break;
                    case Op::kSqrt: o[i] = std::sqrt(x); break;
                    case Op::kSquare: o[i] = x * x; break;
                    case Op::kReciprocal: o[i] = 1.0 / x; break;
                    default: o[i] = std::min(std::max(x, n.p0), n.p1); break;
                }
            }
            return;
        }
        case Op::kConv2d: {
            const ConvDims& d = n.conv;
            const Tensor& x = val_of(n.a);
            const Tensor& w = val_of(n.b);
            const Tensor& b = val_of(n.c);
            if (x.size() != static_cast<int64_t>(d.cin) * d.h * d.w)
                fail(n, static_cast<int>(N.size()), "conv input size mismatch");
            if (w.size() != static_cast<int64_t>(d.cout) * d.cin * d.k * d.k)
                fail(n, static_cast<int>(N.size()), "conv weight size mismatch");
            if (b.size() != d.cout) fail(n, static_cast<int>(N.size()), "conv bias size mismatch");
            int ho = d.out_h(), wo = d.out_w();
            if (ho <= 0 || wo <= 0) fail(n, static_cast<int>(N.size()), "conv output empty");
            if (n.val.size() != static_cast<int64_t>(d.cout) * ho * wo)
                n.val = Tensor({d.cout * ho * wo}, prec_);
            double* o = n.val.data();
            for (int oc = 0; oc < d.cout; ++oc) {
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox) {
                        double acc = b[oc];
                        for (int ic = 0; ic < d.cin; ++ic) {
                            for (int ky = 0; ky < d.k; ++ky) {
                                int iy = oy * d.stride + ky - d.pad;
                                if (iy < 0 || iy >= d.h) continue;
                                for (int kx = 0; kx < d.k; ++kx) {
                                    int ix = ox * d.stride + kx - d.pad;
                                    if (ix < 0 || ix >= d.w) continue;
                                    acc += w[((static_cast<int64_t>(oc) * d.cin + ic) * d.k + ky) * d.k + kx] *
                                           x[(static_cast<int64_t>(ic) * d.h + iy) * d.w + ix];
                                }
                            }
                        }
                        o[(static_cast<int64_t>(oc) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
            return;
        }
        case Op::kUpsample2: {
            const Tensor& x = val_of(n.a);
            const ConvDims& d = n.conv;
            if (x.size() != static_cast<int64_t>(d.cin) * d.h * d.w)
                fail(n, static_cast<int>(N.size()), "upsample input size mismatch");
            int h2 = d.h * 2, w2 = d.w * 2;
            if (n.val.size() != static_cast<int64_t>(d.cin) * h2 * w2)
                n.val = Tensor({d.cin * h2 * w2}, prec_);
            for (int c = 0; c < d.cin; ++c)
                for (int y = 0; y < h2; ++y)
                    for (int xx = 0; xx < w2; ++xx)
                        n.val[(static_cast<int64_t>(c) * h2 + y) * w2 + xx] =
                            x[(static_cast<int64_t>(c) * d.h + y / 2) * d.w + xx / 2];
            return;
        }
    }
}

Val Graph::add(Val a, Val b) { check(a); check(b); return make(Op::kAdd, a.id, b.id, {}); }
Val Graph::sub(Val a, Val b) { check(a); check(b); return make(Op::kSub, a.id, b.id, {}); }
Val Graph::mul(Val a, Val b) { check(a); check(b); return make(Op::kMul, a.id, b.id, {}); }
Val Graph::div(Val a, Val b) { check(a); check(b); return make(Op::kDiv, a.id, b.id, {}); }

Val Graph::scale(Val a, double c) {
    check(a);
    Node n;
    n.op = Op::kScale;
    n.a = a.id;
    n.p0 = c;
    return Val{push(std::move(n)), this};
}

Val Graph::offset(Val a, double c) {
    check(a);
    Node n;
    n.op = Op::kOffset;
    n.a = a.id;
    n.p0 = c;
    return Val{push(std::move(n)), this};
}

Val Graph::matvec(Val w, Val x) { check(w); check(x); return make(Op::kMatVec, w.id, x.id, {}); }

Val Graph::index(Val a, int i) {
    check(a);
    Node n;
    n.op = Op::kIndex;
    n.a = a.id;
    n.i0 = i;
    return Val{push(std::move(n)), this};
}

Val Graph::concat(const std::vector<Val>& parts) {
    if (parts.empty()) throw std::invalid_argument("graph: concat of zero parts");
    Node n;
    n.op = Op::kConcat;
    for (Val p : parts) {
        check(p);
        n.many.push_back(p.id);
    }
    return Val{push(std::move(n)), this};
}

Val Graph::broadcast(Val a, int nelem) {
    check(a);
    if (nelem <= 0) throw std::invalid_argument("graph: broadcast to empty shape");
    Node n;
    n.op = Op::kBroadcast;
    n.a = a.id;
    n.i0 = nelem;
    return Val{push(std::move(n)), this};
}

Val Graph::sum(Val a) { check(a); return make(Op::kSum, a.id, -1, {}); }

Val Graph::mean(Val a) {
    check(a);
    int64_t n = nodes_[static_cast<size_t>(a.id)].val.size();
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Val Graph::logsumexp(Val a) { check(a); return make(Op::kLogSumExp, a.id, -1, {}); }
Val Graph::tanh(Val a) { check(a); return make(Op::kTanh, a.id, -1, {}); }
Val Graph::sigmoid(Val a) { check(a); return make(Op::kSigmoid, a.id, -1, {}); }
Val Graph::softplus(Val a) { check(a); return make(Op::kSoftplus, a.id, -1, {}); }
Val Graph::exp(Val a) { check(a); return make(Op::kExp, a.id, -1, {}); }
Val Graph::log(Val a) { check(a); return make(Op::kLog, a.id, -1, {}); }
Val Graph::cos(Val a) { check(a); return make(Op::kCos, a.id, -1, {}); }
Val Graph::sin(Val a) { check(a); return make(Op::kSin, a.id, -1, {}); }
Val Graph::sqrt(Val a) { check(a); return make(Op::kSqrt, a.id, -1, {}); }
Val Graph::square(Val a) { check(a); return make(Op::kSquare, a.id, -1, {}); }
Val Graph::reciprocal(Val a) { check(a); return make(Op::kReciprocal, a.id, -1, {}); }

Val Graph::clamp(Val a, double lo, double hi) {
    check(a);
    if (lo > hi) throw std::invalid_argument("graph: clamp with lo > hi");
    Node n;
    n.op = Op::kClamp;
    n.a = a.id;
    n.p0 = lo;
    n.p1 = hi;
    return Val{push(std::move(n)), this};
}

Val Graph::conv2d(Val x, Val w, Val b, const ConvDims& dims) {
    check(x); check(w); check(b);
    Node n;
    n.op = Op::kConv2d;
    n.a = x.id;
    n.b = w.id;
    n.c = b.id;
    n.conv = dims;
    return Val{push(std::move(n)), this};
}

Val Graph::upsample2(Val x, int c, int h, int w) {
    check(x);
    Node n;
    n.op = Op::kUpsample2;
    n.a = x.id;
    n.conv.cin = c;
    n.conv.h = h;
    n.conv.w = w;
    return Val{push(std::move(n)), this};
}

Val Graph::gaussian_sample(Val mean, Val logvar, const std::vector<double>& noise) {
    Val std_dev = exp(scale(logvar, 0.5));
    return add(mean, mul(std_dev, constant(noise)));
}

const Tensor& Graph::value(Val v) const {
    if (dirty_) throw std::runtime_error("graph: values stale, call recompute() first");
    return node(v).val;
}

double Graph::scalar_value(Val v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) throw std::invalid_argument("graph: node is not a scalar");
    return t[0];
}

void Graph::set_input(const std::string& name, Tensor t) {
    for (auto& [nm, id] : inputs_) {
        if (nm == name) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (t.shape() != n.val.shape())
                throw std::invalid_argument("graph: input '" + name + "' shape changed");
            n.val = Tensor(t.shape(), t.to_vector(), prec_);
            dirty_ = true;
            return;
        }
    }
    throw std::invalid_argument("graph: no input named '" + name + "'");
}

void Graph::recompute() {
    for (size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        if (n.op == Op::kConst || n.op == Op::kInput || n.op == Op::kParam) continue;
        eval_node(n);
        n.val.round_to_precision();
        if (check_finite_ && !n.val.all_finite())
            throw std::runtime_error(std::string("graph: non-finite value in op ") + op_name(n.op) +
                                     " (node " + std::to_string(i) + ")");
    }
    dirty_ = false;
}

Tensor& Graph::grad_of(std::vector<Tensor>& grads, int id) {
    Tensor& g = grads[static_cast<size_t>(id)];
    if (g.size() == 0) g = Tensor(nodes_[static_cast<size_t>(id)].val.shape(), Precision::f64);
    return g;
}

void Graph::backward(Val loss, GradBuffer& sink) {
    check(loss);
    if (dirty_) throw std::runtime_error("graph: backward before forward (stale inputs)");
    if (nodes_[static_cast<size_t>(loss.id)].val.size() != 1)
        throw std::invalid_argument("graph: loss must be a scalar");

    // Mark nodes reachable from the loss through parent edges.
    std::vector<uint8_t> reach(nodes_.size(), 0);
    std::vector<int> stack{loss.id};
    reach[static_cast<size_t>(loss.id)] = 1;
    auto visit = [&](int p) {
        if (p >= 0 && !reach[static_cast<size_t>(p)]) {
            reach[static_cast<size_t>(p)] = 1;
            stack.push_back(p);
        }
    };
    while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        const Node& n = nodes_[static_cast<size_t>(id)];
        visit(n.a);
        visit(n.b);
        visit(n.c);
        for (int p : n.many) visit(p);
    }

    std::vector<Tensor> grads(nodes_.size());
    grad_of(grads, loss.id)[0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        if (!reach[static_cast<size_t>(id)]) continue;
        const Node& n = nodes_[static_cast<size_t>(id)];
        Tensor& g = grads[static_cast<size_t>(id)];
        if (g.size() == 0) continue; // reachable but never received gradient

        switch (n.op) {
            case Op::kConst:
            case Op::kInput:
                break;
            case Op::kParam: {
                Tensor& out = sink.grad(n.param_id);
                for (int64_t i = 0; i < g.size(); ++i) out[i] += g[i];
                break;
            }
            case Op::kAdd: {
                Tensor& ga = grad_of(grads, n.a);
                Tensor& gb = grad_of(grads, n.b);
                for (int64_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] += g[i]; }
                break;
            }
            case Op::kSub: {
                Tensor& ga = grad_of(grads, n.a);
                Tensor& gb = grad_of(grads, n.b);
                for (int64_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] -= g[i]; }
                break;
            }
            case Op::kMul: {
                const Tensor& va = nodes_[static_cast<size_t>(n.a)].val;
                const Tensor& vb = nodes_[static_cast<size_t>(n.b)].val;
                Tensor& ga = grad_of(grads, n.a);
                Tensor& gb = grad_of(grads, n.b);
                for (int64_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * vb[i];
                    gb[i] += g[i] * va[i];
                }
                break;
            }
            case Op::kDiv: {
                const Tensor& vb = nodes_[static_cast<size_t>(n.b)].val;
                Tensor& ga = grad_of(grads, n.a);
                Tensor& gb = grad_of(grads, n.b);
                for (int64_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] / vb[i];
                    gb[i] -= g[i] * n.val[i] / vb[i];
                }
                break;
            }
            case Op::kScale: {
                Tensor& ga = grad_of(grads, n.a);
                for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.p0;
                break;
            }
            case Op::kOffset: {
                Tensor& ga = grad_of(grads, n.a);
                for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                break;
            }
            case Op::kMatVec: {
                const Tensor& w = nodes_[static_cast<size_t>(n.a)].val;
                const Tensor& x = nodes_[static_cast<size_t>(n.b)].val;
                Tensor& gw = grad_of(grads, n.a);
                Tensor& gx = grad_of(grads, n.b);
                int m = w.dim(0), k = w.dim(1);
                for (int r = 0; r < m; ++r) {
                    double gr = g[r];
                    if (gr == 0.0) continue;
                    const double* wrow = w.data() + static_cast<int64_t>(r) * k;
                    double* gwrow = gw.data() + static_cast<int64_t>(r) * k;
                    for (int j = 0; j < k; ++j) {
                        gwrow[j] += gr * x[j];
                        gx[j] += gr * wrow[j];
                    }
                }
                break;
            }
            case Op::kIndex: {
                Tensor& ga = grad_of(grads, n.a);
                ga[n.i0] += g[0];
                break;
            }
            case Op::kConcat: {
                int64_t off = 0;
                for (int p : n.many) {
                    Tensor& gp = grad_of(grads, p);
                    for (int64_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
                    off += gp.size();
                }
                break;
            }
            case Op::kBroadcast: {
                Tensor& ga = grad_of(grads, n.a);
                double acc = 0.0;
                for (int64_t i = 0; i < g.size(); ++i) acc += g[i];
                ga[0] += acc;
                break;
            }
            case Op::kSum: {
                Tensor& ga = grad_of(grads, n.a);
                for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                break;
            }
            case Op::kLogSumExp: {
                const Tensor& va = nodes_[static_cast<size_t>(n.a)].val;
                Tensor& ga = grad_of(grads, n.a);
                double lse = n.val[0];
                for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * std::exp(va[i] - lse);
                break;
            }
            case Op::kTanh:
            case Op::kSigmoid:
            case Op::kSoftplus:
            case Op::kExp:
            case Op::kLog:
            case Op::kCos:
            case Op::kSin:
            case Op::kSqrt:
            case Op::kSquare:
            case Op::kReciprocal:
            case Op::kClamp: {
                const Tensor& va = nodes_[static_cast<size_t>(n.a)].val;
                Tensor& ga = grad_of(grads, n.a);
                for (int64_t i = 0; i < g.size(); ++i) {
                    double d;
                    double x = va[i], y = n.val[i];
                    switch (n.op) {
                        case Op::kTanh: d = 1.0 - y * y; break;
                        case Op::kSigmoid: d = y * (1.0 - y); break;
                        case Op::kSoftplus: d = stable_sigmoid(x); break;
                        case Op::kExp: d = y; break;
                        case Op::kLog: d = 1.0 / x; break;
                        case Op::kCos: d = -std::sin(x); break;
                        case Op::kSin: d = std::cos(x); break;
                        case Op::kSqrt: d = 0.5 / y; break;
                        case Op::kSquare: d = 2.0 * x; break;
                        case Op::kReciprocal: d = -y * y; break;
                        default: d = (x >= n.p0 && x <= n.p1) ? 1.0 : 0.0; break;
                    }
                    ga[i] += g[i] * d;
                }
                break;
            }
            case Op::kConv2d: {
                const ConvDims& d = n.conv;
                const Tensor& x = nodes_[static_cast<size_t>(n.a)].val;
                const Tensor& w = nodes_[static_cast<size_t>(n.b)].val;
                Tensor& gx = grad_of(grads, n.a);
                Tensor& gw = grad_of(grads, n.b);
                Tensor& gb = grad_of(grads, n.c);
                int ho = d.out_h(), wo = d.out_w();
                for (int oc = 0; oc < d.cout; ++oc) {
                    for (int oy = 0; oy < ho; ++oy) {
                        for (int ox = 0; ox < wo; ++ox) {
                            double go = g[(static_cast<int64_t>(oc) * ho + oy) * wo + ox];
                            if (go == 0.0) continue;
                            gb[oc] += go;
                            for (int ic = 0; ic < d.cin; ++ic) {
                                for (int ky = 0; ky < d.k; ++ky) {
                                    int iy = oy * d.stride + ky - d.pad;
                                    if (iy < 0 || iy >= d.h) continue;
                                    for (int kx = 0; kx < d.k; ++kx) {
                                        int ix = ox * d.stride + kx - d.pad;
                                        if (ix < 0 || ix >= d.w) continue;
                                        int64_t wi = ((static_cast<int64_t>(oc) * d.cin + ic) * d.k + ky) * d.k + kx;
                                        int64_t xi = (static_cast<int64_t>(ic) * d.h + iy) * d.w + ix;
                                        gw[wi] += go * x[xi];
                                        gx[xi] += go * w[wi];
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
            case Op::kUpsample2: {
                const ConvDims& d = n.conv;
                Tensor& gx = grad_of(grads, n.a);
                int h2 = d.h * 2, w2 = d.w * 2;
                for (int c = 0; c < d.cin; ++c)
                    for (int y = 0; y < h2; ++y)
                        for (int xx = 0; xx < w2; ++xx)
                            gx[(static_cast<int64_t>(c) * d.h + y / 2) * d.w + xx / 2] +=
                                g[(static_cast<int64_t>(c) * h2 + y) * w2 + xx];
                break;
            }
        }
    }
}

} // namespace gtmsm
