#include "gtmsm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gtmsm {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " tol=" << tolerance;
    for (const auto& g : groups)
        os << "\n  " << g.name << ": max_rel_err=" << g.max_rel_err << " checked=" << g.checked;
    return os.str();
}

GradCheckReport grad_check(const std::function<double(bool)>& loss_fn, Params& params,
                           double eps, double tolerance, int64_t max_per_group, RngStream pick) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");

    // Determinism gate: two plain evaluations must agree bit for bit.
    double l0 = loss_fn(false);
    double l1 = loss_fn(false);
    if (l0 != l1)
        throw std::runtime_error("grad_check: loss is not deterministic (" +
                                 std::to_string(l0) + " vs " + std::to_string(l1) + ")");

    params.zero_grad();
    loss_fn(true);

    // Snapshot analytic gradients before poking values.
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& g : params.groups()) analytic.push_back(g.grad);

    GradCheckReport report;
    report.tolerance = tolerance;
    for (size_t gi = 0; gi < params.size(); ++gi) {
        ParamGroup& p = params.groups()[gi];
        GradCheckGroupReport gr;
        gr.name = p.name;

        std::vector<int64_t> idx(static_cast<size_t>(p.value.size()));
        std::iota(idx.begin(), idx.end(), 0);
        if (max_per_group > 0 && p.value.size() > max_per_group) {
            // Fisher-Yates prefix shuffle, then keep the prefix.
            RngStream r = pick.split(p.name);
            for (int64_t i = 0; i < max_per_group; ++i) {
                int64_t j = i + r.uniform_int(static_cast<int>(p.value.size() - i));
                std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
            }
            idx.resize(static_cast<size_t>(max_per_group));
        }

        for (int64_t i : idx) {
            double keep = p.value[i];
            p.value[i] = keep + eps;
            double lp = loss_fn(false);
            p.value[i] = keep - eps;
            double lm = loss_fn(false);
            p.value[i] = keep;

            double fd = (lp - lm) / (2.0 * eps);
            double an = analytic[gi][i];
            double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
            gr.max_rel_err = std::max(gr.max_rel_err, rel);
            ++gr.checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, gr.max_rel_err);
        report.groups.push_back(std::move(gr));
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

} // namespace gtmsm
