#include "gtmsm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtmsm {

namespace {

// Gaussian elimination with partial pivoting; A is n x n, b is n.
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    size_t n = a.size();
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-12)
            throw std::runtime_error("affine fit: degenerate point configuration");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (size_t r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            for (size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
        x[i] = acc / a[i][i];
    }
    return x;
}

double frame_mse(const double* a, const float* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = a[i] - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

double frame_bce(const double* p, const float* t, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double q = std::clamp(p[i], 1e-7, 1.0 - 1e-7);
        double x = static_cast<double>(t[i]);
        acc -= x * std::log(q) + (1.0 - x) * std::log(1.0 - q);
    }
    return acc / static_cast<double>(n);
}

std::vector<double> widen(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

} // namespace

std::vector<double> AffineMap::apply(const std::vector<double>& s) const {
    std::vector<double> out(rows.size(), 0.0);
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != s.size() + 1)
            throw std::invalid_argument("affine map: dimension mismatch");
        double acc = rows[r].back();
        for (size_t c = 0; c < s.size(); ++c) acc += rows[r][c] * s[c];
        out[r] = acc;
    }
    return out;
}

AffineMap fit_affine(const std::vector<std::vector<double>>& states,
                     const std::vector<std::vector<double>>& positions) {
    if (states.size() != positions.size())
        throw std::invalid_argument("affine fit: count mismatch");
    size_t ds = states.empty() ? 0 : states[0].size();
    size_t dp = positions.empty() ? 0 : positions[0].size();
    if (states.size() < ds + 2)
        throw std::invalid_argument("affine fit: not enough points");

    size_t n = ds + 1;
    std::vector<std::vector<double>> xtx(n, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> xty(dp, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < states.size(); ++i) {
        std::vector<double> row(states[i]);
        row.push_back(1.0);
        for (size_t a = 0; a < n; ++a) {
            for (size_t b = 0; b < n; ++b) xtx[a][b] += row[a] * row[b];
            for (size_t d = 0; d < dp; ++d) xty[d][a] += row[a] * positions[i][d];
        }
    }

    AffineMap map;
    for (size_t d = 0; d < dp; ++d) map.rows.push_back(solve_linear(xtx, xty[d]));
    return map;
}

AffineReport eval_affine_alignment(const std::vector<std::vector<double>>& states,
                                   const std::vector<std::vector<double>>& positions) {
    if (states.size() != positions.size() || states.size() < 4)
        throw std::invalid_argument("affine alignment: need matching points, at least 4");

    std::vector<std::vector<double>> fit_s, fit_p, test_s, test_p;
    for (size_t i = 0; i < states.size(); ++i) {
        if (i % 2 == 0) {
            fit_s.push_back(states[i]);
            fit_p.push_back(positions[i]);
        } else {
            test_s.push_back(states[i]);
            test_p.push_back(positions[i]);
        }
    }

    AffineReport rep;
    rep.map = fit_affine(fit_s, fit_p);

    size_t dp = test_p[0].size();
    std::vector<double> mean(dp, 0.0);
    for (const auto& p : test_p)
        for (size_t d = 0; d < dp; ++d) mean[d] += p[d];
    for (auto& v : mean) v /= static_cast<double>(test_p.size());

    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < test_s.size(); ++i) {
        std::vector<double> pred = rep.map.apply(test_s[i]);
        for (size_t d = 0; d < dp; ++d) {
            double e = pred[d] - test_p[i][d];
            double c = test_p[i][d] - mean[d];
            ss_res += e * e;
            ss_tot += c * c;
        }
    }
    rep.rmse = std::sqrt(ss_res / (static_cast<double>(test_s.size()) * static_cast<double>(dp)));
    rep.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    return rep;
}

PredictionErrorReport eval_prediction_error(const std::vector<std::vector<double>>& generated,
                                            const std::vector<std::vector<float>>& truth,
                                            const std::vector<float>& mean_frame,
                                            const std::vector<float>& last_frame) {
    if (generated.size() != truth.size())
        throw std::invalid_argument("prediction error: length mismatch");
    if (generated.empty()) throw std::invalid_argument("prediction error: empty input");
    size_t n = generated[0].size();

    PredictionErrorReport rep;
    for (size_t t = 0; t < generated.size(); ++t) {
        if (generated[t].size() != n || truth[t].size() != n)
            throw std::invalid_argument("prediction error: frame shape mismatch");
        rep.mse.push_back(frame_mse(generated[t].data(), truth[t].data(), n));
        rep.bce.push_back(frame_bce(generated[t].data(), truth[t].data(), n));

        std::vector<double> bm = widen(mean_frame), bl = widen(last_frame);
        rep.baseline_mean_mse.push_back(frame_mse(bm.data(), truth[t].data(), n));
        rep.baseline_mean_bce.push_back(frame_bce(bm.data(), truth[t].data(), n));
        rep.baseline_last_mse.push_back(frame_mse(bl.data(), truth[t].data(), n));
        rep.baseline_last_bce.push_back(frame_bce(bl.data(), truth[t].data(), n));

        rep.mean_mse += rep.mse.back();
        rep.mean_bce += rep.bce.back();
    }
    rep.mean_mse /= static_cast<double>(generated.size());
    rep.mean_bce /= static_cast<double>(generated.size());

    for (int h : {1, 32, 128, 256}) {
        if (static_cast<size_t>(h) <= generated.size()) {
            rep.horizon_mse[h] = rep.mse[static_cast<size_t>(h) - 1];
            rep.horizon_bce[h] = rep.bce[static_cast<size_t>(h) - 1];
        }
    }
    return rep;
}

std::vector<float> dataset_mean_frame(const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("mean frame: empty dataset");
    std::vector<double> acc(static_cast<size_t>(data.frame_dim()), 0.0);
    int64_t count = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        Episode ep = data.episode(i);
        for (const auto& f : ep.frames) {
            for (size_t p = 0; p < acc.size(); ++p) acc[p] += static_cast<double>(f[p]);
            ++count;
        }
    }
    std::vector<float> mean(acc.size());
    for (size_t p = 0; p < acc.size(); ++p)
        mean[p] = static_cast<float>(acc[p] / static_cast<double>(count));
    return mean;
}

double displacement_rmse(const std::vector<std::vector<double>>& predicted,
                         const std::vector<std::vector<float>>& truth, int tau) {
    if (predicted.empty()) throw std::invalid_argument("displacement rmse: empty input");
    if (static_cast<size_t>(tau) + predicted.size() > truth.size())
        throw std::invalid_argument("displacement rmse: length mismatch");
    double acc = 0.0;
    int64_t count = 0;
    for (size_t j = 0; j < predicted.size(); ++j) {
        const auto& t = truth[static_cast<size_t>(tau) + j];
        if (predicted[j].size() != t.size())
            throw std::invalid_argument("displacement rmse: dimension mismatch");
        for (size_t d = 0; d < t.size(); ++d) {
            double e = predicted[j][d] - static_cast<double>(t[d]);
            acc += e * e;
            ++count;
        }
    }
    return std::sqrt(acc / static_cast<double>(count));
}

} // namespace gtmsm
