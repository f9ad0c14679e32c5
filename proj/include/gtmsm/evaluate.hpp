// Evaluation: affine alignment of inferred states against ground truth,
// per-step prediction error curves with baselines, displacement recovery.
#pragma once

#include "gtmsm/dataset.hpp"

#include <map>
#include <vector>

namespace gtmsm {

struct AffineMap {
    // Row per output dimension: [w_1 .. w_d, bias].
    std::vector<std::vector<double>> rows;
    std::vector<double> apply(const std::vector<double>& s) const;
};

// Least-squares affine map from states to positions over all pairs.
// Throws on rank-deficient normal equations.
AffineMap fit_affine(const std::vector<std::vector<double>>& states,
                     const std::vector<std::vector<double>>& positions);

struct AffineReport {
    AffineMap map;   // fit on the even-index half
    double r2 = 0.0; // coefficient of determination on the odd-index half
    double rmse = 0.0;
};

AffineReport eval_affine_alignment(const std::vector<std::vector<double>>& states,
                                   const std::vector<std::vector<double>>& positions);

struct PredictionErrorReport {
    std::vector<double> mse, bce;
    std::vector<double> baseline_mean_mse, baseline_mean_bce; // mean training frame
    std::vector<double> baseline_last_mse, baseline_last_bce; // last observed frame
    std::map<int, double> horizon_mse;                        // {1,32,128,256} within range
    std::map<int, double> horizon_bce;
    double mean_mse = 0.0;
    double mean_bce = 0.0;
};

PredictionErrorReport eval_prediction_error(const std::vector<std::vector<double>>& generated,
                                            const std::vector<std::vector<float>>& truth,
                                            const std::vector<float>& mean_frame,
                                            const std::vector<float>& last_frame);

// Pixel average over every frame of every sequence.
std::vector<float> dataset_mean_frame(const Dataset& data);

double displacement_rmse(const std::vector<std::vector<double>>& predicted,
                         const std::vector<std::vector<float>>& truth, int tau);

} // namespace gtmsm
