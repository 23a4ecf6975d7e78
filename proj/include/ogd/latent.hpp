#pragma once

#include <vector>

#include "ogd/stats.hpp"

namespace ogd {

/// Linear trajectory embedding: encode z = U^T x, decode x = V^T z.
/// eta is the learnable target latent standard deviation.
struct LinearMap {
    Mat U;  // X x Z
    Mat V;  // Z x X
    double eta = 1.0;

    int input_dim() const { return static_cast<int>(U.rows()); }
    int latent_dim() const { return static_cast<int>(U.cols()); }
};

Vec encode(const LinearMap& map, const Vec& x);
Vec decode(const LinearMap& map, const Vec& z);
Mat encode_rows(const LinearMap& map, const Mat& x_rows);

struct LatentLossWeights {
    double rec = 1.0;
    double reg = 1.0;
    double var = 1.0;
};

struct LatentLosses {
    double rec = 0.0;
    double reg = 0.0;
    double var = 0.0;
    double total(const LatentLossWeights& w) const {
        return w.rec * rec + w.reg * reg + w.var * var;
    }
};

LatentLosses linear_map_losses(const LinearMap& map, const Mat& x_rows);

/// Weighted-loss gradient used by training; exposed for gradient checks.
LatentLosses linear_map_loss_grad(const LinearMap& map, const Mat& x_rows,
                                  const LatentLossWeights& weights, Mat& grad_U, Mat& grad_V,
                                  double& grad_eta);

struct LatentTrainConfig {
    int steps = 3000;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    LatentLossWeights weights;
};

struct LatentTrainResult {
    std::vector<double> total_curve;
    std::vector<LatentLosses> component_curve;
};

/// Full-batch gradient descent with a halving/growing step size. Deterministic
/// in seed; `init` overrides the random initialization when provided.
LatentTrainResult train_linear_map(LinearMap& map, const Mat& x_rows, int latent_dim,
                                   const LatentTrainConfig& cfg, const LinearMap* init = nullptr);

/// Exact pushforward of a mixture through the encoder: means U^T mu,
/// covariances U^T S U, weights unchanged.
GaussianMixture pushforward_gmm(const LinearMap& map, const GaussianMixture& gmm);

}  // namespace ogd
