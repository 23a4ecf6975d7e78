#include "ogd/latent.hpp"

#include <cmath>
#include <stdexcept>

namespace ogd {

Vec encode(const LinearMap& map, const Vec& x) { return map.U.transpose() * x; }

Vec decode(const LinearMap& map, const Vec& z) { return map.V.transpose() * z; }

Mat encode_rows(const LinearMap& map, const Mat& x_rows) { return x_rows * map.U; }

namespace {

struct LossAccum {
    LatentLosses losses;
    Mat gU, gV;
    double g_eta = 0.0;
};

Vec latent_std(const Mat& z_rows) {
    const Vec mean = z_rows.colwise().mean().transpose();
    const Mat centered = z_rows.rowwise() - mean.transpose();
    return (centered.array().square().colwise().mean() + 1e-12).sqrt().matrix().transpose();
}

LossAccum eval(const LinearMap& map, const Mat& x_rows, const LatentLossWeights& w,
               bool want_grad) {
    const Eigen::Index B = x_rows.rows();
    const Eigen::Index X = x_rows.cols();
    const Eigen::Index Z = map.U.cols();
    LossAccum acc;
    acc.gU = Mat::Zero(X, Z);
    acc.gV = Mat::Zero(Z, X);

    const Mat z_rows = x_rows * map.U;          // B x Z
    const Mat xhat_rows = z_rows * map.V;       // B x X
    const Mat resid = xhat_rows - x_rows;       // B x X
    acc.losses.rec = resid.rowwise().squaredNorm().mean();

    const Vec sq_gap = (x_rows.rowwise().squaredNorm() - z_rows.rowwise().squaredNorm());
    acc.losses.reg = sq_gap.array().square().mean();

    const Vec mean_z = z_rows.colwise().mean().transpose();
    const Mat centered = z_rows.rowwise() - mean_z.transpose();
    const Vec sigma = latent_std(z_rows);
    acc.losses.var = (sigma.array() - map.eta).square().sum();

    if (!want_grad) return acc;

    // reconstruction
    acc.gV += w.rec * (2.0 / double(B)) * z_rows.transpose() * resid;
    Mat dz = (2.0 / double(B)) * w.rec * (resid * map.V.transpose());  // B x Z

    // distance preservation
    // d/dz of (||x||^2 - ||z||^2)^2 = -4 gap z
    dz -= (4.0 / double(B)) * w.reg * (sq_gap.asDiagonal() * z_rows);

    // latent variance
    for (Eigen::Index j = 0; j < Z; ++j) {
        const double coef = 2.0 * w.var * (sigma[j] - map.eta) / (double(B) * sigma[j]);
        dz.col(j) += coef * centered.col(j);
    }
    acc.g_eta = -2.0 * w.var * (sigma.array() - map.eta).sum();

    acc.gU += x_rows.transpose() * dz;
    return acc;
}

}  // namespace

LatentLosses linear_map_losses(const LinearMap& map, const Mat& x_rows) {
    return eval(map, x_rows, LatentLossWeights{}, false).losses;
}

LatentLosses linear_map_loss_grad(const LinearMap& map, const Mat& x_rows,
                                  const LatentLossWeights& weights, Mat& grad_U, Mat& grad_V,
                                  double& grad_eta) {
    LossAccum acc = eval(map, x_rows, weights, true);
    grad_U = std::move(acc.gU);
    grad_V = std::move(acc.gV);
    grad_eta = acc.g_eta;
    return acc.losses;
}

LatentTrainResult train_linear_map(LinearMap& map, const Mat& x_rows, int latent_dim,
                                   const LatentTrainConfig& cfg, const LinearMap* init) {
    const Eigen::Index X = x_rows.cols();
    if (latent_dim > X) throw std::invalid_argument("latent dimension exceeds input dimension");
    if (x_rows.rows() < 10 * X) throw std::invalid_argument("need at least 10*X samples");

    // Optimize on unit-scale data: the losses are scale-coupled (quartic in
    // the trajectory norm) and a single step size cannot serve raw meters.
    // A map trained on x/s satisfies the original-coordinate objectives with
    // U, V unchanged and eta scaled back by s.
    const double scale = std::max(1e-12, std::sqrt(x_rows.array().square().rowwise().sum().mean()));
    const Mat scaled = x_rows / scale;

    if (init) {
        map = *init;
        map.eta /= scale;
    } else {
        Rng rng(cfg.seed);
        map.U.resize(X, latent_dim);
        map.V.resize(latent_dim, X);
        const double su = 1.0 / std::sqrt(double(latent_dim));
        const double sv = 1.0 / std::sqrt(double(X));
        for (Eigen::Index i = 0; i < X; ++i)
            for (Eigen::Index j = 0; j < latent_dim; ++j) map.U(i, j) = su * rng.normal();
        for (Eigen::Index i = 0; i < latent_dim; ++i)
            for (Eigen::Index j = 0; j < X; ++j) map.V(i, j) = sv * rng.normal();
        map.eta = 1.0;
    }

    LatentTrainResult result;
    double lr = cfg.lr;
    LossAccum cur = eval(map, scaled, cfg.weights, true);
    for (int step = 0; step < cfg.steps; ++step) {
        double total = cur.losses.total(cfg.weights);
        if (!std::isfinite(total)) throw std::runtime_error("training diverged");
        result.total_curve.push_back(total);
        result.component_curve.push_back(cur.losses);
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            LinearMap trial = map;
            trial.U -= lr * cur.gU;
            trial.V -= lr * cur.gV;
            trial.eta -= lr * cur.g_eta;
            LossAccum next = eval(trial, scaled, cfg.weights, true);
            if (next.losses.total(cfg.weights) <= total) {
                map = trial;
                cur = next;
                lr *= 1.1;
                moved = true;
                break;
            }
            lr *= 0.5;
        }
        if (!moved) break;
    }
    map.eta *= scale;
    return result;
}

GaussianMixture pushforward_gmm(const LinearMap& map, const GaussianMixture& gmm) {
    std::vector<Gaussian> comps;
    comps.reserve(static_cast<std::size_t>(gmm.size()));
    for (int m = 0; m < gmm.size(); ++m) {
        const auto& c = gmm.component(m);
        comps.emplace_back(map.U.transpose() * c.mean(),
                           Mat(map.U.transpose() * c.cov() * map.U));
    }
    return GaussianMixture(gmm.weights(), std::move(comps));
}

}  // namespace ogd
