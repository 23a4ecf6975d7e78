#pragma once

#include <vector>

#include "ogd/rng.hpp"

namespace ogd {

/// Multivariate normal with a dense SPD covariance. The Cholesky factor is
/// computed on construction; factorization failure is the PSD check.
class Gaussian {
public:
    Gaussian(Vec mean, Mat cov);

    int dim() const { return static_cast<int>(mean_.size()); }
    const Vec& mean() const { return mean_; }
    const Mat& cov() const { return cov_; }
    const Mat& chol() const { return chol_; }  // lower triangular, cov = L L^T
    double log_det() const { return log_det_; }

    double log_density(const Vec& x) const;
    Vec sample(Rng& rng) const;
    Vec solve_cov(const Vec& v) const;  // cov^{-1} v via the stored factor

private:
    Vec mean_;
    Mat cov_;
    Mat chol_;
    double log_det_ = 0.0;
};

class GaussianMixture {
public:
    GaussianMixture(Vec weights, std::vector<Gaussian> components);

    int dim() const { return comps_.front().dim(); }
    int size() const { return static_cast<int>(comps_.size()); }
    const Vec& weights() const { return weights_; }
    const Vec& log_weights() const { return log_weights_; }
    const Gaussian& component(int m) const { return comps_[static_cast<std::size_t>(m)]; }
    const std::vector<Gaussian>& components() const { return comps_; }

    double log_density(const Vec& x) const;
    Vec sample(Rng& rng) const;
    Mat sample_matrix(int n, std::uint64_t seed) const;  // one draw per row

private:
    Vec weights_;
    Vec log_weights_;
    std::vector<Gaussian> comps_;
};

/// First two moments of a data distribution (mu_d, Sigma_d).
struct DataStats {
    Vec mean;
    Mat cov;
};

double log_sum_exp(const Vec& v);

DataStats gmm_moments(const GaussianMixture& gmm);

/// Exact score of the mixture density, responsibilities in log space.
Vec gmm_score(const GaussianMixture& gmm, const Vec& x);

/// u -> H(x) u where H is the Hessian of the mixture log-density.
Vec gmm_score_hessian_vec(const GaussianMixture& gmm, const Vec& x, const Vec& u);

double kl_gaussian(const Gaussian& p, const Gaussian& q);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo KL(p || q) with reported standard error; deterministic in seed.
McEstimate kl_gmm_vs_gaussian(const GaussianMixture& p, const Gaussian& q, int n_draws,
                              std::uint64_t seed);

}  // namespace ogd
