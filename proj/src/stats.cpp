#include "ogd/stats.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ogd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

void check_symmetric(const Mat& cov) {
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    const double skew = (cov - cov.transpose()).cwiseAbs().maxCoeff();
    if (skew > 1e-10 * scale) throw std::invalid_argument("covariance not symmetric");
}

}  // namespace

Gaussian::Gaussian(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || mean_.size() != cov_.rows())
        throw std::invalid_argument("mean/covariance dimension mismatch");
    check_symmetric(cov_);
    cov_ = ((cov_ + cov_.transpose()) * 0.5).eval();
    Eigen::LLT<Mat> llt(cov_);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("covariance not positive definite");
    chol_ = llt.matrixL();
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

double Gaussian::log_density(const Vec& x) const {
    const Vec y = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
    return -0.5 * (dim() * kLog2Pi + log_det_ + y.squaredNorm());
}

Vec Gaussian::sample(Rng& rng) const {
    return mean_ + chol_ * rng.normal_vec(mean_.size());
}

Vec Gaussian::solve_cov(const Vec& v) const {
    Vec y = chol_.triangularView<Eigen::Lower>().solve(v);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

GaussianMixture::GaussianMixture(Vec weights, std::vector<Gaussian> components)
    : weights_(std::move(weights)), comps_(std::move(components)) {
    if (comps_.empty() || weights_.size() != static_cast<Eigen::Index>(comps_.size()))
        throw std::invalid_argument("weights/components mismatch");
    if (weights_.minCoeff() < 0.0) throw std::invalid_argument("negative mixture weight");
    if (std::abs(weights_.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("mixture weights do not sum to 1");
    weights_ /= weights_.sum();
    const int d = comps_.front().dim();
    for (const auto& c : comps_)
        if (c.dim() != d) throw std::invalid_argument("mixture components of unequal dimension");
    log_weights_ = weights_.array().max(1e-300).log().matrix();
}

double GaussianMixture::log_density(const Vec& x) const {
    Vec terms(size());
    for (int m = 0; m < size(); ++m)
        terms[m] = log_weights_[m] + comps_[static_cast<std::size_t>(m)].log_density(x);
    return log_sum_exp(terms);
}

Vec GaussianMixture::sample(Rng& rng) const {
    const int m = rng.pick_category(weights_);
    return comps_[static_cast<std::size_t>(m)].sample(rng);
}

Mat GaussianMixture::sample_matrix(int n, std::uint64_t seed) const {
    Mat out(n, dim());
    Rng rng(seed);
    for (int i = 0; i < n; ++i) out.row(i) = sample(rng).transpose();
    return out;
}

double log_sum_exp(const Vec& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

DataStats gmm_moments(const GaussianMixture& gmm) {
    const int d = gmm.dim();
    Vec mean = Vec::Zero(d);
    for (int m = 0; m < gmm.size(); ++m) mean += gmm.weights()[m] * gmm.component(m).mean();
    Mat cov = Mat::Zero(d, d);
    for (int m = 0; m < gmm.size(); ++m) {
        const auto& c = gmm.component(m);
        cov += gmm.weights()[m] * (c.cov() + c.mean() * c.mean().transpose());
    }
    cov -= mean * mean.transpose();
    cov = ((cov + cov.transpose()) * 0.5).eval();
    return {std::move(mean), std::move(cov)};
}

Vec gmm_score(const GaussianMixture& gmm, const Vec& x) {
    if (x.size() != gmm.dim()) throw std::invalid_argument("score input dimension mismatch");
    const int M = gmm.size();
    Vec log_terms(M);
    for (int m = 0; m < M; ++m)
        log_terms[m] = gmm.log_weights()[m] + gmm.component(m).log_density(x);
    const double log_p = log_sum_exp(log_terms);
    Vec score = Vec::Zero(x.size());
    for (int m = 0; m < M; ++m) {
        const double r = std::exp(log_terms[m] - log_p);
        if (r == 0.0) continue;
        score += r * gmm.component(m).solve_cov(gmm.component(m).mean() - x);
    }
    return score;
}

Vec gmm_score_hessian_vec(const GaussianMixture& gmm, const Vec& x, const Vec& u) {
    const int M = gmm.size();
    Vec log_terms(M);
    for (int m = 0; m < M; ++m)
        log_terms[m] = gmm.log_weights()[m] + gmm.component(m).log_density(x);
    const double log_p = log_sum_exp(log_terms);
    Vec s = Vec::Zero(x.size());
    Vec hu = Vec::Zero(x.size());
    for (int m = 0; m < M; ++m) {
        const double r = std::exp(log_terms[m] - log_p);
        if (r == 0.0) continue;
        const Vec g = gmm.component(m).solve_cov(gmm.component(m).mean() - x);
        s += r * g;
        hu += r * (g * g.dot(u) - gmm.component(m).solve_cov(u));
    }
    hu -= s * s.dot(u);
    return hu;
}

double kl_gaussian(const Gaussian& p, const Gaussian& q) {
    if (p.dim() != q.dim()) throw std::invalid_argument("KL dimension mismatch");
    if (q.chol().diagonal().minCoeff() < 1e-150)
        throw std::invalid_argument("singular covariance");
    const int d = p.dim();
    // tr(Sq^-1 Sp) via the triangular factor of q
    const Mat w = q.chol().triangularView<Eigen::Lower>().solve(p.chol());
    const double trace = w.squaredNorm();
    const Vec dm = q.chol().triangularView<Eigen::Lower>().solve(p.mean() - q.mean());
    return 0.5 * (trace + dm.squaredNorm() - d + q.log_det() - p.log_det());
}

McEstimate kl_gmm_vs_gaussian(const GaussianMixture& p, const Gaussian& q, int n_draws,
                              std::uint64_t seed) {
    if (n_draws < 1000) throw std::invalid_argument("kl_gmm_vs_gaussian needs n_draws >= 1000");
    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n_draws; ++i) {
        const Vec x = p.sample(rng);
        const double f = p.log_density(x) - q.log_density(x);
        sum += f;
        sum_sq += f * f;
    }
    const double mean = sum / n_draws;
    const double var = std::max(0.0, sum_sq / n_draws - mean * mean);
    return {mean, std::sqrt(var / n_draws)};
}

}  // namespace ogd
