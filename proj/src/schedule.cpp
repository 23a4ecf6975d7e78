#include "ogd/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace ogd {

namespace {

void check_index(int idx, int T) {
    if (idx < 0 || idx >= T) throw std::out_of_range("invalid step index");
}

}  // namespace

double DiffusionSchedule::beta(int idx) const {
    check_index(idx, T);
    return betas[idx];
}

double DiffusionSchedule::alpha(int idx) const {
    check_index(idx, T);
    return alphas[idx];
}

double DiffusionSchedule::alpha_bar(int idx) const {
    check_index(idx, T);
    return alpha_bars[idx];
}

double DiffusionSchedule::alpha_bar_at_time(int t) const {
    if (t == 0) return 1.0;
    check_index(t - 1, T);
    return alpha_bars[t - 1];
}

DiffusionSchedule make_vp_schedule(int T, double beta0, double betaT) {
    if (T < 1 || !(beta0 > 0.0) || !(beta0 <= betaT) || !(betaT < 1.0))
        throw std::invalid_argument("invalid schedule");
    DiffusionSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        const double b = (T > 1) ? beta0 + t * (betaT - beta0) / (T - 1) : beta0;
        s.betas[t] = b;
        s.alphas[t] = 1.0 - b;
        prod *= s.alphas[t];
        s.alpha_bars[t] = prod;
    }
    return s;
}

PerturbationKernel::PerturbationKernel(Mat sigma_p) {
    Gaussian check(Vec::Zero(sigma_p.rows()), sigma_p);  // symmetry + PD via the ctor
    const int d = check.dim();
    const double scale = std::exp(check.log_det() / d);
    sigma_p_ = check.cov() / scale;
    Eigen::LLT<Mat> llt(sigma_p_);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("perturbation covariance not positive definite");
    chol_ = llt.matrixL();
}

PerturbationKernel PerturbationKernel::identity(int dim) {
    return PerturbationKernel(Mat::Identity(dim, dim));
}

Vec perturb(const Vec& x0, int t, const DiffusionSchedule& sched, const PerturbationKernel& kernel,
            const Vec& whitened_noise) {
    const double abar = sched.alpha_bar(t);
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * kernel.color(whitened_noise);
}

namespace {

GaussianMixture push_mixture(const GaussianMixture& gmm, double abar,
                             const PerturbationKernel& kernel) {
    std::vector<Gaussian> comps;
    comps.reserve(static_cast<std::size_t>(gmm.size()));
    const double sa = std::sqrt(abar);
    for (int m = 0; m < gmm.size(); ++m) {
        const auto& c = gmm.component(m);
        comps.emplace_back(sa * c.mean(), abar * c.cov() + (1.0 - abar) * kernel.sigma_p());
    }
    return GaussianMixture(gmm.weights(), std::move(comps));
}

}  // namespace

GaussianMixture perturbed_gmm(const GaussianMixture& gmm, int t, const DiffusionSchedule& sched,
                              const PerturbationKernel& kernel) {
    return push_mixture(gmm, sched.alpha_bar(t), kernel);
}

GaussianMixture perturbed_gmm_at_time(const GaussianMixture& gmm, int time,
                                      const DiffusionSchedule& sched,
                                      const PerturbationKernel& kernel) {
    if (time == 0) return gmm;
    return push_mixture(gmm, sched.alpha_bar_at_time(time), kernel);
}

}  // namespace ogd
