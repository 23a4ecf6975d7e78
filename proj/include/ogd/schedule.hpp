#pragma once

#include "ogd/stats.hpp"

namespace ogd {

/// Discrete variance-preserving schedule. Array entries are indexed
/// 0..T-1; samplers address noise levels by "time" in [0, T] where time 0 is
/// clean data (alpha_bar == 1) and time t maps to array index t-1.
struct DiffusionSchedule {
    int T = 0;
    Vec betas;
    Vec alphas;
    Vec alpha_bars;

    double beta(int idx) const;
    double alpha(int idx) const;
    double alpha_bar(int idx) const;
    double alpha_bar_at_time(int t) const;
};

/// Linear beta interpolation between the endpoints over indices 0..T-1.
DiffusionSchedule make_vp_schedule(int T, double beta0, double betaT);

/// Noise-shaping covariance Sigma_p; the constructor normalizes the input to
/// unit determinant (division by |S|^(1/D)).
class PerturbationKernel {
public:
    explicit PerturbationKernel(Mat sigma_p);
    static PerturbationKernel identity(int dim);

    int dim() const { return static_cast<int>(sigma_p_.rows()); }
    const Mat& sigma_p() const { return sigma_p_; }
    const Mat& chol() const { return chol_; }
    Vec color(const Vec& white) const { return chol_ * white; }
    Vec sigma_diag_sqrt() const { return sigma_p_.diagonal().cwiseSqrt(); }

private:
    Mat sigma_p_;
    Mat chol_;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) L z with a caller-supplied
/// whitened draw z; t is a schedule array index.
Vec perturb(const Vec& x0, int t, const DiffusionSchedule& sched, const PerturbationKernel& kernel,
            const Vec& whitened_noise);

/// Exact pushforward of a mixture through the perturbation kernel at array
/// index t: weights unchanged, means scaled, covariances abar*S + (1-abar)*Sp.
GaussianMixture perturbed_gmm(const GaussianMixture& gmm, int t, const DiffusionSchedule& sched,
                              const PerturbationKernel& kernel);

/// Same pushforward addressed by time in [0, T]; time 0 returns the input.
GaussianMixture perturbed_gmm_at_time(const GaussianMixture& gmm, int time,
                                      const DiffusionSchedule& sched,
                                      const PerturbationKernel& kernel);

}  // namespace ogd
