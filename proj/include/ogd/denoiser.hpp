#pragma once

#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "ogd/scenario.hpp"
#include "ogd/schedule.hpp"

namespace ogd {

/// Epsilon-prediction interface. `t` is a time in [0, T] (time 0 = clean).
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual int dim() const = 0;
    virtual Vec eps(const Vec& x_t, int t) const = 0;
    /// (d eps / d x_t)^T cotangent. Default falls back to central finite
    /// differences of <cotangent, eps(x)>, 2*dim eps calls per evaluation.
    virtual Vec vjp(const Vec& x_t, int t, const Vec& cotangent) const;
};

/// Finite-difference vjp usable against any denoiser; also the reference the
/// analytic paths are tested against.
Vec fd_vjp(const Denoiser& den, const Vec& x_t, int t, const Vec& cotangent, double step = 1e-5);

/// Exact epsilon from the perturbed-mixture score:
///   eps(x, t) = -sqrt(1 - abar_t) * Sigma_p * grad log p_t(x).
class OracleDenoiser final : public Denoiser {
public:
    OracleDenoiser(GaussianMixture data, DiffusionSchedule sched, PerturbationKernel kernel);

    int dim() const override { return data_.dim(); }
    Vec eps(const Vec& x_t, int t) const override;
    Vec vjp(const Vec& x_t, int t, const Vec& cotangent) const override;

    const GaussianMixture& perturbed_at(int t) const;
    void prewarm(const std::vector<int>& times) const;

    const DiffusionSchedule& schedule() const { return sched_; }
    const PerturbationKernel& kernel() const { return kernel_; }
    const GaussianMixture& data() const { return data_; }

private:
    struct Cache {
        std::mutex mu;
        std::unordered_map<int, std::shared_ptr<GaussianMixture>> map;
    };

    GaussianMixture data_;
    DiffusionSchedule sched_;
    PerturbationKernel kernel_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

struct MlpConfig {
    int dim = 0;            // trajectory dimension
    int hidden = 64;        // width of the two hidden layers
    int time_embed = 16;    // sinusoidal embedding width (even)
    int cond_dim = 0;       // optional conditioning width, 0 = none
};

/// Small fully-connected epsilon predictor with sinusoidal time embedding and
/// optional conditioning, trained with hand-written reverse-mode gradients.
class MlpDenoiser final : public Denoiser {
public:
    MlpDenoiser(MlpConfig cfg, int schedule_T, std::uint64_t seed);

    int dim() const override { return cfg_.dim; }
    Vec eps(const Vec& x_t, int t) const override;
    Vec vjp(const Vec& x_t, int t, const Vec& cotangent) const override;

    const MlpConfig& config() const { return cfg_; }
    int schedule_T() const { return T_; }
    void set_conditioning(Vec cond);
    const Vec& conditioning() const { return cond_; }

    Vec flatten_params() const;
    void set_params(const Vec& flat);
    Eigen::Index n_params() const;

    /// Mean over the batch of ||target - eps(x, t)||^2 and its parameter
    /// gradient (flattened like flatten_params).
    double loss_and_grad(const Mat& x_rows, const std::vector<int>& times, const Mat& target_rows,
                         Vec* grad_out) const;

private:
    Vec features(const Vec& x_t, int t) const;

    MlpConfig cfg_;
    int T_ = 1;
    Vec cond_;
    Mat w1_, w2_, w3_;
    Vec b1_, b2_, b3_;
};

struct TrainConfig {
    int steps = 2000;
    int batch = 64;
    double lr = 1e-3;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_curve;
};

/// DDPM training loop: t uniform over [1, T], colored noise through the
/// kernel factor, SGD with momentum. Throws "training diverged" on NaN loss.
TrainResult train_ddpm(MlpDenoiser& model, const GaussianMixture& data,
                       const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                       const TrainConfig& cfg);

}  // namespace ogd
