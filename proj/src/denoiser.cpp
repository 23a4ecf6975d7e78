#include "ogd/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace ogd {

Vec Denoiser::vjp(const Vec& x_t, int t, const Vec& cotangent) const {
    return fd_vjp(*this, x_t, t, cotangent);
}

Vec fd_vjp(const Denoiser& den, const Vec& x_t, int t, const Vec& cotangent, double step) {
    Vec out(x_t.size());
    Vec xp = x_t, xm = x_t;
    for (Eigen::Index i = 0; i < x_t.size(); ++i) {
        xp[i] += step;
        xm[i] -= step;
        out[i] = cotangent.dot(den.eps(xp, t) - den.eps(xm, t)) / (2.0 * step);
        xp[i] = x_t[i];
        xm[i] = x_t[i];
    }
    return out;
}

OracleDenoiser::OracleDenoiser(GaussianMixture data, DiffusionSchedule sched,
                               PerturbationKernel kernel)
    : data_(std::move(data)), sched_(std::move(sched)), kernel_(std::move(kernel)) {
    if (kernel_.dim() != data_.dim())
        throw std::invalid_argument("kernel/mixture dimension mismatch");
}

const GaussianMixture& OracleDenoiser::perturbed_at(int t) const {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->map.find(t);
    if (it == cache_->map.end()) {
        auto mix = std::make_shared<GaussianMixture>(
            perturbed_gmm_at_time(data_, t, sched_, kernel_));
        it = cache_->map.emplace(t, std::move(mix)).first;
    }
    return *it->second;
}

void OracleDenoiser::prewarm(const std::vector<int>& times) const {
    for (int t : times) perturbed_at(t);
}

Vec OracleDenoiser::eps(const Vec& x_t, int t) const {
    const double abar = sched_.alpha_bar_at_time(t);
    if (t == 0) return Vec::Zero(x_t.size());
    const Vec score = gmm_score(perturbed_at(t), x_t);
    return -std::sqrt(1.0 - abar) * (kernel_.sigma_p() * score);
}

Vec OracleDenoiser::vjp(const Vec& x_t, int t, const Vec& cotangent) const {
    const double abar = sched_.alpha_bar_at_time(t);
    if (t == 0) return Vec::Zero(x_t.size());
    const Vec su = kernel_.sigma_p() * cotangent;
    return -std::sqrt(1.0 - abar) * gmm_score_hessian_vec(perturbed_at(t), x_t, su);
}

namespace {

Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double s = std::sqrt(2.0 / double(rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = s * rng.normal();
    return m;
}

}  // namespace

MlpDenoiser::MlpDenoiser(MlpConfig cfg, int schedule_T, std::uint64_t seed)
    : cfg_(cfg), T_(schedule_T), cond_(Vec::Zero(cfg.cond_dim)) {
    if (cfg_.dim < 1 || cfg_.hidden < 1 || cfg_.time_embed < 2 || cfg_.time_embed % 2 != 0)
        throw std::invalid_argument("invalid mlp config");
    Rng rng(seed);
    const Eigen::Index in = cfg_.dim + cfg_.time_embed + cfg_.cond_dim;
    w1_ = glorot(cfg_.hidden, in, rng);
    b1_ = Vec::Zero(cfg_.hidden);
    w2_ = glorot(cfg_.hidden, cfg_.hidden, rng);
    b2_ = Vec::Zero(cfg_.hidden);
    w3_ = glorot(cfg_.dim, cfg_.hidden, rng);
    b3_ = Vec::Zero(cfg_.dim);
}

void MlpDenoiser::set_conditioning(Vec cond) {
    if (cond.size() != cfg_.cond_dim) throw std::invalid_argument("conditioning width mismatch");
    cond_ = std::move(cond);
}

Vec MlpDenoiser::features(const Vec& x_t, int t) const {
    Vec f(cfg_.dim + cfg_.time_embed + cfg_.cond_dim);
    f.head(cfg_.dim) = x_t;
    const int half = cfg_.time_embed / 2;
    const double tau = double(t) / double(std::max(1, T_));
    for (int j = 0; j < half; ++j) {
        const double freq = std::pow(100.0, double(j) / double(half));
        f[cfg_.dim + 2 * j] = std::sin(freq * tau * std::numbers::pi);
        f[cfg_.dim + 2 * j + 1] = std::cos(freq * tau * std::numbers::pi);
    }
    if (cfg_.cond_dim > 0) f.tail(cfg_.cond_dim) = cond_;
    return f;
}

Vec MlpDenoiser::eps(const Vec& x_t, int t) const {
    const Vec f = features(x_t, t);
    const Vec h1 = (w1_ * f + b1_).array().tanh();
    const Vec h2 = (w2_ * h1 + b2_).array().tanh();
    return w3_ * h2 + b3_;
}

Vec MlpDenoiser::vjp(const Vec& x_t, int t, const Vec& cotangent) const {
    const Vec f = features(x_t, t);
    const Vec a1 = w1_ * f + b1_;
    const Vec h1 = a1.array().tanh();
    const Vec a2 = w2_ * h1 + b2_;
    const Vec h2 = a2.array().tanh();
    Vec g = w3_.transpose() * cotangent;
    g = (g.array() * (1.0 - h2.array().square())).matrix();
    g = w2_.transpose() * g;
    g = (g.array() * (1.0 - h1.array().square())).matrix();
    const Vec gf = w1_.transpose() * g;
    return gf.head(cfg_.dim);
}

Eigen::Index MlpDenoiser::n_params() const {
    return w1_.size() + b1_.size() + w2_.size() + b2_.size() + w3_.size() + b3_.size();
}

Vec MlpDenoiser::flatten_params() const {
    Vec flat(n_params());
    Eigen::Index off = 0;
    auto put = [&](const auto& m) {
        flat.segment(off, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
        off += m.size();
    };
    put(w1_); put(b1_); put(w2_); put(b2_); put(w3_); put(b3_);
    return flat;
}

void MlpDenoiser::set_params(const Vec& flat) {
    if (flat.size() != n_params()) throw std::invalid_argument("parameter vector size mismatch");
    Eigen::Index off = 0;
    auto take = [&](auto& m) {
        Eigen::Map<Vec>(m.data(), m.size()) = flat.segment(off, m.size());
        off += m.size();
    };
    take(w1_); take(b1_); take(w2_); take(b2_); take(w3_); take(b3_);
}

double MlpDenoiser::loss_and_grad(const Mat& x_rows, const std::vector<int>& times,
                                  const Mat& target_rows, Vec* grad_out) const {
    const int B = static_cast<int>(x_rows.rows());
    Mat gw1 = Mat::Zero(w1_.rows(), w1_.cols());
    Vec gb1 = Vec::Zero(b1_.size());
    Mat gw2 = Mat::Zero(w2_.rows(), w2_.cols());
    Vec gb2 = Vec::Zero(b2_.size());
    Mat gw3 = Mat::Zero(w3_.rows(), w3_.cols());
    Vec gb3 = Vec::Zero(b3_.size());
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const Vec f = features(x_rows.row(b).transpose(), times[static_cast<std::size_t>(b)]);
        const Vec h1 = (w1_ * f + b1_).array().tanh();
        const Vec h2 = (w2_ * h1 + b2_).array().tanh();
        const Vec out = w3_ * h2 + b3_;
        const Vec resid = out - target_rows.row(b).transpose();
        loss += resid.squaredNorm();
        if (!grad_out) continue;
        const Vec d_out = 2.0 * resid / double(B);
        gw3 += d_out * h2.transpose();
        gb3 += d_out;
        Vec d2 = w3_.transpose() * d_out;
        d2 = (d2.array() * (1.0 - h2.array().square())).matrix();
        gw2 += d2 * h1.transpose();
        gb2 += d2;
        Vec d1 = w2_.transpose() * d2;
        d1 = (d1.array() * (1.0 - h1.array().square())).matrix();
        gw1 += d1 * f.transpose();
        gb1 += d1;
    }
    loss /= double(B);
    if (grad_out) {
        grad_out->resize(n_params());
        Eigen::Index off = 0;
        auto put = [&](const auto& m) {
            grad_out->segment(off, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
            off += m.size();
        };
        put(gw1); put(gb1); put(gw2); put(gb2); put(gw3); put(gb3);
    }
    return loss;
}

TrainResult train_ddpm(MlpDenoiser& model, const GaussianMixture& data,
                       const DiffusionSchedule& sched, const PerturbationKernel& kernel,
                       const TrainConfig& cfg) {
    if (cfg.steps < 0 || cfg.batch < 1 || cfg.lr < 0.0)
        throw std::invalid_argument("invalid training config");
    const int d = data.dim();
    Rng rng(cfg.seed);
    TrainResult result;
    result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));
    Vec velocity = Vec::Zero(model.n_params());
    Vec grad;
    Mat x_rows(cfg.batch, d), target_rows(cfg.batch, d);
    std::vector<int> times(static_cast<std::size_t>(cfg.batch));
    for (int step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < cfg.batch; ++b) {
            const int t = 1 + static_cast<int>(rng.uniform() * sched.T);
            const Vec x0 = data.sample(rng);
            const Vec noise = kernel.color(rng.normal_vec(d));
            const double abar = sched.alpha_bar_at_time(std::min(t, sched.T));
            x_rows.row(b) = (std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * noise).transpose();
            target_rows.row(b) = noise.transpose();
            times[static_cast<std::size_t>(b)] = std::min(t, sched.T);
        }
        const double loss = model.loss_and_grad(x_rows, times, target_rows, &grad);
        if (!std::isfinite(loss)) throw std::runtime_error("training diverged");
        velocity = cfg.momentum * velocity - cfg.lr * grad;
        model.set_params(model.flatten_params() + velocity);
        result.loss_curve.push_back(loss);
    }
    return result;
}

}  // namespace ogd
