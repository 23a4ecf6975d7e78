#include "ogd/prior.hpp"

#include <cmath>
#include <stdexcept>

namespace ogd {

namespace {

double unit_det_scale(const Mat& cov) {
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("degenerate data covariance");
    const double log_det = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    if (!std::isfinite(log_det)) throw std::runtime_error("degenerate data covariance");
    return std::exp(log_det / double(cov.rows()));
}

}  // namespace

OptimalPrior optimal_prior_general(const DataStats& stats, const GeneralKernel& kernel) {
    if (!(kernel.c > 0.0)) throw std::invalid_argument("kernel c must be positive");
    OptimalPrior p;
    p.mu_star = kernel.a * stats.mean;
    if (kernel.b.size() > 0) p.mu_star += kernel.b;
    p.sigma_p_star = stats.cov / unit_det_scale(stats.cov);
    p.sigma_star = kernel.a * kernel.a * stats.cov + kernel.c * kernel.c * p.sigma_p_star;
    return p;
}

OptimalPrior optimal_prior(const DataStats& stats, double alpha_bar_T) {
    return optimal_prior_variant(stats, alpha_bar_T, SigmaVariant::variance_consistent);
}

OptimalPrior optimal_prior_variant(const DataStats& stats, double alpha_bar_T, SigmaVariant v) {
    GeneralKernel k;
    if (v == SigmaVariant::variance_consistent) {
        k.a = std::sqrt(alpha_bar_T);
        k.c = std::sqrt(1.0 - alpha_bar_T);
    } else {
        k.a = alpha_bar_T;
        k.c = 1.0 - alpha_bar_T;
    }
    OptimalPrior p = optimal_prior_general(stats, k);
    if (v == SigmaVariant::squared) p.mu_star = std::sqrt(alpha_bar_T) * stats.mean;
    p.alpha_bar_T = alpha_bar_T;
    return p;
}

OptimalPrior optimal_prior_blockdiag(const std::vector<DataStats>& per_agent_stats,
                                     double alpha_bar_T) {
    if (per_agent_stats.empty()) throw std::invalid_argument("no per-agent stats");
    int d = 0;
    for (const auto& s : per_agent_stats) d += static_cast<int>(s.mean.size());
    OptimalPrior p;
    p.alpha_bar_T = alpha_bar_T;
    p.mu_star.resize(d);
    Mat blocks = Mat::Zero(d, d);
    double log_det_sum = 0.0;
    int off = 0;
    for (const auto& s : per_agent_stats) {
        const int bd = static_cast<int>(s.mean.size());
        Eigen::LLT<Mat> llt(s.cov);
        if (llt.info() != Eigen::Success) throw std::runtime_error("degenerate data covariance");
        log_det_sum += 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
        p.mu_star.segment(off, bd) = std::sqrt(alpha_bar_T) * s.mean;
        blocks.block(off, off, bd, bd) = s.cov;
        off += bd;
    }
    const double scale = std::exp(log_det_sum / double(d));
    p.sigma_p_star = blocks / scale;
    p.sigma_star = alpha_bar_T * blocks + (1.0 - alpha_bar_T) * p.sigma_p_star;
    return p;
}

namespace {

/// Monte Carlo log-likelihood machinery over a fixed draw set. Sample mean and
/// second-moment matrix make mean(log q) exact for any Gaussian q, so the
/// family optimizations run on sufficient statistics.
struct McDraws {
    Mat x;         // n x d
    Vec mean;      // sample mean
    Mat scatter;   // (1/n) sum (x - mean)(x - mean)^T
    double mean_log_p = 0.0;
    Vec log_p;     // per draw

    double kl_estimate(const Gaussian& q) const {
        double s = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            s += log_p[i] - q.log_density(x.row(i).transpose());
        return s / double(x.rows());
    }

    McEstimate kl_with_se(const Gaussian& q) const {
        double s = 0.0, s2 = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double f = log_p[i] - q.log_density(x.row(i).transpose());
            s += f;
            s2 += f * f;
        }
        const double n = double(x.rows());
        const double mean = s / n;
        const double var = std::max(0.0, s2 / n - mean * mean);
        return {mean, std::sqrt(var / n)};
    }

    // mean negative log density of N(mu, exp(s) * base) over the draws
    double scaled_family_obj(const Vec& mu, double s, const Gaussian& base_unit) const {
        const int d = static_cast<int>(mu.size());
        const Vec dm = mean - mu;
        const Mat w = base_unit.chol().triangularView<Eigen::Lower>().solve(scatter);
        const Mat w2 = base_unit.chol().triangularView<Eigen::Lower>().solve(w.transpose());
        const double tr = w2.trace();
        const Vec y = base_unit.chol().triangularView<Eigen::Lower>().solve(dm);
        const double quad = tr + y.squaredNorm();
        return 0.5 * (d * 1.8378770664093454836 + d * s + base_unit.log_det() +
                      std::exp(-s) * quad);
    }
};

McDraws draw_from(const GaussianMixture& p, int n, std::uint64_t seed) {
    McDraws d;
    d.x.resize(n, p.dim());
    d.log_p.resize(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const Vec xi = p.sample(rng);
        d.x.row(i) = xi.transpose();
        d.log_p[i] = p.log_density(xi);
    }
    d.mean = d.x.colwise().mean().transpose();
    Mat centered = d.x.rowwise() - d.mean.transpose();
    d.scatter = (centered.transpose() * centered) / double(n);
    d.mean_log_p = d.log_p.mean();
    return d;
}

/// Gradient descent with backtracking on the scaled-Sigma_d family
/// (parameters mu and log-scale s; positivity enforced by the log form).
void optimize_scaled_family(const McDraws& draws, const Gaussian& base_unit, Vec& mu, double& s) {
    const int d = static_cast<int>(mu.size());
    const Mat w = base_unit.chol().triangularView<Eigen::Lower>().solve(draws.scatter);
    const Mat w2 = base_unit.chol().triangularView<Eigen::Lower>().solve(w.transpose());
    const double tr = w2.trace();
    double obj = draws.scaled_family_obj(mu, s, base_unit);
    double lr = 0.5;
    for (int it = 0; it < 400; ++it) {
        const Vec dm = draws.mean - mu;
        const Vec grad_mu = -std::exp(-s) * base_unit.solve_cov(dm);
        const Vec y = base_unit.chol().triangularView<Eigen::Lower>().solve(dm);
        const double quad = tr + y.squaredNorm();
        const double grad_s = 0.5 * (d - std::exp(-s) * quad);
        double step = lr;
        bool moved = false;
        for (int bt = 0; bt < 30; ++bt) {
            const Vec mu_new = mu - step * grad_mu;
            const double s_new = s - step * grad_s;
            const double obj_new = draws.scaled_family_obj(mu_new, s_new, base_unit);
            if (obj_new < obj) {
                mu = mu_new;
                s = s_new;
                obj = obj_new;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
        if (grad_mu.norm() + std::abs(grad_s) < 1e-12) break;
    }
}

struct DiagObjective {
    const Vec& mean;
    Vec sdiag;  // diagonal of the scatter

    double operator()(const Vec& mu, const Vec& ell) const {
        double obj = 0.0;
        for (Eigen::Index j = 0; j < mu.size(); ++j) {
            const double q = sdiag[j] + (mean[j] - mu[j]) * (mean[j] - mu[j]);
            obj += 0.5 * (1.8378770664093454836 + 2.0 * ell[j] + std::exp(-2.0 * ell[j]) * q);
        }
        return obj;
    }
};

void optimize_diag_family(const McDraws& draws, Vec& mu, Vec& ell) {
    DiagObjective f{draws.mean, draws.scatter.diagonal()};
    double obj = f(mu, ell);
    double lr = 0.5;
    for (int it = 0; it < 400; ++it) {
        Vec gmu(mu.size()), gell(mu.size());
        for (Eigen::Index j = 0; j < mu.size(); ++j) {
            const double e = std::exp(-2.0 * ell[j]);
            gmu[j] = -e * (draws.mean[j] - mu[j]);
            gell[j] = 1.0 - e * (f.sdiag[j] + (draws.mean[j] - mu[j]) * (draws.mean[j] - mu[j]));
        }
        double step = lr;
        bool moved = false;
        for (int bt = 0; bt < 30; ++bt) {
            const Vec mu_new = mu - step * gmu;
            const Vec ell_new = ell - step * gell;
            const double obj_new = f(mu_new, ell_new);
            if (obj_new < obj) {
                mu = mu_new;
                ell = ell_new;
                obj = obj_new;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
        if (gmu.norm() + gell.norm() < 1e-12) break;
    }
}

}  // namespace

OptimalityEntry validate_optimality_at(const JointGmm& joint, const DiffusionSchedule& sched,
                                       int T, int n_candidates, std::uint64_t seed, int n_draws) {
    const DataStats stats = gmm_moments(joint.mixture);
    const double abar = sched.alpha_bar_at_time(T);
    const OptimalPrior closed = optimal_prior(stats, abar);
    const PerturbationKernel kernel(closed.sigma_p_star);
    const GaussianMixture p_T = perturbed_gmm_at_time(joint.mixture, T, sched, kernel);
    const McDraws draws = draw_from(p_T, n_draws, seed);
    const int d = joint.mixture.dim();

    OptimalityEntry entry;
    entry.T = T;
    entry.alpha_bar_T = abar;
    entry.n_candidates = n_candidates;

    const Gaussian closed_prior(closed.mu_star, closed.sigma_star);
    {
        const auto est = draws.kl_with_se(closed_prior);
        entry.closed_kl = est.value;
        entry.closed_se = est.std_error;
    }
    {
        const Gaussian standard(Vec::Zero(d), kernel.sigma_p());
        const auto est = draws.kl_with_se(standard);
        entry.standard_kl = est.value;
        entry.standard_se = est.std_error;
    }

    // scaled-Sigma_d family, 5 random restarts
    const Gaussian base_unit(Vec::Zero(d), closed.sigma_p_star);
    const double closed_scale =
        std::log(abar * unit_det_scale(stats.cov) + (1.0 - abar));
    double best_obj = std::numeric_limits<double>::infinity();
    Vec best_mu;
    double best_s = 0.0;
    for (int r = 0; r < 5; ++r) {
        Rng rng(derive_seed(seed, 100 + static_cast<std::uint64_t>(r)));
        Vec mu = closed.mu_star + 0.5 * double(r) * rng.normal_vec(d);
        double s = closed_scale + 0.3 * double(r) * rng.normal();
        optimize_scaled_family(draws, base_unit, mu, s);
        const double obj = draws.scaled_family_obj(mu, s, base_unit);
        if (obj < best_obj) {
            best_obj = obj;
            best_mu = mu;
            best_s = s;
        }
    }
    {
        const Gaussian family_opt(best_mu, std::exp(best_s) * closed.sigma_p_star);
        const auto est = draws.kl_with_se(family_opt);
        entry.family_opt_kl = est.value;
        entry.family_opt_se = est.std_error;
    }

    // unconstrained diagonal family, 5 restarts
    double best_diag_obj = std::numeric_limits<double>::infinity();
    Vec best_dmu, best_ell;
    for (int r = 0; r < 5; ++r) {
        Rng rng(derive_seed(seed, 200 + static_cast<std::uint64_t>(r)));
        Vec mu = draws.mean + 0.3 * double(r) * rng.normal_vec(d);
        Vec ell = (0.5 * draws.scatter.diagonal().array().max(1e-12).log()).matrix();
        for (Eigen::Index j = 0; j < ell.size(); ++j) ell[j] += 0.2 * double(r) * rng.normal();
        optimize_diag_family(draws, mu, ell);
        DiagObjective f{draws.mean, draws.scatter.diagonal()};
        const double obj = f(mu, ell);
        if (obj < best_diag_obj) {
            best_diag_obj = obj;
            best_dmu = mu;
            best_ell = ell;
        }
    }
    {
        const Gaussian diag_opt(best_dmu,
                                Mat((2.0 * best_ell.array()).exp().matrix().asDiagonal()));
        const auto est = draws.kl_with_se(diag_opt);
        entry.diag_opt_kl = est.value;
        entry.diag_opt_se = est.std_error;
    }

    entry.closed_attains_family_opt =
        entry.closed_kl <= entry.family_opt_kl +
                               3.0 * std::max(entry.family_opt_se, entry.closed_se);

    // random perturbed candidates, none should beat the closed form
    Rng cand_rng(derive_seed(seed, 300));
    int not_better = 0;
    for (int c = 0; c < n_candidates; ++c) {
        Vec mu = closed.mu_star;
        Mat cov = closed.sigma_star;
        const int kind = c % 3;
        const double mag = 0.08 + 0.4 * cand_rng.uniform();
        if (kind == 0 || kind == 2) {
            Vec dir = cand_rng.normal_vec(d);
            dir.normalize();
            mu += dir * mag * std::sqrt(cov.diagonal().mean());
        }
        if (kind == 1 || kind == 2) {
            const double sign = cand_rng.uniform() < 0.5 ? -1.0 : 1.0;
            cov *= std::exp(sign * mag);
        }
        const Gaussian q(mu, cov);
        if (draws.kl_estimate(q) >= entry.closed_kl) ++not_better;
    }
    entry.candidates_not_better = not_better;

    // exponent cross-check on the mixture draws
    const OptimalPrior vc = optimal_prior_variant(stats, abar, SigmaVariant::variance_consistent);
    const OptimalPrior sq = optimal_prior_variant(stats, abar, SigmaVariant::squared);
    entry.variant_vc_kl = draws.kl_estimate(Gaussian(vc.mu_star, vc.sigma_star));
    entry.variant_sq_kl = draws.kl_estimate(Gaussian(sq.mu_star, sq.sigma_star));
    entry.vc_variant_preferred = entry.variant_vc_kl <= entry.variant_sq_kl;
    return entry;
}

OptimalityReport validate_optimality(const JointGmm& joint, const DiffusionSchedule& sched,
                                     const std::vector<int>& T_values, int n_candidates,
                                     std::uint64_t seed, int n_draws) {
    OptimalityReport report;
    report.n_draws = n_draws;
    report.seed = seed;
    const DataStats stats = gmm_moments(joint.mixture);
    for (std::size_t i = 0; i < T_values.size(); ++i) {
        report.entries.push_back(validate_optimality_at(joint, sched, T_values[i], n_candidates,
                                                        derive_seed(seed, i), n_draws));
        // closed-form check on Gaussianized data: exact p_T, exact KLs
        const double abar = sched.alpha_bar_at_time(T_values[i]);
        const OptimalPrior vc =
            optimal_prior_variant(stats, abar, SigmaVariant::variance_consistent);
        const OptimalPrior sq = optimal_prior_variant(stats, abar, SigmaVariant::squared);
        const Gaussian p_T_gauss(std::sqrt(abar) * stats.mean,
                                 abar * stats.cov + (1.0 - abar) * vc.sigma_p_star);
        GaussianExactCheck check;
        check.kl_variance_consistent = kl_gaussian(p_T_gauss, Gaussian(vc.mu_star, vc.sigma_star));
        check.kl_squared = kl_gaussian(p_T_gauss, Gaussian(sq.mu_star, sq.sigma_star));
        report.gaussian_checks.push_back(check);
    }
    return report;
}

}  // namespace ogd
