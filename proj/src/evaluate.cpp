#include "ogd/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ogd {

namespace {

Eigen::Vector2d endpoint(const Vec& traj, int agent_dim, int agent, int horizon) {
    return agent_position(traj, agent_dim, agent, horizon - 1);
}

struct Group {
    std::vector<int> combo;     // per-agent reference index
    std::vector<int> members;   // sample rows
};

double combo_center_distance(const std::vector<int>& a, const std::vector<int>& b,
                             const std::vector<MarginalSamples>& refs, int horizon) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Vec& ra = refs[i].trajectories[static_cast<std::size_t>(a[i])];
        const Vec& rb = refs[i].trajectories[static_cast<std::size_t>(b[i])];
        const double dx = ra[2 * (horizon - 1)] - rb[2 * (horizon - 1)];
        const double dy = ra[2 * (horizon - 1) + 1] - rb[2 * (horizon - 1) + 1];
        worst = std::max(worst, std::hypot(dx, dy));
    }
    return worst;
}

void sort_groups(std::vector<Group>& groups) {
    std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
        if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
        return a.combo < b.combo;
    });
}

}  // namespace

ClusterResult cluster_samples(const Mat& samples, const std::vector<MarginalSamples>& refs,
                              int horizon, double merge_threshold) {
    if (samples.rows() == 0) throw std::invalid_argument("no samples");
    if (merge_threshold <= 0.0) throw std::invalid_argument("merge threshold must be positive");
    const int n_agents = static_cast<int>(refs.size());
    const int X = 2 * horizon;

    std::map<std::vector<int>, Group> by_combo;
    for (Eigen::Index s = 0; s < samples.rows(); ++s) {
        const Vec traj = samples.row(s).transpose();
        std::vector<int> combo(static_cast<std::size_t>(n_agents));
        for (int i = 0; i < n_agents; ++i) {
            const Eigen::Vector2d ep = endpoint(traj, X, i, horizon);
            double best = std::numeric_limits<double>::infinity();
            int best_l = 0;
            const auto& set = refs[static_cast<std::size_t>(i)];
            for (std::size_t l = 0; l < set.trajectories.size(); ++l) {
                const Vec& r = set.trajectories[l];
                const double d =
                    std::hypot(ep.x() - r[2 * (horizon - 1)], ep.y() - r[2 * (horizon - 1) + 1]);
                if (d < best) {
                    best = d;
                    best_l = static_cast<int>(l);
                }
            }
            combo[static_cast<std::size_t>(i)] = best_l;
        }
        auto& g = by_combo[combo];
        g.combo = combo;
        g.members.push_back(static_cast<int>(s));
    }

    std::vector<Group> groups;
    groups.reserve(by_combo.size());
    for (auto& [combo, g] : by_combo) groups.push_back(std::move(g));
    sort_groups(groups);

    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t i = 0; i < groups.size() && !merged; ++i) {
            for (std::size_t j = i + 1; j < groups.size() && !merged; ++j) {
                if (combo_center_distance(groups[i].combo, groups[j].combo, refs, horizon) <
                    merge_threshold) {
                    groups[i].members.insert(groups[i].members.end(), groups[j].members.begin(),
                                             groups[j].members.end());
                    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(j));
                    sort_groups(groups);
                    merged = true;
                }
            }
        }
    }

    ClusterResult result;
    result.representatives.resize(static_cast<Eigen::Index>(groups.size()), samples.cols());
    result.probabilities.resize(static_cast<Eigen::Index>(groups.size()));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Vec mean = Vec::Zero(samples.cols());
        for (int s : groups[g].members) mean += samples.row(s).transpose();
        mean /= double(groups[g].members.size());
        result.representatives.row(static_cast<Eigen::Index>(g)) = mean.transpose();
        result.probabilities[static_cast<Eigen::Index>(g)] =
            double(groups[g].members.size()) / double(samples.rows());
        result.member_counts.push_back(static_cast<int>(groups[g].members.size()));
        result.center_combos.push_back(groups[g].combo);
    }
    return result;
}

MetricsReport joint_prediction_metrics(const Mat& pred_samples, const Vec& probabilities,
                                       const Vec& gt, int n_agents, int horizon,
                                       double miss_threshold, double agent_radius) {
    const int K = static_cast<int>(pred_samples.rows());
    if (K < 1) throw std::invalid_argument("empty prediction set");
    if (pred_samples.cols() != gt.size()) throw std::invalid_argument("dimension mismatch");
    if (gt.size() != static_cast<Eigen::Index>(2 * n_agents * horizon))
        throw std::invalid_argument("dimension mismatch");
    const int X = 2 * horizon;

    Vec fde(K), ade(K);
    for (int s = 0; s < K; ++s) {
        const Vec traj = pred_samples.row(s).transpose();
        double fde_sum = 0.0, ade_sum = 0.0;
        for (int i = 0; i < n_agents; ++i) {
            fde_sum += (endpoint(traj, X, i, horizon) - endpoint(gt, X, i, horizon)).norm();
            double agent_ade = 0.0;
            for (int h = 0; h < horizon; ++h)
                agent_ade += (agent_position(traj, X, i, h) - agent_position(gt, X, i, h)).norm();
            ade_sum += agent_ade / double(horizon);
        }
        fde[s] = fde_sum / double(n_agents);
        ade[s] = ade_sum / double(n_agents);
    }

    MetricsReport report;
    Eigen::Index best = 0;
    report.avg_min_fde = fde.minCoeff(&best);
    report.avg_min_ade = ade.minCoeff();

    const Vec best_traj = pred_samples.row(best).transpose();
    int missed = 0;
    for (int i = 0; i < n_agents; ++i)
        if ((endpoint(best_traj, X, i, horizon) - endpoint(gt, X, i, horizon)).norm() >
            miss_threshold)
            ++missed;
    report.actor_mr = double(missed) / double(n_agents);

    int colliding = 0;
    for (int i = 0; i < n_agents; ++i) {
        bool hit = false;
        for (int j = 0; j < n_agents && !hit; ++j) {
            if (j == i) continue;
            for (int h = 0; h < horizon && !hit; ++h)
                hit = (agent_position(best_traj, X, i, h) - agent_position(best_traj, X, j, h))
                          .norm() < 2.0 * agent_radius;
        }
        if (hit) ++colliding;
    }
    report.actor_cr = double(colliding) / double(n_agents);

    const double p_best =
        probabilities.size() == 0 ? 1.0 / double(K) : probabilities[best];
    report.avg_brier_min_fde = report.avg_min_fde + (1.0 - p_best) * (1.0 - p_best);
    report.avg_brier_min_fde_mult = report.avg_min_fde * (1.0 + (1.0 - p_best) * (1.0 - p_best));
    return report;
}

double point_to_polyline_distance(const Eigen::Vector2d& p, const Vec& polyline, int n_points) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k + 1 < n_points; ++k) {
        const Eigen::Vector2d a{polyline[2 * k], polyline[2 * k + 1]};
        const Eigen::Vector2d b{polyline[2 * k + 2], polyline[2 * k + 3]};
        const Eigen::Vector2d ab = b - a;
        const double len2 = ab.squaredNorm();
        double u = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
        u = std::clamp(u, 0.0, 1.0);
        best = std::min(best, (p - (a + u * ab)).norm());
    }
    if (n_points == 1) best = (p - Eigen::Vector2d{polyline[0], polyline[1]}).norm();
    return best;
}

MetricsReport controllable_metrics(const Mat& samples, const RouteTask& task) {
    const int S = static_cast<int>(samples.rows());
    MetricsReport report;
    if (S == 0) return report;
    const int X = 2 * task.horizon;

    Vec jfde(S), jrde(S), jfde_h(S);
    for (int s = 0; s < S; ++s) {
        const Vec traj = samples.row(s).transpose();
        double fde = 0.0, fde_h = 0.0, rde = 0.0;
        for (int i = 0; i < task.n_agents; ++i) {
            fde += (agent_position(traj, X, i, task.tau_d) - task.goal(i)).norm();
            fde_h += (agent_position(traj, X, i, task.horizon - 1) - task.goal(i)).norm();
            for (int h = 0; h < task.horizon; ++h)
                rde += point_to_polyline_distance(
                    agent_position(traj, X, i, h),
                    task.routes[static_cast<std::size_t>(i)], task.horizon);
        }
        jfde[s] = fde / double(task.n_agents);
        jfde_h[s] = fde_h / double(task.n_agents);
        jrde[s] = rde / double(task.n_agents * task.horizon);
    }
    report.min_jfde = jfde.minCoeff();
    report.mean_jfde = jfde.mean();
    report.min_jrde = jrde.minCoeff();
    report.mean_jrde = jrde.mean();
    report.min_jfde_horizon = jfde_h.minCoeff();
    report.mean_jfde_horizon = jfde_h.mean();
    return report;
}

double sliced_wasserstein(const Mat& a, const Mat& b, int n_projections, std::uint64_t seed) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("sliced_wasserstein requires equally sized sample sets");
    if (a.rows() == 0) return 0.0;
    Rng rng(seed);
    const Eigen::Index n = a.rows();
    double acc = 0.0;
    std::vector<double> pa(static_cast<std::size_t>(n)), pb(static_cast<std::size_t>(n));
    for (int p = 0; p < n_projections; ++p) {
        Vec dir = rng.normal_vec(a.cols());
        dir.normalize();
        for (Eigen::Index i = 0; i < n; ++i) {
            pa[static_cast<std::size_t>(i)] = a.row(i).dot(dir);
            pb[static_cast<std::size_t>(i)] = b.row(i).dot(dir);
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        double w2 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = pa[static_cast<std::size_t>(i)] - pb[static_cast<std::size_t>(i)];
            w2 += d * d;
        }
        acc += w2 / double(n);
    }
    return std::sqrt(acc / double(n_projections));
}

}  // namespace ogd
