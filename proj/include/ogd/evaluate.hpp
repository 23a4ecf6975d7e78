#pragma once

#include <limits>
#include <vector>

#include "ogd/guidance.hpp"
#include "ogd/scenario.hpp"

namespace ogd {

struct ClusterResult {
    Mat representatives;                         // one member-mean joint trajectory per row
    Vec probabilities;                           // proportional to member counts
    std::vector<int> member_counts;
    std::vector<std::vector<int>> center_combos;  // per cluster: per-agent reference index
};

/// Nearest-reference assignment by per-agent endpoint distance, size-sorted
/// greedy merging of centers closer than `merge_threshold` (larger group
/// absorbs the smaller), probabilities from final group sizes.
ClusterResult cluster_samples(const Mat& samples, const std::vector<MarginalSamples>& refs,
                              int horizon, double merge_threshold = 2.5);

struct MetricsReport {
    static constexpr double unset = std::numeric_limits<double>::quiet_NaN();
    // joint prediction
    double avg_min_ade = unset;
    double avg_min_fde = unset;
    double actor_mr = unset;
    double actor_cr = unset;
    double avg_brier_min_fde = unset;        // additive Brier penalty
    double avg_brier_min_fde_mult = unset;   // multiplicative reading, recorded alongside
    // controllable generation
    double min_jfde = unset;
    double mean_jfde = unset;
    double min_jrde = unset;
    double mean_jrde = unset;
    double min_jfde_horizon = unset;         // JFDE measured at the horizon end
    double mean_jfde_horizon = unset;
};

/// avgMin[A/F]DE over the prediction set, miss rate and collision rate on the
/// best sample, Brier-adjusted FDE. `probabilities` may be empty (uniform).
MetricsReport joint_prediction_metrics(const Mat& pred_samples, const Vec& probabilities,
                                       const Vec& gt, int n_agents, int horizon,
                                       double miss_threshold = 2.0, double agent_radius = 0.5);

/// JFDE at tau_d against the goal points and JRDE as the mean point-to-route
/// polyline distance; min/mean across the batch.
MetricsReport controllable_metrics(const Mat& samples, const RouteTask& task);

double point_to_polyline_distance(const Eigen::Vector2d& p, const Vec& polyline, int n_points);

/// Average 1-D 2-Wasserstein over random unit projections; both sides must
/// have the same number of rows.
double sliced_wasserstein(const Mat& a, const Mat& b, int n_projections, std::uint64_t seed);

}  // namespace ogd
