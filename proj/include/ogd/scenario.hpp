#pragma once

#include <vector>

#include "ogd/schedule.hpp"
#include "ogd/stats.hpp"

namespace ogd {

/// Geometry of a synthetic multi-agent scene. Trajectories are flattened as
/// (x,y) pairs per timestep, agents concatenated: joint dim = 2 * n * H.
struct SceneSpec {
    int n_agents = 1;
    int horizon = 12;
    double dt = 0.5;
    int modes_per_agent = 3;
    double interaction_coupling = 0.0;

    int agent_dim() const { return 2 * horizon; }
    int joint_dim() const { return n_agents * agent_dim(); }
    void validate() const;
};

/// Ground-truth joint trajectory distribution: a Gaussian mixture whose
/// components are cross-products of per-agent maneuver modes.
struct JointGmm {
    SceneSpec spec;
    std::uint64_t seed = 0;
    GaussianMixture mixture;
    std::vector<std::vector<int>> labels;  // per component: per-agent mode ids

    int n_agents() const { return spec.n_agents; }
    int agent_dim() const { return spec.agent_dim(); }
};

/// Diverse per-agent trajectory samples with likelihood scores, the idealized
/// stand-in for a pretrained marginal predictor.
struct MarginalSamples {
    std::vector<Vec> trajectories;  // L entries, each agent_dim
    Vec scores;                     // nonnegative, sums to 1
    std::vector<Mat> base_covs;     // per-mode covariance of the predictor
};

JointGmm make_scene(const SceneSpec& spec, std::uint64_t seed);

/// Exact marginal mixture of one agent (sliced means and covariance blocks,
/// duplicate per-agent modes merged by weight).
GaussianMixture marginalize(const JointGmm& joint, int agent);

MarginalSamples marginal_predictor(const JointGmm& joint, int agent, int L);

std::vector<MarginalSamples> marginal_sample_sets(const JointGmm& joint, int L);

/// Weighted mean + weighted scatter + per-mode base covariance (plus a 1e-8
/// jitter to keep the result strictly PD).
DataStats estimate_marginal_stats(const MarginalSamples& set);

/// Position of agent `i` at step `h` inside a joint vector.
inline Eigen::Vector2d agent_position(const Vec& joint, int agent_dim, int agent, int h) {
    const int base = agent * agent_dim + 2 * h;
    return {joint[base], joint[base + 1]};
}

}  // namespace ogd
