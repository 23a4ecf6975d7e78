#include "ogd/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ogd {

namespace {

constexpr double kCollisionDist = 2.0;  // prototype distance that counts as a conflict

struct Prototype {
    Vec traj;    // agent_dim
    Mat cov;     // agent_dim x agent_dim
    double weight = 0.0;
};

Vec roll_trajectory(double px, double py, double heading, double speed, int maneuver, int cycle,
                    int H, double dt) {
    Vec out(2 * H);
    double th = heading;
    double v = speed;
    const double turn = (0.18 + 0.12 * cycle);
    for (int h = 0; h < H; ++h) {
        switch (maneuver % 4) {
            case 1: th += turn * dt; break;
            case 2: th -= turn * dt; break;
            case 3: v = speed * std::max(0.25, 1.0 - 0.9 * double(h) / double(H)); break;
            default: break;
        }
        px += v * dt * std::cos(th);
        py += v * dt * std::sin(th);
        out[2 * h] = px;
        out[2 * h + 1] = py;
    }
    return out;
}

Mat ar1_noise_cov(int H, double sigma, double rho) {
    // grows along the horizon, AR(1)-correlated over steps, iid over x/y
    Mat cov = Mat::Zero(2 * H, 2 * H);
    for (int h = 0; h < H; ++h) {
        const double sh = sigma * (0.4 + 0.6 * double(h + 1) / double(H));
        for (int g = 0; g < H; ++g) {
            const double sg = sigma * (0.4 + 0.6 * double(g + 1) / double(H));
            const double c = sh * sg * std::pow(rho, std::abs(h - g));
            cov(2 * h, 2 * g) = c;
            cov(2 * h + 1, 2 * g + 1) = c;
        }
    }
    return cov;
}

bool prototypes_collide(const Vec& a, const Vec& b, int H) {
    for (int h = 0; h < H; ++h) {
        const double dx = a[2 * h] - b[2 * h];
        const double dy = a[2 * h + 1] - b[2 * h + 1];
        if (std::hypot(dx, dy) < kCollisionDist) return true;
    }
    return false;
}

GaussianMixture marginal_mixture(const GaussianMixture& mixture,
                                 const std::vector<std::vector<int>>& labels, int agent_dim,
                                 int agent) {
    const int base = agent * agent_dim;
    // merge components that share the agent's mode id; slices are identical by
    // construction so the first occurrence provides the parameters
    std::vector<int> order;
    std::vector<double> weights;
    std::vector<int> first_comp;
    for (int m = 0; m < mixture.size(); ++m) {
        const int mode = labels[static_cast<std::size_t>(m)][static_cast<std::size_t>(agent)];
        auto it = std::find(order.begin(), order.end(), mode);
        if (it == order.end()) {
            order.push_back(mode);
            weights.push_back(mixture.weights()[m]);
            first_comp.push_back(m);
        } else {
            weights[static_cast<std::size_t>(it - order.begin())] += mixture.weights()[m];
        }
    }
    std::vector<Gaussian> comps;
    Vec w(static_cast<Eigen::Index>(weights.size()));
    for (std::size_t k = 0; k < weights.size(); ++k) {
        const auto& c = mixture.component(first_comp[k]);
        comps.emplace_back(c.mean().segment(base, agent_dim),
                           c.cov().block(base, base, agent_dim, agent_dim));
        w[static_cast<Eigen::Index>(k)] = weights[k];
    }
    w /= w.sum();
    return GaussianMixture(std::move(w), std::move(comps));
}

}  // namespace

void SceneSpec::validate() const {
    if (n_agents < 1 || horizon < 2 || dt <= 0.0 || modes_per_agent < 1 ||
        interaction_coupling < 0.0 || interaction_coupling > 1.0)
        throw std::invalid_argument("invalid scene spec");
}

JointGmm make_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const int n = spec.n_agents;
    const int H = spec.horizon;
    const int X = spec.agent_dim();

    std::vector<std::vector<Prototype>> protos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        // start poses on a circle, headed inward so mode combinations can conflict
        const double ang = 2.0 * std::numbers::pi * i / std::max(1, n) + 0.3 * rng.normal();
        const double r0 = 5.0 + 2.0 * rng.uniform();
        const double px = r0 * std::cos(ang);
        const double py = r0 * std::sin(ang);
        const double heading = ang + std::numbers::pi + 0.2 * rng.normal();
        const double speed = 3.0 + 4.0 * rng.uniform();
        Vec raw_w(spec.modes_per_agent);
        for (int m = 0; m < spec.modes_per_agent; ++m) {
            Prototype p;
            p.traj = roll_trajectory(px, py, heading, speed, m, m / 4, H, spec.dt);
            const double sigma = 0.25 + 0.25 * rng.uniform();
            p.cov = ar1_noise_cov(H, sigma, 0.6);
            raw_w[m] = 0.6 + 0.8 * rng.uniform();
            protos[static_cast<std::size_t>(i)].push_back(std::move(p));
        }
        raw_w /= raw_w.sum();
        for (int m = 0; m < spec.modes_per_agent; ++m)
            protos[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)].weight = raw_w[m];
    }

    int n_comp = 1;
    for (int i = 0; i < n; ++i) n_comp *= spec.modes_per_agent;

    std::vector<Gaussian> comps;
    std::vector<std::vector<int>> labels;
    Vec weights(n_comp);
    std::vector<int> combo(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < n_comp; ++c) {
        Vec mean(spec.joint_dim());
        Mat cov = Mat::Zero(spec.joint_dim(), spec.joint_dim());
        double w = 1.0;
        for (int i = 0; i < n; ++i) {
            const auto& p = protos[static_cast<std::size_t>(i)][static_cast<std::size_t>(combo[i])];
            mean.segment(i * X, X) = p.traj;
            cov.block(i * X, i * X, X, X) = p.cov;
            w *= p.weight;
        }
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const auto& pi = protos[static_cast<std::size_t>(i)][static_cast<std::size_t>(combo[i])];
                const auto& pj = protos[static_cast<std::size_t>(j)][static_cast<std::size_t>(combo[j])];
                if (prototypes_collide(pi.traj, pj.traj, H))
                    w *= std::max(1.0 - spec.interaction_coupling, 1e-6);
            }
        weights[c] = w;
        comps.emplace_back(std::move(mean), std::move(cov));
        labels.push_back(combo);
        for (int i = n - 1; i >= 0; --i) {
            if (++combo[static_cast<std::size_t>(i)] < spec.modes_per_agent) break;
            combo[static_cast<std::size_t>(i)] = 0;
        }
    }
    weights /= weights.sum();
    return JointGmm{spec, seed, GaussianMixture(std::move(weights), std::move(comps)),
                    std::move(labels)};
}

GaussianMixture marginalize(const JointGmm& joint, int agent) {
    if (agent < 0 || agent >= joint.n_agents()) throw std::out_of_range("agent index out of range");
    return marginal_mixture(joint.mixture, joint.labels, joint.agent_dim(), agent);
}

MarginalSamples marginal_predictor(const JointGmm& joint, int agent, int L) {
    const GaussianMixture marg = marginalize(joint, agent);
    if (L < 1 || L > marg.size())
        throw std::invalid_argument("L exceeds marginal component count");
    std::vector<int> idx(static_cast<std::size_t>(marg.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return marg.weights()[a] > marg.weights()[b]; });
    MarginalSamples out;
    out.scores.resize(L);
    for (int l = 0; l < L; ++l) {
        out.trajectories.push_back(marg.component(idx[static_cast<std::size_t>(l)]).mean());
        out.base_covs.push_back(marg.component(idx[static_cast<std::size_t>(l)]).cov());
        out.scores[l] = marg.weights()[idx[static_cast<std::size_t>(l)]];
    }
    out.scores /= out.scores.sum();
    return out;
}

std::vector<MarginalSamples> marginal_sample_sets(const JointGmm& joint, int L) {
    std::vector<MarginalSamples> sets;
    sets.reserve(static_cast<std::size_t>(joint.n_agents()));
    for (int i = 0; i < joint.n_agents(); ++i) sets.push_back(marginal_predictor(joint, i, L));
    return sets;
}

DataStats estimate_marginal_stats(const MarginalSamples& set) {
    if (set.trajectories.empty()) throw std::invalid_argument("empty marginal sample set");
    const int d = static_cast<int>(set.trajectories.front().size());
    Vec mean = Vec::Zero(d);
    for (std::size_t l = 0; l < set.trajectories.size(); ++l)
        mean += set.scores[static_cast<Eigen::Index>(l)] * set.trajectories[l];
    Mat cov = Mat::Zero(d, d);
    for (std::size_t l = 0; l < set.trajectories.size(); ++l) {
        const Vec r = set.trajectories[l] - mean;
        cov += set.scores[static_cast<Eigen::Index>(l)] * (r * r.transpose() + set.base_covs[l]);
    }
    cov += 1e-8 * Mat::Identity(d, d);
    return {std::move(mean), std::move(cov)};
}

}  // namespace ogd
