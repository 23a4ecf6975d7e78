#include <doctest.h>

#include "ogd/evaluate.hpp"
#include "ogd/harness.hpp"
#include "ogd/latent.hpp"
#include "ogd/persistence.hpp"
#include "test_util.hpp"

using namespace ogd;
using namespace ogd::test;

namespace {

/// Pooled per-agent trajectories from the reference scene.
Mat scene_trajectories(int n_rows) {
    const SceneConfig sc = reference_scene();
    const JointGmm joint = make_scene(sc.spec, sc.seed);
    const int X = joint.agent_dim();
    const Mat draws = joint.mixture.sample_matrix((n_rows + 1) / 2, 31);
    Mat rows(2 * draws.rows(), X);
    rows << draws.leftCols(X), draws.rightCols(X);
    return rows.topRows(n_rows);
}

}  // namespace

TEST_CASE("encode/decode linearity") {
    Rng rng(2);
    LinearMap map;
    map.U = Mat::Random(6, 2);
    map.V = Mat::Random(2, 6);
    CHECK(encode(map, Vec::Zero(6)).norm() == 0.0);
    CHECK(decode(map, Vec::Zero(2)).norm() == 0.0);
    const Vec x = rng.normal_vec(6), y = rng.normal_vec(6);
    const double a = 1.7, b = -0.3;
    CHECK((encode(map, a * x + b * y) - a * encode(map, x) - b * encode(map, y))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("identity-initialized square map has zero losses except the variance term") {
    Rng rng(3);
    const int X = 4;
    Mat data(10 * X, X);
    for (Eigen::Index i = 0; i < data.rows(); ++i) data.row(i) = rng.normal_vec(X).transpose();
    LinearMap init;
    init.U = Mat::Identity(X, X);
    init.V = Mat::Identity(X, X);
    init.eta = 1.0;
    const LatentLosses losses = linear_map_losses(init, data);
    CHECK(losses.rec == 0.0);
    CHECK(losses.reg == 0.0);
    CHECK(losses.var > 0.0);
    CHECK((decode(init, encode(init, data.row(0).transpose())) - data.row(0).transpose()).norm() ==
          0.0);
}

TEST_CASE("latent gradients match finite differences") {
    Rng rng(5);
    const int X = 4, Z = 2;
    Mat data(40, X);
    for (Eigen::Index i = 0; i < data.rows(); ++i) data.row(i) = rng.normal_vec(X).transpose();
    LinearMap map;
    map.U = 0.3 * Mat::Random(X, Z);
    map.V = 0.3 * Mat::Random(Z, X);
    map.eta = 0.8;
    const LatentLossWeights w{0.7, 0.4, 1.3};

    Mat gU, gV;
    double g_eta = 0.0;
    const LatentLosses at = linear_map_loss_grad(map, data, w, gU, gV, g_eta);
    CHECK(std::isfinite(at.total(w)));
    auto total = [&](const LinearMap& m) { return linear_map_losses(m, data).total(w); };
    const double h = 1e-6;
    for (int i = 0; i < X; ++i)
        for (int j = 0; j < Z; ++j) {
            LinearMap mp = map, mm = map;
            mp.U(i, j) += h;
            mm.U(i, j) -= h;
            const double fd = (total(mp) - total(mm)) / (2.0 * h);
            CHECK(std::abs(gU(i, j) - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
        }
    for (int i = 0; i < Z; ++i)
        for (int j = 0; j < X; ++j) {
            LinearMap mp = map, mm = map;
            mp.V(i, j) += h;
            mm.V(i, j) -= h;
            const double fd = (total(mp) - total(mm)) / (2.0 * h);
            CHECK(std::abs(gV(i, j) - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
        }
    {
        LinearMap mp = map, mm = map;
        mp.eta += h;
        mm.eta -= h;
        const double fd = (total(mp) - total(mm)) / (2.0 * h);
        CHECK(std::abs(g_eta - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("exact low-rank data is recovered") {
    Rng rng(7);
    const int X = 8, Z = 2;
    Mat basis(X, Z);
    for (int i = 0; i < X; ++i)
        for (int j = 0; j < Z; ++j) basis(i, j) = rng.normal();
    Mat data(10 * X, X);
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        data.row(i) = (basis * rng.normal_vec(Z)).transpose();
    LinearMap map;
    LatentTrainConfig cfg;
    cfg.steps = 4000;
    cfg.lr = 1e-3;
    cfg.seed = 1;
    cfg.weights = {1.0, 0.0, 0.0};  // reconstruction only
    train_linear_map(map, data, Z, cfg);
    const double second_moment = data.array().square().rowwise().sum().mean();
    CHECK(linear_map_losses(map, data).rec < 1e-6 * second_moment);
}

TEST_CASE("trained map on scene trajectories: preservation, spread, orthogonality") {
    const Mat data = scene_trajectories(500);
    const int X = static_cast<int>(data.cols());
    const int Z = 4;
    LinearMap map;
    LatentTrainConfig cfg;
    cfg.steps = 6000;
    cfg.lr = 1e-5;
    cfg.seed = 3;
    const LatentTrainResult result = train_linear_map(map, data, Z, cfg);
    CHECK(result.total_curve.front() > result.total_curve.back());

    SUBCASE("round-trip error below 5 percent") {
        const Mat recon = encode_rows(map, data) * map.V;
        CHECK((recon - data).norm() / data.norm() < 0.05);
    }

    SUBCASE("distance preservation holds for 95 percent of held-out trajectories") {
        const Mat held_out = scene_trajectories(900).bottomRows(300);
        int ok = 0;
        for (Eigen::Index i = 0; i < held_out.rows(); ++i) {
            const Vec x = held_out.row(i).transpose();
            const double nx = x.squaredNorm();
            const double nz = encode(map, x).squaredNorm();
            if (std::abs(nx - nz) / nx < 0.1) ++ok;
        }
        CHECK(double(ok) / double(held_out.rows()) >= 0.95);
    }

    SUBCASE("per-dimension latent stds are consistent") {
        const Mat z = encode_rows(map, data);
        const Vec mean = z.colwise().mean().transpose();
        const Vec stds =
            ((z.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
        CHECK(stds.maxCoeff() / stds.minCoeff() < 1.5);
        CHECK(stds.maxCoeff() / stds.minCoeff() < 1.2);  // within 20% of each other
        // PCA comparator: eigen-spectrum spread of the data is far wider
        const Mat centered = data.rowwise() - data.colwise().mean();
        const Mat cov = centered.transpose() * centered / double(data.rows());
        Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
        const Vec top = eig.eigenvalues().tail(Z).cwiseSqrt();
        CHECK(top.maxCoeff() / top.minCoeff() > stds.maxCoeff() / stds.minCoeff());
    }

    SUBCASE("decoder mode vectors are near-orthogonal") {
        // normalized inner products between the Z decoder directions
        for (int i = 0; i < Z; ++i)
            for (int j = i + 1; j < Z; ++j) {
                const double ip = std::abs(map.V.row(i).dot(map.V.row(j))) /
                                  (map.V.row(i).norm() * map.V.row(j).norm());
                CHECK(ip < 0.05);
            }
    }

    SUBCASE("checkpoint round-trip is exact") {
        save_linear_map(map, "lm_roundtrip.json", Encoding::text);
        const LinearMap loaded = load_linear_map("lm_roundtrip.json");
        CHECK((loaded.U - map.U).norm() == 0.0);
        CHECK((loaded.V - map.V).norm() == 0.0);
        CHECK(loaded.eta == map.eta);
        std::remove("lm_roundtrip.json");
    }
}

TEST_CASE("pushforward mixture: identity, Monte Carlo moments, orthogonal invariance") {
    Rng rng(11);
    const GaussianMixture gmm = random_mixture(4, 3, rng);

    SUBCASE("identity map leaves the mixture unchanged") {
        LinearMap id;
        id.U = Mat::Identity(4, 4);
        id.V = Mat::Identity(4, 4);
        const GaussianMixture out = pushforward_gmm(id, gmm);
        for (int m = 0; m < gmm.size(); ++m) {
            CHECK((out.component(m).mean() - gmm.component(m).mean()).norm() == 0.0);
            CHECK((out.component(m).cov() - gmm.component(m).cov()).norm() == 0.0);
        }
    }

    SUBCASE("latent moments match encoded-draw moments") {
        LinearMap map;
        map.U = Mat::Random(4, 2);
        map.V = Mat::Random(2, 4);
        const GaussianMixture pushed = pushforward_gmm(map, gmm);
        const DataStats stats = gmm_moments(pushed);
        const int n = 200000;
        const Mat draws = gmm.sample_matrix(n, 5);
        const Mat z = encode_rows(map, draws);
        const Vec mc_mean = z.colwise().mean().transpose();
        for (int j = 0; j < 2; ++j) {
            const double se = std::sqrt(stats.cov(j, j) / double(n));
            CHECK(std::abs(mc_mean[j] - stats.mean[j]) < 4.0 * se);
        }
    }

    SUBCASE("orthonormal square map preserves determinants") {
        Mat a = Mat::Random(4, 4);
        const Mat q = Eigen::HouseholderQR<Mat>(a).householderQ();
        LinearMap map;
        map.U = q;
        map.V = q.transpose();
        const GaussianMixture pushed = pushforward_gmm(map, gmm);
        for (int m = 0; m < gmm.size(); ++m) {
            const double d0 = gmm.component(m).cov().determinant();
            const double d1 = pushed.component(m).cov().determinant();
            CHECK(rel_err(d1, d0) < 1e-10);
        }
    }
}

TEST_CASE("latent-space diffusion matches trajectory-space quality within 2x") {
    // single-agent scene so the whole joint space is one trajectory space
    SceneSpec spec;
    spec.n_agents = 1;
    spec.horizon = 12;
    spec.modes_per_agent = 3;
    const JointGmm joint = make_scene(spec, 77);
    const int X = joint.agent_dim();
    const Mat data = joint.mixture.sample_matrix(600, 13);

    LinearMap map;
    LatentTrainConfig cfg;
    cfg.steps = 6000;
    cfg.lr = 1e-5;
    cfg.seed = 9;
    train_linear_map(map, data, 4, cfg);

    const DiffusionSchedule sched = make_vp_schedule(100, 1e-4, 0.05);
    const Mat gt = joint.mixture.sample_matrix(1000, 2025);

    // trajectory space
    const DataStats stats = gmm_moments(joint.mixture);
    const OptimalPrior prior_x = optimal_prior(stats, sched.alpha_bar_at_time(100));
    const PerturbationKernel kernel_x(prior_x.sigma_p_star);
    const OracleDenoiser oracle_x(joint.mixture, sched, kernel_x);
    SamplerConfig scfg;
    scfg.start_T = 100;
    scfg.ddim_stride = 10;
    scfg.n_samples = 1000;
    scfg.seed = 4;
    const Mat xs = generate(oracle_x, PriorSampler::ogd(prior_x), sched, kernel_x, scfg).samples;
    const double sw_x = sliced_wasserstein(xs, gt, 100, 321);

    // latent space: exact pushforward mixture keeps the score oracle exact
    const GaussianMixture latent_gmm = pushforward_gmm(map, joint.mixture);
    const DataStats latent_stats = gmm_moments(latent_gmm);
    const OptimalPrior prior_z = optimal_prior(latent_stats, sched.alpha_bar_at_time(100));
    const PerturbationKernel kernel_z(prior_z.sigma_p_star);
    const OracleDenoiser oracle_z(latent_gmm, sched, kernel_z);
    const Mat zs = generate(oracle_z, PriorSampler::ogd(prior_z), sched, kernel_z, scfg).samples;
    Mat decoded(zs.rows(), X);
    for (Eigen::Index i = 0; i < zs.rows(); ++i)
        decoded.row(i) = decode(map, zs.row(i).transpose()).transpose();
    const double sw_z = sliced_wasserstein(decoded, gt, 100, 321);

    CHECK(sw_z < 2.0 * sw_x + 1e-9);
}
