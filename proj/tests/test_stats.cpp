#include <doctest.h>

#include "ogd/stats.hpp"
#include "test_util.hpp"

using namespace ogd;
using namespace ogd::test;

TEST_CASE("gmm_moments identity case") {
    GaussianMixture gmm(Vec::Ones(1), {Gaussian(Vec::Zero(3), Mat::Identity(3, 3))});
    const DataStats stats = gmm_moments(gmm);
    CHECK(stats.mean.norm() == doctest::Approx(0.0));
    CHECK((stats.cov - Mat::Identity(3, 3)).norm() == doctest::Approx(0.0));
}

TEST_CASE("gmm_moments two equal-weight 1-D components") {
    Vec w(2);
    w << 0.5, 0.5;
    Vec m1(1), m2(1);
    m1 << -1.0;
    m2 << 1.0;
    GaussianMixture gmm(w, {Gaussian(m1, Mat::Ones(1, 1)), Gaussian(m2, Mat::Ones(1, 1))});
    const DataStats stats = gmm_moments(gmm);
    CHECK(stats.mean[0] == doctest::Approx(0.0));
    CHECK(stats.cov(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("gmm_moments matches Monte Carlo on a random 2-D mixture") {
    Rng rng(42);
    const GaussianMixture gmm = random_mixture(2, 3, rng);
    const DataStats stats = gmm_moments(gmm);
    const int n = 1000000;
    const Mat draws = gmm.sample_matrix(n, 123);
    const Vec mc_mean = draws.colwise().mean().transpose();
    const Mat centered = draws.rowwise() - mc_mean.transpose();
    const Mat mc_cov = centered.transpose() * centered / double(n);
    // 3 sigma of the estimator: sd(x_j)/sqrt(n) per coordinate
    for (int j = 0; j < 2; ++j) {
        const double se = std::sqrt(stats.cov(j, j) / double(n));
        CHECK(std::abs(mc_mean[j] - stats.mean[j]) < 3.0 * se);
    }
    CHECK((mc_cov - stats.cov).cwiseAbs().maxCoeff() < 0.05 * stats.cov.cwiseAbs().maxCoeff());
}

TEST_CASE("gmm_score of a standard normal is -x") {
    GaussianMixture gmm(Vec::Ones(1), {Gaussian(Vec::Zero(4), Mat::Identity(4, 4))});
    Rng rng(7);
    const Vec x = rng.normal_vec(4);
    CHECK((gmm_score(gmm, x) + x).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gmm_score vanishes at the midpoint of symmetric equal components") {
    Vec w(2);
    w << 0.5, 0.5;
    Vec m1(2), m2(2);
    m1 << -2.0, 0.0;
    m2 << 2.0, 0.0;
    const Mat cov = 0.7 * Mat::Identity(2, 2);
    GaussianMixture gmm(w, {Gaussian(m1, cov), Gaussian(m2, cov)});
    CHECK(gmm_score(gmm, Vec::Zero(2)).norm() < 1e-12);
}

TEST_CASE("gmm_score matches central finite differences") {
    Rng rng(11);
    const GaussianMixture gmm = random_mixture(3, 4, rng);
    for (int rep = 0; rep < 20; ++rep) {
        const Vec x = 2.0 * rng.normal_vec(3);
        const Vec score = gmm_score(gmm, x);
        Vec fd(3);
        const double h = 1e-5;
        for (int i = 0; i < 3; ++i) {
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (gmm.log_density(xp) - gmm.log_density(xm)) / (2.0 * h);
        }
        CHECK(max_rel_err(score, fd) < 1e-5);
    }
}

TEST_CASE("gmm_score survives responsibility underflow far from all modes") {
    Vec w(2);
    w << 0.5, 0.5;
    Vec m1(1), m2(1);
    m1 << -1.0;
    m2 << 1.0;
    GaussianMixture gmm(w, {Gaussian(m1, Mat::Ones(1, 1)), Gaussian(m2, Mat::Ones(1, 1))});
    Vec x(1);
    x << 1e4;
    const Vec s = gmm_score(gmm, x);
    CHECK(std::isfinite(s[0]));
    CHECK(s[0] < 0.0);
}

TEST_CASE("kl_gaussian identity and 1-D closed form") {
    Rng rng(3);
    const Mat cov = random_spd(3, rng);
    const Gaussian p(rng.normal_vec(3), cov);
    CHECK(kl_gaussian(p, p) == doctest::Approx(0.0).epsilon(1e-12));

    Vec m0(1), m1(1);
    m0 << 0.0;
    m1 << 1.0;
    const Gaussian a(m0, Mat::Ones(1, 1));
    const Gaussian b(m1, 2.0 * Mat::Ones(1, 1));
    // ln sqrt(2) + (1 + 1)/4 - 1/2
    CHECK(kl_gaussian(a, b) == doctest::Approx(0.5 * std::log(2.0) + 0.5 - 0.5).epsilon(1e-12));
}

TEST_CASE("kl_gaussian matches a Monte Carlo estimate") {
    Rng rng(19);
    const Gaussian p(rng.normal_vec(2), random_spd(2, rng));
    const Gaussian q(rng.normal_vec(2), random_spd(2, rng));
    const double exact = kl_gaussian(p, q);
    const int n = 1000000;
    Rng draw_rng(77);
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec x = p.sample(draw_rng);
        const double f = p.log_density(x) - q.log_density(x);
        sum += f;
        sum_sq += f * f;
    }
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n);
    CHECK(std::abs(mean - exact) < 3.0 * se);
}

TEST_CASE("kl_gaussian rejects a singular covariance") {
    Mat nearly_singular(2, 2);
    nearly_singular << 1.0, 0.0, 0.0, 1e-302;
    const Gaussian q(Vec::Zero(2), nearly_singular);
    const Gaussian p(Vec::Zero(2), Mat::Identity(2, 2));
    CHECK_THROWS_WITH_AS(kl_gaussian(p, q), "singular covariance", std::invalid_argument);
}

TEST_CASE("kl_gaussian nonnegative on random PSD pairs, zero only at equality") {
    Rng rng(23);
    for (int rep = 0; rep < 1000; ++rep) {
        const int d = 1 + static_cast<int>(rng.uniform() * 4);
        const Gaussian p(rng.normal_vec(d), random_spd(d, rng));
        const Gaussian q(rng.normal_vec(d), random_spd(d, rng));
        const double kl = kl_gaussian(p, q);
        CHECK(kl >= -1e-12);
        CHECK(kl > 1e-8);  // parameters differ almost surely
    }
}

TEST_CASE("kl_gmm_vs_gaussian identity case and closed-form cross-check") {
    Rng rng(5);
    const Vec mean = rng.normal_vec(2);
    const Mat cov = random_spd(2, rng);
    GaussianMixture p(Vec::Ones(1), {Gaussian(mean, cov)});

    const Gaussian q_same(mean, cov);
    const McEstimate zero = kl_gmm_vs_gaussian(p, q_same, 20000, 1);
    CHECK(std::abs(zero.value) <= 3.0 * std::max(zero.std_error, 1e-12));

    const Gaussian q(rng.normal_vec(2), random_spd(2, rng));
    const McEstimate est = kl_gmm_vs_gaussian(p, q, 200000, 2);
    CHECK(std::abs(est.value - kl_gaussian(Gaussian(mean, cov), q)) < 3.0 * est.std_error);
}

TEST_CASE("kl_gmm_vs_gaussian is deterministic in the seed") {
    Rng rng(9);
    const GaussianMixture p = random_mixture(2, 2, rng);
    const Gaussian q(rng.normal_vec(2), random_spd(2, rng));
    const McEstimate a = kl_gmm_vs_gaussian(p, q, 5000, 99);
    const McEstimate b = kl_gmm_vs_gaussian(p, q, 5000, 99);
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);
}

TEST_CASE("kl_gmm_vs_gaussian rejects tiny draw counts") {
    Rng rng(1);
    const GaussianMixture p = random_mixture(1, 1, rng);
    const Gaussian q(Vec::Zero(1), Mat::Ones(1, 1));
    CHECK_THROWS_AS(kl_gmm_vs_gaussian(p, q, 10, 0), std::invalid_argument);
}

TEST_CASE("cholesky sampling reproduces the covariance") {
    Rng rng(31);
    const Mat cov = random_spd(3, rng);
    const Gaussian g(rng.normal_vec(3), cov);
    const int n = 100000;
    Rng draw_rng(8);
    Mat draws(n, 3);
    for (int i = 0; i < n; ++i) draws.row(i) = g.sample(draw_rng).transpose();
    const Vec mean = draws.colwise().mean().transpose();
    const Mat centered = draws.rowwise() - mean.transpose();
    const Mat sample_cov = centered.transpose() * centered / double(n);
    CHECK((sample_cov - cov).norm() / cov.norm() < 0.05);
}

TEST_CASE("gaussian constructor enforces invariants") {
    Mat asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(Gaussian(Vec::Zero(2), asym), std::invalid_argument);
    Mat indef(2, 2);
    indef << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(Gaussian(Vec::Zero(2), indef), std::invalid_argument);
    CHECK_THROWS_AS(Gaussian(Vec::Zero(3), Mat::Identity(2, 2)), std::invalid_argument);
}

TEST_CASE("mixture constructor enforces invariants") {
    Vec w(2);
    w << 0.6, 0.39;  // sums to 0.99
    std::vector<Gaussian> comps{Gaussian(Vec::Zero(1), Mat::Ones(1, 1)),
                                Gaussian(Vec::Ones(1), Mat::Ones(1, 1))};
    CHECK_THROWS_AS(GaussianMixture(w, comps), std::invalid_argument);
}
