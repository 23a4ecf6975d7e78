#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ogd/harness.hpp"
#include "ogd/persistence.hpp"
#include "test_util.hpp"

using namespace ogd;
using namespace ogd::test;

namespace {

struct TmpFile {
    std::string path;
    explicit TmpFile(std::string p) : path(std::move(p)) {}
    ~TmpFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("empty sample batch round-trips") {
    for (Encoding enc : {Encoding::text, Encoding::binary}) {
        TmpFile f("batch_empty_test");
        save_batch(Mat(0, 5), f.path, enc);
        const Mat back = load_batch(f.path);
        CHECK(back.rows() == 0);
    }
}

TEST_CASE("sample batch round-trips bit-exactly in both encodings") {
    Rng rng(3);
    Mat batch(7, 4);
    for (int i = 0; i < 7; ++i) batch.row(i) = rng.normal_vec(4).transpose();
    batch(0, 0) = 1.0 / 3.0;
    batch(1, 1) = 1e-300;
    batch(2, 2) = -1234567.89012345678;
    for (Encoding enc : {Encoding::text, Encoding::binary}) {
        TmpFile f("batch_roundtrip_test");
        save_batch(batch, f.path, enc);
        const Mat back = load_batch(f.path);
        REQUIRE(back.rows() == batch.rows());
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 4; ++j) CHECK(back(i, j) == batch(i, j));
    }
}

TEST_CASE("scene round-trips exactly in both encodings") {
    const SceneConfig sc = reference_scene();
    const JointGmm scene = make_scene(sc.spec, sc.seed);
    for (Encoding enc : {Encoding::text, Encoding::binary}) {
        TmpFile f("scene_roundtrip_test");
        save_scene(scene, f.path, enc);
        const JointGmm back = load_scene(f.path);
        CHECK(back.spec.n_agents == scene.spec.n_agents);
        CHECK(back.seed == scene.seed);
        CHECK(back.labels == scene.labels);
        CHECK((back.mixture.weights() - scene.mixture.weights()).norm() == 0.0);
        for (int m = 0; m < scene.mixture.size(); ++m) {
            CHECK((back.mixture.component(m).mean() - scene.mixture.component(m).mean()).norm() ==
                  0.0);
            CHECK((back.mixture.component(m).cov() - scene.mixture.component(m).cov()).norm() ==
                  0.0);
        }
    }
}

TEST_CASE("manifest hash is stable under key reordering") {
    Json a, b;
    a["zeta"] = 5.0;
    a["method"] = "ecm";
    a["seed"] = 3;
    b["seed"] = 3;
    b["method"] = "ecm";
    b["zeta"] = 5.0;
    CHECK(config_hash(a) == config_hash(b));
    b["zeta"] = 6.0;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("manifest round-trips") {
    TmpFile f("manifest_test.json");
    RunManifest m;
    m.config["method"] = "ecmr";
    m.config["zeta"] = 0.25;
    m.seed = 42;
    m.code_version = kCodeVersion;
    save_manifest(m, f.path);
    const RunManifest back = load_manifest(f.path);
    CHECK(back.seed == 42);
    CHECK(back.config == m.config);
    CHECK(back.hash() == m.hash());
}

TEST_CASE("version mismatch and corruption are reported") {
    TmpFile f("bad_artifact_test");
    atomic_write(f.path, "{\"magic\":\"ogdbench\",\"version\":99,\"kind\":\"scene\"}");
    CHECK_THROWS_WITH_AS(load_scene(f.path), "incompatible artifact version", std::runtime_error);
    atomic_write(f.path, "this is not json {");
    CHECK_THROWS_AS(load_scene(f.path), std::runtime_error);
    atomic_write(f.path, "{\"magic\":\"wrong\",\"version\":1,\"kind\":\"scene\"}");
    CHECK_THROWS_AS(load_scene(f.path), std::runtime_error);
    // truncated binary
    std::string bin("OGDB");
    atomic_write(f.path, bin);
    CHECK_THROWS_AS(load_scene(f.path), std::runtime_error);
}

TEST_CASE("atomic write leaves no temp file behind") {
    TmpFile f("atomic_test.txt");
    atomic_write(f.path, "payload");
    CHECK(read_file(f.path) == "payload");
    CHECK_FALSE(std::filesystem::exists(f.path + ".tmp"));
}

TEST_CASE("metric rows round-trip through the flat key-value format") {
    TmpFile f("metrics_test.txt");
    std::vector<MetricRow> rows(2);
    rows[0]["config_hash"] = "abc";
    put_metric(rows[0], "min_jfde", 0.12345678901234567);
    rows[1]["config_hash"] = "def";
    put_metric(rows[1], "min_jfde", 1e-17);
    save_metric_rows(rows, f.path);
    const auto back = load_metric_rows(f.path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].at("config_hash") == "abc");
    CHECK(std::stod(back[0].at("min_jfde")) == 0.12345678901234567);
    CHECK(std::stod(back[1].at("min_jfde")) == 1e-17);
}

TEST_CASE("format_double round-trips doubles through decimal text") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const double v = rng.normal() * std::pow(10.0, -150.0 + 300.0 * rng.uniform());
        CHECK(std::stod(format_double(v)) == v);
    }
}
