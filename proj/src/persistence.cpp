#include "ogd/persistence.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ogd {

static_assert(std::endian::native == std::endian::little,
              "binary artifact encoding assumes a little-endian host");

namespace {

constexpr int kArtifactVersion = 1;
constexpr char kBinaryMagic[4] = {'O', 'G', 'D', 'B'};

void put_u64(std::string& out, std::uint64_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_f64(std::string& out, double v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_string(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out.append(s);
}

void put_vec(std::string& out, const Vec& v) {
    put_u64(out, static_cast<std::uint64_t>(v.size()));
    out.append(reinterpret_cast<const char*>(v.data()),
               static_cast<std::size_t>(v.size()) * sizeof(double));
}

void put_mat(std::string& out, const Mat& m) {
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

struct BinaryReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw std::runtime_error("parse error at offset " + std::to_string(pos));
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    Vec vec() {
        const auto n = static_cast<Eigen::Index>(u64());
        need(static_cast<std::size_t>(n) * 8);
        Vec v(n);
        std::memcpy(v.data(), buf.data() + pos, static_cast<std::size_t>(n) * 8);
        pos += static_cast<std::size_t>(n) * 8;
        return v;
    }
    Mat mat() {
        const auto rows = static_cast<Eigen::Index>(u64());
        const auto cols = static_cast<Eigen::Index>(u64());
        Mat m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
        return m;
    }
};

std::string binary_header(const std::string& kind) {
    std::string out(kBinaryMagic, 4);
    put_u64(out, kArtifactVersion);
    put_string(out, kind);
    return out;
}

bool is_binary(const std::string& bytes) {
    return bytes.size() >= 4 && std::memcmp(bytes.data(), kBinaryMagic, 4) == 0;
}

BinaryReader open_binary(const std::string& bytes, const std::string& kind) {
    BinaryReader r{bytes, 4};
    const std::uint64_t version = r.u64();
    if (version != kArtifactVersion) throw std::runtime_error("incompatible artifact version");
    const std::string k = r.str();
    if (k != kind) throw std::runtime_error("artifact kind mismatch: " + k);
    return r;
}

Json text_envelope(const std::string& kind) {
    Json j;
    j["magic"] = "ogdbench";
    j["version"] = kArtifactVersion;
    j["kind"] = kind;
    return j;
}

Json open_text(const std::string& bytes, const std::string& kind) {
    Json j;
    try {
        j = Json::parse(bytes);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("parse error: ") + e.what());
    }
    if (!j.contains("magic") || j["magic"] != "ogdbench")
        throw std::runtime_error("parse error: missing magic");
    if (j.value("version", -1) != kArtifactVersion)
        throw std::runtime_error("incompatible artifact version");
    if (j.value("kind", "") != kind)
        throw std::runtime_error("artifact kind mismatch: " + j.value("kind", ""));
    return j;
}

Json vec_to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec json_to_vec(const Json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

Json mat_to_json(const Mat& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(std::move(row));
    }
    return a;
}

Mat json_to_mat(const Json& a) {
    const auto rows = static_cast<Eigen::Index>(a.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(a[0].size()) : 0;
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    return m;
}

}  // namespace

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

std::string config_hash(const Json& config) {
    const std::string canonical = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_scene(const JointGmm& scene, const std::string& path, Encoding enc) {
    if (enc == Encoding::text) {
        Json j = text_envelope("scene");
        j["spec"] = {{"n_agents", scene.spec.n_agents},
                     {"horizon", scene.spec.horizon},
                     {"dt", scene.spec.dt},
                     {"modes_per_agent", scene.spec.modes_per_agent},
                     {"interaction_coupling", scene.spec.interaction_coupling}};
        j["seed"] = scene.seed;
        j["weights"] = vec_to_json(scene.mixture.weights());
        Json comps = Json::array();
        for (int m = 0; m < scene.mixture.size(); ++m) {
            Json c;
            c["mean"] = vec_to_json(scene.mixture.component(m).mean());
            c["cov"] = mat_to_json(scene.mixture.component(m).cov());
            comps.push_back(std::move(c));
        }
        j["components"] = std::move(comps);
        j["labels"] = scene.labels;
        atomic_write(path, j.dump(2) + "\n");
        return;
    }
    std::string out = binary_header("scene");
    put_u64(out, static_cast<std::uint64_t>(scene.spec.n_agents));
    put_u64(out, static_cast<std::uint64_t>(scene.spec.horizon));
    put_f64(out, scene.spec.dt);
    put_u64(out, static_cast<std::uint64_t>(scene.spec.modes_per_agent));
    put_f64(out, scene.spec.interaction_coupling);
    put_u64(out, scene.seed);
    put_vec(out, scene.mixture.weights());
    put_u64(out, static_cast<std::uint64_t>(scene.mixture.size()));
    for (int m = 0; m < scene.mixture.size(); ++m) {
        put_vec(out, scene.mixture.component(m).mean());
        put_mat(out, scene.mixture.component(m).cov());
    }
    put_u64(out, scene.labels.size());
    for (const auto& label : scene.labels) {
        put_u64(out, label.size());
        for (int v : label) put_u64(out, static_cast<std::uint64_t>(v));
    }
    atomic_write(path, out);
}

JointGmm load_scene(const std::string& path) {
    const std::string bytes = read_file(path);
    SceneSpec spec;
    std::uint64_t seed = 0;
    Vec weights;
    std::vector<Gaussian> comps;
    std::vector<std::vector<int>> labels;
    if (is_binary(bytes)) {
        BinaryReader r = open_binary(bytes, "scene");
        spec.n_agents = static_cast<int>(r.u64());
        spec.horizon = static_cast<int>(r.u64());
        spec.dt = r.f64();
        spec.modes_per_agent = static_cast<int>(r.u64());
        spec.interaction_coupling = r.f64();
        seed = r.u64();
        weights = r.vec();
        const std::uint64_t n = r.u64();
        for (std::uint64_t m = 0; m < n; ++m) {
            Vec mean = r.vec();
            Mat cov = r.mat();
            comps.emplace_back(std::move(mean), std::move(cov));
        }
        const std::uint64_t nl = r.u64();
        for (std::uint64_t i = 0; i < nl; ++i) {
            const std::uint64_t len = r.u64();
            std::vector<int> label;
            for (std::uint64_t k = 0; k < len; ++k) label.push_back(static_cast<int>(r.u64()));
            labels.push_back(std::move(label));
        }
    } else {
        const Json j = open_text(bytes, "scene");
        spec.n_agents = j["spec"]["n_agents"].get<int>();
        spec.horizon = j["spec"]["horizon"].get<int>();
        spec.dt = j["spec"]["dt"].get<double>();
        spec.modes_per_agent = j["spec"]["modes_per_agent"].get<int>();
        spec.interaction_coupling = j["spec"]["interaction_coupling"].get<double>();
        seed = j["seed"].get<std::uint64_t>();
        weights = json_to_vec(j["weights"]);
        for (const auto& c : j["components"])
            comps.emplace_back(json_to_vec(c["mean"]), json_to_mat(c["cov"]));
        labels = j["labels"].get<std::vector<std::vector<int>>>();
    }
    return JointGmm{spec, seed, GaussianMixture(std::move(weights), std::move(comps)),
                    std::move(labels)};
}

void save_batch(const Mat& samples, const std::string& path, Encoding enc) {
    if (enc == Encoding::text) {
        Json j = text_envelope("sample_batch");
        j["n"] = samples.rows();
        j["d"] = samples.cols();
        j["data"] = mat_to_json(samples);
        atomic_write(path, j.dump() + "\n");
        return;
    }
    std::string out = binary_header("sample_batch");
    put_mat(out, samples);
    atomic_write(path, out);
}

Mat load_batch(const std::string& path) {
    const std::string bytes = read_file(path);
    if (is_binary(bytes)) {
        BinaryReader r = open_binary(bytes, "sample_batch");
        return r.mat();
    }
    const Json j = open_text(bytes, "sample_batch");
    const auto n = j["n"].get<Eigen::Index>();
    const auto d = j["d"].get<Eigen::Index>();
    Mat m = json_to_mat(j["data"]);
    if (m.rows() == 0 && n == 0) return Mat(0, d);
    if (m.rows() != n || m.cols() != d)
        throw std::runtime_error("parse error: batch shape mismatch");
    return m;
}

void save_mlp(const MlpDenoiser& model, const std::string& path, Encoding enc) {
    const auto& cfg = model.config();
    if (enc == Encoding::text) {
        Json j = text_envelope("mlp_checkpoint");
        j["arch"] = {{"dim", cfg.dim},
                     {"hidden", cfg.hidden},
                     {"time_embed", cfg.time_embed},
                     {"cond_dim", cfg.cond_dim},
                     {"schedule_T", model.schedule_T()}};
        j["conditioning"] = vec_to_json(model.conditioning());
        j["params"] = vec_to_json(model.flatten_params());
        atomic_write(path, j.dump() + "\n");
        return;
    }
    std::string out = binary_header("mlp_checkpoint");
    put_u64(out, static_cast<std::uint64_t>(cfg.dim));
    put_u64(out, static_cast<std::uint64_t>(cfg.hidden));
    put_u64(out, static_cast<std::uint64_t>(cfg.time_embed));
    put_u64(out, static_cast<std::uint64_t>(cfg.cond_dim));
    put_u64(out, static_cast<std::uint64_t>(model.schedule_T()));
    put_vec(out, model.conditioning());
    put_vec(out, model.flatten_params());
    atomic_write(path, out);
}

MlpDenoiser load_mlp(const std::string& path) {
    const std::string bytes = read_file(path);
    MlpConfig cfg;
    int schedule_T = 1;
    Vec cond, params;
    if (is_binary(bytes)) {
        BinaryReader r = open_binary(bytes, "mlp_checkpoint");
        cfg.dim = static_cast<int>(r.u64());
        cfg.hidden = static_cast<int>(r.u64());
        cfg.time_embed = static_cast<int>(r.u64());
        cfg.cond_dim = static_cast<int>(r.u64());
        schedule_T = static_cast<int>(r.u64());
        cond = r.vec();
        params = r.vec();
    } else {
        const Json j = open_text(bytes, "mlp_checkpoint");
        cfg.dim = j["arch"]["dim"].get<int>();
        cfg.hidden = j["arch"]["hidden"].get<int>();
        cfg.time_embed = j["arch"]["time_embed"].get<int>();
        cfg.cond_dim = j["arch"]["cond_dim"].get<int>();
        schedule_T = j["arch"]["schedule_T"].get<int>();
        cond = json_to_vec(j["conditioning"]);
        params = json_to_vec(j["params"]);
    }
    MlpDenoiser model(cfg, schedule_T, 0);
    if (cfg.cond_dim > 0) model.set_conditioning(cond);
    model.set_params(params);
    return model;
}

void save_linear_map(const LinearMap& map, const std::string& path, Encoding enc) {
    if (enc == Encoding::text) {
        Json j = text_envelope("linear_map");
        j["U"] = mat_to_json(map.U);
        j["V"] = mat_to_json(map.V);
        j["eta"] = map.eta;
        atomic_write(path, j.dump() + "\n");
        return;
    }
    std::string out = binary_header("linear_map");
    put_mat(out, map.U);
    put_mat(out, map.V);
    put_f64(out, map.eta);
    atomic_write(path, out);
}

LinearMap load_linear_map(const std::string& path) {
    const std::string bytes = read_file(path);
    LinearMap map;
    if (is_binary(bytes)) {
        BinaryReader r = open_binary(bytes, "linear_map");
        map.U = r.mat();
        map.V = r.mat();
        map.eta = r.f64();
        return map;
    }
    const Json j = open_text(bytes, "linear_map");
    map.U = json_to_mat(j["U"]);
    map.V = json_to_mat(j["V"]);
    map.eta = j["eta"].get<double>();
    return map;
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
    Json j = text_envelope("run_manifest");
    j["config"] = manifest.config;
    j["seed"] = manifest.seed;
    j["code_version"] = manifest.code_version;
    j["config_hash"] = manifest.hash();
    atomic_write(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const std::string& path) {
    const Json j = open_text(read_file(path), "run_manifest");
    RunManifest m;
    m.config = j["config"];
    m.seed = j["seed"].get<std::uint64_t>();
    m.code_version = j.value("code_version", "");
    return m;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void put_metric(MetricRow& row, const std::string& key, double v) {
    row[key] = format_double(v);
}

void save_metric_rows(const std::vector<MetricRow>& rows, const std::string& path) {
    std::string out = "# ogdbench-metrics v1\n";
    for (const auto& row : rows) {
        bool first = true;
        for (const auto& [k, v] : row) {
            if (!first) out += '\t';
            out += k + "=" + v;
            first = false;
        }
        out += '\n';
    }
    atomic_write(path, out);
}

std::vector<MetricRow> load_metric_rows(const std::string& path) {
    const std::string bytes = read_file(path);
    std::vector<MetricRow> rows;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        std::size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) end = bytes.size();
        const std::string line = bytes.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty() || line[0] == '#') continue;
        MetricRow row;
        std::size_t field_pos = 0;
        while (field_pos < line.size()) {
            std::size_t field_end = line.find('\t', field_pos);
            if (field_end == std::string::npos) field_end = line.size();
            const std::string field = line.substr(field_pos, field_end - field_pos);
            field_pos = field_end + 1;
            const std::size_t eq = field.find('=');
            if (eq == std::string::npos) throw std::runtime_error("parse error in metric row");
            row[field.substr(0, eq)] = field.substr(eq + 1);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void save_series(const std::vector<std::pair<double, double>>& series, const std::string& path) {
    std::string out;
    for (const auto& [x, y] : series) out += format_double(x) + " " + format_double(y) + "\n";
    atomic_write(path, out);
}

Json report_to_json(const OptimalityReport& report) {
    Json j = text_envelope("optimality_report");
    j["n_draws"] = report.n_draws;
    j["seed"] = report.seed;
    Json entries = Json::array();
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        const auto& e = report.entries[i];
        Json je;
        je["T"] = e.T;
        je["alpha_bar_T"] = e.alpha_bar_T;
        je["closed_kl"] = e.closed_kl;
        je["closed_se"] = e.closed_se;
        je["family_opt_kl"] = e.family_opt_kl;
        je["family_opt_se"] = e.family_opt_se;
        je["diag_opt_kl"] = e.diag_opt_kl;
        je["diag_opt_se"] = e.diag_opt_se;
        je["standard_kl"] = e.standard_kl;
        je["standard_se"] = e.standard_se;
        je["variant_variance_consistent_kl"] = e.variant_vc_kl;
        je["variant_squared_kl"] = e.variant_sq_kl;
        je["closed_attains_family_opt"] = e.closed_attains_family_opt;
        je["variance_consistent_preferred"] = e.vc_variant_preferred;
        je["candidates_not_better"] = e.candidates_not_better;
        je["n_candidates"] = e.n_candidates;
        if (i < report.gaussian_checks.size()) {
            je["gaussian_exact_kl_variance_consistent"] =
                report.gaussian_checks[i].kl_variance_consistent;
            je["gaussian_exact_kl_squared"] = report.gaussian_checks[i].kl_squared;
        }
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    return j;
}

void save_report(const OptimalityReport& report, const std::string& path) {
    atomic_write(path, report_to_json(report).dump(2) + "\n");
}

}  // namespace ogd
