#include <catch2/catch_amalgamated.hpp>

#include <mpgpe/io.hpp>

#include <filesystem>

using namespace mpgpe;
namespace fs = std::filesystem;

namespace {

Vec vec1(double x) {
    Vec v(1);
    v[0] = x;
    return v;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mpgpe_test_" + std::to_string(Catch::rngSeed()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("doubles round-trip exactly through the 17-digit format", "[io]") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.normal(0.0, 1e3) * std::pow(10.0, rng.uniform(-12, 12));
        const std::string s = format_double(x);
        REQUIRE(parse_double(s, "test") == x);
    }
    REQUIRE(format_double(0.0) == "0");
}

TEST_CASE("transition datasets round-trip through CSV", "[io]") {
    TempDir dir;
    Rng rng(5);
    std::vector<TransitionSample> samples;
    for (int i = 0; i < 25; ++i)
        samples.push_back({vec1(rng.uniform(0, 10)), vec1(rng.uniform(-5, 5)),
                           vec1(rng.uniform(0, 10))});
    const std::string path = dir.file("data.csv");
    write_transitions_csv(path, samples);
    const auto loaded = read_transitions_csv(path);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        REQUIRE(loaded[i].s[0] == samples[i].s[0]);
        REQUIRE(loaded[i].a[0] == samples[i].a[0]);
        REQUIRE(loaded[i].s_next[0] == samples[i].s_next[0]);
    }
    REQUIRE_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("multi-dimensional datasets keep their column structure", "[io]") {
    TempDir dir;
    Rng rng(7);
    std::vector<TransitionSample> samples;
    for (int i = 0; i < 10; ++i) {
        Vec s(4), a(2), n(4);
        for (int j = 0; j < 4; ++j) s[j] = rng.normal();
        for (int j = 0; j < 2; ++j) a[j] = rng.normal();
        for (int j = 0; j < 4; ++j) n[j] = rng.normal();
        samples.push_back({s, a, n});
    }
    const std::string path = dir.file("arm.csv");
    write_transitions_csv(path, samples);
    const auto loaded = read_transitions_csv(path);
    REQUIRE(loaded[0].s.size() == 4);
    REQUIRE(loaded[0].a.size() == 2);
    for (int j = 0; j < 4; ++j) REQUIRE(loaded[3].s_next[j] == samples[3].s_next[j]);
}

TEST_CASE("malformed CSV rows are reported with their row number", "[io]") {
    TempDir dir;
    const std::string path = dir.file("bad.csv");
    atomic_write_file(path, "s0,a0,s_next0\n1.0,2.0,3.0\n4.0,oops,6.0\n");
    try {
        read_transitions_csv(path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("row 3") != std::string::npos);
    }

    atomic_write_file(path, "s0,a0,s_next0\n1.0,2.0\n");
    try {
        read_transitions_csv(path);
        FAIL("expected a column-count error");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("row 2") != std::string::npos);
    }
}

TEST_CASE("lscde models reload with identical densities", "[io]") {
    TempDir dir;
    Rng rng(11);
    std::vector<TransitionSample> samples;
    for (int i = 0; i < 60; ++i) {
        const double s = rng.uniform(0, 10);
        const double a = rng.uniform(-5, 5);
        samples.push_back({vec1(s), vec1(a), vec1(s + a + rng.normal(0.0, 0.3))});
    }
    Rng fit_rng(1);
    const auto model = fit_lscde(samples, 0.6, 1e-3, 0, fit_rng);
    const std::string path = dir.file("model.lscde");
    save_lscde(path, model);
    const auto loaded = load_lscde(path);
    REQUIRE(loaded.num_centers() == model.num_centers());
    for (int i = 0; i < 30; ++i) {
        const Vec s = vec1(rng.uniform(1, 9));
        const Vec a = vec1(rng.uniform(-3, 3));
        const Vec nxt = vec1(rng.uniform(0, 10));
        REQUIRE(std::abs(loaded.density(s, a, nxt) - model.density(s, a, nxt)) < 1e-12);
    }
}

TEST_CASE("per-block bandwidths survive the save format", "[io]") {
    TempDir dir;
    Mat cs(2, 1), ca(2, 1), co(2, 1);
    cs << 1.0, 2.0;
    ca << 0.0, 0.5;
    co << 3.0, 4.0;
    Vec alpha(2);
    alpha << 0.5, 1.5;
    const LscdeModel model(cs, ca, co, LscdeBandwidth(0.4, 0.6, 0.8), 1e-2, alpha);
    const std::string path = dir.file("blocks.lscde");
    save_lscde(path, model);
    const auto loaded = load_lscde(path);
    REQUIRE(loaded.bandwidth().s == 0.4);
    REQUIRE(loaded.bandwidth().a == 0.6);
    REQUIRE(loaded.bandwidth().out == 0.8);
    REQUIRE(loaded.lambda() == 1e-2);
}

TEST_CASE("gp models reload with identical predictions", "[io]") {
    TempDir dir;
    Rng rng(13);
    Mat X(20, 2), Y(20, 1);
    for (int i = 0; i < 20; ++i) {
        X(i, 0) = rng.uniform(0, 5);
        X(i, 1) = rng.uniform(-1, 1);
        Y(i, 0) = X(i, 0) + X(i, 1) + rng.normal(0.0, 0.1);
    }
    Vec ls(2);
    ls << 1.0, 0.5;
    const GpModel model(X, Y, 2.0, ls, 0.01);
    const std::string path = dir.file("model.gp");
    save_gp(path, model);
    const auto loaded = load_gp(path);
    for (int i = 0; i < 20; ++i) {
        const Vec s = vec1(rng.uniform(0, 5));
        const Vec a = vec1(rng.uniform(-1, 1));
        auto [m1, v1] = model.predict(s, a);
        auto [m2, v2] = loaded.predict(s, a);
        REQUIRE(m1[0] == m2[0]);
        REQUIRE(v1[0] == v2[0]);
    }
}

TEST_CASE("prior hyper-parameters round-trip", "[io]") {
    TempDir dir;
    Vec eta(3), tau(3);
    eta << 0.1, -2.5, 3.25;
    tau << 1.0, 0.125, 2.0;
    const PriorHyper rho(eta, tau);
    const std::string path = dir.file("final.prior");
    save_prior(path, rho);
    const auto loaded = load_prior(path);
    REQUIRE((loaded.eta - eta).norm() == 0.0);
    REQUIRE((loaded.tau - tau).norm() == 0.0);
}

TEST_CASE("curve and sweep CSV have headers and stable formatting", "[io]") {
    LearningCurve curve;
    curve.rows.push_back({1, 20, 1.5, 0.25});
    curve.rows.push_back({2, 20, 2.5, 0.125});
    const std::string text = curve_to_csv(curve);
    REQUIRE(text.rfind("iteration,cumulative_real_episodes,mean_return,std_error\n", 0) == 0);
    REQUIRE(text.find("\n1,20,1.5,0.25\n") != std::string::npos);

    std::vector<SweepRow> rows{{Schedule{5, 4}, 3.0, 0.5, 50}};
    const std::string sweep = sweep_to_csv(rows);
    REQUIRE(sweep.find("5x4,3,0.5,50") != std::string::npos);
}

TEST_CASE("manifests carry the command, hash, seed and outputs", "[io]") {
    RunManifest m;
    m.command = "train";
    m.config_text = "algo = mpgpe-lscde\nseed = 7\n";
    m.seed = 7;
    m.started_at = "2000-01-01T00:00:00Z";
    m.finished_at = "2000-01-01T00:00:01Z";
    m.outputs = {"curve.csv", "final.prior"};
    const std::string text = manifest_to_text(m);
    REQUIRE(text.find("command = train") != std::string::npos);
    REQUIRE(text.find("config_hash = " + fnv1a_hex(m.config_text)) != std::string::npos);
    REQUIRE(text.find("output = curve.csv") != std::string::npos);
    REQUIRE(text.find("output = final.prior") != std::string::npos);
    REQUIRE(fnv1a_hex("a") != fnv1a_hex("b"));
}

TEST_CASE("atomic writes never leave partial files", "[io]") {
    TempDir dir;
    const std::string path = dir.file("sub/dir/file.csv");
    atomic_write_file(path, "hello\n");
    REQUIRE(fs::exists(path));
    REQUIRE_FALSE(fs::exists(path + ".tmp"));
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 1);
    REQUIRE(lines[0] == "hello");
}
