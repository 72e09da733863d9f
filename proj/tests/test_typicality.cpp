#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "diffmine/backends.hpp"
#include "diffmine/rng.hpp"
#include "diffmine/score_cache.hpp"
#include "diffmine/typicality.hpp"
#include "oracles.hpp"

using namespace diffmine;

namespace {

ImageRecord random_record(const std::string& id, int h, int w, int c, uint64_t seed) {
    ImageRecord r;
    r.id = id;
    r.label = "a";
    r.pixels = Tensor(h, w, c);
    Rng rng(seed);
    for (auto& v : r.pixels.v) v = rng.uniform();
    return r;
}

Conditioning fake_cond(bool null_flag) {
    return Conditioning{null_flag ? "" : "c", {}, null_flag};
}

std::filesystem::path temp_dir(const std::string& tag) {
    const auto p = std::filesystem::temp_directory_path() /
                   ("diffmine_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("upsample_map identity and constants") {
    Grid g(3, 4);
    Rng rng(1);
    for (auto& v : g.v) v = rng.uniform();
    const Grid same = upsample_map(g, 1);
    CHECK(same.v == g.v);

    Grid c(2, 2, 0.7);
    for (auto align : {UpsampleAlign::half_pixel, UpsampleAlign::corners}) {
        const Grid up = upsample_map(c, 3, align);
        CHECK(up.h == 6);
        CHECK(up.w == 6);
        for (double v : up.v) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
    }
}

TEST_CASE("upsample_map corner-aligned matches the hand bilinear oracle") {
    Grid g(2, 2);
    g.at(0, 0) = 1.0;  // [[1,0],[0,0]]
    const Grid up = upsample_map(g, 2, UpsampleAlign::corners);
    const Grid ref = oracles::bilinear_corners(g, 2);
    REQUIRE(up.h == 4);
    REQUIRE(up.w == 4);
    for (size_t i = 0; i < up.v.size(); ++i)
        CHECK(up.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
    // Spot values computed by hand: corners interpolate on a 1/3 grid.
    CHECK(up.at(0, 0) == doctest::Approx(1.0));
    CHECK(up.at(0, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(up.at(1, 1) == doctest::Approx(4.0 / 9.0));
    CHECK(up.at(3, 3) == doctest::Approx(0.0));
}

TEST_CASE("upsample_map default alignment preserves the mean") {
    Rng rng(3);
    for (int rep = 0; rep < 6; ++rep) {
        Grid g(2 + rep, 3 + rep);
        for (auto& v : g.v) v = rng.gaussian();
        for (int factor : {2, 3, 4}) {
            const Grid up = upsample_map(g, factor);
            CHECK(up.mean() == doctest::Approx(g.mean()).epsilon(1e-6));
        }
    }
}

TEST_CASE("conditioning-blind backend gives exactly zero paired typicality") {
    BlindDenoiser blind;
    const auto sched = NoiseSchedule::cosine();
    TypicalityConfig cfg;
    cfg.n_samples = 8;
    cfg.seed = 4;
    const auto rec = random_record("img0", 8, 8, 1, 9);
    const auto res =
        estimate_typicality(rec, fake_cond(false), fake_cond(true), blind, sched, cfg);
    CHECK(res.scalar == 0.0);
    for (double v : res.map.values.v) CHECK(v == 0.0);
}

TEST_CASE("offset backend closed-form map values") {
    const auto sched = NoiseSchedule::cosine();
    TypicalityConfig cfg;
    cfg.n_samples = 16;
    cfg.seed = 5;

    const auto rec = random_record("img1", 8, 8, 1, 10);
    OffsetDenoiser off(rec.pixels, sched, 0.2, 0.1);
    const auto res = estimate_typicality(rec, fake_cond(false), fake_cond(true), off, sched, cfg);
    for (double v : res.map.values.v) CHECK(v == doctest::Approx(0.03).epsilon(1e-9));
    CHECK(res.scalar == doctest::Approx(0.03).epsilon(1e-9));

    OffsetDenoiser worse(rec.pixels, sched, 0.2, 0.3);
    const auto neg =
        estimate_typicality(rec, fake_cond(false), fake_cond(true), worse, sched, cfg);
    CHECK(neg.scalar == doctest::Approx(0.04 - 0.09).epsilon(1e-9));
}

TEST_CASE("scalar equals the exact mean of the map") {
    const auto sched = NoiseSchedule::cosine();
    TypicalityConfig cfg;
    cfg.n_samples = 4;
    const auto rec = random_record("img2", 6, 10, 1, 11);
    NoisyOffsetDenoiser noisy(rec.pixels, sched, 0.2, 0.1, 0.05);
    const auto res =
        estimate_typicality(rec, fake_cond(false), fake_cond(true), noisy, sched, cfg);
    CHECK(res.scalar == res.map.values.mean());
}

TEST_CASE("preconditions on the conditionings") {
    BlindDenoiser blind;
    const auto sched = NoiseSchedule::cosine();
    TypicalityConfig cfg;
    const auto rec = random_record("img3", 8, 8, 1, 12);
    CHECK_THROWS_AS(
        estimate_typicality(rec, fake_cond(true), fake_cond(true), blind, sched, cfg),
        std::invalid_argument);
    CHECK_THROWS_AS(
        estimate_typicality(rec, fake_cond(false), fake_cond(false), blind, sched, cfg),
        std::invalid_argument);
}

TEST_CASE("backend failure carries the sample index and image id") {
    struct Flaky : DenoiserBackend {
        int calls = 0;
        LatentImage predict(const LatentImage& z, double, const Conditioning&) override {
            if (++calls >= 7) throw std::runtime_error("backend exploded");
            return z;
        }
        int cond_dim() const override { return 4; }
        std::string id() const override { return "flaky"; }
    };
    Flaky flaky;
    const auto sched = NoiseSchedule::cosine();
    TypicalityConfig cfg;
    cfg.n_samples = 8;
    const auto rec = random_record("imgX", 8, 8, 1, 13);
    try {
        estimate_typicality(rec, fake_cond(false), fake_cond(true), flaky, sched, cfg);
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("sample 3") != std::string::npos);
        CHECK(msg.find("imgX") != std::string::npos);
    }
}

TEST_CASE("Monte-Carlo estimate converges to the analytic t-integral") {
    // offset delta * t: per-sample difference (dn^2 - dc^2) t^2, so the
    // expectation over U[t_min, t_max] integrates t^2.
    const auto sched = NoiseSchedule::cosine();
    const double dn = 0.2, dc = 0.1;
    const double t0 = 0.1, t1 = 0.7;
    const double expected =
        (dn * dn - dc * dc) * (t1 * t1 * t1 - t0 * t0 * t0) / (3.0 * (t1 - t0));

    const auto rec = random_record("img4", 8, 8, 1, 14);
    TScaledOffsetDenoiser backend(rec.pixels, sched, dn, dc);

    double prev_err = 1e9;
    for (int n : {8, 64, 512}) {
        TypicalityConfig cfg;
        cfg.n_samples = n;
        cfg.seed = 21;
        const auto res =
            estimate_typicality(rec, fake_cond(false), fake_cond(true), backend, sched, cfg);
        const double err = std::abs(res.scalar - expected);
        // Per-sample std of (dn^2-dc^2) t^2 over U[0.1,0.7], bounded above by
        // the max deviation; 3 sigma with slack.
        const double sample_sd = 0.03 * 0.49;  // loose upper bound on sd(t^2)*(dn^2-dc^2)
        CHECK(err <= 3.0 * sample_sd / std::sqrt(double(n)) + 1e-12);
        if (n > 8) CHECK(err <= prev_err * 1.5 + 1e-9);  // roughly improving
        prev_err = err;
    }
}

TEST_CASE("paired and unpaired estimators agree in expectation; pairing cuts variance") {
    const auto sched = NoiseSchedule::cosine();
    const auto rec = random_record("img5", 8, 8, 1, 15);
    NoisyOffsetDenoiser backend(rec.pixels, sched, 0.2, 0.1, 0.25);

    const int trials = 120;
    std::vector<double> paired, unpaired;
    for (int i = 0; i < trials; ++i) {
        TypicalityConfig cfg;
        cfg.n_samples = 4;
        cfg.seed = 1000 + uint64_t(i);
        cfg.paired = true;
        paired.push_back(estimate_typicality(rec, fake_cond(false), fake_cond(true), backend,
                                             sched, cfg)
                             .scalar);
        cfg.paired = false;
        unpaired.push_back(estimate_typicality(rec, fake_cond(false), fake_cond(true), backend,
                                               sched, cfg)
                               .scalar);
    }
    auto mean_var = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= double(v.size());
        double var = 0.0;
        for (double x : v) var += (x - m) * (x - m);
        return std::make_pair(m, var / double(v.size() - 1));
    };
    const auto [mp, vp] = mean_var(paired);
    const auto [mu, vu] = mean_var(unpaired);
    // Both estimate E[0.03 + cross terms] = 0.03.
    CHECK(mp == doctest::Approx(0.03).epsilon(0.25));
    CHECK(mu == doctest::Approx(0.03).epsilon(0.25));
    CHECK(vp < vu);
}

TEST_CASE("determinism: same seed and config, any worker count") {
    const auto sched = NoiseSchedule::cosine();
    const auto rec = random_record("img6", 12, 9, 1, 16);
    NoisyOffsetDenoiser backend(rec.pixels, sched, 0.2, 0.1, 0.1);
    TypicalityConfig cfg;
    cfg.n_samples = 16;
    cfg.seed = 33;

    const auto r1 =
        estimate_typicality(rec, fake_cond(false), fake_cond(true), backend, sched, cfg, 1);
    const auto r4 =
        estimate_typicality(rec, fake_cond(false), fake_cond(true), backend, sched, cfg, 4);
    CHECK(r1.scalar == r4.scalar);
    CHECK(r1.map.values.v == r4.map.values.v);
}

TEST_CASE("batch_typicality: empty dataset, caching, corruption recovery") {
    const auto dir = temp_dir("cache");
    const auto sched = NoiseSchedule::cosine();
    LabelSet labels{{"a", "b"}, "x {}", ""};
    HashTextEmbedder embedder(4, 2);
    BlindDenoiser blind;
    TypicalityConfig cfg;
    cfg.n_samples = 4;

    // empty dataset -> empty store
    {
        ScoreCache cache(dir / "empty");
        const auto stats = batch_typicality({}, labels, blind, sched, cfg, embedder, cache);
        CHECK(stats.total == 0);
        CHECK(std::filesystem::exists(cache.manifest_path()));
        CHECK(std::filesystem::file_size(cache.manifest_path()) == 0);
    }

    std::vector<ImageRecord> recs;
    for (int i = 0; i < 3; ++i) {
        auto r = random_record("rec" + std::to_string(i), 8, 8, 1, 100 + uint64_t(i));
        r.label = i % 2 ? "b" : "a";
        recs.push_back(std::move(r));
    }

    ScoreCache cache(dir / "main");
    const auto first = batch_typicality(recs, labels, blind, sched, cfg, embedder, cache);
    CHECK(first.total == 3);
    CHECK(first.computed == 3);
    CHECK(first.cache_hits == 0);

    // conditioning-blind backend -> 3 zero scalars
    const std::string hash = cfg.config_hash(blind.id(), sched);
    for (const auto& r : recs) {
        const auto e = cache.load(r.id, r.label, hash);
        REQUIRE(e.has_value());
        CHECK(e->scalar == 0.0);
    }

    // rerun: all hits, stored bytes unchanged
    const auto entry0 = cache.entry_path(recs[0].id, recs[0].label);
    const auto bytes_before = [&] {
        std::ifstream in(entry0, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    }();
    const auto second = batch_typicality(recs, labels, blind, sched, cfg, embedder, cache);
    CHECK(second.cache_hits == 3);
    CHECK(second.computed == 0);
    const auto bytes_after = [&] {
        std::ifstream in(entry0, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    }();
    CHECK(bytes_before == bytes_after);

    // corrupt one entry -> recomputed, not trusted
    {
        std::ofstream out(entry0, std::ios::binary | std::ios::trunc);
        out << "garbage";
    }
    const auto third = batch_typicality(recs, labels, blind, sched, cfg, embedder, cache);
    CHECK(third.cache_hits == 2);
    CHECK(third.computed == 1);
    CHECK(cache.load(recs[0].id, recs[0].label, hash).has_value());

    // label outside the set is rejected
    recs[0].label = "zzz";
    CHECK_THROWS_AS(batch_typicality(recs, labels, blind, sched, cfg, embedder, cache),
                    std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cache round-trips shape, ids and f32 map payload") {
    const auto dir = temp_dir("roundtrip");
    ScoreCache cache(dir);
    ScoreEntry e;
    e.scalar = 0.125;
    e.map.values = Grid(3, 5);
    Rng rng(9);
    for (auto& v : e.map.values.v) v = rng.gaussian();
    e.map.image_id = "some/id with spaces";
    e.map.label = "label";
    e.map.n_samples = 7;
    e.map.config_hash = "deadbeef";
    cache.store(e);
    const auto back = cache.load(e.map.image_id, e.map.label, e.map.config_hash);
    REQUIRE(back.has_value());
    CHECK(back->scalar == 0.125);
    CHECK(back->map.n_samples == 7);
    REQUIRE(back->map.values.h == 3);
    REQUIRE(back->map.values.w == 5);
    for (size_t i = 0; i < e.map.values.v.size(); ++i)
        CHECK(back->map.values.v[i] == double(float(e.map.values.v[i])));
    // config-hash mismatch is a miss
    CHECK_FALSE(cache.load(e.map.image_id, e.map.label, "otherhash").has_value());
    std::filesystem::remove_all(dir);
}
