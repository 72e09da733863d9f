#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "diffmine/backends.hpp"
#include "diffmine/core_model.hpp"
#include "diffmine/rng.hpp"
#include "diffmine/sha256.hpp"

using namespace diffmine;

namespace {

LabelSet car_templates() {
    return LabelSet{{"1920", "1930", "1980"}, "A car from the {}s.", "A car."};
}

Tensor random_tensor(int h, int w, int c, uint64_t seed) {
    Tensor t(h, w, c);
    Rng rng(seed);
    for (auto& v : t.v) v = rng.gaussian();
    return t;
}

LatentImage latent(const Tensor& t) {
    LatentImage z;
    z.values = t;
    return z;
}

// predict == 0 regardless of input.
struct ZeroDenoiser : DenoiserBackend {
    LatentImage predict(const LatentImage& noised, double, const Conditioning&) override {
        LatentImage out = noised;
        std::fill(out.values.v.begin(), out.values.v.end(), 0.0);
        return out;
    }
    int cond_dim() const override { return 4; }
    std::string id() const override { return "zero"; }
};

}  // namespace

TEST_CASE("sha256 standard vectors") {
    CHECK(sha256_hex(std::string{}) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string{"abc"}) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex(std::string{"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"}) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("render_prompt substitutes the placeholder") {
    CHECK(render_prompt(car_templates(), std::optional<std::string>{"1920"}) ==
          "A car from the 1920s.");
}

TEST_CASE("render_prompt null conditionings") {
    LabelSet geo{{"France", "Japan"}, "A Google streetview image of {}.",
                 "A Google streetview image."};
    CHECK(render_prompt(geo, std::nullopt) == "A Google streetview image.");
    LabelSet places{{"beer_garden"}, "An image of {}.", ""};
    CHECK(render_prompt(places, std::nullopt) == "");
}

TEST_CASE("render_prompt rejects unknown labels, naming the value") {
    try {
        render_prompt(car_templates(), std::optional<std::string>{"2030"});
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("2030") != std::string::npos);
    }
}

TEST_CASE("LabelSet invariants") {
    CHECK_THROWS_AS(LabelSet({}, "x {}", "").validate(), std::invalid_argument);
    CHECK_THROWS_AS(LabelSet({"a", "a"}, "x {}", "").validate(), std::invalid_argument);
    CHECK_THROWS_AS(LabelSet({"a"}, "no placeholder", "").validate(), std::invalid_argument);
    CHECK_THROWS_AS(LabelSet({"a"}, "{} and {}", "").validate(), std::invalid_argument);
    CHECK_NOTHROW(LabelSet({"a"}, "{}", "").validate());
}

TEST_CASE("noise schedules satisfy the endpoint and monotonicity contract") {
    CHECK_NOTHROW(NoiseSchedule::cosine().validate());
    CHECK_NOTHROW(NoiseSchedule::linear().validate());

    NoiseSchedule bad = NoiseSchedule::linear();
    bad.alpha_bar = [](double t) { return t; };  // increasing
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    NoiseSchedule off = NoiseSchedule::linear();
    off.alpha_bar = [](double) { return 0.5; };  // alpha_bar(0) != 1
    CHECK_THROWS_AS(off.validate(), std::invalid_argument);
}

TEST_CASE("forward_noise endpoints") {
    const auto sched = NoiseSchedule::linear();
    const Tensor x = random_tensor(4, 5, 1, 1);
    const Tensor e = random_tensor(4, 5, 1, 2);

    // alpha_bar(0) = 1: returns x exactly.
    const auto at0 = forward_noise(latent(x), latent(e), 0.0, sched);
    for (size_t i = 0; i < x.v.size(); ++i) CHECK(at0.values.v[i] == x.v[i]);

    // alpha_bar(1) = 0: returns eps exactly, in both forms.
    for (auto form : {ScheduleForm::standard_variance_preserving, ScheduleForm::paper_literal}) {
        const auto s = NoiseSchedule::linear(form);
        const auto at1 = forward_noise(latent(x), latent(e), 1.0, s);
        for (size_t i = 0; i < e.v.size(); ++i) CHECK(at1.values.v[i] == doctest::Approx(e.v[i]));
    }
}

TEST_CASE("forward_noise arithmetic oracle at alpha_bar 0.25") {
    // linear schedule reaches alpha_bar = 0.25 at t = 0.75; x=1, eps=0.
    const auto sched = NoiseSchedule::linear();
    const Tensor x(3, 3, 1, 1.0);
    const Tensor e(3, 3, 1, 0.0);
    const auto out = forward_noise(latent(x), latent(e), 0.75, sched);
    for (double v : out.values.v) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward_noise literal vs variance-preserving noise coefficients") {
    const Tensor x(2, 2, 1, 0.0);
    const Tensor e(2, 2, 1, 1.0);
    const auto vp = forward_noise(latent(x), latent(e), 0.75, NoiseSchedule::linear());
    const auto lit = forward_noise(
        latent(x), latent(e), 0.75, NoiseSchedule::linear(ScheduleForm::paper_literal));
    CHECK(vp.values.v[0] == doctest::Approx(std::sqrt(0.75)));
    CHECK(lit.values.v[0] == doctest::Approx(0.5));
}

TEST_CASE("forward_noise input validation") {
    const auto sched = NoiseSchedule::linear();
    CHECK_THROWS_AS(forward_noise(latent(Tensor(2, 2, 1)), latent(Tensor(3, 2, 1)), 0.5, sched),
                    std::invalid_argument);
    CHECK_THROWS_AS(forward_noise(latent(Tensor(2, 2, 1)), latent(Tensor(2, 2, 1)), 1.5, sched),
                    std::invalid_argument);
}

TEST_CASE("forward_noise is linear in (x, eps) at fixed t") {
    const auto sched = NoiseSchedule::cosine();
    Rng rng(7);
    for (int rep = 0; rep < 8; ++rep) {
        const Tensor x1 = random_tensor(6, 4, 3, 100 + rep);
        const Tensor x2 = random_tensor(6, 4, 3, 200 + rep);
        const Tensor e1 = random_tensor(6, 4, 3, 300 + rep);
        const Tensor e2 = random_tensor(6, 4, 3, 400 + rep);
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
        const double t = rng.uniform(0.0, 1.0);

        Tensor xs(6, 4, 3), es(6, 4, 3);
        for (size_t i = 0; i < xs.v.size(); ++i) {
            xs.v[i] = a * x1.v[i] + b * x2.v[i];
            es.v[i] = a * e1.v[i] + b * e2.v[i];
        }
        const auto lhs = forward_noise(latent(xs), latent(es), t, sched);
        const auto f1 = forward_noise(latent(x1), latent(e1), t, sched);
        const auto f2 = forward_noise(latent(x2), latent(e2), t, sched);
        for (size_t i = 0; i < lhs.values.v.size(); ++i)
            CHECK(lhs.values.v[i] ==
                  doctest::Approx(a * f1.values.v[i] + b * f2.values.v[i]).epsilon(1e-9));
    }
}

TEST_CASE("loss_map of a perfect denoiser is all-zero") {
    const auto sched = NoiseSchedule::cosine();
    const Tensor x = random_tensor(5, 5, 1, 11);
    const Tensor e = random_tensor(5, 5, 1, 12);
    OffsetDenoiser perfect(x, sched, 0.0, 0.0);
    Conditioning cond{"c", {}, false};
    const LossMap m = loss_map(latent(x), latent(e), 0.4, cond, perfect, sched);
    for (double v : m.values.v) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("loss_map arithmetic oracles") {
    const auto sched = NoiseSchedule::cosine();
    const Tensor x = random_tensor(4, 6, 1, 21);
    Conditioning cond{"c", {}, false};

    // predict = eps + 0.1 everywhere, d = 1 -> all entries 0.01.
    {
        const Tensor e = random_tensor(4, 6, 1, 22);
        OffsetDenoiser off(x, sched, 0.1, 0.1);
        const LossMap m = loss_map(latent(x), latent(e), 0.3, cond, off, sched);
        for (double v : m.values.v) CHECK(v == doctest::Approx(0.01).epsilon(1e-9));
    }
    // predict = 0, eps = 1, d = 1 -> all entries 1.0.
    {
        const Tensor e(4, 6, 1, 1.0);
        ZeroDenoiser zero;
        const LossMap m = loss_map(latent(x), latent(e), 0.3, cond, zero, sched);
        for (double v : m.values.v) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("loss_map sums to the scalar squared-error norm") {
    const auto sched = NoiseSchedule::cosine();
    const Tensor x = random_tensor(7, 5, 3, 31);
    const Tensor e = random_tensor(7, 5, 3, 32);
    Conditioning cond{"c", {}, false};
    BlindDenoiser blind;

    const LossMap m = loss_map(latent(x), latent(e), 0.45, cond, blind, sched);
    // Independent route: norm of (predict - eps) computed directly.
    const auto noised = forward_noise(latent(x), latent(e), 0.45, sched);
    double norm2 = 0.0;
    for (size_t i = 0; i < e.v.size(); ++i) {
        const double d = 0.5 * noised.values.v[i] - e.v[i];
        norm2 += d * d;
    }
    CHECK(m.values.sum() == doctest::Approx(norm2).epsilon(1e-9));
}

TEST_CASE("loss_map is invariant to consistent channel permutation") {
    const auto sched = NoiseSchedule::cosine();
    const Tensor x = random_tensor(5, 4, 3, 41);
    const Tensor e = random_tensor(5, 4, 3, 42);
    Conditioning cond{"c", {}, false};

    const int perm[3] = {2, 0, 1};
    auto permute = [&](const Tensor& t) {
        Tensor out(t.h, t.w, t.c);
        for (int y = 0; y < t.h; ++y)
            for (int xx = 0; xx < t.w; ++xx)
                for (int c = 0; c < 3; ++c) out.at(y, xx, perm[c]) = t.at(y, xx, c);
        return out;
    };

    // A channel-asymmetric backend, conjugated by the permutation so that its
    // output permutes consistently with the inputs.
    struct Asym : DenoiserBackend {
        LatentImage predict(const LatentImage& z, double, const Conditioning&) override {
            LatentImage out = z;
            for (int y = 0; y < z.values.h; ++y)
                for (int x = 0; x < z.values.w; ++x)
                    for (int c = 0; c < z.values.c; ++c)
                        out.values.at(y, x, c) = 0.3 * z.values.at(y, x, c) + 0.05 * (c + 1);
            return out;
        }
        int cond_dim() const override { return 4; }
        std::string id() const override { return "asym"; }
    };
    struct Conjugated : DenoiserBackend {
        Asym inner;
        const int* p;
        explicit Conjugated(const int* perm_) : p(perm_) {}
        LatentImage predict(const LatentImage& z, double t, const Conditioning& c) override {
            LatentImage un = z;
            for (int y = 0; y < z.values.h; ++y)
                for (int x = 0; x < z.values.w; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        un.values.at(y, x, ch) = z.values.at(y, x, p[ch]);
            LatentImage mid = inner.predict(un, t, c);
            LatentImage out = z;
            for (int y = 0; y < z.values.h; ++y)
                for (int x = 0; x < z.values.w; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        out.values.at(y, x, p[ch]) = mid.values.at(y, x, ch);
            return out;
        }
        int cond_dim() const override { return 4; }
        std::string id() const override { return "asym-conj"; }
    };

    Asym a;
    Conjugated b(perm);
    const LossMap m1 = loss_map(latent(x), latent(e), 0.5, cond, a, sched);
    const LossMap m2 = loss_map(latent(permute(x)), latent(permute(e)), 0.5, cond, b, sched);
    for (size_t i = 0; i < m1.values.v.size(); ++i)
        CHECK(m1.values.v[i] == doctest::Approx(m2.values.v[i]).epsilon(1e-12));
}

TEST_CASE("offset backend loss is independent of x, eps and t") {
    const auto sched = NoiseSchedule::cosine();
    Conditioning cond{"c", {}, false};
    Conditioning null_cond{"", {}, true};
    for (int rep = 0; rep < 4; ++rep) {
        const Tensor x = random_tensor(4, 4, 1, 50 + rep);
        const Tensor e = random_tensor(4, 4, 1, 60 + rep);
        OffsetDenoiser off(x, sched, 0.2, 0.1);
        const double t = 0.15 + 0.2 * rep;
        const LossMap mc = loss_map(latent(x), latent(e), t, cond, off, sched);
        const LossMap mn = loss_map(latent(x), latent(e), t, null_cond, off, sched);
        for (double v : mc.values.v) CHECK(v == doctest::Approx(0.01).epsilon(1e-9));
        for (double v : mn.values.v) CHECK(v == doctest::Approx(0.04).epsilon(1e-9));
    }
}

TEST_CASE("HashTextEmbedder is deterministic, unit-norm, text-sensitive") {
    HashTextEmbedder emb(16, 5);
    const auto a = emb.embed("A car from the 1920s.");
    const auto b = emb.embed("A car from the 1920s.");
    const auto c = emb.embed("A car from the 1930s.");
    CHECK(a == b);
    CHECK(a != c);
    double norm2 = 0.0;
    for (double v : a) norm2 += v * v;
    CHECK(norm2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("make_conditioning sets is_null to match the rendered template") {
    HashTextEmbedder emb(8, 5);
    const auto labels = car_templates();
    const auto c = make_conditioning(labels, std::optional<std::string>{"1930"}, emb);
    CHECK_FALSE(c.is_null);
    CHECK(c.text == "A car from the 1930s.");
    const auto n = make_conditioning(labels, std::nullopt, emb);
    CHECK(n.is_null);
    CHECK(n.text == "A car.");
    CHECK(static_cast<int>(n.embedding.size()) == 8);
}
