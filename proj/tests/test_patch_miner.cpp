#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "diffmine/patch_miner.hpp"
#include "diffmine/rng.hpp"
#include "oracles.hpp"

using namespace diffmine;

namespace {

TypicalityMap map_of(const Grid& g) {
    TypicalityMap m;
    m.values = g;
    m.image_id = "img";
    m.label = "a";
    return m;
}

MinerConfig miner(int pw, int ph, int stride, int k = 5, int gk = 1000) {
    MinerConfig c;
    c.patch_w = pw;
    c.patch_h = ph;
    c.stride = stride;
    c.per_image_k = k;
    c.global_k = gk;
    return c;
}

}  // namespace

TEST_CASE("patch_scores on a constant map") {
    Grid g(8, 8, 0.42);
    const auto scores = patch_scores(map_of(g), miner(4, 4, 2));
    CHECK(scores.size() == 9);  // 3x3 grid positions
    for (const auto& [box, s] : scores) CHECK(s == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("patch_scores hotspot oracle in scan order") {
    Grid g(4, 4, 0.0);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) g.at(y, x) = 1.0;
    const auto scores = patch_scores(map_of(g), miner(2, 2, 2));
    REQUIRE(scores.size() == 4);
    CHECK(scores[0].second == doctest::Approx(1.0));
    CHECK(scores[1].second == doctest::Approx(0.0));
    CHECK(scores[2].second == doctest::Approx(0.0));
    CHECK(scores[3].second == doctest::Approx(0.0));
    // scan order is row-major
    CHECK(scores[0].first == Box{0, 0, 2, 2});
    CHECK(scores[1].first == Box{2, 0, 2, 2});
    CHECK(scores[2].first == Box{0, 2, 2, 2});

    // half-covering position at stride 1
    const auto fine = patch_scores(map_of(g), miner(2, 2, 1));
    // position (x0=1, y0=0) covers half the hotspot
    bool found = false;
    for (const auto& [box, s] : fine)
        if (box == Box{1, 0, 2, 2}) {
            CHECK(s == doctest::Approx(0.5));
            found = true;
        }
    CHECK(found);
}

TEST_CASE("patch_scores rejects oversized patches") {
    Grid g(4, 4, 0.0);
    CHECK_THROWS_AS(patch_scores(map_of(g), miner(8, 8, 1)), std::invalid_argument);
}

TEST_CASE("patch_scores mean-consistency at stride == patch size") {
    Rng rng(2);
    Grid g(12, 12);
    for (auto& v : g.v) v = rng.gaussian();
    const auto scores = patch_scores(map_of(g), miner(4, 4, 4));
    double total = 0.0;
    for (const auto& [b, s] : scores) total += s;
    CHECK(total / double(scores.size()) == doctest::Approx(g.mean()).epsilon(1e-9));
}

TEST_CASE("select_top_patches greedy trace") {
    // two overlapping candidates (0.9, 0.8) plus a disjoint 0.5
    std::vector<std::pair<Box, double>> cands = {
        {Box{0, 0, 4, 4}, 0.9}, {Box{2, 2, 4, 4}, 0.8}, {Box{10, 10, 4, 4}, 0.5}};
    const auto picks = select_top_patches(cands, 2, "img", "a");
    REQUIRE(picks.size() == 2);
    CHECK(picks[0].score == doctest::Approx(0.9));
    CHECK(picks[1].score == doctest::Approx(0.5));
}

TEST_CASE("select_top_patches keeps the top five of six disjoint hotspots") {
    std::vector<std::pair<Box, double>> cands;
    for (int i = 0; i < 6; ++i) cands.push_back({Box{i * 10, 0, 5, 5}, double(6 - i)});
    const auto picks = select_top_patches(cands, 5, "img", "a");
    REQUIRE(picks.size() == 5);
    double total = 0.0;
    for (const auto& p : picks) total += p.score;
    CHECK(total == doctest::Approx(oracles::exhaustive_best_selection(cands, 5)));
    for (const auto& p : picks) CHECK(p.score >= 2.0);  // lowest hotspot excluded
}

TEST_CASE("select_top_patches tie-break is scan order") {
    // uniform scores: first k boxes in row-major order win
    std::vector<std::pair<Box, double>> cands;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) cands.push_back({Box{x * 5, y * 5, 5, 5}, 1.0});
    const auto picks = select_top_patches(cands, 5, "img", "a");
    REQUIRE(picks.size() == 5);
    CHECK(picks[0].box == Box{0, 0, 5, 5});
    CHECK(picks[1].box == Box{5, 0, 5, 5});
    CHECK(picks[2].box == Box{10, 0, 5, 5});
    CHECK(picks[3].box == Box{15, 0, 5, 5});
    CHECK(picks[4].box == Box{0, 5, 5, 5});
}

TEST_CASE("select_top_patches output never overlaps") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<std::pair<Box, double>> cands;
        const int n = 3 + rng.uniform_int(30);
        for (int i = 0; i < n; ++i)
            cands.push_back({Box{rng.uniform_int(40), rng.uniform_int(40), 3 + rng.uniform_int(8),
                                 3 + rng.uniform_int(8)},
                             rng.uniform()});
        const auto picks = select_top_patches(cands, 6, "img", "a");
        CHECK_FALSE(any_overlap(picks));
    }
}

TEST_CASE("greedy equals the exhaustive oracle on binary-overlap instances") {
    // groups of identical boxes: overlap is total within a group, empty
    // across groups
    Rng rng(6);
    for (int rep = 0; rep < 40; ++rep) {
        const int n_groups = 2 + rng.uniform_int(4);
        std::vector<std::pair<Box, double>> cands;
        for (int gidx = 0; gidx < n_groups && int(cands.size()) < 12; ++gidx) {
            const Box b{gidx * 20, 0, 6, 6};
            const int copies = 1 + rng.uniform_int(3);
            for (int cpy = 0; cpy < copies && int(cands.size()) < 12; ++cpy)
                cands.push_back({b, rng.uniform()});
        }
        const int k = 1 + rng.uniform_int(4);
        const auto picks = select_top_patches(cands, k, "img", "a");
        double total = 0.0;
        for (const auto& p : picks) total += p.score;
        CHECK(total == doctest::Approx(oracles::exhaustive_best_selection(cands, k)).epsilon(1e-12));
    }
}

TEST_CASE("planted hotspots are each recovered by a distinct top patch") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const int side = 40, ps = 6;
        Grid g(side, side, 0.0);
        // Disjoint patch-sized hotspots with >= patch-size margins.
        std::vector<Box> spots;
        const int cells = side / (2 * ps);
        for (int cy = 0; cy < cells; ++cy)
            for (int cx = 0; cx < cells; ++cx) {
                if (rng.uniform() < 0.4) continue;
                spots.push_back(Box{cx * 2 * ps, cy * 2 * ps, ps, ps});
            }
        if (spots.size() < 2) continue;
        for (size_t i = 0; i < spots.size(); ++i) {
            const double v = 1.0 + 0.1 * double(i);
            for (int y = spots[i].y0; y < spots[i].y1(); ++y)
                for (int x = spots[i].x0; x < spots[i].x1(); ++x) g.at(y, x) = v;
        }
        const auto scores = patch_scores(map_of(g), miner(ps, ps, 1, int(spots.size())));
        const auto picks =
            select_top_patches(scores, int(spots.size()), "img", "a");
        REQUIRE(picks.size() == spots.size());
        std::set<size_t> hit;
        for (const auto& p : picks)
            for (size_t i = 0; i < spots.size(); ++i)
                if (p.box.intersects(spots[i])) hit.insert(i);
        CHECK(hit.size() == spots.size());
    }
}

TEST_CASE("global_top sorting, truncation and tie-breaks") {
    std::vector<std::vector<PatchRef>> per_image;
    per_image.push_back({{"img_a", Box{0, 0, 4, 4}, 0.9, "l"},
                         {"img_a", Box{10, 0, 4, 4}, 0.1, "l"}});
    per_image.push_back({{"img_b", Box{0, 0, 4, 4}, 0.5, "l"}});

    const auto top2 = global_top(per_image, 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].score == doctest::Approx(0.9));
    CHECK(top2[1].score == doctest::Approx(0.5));

    // pool smaller than global_k: whole pool, sorted
    const auto all = global_top(per_image, 100);
    REQUIRE(all.size() == 3);
    CHECK(all[2].score == doctest::Approx(0.1));

    // ordered by image id then position on equal scores
    std::vector<std::vector<PatchRef>> ties;
    ties.push_back({{"zeta", Box{0, 0, 4, 4}, 1.0, "l"}});
    ties.push_back({{"alpha", Box{0, 5, 4, 4}, 1.0, "l"}, {"alpha", Box{0, 0, 4, 4}, 1.0, "l"}});
    const auto t = global_top(ties, 3);
    CHECK(t[0].image_id == "alpha");
    CHECK(t[0].box.y0 == 0);
    CHECK(t[1].image_id == "alpha");
    CHECK(t[1].box.y0 == 5);
    CHECK(t[2].image_id == "zeta");
}

TEST_CASE("MinerConfig validation") {
    CHECK_THROWS_AS(miner(0, 4, 1).validate(), std::invalid_argument);
    CHECK_THROWS_AS(miner(4, 4, 0).validate(), std::invalid_argument);
    MinerConfig c = miner(4, 4, 1);
    c.global_k = 2;
    c.per_image_k = 5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
