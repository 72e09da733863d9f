#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <map>

#include "diffmine/feature_cluster.hpp"
#include "diffmine/rng.hpp"
#include "diffmine/umap.hpp"
#include "oracles.hpp"

using namespace diffmine;

namespace {

Matrix blobs(const std::vector<std::array<double, 2>>& centers, int per_blob, double spread,
             int dim, uint64_t seed, std::vector<int>* truth = nullptr) {
    Matrix m(per_blob * int(centers.size()), dim);
    Rng rng(seed);
    int row = 0;
    for (size_t b = 0; b < centers.size(); ++b) {
        for (int i = 0; i < per_blob; ++i, ++row) {
            for (int d = 0; d < dim; ++d) {
                const double c = d < 2 ? centers[b][size_t(d)] : 0.0;
                m.at(row, d) = c + spread * rng.gaussian();
            }
            if (truth) truth->push_back(int(b));
        }
    }
    return m;
}

PatchRef patch(const std::string& id, int x0, double score) {
    return PatchRef{id, Box{x0, 0, 4, 4}, score, "l"};
}

}  // namespace

TEST_CASE("identity embedder and embed_patches oracles") {
    IdentityEmbedder emb(2, 2, 1);
    CHECK(emb.dim() == 4);

    Tensor img(8, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) img.at(y, x, 0) = y * 8 + x;

    // empty list -> empty matrix of declared width
    const Matrix empty = embed_patches({}, [&](const std::string&) -> const Tensor& { return img; },
                                       emb);
    CHECK(empty.rows == 0);
    CHECK(empty.cols == 4);

    // identical crops -> identical rows
    std::vector<PatchRef> same = {patch("i", 2, 0.0), patch("i", 2, 0.0)};
    same[0].box = same[1].box = Box{2, 2, 2, 2};
    const Matrix m = embed_patches(same, [&](const std::string&) -> const Tensor& { return img; },
                                   emb);
    for (int d = 0; d < 4; ++d) CHECK(m.at(0, d) == m.at(1, d));

    // crops differing by 1.0 in one pixel -> L2 distance 1.0
    Tensor img2 = img;
    img2.at(2, 2, 0) += 1.0;
    std::vector<Tensor> imgs = {img, img2};
    std::vector<PatchRef> two = {patch("0", 0, 0.0), patch("1", 0, 0.0)};
    two[0].box = two[1].box = Box{2, 2, 2, 2};
    const Matrix m2 = embed_patches(
        two, [&](const std::string& id) -> const Tensor& { return imgs[size_t(id[0] - '0')]; },
        emb);
    double d2 = 0.0;
    for (int d = 0; d < 4; ++d) {
        const double diff = m2.at(0, d) - m2.at(1, d);
        d2 += diff * diff;
    }
    CHECK(std::sqrt(d2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kmeans with k=1 returns the feature mean") {
    Rng rng(3);
    Matrix m(10, 3);
    for (auto& v : m.v) v = rng.gaussian();
    const KmeansResult km = kmeans(m, 1, 0);
    for (int d = 0; d < 3; ++d) {
        double mean = 0.0;
        for (int r = 0; r < 10; ++r) mean += m.at(r, d);
        mean /= 10.0;
        CHECK(km.centroids.at(0, d) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("kmeans recovers two well-separated blobs") {
    std::vector<int> truth;
    const Matrix m = blobs({{0.0, 0.0}, {50.0, 50.0}}, 20, 0.5, 4, 5, &truth);
    const KmeansResult km = kmeans(m, 2, 7);

    // brute-force nearest-true-mean oracle
    std::map<int, int> mapping;  // cluster -> blob
    for (size_t i = 0; i < truth.size(); ++i) mapping[km.assignments[i]] = truth[i];
    int correct = 0;
    for (size_t i = 0; i < truth.size(); ++i)
        if (mapping[km.assignments[i]] == truth[i]) ++correct;
    CHECK(correct == int(truth.size()));
}

TEST_CASE("kmeans determinism and objective monotonicity") {
    Rng rng(11);
    Matrix m(60, 6);
    for (auto& v : m.v) v = rng.gaussian();
    const KmeansResult a = kmeans(m, 5, 42);
    const KmeansResult b = kmeans(m, 5, 42);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids.v == b.centroids.v);
    for (size_t i = 1; i < a.objective_history.size(); ++i)
        CHECK(a.objective_history[i] <= a.objective_history[i - 1] + 1e-9);
}

TEST_CASE("kmeans rejects fewer rows than clusters") {
    Matrix m(3, 2);
    CHECK_THROWS_AS(kmeans(m, 4, 0), std::invalid_argument);
}

TEST_CASE("kmeans re-seeds empty clusters from the farthest point") {
    Matrix m(8, 2);
    for (int r = 0; r < 7; ++r) {
        m.at(r, 0) = r < 4 ? 0.0 : 10.0;
        m.at(r, 1) = 0.0;
    }
    m.at(7, 0) = 100.0;
    m.at(7, 1) = 0.0;
    const KmeansResult km = kmeans(m, 3, 1);
    std::map<int, int> counts;
    for (int a : km.assignments) counts[a]++;
    CHECK(counts.size() == 3);
    for (const auto& [c, n] : counts) {
        (void)c;
        CHECK(n > 0);
    }
}

TEST_CASE("rank_clusters orders by median typicality then centroid distance") {
    // three clusters with medians 0.5, 0.9, 0.1 -> order (1, 0, 2)
    Matrix features(6, 1);
    std::vector<int> assignments = {0, 0, 1, 1, 2, 2};
    std::vector<PatchRef> patches = {patch("a", 0, 0.4), patch("a", 8, 0.6),
                                     patch("b", 0, 0.8), patch("b", 8, 1.0),
                                     patch("c", 0, 0.0), patch("c", 8, 0.2)};
    for (int i = 0; i < 6; ++i) features.at(i, 0) = double(i);
    Matrix centroids(3, 1);
    centroids.at(0, 0) = 0.5;
    centroids.at(1, 0) = 2.5;
    centroids.at(2, 0) = 4.5;

    const auto ranked = rank_clusters(assignments, features, centroids, patches);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].cluster_id == 1);
    CHECK(ranked[0].median_typicality == doctest::Approx(0.9));
    CHECK(ranked[1].cluster_id == 0);
    CHECK(ranked[1].median_typicality == doctest::Approx(0.5));
    CHECK(ranked[2].cluster_id == 2);
    CHECK(ranked[2].median_typicality == doctest::Approx(0.1));

    // permutation property: all patches appear exactly once
    std::map<std::pair<std::string, int>, int> seen;
    int total = 0;
    for (const auto& c : ranked)
        for (const auto& p : c.members) {
            seen[{p.image_id, p.box.x0}]++;
            ++total;
        }
    CHECK(total == 6);
    for (const auto& [key, n] : seen) {
        (void)key;
        CHECK(n == 1);
    }
}

TEST_CASE("rank_clusters member order is ascending centroid distance") {
    Matrix features(3, 1);
    features.at(0, 0) = 5.0;
    features.at(1, 0) = 1.0;
    features.at(2, 0) = 3.0;
    std::vector<int> assignments = {0, 0, 0};
    Matrix centroids(1, 1);
    centroids.at(0, 0) = 3.0;
    std::vector<PatchRef> patches = {patch("a", 0, 0.1), patch("b", 0, 0.2),
                                     patch("c", 0, 0.3)};
    const auto ranked = rank_clusters(assignments, features, centroids, patches);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].members[0].image_id == "c");  // distance 0
    CHECK(ranked[0].members[1].image_id == "a");  // ties keep input order
    CHECK(ranked[0].members[2].image_id == "b");
}

TEST_CASE("median uses the mean-of-middle convention") {
    CHECK(median({0.1, 0.3, 0.7, 0.9}) == doctest::Approx(0.5));
    CHECK(median({0.1, 0.5, 0.9}) == doctest::Approx(0.5));
    CHECK(median({0.1, 0.3, 0.7, 0.9}) ==
          doctest::Approx(oracles::median_oracle({0.1, 0.3, 0.7, 0.9})));
    CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("cluster ranking is invariant to median-preserving monotone transforms") {
    Rng rng(17);
    Matrix features(24, 3);
    for (auto& v : features.v) v = rng.gaussian();
    std::vector<PatchRef> patches;
    for (int i = 0; i < 24; ++i)
        patches.push_back(patch("img" + std::to_string(i), 0, rng.uniform()));
    const KmeansResult km = kmeans(features, 4, 3);
    const auto base = rank_clusters(km.assignments, features, km.centroids, patches);

    std::vector<PatchRef> scaled = patches;
    for (auto& p : scaled) p.score = 2.0 * p.score + 1.0;
    const auto transformed = rank_clusters(km.assignments, features, km.centroids, scaled);
    REQUIRE(base.size() == transformed.size());
    for (size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].cluster_id == transformed[i].cluster_id);
        CHECK(transformed[i].median_typicality ==
              doctest::Approx(2.0 * base[i].median_typicality + 1.0));
        REQUIRE(base[i].member_rows.size() == transformed[i].member_rows.size());
        for (size_t j = 0; j < base[i].member_rows.size(); ++j)
            CHECK(base[i].member_rows[j] == transformed[i].member_rows[j]);
    }
}

TEST_CASE("umap curve fit reproduces the reference parameters") {
    const auto [a, b] = umap_fit_ab(0.1, 1.0);
    // Known values for min_dist=0.1, spread=1.0.
    CHECK(a == doctest::Approx(1.577).epsilon(0.05));
    CHECK(b == doctest::Approx(0.895).epsilon(0.05));
}

TEST_CASE("reduce_dim passthrough flag is the identity") {
    Rng rng(23);
    Matrix m(10, 8);
    for (auto& v : m.v) v = rng.gaussian();
    UmapOptions opts;
    opts.target_dim = 8;
    opts.disabled = true;
    const Matrix out = reduce_dim(m, opts);
    CHECK(out.v == m.v);

    opts.target_dim = 4;
    CHECK_THROWS_AS(reduce_dim(m, opts), std::invalid_argument);
}

TEST_CASE("reduce_dim determinism and degenerate input") {
    Rng rng(29);
    Matrix m(40, 16);
    for (auto& v : m.v) v = rng.gaussian();
    UmapOptions opts;
    opts.target_dim = 2;
    opts.seed = 9;
    opts.n_epochs = 60;
    const Matrix a = reduce_dim(m, opts);
    const Matrix b = reduce_dim(m, opts);
    CHECK(a.v == b.v);

    Matrix flat(12, 16, 1.25);  // all rows identical
    const Matrix out = reduce_dim(flat, opts);
    CHECK(out.rows == 12);
    CHECK(out.cols == 2);
    for (int r = 1; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) CHECK(out.at(r, c) == out.at(0, c));
}

TEST_CASE("reduce_dim keeps well-separated blobs pure") {
    std::vector<int> truth;
    const Matrix m = blobs({{0.0, 0.0}, {80.0, 0.0}, {0.0, 80.0}}, 30, 0.8, 16, 31, &truth);
    UmapOptions opts;
    opts.target_dim = 2;
    opts.seed = 13;
    const Matrix emb = reduce_dim(m, opts);

    // 1-NN label purity in the reduced space.
    int correct = 0;
    for (int i = 0; i < emb.rows; ++i) {
        double best = 1e300;
        int best_j = -1;
        for (int j = 0; j < emb.rows; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (int d = 0; d < emb.cols; ++d) {
                const double diff = emb.at(i, d) - emb.at(j, d);
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                best_j = j;
            }
        }
        if (truth[size_t(best_j)] == truth[size_t(i)]) ++correct;
    }
    CHECK(double(correct) / emb.rows >= 0.95);
}

TEST_CASE("l2_normalize_rows") {
    Matrix m(2, 3);
    m.at(0, 0) = 3.0;
    m.at(0, 1) = 4.0;
    const Matrix n = l2_normalize_rows(m);
    CHECK(n.at(0, 0) == doctest::Approx(0.6));
    CHECK(n.at(0, 1) == doctest::Approx(0.8));
    // zero rows stay zero
    CHECK(n.at(1, 0) == 0.0);
}
