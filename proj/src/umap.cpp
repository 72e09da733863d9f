#include "diffmine/umap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "diffmine/rng.hpp"

namespace diffmine {

namespace {

double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

struct Edge {
    int head;
    int tail;
    double weight;
};

}  // namespace

std::pair<double, double> umap_fit_ab(double min_dist, double spread) {
    // Sample the target curve on [0, 3*spread] and Gauss-Newton the two
    // parameters with light damping.
    const int n = 300;
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
        const double x = 3.0 * spread * (i + 1) / n;
        xs[size_t(i)] = x;
        ys[size_t(i)] = x <= min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
    }
    double a = 1.0, b = 1.0;
    for (int iter = 0; iter < 200; ++iter) {
        double jtj[2][2] = {{0, 0}, {0, 0}};
        double jtr[2] = {0, 0};
        for (int i = 0; i < n; ++i) {
            const double x = xs[size_t(i)];
            const double x2b = std::pow(x, 2.0 * b);
            const double denom = 1.0 + a * x2b;
            const double f = 1.0 / denom;
            const double r = f - ys[size_t(i)];
            const double dfda = -x2b / (denom * denom);
            const double dfdb = -2.0 * a * x2b * std::log(x) / (denom * denom);
            jtj[0][0] += dfda * dfda;
            jtj[0][1] += dfda * dfdb;
            jtj[1][1] += dfdb * dfdb;
            jtr[0] += dfda * r;
            jtr[1] += dfdb * r;
        }
        jtj[1][0] = jtj[0][1];
        const double damp = 1e-9;
        const double det = (jtj[0][0] + damp) * (jtj[1][1] + damp) - jtj[0][1] * jtj[1][0];
        if (std::abs(det) < 1e-300) break;
        const double da = -((jtj[1][1] + damp) * jtr[0] - jtj[0][1] * jtr[1]) / det;
        const double db = -(-jtj[1][0] * jtr[0] + (jtj[0][0] + damp) * jtr[1]) / det;
        a += da;
        b += db;
        a = std::max(a, 1e-6);
        b = std::min(std::max(b, 1e-6), 10.0);
        if (std::abs(da) + std::abs(db) < 1e-12) break;
    }
    return {a, b};
}

Matrix reduce_dim(const Matrix& features, const UmapOptions& opts) {
    if (opts.target_dim < 1) throw std::invalid_argument("reduce_dim: target_dim must be >= 1");
    if (opts.disabled) {
        if (features.cols != opts.target_dim)
            throw std::invalid_argument(
                "reduce_dim: passthrough requires input dim == target_dim");
        return features;
    }
    const int n = features.rows;
    const int d = features.cols;
    if (n == 0) return Matrix(0, opts.target_dim);
    if (n == 1) return Matrix(1, opts.target_dim, 0.0);

    // Degenerate input: identical rows carry no neighborhood structure.
    bool all_equal = true;
    for (int i = 1; i < n && all_equal; ++i)
        if (sq_dist(features.row(i), features.row(0), d) > 0.0) all_equal = false;
    if (all_equal) return Matrix(n, opts.target_dim, 0.0);

    const int k = std::min(opts.n_neighbors, n - 1);

    // Exact kNN.
    std::vector<std::vector<int>> knn_idx(static_cast<size_t>(n));
    std::vector<std::vector<double>> knn_dist(static_cast<size_t>(n));
    {
        std::vector<std::pair<double, int>> cand(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j)
                cand[size_t(j)] = {j == i ? std::numeric_limits<double>::max()
                                          : sq_dist(features.row(i), features.row(j), d),
                                   j};
            std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
            knn_idx[size_t(i)].resize(size_t(k));
            knn_dist[size_t(i)].resize(size_t(k));
            for (int j = 0; j < k; ++j) {
                knn_idx[size_t(i)][size_t(j)] = cand[size_t(j)].second;
                knn_dist[size_t(i)][size_t(j)] = std::sqrt(cand[size_t(j)].first);
            }
        }
    }

    // Per-point smooth kNN calibration: rho is the nearest nonzero distance,
    // sigma solves sum_j exp(-(d_ij - rho)/sigma) = log2(k).
    const double target = std::log2(double(k));
    std::vector<double> rho(size_t(n), 0.0), sigma(size_t(n), 1.0);
    for (int i = 0; i < n; ++i) {
        double r = 0.0;
        for (double dist : knn_dist[size_t(i)])
            if (dist > 0.0) {
                r = dist;
                break;
            }
        rho[size_t(i)] = r;
        double lo = 1e-12, hi = 1e4;
        for (int it = 0; it < 64; ++it) {
            const double mid = 0.5 * (lo + hi);
            double s = 0.0;
            for (double dist : knn_dist[size_t(i)])
                s += std::exp(-std::max(0.0, dist - r) / mid);
            if (s > target)
                hi = mid;
            else
                lo = mid;
        }
        sigma[size_t(i)] = 0.5 * (lo + hi);
    }

    // Directed memberships, symmetrized with the probabilistic t-conorm.
    std::vector<std::vector<std::pair<int, double>>> directed(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
            const double w = std::exp(
                -std::max(0.0, knn_dist[size_t(i)][size_t(j)] - rho[size_t(i)]) / sigma[size_t(i)]);
            directed[size_t(i)].push_back({knn_idx[size_t(i)][size_t(j)], w});
        }
    auto directed_weight = [&](int i, int j) {
        for (const auto& [idx, w] : directed[size_t(i)])
            if (idx == j) return w;
        return 0.0;
    };
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (const auto& [j, wij] : directed[size_t(i)]) {
            if (j < i && directed_weight(j, i) > 0.0) continue;  // handled from the other side
            const double wji = directed_weight(j, i);
            const double w = wij + wji - wij * wji;
            if (w > 0.0) edges.push_back({i, j, w});
        }

    // Random init in [-10, 10].
    Rng rng(mix64(opts.seed, 0x756d6170ULL));
    Matrix emb(n, opts.target_dim);
    for (auto& v : emb.v) v = rng.uniform(-10.0, 10.0);

    const auto [a, b] = umap_fit_ab(opts.min_dist, opts.spread);

    double max_w = 0.0;
    for (const auto& e : edges) max_w = std::max(max_w, e.weight);
    std::vector<double> epochs_per_sample(edges.size());
    for (size_t e = 0; e < edges.size(); ++e) epochs_per_sample[e] = max_w / edges[e].weight;
    std::vector<double> next_sample(epochs_per_sample);
    std::vector<double> epochs_per_negative(edges.size());
    for (size_t e = 0; e < edges.size(); ++e)
        epochs_per_negative[e] = epochs_per_sample[e] / opts.negative_sample_rate;
    std::vector<double> next_negative(epochs_per_negative);

    const int dim = opts.target_dim;
    auto clip = [](double x) { return std::min(4.0, std::max(-4.0, x)); };

    for (int epoch = 1; epoch <= opts.n_epochs; ++epoch) {
        const double alpha = opts.learning_rate * (1.0 - double(epoch - 1) / opts.n_epochs);
        for (size_t e = 0; e < edges.size(); ++e) {
            if (next_sample[e] > double(epoch)) continue;
            const int i = edges[e].head;
            const int j = edges[e].tail;
            double* pi = emb.row(i);
            double* pj = emb.row(j);
            const double dist2 = sq_dist(pi, pj, dim);
            if (dist2 > 0.0) {
                const double pd = std::pow(dist2, b);
                double coeff = (-2.0 * a * b * pd / dist2) / (a * pd + 1.0);
                for (int c = 0; c < dim; ++c) {
                    const double g = clip(coeff * (pi[c] - pj[c]));
                    pi[c] += alpha * g;
                    pj[c] -= alpha * g;
                }
            }
            next_sample[e] += epochs_per_sample[e];

            int n_neg = int((double(epoch) - next_negative[e]) / epochs_per_negative[e]) + 1;
            n_neg = std::max(0, n_neg);
            for (int s = 0; s < n_neg; ++s) {
                const int t = rng.uniform_int(n);
                if (t == i) continue;
                double* pt = emb.row(t);
                const double nd2 = sq_dist(pi, pt, dim);
                double coeff;
                if (nd2 > 0.0) {
                    coeff = 2.0 * b / ((0.001 + nd2) * (a * std::pow(nd2, b) + 1.0));
                } else {
                    continue;
                }
                for (int c = 0; c < dim; ++c) pi[c] += alpha * clip(coeff * (pi[c] - pt[c]));
            }
            next_negative[e] += n_neg * epochs_per_negative[e];
        }
    }
    return emb;
}

}  // namespace diffmine
