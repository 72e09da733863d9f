#include "diffmine/medical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace diffmine {

namespace {

// Reflect index into [0, n) (symmetric, edge pixel included once per fold).
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i = ((i % period) + period) % period;
    return i < n ? i : period - 1 - i;
}

}  // namespace

Grid gaussian_blur(const Grid& m, double sigma) {
    if (sigma <= 0.0) return m;
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(size_t(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (double(i) * i) / (sigma * sigma));
        kernel[size_t(i + radius)] = v;
        ksum += v;
    }
    for (auto& v : kernel) v /= ksum;

    Grid tmp(m.h, m.w), out(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += kernel[size_t(i + radius)] * m.at(y, reflect(x + i, m.w));
            tmp.at(y, x) = s;
        }
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += kernel[size_t(i + radius)] * tmp.at(reflect(y + i, m.h), x);
            out.at(y, x) = s;
        }
    return out;
}

Grid disease_heatmap(const ImageRecord& x, const std::string& disease, const LabelSet& labels,
                     DenoiserBackend& backend, const NoiseSchedule& sched,
                     const TypicalityConfig& cfg, const TextEmbedder& embedder, double blur_sigma,
                     int n_threads) {
    if (!labels.has(disease))
        throw std::invalid_argument("disease_heatmap: unknown disease label: \"" + disease + "\"");
    const Conditioning cond = make_conditioning(labels, disease, embedder);
    const Conditioning null_cond = make_conditioning(labels, std::nullopt, embedder);
    TypicalityResult r = estimate_typicality(x, cond, null_cond, backend, sched, cfg, n_threads);
    return gaussian_blur(r.map.values, blur_sigma);
}

double auc_pr(const Grid& heatmap, const RoiAnnotation& rois) {
    if (rois.boxes.empty()) throw std::invalid_argument("auc_pr: annotation has no boxes");
    for (const Box& b : rois.boxes)
        if (!b.inside(heatmap.w, heatmap.h))
            throw std::invalid_argument("auc_pr: ROI box outside heatmap for image " +
                                        rois.image_id);

    const size_t n = heatmap.size();
    std::vector<char> positive(n, 0);
    for (const Box& b : rois.boxes)
        for (int y = b.y0; y < b.y1(); ++y)
            for (int x = b.x0; x < b.x1(); ++x) positive[size_t(y) * heatmap.w + x] = 1;

    long long total_pos = std::accumulate(positive.begin(), positive.end(), 0LL);
    if (total_pos == 0 || total_pos == static_cast<long long>(n))
        throw std::invalid_argument("auc_pr: degenerate mask (all-positive or all-negative)");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return heatmap.v[a] > heatmap.v[b]; });

    // Walk distinct-score groups in descending order; each group is one
    // threshold.
    double ap = 0.0;
    double prev_recall = 0.0;
    long long tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && heatmap.v[order[j]] == heatmap.v[order[i]]) {
            if (positive[order[j]])
                ++tp;
            else
                ++fp;
            ++j;
        }
        const double recall = double(tp) / double(total_pos);
        const double precision = double(tp) / double(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

std::string LocalizationTable::format() const {
    std::ostringstream out;
    out << "disease";
    for (const auto& b : backend_names) out << '\t' << b;
    out << "\tn_images\tskipped\n";
    out.precision(6);
    for (const auto& row : per_disease) {
        out << row.disease;
        for (double v : row.mean_auc_pr) out << '\t' << v;
        out << '\t' << row.n_images << '\t' << row.skipped << '\n';
    }
    out << "overall";
    for (double v : overall) out << '\t' << v;
    out << "\t-\t-\n";
    return out.str();
}

LocalizationTable evaluate_localization(const std::vector<ImageRecord>& test_set,
                                        const std::vector<RoiAnnotation>& annotations,
                                        const LabelSet& labels,
                                        const std::vector<DenoiserBackend*>& backends,
                                        const std::vector<std::string>& backend_names,
                                        const NoiseSchedule& sched, const TypicalityConfig& cfg,
                                        const TextEmbedder& embedder, double blur_sigma,
                                        int n_threads) {
    if (backends.empty() || backends.size() != backend_names.size())
        throw std::invalid_argument("evaluate_localization: backends/names mismatch");
    if (annotations.empty())
        throw std::invalid_argument("evaluate_localization: no annotations");

    std::map<std::pair<std::string, std::string>, const RoiAnnotation*> by_key;
    std::vector<std::string> diseases;
    for (const auto& a : annotations) {
        by_key[{a.image_id, a.disease}] = &a;
        if (std::find(diseases.begin(), diseases.end(), a.disease) == diseases.end())
            diseases.push_back(a.disease);
    }
    std::sort(diseases.begin(), diseases.end());

    LocalizationTable table;
    table.backend_names = backend_names;
    table.overall.assign(backends.size(), 0.0);

    std::vector<double> overall_sum(backends.size(), 0.0);
    int overall_n = 0;

    for (const auto& disease : diseases) {
        LocalizationRow row;
        row.disease = disease;
        row.mean_auc_pr.assign(backends.size(), 0.0);
        std::vector<double> sums(backends.size(), 0.0);

        // Fixed-order reduction over (image, backend); heatmaps themselves
        // parallelize internally.
        for (const auto& rec : test_set) {
            auto it = by_key.find({rec.id, disease});
            if (it == by_key.end()) {
                ++row.skipped;
                continue;
            }
            for (size_t b = 0; b < backends.size(); ++b) {
                const Grid heat = disease_heatmap(rec, disease, labels, *backends[b], sched, cfg,
                                                  embedder, blur_sigma, n_threads);
                sums[b] += auc_pr(heat, *it->second);
            }
            ++row.n_images;
        }
        if (row.n_images > 0) {
            for (size_t b = 0; b < backends.size(); ++b) {
                row.mean_auc_pr[b] = sums[b] / row.n_images;
                overall_sum[b] += sums[b];
            }
            overall_n += row.n_images;
        }
        table.per_disease.push_back(std::move(row));
    }
    for (size_t b = 0; b < backends.size(); ++b)
        table.overall[b] = overall_n > 0 ? overall_sum[b] / overall_n : 0.0;
    return table;
}

std::vector<RoiAnnotation> load_roi_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_roi_table: cannot open " + path.string());
    std::map<std::pair<std::string, std::string>, RoiAnnotation> merged;
    std::vector<std::pair<std::string, std::string>> order;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string id, disease;
        Box b;
        if (!(ss >> id >> disease >> b.x0 >> b.y0 >> b.w >> b.h))
            throw std::runtime_error("load_roi_table: malformed line " + std::to_string(lineno) +
                                     " in " + path.string());
        auto key = std::make_pair(id, disease);
        auto it = merged.find(key);
        if (it == merged.end()) {
            merged[key] = RoiAnnotation{id, disease, {b}};
            order.push_back(key);
        } else {
            it->second.boxes.push_back(b);
        }
    }
    std::vector<RoiAnnotation> out;
    out.reserve(order.size());
    for (const auto& key : order) out.push_back(std::move(merged[key]));
    return out;
}

void save_roi_table(const std::filesystem::path& path, const std::vector<RoiAnnotation>& rois) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_roi_table: cannot write " + path.string());
    for (const auto& a : rois)
        for (const Box& b : a.boxes)
            out << a.image_id << '\t' << a.disease << '\t' << b.x0 << '\t' << b.y0 << '\t' << b.w
                << '\t' << b.h << '\n';
}

}  // namespace diffmine
