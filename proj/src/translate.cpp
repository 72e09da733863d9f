#include "diffmine/translate.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include "diffmine/concurrency.hpp"
#include "diffmine/image_io.hpp"
#include "diffmine/rng.hpp"

namespace diffmine {

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? "_" : out;
}

}  // namespace

double StripeTintTranslator::label_tint(const std::string& label) {
    // Deterministic per-label value in [0.2, 1.0].
    Rng rng(mix64(0x74696e74ULL, hash_bytes64(label.data(), label.size())));
    return 0.2 + 0.8 * rng.uniform();
}

Tensor StripeTintTranslator::translate(const Tensor& pixels, const std::string& /*source_label*/,
                                       const std::string& target_label) {
    Tensor out = pixels;
    const double tint = label_tint(target_label);
    const int y1 = std::min(out.h, y0_ + h_);
    for (int y = std::max(0, y0_); y < y1; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int c = 0; c < out.c; ++c) {
                const double v = out.at(y, x, c);
                out.at(y, x, c) = (1.0 - strength_) * v + strength_ * tint;
            }
    return out;
}

ParallelStore::ParallelStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ParallelStore::entry_path(const std::string& image_id,
                                                const std::string& source,
                                                const std::string& target) const {
    return dir_ / sanitize(image_id) / (sanitize(source) + "__" + sanitize(target) + ".png");
}

bool ParallelStore::has(const std::string& image_id, const std::string& source,
                        const std::string& target) const {
    return std::filesystem::exists(entry_path(image_id, source, target));
}

Tensor ParallelStore::load(const std::string& image_id, const std::string& source,
                           const std::string& target) const {
    return load_image(entry_path(image_id, source, target));
}

void ParallelStore::put(const std::string& image_id, const std::string& source,
                        const std::string& target, const Tensor& pixels) const {
    save_image_png(entry_path(image_id, source, target), pixels);
}

void ParallelStore::write_manifest(const std::vector<std::array<std::string, 4>>& rows) const {
    std::ofstream out(manifest_path(), std::ios::trunc);
    if (!out) throw std::runtime_error("ParallelStore: cannot write manifest");
    for (const auto& r : rows) out << r[0] << '\t' << r[1] << '\t' << r[2] << '\t' << r[3] << '\n';
}

ParallelBuildReport build_parallel_dataset(const std::vector<ImageRecord>& images,
                                           const LabelSet& labels, TranslationBackend& backend,
                                           const ParallelStore& store, int n_threads) {
    labels.validate();
    for (const auto& rec : images)
        if (!labels.has(rec.label))
            throw std::invalid_argument("build_parallel_dataset: record " + rec.id +
                                        " has label outside the label set: " + rec.label);

    struct Job {
        const ImageRecord* rec;
        const std::string* target;
    };
    std::vector<Job> jobs;
    for (const auto& rec : images)
        for (const auto& target : labels.labels) jobs.push_back({&rec, &target});

    ParallelBuildReport report;
    report.expected = static_cast<int>(jobs.size());
    std::vector<int> status(jobs.size(), 0);  // 0 written, 1 reused, 2 failed
    std::vector<std::string> errors(jobs.size());

    parallel_for(static_cast<int>(jobs.size()), backend.concurrent() ? n_threads : 1, [&](int j) {
        const Job& job = jobs[size_t(j)];
        if (store.has(job.rec->id, job.rec->label, *job.target)) {
            status[size_t(j)] = 1;
            return;
        }
        try {
            const Tensor translated =
                backend.translate(job.rec->pixels, job.rec->label, *job.target);
            if (!translated.same_shape(job.rec->pixels))
                throw std::runtime_error("translated shape differs from input");
            store.put(job.rec->id, job.rec->label, *job.target, translated);
        } catch (const std::exception& e) {
            status[size_t(j)] = 2;
            errors[size_t(j)] = e.what();
        }
    });

    std::vector<std::array<std::string, 4>> manifest_rows;
    for (size_t j = 0; j < jobs.size(); ++j) {
        const Job& job = jobs[j];
        const char* st = status[j] == 2 ? "failed" : (status[j] == 1 ? "reused" : "written");
        manifest_rows.push_back({job.rec->id, job.rec->label, *job.target, st});
        switch (status[j]) {
            case 0: report.written++; break;
            case 1: report.reused++; break;
            default:
                report.failed++;
                report.failures.push_back(job.rec->id + " -> " + *job.target + ": " + errors[j]);
        }
    }
    store.write_manifest(manifest_rows);
    return report;
}

double co_typicality(const std::map<std::string, double>& per_label, const LabelSet& labels) {
    labels.validate();
    if (per_label.empty()) throw std::invalid_argument("co_typicality: empty value map");
    std::vector<double> values;
    values.reserve(labels.labels.size());
    for (const auto& l : labels.labels) {
        auto it = per_label.find(l);
        if (it == per_label.end())
            throw std::invalid_argument("co_typicality: missing label \"" + l + "\"");
        values.push_back(it->second);
    }
    return median(std::move(values));
}

double box_mean(const Grid& g, const Box& b) {
    if (!b.inside(g.w, g.h)) throw std::invalid_argument("box_mean: box outside grid");
    double s = 0.0;
    for (int y = b.y0; y < b.y1(); ++y)
        for (int x = b.x0; x < b.x1(); ++x) s += g.at(y, x);
    return s / (double(b.w) * b.h);
}

SequenceMiningResult mine_sequences(const ParallelStore& store,
                                    const std::vector<ImageRecord>& sources,
                                    const std::map<std::string, std::vector<PatchRef>>& boxes,
                                    const LabelSet& labels, DenoiserBackend& backend,
                                    const NoiseSchedule& sched, const TypicalityConfig& cfg,
                                    const TextEmbedder& text_embedder,
                                    FeatureEmbedder& feature_embedder, const UmapOptions& reducer,
                                    int top_n, int k, uint64_t seed, int n_threads) {
    labels.validate();
    cfg.validate();
    if (top_n < 1) throw std::invalid_argument("mine_sequences: top_n must be >= 1");
    const int n_labels = static_cast<int>(labels.labels.size());
    const Conditioning null_cond = make_conditioning(labels, std::nullopt, text_embedder);

    SequenceMiningResult res;

    // Pass 1: per (source, target) typicality maps of the translated
    // variants, then box means.
    struct Variant {
        const ImageRecord* rec;
        int label_idx;
    };
    std::vector<Variant> variants;
    std::vector<char> source_complete(sources.size(), 1);
    for (size_t i = 0; i < sources.size(); ++i) {
        const auto& rec = sources[i];
        const auto it = boxes.find(rec.id);
        if (it == boxes.end() || it->second.empty()) continue;
        bool complete = true;
        for (const auto& target : labels.labels)
            if (!store.has(rec.id, rec.label, target)) complete = false;
        if (!complete) {
            source_complete[i] = 0;
            res.excluded_incomplete++;
            continue;
        }
        for (int li = 0; li < n_labels; ++li) variants.push_back({&rec, li});
    }

    // variant maps keyed by (source index order); computed in parallel.
    std::vector<Grid> variant_maps(variants.size());
    std::vector<Tensor> variant_pixels(variants.size());
    parallel_for(static_cast<int>(variants.size()), backend.concurrent_predict() ? n_threads : 1,
                 [&](int vi) {
                     const Variant& v = variants[size_t(vi)];
                     const std::string& target = labels.labels[size_t(v.label_idx)];
                     Tensor pixels = store.load(v.rec->id, v.rec->label, target);
                     ImageRecord variant_rec;
                     variant_rec.id = v.rec->id + "__to__" + target;
                     variant_rec.pixels = pixels;
                     variant_rec.label = target;
                     const Conditioning cond = make_conditioning(labels, target, text_embedder);
                     TypicalityResult tr = estimate_typicality(variant_rec, cond, null_cond,
                                                               backend, sched, cfg, 1);
                     variant_maps[size_t(vi)] = std::move(tr.map.values);
                     variant_pixels[size_t(vi)] = std::move(pixels);
                 });

    std::map<std::pair<std::string, int>, int> variant_index;  // (image_id, label_idx) -> vi
    for (size_t vi = 0; vi < variants.size(); ++vi)
        variant_index[{variants[vi].rec->id, variants[vi].label_idx}] = static_cast<int>(vi);

    // Pass 2: sequences from inherited boxes.
    for (size_t i = 0; i < sources.size(); ++i) {
        if (!source_complete[i]) continue;
        const auto& rec = sources[i];
        const auto it = boxes.find(rec.id);
        if (it == boxes.end()) continue;
        for (const PatchRef& p : it->second) {
            TranslationSequence seq;
            seq.source = p;
            seq.source_label = rec.label;
            for (int li = 0; li < n_labels; ++li) {
                const Grid& m = variant_maps[size_t(variant_index[{rec.id, li}])];
                seq.per_label_typicality[labels.labels[size_t(li)]] = box_mean(m, p.box);
            }
            seq.co_typicality = co_typicality(seq.per_label_typicality, labels);
            res.sequences.push_back(std::move(seq));
        }
    }

    // Canonical ranking: independent of input order.
    std::sort(res.sequences.begin(), res.sequences.end(),
              [](const TranslationSequence& a, const TranslationSequence& b) {
                  if (a.co_typicality != b.co_typicality) return a.co_typicality > b.co_typicality;
                  if (a.source.image_id != b.source.image_id)
                      return a.source.image_id < b.source.image_id;
                  if (a.source.box.y0 != b.source.box.y0) return a.source.box.y0 < b.source.box.y0;
                  return a.source.box.x0 < b.source.box.x0;
              });
    if (static_cast<int>(res.sequences.size()) > top_n) res.sequences.resize(size_t(top_n));
    if (res.sequences.empty()) return res;

    // Pass 3: per-variant features of the kept sequences, reduced together,
    // then concatenated in label order.
    const int n_seq = static_cast<int>(res.sequences.size());
    Matrix raw(n_seq * n_labels, feature_embedder.dim());
    parallel_for(n_seq * n_labels, n_threads, [&](int row) {
        const int si = row / n_labels;
        const int li = row % n_labels;
        const TranslationSequence& seq = res.sequences[size_t(si)];
        const int vi = variant_index.at({seq.source.image_id, li});
        const std::vector<double> f =
            feature_embedder.embed(variant_pixels[size_t(vi)], seq.source.box, 0.161);
        std::copy(f.begin(), f.end(), raw.row(row));
    });
    const Matrix reduced = reduce_dim(raw, reducer);

    res.feature_dim = reducer.disabled ? raw.cols * n_labels : reducer.target_dim * n_labels;
    Matrix seq_features(n_seq, res.feature_dim);
    for (int si = 0; si < n_seq; ++si) {
        for (int li = 0; li < n_labels; ++li) {
            const double* src = reduced.row(si * n_labels + li);
            std::copy(src, src + reduced.cols,
                      seq_features.row(si) + size_t(li) * reduced.cols);
        }
        res.sequences[size_t(si)].features.assign(seq_features.row(si),
                                                  seq_features.row(si) + res.feature_dim);
    }

    // Cluster and rank by median co-typicality.
    const int k_eff = std::min(k, n_seq);
    KmeansResult km = kmeans(seq_features, k_eff, mix64(seed, 0x736571ULL));
    std::vector<PatchRef> pseudo(static_cast<size_t>(n_seq));
    for (int si = 0; si < n_seq; ++si) {
        pseudo[size_t(si)] = res.sequences[size_t(si)].source;
        pseudo[size_t(si)].score = res.sequences[size_t(si)].co_typicality;
    }
    const std::vector<ClusterSummary> ranked =
        rank_clusters(km.assignments, seq_features, km.centroids, pseudo);
    for (const auto& cs : ranked) {
        SequenceCluster sc;
        sc.cluster_id = cs.cluster_id;
        sc.median_co_typicality = cs.median_typicality;
        sc.members = cs.member_rows;
        res.clusters.push_back(std::move(sc));
    }
    return res;
}

}  // namespace diffmine
