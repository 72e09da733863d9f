#include "diffmine/score_cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "diffmine/concurrency.hpp"
#include "diffmine/rng.hpp"
#include "diffmine/sha256.hpp"

static_assert(std::endian::native == std::endian::little,
              "score cache assumes a little-endian host");

namespace diffmine {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'T', 'M'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<char*>(&v), 8); }
void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool read_u32(std::istream& in, uint32_t& v) {
    in.read(reinterpret_cast<char*>(&v), 4);
    return bool(in);
}
bool read_f64(std::istream& in, double& v) {
    in.read(reinterpret_cast<char*>(&v), 8);
    return bool(in);
}
bool read_str(std::istream& in, std::string& s, uint32_t max_len = 1 << 20) {
    uint32_t n;
    if (!read_u32(in, n) || n > max_len) return false;
    s.resize(n);
    in.read(s.data(), n);
    return bool(in);
}

}  // namespace

ScoreCache::ScoreCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ScoreCache::entry_path(const std::string& image_id,
                                             const std::string& label) const {
    const std::string key = sha256_hex(image_id + "\x1f" + label).substr(0, 24);
    return dir_ / (key + ".tmap");
}

std::optional<ScoreEntry> ScoreCache::load(const std::string& image_id, const std::string& label,
                                           const std::string& config_hash) const {
    const auto path = entry_path(image_id, label);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) return std::nullopt;
    uint32_t version, h, w, n_samples;
    double scalar;
    std::string id, lbl, hash;
    if (!read_u32(in, version) || version != kVersion) return std::nullopt;
    if (!read_u32(in, h) || !read_u32(in, w) || !read_u32(in, n_samples)) return std::nullopt;
    if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) return std::nullopt;
    if (!read_f64(in, scalar)) return std::nullopt;
    if (!read_str(in, id) || !read_str(in, lbl) || !read_str(in, hash)) return std::nullopt;
    if (id != image_id || lbl != label || hash != config_hash) return std::nullopt;

    ScoreEntry e;
    e.scalar = scalar;
    e.map.image_id = id;
    e.map.label = lbl;
    e.map.config_hash = hash;
    e.map.n_samples = static_cast<int>(n_samples);
    e.map.values = Grid(static_cast<int>(h), static_cast<int>(w));
    std::vector<float> buf(e.map.values.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) return std::nullopt;
    // Must be the last content in the file.
    if (in.peek() != std::char_traits<char>::eof()) return std::nullopt;
    for (size_t i = 0; i < buf.size(); ++i) e.map.values.v[i] = double(buf[i]);
    return e;
}

void ScoreCache::store(const ScoreEntry& entry) const {
    const auto path = entry_path(entry.map.image_id, entry.map.label);
    const auto tmp = path.string() + ".tmp" + std::to_string(hash_bytes64(path.c_str(),
                                                                          path.string().size()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("ScoreCache: cannot write " + tmp);
        out.write(kMagic, 4);
        write_u32(out, kVersion);
        write_u32(out, static_cast<uint32_t>(entry.map.values.h));
        write_u32(out, static_cast<uint32_t>(entry.map.values.w));
        write_u32(out, static_cast<uint32_t>(entry.map.n_samples));
        write_f64(out, entry.scalar);
        write_str(out, entry.map.image_id);
        write_str(out, entry.map.label);
        write_str(out, entry.map.config_hash);
        std::vector<float> buf(entry.map.values.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = float(entry.map.values.v[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!out) throw std::runtime_error("ScoreCache: short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void ScoreCache::write_manifest(const std::vector<ScoreEntry>& entries) const {
    const auto tmp = manifest_path().string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out.precision(17);
        for (const auto& e : entries) {
            out << e.map.image_id << '\t' << e.map.label << '\t' << e.map.config_hash << '\t'
                << e.scalar << '\t' << entry_path(e.map.image_id, e.map.label).filename().string()
                << '\n';
        }
        if (!out) throw std::runtime_error("ScoreCache: cannot write manifest");
    }
    std::filesystem::rename(tmp, manifest_path());
}

BatchStats batch_typicality(const std::vector<ImageRecord>& dataset, const LabelSet& labels,
                            DenoiserBackend& backend, const NoiseSchedule& sched,
                            const TypicalityConfig& cfg, const TextEmbedder& embedder,
                            ScoreCache& cache, int n_threads) {
    cfg.validate();
    labels.validate();
    for (const auto& r : dataset)
        if (!labels.has(r.label))
            throw std::invalid_argument("batch_typicality: record " + r.id +
                                        " has label outside the label set: " + r.label);

    const std::string config_hash = cfg.config_hash(backend.id(), sched);
    const Conditioning null_cond = make_conditioning(labels, std::nullopt, embedder);

    BatchStats stats;
    stats.total = static_cast<int>(dataset.size());
    std::vector<ScoreEntry> entries(dataset.size());
    std::vector<char> hit(dataset.size(), 0);

    // Images are independent; each slot is written once.
    auto run_one = [&](int i) {
        const ImageRecord& rec = dataset[size_t(i)];
        if (auto cached = cache.load(rec.id, rec.label, config_hash)) {
            entries[size_t(i)] = std::move(*cached);
            hit[size_t(i)] = 1;
            return;
        }
        const Conditioning cond = make_conditioning(labels, rec.label, embedder);
        TypicalityResult r = estimate_typicality(rec, cond, null_cond, backend, sched, cfg, 1);
        ScoreEntry e;
        e.scalar = r.scalar;
        e.map = std::move(r.map);
        cache.store(e);
        entries[size_t(i)] = std::move(e);
    };
    parallel_for(static_cast<int>(dataset.size()),
                 backend.concurrent_predict() ? n_threads : 1, run_one);

    for (char h : hit) (h ? stats.cache_hits : stats.computed)++;
    cache.write_manifest(entries);
    return stats;
}

}  // namespace diffmine
