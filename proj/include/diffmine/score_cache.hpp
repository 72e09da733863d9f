#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "diffmine/core_model.hpp"
#include "diffmine/typicality.hpp"

namespace diffmine {

// On-disk typicality store: one binary entry per (image, label) plus a
// manifest. Entries hold the map as little-endian 32-bit floats with declared
// shape; writes go through a temp file and rename, so they are atomic.
struct ScoreEntry {
    double scalar = 0.0;
    TypicalityMap map;
};

class ScoreCache {
public:
    explicit ScoreCache(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }

    // Entry file name for a key; stable and filesystem-safe for any id.
    std::filesystem::path entry_path(const std::string& image_id, const std::string& label) const;

    // nullopt on missing entry, corrupt file, or config_hash mismatch.
    std::optional<ScoreEntry> load(const std::string& image_id, const std::string& label,
                                   const std::string& config_hash) const;
    void store(const ScoreEntry& entry) const;

    // Rewrites the manifest (id, label, config_hash, scalar, file) in the
    // given order.
    void write_manifest(const std::vector<ScoreEntry>& entries) const;
    std::filesystem::path manifest_path() const { return dir_ / "manifest.tsv"; }

private:
    std::filesystem::path dir_;
};

struct BatchStats {
    int total = 0;
    int computed = 0;
    int cache_hits = 0;

    bool all_hits() const { return total > 0 && cache_hits == total; }
};

// One typicality result per record under its own label conditioning,
// persisted through the cache. Cached entries with a matching config hash are
// reused; mismatched or corrupt entries are recomputed.
BatchStats batch_typicality(const std::vector<ImageRecord>& dataset, const LabelSet& labels,
                            DenoiserBackend& backend, const NoiseSchedule& sched,
                            const TypicalityConfig& cfg, const TextEmbedder& embedder,
                            ScoreCache& cache, int n_threads = 1);

}  // namespace diffmine
