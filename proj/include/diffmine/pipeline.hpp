#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffmine/conv_denoiser.hpp"
#include "diffmine/core_model.hpp"
#include "diffmine/finetune.hpp"
#include "diffmine/patch_miner.hpp"
#include "diffmine/toy.hpp"
#include "diffmine/typicality.hpp"
#include "diffmine/umap.hpp"

namespace diffmine {

// Everything a run needs, serialized into the run manifest; a manifest plus
// the input files fully determines a rerun.
struct PipelineConfig {
    // dataset
    std::string templates_preset;  // cars|faces|geo|places|medical or empty
    LabelSet labels;               // templates (labels list filled at ingest)
    std::string resize_policy = "none";  // none|fixed_height|fixed_square
    int resize_to = 256;
    std::string binning = "none";  // none|year_decade
    double eval_fraction = 0.0;
    int mine_subset_per_label = 0;  // 0 = mine everything
    uint64_t subset_seed = 17;

    // toy generation (ingest --toy)
    ToyDatasetSpec toy;
    uint64_t toy_seed = 11;

    // model + training
    ConvDenoiser::Config model{1, 16, 16, 1};
    TrainConfig train;
    std::string schedule = "cosine";
    std::string schedule_form = "standard";  // standard|paper_literal
    uint64_t embed_seed = 7;

    // estimation + mining + clustering
    TypicalityConfig typicality;
    MinerConfig miner;
    int cluster_k = 32;
    bool normalize_features = true;
    double feature_t = 0.161;

    // co-typicality
    int cotypical_top_n = 10000;
    int cotypical_k = 32;
    UmapOptions umap;

    // medical
    double blur_sigma_cells = 2.0;  // in latent cells; pixels = cells * scale

    // rendering
    int sheet_rows = 6;
    int sheet_cols = 6;
    int sheet_cell = 64;
    int export_crops = 64;

    std::string to_json_string() const;
    static PipelineConfig from_json_string(const std::string& text);
    static PipelineConfig from_json_file(const std::filesystem::path& path);

    NoiseSchedule make_schedule() const;
};

// Prompt template presets shipped with the tool.
LabelSet preset_templates(const std::string& name);

struct StageResult {
    std::string stage;
    bool cached = false;
    int cache_hits = 0;
    int cache_total = 0;
    std::string message;
};

struct IngestOptions {
    std::filesystem::path image_dir;   // directory mode
    std::filesystem::path label_table; // tsv: filename <tab> label
    bool toy = false;                  // generate the configured toy dataset
};

// One run directory: manifest.json + per-stage outputs. Stages short-circuit
// when their signature (config slice + upstream output hashes) and recorded
// outputs are unchanged.
class PipelineRun {
public:
    PipelineRun(std::filesystem::path run_dir, const PipelineConfig& cfg);
    // Re-opens an existing run, reading the config from the manifest.
    static PipelineRun open(const std::filesystem::path& run_dir);

    const PipelineConfig& config() const { return cfg_; }
    const std::filesystem::path& dir() const { return dir_; }

    StageResult ingest(const IngestOptions& opts);
    StageResult finetune_stage();
    StageResult score(const std::string& backend_role = "finetuned");
    StageResult mine(const std::string& backend_role = "finetuned");
    StageResult cluster(const std::string& backend_role = "finetuned");
    StageResult render(const std::string& backend_role = "finetuned");
    StageResult translate(const std::string& translator = "identity");
    StageResult cotypical(const std::string& backend_role = "finetuned");
    StageResult eval_medical(const std::filesystem::path& roi_table = {});
    std::vector<StageResult> compare();

    // Loaded views over stage outputs.
    std::vector<ImageRecord> load_dataset(const std::string& split_filter = "") const;
    LabelSet dataset_labels() const;
    std::vector<PatchRef> load_patches(const std::string& backend_role, const std::string& label,
                                       bool per_image) const;
    std::filesystem::path score_cache_dir(const std::string& backend_role) const;
    std::filesystem::path sheets_dir(const std::string& backend_role) const;
    std::filesystem::path checkpoint_path(const std::string& backend_role) const;

    // Backend for a role: "finetuned" -> final checkpoint, "pretrained" ->
    // the untrained initial weights saved by the finetune stage.
    ConvDenoiser make_backend(const std::string& backend_role) const;

private:
    struct Paths;
    std::string stage_signature(const std::string& stage, const std::string& extra) const;
    bool stage_is_cached(const std::string& stage, const std::string& signature) const;
    void record_stage(const std::string& stage, const std::string& signature,
                      const std::map<std::string, std::filesystem::path>& outputs,
                      const std::vector<std::string>& inputs);
    std::string recorded_output_hash(const std::string& stage, const std::string& name) const;
    void require_stage(const std::string& stage, const std::string& needed_by) const;
    void load_manifest();
    void save_manifest() const;

    std::filesystem::path dir_;
    PipelineConfig cfg_;
    std::string manifest_json_;  // serialized stage records
};

// Hash used for stage outputs: decoded-pixel hash for PNG files, byte hash
// otherwise.
std::string artifact_hash(const std::filesystem::path& path);

int run_cli(int argc, char** argv);

}  // namespace diffmine
