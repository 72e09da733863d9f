#include "diffmine/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "diffmine/concurrency.hpp"
#include "diffmine/image_io.hpp"
#include "diffmine/medical.hpp"
#include "diffmine/render.hpp"
#include "diffmine/rng.hpp"
#include "diffmine/score_cache.hpp"
#include "diffmine/sha256.hpp"
#include "diffmine/translate.hpp"

namespace diffmine {

using nlohmann::json;

namespace {

std::string sanitize_name(const std::string& s) {
    std::string out;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? "_" : out;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

LabelSet preset_templates(const std::string& name) {
    LabelSet l;
    if (name == "cars") {
        l.domain_template = "A car from the {}s.";
        l.null_template = "A car.";
    } else if (name == "faces") {
        l.domain_template = "A portrait from the {}s.";
        l.null_template = "A portrait.";
    } else if (name == "geo") {
        l.domain_template = "A Google streetview image of {}.";
        l.null_template = "A Google streetview image.";
    } else if (name == "places") {
        l.domain_template = "An image of {}.";
        l.null_template = "";
    } else if (name == "medical") {
        l.domain_template = "{}";
        l.null_template = "";
    } else {
        throw std::invalid_argument("unknown template preset: " + name);
    }
    return l;
}

std::string PipelineConfig::to_json_string() const {
    json j;
    j["templates"] = {{"preset", templates_preset},
                      {"domain", labels.domain_template},
                      {"null", labels.null_template}};
    j["dataset"] = {{"resize_policy", resize_policy},
                    {"resize_to", resize_to},
                    {"binning", binning},
                    {"eval_fraction", eval_fraction},
                    {"mine_subset_per_label", mine_subset_per_label},
                    {"subset_seed", subset_seed}};
    j["toy"] = {{"n_images", toy.n_images},
                {"image_size", toy.image_size},
                {"channels", toy.channels},
                {"classes", toy.classes},
                {"marker", {toy.marker_region.x0, toy.marker_region.y0, toy.marker_region.w,
                            toy.marker_region.h}},
                {"noise_level", toy.noise_level},
                {"jitter", toy.jitter},
                {"clutter_count", toy.clutter_count},
                {"clutter_amp", toy.clutter_amp},
                {"seed", toy_seed}};
    j["model"] = {{"channels", model.channels},
                  {"hidden", model.hidden},
                  {"cond_dim", model.cond_dim},
                  {"init_seed", model.init_seed}};
    j["train"] = {{"steps", train.steps},
                  {"batch_size", train.batch_size},
                  {"learning_rate", train.learning_rate},
                  {"seed", train.seed},
                  {"checkpoint_every", train.checkpoint_every},
                  {"cond_dropout", train.cond_dropout}};
    j["schedule"] = {{"name", schedule}, {"form", schedule_form}};
    j["embed_seed"] = embed_seed;
    j["typicality"] = {{"t_min", typicality.t_min},
                       {"t_max", typicality.t_max},
                       {"n_samples", typicality.n_samples},
                       {"seed", typicality.seed},
                       {"paired", typicality.paired}};
    j["miner"] = {{"patch_w", miner.patch_w},
                  {"patch_h", miner.patch_h},
                  {"stride", miner.stride},
                  {"per_image_k", miner.per_image_k},
                  {"global_k", miner.global_k}};
    j["cluster"] = {{"k", cluster_k},
                    {"normalize_features", normalize_features},
                    {"feature_t", feature_t}};
    j["cotypical"] = {{"top_n", cotypical_top_n},
                      {"k", cotypical_k},
                      {"umap",
                       {{"target_dim", umap.target_dim},
                        {"n_neighbors", umap.n_neighbors},
                        {"min_dist", umap.min_dist},
                        {"n_epochs", umap.n_epochs},
                        {"seed", umap.seed},
                        {"disabled", umap.disabled}}}};
    j["medical"] = {{"blur_sigma_cells", blur_sigma_cells}};
    j["render"] = {{"rows", sheet_rows},
                   {"cols", sheet_cols},
                   {"cell", sheet_cell},
                   {"export_crops", export_crops}};
    return j.dump(2);
}

PipelineConfig PipelineConfig::from_json_string(const std::string& text) {
    const json j = json::parse(text);
    PipelineConfig c;
    if (j.contains("templates")) {
        const auto& t = j["templates"];
        c.templates_preset = t.value("preset", std::string{});
        if (!c.templates_preset.empty()) c.labels = preset_templates(c.templates_preset);
        if (t.contains("domain")) c.labels.domain_template = t["domain"].get<std::string>();
        if (t.contains("null")) c.labels.null_template = t["null"].get<std::string>();
    }
    if (c.labels.domain_template.empty()) c.labels.domain_template = "{}";
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        c.resize_policy = d.value("resize_policy", c.resize_policy);
        c.resize_to = d.value("resize_to", c.resize_to);
        c.binning = d.value("binning", c.binning);
        c.eval_fraction = d.value("eval_fraction", c.eval_fraction);
        c.mine_subset_per_label = d.value("mine_subset_per_label", c.mine_subset_per_label);
        c.subset_seed = d.value("subset_seed", c.subset_seed);
    }
    if (j.contains("toy")) {
        const auto& t = j["toy"];
        c.toy.n_images = t.value("n_images", c.toy.n_images);
        c.toy.image_size = t.value("image_size", c.toy.image_size);
        c.toy.channels = t.value("channels", c.toy.channels);
        if (t.contains("classes")) c.toy.classes = t["classes"].get<std::vector<std::string>>();
        if (t.contains("marker")) {
            const auto& m = t["marker"];
            c.toy.marker_region = Box{m[0].get<int>(), m[1].get<int>(), m[2].get<int>(),
                                      m[3].get<int>()};
        }
        c.toy.noise_level = t.value("noise_level", c.toy.noise_level);
        c.toy.jitter = t.value("jitter", c.toy.jitter);
        c.toy.clutter_count = t.value("clutter_count", c.toy.clutter_count);
        c.toy.clutter_amp = t.value("clutter_amp", c.toy.clutter_amp);
        c.toy_seed = t.value("seed", c.toy_seed);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        c.model.channels = m.value("channels", c.model.channels);
        c.model.hidden = m.value("hidden", c.model.hidden);
        c.model.cond_dim = m.value("cond_dim", c.model.cond_dim);
        c.model.init_seed = m.value("init_seed", c.model.init_seed);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        c.train.steps = t.value("steps", c.train.steps);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.seed = t.value("seed", c.train.seed);
        c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
        c.train.cond_dropout = t.value("cond_dropout", c.train.cond_dropout);
    }
    if (j.contains("schedule")) {
        c.schedule = j["schedule"].value("name", c.schedule);
        c.schedule_form = j["schedule"].value("form", c.schedule_form);
    }
    c.embed_seed = j.value("embed_seed", c.embed_seed);
    if (j.contains("typicality")) {
        const auto& t = j["typicality"];
        c.typicality.t_min = t.value("t_min", c.typicality.t_min);
        c.typicality.t_max = t.value("t_max", c.typicality.t_max);
        c.typicality.n_samples = t.value("n_samples", c.typicality.n_samples);
        c.typicality.seed = t.value("seed", c.typicality.seed);
        c.typicality.paired = t.value("paired", c.typicality.paired);
    }
    if (j.contains("miner")) {
        const auto& m = j["miner"];
        c.miner.patch_w = m.value("patch_w", c.miner.patch_w);
        c.miner.patch_h = m.value("patch_h", c.miner.patch_h);
        c.miner.stride = m.value("stride", c.miner.stride);
        c.miner.per_image_k = m.value("per_image_k", c.miner.per_image_k);
        c.miner.global_k = m.value("global_k", c.miner.global_k);
    }
    if (j.contains("cluster")) {
        const auto& k = j["cluster"];
        c.cluster_k = k.value("k", c.cluster_k);
        c.normalize_features = k.value("normalize_features", c.normalize_features);
        c.feature_t = k.value("feature_t", c.feature_t);
    }
    if (j.contains("cotypical")) {
        const auto& ct = j["cotypical"];
        c.cotypical_top_n = ct.value("top_n", c.cotypical_top_n);
        c.cotypical_k = ct.value("k", c.cotypical_k);
        if (ct.contains("umap")) {
            const auto& u = ct["umap"];
            c.umap.target_dim = u.value("target_dim", c.umap.target_dim);
            c.umap.n_neighbors = u.value("n_neighbors", c.umap.n_neighbors);
            c.umap.min_dist = u.value("min_dist", c.umap.min_dist);
            c.umap.n_epochs = u.value("n_epochs", c.umap.n_epochs);
            c.umap.seed = u.value("seed", c.umap.seed);
            c.umap.disabled = u.value("disabled", c.umap.disabled);
        }
    }
    if (j.contains("medical"))
        c.blur_sigma_cells = j["medical"].value("blur_sigma_cells", c.blur_sigma_cells);
    if (j.contains("render")) {
        const auto& r = j["render"];
        c.sheet_rows = r.value("rows", c.sheet_rows);
        c.sheet_cols = r.value("cols", c.sheet_cols);
        c.sheet_cell = r.value("cell", c.sheet_cell);
        c.export_crops = r.value("export_crops", c.export_crops);
    }
    return c;
}

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
    return from_json_string(read_text(path));
}

NoiseSchedule PipelineConfig::make_schedule() const {
    const ScheduleForm form = schedule_form == "paper_literal"
                                  ? ScheduleForm::paper_literal
                                  : ScheduleForm::standard_variance_preserving;
    return NoiseSchedule::named(schedule, form);
}

std::string artifact_hash(const std::filesystem::path& path) {
    if (path.extension() == ".png" || path.extension() == ".jpg" ||
        path.extension() == ".jpeg")
        return decoded_pixel_hash(path);
    return sha256_file(path);
}

// ---------------------------------------------------------------------------
// PipelineRun

PipelineRun::PipelineRun(std::filesystem::path run_dir, const PipelineConfig& cfg)
    : dir_(std::move(run_dir)), cfg_(cfg) {
    std::filesystem::create_directories(dir_);
    if (std::filesystem::exists(dir_ / "manifest.json")) {
        load_manifest();
    } else {
        manifest_json_ = json{{"config", json::parse(cfg_.to_json_string())},
                              {"stages", json::object()}}
                             .dump(2);
        save_manifest();
    }
}

PipelineRun PipelineRun::open(const std::filesystem::path& run_dir) {
    const auto manifest_path = run_dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path))
        throw std::runtime_error("no run manifest at " + manifest_path.string() +
                                 "; run `ingest` first");
    const json m = json::parse(read_text(manifest_path));
    PipelineConfig cfg = PipelineConfig::from_json_string(m.at("config").dump());
    return PipelineRun(run_dir, cfg);
}

void PipelineRun::load_manifest() { manifest_json_ = read_text(dir_ / "manifest.json"); }

void PipelineRun::save_manifest() const { write_text(dir_ / "manifest.json", manifest_json_); }

std::string PipelineRun::stage_signature(const std::string& stage,
                                         const std::string& extra) const {
    Sha256 h;
    h.update("stage:" + stage + "\n");
    h.update(extra);
    return h.hex_digest().substr(0, 16);
}

bool PipelineRun::stage_is_cached(const std::string& stage, const std::string& signature) const {
    const json m = json::parse(manifest_json_);
    if (!m.at("stages").contains(stage)) return false;
    const json& rec = m["stages"][stage];
    if (rec.value("signature", std::string{}) != signature) return false;
    for (const auto& [name, out] : rec.at("outputs").items()) {
        (void)name;
        const std::filesystem::path p = dir_ / out.at("path").get<std::string>();
        if (!std::filesystem::exists(p)) return false;
        if (artifact_hash(p) != out.at("hash").get<std::string>()) return false;
    }
    return true;
}

void PipelineRun::record_stage(const std::string& stage, const std::string& signature,
                               const std::map<std::string, std::filesystem::path>& outputs,
                               const std::vector<std::string>& inputs) {
    json m = json::parse(manifest_json_);
    json rec;
    rec["signature"] = signature;
    rec["inputs"] = inputs;
    rec["outputs"] = json::object();
    for (const auto& [name, path] : outputs) {
        const auto rel = std::filesystem::relative(path, dir_).generic_string();
        rec["outputs"][name] = {{"path", rel}, {"hash", artifact_hash(path)}};
    }
    m["stages"][stage] = rec;
    manifest_json_ = m.dump(2);
    save_manifest();
}

std::string PipelineRun::recorded_output_hash(const std::string& stage,
                                              const std::string& name) const {
    const json m = json::parse(manifest_json_);
    if (!m.at("stages").contains(stage)) return {};
    const json& rec = m["stages"][stage];
    if (!rec.at("outputs").contains(name)) return {};
    return rec["outputs"][name].at("hash").get<std::string>();
}

void PipelineRun::require_stage(const std::string& stage, const std::string& needed_by) const {
    const json m = json::parse(manifest_json_);
    if (!m.at("stages").contains(stage))
        throw std::runtime_error(needed_by + ": missing upstream artifact; run `" + stage +
                                 "` first");
}

// ---------------------------------------------------------------------------
// ingest

StageResult PipelineRun::ingest(const IngestOptions& opts) {
    StageResult sr{"ingest", false, 0, 0, ""};
    // The vocabulary comes from the data; only the templates exist yet.
    {
        LabelSet probe = cfg_.labels;
        probe.labels = {"__probe__"};
        probe.validate();
    }

    std::string sig_extra = cfg_.to_json_string();
    if (!opts.toy) {
        sig_extra += "\nimages:" + opts.image_dir.string();
        if (!opts.label_table.empty() && std::filesystem::exists(opts.label_table))
            sig_extra += "\nlabels:" + sha256_file(opts.label_table);
    } else {
        sig_extra += "\ntoy";
    }
    const std::string sig = stage_signature("ingest", sig_extra);
    if (stage_is_cached("ingest", sig)) {
        sr.cached = true;
        sr.message = "dataset unchanged";
        return sr;
    }

    const auto images_dir = dir_ / "dataset" / "images";
    std::filesystem::create_directories(images_dir);

    json dataset;
    dataset["records"] = json::array();
    std::vector<std::string> label_vocab;
    std::vector<std::string> warnings;
    std::map<std::string, std::filesystem::path> outputs;

    struct Staged {
        std::string id;
        std::string label;
        Tensor pixels;
    };
    std::vector<Staged> staged;

    if (opts.toy) {
        const ToyDataset toy = generate_toy_dataset(cfg_.toy, cfg_.toy_seed);
        std::vector<RoiAnnotation> rois;
        // eval split: tail fraction per class, assigned below; ROI rows are
        // emitted for every diseased record so eval selection stays free.
        for (size_t i = 0; i < toy.records.size(); ++i) {
            const auto& rec = toy.records[i];
            staged.push_back({rec.id, rec.label, rec.pixels});
            if (toy.marker_boxes[i].w > 0 && rec.label != "none")
                rois.push_back({rec.id, rec.label, {toy.marker_boxes[i]}});
        }
        if (!rois.empty()) {
            save_roi_table(dir_ / "dataset" / "rois.tsv", rois);
            outputs["rois"] = dir_ / "dataset" / "rois.tsv";
        }
    } else {
        if (!std::filesystem::is_directory(opts.image_dir))
            throw std::runtime_error("ingest: image directory not found: " +
                                     opts.image_dir.string());
        // filename -> raw label
        std::map<std::string, std::string> table;
        if (!opts.label_table.empty()) {
            std::ifstream in(opts.label_table);
            if (!in)
                throw std::runtime_error("ingest: cannot open label table " +
                                         opts.label_table.string());
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty() || line[0] == '#') continue;
                const auto tab = line.find('\t');
                if (tab == std::string::npos) continue;
                table[line.substr(0, tab)] = line.substr(tab + 1);
            }
        }
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(opts.image_dir)) {
            if (!e.is_regular_file()) continue;
            const auto ext = e.path().extension().string();
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) warnings.push_back("no images found in " + opts.image_dir.string());

        for (const auto& f : files) {
            const auto it = table.find(f.filename().string());
            if (it == table.end()) {
                warnings.push_back("unlabeled image excluded: " + f.filename().string());
                continue;
            }
            std::string label = it->second;
            if (cfg_.binning == "year_decade") {
                try {
                    const int year = std::stoi(label);
                    label = std::to_string((year / 10) * 10);
                } catch (...) {
                    warnings.push_back("non-numeric year excluded: " + f.filename().string());
                    continue;
                }
            }
            Tensor pixels;
            try {
                pixels = load_image(f);
            } catch (const std::exception& e) {
                warnings.push_back(std::string("undecodable image excluded: ") +
                                   f.filename().string() + " (" + e.what() + ")");
                continue;
            }
            if (cfg_.resize_policy == "fixed_height")
                pixels = resize_fixed_height(pixels, cfg_.resize_to);
            else if (cfg_.resize_policy == "fixed_square")
                pixels = resize_square(pixels, cfg_.resize_to);
            staged.push_back({f.stem().string(), label, std::move(pixels)});
        }
    }

    // Label vocabulary in first-seen order; split assignment per label.
    for (const auto& s : staged)
        if (std::find(label_vocab.begin(), label_vocab.end(), s.label) == label_vocab.end())
            label_vocab.push_back(s.label);

    std::map<std::string, std::vector<size_t>> by_label;
    for (size_t i = 0; i < staged.size(); ++i) by_label[staged[i].label].push_back(i);

    std::vector<Split> splits(staged.size(), Split::train);
    for (auto& [label, idxs] : by_label) {
        const int n_eval = int(std::floor(cfg_.eval_fraction * double(idxs.size())));
        for (int e = 0; e < n_eval; ++e) splits[idxs[idxs.size() - 1 - size_t(e)]] = Split::eval;
        if (cfg_.mine_subset_per_label > 0) {
            std::vector<size_t> pool;
            for (size_t i = 0; i + size_t(n_eval) < idxs.size(); ++i) pool.push_back(idxs[i]);
            Rng rng(mix64(cfg_.subset_seed, hash_bytes64(label.data(), label.size())));
            // seeded partial Fisher-Yates
            for (size_t i = 0; i < pool.size() && int(i) < cfg_.mine_subset_per_label; ++i) {
                const size_t j = i + size_t(rng.uniform_int(int(pool.size() - i)));
                std::swap(pool[i], pool[j]);
                splits[pool[i]] = Split::mine;
            }
        }
    }

    for (size_t i = 0; i < staged.size(); ++i) {
        const auto& s = staged[i];
        const auto file = images_dir / (sanitize_name(s.id) + ".png");
        save_image_png(file, s.pixels);
        json rec;
        rec["id"] = s.id;
        rec["file"] = std::filesystem::relative(file, dir_).generic_string();
        rec["label"] = s.label;
        rec["split"] = split_name(splits[i]);
        rec["h"] = s.pixels.h;
        rec["w"] = s.pixels.w;
        rec["c"] = s.pixels.c;
        dataset["records"].push_back(rec);
    }
    dataset["labels"] = {{"labels", label_vocab},
                         {"domain_template", cfg_.labels.domain_template},
                         {"null_template", cfg_.labels.null_template}};
    dataset["warnings"] = warnings;
    write_text(dir_ / "dataset" / "dataset.json", dataset.dump(2));
    outputs["dataset"] = dir_ / "dataset" / "dataset.json";

    record_stage("ingest", sig, outputs,
                 {opts.toy ? "toy-generator" : opts.image_dir.string()});
    sr.message = std::to_string(staged.size()) + " records, " +
                 std::to_string(label_vocab.size()) + " labels";
    for (const auto& w : warnings) sr.message += "\n  warning: " + w;
    return sr;
}

LabelSet PipelineRun::dataset_labels() const {
    const json d = json::parse(read_text(dir_ / "dataset" / "dataset.json"));
    LabelSet l;
    l.labels = d.at("labels").at("labels").get<std::vector<std::string>>();
    l.domain_template = d.at("labels").at("domain_template").get<std::string>();
    l.null_template = d.at("labels").at("null_template").get<std::string>();
    return l;
}

std::vector<ImageRecord> PipelineRun::load_dataset(const std::string& split_filter) const {
    const json d = json::parse(read_text(dir_ / "dataset" / "dataset.json"));
    bool any_mine = false;
    for (const auto& r : d.at("records"))
        if (r.at("split").get<std::string>() == "mine") any_mine = true;

    std::vector<ImageRecord> out;
    for (const auto& r : d.at("records")) {
        const Split split = split_from_name(r.at("split").get<std::string>());
        bool keep = true;
        if (split_filter == "trainmine")
            keep = split != Split::eval;
        else if (split_filter == "mining")
            keep = any_mine ? split == Split::mine : split != Split::eval;
        else if (split_filter == "eval")
            keep = split == Split::eval;
        if (!keep) continue;
        ImageRecord rec;
        rec.id = r.at("id").get<std::string>();
        rec.label = r.at("label").get<std::string>();
        rec.split = split;
        rec.file = r.at("file").get<std::string>();
        rec.pixels = load_image(dir_ / rec.file);
        rec.validate();
        out.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// finetune

StageResult PipelineRun::finetune_stage() {
    StageResult sr{"finetune", false, 0, 0, ""};
    require_stage("ingest", "finetune");
    const std::string dataset_hash = recorded_output_hash("ingest", "dataset");
    const std::string sig = stage_signature(
        "finetune", dataset_hash + cfg_.to_json_string());
    if (stage_is_cached("finetune", sig)) {
        sr.cached = true;
        sr.message = "checkpoints unchanged";
        return sr;
    }

    const auto ckpt_dir = dir_ / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    const LabelSet labels = dataset_labels();
    const std::vector<ImageRecord> train_set = load_dataset("trainmine");

    ConvDenoiser model(cfg_.model);
    model.save(ckpt_dir / "ckpt_init.bin");  // the pre-finetuning reference

    const HashTextEmbedder embedder(cfg_.model.cond_dim, cfg_.embed_seed);
    const NoiseSchedule sched = cfg_.make_schedule();
    const TrainResult tr = finetune(model, train_set, labels, embedder, sched, cfg_.train,
                                    ckpt_dir, default_threads());

    record_stage("finetune", sig,
                 {{"ckpt_final", tr.final_checkpoint},
                  {"ckpt_init", ckpt_dir / "ckpt_init.bin"},
                  {"loss_curve", tr.loss_curve_file}},
                 {"dataset:" + dataset_hash});
    sr.message = "final loss " + std::to_string(tr.loss_curve.back()) + " (initial " +
                 std::to_string(tr.loss_curve.front()) + ", " +
                 std::to_string(tr.loss_curve.size()) + " steps)";
    return sr;
}

std::filesystem::path PipelineRun::checkpoint_path(const std::string& backend_role) const {
    if (backend_role == "finetuned") return dir_ / "checkpoints" / "ckpt_final.bin";
    if (backend_role == "pretrained") return dir_ / "checkpoints" / "ckpt_init.bin";
    throw std::invalid_argument("unknown backend role: " + backend_role +
                                " (expected finetuned|pretrained)");
}

ConvDenoiser PipelineRun::make_backend(const std::string& backend_role) const {
    ConvDenoiser model(cfg_.model);
    const auto ckpt = checkpoint_path(backend_role);
    if (!std::filesystem::exists(ckpt))
        throw std::runtime_error("score: missing checkpoint " + ckpt.string() +
                                 "; run `finetune` first");
    model.load(ckpt);
    return model;
}

std::filesystem::path PipelineRun::score_cache_dir(const std::string& backend_role) const {
    if (const char* root = std::getenv("DIFFMINE_CACHE_ROOT"))
        return std::filesystem::path(root) / dir_.filename() / backend_role;
    return dir_ / "scores" / backend_role;
}

// ---------------------------------------------------------------------------
// score

StageResult PipelineRun::score(const std::string& backend_role) {
    StageResult sr{"score", false, 0, 0, ""};
    require_stage("ingest", "score");
    require_stage("finetune", "score");

    ConvDenoiser backend = make_backend(backend_role);
    const LabelSet labels = dataset_labels();
    const std::vector<ImageRecord> mining = load_dataset("mining");
    const HashTextEmbedder embedder(cfg_.model.cond_dim, cfg_.embed_seed);
    const NoiseSchedule sched = cfg_.make_schedule();

    ScoreCache cache(score_cache_dir(backend_role));
    const BatchStats stats = batch_typicality(mining, labels, backend, sched, cfg_.typicality,
                                              embedder, cache, default_threads());
    sr.cache_hits = stats.cache_hits;
    sr.cache_total = stats.total;
    sr.cached = stats.all_hits();

    const std::string sig = stage_signature(
        "score:" + backend_role,
        recorded_output_hash("ingest", "dataset") + backend.id() + cfg_.to_json_string());
    record_stage("score:" + backend_role, sig, {{"manifest", cache.manifest_path()}},
                 {"dataset", "checkpoint:" + backend.id()});
    sr.message = std::to_string(stats.cache_hits) + "/" + std::to_string(stats.total) +
                 " cache hits, " + std::to_string(stats.computed) + " computed [" + backend_role +
                 "]";
    return sr;
}

// ---------------------------------------------------------------------------
// mine

StageResult PipelineRun::mine(const std::string& backend_role) {
    StageResult sr{"mine", false, 0, 0, ""};
    require_stage("ingest", "mine");
    require_stage("score:" + backend_role, "mine");

    ConvDenoiser backend = make_backend(backend_role);
    const LabelSet labels = dataset_labels();
    const NoiseSchedule sched = cfg_.make_schedule();
    const std::string config_hash = cfg_.typicality.config_hash(backend.id(), sched);
    const std::vector<ImageRecord> mining = load_dataset("mining");

    const std::string sig =
        stage_signature("mine:" + backend_role,
                        recorded_output_hash("score:" + backend_role, "manifest") +
                            cfg_.to_json_string() + backend.id());
    if (stage_is_cached("mine:" + backend_role, sig)) {
        sr.cached = true;
        sr.message = "patches unchanged [" + backend_role + "]";
        return sr;
    }

    ScoreCache cache(score_cache_dir(backend_role));
    const auto out_dir = dir_ / "patches" / backend_role;
    std::filesystem::create_directories(out_dir);

    std::map<std::string, std::filesystem::path> outputs;
    int total_patches = 0;
    for (const auto& label : labels.labels) {
        std::vector<std::vector<PatchRef>> per_image;
        for (const auto& rec : mining) {
            if (rec.label != label) continue;
            auto entry = cache.load(rec.id, rec.label, config_hash);
            if (!entry)
                throw std::runtime_error("mine: score cache entry missing for " + rec.id +
                                         "; run `score` first");
            const auto scores = patch_scores(entry->map, cfg_.miner);
            per_image.push_back(
                select_top_patches(scores, cfg_.miner.per_image_k, rec.id, rec.label));
        }
        if (per_image.empty()) continue;
        const std::vector<PatchRef> top = global_top(per_image, cfg_.miner.global_k);
        total_patches += static_cast<int>(top.size());

        const auto write_patches = [&](const std::filesystem::path& path,
                                       const std::vector<PatchRef>& patches) {
            std::ofstream out(path, std::ios::trunc);
            out.precision(17);
            int rank = 0;
            for (const auto& p : patches)
                out << rank++ << '\t' << p.image_id << '\t' << p.box.x0 << '\t' << p.box.y0
                    << '\t' << p.box.w << '\t' << p.box.h << '\t' << p.score << '\t' << p.label
                    << '\n';
            if (!out) throw std::runtime_error("mine: cannot write " + path.string());
        };
        const auto top_path = out_dir / (sanitize_name(label) + ".tsv");
        write_patches(top_path, top);
        outputs["top:" + label] = top_path;

        std::vector<PatchRef> flat;
        for (const auto& v : per_image) flat.insert(flat.end(), v.begin(), v.end());
        const auto per_image_path = out_dir / ("per_image__" + sanitize_name(label) + ".tsv");
        write_patches(per_image_path, flat);
        outputs["per_image:" + label] = per_image_path;
    }

    record_stage("mine:" + backend_role, sig, outputs, {"score:" + backend_role});
    sr.message = std::to_string(total_patches) + " mined patches across " +
                 std::to_string(labels.labels.size()) + " labels [" + backend_role + "]";
    return sr;
}

std::vector<PatchRef> PipelineRun::load_patches(const std::string& backend_role,
                                                const std::string& label, bool per_image) const {
    const auto path = dir_ / "patches" / backend_role /
                      ((per_image ? "per_image__" : "") + sanitize_name(label) + ".tsv");
    std::vector<PatchRef> out;
    if (!std::filesystem::exists(path)) return out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int rank;
        PatchRef p;
        ss >> rank >> p.image_id >> p.box.x0 >> p.box.y0 >> p.box.w >> p.box.h >> p.score;
        std::getline(ss, p.label);
        if (!p.label.empty() && p.label[0] == '\t') p.label.erase(0, 1);
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// cluster

StageResult PipelineRun::cluster(const std::string& backend_role) {
    StageResult sr{"cluster", false, 0, 0, ""};
    require_stage("mine:" + backend_role, "cluster");

    ConvDenoiser backend = make_backend(backend_role);
    const LabelSet labels = dataset_labels();
    const NoiseSchedule sched = cfg_.make_schedule();

    std::string mine_hashes;
    {
        const json m = json::parse(manifest_json_);
        mine_hashes = m["stages"]["mine:" + backend_role]["outputs"].dump();
    }
    const std::string sig = stage_signature(
        "cluster:" + backend_role, mine_hashes + cfg_.to_json_string() + backend.id());
    if (stage_is_cached("cluster:" + backend_role, sig)) {
        sr.cached = true;
        sr.message = "clusters unchanged [" + backend_role + "]";
        return sr;
    }

    const std::vector<ImageRecord> mining = load_dataset("mining");
    std::map<std::string, const Tensor*> images;
    for (const auto& rec : mining) images[rec.id] = &rec.pixels;
    const auto lookup = [&](const std::string& id) -> const Tensor& {
        auto it = images.find(id);
        if (it == images.end()) throw std::runtime_error("cluster: unknown image id " + id);
        return *it->second;
    };

    const HashTextEmbedder text_embedder(cfg_.model.cond_dim, cfg_.embed_seed);
    const Conditioning null_cond = make_conditioning(labels, std::nullopt, text_embedder);
    ConvFeatureEmbedder embedder(backend, sched, null_cond, cfg_.embed_seed);

    const auto out_dir = dir_ / "clusters" / backend_role;
    std::filesystem::create_directories(out_dir);
    std::map<std::string, std::filesystem::path> outputs;
    int n_clusters_total = 0;

    for (const auto& label : labels.labels) {
        const std::vector<PatchRef> patches = load_patches(backend_role, label, false);
        if (patches.empty()) continue;
        Matrix features =
            embed_patches(patches, lookup, embedder, cfg_.feature_t, default_threads());
        if (cfg_.normalize_features) features = l2_normalize_rows(std::move(features));
        const int k_eff = std::min(cfg_.cluster_k, features.rows);
        const KmeansResult km =
            kmeans(features, k_eff, mix64(cfg_.typicality.seed, hash_bytes64(label.data(),
                                                                             label.size())));
        const std::vector<ClusterSummary> ranked =
            rank_clusters(km.assignments, features, km.centroids, patches);
        n_clusters_total += static_cast<int>(ranked.size());

        const auto path = out_dir / (sanitize_name(label) + ".tsv");
        std::ofstream out(path, std::ios::trunc);
        out.precision(17);
        int crank = 0;
        for (const auto& cs : ranked) {
            int mrank = 0;
            for (const auto& p : cs.members)
                out << crank << '\t' << cs.cluster_id << '\t' << cs.median_typicality << '\t'
                    << mrank++ << '\t' << p.image_id << '\t' << p.box.x0 << '\t' << p.box.y0
                    << '\t' << p.box.w << '\t' << p.box.h << '\t' << p.score << '\n';
            ++crank;
        }
        if (!out) throw std::runtime_error("cluster: cannot write " + path.string());
        outputs["clusters:" + label] = path;
    }

    record_stage("cluster:" + backend_role, sig, outputs, {"mine:" + backend_role});
    sr.message = std::to_string(n_clusters_total) + " clusters [" + backend_role + "]";
    return sr;
}

// ---------------------------------------------------------------------------
// render

std::filesystem::path PipelineRun::sheets_dir(const std::string& backend_role) const {
    return dir_ / "sheets" / backend_role;
}

StageResult PipelineRun::render(const std::string& backend_role) {
    StageResult sr{"render", false, 0, 0, ""};
    require_stage("cluster:" + backend_role, "render");

    std::string cluster_hashes;
    {
        const json m = json::parse(manifest_json_);
        cluster_hashes = m["stages"]["cluster:" + backend_role]["outputs"].dump();
    }
    const std::string sig =
        stage_signature("render:" + backend_role, cluster_hashes + cfg_.to_json_string());
    if (stage_is_cached("render:" + backend_role, sig)) {
        sr.cached = true;
        sr.message = "sheets unchanged [" + backend_role + "]";
        return sr;
    }

    const LabelSet labels = dataset_labels();
    const std::vector<ImageRecord> mining = load_dataset("mining");
    std::map<std::string, const Tensor*> images;
    for (const auto& rec : mining) images[rec.id] = &rec.pixels;

    const auto sheet_dir = sheets_dir(backend_role);
    std::filesystem::create_directories(sheet_dir);
    std::map<std::string, std::filesystem::path> outputs;

    SheetLayout layout;
    layout.cell_size = cfg_.sheet_cell;

    for (const auto& label : labels.labels) {
        const auto cluster_path =
            dir_ / "clusters" / backend_role / (sanitize_name(label) + ".tsv");
        if (!std::filesystem::exists(cluster_path)) continue;

        // rows[cluster_rank][member_rank]
        std::vector<std::vector<Tensor>> rows;
        std::ifstream in(cluster_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            int crank, cid, mrank;
            double median_t, score;
            PatchRef p;
            ss >> crank >> cid >> median_t >> mrank >> p.image_id >> p.box.x0 >> p.box.y0 >>
                p.box.w >> p.box.h >> score;
            if (crank >= cfg_.sheet_rows || mrank >= cfg_.sheet_cols) continue;
            auto it = images.find(p.image_id);
            if (it == images.end()) continue;
            if (static_cast<int>(rows.size()) <= crank) rows.resize(size_t(crank) + 1);
            auto& row = rows[size_t(crank)];
            if (static_cast<int>(row.size()) <= mrank) row.resize(size_t(mrank) + 1);
            row[size_t(mrank)] = crop(*it->second, p.box);
        }
        if (rows.empty()) continue;
        const Tensor sheet = make_contact_sheet(rows, layout);
        const auto sheet_path = sheet_dir / (sanitize_name(label) + ".png");
        save_image_png(sheet_path, sheet);
        outputs["sheet:" + label] = sheet_path;
    }

    // Patch crop exports for the top mined patches of each label.
    const auto crops_dir = dir_ / "crops" / backend_role;
    std::filesystem::create_directories(crops_dir);
    int exported = 0;
    for (const auto& label : labels.labels) {
        const std::vector<PatchRef> patches = load_patches(backend_role, label, false);
        for (size_t r = 0; r < patches.size() && int(r) < cfg_.export_crops; ++r) {
            const auto& p = patches[r];
            auto it = images.find(p.image_id);
            if (it == images.end()) continue;
            char name[256];
            std::snprintf(name, sizeof(name), "%s__%04d_%s_%d_%d.png",
                          sanitize_name(label).c_str(), int(r),
                          sanitize_name(p.image_id).c_str(), p.box.x0, p.box.y0);
            save_image_png(crops_dir / name, crop(*it->second, p.box));
            ++exported;
        }
    }

    record_stage("render:" + backend_role, sig, outputs, {"cluster:" + backend_role});
    sr.message = std::to_string(outputs.size()) + " sheets, " + std::to_string(exported) +
                 " crops [" + backend_role + "]";
    return sr;
}

// ---------------------------------------------------------------------------
// translate

StageResult PipelineRun::translate(const std::string& translator) {
    StageResult sr{"translate", false, 0, 0, ""};
    require_stage("ingest", "translate");

    const std::string sig = stage_signature(
        "translate", recorded_output_hash("ingest", "dataset") + translator);
    const std::vector<ImageRecord> mining = load_dataset("mining");
    const LabelSet labels = dataset_labels();

    std::unique_ptr<TranslationBackend> backend;
    if (translator == "identity")
        backend = std::make_unique<IdentityTranslator>();
    else if (translator == "stripe")
        backend = std::make_unique<StripeTintTranslator>(0, std::max(1, cfg_.toy.image_size / 8));
    else
        throw std::invalid_argument("unknown translator: " + translator +
                                    " (expected identity|stripe)");

    ParallelStore store(dir_ / "parallel");
    const ParallelBuildReport report =
        build_parallel_dataset(mining, labels, *backend, store, default_threads());
    sr.cache_hits = report.reused;
    sr.cache_total = report.expected;
    sr.cached = report.reused == report.expected;

    record_stage("translate", sig, {{"manifest", store.manifest_path()}},
                 {"dataset", "translator:" + backend->id()});
    sr.message = std::to_string(report.written) + " written, " + std::to_string(report.reused) +
                 " reused, " + std::to_string(report.failed) + " failed of " +
                 std::to_string(report.expected);
    if (!report.complete()) {
        sr.message += "\n  incomplete pairs:";
        for (const auto& f : report.failures) sr.message += "\n    " + f;
    }
    return sr;
}

// ---------------------------------------------------------------------------
// cotypical

StageResult PipelineRun::cotypical(const std::string& backend_role) {
    StageResult sr{"cotypical", false, 0, 0, ""};
    require_stage("translate", "cotypical");
    require_stage("mine:" + backend_role, "cotypical");

    ConvDenoiser backend = make_backend(backend_role);
    const LabelSet labels = dataset_labels();
    const NoiseSchedule sched = cfg_.make_schedule();
    const std::vector<ImageRecord> mining = load_dataset("mining");

    const std::string sig = stage_signature(
        "cotypical", recorded_output_hash("translate", "manifest") + cfg_.to_json_string() +
                         backend.id());
    if (stage_is_cached("cotypical", sig)) {
        sr.cached = true;
        sr.message = "sequence clusters unchanged";
        return sr;
    }

    std::map<std::string, std::vector<PatchRef>> boxes;
    for (const auto& label : labels.labels)
        for (const auto& p : load_patches(backend_role, label, true))
            boxes[p.image_id].push_back(p);

    const HashTextEmbedder text_embedder(cfg_.model.cond_dim, cfg_.embed_seed);
    const Conditioning null_cond = make_conditioning(labels, std::nullopt, text_embedder);
    ConvFeatureEmbedder feature_embedder(backend, sched, null_cond, cfg_.embed_seed);
    ParallelStore store(dir_ / "parallel");

    const SequenceMiningResult mined = mine_sequences(
        store, mining, boxes, labels, backend, sched, cfg_.typicality, text_embedder,
        feature_embedder, cfg_.umap, cfg_.cotypical_top_n, cfg_.cotypical_k,
        cfg_.typicality.seed, default_threads());

    const auto out_dir = dir_ / "cotypical";
    std::filesystem::create_directories(out_dir);

    const auto seq_path = out_dir / "sequences.tsv";
    {
        std::ofstream out(seq_path, std::ios::trunc);
        out.precision(17);
        int rank = 0;
        for (const auto& s : mined.sequences) {
            out << rank++ << '\t' << s.source.image_id << '\t' << s.source_label << '\t'
                << s.source.box.x0 << '\t' << s.source.box.y0 << '\t' << s.source.box.w << '\t'
                << s.source.box.h << '\t' << s.co_typicality;
            for (const auto& label : labels.labels)
                out << '\t' << s.per_label_typicality.at(label);
            out << '\n';
        }
        if (!out) throw std::runtime_error("cotypical: cannot write sequences");
    }
    const auto clus_path = out_dir / "clusters.tsv";
    {
        std::ofstream out(clus_path, std::ios::trunc);
        out.precision(17);
        int crank = 0;
        for (const auto& c : mined.clusters) {
            int mrank = 0;
            for (int member : c.members)
                out << crank << '\t' << c.cluster_id << '\t' << c.median_co_typicality << '\t'
                    << mrank++ << '\t' << member << '\n';
            ++crank;
        }
        if (!out) throw std::runtime_error("cotypical: cannot write clusters");
    }

    // Sequence sheets: rows = top sequences of the top clusters, columns =
    // variants in label order; the source variant gets a red frame.
    std::map<std::string, std::filesystem::path> outputs{{"sequences", seq_path},
                                                         {"clusters", clus_path}};
    const int n_sheet_clusters = std::min<int>(cfg_.sheet_rows, int(mined.clusters.size()));
    for (int ci = 0; ci < n_sheet_clusters; ++ci) {
        const auto& cl = mined.clusters[size_t(ci)];
        std::vector<std::vector<Tensor>> rows;
        for (size_t mi = 0; mi < cl.members.size() && int(mi) < cfg_.sheet_cols; ++mi) {
            const auto& seq = mined.sequences[size_t(cl.members[mi])];
            std::vector<Tensor> row;
            for (const auto& label : labels.labels) {
                Tensor cell = crop(store.load(seq.source.image_id, seq.source_label, label),
                                   seq.source.box);
                if (label == seq.source_label) {
                    // red frame marks the source
                    Tensor rgb(cell.h, cell.w, 3);
                    for (int y = 0; y < cell.h; ++y)
                        for (int x = 0; x < cell.w; ++x)
                            for (int ch = 0; ch < 3; ++ch)
                                rgb.at(y, x, ch) =
                                    cell.c == 3 ? cell.at(y, x, ch) : cell.at(y, x, 0);
                    for (int x = 0; x < cell.w; ++x) {
                        rgb.at(0, x, 0) = 1.0; rgb.at(0, x, 1) = 0.0; rgb.at(0, x, 2) = 0.0;
                        rgb.at(cell.h - 1, x, 0) = 1.0; rgb.at(cell.h - 1, x, 1) = 0.0;
                        rgb.at(cell.h - 1, x, 2) = 0.0;
                    }
                    for (int y = 0; y < cell.h; ++y) {
                        rgb.at(y, 0, 0) = 1.0; rgb.at(y, 0, 1) = 0.0; rgb.at(y, 0, 2) = 0.0;
                        rgb.at(y, cell.w - 1, 0) = 1.0; rgb.at(y, cell.w - 1, 1) = 0.0;
                        rgb.at(y, cell.w - 1, 2) = 0.0;
                    }
                    cell = std::move(rgb);
                }
                row.push_back(std::move(cell));
            }
            rows.push_back(std::move(row));
        }
        if (rows.empty()) continue;
        SheetLayout layout;
        layout.cell_size = cfg_.sheet_cell;
        const auto path = out_dir / ("cluster_" + std::to_string(ci) + ".png");
        save_image_png(path, make_contact_sheet(rows, layout));
        outputs["sheet:" + std::to_string(ci)] = path;
    }

    record_stage("cotypical", sig, outputs, {"translate", "mine:" + backend_role});
    sr.message = std::to_string(mined.sequences.size()) + " sequences, " +
                 std::to_string(mined.clusters.size()) + " clusters, " +
                 std::to_string(mined.excluded_incomplete) + " incomplete sources excluded";
    return sr;
}

// ---------------------------------------------------------------------------
// eval-medical

StageResult PipelineRun::eval_medical(const std::filesystem::path& roi_table) {
    StageResult sr{"eval-medical", false, 0, 0, ""};
    require_stage("ingest", "eval-medical");
    require_stage("finetune", "eval-medical");

    const std::filesystem::path rois_path =
        roi_table.empty() ? dir_ / "dataset" / "rois.tsv" : roi_table;
    if (!std::filesystem::exists(rois_path))
        throw std::runtime_error("eval-medical: ROI table not found: " + rois_path.string());

    const std::string sig = stage_signature(
        "eval-medical", sha256_file(rois_path) + recorded_output_hash("ingest", "dataset") +
                            cfg_.to_json_string());
    if (stage_is_cached("eval-medical", sig)) {
        sr.cached = true;
        sr.message = "results unchanged";
        return sr;
    }

    const LabelSet labels = dataset_labels();
    const NoiseSchedule sched = cfg_.make_schedule();
    const std::vector<RoiAnnotation> rois = load_roi_table(rois_path);
    std::vector<ImageRecord> eval_set = load_dataset("eval");
    if (eval_set.empty()) eval_set = load_dataset("");

    ConvDenoiser finetuned = make_backend("finetuned");
    ConvDenoiser pretrained = make_backend("pretrained");
    std::vector<DenoiserBackend*> backends{&pretrained, &finetuned};
    std::vector<std::string> names{"pretrained", "finetuned"};

    const HashTextEmbedder embedder(cfg_.model.cond_dim, cfg_.embed_seed);
    const double blur_sigma = cfg_.blur_sigma_cells;  // scale_factor 1 backend

    const LocalizationTable table =
        evaluate_localization(eval_set, rois, labels, backends, names, sched, cfg_.typicality,
                              embedder, blur_sigma, default_threads());

    const auto out_dir = dir_ / "medical";
    std::filesystem::create_directories(out_dir);
    const auto results_path = out_dir / "results.tsv";
    write_text(results_path, table.format());

    // A few overlays from the finetuned backend for inspection.
    std::map<std::string, std::filesystem::path> outputs{{"results", results_path}};
    int n_overlays = 0;
    for (const auto& a : rois) {
        if (n_overlays >= 8) break;
        const auto rec = std::find_if(eval_set.begin(), eval_set.end(),
                                      [&](const ImageRecord& r) { return r.id == a.image_id; });
        if (rec == eval_set.end()) continue;
        const Grid heat = disease_heatmap(*rec, a.disease, labels, finetuned, sched,
                                          cfg_.typicality, embedder, blur_sigma,
                                          default_threads());
        const auto path = out_dir / ("overlay_" + sanitize_name(a.image_id) + "__" +
                                     sanitize_name(a.disease) + ".png");
        save_image_png(path, overlay_heatmap(rec->pixels, heat, a.boxes));
        outputs["overlay:" + a.image_id + ":" + a.disease] = path;
        ++n_overlays;
    }

    record_stage("eval-medical", sig, outputs, {"dataset", "rois:" + rois_path.string()});
    sr.message = table.format();
    return sr;
}

// ---------------------------------------------------------------------------
// compare

std::vector<StageResult> PipelineRun::compare() {
    require_stage("finetune", "compare");
    std::vector<StageResult> results;
    for (const std::string role : {"pretrained", "finetuned"}) {
        results.push_back(score(role));
        results.push_back(mine(role));
        results.push_back(cluster(role));
        results.push_back(render(role));
    }

    const LabelSet labels = dataset_labels();
    const auto out_dir = dir_ / "sheets" / "compare";
    std::filesystem::create_directories(out_dir);
    std::map<std::string, std::filesystem::path> outputs;
    for (const auto& label : labels.labels) {
        const auto pre = sheets_dir("pretrained") / (sanitize_name(label) + ".png");
        const auto fine = sheets_dir("finetuned") / (sanitize_name(label) + ".png");
        if (!std::filesystem::exists(pre) || !std::filesystem::exists(fine)) continue;
        const Tensor sheet = hconcat_sheets(load_image(pre), load_image(fine));
        const auto path = out_dir / (sanitize_name(label) + ".png");
        save_image_png(path, sheet);
        outputs["compare:" + label] = path;
    }
    const std::string sig = stage_signature(
        "compare", recorded_output_hash("render:pretrained", "") +
                       recorded_output_hash("render:finetuned", "") + cfg_.to_json_string());
    record_stage("compare", sig, outputs, {"render:pretrained", "render:finetuned"});

    StageResult sr{"compare", false, 0, 0,
                   std::to_string(outputs.size()) + " side-by-side sheets"};
    results.push_back(sr);
    return results;
}

}  // namespace diffmine
