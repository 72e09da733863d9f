#include <CLI11.hpp>

#include <iostream>

#include "diffmine/pipeline.hpp"

namespace diffmine {

namespace {

void print_result(const StageResult& r) {
    std::cout << "[" << r.stage << "] " << (r.cached ? "(cached) " : "");
    if (r.cache_total > 0)
        std::cout << r.cache_hits << "/" << r.cache_total << " cache hits; ";
    std::cout << r.message << "\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"diffmine: typicality-based visual data mining on labeled image datasets"};
    app.require_subcommand(1);

    std::string run_dir;
    app.add_option("--run", run_dir, "run directory")->required();

    std::string config_path, images_dir, label_table, backend_role = "finetuned";
    std::string translator = "identity", rois_path;
    bool toy = false;

    auto* ingest = app.add_subcommand("ingest", "normalize a dataset into the run directory");
    ingest->add_option("--config", config_path, "pipeline config JSON")->required();
    ingest->add_option("--images", images_dir, "source image directory");
    ingest->add_option("--labels-table", label_table, "TSV: filename<TAB>label");
    ingest->add_flag("--toy", toy, "generate the configured toy dataset instead");

    auto* finetune_cmd = app.add_subcommand("finetune", "train the conditional denoiser");

    auto* score = app.add_subcommand("score", "per-image typicality maps into the score cache");
    auto* mine = app.add_subcommand("mine", "select top typical patches per label");
    auto* cluster = app.add_subcommand("cluster", "embed and cluster mined patches");
    auto* render = app.add_subcommand("render", "contact sheets and patch crops");
    for (auto* cmd : {score, mine, cluster, render})
        cmd->add_option("--backend", backend_role, "finetuned|pretrained");

    auto* translate = app.add_subcommand("translate", "build the parallel dataset");
    translate->add_option("--translator", translator, "identity|stripe");

    auto* cotypical = app.add_subcommand("cotypical", "mine and cluster typical sequences");
    cotypical->add_option("--backend", backend_role, "finetuned|pretrained");

    auto* eval_medical = app.add_subcommand("eval-medical", "AUC-PR against ROI annotations");
    eval_medical->add_option("--rois", rois_path, "ROI TSV (default: dataset/rois.tsv)");

    auto* compare = app.add_subcommand(
        "compare", "score+mine+cluster+render under both backends, side-by-side sheets");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            PipelineConfig cfg = PipelineConfig::from_json_file(config_path);
            PipelineRun run(run_dir, cfg);
            IngestOptions opts;
            opts.toy = toy;
            opts.image_dir = images_dir;
            opts.label_table = label_table;
            print_result(run.ingest(opts));
            return 0;
        }
        PipelineRun run = PipelineRun::open(run_dir);
        if (finetune_cmd->parsed()) print_result(run.finetune_stage());
        if (score->parsed()) print_result(run.score(backend_role));
        if (mine->parsed()) print_result(run.mine(backend_role));
        if (cluster->parsed()) print_result(run.cluster(backend_role));
        if (render->parsed()) print_result(run.render(backend_role));
        if (translate->parsed()) print_result(run.translate(translator));
        if (cotypical->parsed()) print_result(run.cotypical(backend_role));
        if (eval_medical->parsed()) print_result(run.eval_medical(rois_path));
        if (compare->parsed())
            for (const auto& r : run.compare()) print_result(r);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace diffmine
