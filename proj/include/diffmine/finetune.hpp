#pragma once

#include <filesystem>
#include <vector>

#include "diffmine/conv_denoiser.hpp"
#include "diffmine/core_model.hpp"

namespace diffmine {

struct TrainConfig {
    int steps = 1500;
    int batch_size = 8;
    double learning_rate = 2e-3;
    uint64_t seed = 0;
    int checkpoint_every = 500;
    // Probability of swapping a sample's label prompt for the null prompt, so
    // the model also learns the unconditional distribution.
    double cond_dropout = 0.2;

    void validate() const;
};

struct TrainResult {
    std::vector<double> loss_curve;  // per-step mean squared residual per element
    std::vector<std::filesystem::path> checkpoints;
    std::filesystem::path final_checkpoint;
    std::filesystem::path loss_curve_file;
};

// Mean squared residual per element over a fixed batch; accumulates the
// matching gradient when grad is given. Shared by the trainer and the
// finite-difference checks.
struct TrainItem {
    const Tensor* noised;
    const Tensor* eps;
    double t;
    const std::vector<double>* cond;
};
double batch_loss(const TrainableDenoiser& model, const std::vector<TrainItem>& items,
                  std::vector<double>* grad, int n_threads = 1);

// Stochastic minimization of the conditional reconstruction loss with
// per-sample (eps, t) draws, t uniform on [0, 1]. Prompts come from each
// record's label; a cond_dropout fraction trains against the null prompt.
// Checkpoints land in out_dir every checkpoint_every steps plus a final one;
// the loss curve is persisted as TSV. Aborts (throws) when the loss exceeds
// 10x the initial loss for 100 consecutive steps.
TrainResult finetune(TrainableDenoiser& model, const std::vector<ImageRecord>& dataset,
                     const LabelSet& labels, const TextEmbedder& embedder,
                     const NoiseSchedule& sched, const TrainConfig& cfg,
                     const std::filesystem::path& out_dir, int n_threads = 1);

}  // namespace diffmine
