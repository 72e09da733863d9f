#include "diffmine/finetune.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "diffmine/concurrency.hpp"
#include "diffmine/rng.hpp"

namespace diffmine {

void TrainConfig::validate() const {
    if (steps <= 0 || batch_size <= 0 || checkpoint_every <= 0)
        throw std::invalid_argument("TrainConfig: steps, batch_size, checkpoint_every must be > 0");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: bad learning_rate");
    if (cond_dropout < 0.0 || cond_dropout > 1.0)
        throw std::invalid_argument("TrainConfig: cond_dropout outside [0,1]");
}

double batch_loss(const TrainableDenoiser& model, const std::vector<TrainItem>& items,
                  std::vector<double>* grad, int n_threads) {
    if (items.empty()) throw std::invalid_argument("batch_loss: empty batch");
    size_t n_elements = 0;
    for (const auto& it : items) n_elements += it.noised->size();
    const double scale = 1.0 / double(n_elements);

    std::vector<double> losses(items.size(), 0.0);
    std::vector<std::vector<double>> grads;
    if (grad) grads.assign(items.size(), std::vector<double>(model.param_count(), 0.0));

    parallel_for(static_cast<int>(items.size()), n_threads, [&](int i) {
        const TrainItem& it = items[size_t(i)];
        losses[size_t(i)] = model.sample_loss(*it.noised, *it.eps, it.t, *it.cond,
                                              grad ? &grads[size_t(i)] : nullptr);
    });

    double total = 0.0;
    for (double l : losses) total += l;
    if (grad) {
        if (grad->size() != model.param_count())
            throw std::invalid_argument("batch_loss: grad buffer size mismatch");
        // Fixed-order reduction keeps results identical for any worker count.
        for (size_t i = 0; i < grads.size(); ++i)
            for (size_t p = 0; p < grad->size(); ++p) (*grad)[p] += grads[i][p] * scale;
    }
    return total * scale;
}

TrainResult finetune(TrainableDenoiser& model, const std::vector<ImageRecord>& dataset,
                     const LabelSet& labels, const TextEmbedder& embedder,
                     const NoiseSchedule& sched, const TrainConfig& cfg,
                     const std::filesystem::path& out_dir, int n_threads) {
    cfg.validate();
    labels.validate();
    if (dataset.empty()) throw std::invalid_argument("finetune: empty dataset");
    for (const auto& r : dataset)
        if (!labels.has(r.label))
            throw std::invalid_argument("finetune: record " + r.id + " has unknown label " +
                                        r.label);
    std::filesystem::create_directories(out_dir);

    // Prompt embeddings are fixed during training; build them once.
    std::map<std::string, std::vector<double>> cond_by_label;
    for (const auto& l : labels.labels)
        cond_by_label[l] = make_conditioning(labels, l, embedder).embedding;
    const std::vector<double> null_cond =
        make_conditioning(labels, std::nullopt, embedder).embedding;

    const size_t P = model.param_count();
    std::vector<double> m(P, 0.0), v(P, 0.0), grad(P, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;

    TrainResult res;
    res.loss_curve.reserve(size_t(cfg.steps));
    int over_count = 0;

    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(mix64(cfg.seed, uint64_t(step), 0x747261696eULL));

        std::vector<Tensor> noised(size_t(cfg.batch_size));
        std::vector<Tensor> eps(size_t(cfg.batch_size));
        std::vector<TrainItem> items(size_t(cfg.batch_size));
        std::vector<double> ts(size_t(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            const ImageRecord& rec = dataset[size_t(rng.uniform_int(int(dataset.size())))];
            const bool drop = rng.uniform() < cfg.cond_dropout;
            const std::vector<double>* cond = drop ? &null_cond : &cond_by_label[rec.label];
            const double t = rng.uniform();
            Tensor e(rec.pixels.h, rec.pixels.w, rec.pixels.c);
            for (auto& x : e.v) x = rng.gaussian();
            const double a = sched.signal_coeff(t);
            const double bn = sched.noise_coeff(t);
            Tensor z(rec.pixels.h, rec.pixels.w, rec.pixels.c);
            for (size_t i = 0; i < z.v.size(); ++i)
                z.v[i] = a * rec.pixels.v[i] + bn * e.v[i];
            noised[size_t(b)] = std::move(z);
            eps[size_t(b)] = std::move(e);
            ts[size_t(b)] = t;
            items[size_t(b)] = {&noised[size_t(b)], &eps[size_t(b)], t, cond};
        }

        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = batch_loss(model, items, &grad, n_threads);
        res.loss_curve.push_back(loss);

        const double initial = res.loss_curve.front();
        if (!std::isfinite(loss))
            throw std::runtime_error("finetune: diverged at step " + std::to_string(step) +
                                     " (non-finite loss)");
        if (loss > 10.0 * initial) {
            if (++over_count >= 100)
                throw std::runtime_error(
                    "finetune: diverged at step " + std::to_string(step) + " (loss " +
                    std::to_string(loss) + " > 10x initial " + std::to_string(initial) +
                    " for 100 consecutive steps)");
        } else {
            over_count = 0;
        }

        if (cfg.learning_rate > 0.0) {
            // Linear decay stabilizes the tail of the run.
            const double lr = cfg.learning_rate * (1.0 - 0.9 * double(step) / double(cfg.steps));
            const double bc1 = 1.0 - std::pow(beta1, double(step + 1));
            const double bc2 = 1.0 - std::pow(beta2, double(step + 1));
            std::vector<double>& theta = model.params();
            for (size_t p = 0; p < P; ++p) {
                m[p] = beta1 * m[p] + (1.0 - beta1) * grad[p];
                v[p] = beta2 * v[p] + (1.0 - beta2) * grad[p] * grad[p];
                theta[p] -= lr * (m[p] / bc1) / (std::sqrt(v[p] / bc2) + eps_adam);
            }
        }

        if ((step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            const auto path = out_dir / ("ckpt_" + std::to_string(step + 1) + ".bin");
            model.save(path);
            res.checkpoints.push_back(path);
        }
    }

    res.final_checkpoint = out_dir / "ckpt_final.bin";
    model.save(res.final_checkpoint);
    res.checkpoints.push_back(res.final_checkpoint);

    res.loss_curve_file = out_dir / "loss_curve.tsv";
    std::ofstream curve(res.loss_curve_file, std::ios::trunc);
    curve.precision(17);
    for (size_t i = 0; i < res.loss_curve.size(); ++i)
        curve << i << '\t' << res.loss_curve[i] << '\n';
    if (!curve) throw std::runtime_error("finetune: cannot write loss curve");
    return res;
}

}  // namespace diffmine
