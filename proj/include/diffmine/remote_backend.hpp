#pragma once

#include <memory>
#include <string>

#include "diffmine/core_model.hpp"

namespace diffmine {

// HTTP adapter for an out-of-process denoiser (the production latent
// diffusion model runs behind this contract). JSON over four endpoints:
//
//   GET  /info     -> {"id": str, "cond_dim": int, "scale_factor": int}
//   POST /predict  <- {"shape":[h,w,c], "data":[...], "t": float,
//                      "prompt": str, "is_null": bool}
//                  -> {"shape":[h,w,c], "data":[...]}
//   POST /encode   <- {"shape":[H,W,C], "data":[...]}
//                  -> {"shape":[h,w,c], "data":[...], "scale_factor": int}
//   POST /decode   <- {"shape":[h,w,c], "data":[...], "scale_factor": int}
//                  -> {"shape":[H,W,C], "data":[...]}
//
// predict carries the prompt text; embedding happens server-side.
class RemoteDenoiserBackend : public DenoiserBackend {
public:
    RemoteDenoiserBackend(const std::string& host, int port, int timeout_seconds = 120);
    ~RemoteDenoiserBackend() override;

    LatentImage predict(const LatentImage& noised, double t, const Conditioning& cond) override;
    LatentImage encode(const Tensor& pixels) override;
    Tensor decode(const LatentImage& latent) override;
    int cond_dim() const override { return cond_dim_; }
    bool concurrent_predict() const override { return false; }
    std::string id() const override { return id_; }

    int scale_factor() const { return scale_factor_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string id_;
    int cond_dim_ = 0;
    int scale_factor_ = 1;
};

}  // namespace diffmine
