#include "diffmine/remote_backend.hpp"

#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace diffmine {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor& t) {
    json j;
    j["shape"] = {t.h, t.w, t.c};
    j["data"] = t.v;
    return j;
}

Tensor tensor_from_json(const json& j) {
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3)
        throw std::runtime_error("remote backend: bad tensor shape");
    Tensor t(shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>());
    const auto& data = j.at("data");
    if (data.size() != t.v.size())
        throw std::runtime_error("remote backend: tensor data length mismatch");
    for (size_t i = 0; i < t.v.size(); ++i) t.v[i] = data[i].get<double>();
    return t;
}

}  // namespace

struct RemoteDenoiserBackend::Impl {
    httplib::Client client;
    Impl(const std::string& host, int port) : client(host, port) {}

    json post(const std::string& path, const json& body) {
        auto res = client.Post(path, body.dump(), "application/json");
        if (!res)
            throw std::runtime_error("remote backend: no response from " + path +
                                     " (error " + httplib::to_string(res.error()) + ")");
        if (res->status != 200)
            throw std::runtime_error("remote backend: " + path + " returned status " +
                                     std::to_string(res->status) + ": " + res->body);
        return json::parse(res->body);
    }
};

RemoteDenoiserBackend::RemoteDenoiserBackend(const std::string& host, int port,
                                             int timeout_seconds)
    : impl_(std::make_unique<Impl>(host, port)) {
    impl_->client.set_read_timeout(timeout_seconds, 0);
    impl_->client.set_write_timeout(timeout_seconds, 0);
    auto res = impl_->client.Get("/info");
    if (!res || res->status != 200)
        throw std::runtime_error("remote backend: /info unavailable at " + host + ":" +
                                 std::to_string(port));
    const json info = json::parse(res->body);
    id_ = "remote/" + info.at("id").get<std::string>();
    cond_dim_ = info.at("cond_dim").get<int>();
    scale_factor_ = info.value("scale_factor", 1);
}

RemoteDenoiserBackend::~RemoteDenoiserBackend() = default;

LatentImage RemoteDenoiserBackend::predict(const LatentImage& noised, double t,
                                           const Conditioning& cond) {
    json req = tensor_to_json(noised.values);
    req["t"] = t;
    req["prompt"] = cond.text;
    req["is_null"] = cond.is_null;
    const json resp = impl_->post("/predict", req);
    LatentImage out;
    out.values = tensor_from_json(resp);
    out.scale_factor = noised.scale_factor;
    return out;
}

LatentImage RemoteDenoiserBackend::encode(const Tensor& pixels) {
    const json resp = impl_->post("/encode", tensor_to_json(pixels));
    LatentImage out;
    out.values = tensor_from_json(resp);
    out.scale_factor = resp.value("scale_factor", scale_factor_);
    return out;
}

Tensor RemoteDenoiserBackend::decode(const LatentImage& latent) {
    json req = tensor_to_json(latent.values);
    req["scale_factor"] = latent.scale_factor;
    return tensor_from_json(impl_->post("/decode", req));
}

}  // namespace diffmine
