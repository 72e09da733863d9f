#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace diffmine {

// Self-contained SHA-256, used for content addressing of artifacts and
// cache keys. Streaming interface plus one-shot helpers.
class Sha256 {
public:
    Sha256();
    void update(const void* data, size_t n);
    void update(const std::string& s) { update(s.data(), s.size()); }
    // Finalizes and returns the lowercase hex digest. The object must not be
    // updated afterwards.
    std::string hex_digest();

private:
    void process_block(const uint8_t* block);

    uint32_t h_[8];
    uint64_t total_len_ = 0;
    uint8_t buf_[64];
    size_t buf_len_ = 0;
};

std::string sha256_hex(const void* data, size_t n);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::filesystem::path& p);

}  // namespace diffmine
