#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <string>

namespace reba {

// Minimal SHA-256 (FIPS 180-4). Used for artifact integrity hashes and
// config fingerprints; not a performance-critical path.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    std::array<std::uint8_t, 32> digest(); // finalizes; do not update afterwards

private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> state_;
    std::uint64_t total_len_ = 0;
    std::array<std::uint8_t, 64> buffer_{};
    std::size_t buffer_len_ = 0;
    bool finalized_ = false;
};

std::string to_hex(const std::array<std::uint8_t, 32>& digest);
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file_hex(const std::filesystem::path& path);

} // namespace reba
