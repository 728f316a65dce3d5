#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace reba {

struct GridShape {
    int d = 0, h = 0, w = 0;

    std::size_t total() const { return std::size_t(d) * std::size_t(h) * std::size_t(w); }
    bool operator==(const GridShape&) const = default;

    // Linear index, D-major with W fastest.
    std::size_t index(int di, int hi, int wi) const {
        return (std::size_t(di) * std::size_t(h) + std::size_t(hi)) * std::size_t(w) + std::size_t(wi);
    }
};

// A dense scalar grid of voxel intensities, the unit consumed by every model
// and mask operation. Values are stored as f32 to match the on-disk format;
// all arithmetic downstream promotes to double.
struct Volume {
    GridShape shape;
    std::vector<float> voxels;

    float& at(int d, int h, int w) { return voxels[shape.index(d, h, w)]; }
    float at(int d, int h, int w) const { return voxels[shape.index(d, h, w)]; }
};

Volume make_volume(GridShape shape, float fill = 0.0f);

// Integer region labels per voxel: 0 is background, 1..regions are regions.
struct Atlas {
    GridShape shape;
    std::vector<std::int32_t> labels;
    int regions = 0;

    std::int32_t at(int d, int h, int w) const { return labels[shape.index(d, h, w)]; }
};

// Throws ValidationError if labels fall outside [0, regions] or a region id
// in 1..regions owns no voxel.
void validate_atlas(const Atlas& atlas);

namespace io {

// On-disk container: 16-byte header (8-byte magic, u32le version, 4 zero
// bytes), one newline-terminated JSON line, then the raw payload.
// Volumes use {"shape":[D,H,W],"dtype":"f32le"}, atlases "i32le"; payload is
// little-endian, D-major with W fastest.
inline constexpr char kVolumeMagic[8] = {'R', 'E', 'B', 'A', 'V', 'O', 'L', '\0'};
inline constexpr char kCheckpointMagic[8] = {'R', 'E', 'B', 'A', 'C', 'K', 'P', '\0'};
inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::filesystem::path& path, const char magic[8],
                     const std::string& header_json, const void* payload, std::size_t bytes);

struct Container {
    std::string header_json;
    std::vector<std::uint8_t> payload;
    std::uint32_t version = 0;
};

Container read_container(const std::filesystem::path& path, const char magic[8]);

void write_volume(const std::filesystem::path& path, const Volume& v);
Volume read_volume(const std::filesystem::path& path);

void write_atlas(const std::filesystem::path& path, const Atlas& a);
Atlas read_atlas(const std::filesystem::path& path);

} // namespace io
} // namespace reba
