#pragma once

#include "reba/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reba::parc {

// One-hot mask for one region plus its 1-voxel 6-connected dilation. The
// undilated masks of an atlas partition the foreground; dilations may overlap
// each other but never remove voxels.
struct RegionMask {
    int region = 0;
    GridShape shape;
    std::vector<std::uint8_t> voxels;  // 1 iff atlas label == region
    std::vector<std::uint8_t> dilated; // voxels plus the face-adjacent shell
    std::size_t count = 0;
    std::size_t dilated_count = 0;
};

struct NoiseSpec {
    double eta = 0.1;       // replacement noise amplitude
    std::uint64_t seed = 0; // fully derived; see noise_seed below
};

std::vector<RegionMask> one_hot(const Atlas& atlas);

// Replacement-noise sub-stream for one (subject, region, op) triple, so
// extraction and occlusion are reproducible but independent of each other.
std::uint64_t noise_seed(std::uint64_t base_seed, const std::string& subject_id, int region,
                         const std::string& op_tag);

// Keeps voxels inside the mask (dilated by default) and replaces the rest by
// eta * z with fresh standard normals, drawn in ascending voxel order. No
// draws happen when eta == 0.
Volume extract_region(const Volume& volume, const RegionMask& mask, const NoiseSpec& noise,
                      bool use_dilated = true);

// Complement of extract_region: replaces the masked voxels (undilated by
// default) with noise and keeps everything else.
Volume occlude_region(const Volume& volume, const RegionMask& mask, const NoiseSpec& noise,
                      bool use_dilated = false);

} // namespace reba::parc
