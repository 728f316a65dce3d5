#include "reba/parcellate.hpp"

#include "reba/errors.hpp"
#include "reba/rng.hpp"

namespace reba::parc {

std::vector<RegionMask> one_hot(const Atlas& atlas) {
    validate_atlas(atlas);
    const GridShape shape = atlas.shape;
    std::vector<RegionMask> masks(std::size_t(atlas.regions));
    for (int r = 1; r <= atlas.regions; ++r) {
        auto& m = masks[std::size_t(r - 1)];
        m.region = r;
        m.shape = shape;
        m.voxels.assign(shape.total(), 0);
        m.dilated.assign(shape.total(), 0);
    }
    for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
        const std::int32_t l = atlas.labels[i];
        if (l > 0) masks[std::size_t(l - 1)].voxels[i] = 1;
    }
    for (auto& m : masks) {
        m.dilated = m.voxels;
        for (int d = 0; d < shape.d; ++d)
            for (int h = 0; h < shape.h; ++h)
                for (int w = 0; w < shape.w; ++w) {
                    const std::size_t i = shape.index(d, h, w);
                    if (m.voxels[i]) continue;
                    const bool touch =
                        (d > 0 && m.voxels[shape.index(d - 1, h, w)]) ||
                        (d + 1 < shape.d && m.voxels[shape.index(d + 1, h, w)]) ||
                        (h > 0 && m.voxels[shape.index(d, h - 1, w)]) ||
                        (h + 1 < shape.h && m.voxels[shape.index(d, h + 1, w)]) ||
                        (w > 0 && m.voxels[shape.index(d, h, w - 1)]) ||
                        (w + 1 < shape.w && m.voxels[shape.index(d, h, w + 1)]);
                    if (touch) m.dilated[i] = 1;
                }
        for (std::size_t i = 0; i < m.voxels.size(); ++i) {
            m.count += m.voxels[i];
            m.dilated_count += m.dilated[i];
        }
    }
    return masks;
}

std::uint64_t noise_seed(std::uint64_t base_seed, const std::string& subject_id, int region,
                         const std::string& op_tag) {
    return derive_seed(derive_seed(base_seed, op_tag + ":" + subject_id), "region",
                       std::uint64_t(region));
}

namespace {

Volume replace_where(const Volume& volume, const RegionMask& mask, const NoiseSpec& noise,
                     const std::vector<std::uint8_t>& grid, bool replace_inside) {
    if (volume.shape != mask.shape)
        throw ValidationError("region mask shape does not match volume shape");
    if (noise.eta < 0) throw ValidationError("noise amplitude must be >= 0");
    Volume out = volume;
    Rng rng(noise.seed);
    const bool noisy = noise.eta != 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if ((grid[i] != 0) == replace_inside)
            out.voxels[i] = noisy ? float(noise.eta * rng.next_normal()) : 0.0f;
    }
    return out;
}

} // namespace

Volume extract_region(const Volume& volume, const RegionMask& mask, const NoiseSpec& noise,
                      bool use_dilated) {
    return replace_where(volume, mask, noise, use_dilated ? mask.dilated : mask.voxels,
                         /*replace_inside=*/false);
}

Volume occlude_region(const Volume& volume, const RegionMask& mask, const NoiseSpec& noise,
                      bool use_dilated) {
    return replace_where(volume, mask, noise, use_dilated ? mask.dilated : mask.voxels,
                         /*replace_inside=*/true);
}

} // namespace reba::parc
