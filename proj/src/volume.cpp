#include "reba/volume.hpp"

#include "reba/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "volume container io assumes a little-endian host");

namespace reba {

Volume make_volume(GridShape shape, float fill) {
    Volume v;
    v.shape = shape;
    v.voxels.assign(shape.total(), fill);
    return v;
}

void validate_atlas(const Atlas& atlas) {
    if (atlas.regions < 1) throw ValidationError("atlas: region count must be >= 1");
    if (atlas.labels.size() != atlas.shape.total())
        throw ValidationError("atlas: label buffer does not match shape");
    std::vector<std::size_t> counts(std::size_t(atlas.regions) + 1, 0);
    for (std::int32_t l : atlas.labels) {
        if (l < 0 || l > atlas.regions)
            throw ValidationError("atlas: label " + std::to_string(l) + " outside [0, R]");
        ++counts[std::size_t(l)];
    }
    for (int r = 1; r <= atlas.regions; ++r) {
        if (counts[std::size_t(r)] == 0)
            throw ValidationError("atlas: region " + std::to_string(r) + " owns no voxel");
    }
}

namespace io {

namespace {

nlohmann::json parse_grid_header(const std::string& line, const char* expected_dtype) {
    nlohmann::json j = nlohmann::json::parse(line);
    if (!j.contains("shape") || !j.contains("dtype"))
        throw ValidationError("volume container: header missing shape/dtype");
    if (j.at("dtype").get<std::string>() != expected_dtype)
        throw ValidationError("volume container: expected dtype " + std::string(expected_dtype) +
                              ", got " + j.at("dtype").get<std::string>());
    return j;
}

GridShape shape_from_header(const nlohmann::json& j) {
    const auto dims = j.at("shape").get<std::vector<int>>();
    if (dims.size() != 3 || dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw ValidationError("volume container: bad shape");
    return GridShape{dims[0], dims[1], dims[2]};
}

} // namespace

void write_container(const std::filesystem::path& path, const char magic[8],
                     const std::string& header_json, const void* payload, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out.write(magic, 8);
    const std::uint32_t version = kContainerVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint32_t reserved = 0;
    out.write(reinterpret_cast<const char*>(&reserved), 4);
    out.write(header_json.data(), std::streamsize(header_json.size()));
    out.put('\n');
    out.write(static_cast<const char*>(payload), std::streamsize(bytes));
    if (!out) throw ValidationError("short write: " + path.string());
}

Container read_container(const std::filesystem::path& path, const char magic[8]) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open: " + path.string());
    char got[8];
    in.read(got, 8);
    if (!in || std::memcmp(got, magic, 8) != 0)
        throw ValidationError("bad magic in " + path.string());
    Container c;
    std::uint32_t reserved = 0;
    in.read(reinterpret_cast<char*>(&c.version), 4);
    in.read(reinterpret_cast<char*>(&reserved), 4);
    if (!in || c.version != kContainerVersion)
        throw ValidationError("unsupported container version in " + path.string());
    if (!std::getline(in, c.header_json))
        throw ValidationError("missing header line in " + path.string());
    c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return c;
}

void write_volume(const std::filesystem::path& path, const Volume& v) {
    nlohmann::json j{{"shape", {v.shape.d, v.shape.h, v.shape.w}}, {"dtype", "f32le"}};
    write_container(path, kVolumeMagic, j.dump(), v.voxels.data(), v.voxels.size() * sizeof(float));
}

Volume read_volume(const std::filesystem::path& path) {
    const Container c = read_container(path, kVolumeMagic);
    const auto j = parse_grid_header(c.header_json, "f32le");
    Volume v;
    v.shape = shape_from_header(j);
    if (c.payload.size() != v.shape.total() * sizeof(float))
        throw ValidationError("payload size mismatch in " + path.string());
    v.voxels.resize(v.shape.total());
    std::memcpy(v.voxels.data(), c.payload.data(), c.payload.size());
    return v;
}

void write_atlas(const std::filesystem::path& path, const Atlas& a) {
    nlohmann::json j{{"shape", {a.shape.d, a.shape.h, a.shape.w}}, {"dtype", "i32le"}};
    write_container(path, kVolumeMagic, j.dump(), a.labels.data(),
                    a.labels.size() * sizeof(std::int32_t));
}

Atlas read_atlas(const std::filesystem::path& path) {
    const Container c = read_container(path, kVolumeMagic);
    const auto j = parse_grid_header(c.header_json, "i32le");
    Atlas a;
    a.shape = shape_from_header(j);
    if (c.payload.size() != a.shape.total() * sizeof(std::int32_t))
        throw ValidationError("payload size mismatch in " + path.string());
    a.labels.resize(a.shape.total());
    std::memcpy(a.labels.data(), c.payload.data(), c.payload.size());
    std::int32_t max_label = 0;
    for (std::int32_t l : a.labels) max_label = std::max(max_label, l);
    a.regions = int(max_label);
    return a;
}

} // namespace io
} // namespace reba
