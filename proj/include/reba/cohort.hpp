#pragma once

#include "reba/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace reba {

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

inline constexpr const char* kCohortHC = "HC";

// Cohort tag is "HC" or "disease:<name>".
std::string disease_cohort_tag(const std::string& disease);

struct SubjectRecord {
    std::string id;
    double age = 0.0; // chronological, years
    std::string cohort = kCohortHC;
    Split split = Split::train;
    // Synthetic ground truth, one entry per region; written to the manifest
    // for evaluation oracles and never exposed to training code.
    std::vector<double> planted_age;

    bool is_hc() const { return cohort == kCohortHC; }
    std::string disease_name() const; // empty for HC
};

// Total map region id (1..R) -> network id (1..K).
struct NetworkMap {
    int networks = 0;
    std::vector<int> region_to_network; // index r-1

    int regions() const { return int(region_to_network.size()); }
    int network_of(int region) const { return region_to_network[std::size_t(region - 1)]; }
    std::vector<std::vector<int>> members() const; // index k-1 -> region ids
    void validate() const;
};

enum class Relevance { strong, potential, none };

std::string to_string(Relevance r);
Relevance relevance_from_string(const std::string& s);

struct DiseasePrior {
    std::string disease;
    std::vector<int> regions; // associated region ids, used by the NDC metric
    std::map<int, Relevance> relevance;

    void validate(int region_count) const;
};

struct DiseaseSpec {
    std::string name;
    int count = 0;
    double offset_years = 8.0; // added to planted age inside `regions`
    std::vector<int> regions;
};

// Generation parameters for one synthetic dataset. Defaults are the shipped
// desk-scale configuration.
struct DatasetParams {
    GridShape shape{32, 32, 32};
    int regions = 8;
    int networks = 3;
    std::uint64_t seed = 12345;

    int n_hc_train = 100;
    int n_hc_test = 50;
    double age_min = 20.0;
    double age_max = 80.0;

    // Planted regional age = chronological age
    //   + network_aging_offsets[network]          (systematic rate difference)
    //   + U(-network_jitter, network_jitter)      (per subject x network)
    //   + U(-region_jitter, region_jitter)        (per subject x region)
    //   + disease offset inside its prior regions.
    std::vector<double> network_aging_offsets{-8.0, 0.0, 8.0};
    double network_jitter = 4.0;
    double region_jitter = 1.5;

    // Voxel intensity inside region r: base - decay_per_year * planted_age[r]
    // plus N(0, noise_sigma^2); background is exactly 0. The default base sits
    // at decay * mean age, so a mean-aged region matches the replacement-noise
    // level and the occlusion response of a region is proportional to its
    // systematic age offset rather than to a global brightness artifact.
    double base_intensity = 0.4;
    double decay_per_year = 0.008;
    double noise_sigma = 0.02;

    // Prior sets align with whole functional networks (1 and 3).
    std::vector<DiseaseSpec> diseases{
        {"diseaseA", 30, 8.0, {1, 2, 3}},
        {"diseaseB", 30, 8.0, {7, 8}},
    };

    // Bound on |planted - chronological| for HC subjects.
    double hc_jitter_bound() const;
    void validate() const;
};

struct CohortManifest {
    std::vector<SubjectRecord> subjects;
    GridShape shape;
    int regions = 0;
    int networks = 0;
    std::uint64_t seed = 0;
    DatasetParams params;

    const SubjectRecord* find(const std::string& id) const;
    std::vector<const SubjectRecord*> select(Split split) const;
    std::vector<const SubjectRecord*> select(Split split, const std::string& cohort) const;
    void validate() const; // unique ids, disjoint splits, jitter bound, ranges
};

// Dataset directory layout:
//   manifest.csv  atlas.vol  atlas.json  networks.json  priors.json  volumes/<id>.vol
namespace dataset {

void write_manifest_csv(const std::filesystem::path& path, const CohortManifest& m);
CohortManifest read_manifest_csv(const std::filesystem::path& path);

void write_networks_json(const std::filesystem::path& path, const NetworkMap& nm);
NetworkMap read_networks_json(const std::filesystem::path& path);

void write_priors_json(const std::filesystem::path& path, const std::vector<DiseasePrior>& priors);
std::vector<DiseasePrior> read_priors_json(const std::filesystem::path& path);

void write_atlas_meta_json(const std::filesystem::path& path, const CohortManifest& m);

struct Loaded {
    CohortManifest manifest;
    Atlas atlas;
    NetworkMap networks;
    std::vector<DiseasePrior> priors;
    std::filesystem::path dir;

    std::filesystem::path volume_path(const std::string& id) const;
    Volume load_volume(const std::string& id) const;
};

Loaded load(const std::filesystem::path& dir);

} // namespace dataset
} // namespace reba
