#include "reba/cohort.hpp"

#include "reba/csv.hpp"
#include "reba/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace reba {

std::string to_string(Split s) {
    return s == Split::train ? "train" : "test";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split: " + s);
}

std::string disease_cohort_tag(const std::string& disease) {
    return "disease:" + disease;
}

std::string SubjectRecord::disease_name() const {
    if (cohort.rfind("disease:", 0) == 0) return cohort.substr(8);
    return {};
}

std::vector<std::vector<int>> NetworkMap::members() const {
    std::vector<std::vector<int>> out;
    out.resize(std::size_t(networks));
    for (int r = 1; r <= regions(); ++r) {
        const int k = network_of(r);
        out[std::size_t(k - 1)].push_back(r);
    }
    return out;
}

void NetworkMap::validate() const {
    if (networks < 1) throw ValidationError("network map: K must be >= 1");
    for (int r = 1; r <= regions(); ++r) {
        const int k = region_to_network[std::size_t(r - 1)];
        if (k < 1 || k > networks)
            throw ValidationError("network map: region " + std::to_string(r) +
                                  " maps to invalid network " + std::to_string(k));
    }
    for (const auto& m : members()) {
        if (m.empty()) throw ValidationError("network map: a network has no member region");
    }
}

std::string to_string(Relevance r) {
    switch (r) {
        case Relevance::strong: return "strong";
        case Relevance::potential: return "potential";
        default: return "none";
    }
}

Relevance relevance_from_string(const std::string& s) {
    if (s == "strong") return Relevance::strong;
    if (s == "potential" || s == "potentially") return Relevance::potential;
    if (s == "none") return Relevance::none;
    throw ValidationError("unknown relevance level: " + s);
}

void DiseasePrior::validate(int region_count) const {
    if (regions.empty())
        throw ValidationError("disease prior '" + disease + "': empty region set");
    for (int r : regions) {
        if (r < 1 || r > region_count)
            throw ValidationError("disease prior '" + disease + "': region id " +
                                  std::to_string(r) + " outside 1.." + std::to_string(region_count));
    }
}

double DatasetParams::hc_jitter_bound() const {
    double max_offset = 0.0;
    for (double b : network_aging_offsets) max_offset = std::max(max_offset, std::fabs(b));
    return max_offset + network_jitter + region_jitter;
}

void DatasetParams::validate() const {
    if (shape.d < 8 || shape.h < 8 || shape.w < 8)
        throw ValidationError("dataset: every dimension must be >= 8");
    if (regions < 1) throw ValidationError("dataset: R must be >= 1");
    if (networks < 1 || networks > regions)
        throw ValidationError("dataset: need 1 <= K <= R");
    if (int(network_aging_offsets.size()) != networks)
        throw ValidationError("dataset: network_aging_offsets must have one entry per network");
    if (n_hc_train < 1 || n_hc_test < 0)
        throw ValidationError("dataset: need at least one HC training subject");
    if (age_max <= age_min) throw ValidationError("dataset: age_max must exceed age_min");
    if (network_jitter < 0 || region_jitter < 0 || noise_sigma < 0 || decay_per_year < 0)
        throw ValidationError("dataset: jitters, noise and decay must be >= 0");
    std::set<std::string> names;
    for (const auto& d : diseases) {
        if (d.name.empty() || d.name == kCohortHC)
            throw ValidationError("dataset: bad disease name");
        if (!names.insert(d.name).second)
            throw ValidationError("dataset: duplicate disease name " + d.name);
        if (d.count < 0) throw ValidationError("dataset: negative cohort size for " + d.name);
        if (d.regions.empty())
            throw ValidationError("disease '" + d.name + "': empty prior region set");
        for (int r : d.regions) {
            if (r < 1 || r > regions)
                throw ValidationError("disease '" + d.name + "': offset region " +
                                      std::to_string(r) + " exceeds region count " +
                                      std::to_string(regions));
        }
    }
}

const SubjectRecord* CohortManifest::find(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return &s;
    return nullptr;
}

std::vector<const SubjectRecord*> CohortManifest::select(Split split) const {
    std::vector<const SubjectRecord*> out;
    for (const auto& s : subjects)
        if (s.split == split) out.push_back(&s);
    return out;
}

std::vector<const SubjectRecord*> CohortManifest::select(Split split, const std::string& cohort) const {
    std::vector<const SubjectRecord*> out;
    for (const auto& s : subjects)
        if (s.split == split && s.cohort == cohort) out.push_back(&s);
    return out;
}

void CohortManifest::validate() const {
    std::set<std::string> ids;
    const double bound = params.hc_jitter_bound() + 1e-9;
    for (const auto& s : subjects) {
        if (!ids.insert(s.id).second)
            throw ValidationError("manifest: duplicate subject id " + s.id);
        if (int(s.planted_age.size()) != regions)
            throw ValidationError("manifest: planted age vector length mismatch for " + s.id);
        if (s.age < params.age_min - 1e-9 || s.age > params.age_max + 1e-9)
            throw ValidationError("manifest: age outside declared range for " + s.id);
        if (s.is_hc()) {
            for (double p : s.planted_age) {
                if (std::fabs(p - s.age) > bound)
                    throw ValidationError("manifest: HC jitter bound violated for " + s.id);
            }
        }
        if (!s.is_hc() && s.split == Split::train)
            throw ValidationError("manifest: disease subject " + s.id + " in training split");
    }
}

namespace dataset {

void write_manifest_csv(const std::filesystem::path& path, const CohortManifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "id,age,cohort,split";
    for (int r = 1; r <= m.regions; ++r) out << ",planted_age_r" << r;
    out << "\n";
    for (const auto& s : m.subjects) {
        out << s.id << ',' << csv::format_double(s.age) << ',' << s.cohort << ','
            << to_string(s.split);
        for (double p : s.planted_age) out << ',' << csv::format_double(p);
        out << "\n";
    }
}

CohortManifest read_manifest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty manifest " + path.string());
    const auto header = csv::split_row(line);
    if (header.size() < 5 || header[0] != "id")
        throw ValidationError("bad manifest header in " + path.string());
    const int regions = int(header.size()) - 4;
    CohortManifest m;
    m.regions = regions;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split_row(line);
        if (int(f.size()) != regions + 4)
            throw ValidationError("manifest row width mismatch in " + path.string());
        SubjectRecord s;
        s.id = f[0];
        s.age = csv::parse_double(f[1]);
        s.cohort = f[2];
        s.split = split_from_string(f[3]);
        s.planted_age.reserve(std::size_t(regions));
        for (int r = 0; r < regions; ++r) s.planted_age.push_back(csv::parse_double(f[std::size_t(r) + 4]));
        m.subjects.push_back(std::move(s));
    }
    return m;
}

void write_networks_json(const std::filesystem::path& path, const NetworkMap& nm) {
    nlohmann::json j;
    j["networks"] = nm.networks;
    nlohmann::json map = nlohmann::json::object();
    for (int r = 1; r <= nm.regions(); ++r) map[std::to_string(r)] = nm.network_of(r);
    j["region_to_network"] = map;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

NetworkMap read_networks_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    NetworkMap nm;
    nm.networks = j.at("networks").get<int>();
    const auto& map = j.at("region_to_network");
    nm.region_to_network.assign(map.size(), 0);
    for (auto it = map.begin(); it != map.end(); ++it) {
        const int r = std::stoi(it.key());
        if (r < 1 || r > int(map.size()))
            throw ValidationError("networks.json: region id out of range");
        nm.region_to_network[std::size_t(r - 1)] = it.value().get<int>();
    }
    nm.validate();
    return nm;
}

void write_priors_json(const std::filesystem::path& path, const std::vector<DiseasePrior>& priors) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& p : priors) {
        nlohmann::json rel = nlohmann::json::object();
        for (const auto& [r, level] : p.relevance) rel[std::to_string(r)] = to_string(level);
        j[p.disease] = {{"regions", p.regions}, {"relevance", rel}};
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::vector<DiseasePrior> read_priors_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    std::vector<DiseasePrior> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        DiseasePrior p;
        p.disease = it.key();
        p.regions = it.value().at("regions").get<std::vector<int>>();
        if (it.value().contains("relevance")) {
            for (auto rit = it.value().at("relevance").begin(); rit != it.value().at("relevance").end(); ++rit)
                p.relevance[std::stoi(rit.key())] = relevance_from_string(rit.value().get<std::string>());
        }
        out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end(),
              [](const DiseasePrior& a, const DiseasePrior& b) { return a.disease < b.disease; });
    return out;
}

void write_atlas_meta_json(const std::filesystem::path& path, const CohortManifest& m) {
    nlohmann::json gen;
    const auto& p = m.params;
    gen["age_min"] = p.age_min;
    gen["age_max"] = p.age_max;
    gen["network_aging_offsets"] = p.network_aging_offsets;
    gen["network_jitter"] = p.network_jitter;
    gen["region_jitter"] = p.region_jitter;
    gen["base_intensity"] = p.base_intensity;
    gen["decay_per_year"] = p.decay_per_year;
    gen["noise_sigma"] = p.noise_sigma;
    gen["n_hc_train"] = p.n_hc_train;
    gen["n_hc_test"] = p.n_hc_test;
    nlohmann::json dis = nlohmann::json::array();
    for (const auto& d : p.diseases)
        dis.push_back({{"name", d.name},
                       {"count", d.count},
                       {"offset_years", d.offset_years},
                       {"regions", d.regions}});
    gen["diseases"] = dis;

    nlohmann::json j;
    j["shape"] = {m.shape.d, m.shape.h, m.shape.w};
    j["regions"] = m.regions;
    j["networks"] = m.networks;
    j["seed"] = m.seed;
    j["generation"] = gen;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::filesystem::path Loaded::volume_path(const std::string& id) const {
    return dir / "volumes" / (id + ".vol");
}

Volume Loaded::load_volume(const std::string& id) const {
    return io::read_volume(volume_path(id));
}

Loaded load(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest.csv"))
        throw MissingArtifactError("dataset not found at " + dir.string() +
                                   " (run gen-data first)");
    Loaded ds;
    ds.dir = dir;
    ds.manifest = read_manifest_csv(dir / "manifest.csv");
    ds.atlas = io::read_atlas(dir / "atlas.vol");
    ds.networks = read_networks_json(dir / "networks.json");
    ds.priors = read_priors_json(dir / "priors.json");

    std::ifstream in(dir / "atlas.json");
    if (!in) throw MissingArtifactError("cannot open " + (dir / "atlas.json").string());
    nlohmann::json meta;
    in >> meta;
    ds.manifest.shape = GridShape{meta.at("shape")[0], meta.at("shape")[1], meta.at("shape")[2]};
    ds.manifest.regions = meta.at("regions").get<int>();
    ds.manifest.networks = meta.at("networks").get<int>();
    ds.manifest.seed = meta.at("seed").get<std::uint64_t>();
    auto& p = ds.manifest.params;
    const auto& gen = meta.at("generation");
    p.shape = ds.manifest.shape;
    p.regions = ds.manifest.regions;
    p.networks = ds.manifest.networks;
    p.seed = ds.manifest.seed;
    p.age_min = gen.at("age_min").get<double>();
    p.age_max = gen.at("age_max").get<double>();
    p.network_aging_offsets = gen.at("network_aging_offsets").get<std::vector<double>>();
    p.network_jitter = gen.at("network_jitter").get<double>();
    p.region_jitter = gen.at("region_jitter").get<double>();
    p.base_intensity = gen.at("base_intensity").get<double>();
    p.decay_per_year = gen.at("decay_per_year").get<double>();
    p.noise_sigma = gen.at("noise_sigma").get<double>();
    p.n_hc_train = gen.at("n_hc_train").get<int>();
    p.n_hc_test = gen.at("n_hc_test").get<int>();
    p.diseases.clear();
    for (const auto& d : gen.at("diseases")) {
        DiseaseSpec spec;
        spec.name = d.at("name").get<std::string>();
        spec.count = d.at("count").get<int>();
        spec.offset_years = d.at("offset_years").get<double>();
        spec.regions = d.at("regions").get<std::vector<int>>();
        p.diseases.push_back(std::move(spec));
    }

    if (ds.atlas.regions != ds.manifest.regions)
        throw ValidationError("dataset: atlas region count disagrees with atlas.json");
    validate_atlas(ds.atlas);
    if (ds.networks.regions() != ds.manifest.regions ||
        ds.networks.networks != ds.manifest.networks)
        throw ValidationError("dataset: networks.json disagrees with atlas.json");
    for (const auto& prior : ds.priors) prior.validate(ds.manifest.regions);
    ds.manifest.validate();
    return ds;
}

} // namespace dataset
} // namespace reba
