#include "reba/datagen.hpp"

#include "reba/errors.hpp"
#include "reba/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace reba::datagen {

namespace {

struct Voxel {
    int d, h, w;
};

std::vector<Voxel> ellipsoid_foreground(GridShape shape) {
    const double cd = (shape.d - 1) / 2.0, ch = (shape.h - 1) / 2.0, cw = (shape.w - 1) / 2.0;
    const double ad = 0.8 * shape.d / 2.0, ah = 0.8 * shape.h / 2.0, aw = 0.8 * shape.w / 2.0;
    std::vector<Voxel> fg;
    for (int d = 0; d < shape.d; ++d)
        for (int h = 0; h < shape.h; ++h)
            for (int w = 0; w < shape.w; ++w) {
                const double x = (d - cd) / ad, y = (h - ch) / ah, z = (w - cw) / aw;
                if (x * x + y * y + z * z <= 1.0) fg.push_back({d, h, w});
            }
    return fg;
}

struct Centroid {
    double d, h, w;
};

std::vector<int> assign_nearest(const std::vector<Voxel>& fg, const std::vector<Centroid>& c) {
    std::vector<int> owner(fg.size(), 0);
    for (std::size_t i = 0; i < fg.size(); ++i) {
        double best = 1e300;
        int arg = 0;
        for (std::size_t j = 0; j < c.size(); ++j) {
            const double dd = fg[i].d - c[j].d, dh = fg[i].h - c[j].h, dw = fg[i].w - c[j].w;
            const double dist = dd * dd + dh * dh + dw * dw;
            if (dist < best) {
                best = dist;
                arg = int(j);
            }
        }
        owner[i] = arg;
    }
    return owner;
}

bool all_nonempty(const std::vector<int>& owner, int regions) {
    std::vector<char> seen(std::size_t(regions), 0);
    for (int o : owner) seen[std::size_t(o)] = 1;
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

} // namespace

std::pair<Atlas, NetworkMap> make_synthetic_atlas(GridShape shape, int regions, int networks,
                                                  std::uint64_t seed) {
    if (shape.d < 8 || shape.h < 8 || shape.w < 8)
        throw ValidationError("make_synthetic_atlas: every dimension must be >= 8");
    if (regions < 1) throw ValidationError("make_synthetic_atlas: R must be >= 1");
    if (networks < 1 || networks > regions)
        throw ValidationError("make_synthetic_atlas: need 1 <= K <= R");

    const auto fg = ellipsoid_foreground(shape);
    if (std::size_t(regions) > fg.size())
        throw ValidationError("make_synthetic_atlas: R exceeds foreground voxel count");

    Rng rng(derive_seed(seed, "atlas-centroids"));
    std::set<std::size_t> picked;
    std::vector<Centroid> centroids;
    while (centroids.size() < std::size_t(regions)) {
        const std::size_t i = std::size_t(rng.next_below(fg.size()));
        if (!picked.insert(i).second) continue;
        centroids.push_back({double(fg[i].d), double(fg[i].h), double(fg[i].w)});
    }

    // Lloyd relaxation balances region sizes; bail out if a region would empty.
    std::vector<int> owner = assign_nearest(fg, centroids);
    for (int iter = 0; iter < 3; ++iter) {
        std::vector<Centroid> next(centroids.size(), {0, 0, 0});
        std::vector<std::size_t> count(centroids.size(), 0);
        for (std::size_t i = 0; i < fg.size(); ++i) {
            auto& c = next[std::size_t(owner[i])];
            c.d += fg[i].d;
            c.h += fg[i].h;
            c.w += fg[i].w;
            ++count[std::size_t(owner[i])];
        }
        for (std::size_t j = 0; j < next.size(); ++j) {
            next[j].d /= double(count[j]);
            next[j].h /= double(count[j]);
            next[j].w /= double(count[j]);
        }
        const std::vector<int> candidate = assign_nearest(fg, next);
        if (!all_nonempty(candidate, regions)) break;
        centroids = next;
        owner = candidate;
    }

    // Relabel along depth so contiguous id blocks are spatially coherent.
    std::vector<Centroid> finals(centroids.size(), {0, 0, 0});
    std::vector<std::size_t> count(centroids.size(), 0);
    for (std::size_t i = 0; i < fg.size(); ++i) {
        auto& c = finals[std::size_t(owner[i])];
        c.d += fg[i].d;
        c.h += fg[i].h;
        c.w += fg[i].w;
        ++count[std::size_t(owner[i])];
    }
    for (std::size_t j = 0; j < finals.size(); ++j) {
        finals[j].d /= double(count[j]);
        finals[j].h /= double(count[j]);
        finals[j].w /= double(count[j]);
    }
    std::vector<int> order(centroids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& ca = finals[std::size_t(a)];
        const auto& cb = finals[std::size_t(b)];
        return std::tie(ca.d, ca.h, ca.w) < std::tie(cb.d, cb.h, cb.w);
    });
    std::vector<int> new_label(centroids.size(), 0); // old owner -> region id 1..R
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        new_label[std::size_t(order[rank])] = int(rank) + 1;

    Atlas atlas;
    atlas.shape = shape;
    atlas.regions = regions;
    atlas.labels.assign(shape.total(), 0);
    for (std::size_t i = 0; i < fg.size(); ++i)
        atlas.labels[shape.index(fg[i].d, fg[i].h, fg[i].w)] = new_label[std::size_t(owner[i])];
    validate_atlas(atlas);

    // Networks are consecutive id blocks; the first R % K networks take the
    // extra region.
    NetworkMap nm;
    nm.networks = networks;
    nm.region_to_network.assign(std::size_t(regions), 0);
    const int base = regions / networks;
    const int extra = regions % networks;
    int r = 0;
    for (int k = 1; k <= networks; ++k) {
        const int size = base + (k <= extra ? 1 : 0);
        for (int i = 0; i < size; ++i) nm.region_to_network[std::size_t(r++)] = k;
    }
    nm.validate();
    return {std::move(atlas), nm};
}

Volume generate_subject_volume(const Atlas& atlas, const SubjectRecord& record,
                               const DatasetParams& params, std::uint64_t seed) {
    if (int(record.planted_age.size()) != atlas.regions)
        throw ValidationError("generate_subject_volume: planted age length != R");
    Volume v = make_volume(atlas.shape, 0.0f);
    Rng rng(seed);
    const bool noisy = params.noise_sigma > 0.0;
    for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
        const std::int32_t label = atlas.labels[i];
        if (label == 0) continue;
        double value = params.base_intensity -
                       params.decay_per_year * record.planted_age[std::size_t(label - 1)];
        if (noisy) value += params.noise_sigma * rng.next_normal();
        v.voxels[i] = float(value);
    }
    return v;
}

CohortManifest build_manifest(const DatasetParams& params) {
    params.validate();
    CohortManifest m;
    m.shape = params.shape;
    m.regions = params.regions;
    m.networks = params.networks;
    m.seed = params.seed;
    m.params = params;

    // Network of region r under the contiguous-block convention used by
    // make_synthetic_atlas; kept in lockstep with it.
    const int base = params.regions / params.networks;
    const int extra = params.regions % params.networks;
    std::vector<int> region_network(std::size_t(params.regions));
    {
        int r = 0;
        for (int k = 1; k <= params.networks; ++k) {
            const int size = base + (k <= extra ? 1 : 0);
            for (int i = 0; i < size; ++i) region_network[std::size_t(r++)] = k;
        }
    }

    Rng rng(derive_seed(params.seed, "cohort"));
    auto draw_subject = [&](const std::string& id, const std::string& cohort, Split split,
                            const DiseaseSpec* disease) {
        SubjectRecord s;
        s.id = id;
        s.cohort = cohort;
        s.split = split;
        s.age = rng.next_uniform(params.age_min, params.age_max);
        std::vector<double> net_jit(std::size_t(params.networks));
        for (auto& j : net_jit) j = rng.next_uniform(-params.network_jitter, params.network_jitter);
        s.planted_age.resize(std::size_t(params.regions));
        for (int r = 1; r <= params.regions; ++r) {
            const int k = region_network[std::size_t(r - 1)];
            double planted = s.age + params.network_aging_offsets[std::size_t(k - 1)] +
                             net_jit[std::size_t(k - 1)] +
                             rng.next_uniform(-params.region_jitter, params.region_jitter);
            if (disease &&
                std::find(disease->regions.begin(), disease->regions.end(), r) != disease->regions.end())
                planted += disease->offset_years;
            s.planted_age[std::size_t(r - 1)] = planted;
        }
        m.subjects.push_back(std::move(s));
    };

    char buf[64];
    for (int i = 0; i < params.n_hc_train; ++i) {
        std::snprintf(buf, sizeof(buf), "hctr_%04d", i);
        draw_subject(buf, kCohortHC, Split::train, nullptr);
    }
    for (int i = 0; i < params.n_hc_test; ++i) {
        std::snprintf(buf, sizeof(buf), "hcts_%04d", i);
        draw_subject(buf, kCohortHC, Split::test, nullptr);
    }
    for (const auto& d : params.diseases) {
        for (int i = 0; i < d.count; ++i) {
            std::snprintf(buf, sizeof(buf), "%s_%04d", d.name.c_str(), i);
            draw_subject(buf, disease_cohort_tag(d.name), Split::test, &d);
        }
    }
    m.validate();
    return m;
}

std::uint64_t subject_volume_seed(const DatasetParams& params, std::size_t subject_index) {
    return derive_seed(params.seed, "volume", subject_index);
}

std::vector<DiseasePrior> default_priors(const DatasetParams& params) {
    std::vector<DiseasePrior> priors;
    for (const auto& d : params.diseases) {
        DiseasePrior p;
        p.disease = d.name;
        p.regions = d.regions;
        for (int r : d.regions) p.relevance[r] = Relevance::strong;
        p.validate(params.regions);
        priors.push_back(std::move(p));
    }
    return priors;
}

CohortManifest generate_cohort(const DatasetParams& params, const std::filesystem::path& out_dir) {
    auto [atlas, networks] = make_synthetic_atlas(params.shape, params.regions, params.networks,
                                                  params.seed);
    CohortManifest m = build_manifest(params);

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "volumes", ec);
    if (ec) throw ValidationError("cannot create dataset directory " + out_dir.string());

    dataset::write_manifest_csv(out_dir / "manifest.csv", m);
    io::write_atlas(out_dir / "atlas.vol", atlas);
    dataset::write_atlas_meta_json(out_dir / "atlas.json", m);
    dataset::write_networks_json(out_dir / "networks.json", networks);
    dataset::write_priors_json(out_dir / "priors.json", default_priors(params));

    for (std::size_t i = 0; i < m.subjects.size(); ++i) {
        const Volume v = generate_subject_volume(atlas, m.subjects[i], params,
                                                 subject_volume_seed(params, i));
        io::write_volume(out_dir / "volumes" / (m.subjects[i].id + ".vol"), v);
    }
    return m;
}

} // namespace reba::datagen
