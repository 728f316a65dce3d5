#pragma once

#include "reba/cohort.hpp"
#include "reba/volume.hpp"

#include <filesystem>
#include <utility>

namespace reba::datagen {

// Synthetic parcellation: a Voronoi partition of seeded centroids inside an
// axis-aligned ellipsoidal foreground (80% of each dimension), relaxed with a
// few Lloyd iterations so regions are roughly balanced. Regions are relabeled
// along the depth axis and grouped into K contiguous-id networks, so network
// k's member ids form one consecutive block. Deterministic given seed.
//
// Draw order: R distinct centroid voxel picks from the seeded stream, nothing
// else.
std::pair<Atlas, NetworkMap> make_synthetic_atlas(GridShape shape, int regions, int networks,
                                                  std::uint64_t seed);

// Voxel intensity law (invertible in expectation, the evaluation oracle):
//   label r  : base_intensity - decay_per_year * planted_age[r] + N(0, sigma^2)
//   label 0  : exactly 0
// Noise is drawn per foreground voxel in ascending linear-index order from
// the given seed; no draws happen when sigma == 0.
Volume generate_subject_volume(const Atlas& atlas, const SubjectRecord& record,
                               const DatasetParams& params, std::uint64_t seed);

// Subject records only, no volume synthesis. Cohort order: HC train, HC test,
// then each disease in declaration order. Per subject the stream yields the
// age, K network jitters, then R region jitters.
CohortManifest build_manifest(const DatasetParams& params);

// Per-subject volume seed; subjects may be generated in parallel because each
// derives an independent sub-stream from (seed, subject index).
std::uint64_t subject_volume_seed(const DatasetParams& params, std::size_t subject_index);

// Default disease priors for the synthetic cohort: one prior per configured
// disease, covering exactly its offset regions (relevance "strong").
std::vector<DiseasePrior> default_priors(const DatasetParams& params);

// Generates and writes the complete dataset directory (manifest.csv,
// atlas.vol, atlas.json, networks.json, priors.json, volumes/<id>.vol).
CohortManifest generate_cohort(const DatasetParams& params, const std::filesystem::path& out_dir);

} // namespace reba::datagen
