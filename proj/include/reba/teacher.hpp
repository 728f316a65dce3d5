#pragma once

#include "reba/backbone.hpp"
#include "reba/cohort.hpp"
#include "reba/parcellate.hpp"
#include "reba/tables.hpp"

#include <functional>
#include <span>

namespace reba::teacher {

using VolumeProvider = std::function<Volume(const SubjectRecord&)>;

// Replacement-noise streams are derived per (subject, region, op) from
// noise_base; extraction and occlusion use independent streams, and the
// student later re-derives the identical extraction stream.
inline constexpr const char* kExtractTag = "extract";
inline constexpr const char* kOccludeTag = "occlude";

struct TeacherResult {
    RegressorModel model; // frozen
    TrainHistory history;
};

// Whole-brain age training on the HC train split (hard error if a disease
// subject appears there), MAE loss, then freeze. The head bias is warm
// started at the mean training age before descent begins.
TeacherResult train_teacher(const CohortManifest& manifest, const VolumeProvider& volumes,
                            const BackboneDesc& desc, const OptimizerConfig& opt,
                            std::uint64_t seed);

// Masked-region predictions y_init for one subject: the frozen model applied
// to each region extracted with its dilated mask.
std::vector<double> initial_reba(RegressorModel& teacher, const Volume& volume,
                                 const std::vector<parc::RegionMask>& masks, double eta,
                                 std::uint64_t noise_base, const std::string& subject_id);

// rho[r] = mean over train subjects of predict(X) - predict(X with region r
// occluded). Whole-brain predictions are cached into y_whole_out (aligned
// with `subjects`) to avoid a second full pass.
CorrectionVector correction_vector(RegressorModel& teacher,
                                   std::span<const SubjectRecord* const> subjects,
                                   const VolumeProvider& volumes,
                                   const std::vector<parc::RegionMask>& masks, double eta,
                                   std::uint64_t noise_base,
                                   std::vector<double>* y_whole_out = nullptr,
                                   bool dilate_occlusion = false);

// One label: y_init plus alpha*rho when the whole-vs-init residual agrees in
// sign with rho (strict product > 0; ties leave the label untouched).
double soft_label_value(double y_init, double y_whole, double rho, double alpha);

SoftLabelTable soft_labels(const std::vector<std::string>& ids,
                           const std::vector<double>& y_whole,
                           const std::vector<std::vector<double>>& y_init,
                           const CorrectionVector& rho, double alpha);

// Full label construction for the train split: whole-brain pass, rho,
// masked-region pass, then the conditional correction.
SoftLabelTable build_soft_labels(RegressorModel& teacher, const CohortManifest& manifest,
                                 const VolumeProvider& volumes,
                                 const std::vector<parc::RegionMask>& masks, double eta,
                                 std::uint64_t noise_base, double alpha,
                                 CorrectionVector* rho_out = nullptr,
                                 bool dilate_occlusion = false);

// Teacher-only regional predictions for arbitrary subjects (any split), using
// a correction vector computed on the train split. This is the model-less
// fallback where the distilled readout is disabled.
PredictionTable teacher_predictions(RegressorModel& teacher,
                                    std::span<const SubjectRecord* const> subjects,
                                    const VolumeProvider& volumes,
                                    const std::vector<parc::RegionMask>& masks, double eta,
                                    std::uint64_t noise_base, const CorrectionVector& rho,
                                    double alpha);

} // namespace reba::teacher
