#include "reba/teacher.hpp"

#include "reba/errors.hpp"

#include <cmath>

namespace reba::teacher {

TeacherResult train_teacher(const CohortManifest& manifest, const VolumeProvider& volumes,
                            const BackboneDesc& desc, const OptimizerConfig& opt,
                            std::uint64_t seed) {
    const auto train = manifest.select(Split::train);
    if (train.empty()) throw ValidationError("train_teacher: empty training split");
    for (const auto* s : train) {
        if (!s->is_hc())
            throw ValidationError("train_teacher: non-HC subject '" + s->id +
                                  "' in the training split");
    }

    std::vector<Volume> loaded;
    loaded.reserve(train.size());
    std::vector<TrainSample> samples;
    samples.reserve(train.size());
    double mean_age = 0.0;
    for (const auto* s : train) {
        loaded.push_back(volumes(*s));
        mean_age += s->age;
    }
    mean_age /= double(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
        samples.push_back({&loaded[i], train[i]->age});

    TeacherResult out{RegressorModel::reference(desc, derive_seed(seed, "teacher-init")), {}};
    out.model.set_head_bias(mean_age);
    out.history = train_regressor(out.model, samples, MaeLoss{}, opt,
                                  derive_seed(seed, "teacher-train"));
    out.model.freeze();
    return out;
}

std::vector<double> initial_reba(RegressorModel& teacher, const Volume& volume,
                                 const std::vector<parc::RegionMask>& masks, double eta,
                                 std::uint64_t noise_base, const std::string& subject_id) {
    std::vector<double> out;
    out.reserve(masks.size());
    for (const auto& mask : masks) {
        const parc::NoiseSpec noise{eta, parc::noise_seed(noise_base, subject_id, mask.region,
                                                          kExtractTag)};
        out.push_back(teacher.predict_age(parc::extract_region(volume, mask, noise)));
    }
    return out;
}

CorrectionVector correction_vector(RegressorModel& teacher,
                                   std::span<const SubjectRecord* const> subjects,
                                   const VolumeProvider& volumes,
                                   const std::vector<parc::RegionMask>& masks, double eta,
                                   std::uint64_t noise_base, std::vector<double>* y_whole_out,
                                   bool dilate_occlusion) {
    if (subjects.empty()) throw ValidationError("correction_vector: empty training split");
    CorrectionVector cv;
    cv.eta = eta;
    cv.n_subjects_used = int(subjects.size());
    cv.rho.assign(masks.size(), 0.0);
    if (y_whole_out) y_whole_out->clear();
    for (const auto* s : subjects) {
        const Volume v = volumes(*s);
        const double whole = teacher.predict_age(v);
        if (y_whole_out) y_whole_out->push_back(whole);
        for (std::size_t r = 0; r < masks.size(); ++r) {
            const parc::NoiseSpec noise{
                eta, parc::noise_seed(noise_base, s->id, masks[r].region, kOccludeTag)};
            const double occluded =
                teacher.predict_age(parc::occlude_region(v, masks[r], noise, dilate_occlusion));
            cv.rho[r] += whole - occluded;
        }
    }
    for (double& r : cv.rho) r /= double(subjects.size());
    return cv;
}

double soft_label_value(double y_init, double y_whole, double rho, double alpha) {
    return y_init + (((y_whole - y_init) * rho > 0.0) ? alpha * rho : 0.0);
}

SoftLabelTable soft_labels(const std::vector<std::string>& ids,
                           const std::vector<double>& y_whole,
                           const std::vector<std::vector<double>>& y_init,
                           const CorrectionVector& rho, double alpha) {
    if (alpha < 0) throw ValidationError("soft_labels: alpha must be >= 0");
    if (ids.size() != y_whole.size() || ids.size() != y_init.size())
        throw ValidationError("soft_labels: misaligned inputs");
    SoftLabelTable t;
    t.regions = int(rho.rho.size());
    t.alpha = alpha;
    for (std::size_t n = 0; n < ids.size(); ++n) {
        if (y_init[n].size() != rho.rho.size())
            throw ValidationError("soft_labels: y_init width mismatch");
        SoftLabelRow row;
        row.id = ids[n];
        row.y_whole = y_whole[n];
        row.y_init = y_init[n];
        row.y_soft.reserve(rho.rho.size());
        for (std::size_t r = 0; r < rho.rho.size(); ++r)
            row.y_soft.push_back(soft_label_value(y_init[n][r], y_whole[n], rho.rho[r], alpha));
        t.rows.push_back(std::move(row));
    }
    return t;
}

SoftLabelTable build_soft_labels(RegressorModel& teacher, const CohortManifest& manifest,
                                 const VolumeProvider& volumes,
                                 const std::vector<parc::RegionMask>& masks, double eta,
                                 std::uint64_t noise_base, double alpha,
                                 CorrectionVector* rho_out, bool dilate_occlusion) {
    const auto train = manifest.select(Split::train);
    std::vector<double> y_whole;
    CorrectionVector rho = correction_vector(teacher, train, volumes, masks, eta, noise_base,
                                             &y_whole, dilate_occlusion);
    rho.alpha = alpha;

    std::vector<std::string> ids;
    std::vector<std::vector<double>> y_init;
    ids.reserve(train.size());
    y_init.reserve(train.size());
    for (const auto* s : train) {
        ids.push_back(s->id);
        y_init.push_back(initial_reba(teacher, volumes(*s), masks, eta, noise_base, s->id));
    }
    if (rho_out) *rho_out = rho;
    return soft_labels(ids, y_whole, y_init, rho, alpha);
}

PredictionTable teacher_predictions(RegressorModel& teacher,
                                    std::span<const SubjectRecord* const> subjects,
                                    const VolumeProvider& volumes,
                                    const std::vector<parc::RegionMask>& masks, double eta,
                                    std::uint64_t noise_base, const CorrectionVector& rho,
                                    double alpha) {
    PredictionTable t;
    t.regions = int(masks.size());
    for (const auto* s : subjects) {
        const Volume v = volumes(*s);
        const double whole = teacher.predict_age(v);
        PredictionRow row;
        row.id = s->id;
        row.age = s->age;
        row.cohort = s->cohort;
        row.split = s->split;
        const std::vector<double> init = initial_reba(teacher, v, masks, eta, noise_base, s->id);
        row.reba.reserve(masks.size());
        for (std::size_t r = 0; r < masks.size(); ++r)
            row.reba.push_back(soft_label_value(init[r], whole, rho.rho[r], alpha));
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace reba::teacher
