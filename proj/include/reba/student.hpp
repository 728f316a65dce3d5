#pragma once

#include "reba/backbone.hpp"
#include "reba/cohort.hpp"
#include "reba/parcellate.hpp"
#include "reba/tables.hpp"
#include "reba/teacher.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace reba::student {

struct StudentDesc {
    int regions = 0;
    int d_m = 32;
    int d_p = 16;          // prompt dimension
    int film_hidden = 32;  // hidden width of the two-layer FiLM perceptron
    int adapter_hidden = 16;
    bool film_enabled = true; // false: modulation pinned to gamma=1, beta=0
};

// Per-region readout on top of a frozen backbone embedding: a learnable
// prompt per region feeds a two-layer perceptron whose output splits into
// (gamma, beta) for feature-wise affine modulation, and a single two-layer
// adapter shared across regions maps the modulated embedding to years.
//
// The FiLM output bias starts at gamma=1, beta=0 with small weights, so the
// initial readout is the raw embedding through the adapter.
class StudentModel {
public:
    StudentModel(const StudentDesc& desc, std::uint64_t seed, std::string backbone_hash);

    double forward(std::span<const double> e_main, int region) const;

    // (gamma, beta) produced by the FiLM path for one region.
    std::pair<nn::Vec, nn::Vec> film_params(int region) const;

    // Training path: forward with recorded activations, backward accumulates
    // parameter gradients. The frozen backbone is structurally unreachable
    // because only the cached embedding enters.
    struct Acts {
        int region = 0;
        nn::Vec e_main;
        nn::Vec film_h;   // FiLM hidden pre-activation
        nn::Vec film_out; // gamma then beta
        nn::Vec e_film;
        nn::Vec adapter_h; // adapter hidden pre-activation
        double pred = 0.0;
    };
    double forward_acts(std::span<const double> e_main, int region, Acts& acts) const;
    void backward_acts(const Acts& acts, double dpred);

    std::vector<nn::ParamBlock> param_blocks();
    void zero_grad();
    void set_adapter_bias(double b);

    const StudentDesc& desc() const { return desc_; }
    const std::string& backbone_hash() const { return backbone_hash_; }
    std::size_t param_count() const;
    std::vector<float> params_f32() const;
    void load_params_f32(std::span<const float> p);

private:
    StudentDesc desc_;
    std::string backbone_hash_;
    // prompts, FiLM perceptron, adapter perceptron; grads alongside.
    nn::Vec prompts_, film_w1_, film_b1_, film_w2_, film_b2_;
    nn::Vec ad_w1_, ad_b1_, ad_w2_, ad_b2_;
    nn::Vec g_prompts_, g_film_w1_, g_film_b1_, g_film_w2_, g_film_b2_;
    nn::Vec g_ad_w1_, g_ad_b1_, g_ad_w2_, g_ad_b2_;
};

// Cached frozen-backbone embeddings per (subject, region); the extraction
// noise streams are identical to the ones the teacher used for y_init.
struct RegionEmbeddings {
    std::vector<std::string> ids;
    std::vector<std::vector<nn::Vec>> e; // [subject][region]
};

RegionEmbeddings compute_region_embeddings(RegressorModel& backbone,
                                           std::span<const SubjectRecord* const> subjects,
                                           const teacher::VolumeProvider& volumes,
                                           const std::vector<parc::RegionMask>& masks,
                                           double eta, std::uint64_t noise_base);

// All-region student readout for a single volume.
std::vector<double> student_forward(const StudentModel& model, RegressorModel& backbone,
                                    const Volume& volume,
                                    const std::vector<parc::RegionMask>& masks, double eta,
                                    std::uint64_t noise_base, const std::string& subject_id);

// Mean absolute deviation between student predictions and soft targets over
// the common subject x region grid; throws on any mismatch.
double distill_loss(const PredictionTable& pred, const SoftLabelTable& soft);

// Mean absolute deviation of each prediction from its within-network,
// within-subject mean.
double func_consistency_loss(const PredictionTable& pred, const NetworkMap& networks);

struct StudentHistory {
    std::vector<double> dist, func, total; // per-epoch means
};

struct StudentTrainOptions {
    double zeta = 1.0;
    bool detach_network_mean = false; // stop the gradient through the mean
};

// Forward + backward over the selected subjects: accumulates the gradient of
// mean-normalized (dist + zeta * func) into the model and returns the two
// mean loss terms. This is the single gradient path used by train_student and
// by the finite-difference checks.
std::pair<double, double> student_loss_gradients(StudentModel& model,
                                                 const RegionEmbeddings& embeddings,
                                                 const std::vector<std::vector<double>>& targets,
                                                 const NetworkMap& networks,
                                                 const StudentTrainOptions& options,
                                                 std::span<const std::size_t> subject_idx);

// Distillation + functional-consistency training of {prompts, FiLM, adapter}
// on cached embeddings. Batches are over subjects; every batch evaluates all
// regions of its subjects because the consistency term couples them. The
// adapter output bias is warm started at the mean target before descent.
StudentHistory train_student(StudentModel& model, const RegionEmbeddings& embeddings,
                             const std::vector<std::vector<double>>& targets,
                             const NetworkMap& networks, const StudentTrainOptions& options,
                             const OptimizerConfig& opt, std::uint64_t seed);

PredictionTable predict_cohort(const StudentModel& model,
                               std::span<const SubjectRecord* const> subjects,
                               const RegionEmbeddings& embeddings);

// Student checkpoint: prompts + FiLM + adapter parameters with the backbone
// hash they were trained against.
void save_student_checkpoint(const std::filesystem::path& path, const StudentModel& model);
StudentModel load_student_checkpoint(const std::filesystem::path& path);

} // namespace reba::student
