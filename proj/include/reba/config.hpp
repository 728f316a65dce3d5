#pragma once

#include "reba/backbone.hpp"
#include "reba/cohort.hpp"
#include "reba/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace reba {

struct ModelParams {
    int d_m = 32;
    int d_p = 16;
    std::vector<int> channels{8, 16, 32};
    int hidden = 64;
    int film_hidden = 32;
    int adapter_hidden = 16;
};

enum class LabelMode { soft, chron };

std::string to_string(LabelMode m);
LabelMode label_mode_from_string(const std::string& s);

struct MetricsParams {
    std::string bandwidth = "median-pairwise"; // median-pairwise | literal-median | fixed
    double bandwidth_m = 1.0;
    bool raw = false;

    metrics::MetricsConfig to_metrics_config() const;
};

// One flat config drives every stage; flag overrides beat file values which
// beat built-in defaults. The single top-level seed feeds the dataset and is
// the parent of every derived training/noise stream.
struct ExperimentConfig {
    std::uint64_t seed = 12345;
    DatasetParams dataset;
    ModelParams model;
    OptimizerConfig teacher_opt;
    OptimizerConfig student_opt;
    double alpha = 1.0;
    double eta = 0.1;
    double zeta = 1.0;
    LabelMode labels = LabelMode::soft;
    bool film_enabled = true;
    bool student_enabled = true;
    bool func_loss_detach_mean = false;
    bool dilate_occlusion = false;
    MetricsParams metrics;
    // Resolution order: --out flag, then paths.out_root from the file, then
    // $REBA_OUT_ROOT, then "./out". Excluded from all hashes.
    std::filesystem::path out_root; // empty means unresolved

    void validate() const;
    BackboneDesc backbone_desc() const;
};

ExperimentConfig default_config();

// Strict parse: unknown keys are rejected, missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Semantic view (paths excluded); the canonical dump of this is hashed.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

// Pipeline stages for fingerprinting: a stage reruns only when the slice of
// the config it depends on changes.
enum class Stage { gen_data, train_teacher, build_soft_labels, train_student, evaluate };

std::string to_string(Stage s);
std::string stage_fingerprint(const ExperimentConfig& cfg, Stage stage);

} // namespace reba
