#pragma once

#include "reba/config.hpp"
#include "reba/metrics.hpp"
#include "reba/tables.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace reba::pipeline {

// Artifact layout under the configured output root. Stages communicate only
// through these files; each stage verifies the integrity of what it consumes
// against the producing stage's provenance record.
struct Paths {
    std::filesystem::path root;

    std::filesystem::path dataset_dir() const { return root / "dataset"; }
    std::filesystem::path teacher_ckpt() const { return root / "teacher" / "teacher.ckpt"; }
    std::filesystem::path teacher_loss() const { return root / "teacher" / "teacher_loss.csv"; }
    std::filesystem::path soft_labels() const { return root / "labels" / "soft_labels.csv"; }
    std::filesystem::path rho() const { return root / "labels" / "rho.json"; }
    std::filesystem::path student_ckpt() const { return root / "student" / "student.ckpt"; }
    std::filesystem::path student_loss() const { return root / "student" / "student_loss.csv"; }
    std::filesystem::path predictions() const { return root / "student" / "predictions_raw.csv"; }
    std::filesystem::path metrics_json() const { return root / "metrics" / "metrics.json"; }
    std::filesystem::path hcs_csv() const { return root / "metrics" / "hcs_per_region.csv"; }
    std::filesystem::path ndc_csv() const { return root / "metrics" / "ndc_per_subject.csv"; }
    std::filesystem::path histograms_csv() const { return root / "metrics" / "histograms.csv"; }
    std::filesystem::path provenance(Stage s) const;
};

// Stage entry points. `cached` skips the stage when its fingerprint, inputs
// and outputs all match the recorded provenance. Each throws
// MissingArtifactError when a predecessor artifact is absent and
// ValidationError when a consumed artifact fails its hash check.
void cmd_gen_data(const ExperimentConfig& cfg, bool force);
void cmd_train_teacher(const ExperimentConfig& cfg, bool cached);
void cmd_build_soft_labels(const ExperimentConfig& cfg, bool cached);
void cmd_train_student(const ExperimentConfig& cfg, bool cached);
nlohmann::json cmd_evaluate(const ExperimentConfig& cfg);
void cmd_report(const ExperimentConfig& cfg, std::ostream& out);

// Convenience: all five stages in order.
nlohmann::json run_pipeline(const ExperimentConfig& cfg, bool force, bool cached);

// Mean per-subject rank correlation between predicted regional ages and the
// planted ground truth, over HC test subjects; raw and bias-corrected views.
struct OracleScore {
    double spearman_raw = 0.0;
    double spearman_corrected = 0.0;
    int n_subjects = 0;
};

OracleScore oracle_spearman(const PredictionTable& predictions, const CohortManifest& manifest);

struct AblationRow {
    std::string variant;
    std::uint64_t seed = 0;
    double hcs_overall = 0.0;
    std::map<std::string, double> ndc_diff_vs_hc;
    double spearman_raw = 0.0;
    double spearman_corrected = 0.0;
};

inline const std::vector<std::string> kAblationVariants = {"full",      "zeta0", "nofilm",
                                                           "nostudent", "chron", "alpha0"};

ExperimentConfig apply_variant(ExperimentConfig cfg, const std::string& variant);

// Runs the variant grid over the given seeds, sharing the per-seed dataset
// and teacher across variants, and writes ablation.csv / ablation.json under
// <out_root>/ablation.
std::vector<AblationRow> cmd_ablation(const ExperimentConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::vector<std::string>& variants,
                                      std::ostream& log);

} // namespace reba::pipeline
