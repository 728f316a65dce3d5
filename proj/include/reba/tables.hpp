#pragma once

#include "reba/cohort.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace reba {

// Mean occlusion response of the frozen whole-brain model, one entry per
// region, averaged over the HC training split.
struct CorrectionVector {
    std::vector<double> rho;
    int n_subjects_used = 0;
    double eta = 0.1;
    double alpha = 1.0;
};

void write_rho_json(const std::filesystem::path& path, const CorrectionVector& cv);
CorrectionVector read_rho_json(const std::filesystem::path& path);

struct SoftLabelRow {
    std::string id;
    double y_whole = 0.0;
    std::vector<double> y_init;
    std::vector<double> y_soft;
};

struct SoftLabelTable {
    int regions = 0;
    double alpha = 1.0;
    std::vector<SoftLabelRow> rows;

    const SoftLabelRow* find(const std::string& id) const;
};

// soft_labels.csv: id, y_whole, y_init_r1..rR, y_soft_r1..rR
void write_soft_labels_csv(const std::filesystem::path& path, const SoftLabelTable& t);
SoftLabelTable read_soft_labels_csv(const std::filesystem::path& path);

struct PredictionRow {
    std::string id;
    double age = 0.0;
    std::string cohort;
    Split split = Split::test;
    std::vector<double> reba;
};

struct PredictionTable {
    int regions = 0;
    std::vector<PredictionRow> rows;

    const PredictionRow* find(const std::string& id) const;
    PredictionTable filter(Split split) const;
    PredictionTable filter(Split split, const std::string& cohort) const;
};

// predictions_raw.csv: id, age, cohort, split, reba_r1..rR
void write_predictions_csv(const std::filesystem::path& path, const PredictionTable& t);
PredictionTable read_predictions_csv(const std::filesystem::path& path);

} // namespace reba
