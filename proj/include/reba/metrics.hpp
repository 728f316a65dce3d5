#pragma once

#include "reba/cohort.hpp"
#include "reba/tables.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reba::metrics {

// Per-region linear calibration of raw predictions against chronological age,
// fitted by ordinary least squares on the HC training split only.
struct BiasModel {
    std::vector<double> lambda0, lambda1;
    int n_fit = 0;
};

BiasModel fit_bias(const PredictionTable& hc_train);

// corrected = raw - ((lambda0 + lambda1 * age) - age)
double apply_bias(double raw, double age, const BiasModel& bias, int region);
PredictionTable apply_bias(const PredictionTable& table, const BiasModel& bias);

double delta_reba(double prediction, double age);

enum class BandwidthRule {
    median_pairwise, // median of pairwise absolute differences over the union
    literal_median,  // median of the pooled values themselves
    fixed_value,
};

BandwidthRule bandwidth_rule_from_string(const std::string& s);
std::string to_string(BandwidthRule r);

struct MmdOptions {
    BandwidthRule rule = BandwidthRule::median_pairwise;
    double fixed_m = 1.0;
};

// Kernel bandwidth under the configured rule. The pairwise rule falls back to
// m = 1 when the median difference is 0; the literal rule has no fallback and
// errors when the pooled median is <= 0.
double rbf_bandwidth(std::span<const double> a, std::span<const double> b,
                     const MmdOptions& opts);

// Unbiased RBF-kernel estimate of the squared maximum mean discrepancy; both
// samples need at least 2 points. May be negative.
double mmd(std::span<const double> a, std::span<const double> b, const MmdOptions& opts);
double mmd_with_bandwidth(std::span<const double> a, std::span<const double> b, double m);

// 1 - clamp(mmd, 0, 1) between the train and test gap distributions.
double hcs_region(std::span<const double> gaps_train, std::span<const double> gaps_test,
                  const MmdOptions& opts);

// Overflow-safe logistic.
double sigmoid(double x);

// Mean sigmoid of the gaps over the prior's region set.
double ndc_subject(const std::vector<double>& predictions, double age,
                   const DiseasePrior& prior);

// Spearman rank correlation with average ranks for ties; 0 when either side
// is entirely tied.
double spearman(std::span<const double> a, std::span<const double> b);

struct MetricsConfig {
    MmdOptions mmd;
    bool include_raw = false; // additionally report metrics on uncorrected predictions
    double hist_lo = -25.0;   // gap histogram range, 1-year bins
    double hist_hi = 25.0;
};

struct NdcCell {
    double mean = 0.0;
    int n = 0;
};

struct NdcSubjectRow {
    std::string prior;
    std::string group;
    std::string id;
    double ndc = 0.0;
};

struct MetricsBlock {
    std::vector<double> hcs_per_region;
    std::vector<double> mmd_per_region;
    std::vector<double> bandwidth_per_region;
    double hcs_overall = 0.0;
    // prior disease -> group name -> mean NDC over the group
    std::map<std::string, std::map<std::string, NdcCell>> ndc;
    // prior disease -> mean NDC of its own cohort minus the HC test cohort
    std::map<std::string, double> ndc_diff_vs_hc;
    std::vector<NdcSubjectRow> ndc_subjects;
};

struct HistogramRow {
    int region = 0;
    std::string group;
    double bin_left = 0.0;
    long count = 0;
};

// Group names used throughout: "hc_train", "hc_test", then each disease name.
struct Report {
    BiasModel bias;
    MetricsBlock corrected;
    std::optional<MetricsBlock> raw;
    // group -> per-network mean corrected gap (1..K)
    std::map<std::string, std::vector<double>> network_gap_means;
    std::vector<HistogramRow> histograms;
};

Report cohort_report(const PredictionTable& predictions, const CohortManifest& manifest,
                     const std::vector<DiseasePrior>& priors, const NetworkMap& networks,
                     const MetricsConfig& cfg);

nlohmann::json report_to_json(const Report& report, const nlohmann::json& config_echo,
                              const std::string& config_hash);

void write_hcs_csv(const std::filesystem::path& path, const Report& report);
void write_ndc_csv(const std::filesystem::path& path, const Report& report);
void write_histograms_csv(const std::filesystem::path& path, const Report& report);

} // namespace reba::metrics
