#include "reba/metrics.hpp"

#include "reba/csv.hpp"
#include "reba/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace reba::metrics {

BiasModel fit_bias(const PredictionTable& hc_train) {
    if (hc_train.rows.empty()) throw ValidationError("fit_bias: empty fit set");
    for (const auto& row : hc_train.rows) {
        if (row.cohort != kCohortHC || row.split != Split::train)
            throw ValidationError("fit_bias: fit set must be the HC training split");
    }
    std::set<double> distinct;
    for (const auto& row : hc_train.rows) distinct.insert(row.age);
    if (distinct.size() < 3)
        throw ValidationError("fit_bias: need at least 3 distinct ages, got " +
                              std::to_string(distinct.size()));

    const std::size_t n = hc_train.rows.size();
    double age_mean = 0.0;
    for (const auto& row : hc_train.rows) age_mean += row.age;
    age_mean /= double(n);
    double age_var = 0.0;
    for (const auto& row : hc_train.rows) {
        const double d = row.age - age_mean;
        age_var += d * d;
    }

    BiasModel bias;
    bias.n_fit = int(n);
    bias.lambda0.assign(std::size_t(hc_train.regions), 0.0);
    bias.lambda1.assign(std::size_t(hc_train.regions), 0.0);
    for (int r = 0; r < hc_train.regions; ++r) {
        double pred_mean = 0.0;
        for (const auto& row : hc_train.rows) pred_mean += row.reba[std::size_t(r)];
        pred_mean /= double(n);
        double cov = 0.0;
        for (const auto& row : hc_train.rows)
            cov += (row.age - age_mean) * (row.reba[std::size_t(r)] - pred_mean);
        const double slope = cov / age_var;
        bias.lambda1[std::size_t(r)] = slope;
        bias.lambda0[std::size_t(r)] = pred_mean - slope * age_mean;
        if (!std::isfinite(slope))
            throw NumericalError("fit_bias: non-finite slope for region " + std::to_string(r + 1));
    }
    return bias;
}

double apply_bias(double raw, double age, const BiasModel& bias, int region) {
    const double fitted = bias.lambda0[std::size_t(region - 1)] +
                          bias.lambda1[std::size_t(region - 1)] * age;
    return raw - (fitted - age);
}

PredictionTable apply_bias(const PredictionTable& table, const BiasModel& bias) {
    if (int(bias.lambda0.size()) != table.regions)
        throw ValidationError("apply_bias: model width mismatch");
    PredictionTable out = table;
    for (auto& row : out.rows)
        for (int r = 1; r <= table.regions; ++r)
            row.reba[std::size_t(r - 1)] = apply_bias(row.reba[std::size_t(r - 1)], row.age, bias, r);
    return out;
}

double delta_reba(double prediction, double age) { return prediction - age; }

BandwidthRule bandwidth_rule_from_string(const std::string& s) {
    if (s == "median-pairwise") return BandwidthRule::median_pairwise;
    if (s == "literal-median") return BandwidthRule::literal_median;
    if (s == "fixed") return BandwidthRule::fixed_value;
    throw ValidationError("unknown bandwidth rule: " + s);
}

std::string to_string(BandwidthRule r) {
    switch (r) {
        case BandwidthRule::median_pairwise: return "median-pairwise";
        case BandwidthRule::literal_median: return "literal-median";
        default: return "fixed";
    }
}

namespace {

double median_sorted(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

double rbf_bandwidth(std::span<const double> a, std::span<const double> b,
                     const MmdOptions& opts) {
    if (opts.rule == BandwidthRule::fixed_value) {
        if (opts.fixed_m <= 0) throw ValidationError("rbf_bandwidth: fixed m must be > 0");
        return opts.fixed_m;
    }
    std::vector<double> pooled;
    pooled.reserve(a.size() + b.size());
    pooled.insert(pooled.end(), a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    if (pooled.size() < 2) throw ValidationError("rbf_bandwidth: need at least 2 values");

    if (opts.rule == BandwidthRule::literal_median) {
        const double m = median_sorted(pooled);
        if (m <= 0)
            throw NumericalError("rbf_bandwidth: literal-median bandwidth is <= 0; "
                                 "use the median-pairwise rule");
        return m;
    }
    std::vector<double> diffs;
    diffs.reserve(pooled.size() * (pooled.size() - 1) / 2);
    for (std::size_t i = 0; i < pooled.size(); ++i)
        for (std::size_t j = i + 1; j < pooled.size(); ++j)
            diffs.push_back(std::fabs(pooled[i] - pooled[j]));
    const double m = median_sorted(diffs);
    return m > 0 ? m : 1.0;
}

double mmd_with_bandwidth(std::span<const double> a, std::span<const double> b, double m) {
    if (a.size() < 2 || b.size() < 2)
        throw ValidationError("mmd: both samples need at least 2 points");
    if (m <= 0) throw NumericalError("mmd: bandwidth must be > 0");
    // Canonical argument order makes the estimate exactly symmetric: the
    // floating-point summation order must not depend on which sample came
    // first.
    const bool swap = std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
    if (swap) std::swap(a, b);
    const double inv = 1.0 / (2.0 * m * m);
    auto kernel = [inv](double x, double y) {
        const double d = x - y;
        return std::exp(-d * d * inv);
    };
    const std::size_t na = a.size(), nb = b.size();
    double within_a = 0.0;
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = i + 1; j < na; ++j) within_a += kernel(a[i], a[j]);
    within_a = 2.0 * within_a / (double(na) * double(na - 1));
    double within_b = 0.0;
    for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t j = i + 1; j < nb; ++j) within_b += kernel(b[i], b[j]);
    within_b = 2.0 * within_b / (double(nb) * double(nb - 1));
    double cross = 0.0;
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) cross += kernel(a[i], b[j]);
    cross = 2.0 * cross / (double(na) * double(nb));
    return within_a + within_b - cross;
}

double mmd(std::span<const double> a, std::span<const double> b, const MmdOptions& opts) {
    return mmd_with_bandwidth(a, b, rbf_bandwidth(a, b, opts));
}

double hcs_region(std::span<const double> gaps_train, std::span<const double> gaps_test,
                  const MmdOptions& opts) {
    const double value = mmd(gaps_train, gaps_test, opts);
    return 1.0 - std::clamp(value, 0.0, 1.0);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double ndc_subject(const std::vector<double>& predictions, double age,
                   const DiseasePrior& prior) {
    if (prior.regions.empty())
        throw ValidationError("ndc_subject: empty prior region set for " + prior.disease);
    double acc = 0.0;
    for (int r : prior.regions) {
        if (r < 1 || r > int(predictions.size()))
            throw ValidationError("ndc_subject: prior region out of range");
        acc += sigmoid(delta_reba(predictions[std::size_t(r - 1)], age));
    }
    return acc / double(prior.regions.size());
}

namespace {

std::vector<double> ranks_with_ties(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double mean_rank = 0.5 * (double(i) + double(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ValidationError("spearman: need two equal-length samples of size >= 2");
    const auto ra = ranks_with_ties(a);
    const auto rb = ranks_with_ties(b);
    const double n = double(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - ma, db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

namespace {

struct Groups {
    // fixed emission order: hc_train, hc_test, then disease names sorted
    std::vector<std::string> names;
    std::map<std::string, std::vector<const PredictionRow*>> rows;
};

Groups group_rows(const PredictionTable& table) {
    Groups g;
    g.names = {"hc_train", "hc_test"};
    std::set<std::string> diseases;
    for (const auto& row : table.rows) {
        if (row.cohort == kCohortHC) {
            g.rows[row.split == Split::train ? "hc_train" : "hc_test"].push_back(&row);
        } else {
            const std::string name = row.cohort.substr(8);
            diseases.insert(name);
            g.rows[name].push_back(&row);
        }
    }
    for (const auto& d : diseases) g.names.push_back(d);
    return g;
}

std::vector<double> gaps_of(const std::vector<const PredictionRow*>& rows, int region) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto* row : rows)
        out.push_back(delta_reba(row->reba[std::size_t(region - 1)], row->age));
    return out;
}

MetricsBlock build_block(const PredictionTable& table, const Groups& groups,
                         const std::vector<DiseasePrior>& priors, const MetricsConfig& cfg) {
    MetricsBlock block;
    const auto& tr = groups.rows.count("hc_train") ? groups.rows.at("hc_train")
                                                   : std::vector<const PredictionRow*>{};
    const auto& ts = groups.rows.count("hc_test") ? groups.rows.at("hc_test")
                                                  : std::vector<const PredictionRow*>{};
    if (tr.size() < 2 || ts.size() < 2)
        throw ValidationError("cohort_report: need >= 2 HC train and >= 2 HC test subjects");
    double hcs_sum = 0.0;
    for (int r = 1; r <= table.regions; ++r) {
        const auto gtr = gaps_of(tr, r);
        const auto gts = gaps_of(ts, r);
        const double m = rbf_bandwidth(gtr, gts, cfg.mmd);
        const double value = mmd_with_bandwidth(gtr, gts, m);
        const double hcs = 1.0 - std::clamp(value, 0.0, 1.0);
        if (hcs < 0.0 || hcs > 1.0)
            throw NumericalError("cohort_report: HCS outside [0,1]");
        block.bandwidth_per_region.push_back(m);
        block.mmd_per_region.push_back(value);
        block.hcs_per_region.push_back(hcs);
        hcs_sum += hcs;
    }
    block.hcs_overall = hcs_sum / double(table.regions);

    for (const auto& prior : priors) {
        auto& per_group = block.ndc[prior.disease];
        for (const auto& name : groups.names) {
            if (name == "hc_train") continue; // NDC compares test-stage cohorts
            if (!groups.rows.count(name)) continue;
            NdcCell cell;
            for (const auto* row : groups.rows.at(name)) {
                const double v = ndc_subject(row->reba, row->age, prior);
                if (v <= 0.0 || v >= 1.0)
                    throw NumericalError("cohort_report: NDC outside (0,1)");
                block.ndc_subjects.push_back({prior.disease, name, row->id, v});
                cell.mean += v;
                ++cell.n;
            }
            if (cell.n > 0) cell.mean /= double(cell.n);
            per_group[name] = cell;
        }
        if (per_group.count(prior.disease) && per_group.count("hc_test"))
            block.ndc_diff_vs_hc[prior.disease] =
                per_group.at(prior.disease).mean - per_group.at("hc_test").mean;
    }
    return block;
}

} // namespace

Report cohort_report(const PredictionTable& predictions, const CohortManifest& manifest,
                     const std::vector<DiseasePrior>& priors, const NetworkMap& networks,
                     const MetricsConfig& cfg) {
    if (predictions.regions != manifest.regions)
        throw ValidationError("cohort_report: prediction width does not match the manifest");
    for (const auto& prior : priors) prior.validate(predictions.regions);

    Report report;
    report.bias = fit_bias(predictions.filter(Split::train, kCohortHC));
    const PredictionTable corrected = apply_bias(predictions, report.bias);

    const Groups groups = group_rows(corrected);
    for (const auto& d : manifest.params.diseases) {
        if (!groups.rows.count(d.name))
            throw MissingArtifactError("cohort_report: no predictions for cohort " + d.name);
    }
    report.corrected = build_block(corrected, groups, priors, cfg);
    if (cfg.include_raw) {
        const Groups raw_groups = group_rows(predictions);
        report.raw = build_block(predictions, raw_groups, priors, cfg);
    }

    // Per-network mean corrected gap per group; sorted reduction order.
    const auto members = networks.members();
    for (const auto& name : groups.names) {
        std::vector<double> means(members.size(), 0.0);
        const auto& rows = groups.rows.at(name);
        for (std::size_t k = 0; k < members.size(); ++k) {
            double acc = 0.0;
            for (const auto* row : rows)
                for (int r : members[k]) acc += delta_reba(row->reba[std::size_t(r - 1)], row->age);
            means[k] = rows.empty() ? 0.0 : acc / (double(rows.size()) * double(members[k].size()));
        }
        report.network_gap_means[name] = std::move(means);
    }

    // Fixed-width gap histograms of the corrected gaps (1-year bins).
    const int nbins = int(cfg.hist_hi - cfg.hist_lo);
    for (int r = 1; r <= corrected.regions; ++r) {
        for (const auto& name : groups.names) {
            std::vector<long> counts(std::size_t(nbins), 0);
            for (const auto* row : groups.rows.at(name)) {
                const double gap = delta_reba(row->reba[std::size_t(r - 1)], row->age);
                const int bin = int(std::floor(gap - cfg.hist_lo));
                if (bin >= 0 && bin < nbins) ++counts[std::size_t(bin)];
            }
            for (int b = 0; b < nbins; ++b)
                report.histograms.push_back({r, name, cfg.hist_lo + b, counts[std::size_t(b)]});
        }
    }
    return report;
}

namespace {

nlohmann::json block_to_json(const MetricsBlock& b) {
    nlohmann::json j;
    j["hcs"] = {{"per_region", b.hcs_per_region},
                {"overall", b.hcs_overall},
                {"mmd_per_region", b.mmd_per_region},
                {"bandwidth_per_region", b.bandwidth_per_region}};
    nlohmann::json ndc = nlohmann::json::object();
    for (const auto& [prior, cells] : b.ndc) {
        nlohmann::json groups = nlohmann::json::object();
        for (const auto& [group, cell] : cells)
            groups[group] = {{"mean", cell.mean}, {"n", cell.n}};
        ndc[prior] = {{"cohorts", groups}};
        if (b.ndc_diff_vs_hc.count(prior)) ndc[prior]["diff_vs_hc"] = b.ndc_diff_vs_hc.at(prior);
    }
    j["ndc"] = ndc;
    return j;
}

} // namespace

nlohmann::json report_to_json(const Report& report, const nlohmann::json& config_echo,
                              const std::string& config_hash) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["config"] = config_echo;
    j["bias"] = {{"lambda0", report.bias.lambda0},
                 {"lambda1", report.bias.lambda1},
                 {"n_fit", report.bias.n_fit}};
    j["corrected"] = block_to_json(report.corrected);
    if (report.raw) j["raw"] = block_to_json(*report.raw);
    nlohmann::json net = nlohmann::json::object();
    for (const auto& [group, means] : report.network_gap_means) net[group] = means;
    j["network_gap_means"] = net;
    return j;
}

void write_hcs_csv(const std::filesystem::path& path, const Report& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "region,hcs,mmd,bandwidth\n";
    for (std::size_t r = 0; r < report.corrected.hcs_per_region.size(); ++r)
        out << (r + 1) << ',' << csv::format_double(report.corrected.hcs_per_region[r]) << ','
            << csv::format_double(report.corrected.mmd_per_region[r]) << ','
            << csv::format_double(report.corrected.bandwidth_per_region[r]) << "\n";
    out << "overall," << csv::format_double(report.corrected.hcs_overall) << ",,\n";
}

void write_ndc_csv(const std::filesystem::path& path, const Report& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "prior,cohort,id,ndc\n";
    for (const auto& row : report.corrected.ndc_subjects)
        out << row.prior << ',' << row.group << ',' << row.id << ','
            << csv::format_double(row.ndc) << "\n";
}

void write_histograms_csv(const std::filesystem::path& path, const Report& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "region,cohort,bin_left,count\n";
    for (const auto& row : report.histograms)
        out << row.region << ',' << row.group << ',' << csv::format_double(row.bin_left) << ','
            << row.count << "\n";
}

} // namespace reba::metrics
