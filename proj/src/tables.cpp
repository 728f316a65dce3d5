#include "reba/tables.hpp"

#include "reba/csv.hpp"
#include "reba/errors.hpp"

#include <json.hpp>

#include <fstream>

namespace reba {

void write_rho_json(const std::filesystem::path& path, const CorrectionVector& cv) {
    nlohmann::json j;
    j["alpha"] = cv.alpha;
    j["eta"] = cv.eta;
    j["rho"] = cv.rho;
    j["n_subjects_used"] = cv.n_subjects_used;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

CorrectionVector read_rho_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    CorrectionVector cv;
    cv.alpha = j.at("alpha").get<double>();
    cv.eta = j.at("eta").get<double>();
    cv.rho = j.at("rho").get<std::vector<double>>();
    cv.n_subjects_used = j.at("n_subjects_used").get<int>();
    return cv;
}

const SoftLabelRow* SoftLabelTable::find(const std::string& id) const {
    for (const auto& r : rows)
        if (r.id == id) return &r;
    return nullptr;
}

void write_soft_labels_csv(const std::filesystem::path& path, const SoftLabelTable& t) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "id,y_whole";
    for (int r = 1; r <= t.regions; ++r) out << ",y_init_r" << r;
    for (int r = 1; r <= t.regions; ++r) out << ",y_soft_r" << r;
    out << "\n";
    for (const auto& row : t.rows) {
        out << row.id << ',' << csv::format_double(row.y_whole);
        for (double v : row.y_init) out << ',' << csv::format_double(v);
        for (double v : row.y_soft) out << ',' << csv::format_double(v);
        out << "\n";
    }
}

SoftLabelTable read_soft_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string() +
                                        " (run build-soft-labels first)");
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty table " + path.string());
    const auto header = csv::split_row(line);
    if (header.size() < 4 || (header.size() - 2) % 2 != 0)
        throw ValidationError("bad soft label header in " + path.string());
    SoftLabelTable t;
    t.regions = int((header.size() - 2) / 2);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split_row(line);
        if (int(f.size()) != 2 + 2 * t.regions)
            throw ValidationError("soft label row width mismatch in " + path.string());
        SoftLabelRow row;
        row.id = f[0];
        row.y_whole = csv::parse_double(f[1]);
        for (int r = 0; r < t.regions; ++r)
            row.y_init.push_back(csv::parse_double(f[std::size_t(2 + r)]));
        for (int r = 0; r < t.regions; ++r)
            row.y_soft.push_back(csv::parse_double(f[std::size_t(2 + t.regions + r)]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

const PredictionRow* PredictionTable::find(const std::string& id) const {
    for (const auto& r : rows)
        if (r.id == id) return &r;
    return nullptr;
}

PredictionTable PredictionTable::filter(Split split) const {
    PredictionTable out;
    out.regions = regions;
    for (const auto& r : rows)
        if (r.split == split) out.rows.push_back(r);
    return out;
}

PredictionTable PredictionTable::filter(Split split, const std::string& cohort) const {
    PredictionTable out;
    out.regions = regions;
    for (const auto& r : rows)
        if (r.split == split && r.cohort == cohort) out.rows.push_back(r);
    return out;
}

void write_predictions_csv(const std::filesystem::path& path, const PredictionTable& t) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "id,age,cohort,split";
    for (int r = 1; r <= t.regions; ++r) out << ",reba_r" << r;
    out << "\n";
    for (const auto& row : t.rows) {
        out << row.id << ',' << csv::format_double(row.age) << ',' << row.cohort << ','
            << to_string(row.split);
        for (double v : row.reba) out << ',' << csv::format_double(v);
        out << "\n";
    }
}

PredictionTable read_predictions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string() +
                                        " (run train-student first)");
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty table " + path.string());
    const auto header = csv::split_row(line);
    if (header.size() < 5) throw ValidationError("bad predictions header in " + path.string());
    PredictionTable t;
    t.regions = int(header.size()) - 4;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split_row(line);
        if (int(f.size()) != 4 + t.regions)
            throw ValidationError("prediction row width mismatch in " + path.string());
        PredictionRow row;
        row.id = f[0];
        row.age = csv::parse_double(f[1]);
        row.cohort = f[2];
        row.split = split_from_string(f[3]);
        for (int r = 0; r < t.regions; ++r)
            row.reba.push_back(csv::parse_double(f[std::size_t(4 + r)]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace reba
