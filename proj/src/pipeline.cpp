#include "reba/pipeline.hpp"

#include "reba/csv.hpp"
#include "reba/datagen.hpp"
#include "reba/errors.hpp"
#include "reba/sha256.hpp"
#include "reba/student.hpp"
#include "reba/teacher.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace reba::pipeline {

namespace fs = std::filesystem;

std::filesystem::path Paths::provenance(Stage s) const {
    return root / "provenance" / (to_string(s) + ".json");
}

namespace {

Paths make_paths(const ExperimentConfig& cfg) {
    if (cfg.out_root.empty())
        throw ValidationError("output root not set (use --out, paths.out_root or REBA_OUT_ROOT)");
    return Paths{cfg.out_root};
}

using PathHashes = std::map<std::string, std::string>; // relative path -> sha256

PathHashes hash_files(const fs::path& root, const std::vector<std::string>& rel_paths) {
    PathHashes out;
    for (const auto& rel : rel_paths) out[rel] = sha256_file_hex(root / rel);
    return out;
}

void write_provenance(const Paths& paths, const ExperimentConfig& cfg, Stage stage,
                      const PathHashes& inputs, const PathHashes& outputs,
                      const std::string& mode = {}) {
    nlohmann::json j;
    j["stage"] = to_string(stage);
    j["fingerprint"] = stage_fingerprint(cfg, stage);
    j["config_hash"] = config_hash(cfg);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    if (!mode.empty()) j["mode"] = mode;
    fs::create_directories(paths.root / "provenance");
    std::ofstream out(paths.provenance(stage), std::ios::trunc);
    if (!out) throw ValidationError("cannot write provenance for " + to_string(stage));
    out << j.dump(2) << "\n";
}

std::optional<nlohmann::json> read_provenance(const Paths& paths, Stage stage) {
    std::ifstream in(paths.provenance(stage));
    if (!in) return std::nullopt;
    nlohmann::json j;
    in >> j;
    return j;
}

// A consumed artifact must hash to what its producing stage recorded.
void verify_input(const Paths& paths, Stage producer, const std::string& rel) {
    const auto prov = read_provenance(paths, producer);
    if (!prov)
        throw MissingArtifactError("no provenance for stage '" + to_string(producer) +
                                   "'; run " + to_string(producer) + " first");
    const auto& outputs = prov->at("outputs");
    if (!outputs.contains(rel))
        throw MissingArtifactError("stage '" + to_string(producer) + "' did not record " + rel);
    const std::string recorded = outputs.at(rel).get<std::string>();
    if (!fs::exists(paths.root / rel))
        throw MissingArtifactError(rel + " is missing; run " + to_string(producer) + " first");
    const std::string actual = sha256_file_hex(paths.root / rel);
    if (recorded != actual)
        throw ValidationError(rel + ": hash mismatch against " + to_string(producer) +
                              " provenance (file modified or tampered)");
}

bool stage_is_cached(const Paths& paths, const ExperimentConfig& cfg, Stage stage,
                     const std::vector<std::string>& outputs) {
    const auto prov = read_provenance(paths, stage);
    if (!prov) return false;
    if (prov->at("fingerprint").get<std::string>() != stage_fingerprint(cfg, stage)) return false;
    for (const auto& [rel, hash] : prov->at("inputs").items()) {
        if (!fs::exists(paths.root / rel)) return false;
        if (sha256_file_hex(paths.root / rel) != hash.get<std::string>()) return false;
    }
    for (const auto& rel : outputs) {
        if (!prov->at("outputs").contains(rel)) return false;
        if (!fs::exists(paths.root / rel)) return false;
        if (sha256_file_hex(paths.root / rel) != prov->at("outputs").at(rel).get<std::string>())
            return false;
    }
    return true;
}

teacher::VolumeProvider disk_provider(const dataset::Loaded& ds) {
    return [&ds](const SubjectRecord& s) { return ds.load_volume(s.id); };
}

void write_loss_csv(const fs::path& path, const std::vector<std::string>& cols,
                    const std::vector<std::vector<double>>& series) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "epoch";
    for (const auto& c : cols) out << ',' << c;
    out << "\n";
    for (std::size_t e = 0; e < series[0].size(); ++e) {
        out << e;
        for (const auto& s : series) out << ',' << csv::format_double(s[e]);
        out << "\n";
    }
}

std::vector<std::string> dataset_files(const CohortManifest& m) {
    std::vector<std::string> files = {"dataset/manifest.csv", "dataset/atlas.vol",
                                      "dataset/atlas.json", "dataset/networks.json",
                                      "dataset/priors.json"};
    for (const auto& s : m.subjects) files.push_back("dataset/volumes/" + s.id + ".vol");
    return files;
}

} // namespace

void cmd_gen_data(const ExperimentConfig& cfg, bool force) {
    cfg.validate();
    const Paths paths = make_paths(cfg);
    const fs::path dir = paths.dataset_dir();
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force)
            throw ValidationError("dataset directory " + dir.string() +
                                  " is not empty; pass --force to regenerate");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
    const CohortManifest m = datagen::generate_cohort(cfg.dataset, dir);
    write_provenance(paths, cfg, Stage::gen_data, {}, hash_files(paths.root, dataset_files(m)));
}

void cmd_train_teacher(const ExperimentConfig& cfg, bool cached) {
    cfg.validate();
    const Paths paths = make_paths(cfg);
    const std::vector<std::string> outputs = {"teacher/teacher.ckpt", "teacher/teacher_loss.csv"};
    if (cached && stage_is_cached(paths, cfg, Stage::train_teacher, outputs)) return;

    const auto ds = dataset::load(paths.dataset_dir());
    verify_input(paths, Stage::gen_data, "dataset/manifest.csv");
    verify_input(paths, Stage::gen_data, "dataset/atlas.vol");

    const auto provider = disk_provider(ds);
    teacher::TeacherResult result =
        teacher::train_teacher(ds.manifest, provider, cfg.backbone_desc(), cfg.teacher_opt,
                               derive_seed(cfg.seed, "teacher"));

    fs::create_directories(paths.root / "teacher");
    save_checkpoint(paths.teacher_ckpt(), result.model, "teacher");
    write_loss_csv(paths.teacher_loss(), {"mae"}, {result.history.epoch_loss});
    write_provenance(paths, cfg, Stage::train_teacher,
                     hash_files(paths.root, {"dataset/manifest.csv", "dataset/atlas.vol"}),
                     hash_files(paths.root, outputs));
}

void cmd_build_soft_labels(const ExperimentConfig& cfg, bool cached) {
    cfg.validate();
    const Paths paths = make_paths(cfg);
    const std::vector<std::string> outputs = {"labels/soft_labels.csv", "labels/rho.json"};
    if (cached && stage_is_cached(paths, cfg, Stage::build_soft_labels, outputs)) return;

    const auto ds = dataset::load(paths.dataset_dir());
    verify_input(paths, Stage::train_teacher, "teacher/teacher.ckpt");
    RegressorModel teacher_model = load_checkpoint(paths.teacher_ckpt(), "teacher");
    teacher_model.freeze();

    const auto masks = parc::one_hot(ds.atlas);
    const auto provider = disk_provider(ds);
    CorrectionVector rho;
    SoftLabelTable table = teacher::build_soft_labels(
        teacher_model, ds.manifest, provider, masks, cfg.eta, derive_seed(cfg.seed, "noise"),
        cfg.alpha, &rho, cfg.dilate_occlusion);
    rho.alpha = cfg.alpha;

    fs::create_directories(paths.root / "labels");
    write_soft_labels_csv(paths.soft_labels(), table);
    write_rho_json(paths.rho(), rho);
    write_provenance(paths, cfg, Stage::build_soft_labels,
                     hash_files(paths.root, {"teacher/teacher.ckpt", "dataset/manifest.csv"}),
                     hash_files(paths.root, outputs));
}

void cmd_train_student(const ExperimentConfig& cfg, bool cached) {
    cfg.validate();
    const Paths paths = make_paths(cfg);
    std::vector<std::string> outputs = {"student/predictions_raw.csv"};
    if (cfg.student_enabled) {
        outputs.push_back("student/student.ckpt");
        outputs.push_back("student/student_loss.csv");
    }
    if (cached && stage_is_cached(paths, cfg, Stage::train_student, outputs)) return;

    const auto ds = dataset::load(paths.dataset_dir());
    verify_input(paths, Stage::train_teacher, "teacher/teacher.ckpt");
    RegressorModel backbone = load_checkpoint(paths.teacher_ckpt(), "teacher");
    backbone.freeze();
    const std::string backbone_hash = backbone.param_hash();

    const auto masks = parc::one_hot(ds.atlas);
    const auto provider = disk_provider(ds);
    const std::uint64_t noise_base = derive_seed(cfg.seed, "noise");

    std::vector<const SubjectRecord*> everyone;
    for (const auto& s : ds.manifest.subjects) everyone.push_back(&s);
    PathHashes inputs =
        hash_files(paths.root, {"teacher/teacher.ckpt", "dataset/manifest.csv"});
    fs::create_directories(paths.root / "student");

    if (!cfg.student_enabled) {
        // Distilled readout disabled: the frozen whole-brain model's corrected
        // regional predictions stand in for the student.
        verify_input(paths, Stage::build_soft_labels, "labels/rho.json");
        const CorrectionVector rho = read_rho_json(paths.rho());
        const PredictionTable preds = teacher::teacher_predictions(
            backbone, everyone, provider, masks, cfg.eta, noise_base, rho, cfg.alpha);
        write_predictions_csv(paths.predictions(), preds);
        inputs.merge(hash_files(paths.root, {"labels/rho.json"}));
        write_provenance(paths, cfg, Stage::train_student, inputs,
                         hash_files(paths.root, outputs), "teacher-only");
        return;
    }

    const auto train = ds.manifest.select(Split::train);
    student::RegionEmbeddings all_emb =
        student::compute_region_embeddings(backbone, everyone, provider, masks, cfg.eta,
                                           noise_base);
    // Training view: the train-split prefix of the full embedding table.
    student::RegionEmbeddings train_emb;
    std::vector<std::vector<double>> targets;
    std::optional<SoftLabelTable> soft;
    if (cfg.labels == LabelMode::soft) {
        verify_input(paths, Stage::build_soft_labels, "labels/soft_labels.csv");
        soft = read_soft_labels_csv(paths.soft_labels());
        if (soft->regions != ds.manifest.regions)
            throw ValidationError("soft_labels.csv region count mismatch");
    }
    for (std::size_t i = 0; i < everyone.size(); ++i) {
        if (everyone[i]->split != Split::train) continue;
        train_emb.ids.push_back(all_emb.ids[i]);
        train_emb.e.push_back(all_emb.e[i]);
        if (soft) {
            const SoftLabelRow* row = soft->find(everyone[i]->id);
            if (!row)
                throw ValidationError("soft_labels.csv: missing row for train subject " +
                                      everyone[i]->id);
            targets.push_back(row->y_soft);
        } else {
            targets.push_back(std::vector<double>(std::size_t(ds.manifest.regions),
                                                  everyone[i]->age));
        }
    }
    if (train_emb.ids.size() != train.size())
        throw ValidationError("train split misaligned with embeddings");

    student::StudentDesc sdesc;
    sdesc.regions = ds.manifest.regions;
    sdesc.d_m = cfg.model.d_m;
    sdesc.d_p = cfg.model.d_p;
    sdesc.film_hidden = cfg.model.film_hidden;
    sdesc.adapter_hidden = cfg.model.adapter_hidden;
    sdesc.film_enabled = cfg.film_enabled;
    student::StudentModel model(sdesc, derive_seed(cfg.seed, "student"), backbone_hash);

    student::StudentTrainOptions options;
    options.zeta = cfg.zeta;
    options.detach_network_mean = cfg.func_loss_detach_mean;
    const student::StudentHistory hist =
        student::train_student(model, train_emb, targets, ds.networks, options, cfg.student_opt,
                               derive_seed(cfg.seed, "student-train"));
    if (backbone.param_hash() != backbone_hash)
        throw NumericalError("train_student: frozen backbone parameters changed");

    const PredictionTable preds = student::predict_cohort(model, everyone, all_emb);
    write_predictions_csv(paths.predictions(), preds);
    student::save_student_checkpoint(paths.student_ckpt(), model);
    write_loss_csv(paths.student_loss(), {"dist", "func", "total"},
                   {hist.dist, hist.func, hist.total});
    if (soft) inputs.merge(hash_files(paths.root, {"labels/soft_labels.csv"}));
    write_provenance(paths, cfg, Stage::train_student, inputs, hash_files(paths.root, outputs));
}

nlohmann::json cmd_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    const Paths paths = make_paths(cfg);
    const auto ds = dataset::load(paths.dataset_dir());
    verify_input(paths, Stage::train_student, "student/predictions_raw.csv");
    const PredictionTable preds = read_predictions_csv(paths.predictions());

    const metrics::Report report = metrics::cohort_report(preds, ds.manifest, ds.priors,
                                                          ds.networks,
                                                          cfg.metrics.to_metrics_config());
    const nlohmann::json j = metrics::report_to_json(report, config_to_json(cfg),
                                                     config_hash(cfg));
    fs::create_directories(paths.root / "metrics");
    {
        std::ofstream out(paths.metrics_json(), std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + paths.metrics_json().string());
        out << j.dump(2) << "\n";
    }
    metrics::write_hcs_csv(paths.hcs_csv(), report);
    metrics::write_ndc_csv(paths.ndc_csv(), report);
    metrics::write_histograms_csv(paths.histograms_csv(), report);
    write_provenance(paths, cfg, Stage::evaluate,
                     hash_files(paths.root, {"student/predictions_raw.csv"}),
                     hash_files(paths.root,
                                {"metrics/metrics.json", "metrics/hcs_per_region.csv",
                                 "metrics/ndc_per_subject.csv", "metrics/histograms.csv"}));
    return j;
}

void cmd_report(const ExperimentConfig& cfg, std::ostream& out) {
    const Paths paths = make_paths(cfg);
    std::ifstream in(paths.metrics_json());
    if (!in)
        throw MissingArtifactError("metrics.json not found under " + cfg.out_root.string() +
                                   "; run evaluate first");
    nlohmann::json j;
    in >> j;
    out << "== regional brain age report ==\n";
    out << "config hash: " << j.at("config_hash").get<std::string>() << "\n\n";
    const auto& hcs = j.at("corrected").at("hcs");
    out << "overall HCS (corrected): " << hcs.at("overall").get<double>() << "\n";
    const auto per_region = hcs.at("per_region").get<std::vector<double>>();
    for (std::size_t r = 0; r < per_region.size(); ++r)
        out << "  region " << (r + 1) << ": " << per_region[r] << "\n";
    out << "\nNDC by prior and cohort (corrected):\n";
    for (const auto& [prior, block] : j.at("corrected").at("ndc").items()) {
        out << "  prior " << prior << ":";
        for (const auto& [group, cell] : block.at("cohorts").items())
            out << "  " << group << "=" << cell.at("mean").get<double>();
        if (block.contains("diff_vs_hc"))
            out << "  (diff vs hc_test: " << block.at("diff_vs_hc").get<double>() << ")";
        out << "\n";
    }
    out << "\nbias slopes lambda1: ";
    for (double l : j.at("bias").at("lambda1").get<std::vector<double>>()) out << l << " ";
    out << "\n";
}

nlohmann::json run_pipeline(const ExperimentConfig& cfg, bool force, bool cached) {
    cmd_gen_data(cfg, force);
    cmd_train_teacher(cfg, cached);
    cmd_build_soft_labels(cfg, cached);
    cmd_train_student(cfg, cached);
    return cmd_evaluate(cfg);
}

OracleScore oracle_spearman(const PredictionTable& predictions, const CohortManifest& manifest) {
    const metrics::BiasModel bias = metrics::fit_bias(predictions.filter(Split::train, kCohortHC));
    const PredictionTable corrected = metrics::apply_bias(predictions, bias);
    OracleScore score;
    double sum_raw = 0.0, sum_corr = 0.0;
    for (const auto& row : predictions.rows) {
        if (row.split != Split::test || row.cohort != kCohortHC) continue;
        const SubjectRecord* subject = manifest.find(row.id);
        if (!subject) throw ValidationError("oracle_spearman: unknown subject " + row.id);
        sum_raw += metrics::spearman(row.reba, subject->planted_age);
        sum_corr += metrics::spearman(corrected.find(row.id)->reba, subject->planted_age);
        ++score.n_subjects;
    }
    if (score.n_subjects == 0) throw ValidationError("oracle_spearman: no HC test subjects");
    score.spearman_raw = sum_raw / double(score.n_subjects);
    score.spearman_corrected = sum_corr / double(score.n_subjects);
    return score;
}

ExperimentConfig apply_variant(ExperimentConfig cfg, const std::string& variant) {
    if (variant == "full") return cfg;
    if (variant == "alpha0") {
        cfg.alpha = 0.0;
    } else if (variant == "zeta0") {
        cfg.zeta = 0.0;
    } else if (variant == "nofilm") {
        cfg.film_enabled = false;
    } else if (variant == "nostudent") {
        cfg.student_enabled = false;
    } else if (variant == "chron") {
        cfg.labels = LabelMode::chron;
    } else {
        throw ValidationError("unknown ablation variant: " + variant);
    }
    return cfg;
}

std::vector<AblationRow> cmd_ablation(const ExperimentConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::vector<std::string>& variants,
                                      std::ostream& log) {
    if (seeds.empty() || variants.empty())
        throw ValidationError("ablation: need at least one seed and one variant");
    std::vector<AblationRow> rows;
    const fs::path ablation_root = cfg.out_root / "ablation";
    for (const std::uint64_t seed : seeds) {
        ExperimentConfig seed_cfg = cfg;
        seed_cfg.seed = seed;
        seed_cfg.dataset.seed = seed;
        seed_cfg.out_root = ablation_root / ("seed_" + std::to_string(seed));
        log << "[ablation] seed " << seed << ": dataset + teacher\n" << std::flush;
        if (!fs::exists(Paths{seed_cfg.out_root}.dataset_dir() / "manifest.csv"))
            cmd_gen_data(seed_cfg, false);
        cmd_train_teacher(seed_cfg, /*cached=*/true);

        const auto ds = dataset::load(Paths{seed_cfg.out_root}.dataset_dir());
        for (const auto& variant : variants) {
            ExperimentConfig vcfg = apply_variant(seed_cfg, variant);
            log << "[ablation] seed " << seed << ": variant " << variant << "\n" << std::flush;
            if (vcfg.labels == LabelMode::soft)
                cmd_build_soft_labels(vcfg, /*cached=*/true);
            cmd_train_student(vcfg, /*cached=*/false);
            const nlohmann::json metrics_json = cmd_evaluate(vcfg);

            AblationRow row;
            row.variant = variant;
            row.seed = seed;
            row.hcs_overall =
                metrics_json.at("corrected").at("hcs").at("overall").get<double>();
            for (const auto& [prior, block] : metrics_json.at("corrected").at("ndc").items())
                if (block.contains("diff_vs_hc"))
                    row.ndc_diff_vs_hc[prior] = block.at("diff_vs_hc").get<double>();
            const PredictionTable preds =
                read_predictions_csv(Paths{vcfg.out_root}.predictions());
            const OracleScore oracle = oracle_spearman(preds, ds.manifest);
            row.spearman_raw = oracle.spearman_raw;
            row.spearman_corrected = oracle.spearman_corrected;
            rows.push_back(std::move(row));
        }
    }

    fs::create_directories(ablation_root);
    std::vector<std::string> prior_names;
    if (!rows.empty())
        for (const auto& [name, _] : rows.front().ndc_diff_vs_hc) prior_names.push_back(name);
    {
        std::ofstream out(ablation_root / "ablation.csv", std::ios::trunc);
        out << "variant,seed,hcs_overall";
        for (const auto& p : prior_names) out << ",ndc_diff_" << p;
        out << ",spearman_raw,spearman_corrected\n";
        for (const auto& r : rows) {
            out << r.variant << ',' << r.seed << ',' << csv::format_double(r.hcs_overall);
            for (const auto& p : prior_names)
                out << ',' << csv::format_double(r.ndc_diff_vs_hc.count(p) ? r.ndc_diff_vs_hc.at(p) : 0.0);
            out << ',' << csv::format_double(r.spearman_raw) << ','
                << csv::format_double(r.spearman_corrected) << "\n";
        }
    }
    {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json row{{"variant", r.variant},
                               {"seed", r.seed},
                               {"hcs_overall", r.hcs_overall},
                               {"spearman_raw", r.spearman_raw},
                               {"spearman_corrected", r.spearman_corrected}};
            for (const auto& [p, v] : r.ndc_diff_vs_hc) row["ndc_diff_" + p] = v;
            j.push_back(row);
        }
        std::ofstream out(ablation_root / "ablation.json", std::ios::trunc);
        out << j.dump(2) << "\n";
    }
    return rows;
}

} // namespace reba::pipeline
