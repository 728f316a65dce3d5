#include <doctest.h>

#include "reba/errors.hpp"
#include "reba/pipeline.hpp"
#include "reba/sha256.hpp"
#include "reba/student.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace reba;
namespace fs = std::filesystem;

namespace {

// Desk-scale everything is still too slow for a unit suite; this is a "pocket"
// configuration that finishes in seconds.
ExperimentConfig pocket_config(const fs::path& root, std::uint64_t seed = 4242) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.dataset.seed = seed;
    cfg.dataset.shape = GridShape{12, 12, 12};
    cfg.dataset.regions = 4;
    cfg.dataset.networks = 2;
    cfg.dataset.n_hc_train = 16;
    cfg.dataset.n_hc_test = 8;
    cfg.dataset.network_aging_offsets = {-5.0, 5.0};
    cfg.dataset.diseases = {{"dxa", 6, 8.0, {1, 2}}, {"dxb", 6, 8.0, {3, 4}}};
    cfg.model.d_m = 8;
    cfg.model.d_p = 6;
    cfg.model.channels = {4, 8};
    cfg.model.hidden = 16;
    cfg.model.film_hidden = 8;
    cfg.model.adapter_hidden = 6;
    cfg.teacher_opt.lr = 3e-3;
    cfg.teacher_opt.epochs = 6;
    cfg.teacher_opt.batch_size = 4;
    cfg.student_opt.lr = 1e-2;
    cfg.student_opt.epochs = 8;
    cfg.student_opt.batch_size = 4;
    cfg.out_root = root;
    return cfg;
}

std::string file_text(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("pipeline: end-to-end run, determinism, caching, tampering, stage isolation") {
    const fs::path root = fs::temp_directory_path() / "reba_pipe";
    fs::remove_all(root);
    ExperimentConfig cfg = pocket_config(root);

    SUBCASE("missing artifacts surface as actionable errors") {
        CHECK_THROWS_AS(pipeline::cmd_train_teacher(cfg, false), MissingArtifactError);
        CHECK_THROWS_AS(pipeline::cmd_evaluate(cfg), MissingArtifactError);
    }

    SUBCASE("full run and invariants") {
        const nlohmann::json metrics = pipeline::run_pipeline(cfg, /*force=*/true,
                                                              /*cached=*/false);
        const pipeline::Paths paths{root};
        CHECK(fs::exists(paths.teacher_ckpt()));
        CHECK(fs::exists(paths.soft_labels()));
        CHECK(fs::exists(paths.student_ckpt()));
        CHECK(fs::exists(paths.predictions()));
        CHECK(fs::exists(paths.metrics_json()));
        CHECK(metrics.at("config_hash").get<std::string>() == config_hash(cfg));
        const double hcs = metrics.at("corrected").at("hcs").at("overall").get<double>();
        CHECK(hcs >= 0.0);
        CHECK(hcs <= 1.0);

        // gen-data without --force refuses to clobber
        CHECK_THROWS_AS(pipeline::cmd_gen_data(cfg, false), ValidationError);

        // determinism: a second full run reproduces metrics.json byte for byte
        const std::string first = file_text(paths.metrics_json());
        fs::remove_all(root);
        pipeline::run_pipeline(cfg, true, false);
        CHECK(file_text(paths.metrics_json()) == first);

        // cached rerun is a no-op (artifact bytes unchanged)
        const std::string ckpt_hash = sha256_file_hex(paths.teacher_ckpt());
        pipeline::cmd_train_teacher(cfg, /*cached=*/true);
        CHECK(sha256_file_hex(paths.teacher_ckpt()) == ckpt_hash);

        // stage isolation: wiping the student stage and rerunning from there
        // reproduces identical metrics
        fs::remove_all(root / "student");
        fs::remove_all(root / "metrics");
        pipeline::cmd_train_student(cfg, false);
        pipeline::cmd_evaluate(cfg);
        CHECK(file_text(paths.metrics_json()) == first);

        // oracle scoring runs on the emitted predictions
        const auto ds = dataset::load(paths.dataset_dir());
        const PredictionTable preds = read_predictions_csv(paths.predictions());
        const pipeline::OracleScore score = pipeline::oracle_spearman(preds, ds.manifest);
        CHECK(score.n_subjects == cfg.dataset.n_hc_test);
        CHECK(score.spearman_raw >= -1.0);
        CHECK(score.spearman_raw <= 1.0);

        // the volume-level student readout agrees with the emitted table
        {
            RegressorModel backbone = load_checkpoint(paths.teacher_ckpt(), "teacher");
            backbone.freeze();
            const student::StudentModel model = student::load_student_checkpoint(paths.student_ckpt());
            CHECK(model.backbone_hash() == backbone.param_hash());
            const auto masks = parc::one_hot(ds.atlas);
            const auto& subject = ds.manifest.subjects.front();
            const auto direct = student::student_forward(
                model, backbone, ds.load_volume(subject.id), masks, cfg.eta,
                derive_seed(cfg.seed, "noise"), subject.id);
            const PredictionRow* row = preds.find(subject.id);
            REQUIRE(row != nullptr);
            // checkpoints hold f32 parameters, so agree to f32 precision only
            for (int r = 0; r < preds.regions; ++r)
                CHECK(direct[std::size_t(r)] == doctest::Approx(row->reba[std::size_t(r)]).epsilon(1e-5));
        }

        // report subcommand summarizes metrics.json
        {
            std::ostringstream os;
            pipeline::cmd_report(cfg, os);
            CHECK(os.str().find("overall HCS") != std::string::npos);
            CHECK(os.str().find("NDC by prior") != std::string::npos);
        }

        // --raw adds uncorrected metrics alongside
        {
            ExperimentConfig raw_cfg = cfg;
            raw_cfg.metrics.raw = true;
            const nlohmann::json with_raw = pipeline::cmd_evaluate(raw_cfg);
            CHECK(with_raw.contains("raw"));
            CHECK(with_raw.at("raw").at("hcs").at("overall").get<double>() >= 0.0);
            pipeline::cmd_evaluate(cfg); // restore the default artifacts
        }

        // tampering with soft labels is caught by the next stage
        {
            std::ofstream out(paths.soft_labels(), std::ios::app);
            out << "tampered_row,0";
            for (int r = 0; r < 2 * cfg.dataset.regions; ++r) out << ",0";
            out << "\n";
        }
        CHECK_THROWS_AS(pipeline::cmd_train_student(cfg, false), ValidationError);
    }

    SUBCASE("teacher-only and chron-label variants produce evaluable predictions") {
        pipeline::run_pipeline(cfg, true, false);

        ExperimentConfig nostudent = pipeline::apply_variant(cfg, "nostudent");
        pipeline::cmd_train_student(nostudent, false);
        const nlohmann::json m1 = pipeline::cmd_evaluate(nostudent);
        CHECK(m1.at("corrected").at("ndc").contains("dxa"));

        ExperimentConfig chron = pipeline::apply_variant(cfg, "chron");
        pipeline::cmd_train_student(chron, false);
        const nlohmann::json m2 = pipeline::cmd_evaluate(chron);
        CHECK(m2.at("corrected").at("hcs").at("overall").get<double>() >= 0.0);

        ExperimentConfig nofilm = pipeline::apply_variant(cfg, "nofilm");
        pipeline::cmd_train_student(nofilm, false);
        const nlohmann::json m3 = pipeline::cmd_evaluate(nofilm);
        CHECK(m3.at("corrected").at("hcs").at("overall").get<double>() >= 0.0);
    }

    fs::remove_all(root);
}

TEST_CASE("config: round-trip, strict keys, hash scope") {
    ExperimentConfig cfg = pocket_config("unused_root");
    const nlohmann::json j = config_to_json(cfg);
    const ExperimentConfig back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(config_hash(back) == config_hash(cfg));

    // out_root is not part of the semantic hash
    ExperimentConfig moved = cfg;
    moved.out_root = "somewhere_else";
    CHECK(config_hash(moved) == config_hash(cfg));

    nlohmann::json bad = j;
    bad["no_such_key"] = 1;
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);

    nlohmann::json bad_disease = j;
    bad_disease["dataset"]["diseases"][0]["regions"] = {99};
    CHECK_THROWS_AS(config_from_json(bad_disease), ValidationError);

    // stage fingerprints: student-only knobs leave teacher stages untouched
    ExperimentConfig zeta0 = pipeline::apply_variant(cfg, "zeta0");
    CHECK(stage_fingerprint(zeta0, Stage::train_teacher) ==
          stage_fingerprint(cfg, Stage::train_teacher));
    CHECK(stage_fingerprint(zeta0, Stage::build_soft_labels) ==
          stage_fingerprint(cfg, Stage::build_soft_labels));
    CHECK(stage_fingerprint(zeta0, Stage::train_student) !=
          stage_fingerprint(cfg, Stage::train_student));
    ExperimentConfig alpha0 = pipeline::apply_variant(cfg, "alpha0");
    CHECK(stage_fingerprint(alpha0, Stage::build_soft_labels) !=
          stage_fingerprint(cfg, Stage::build_soft_labels));
    CHECK(stage_fingerprint(alpha0, Stage::train_teacher) ==
          stage_fingerprint(cfg, Stage::train_teacher));
}
