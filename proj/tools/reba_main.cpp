// Command-line front end for the regional brain age pipeline. Stages write
// their artifacts under one output root and are chained by provenance files;
// see README.md for the full walkthrough.

#include "reba/config.hpp"
#include "reba/errors.hpp"
#include "reba/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

struct CliOverrides {
    std::optional<std::string> config_path;
    std::optional<std::string> out_root;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha, eta, zeta;
    std::optional<int> teacher_epochs, student_epochs;
    std::optional<double> teacher_lr, student_lr;
    std::optional<std::string> labels;
    std::optional<std::string> bandwidth;
    std::optional<double> bandwidth_m;
    bool no_film = false;
    bool no_student = false;
    bool raw = false;
    bool detach_mean = false;
    bool dilate_occlusion = false;
};

// Precedence: flag > config file > built-in default.
reba::ExperimentConfig resolve_config(const CliOverrides& o) {
    reba::ExperimentConfig cfg =
        o.config_path ? reba::load_config(*o.config_path) : reba::default_config();
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.dataset.seed = *o.seed;
    }
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.eta) cfg.eta = *o.eta;
    if (o.zeta) cfg.zeta = *o.zeta;
    if (o.teacher_epochs) cfg.teacher_opt.epochs = *o.teacher_epochs;
    if (o.student_epochs) cfg.student_opt.epochs = *o.student_epochs;
    if (o.teacher_lr) cfg.teacher_opt.lr = *o.teacher_lr;
    if (o.student_lr) cfg.student_opt.lr = *o.student_lr;
    if (o.labels) cfg.labels = reba::label_mode_from_string(*o.labels);
    if (o.bandwidth) cfg.metrics.bandwidth = *o.bandwidth;
    if (o.bandwidth_m) cfg.metrics.bandwidth_m = *o.bandwidth_m;
    if (o.no_film) cfg.film_enabled = false;
    if (o.no_student) cfg.student_enabled = false;
    if (o.raw) cfg.metrics.raw = true;
    if (o.detach_mean) cfg.func_loss_detach_mean = true;
    if (o.dilate_occlusion) cfg.dilate_occlusion = true;

    if (o.out_root) cfg.out_root = *o.out_root;
    if (cfg.out_root.empty()) {
        const char* env = std::getenv("REBA_OUT_ROOT");
        cfg.out_root = (env && *env) ? env : "out";
    }
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"regional brain age pipeline on synthetic phantom cohorts"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    CliOverrides o;
    app.add_option("--config", o.config_path, "experiment config file (JSON)");
    app.add_option("--out", o.out_root, "output root (default: $REBA_OUT_ROOT or ./out)");
    app.add_option("--seed", o.seed, "master seed (dataset + training + noise)");
    app.add_option("--alpha", o.alpha, "occlusion-correction step scale");
    app.add_option("--eta", o.eta, "replacement-noise amplitude");
    app.add_option("--zeta", o.zeta, "functional-consistency loss weight");
    app.add_option("--teacher-epochs", o.teacher_epochs, "override teacher epochs");
    app.add_option("--student-epochs", o.student_epochs, "override student epochs");
    app.add_option("--teacher-lr", o.teacher_lr, "override teacher learning rate");
    app.add_option("--student-lr", o.student_lr, "override student learning rate");
    app.add_option("--labels", o.labels, "student targets: soft | chron");
    app.add_option("--bandwidth", o.bandwidth,
                   "kernel bandwidth rule: median-pairwise | literal-median | fixed");
    app.add_option("--bandwidth-m", o.bandwidth_m, "bandwidth for the fixed rule");
    app.add_flag("--no-film", o.no_film, "pin modulation to gamma=1, beta=0");
    app.add_flag("--no-student", o.no_student,
                 "use the teacher's corrected regional predictions directly");
    app.add_flag("--raw", o.raw, "also report metrics on uncorrected predictions");
    app.add_flag("--detach-mean", o.detach_mean,
                 "stop the consistency-loss gradient through the network mean");
    app.add_flag("--dilate-occlusion", o.dilate_occlusion,
                 "occlude with the dilated mask instead of the exact one");

    bool force = false, cached = false;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    gen->add_flag("--force", force, "overwrite an existing dataset directory");
    auto* teach = app.add_subcommand("train-teacher", "train and freeze the whole-brain model");
    auto* labels_cmd = app.add_subcommand("build-soft-labels",
                                          "occlusion-corrected per-region targets");
    auto* stud = app.add_subcommand("train-student", "train the per-region readout");
    auto* eval = app.add_subcommand("evaluate", "bias correction, HCS and NDC metrics");
    auto* rep = app.add_subcommand("report", "print a summary of metrics.json");
    auto* abl = app.add_subcommand("ablation", "run the variant grid over seeds");
    for (auto* cmd : {teach, labels_cmd, stud})
        cmd->add_flag("--cached", cached, "skip when provenance and hashes match");
    int ablation_seeds = 3;
    std::vector<std::string> ablation_variants = reba::pipeline::kAblationVariants;
    abl->add_option("--seeds", ablation_seeds, "number of consecutive seeds (from --seed)");
    abl->add_option("--variants", ablation_variants, "variant subset to run");

    try {
        app.parse(argc, argv);
        const reba::ExperimentConfig cfg = resolve_config(o);
        if (gen->parsed()) {
            reba::pipeline::cmd_gen_data(cfg, force);
        } else if (teach->parsed()) {
            reba::pipeline::cmd_train_teacher(cfg, cached);
        } else if (labels_cmd->parsed()) {
            reba::pipeline::cmd_build_soft_labels(cfg, cached);
        } else if (stud->parsed()) {
            reba::pipeline::cmd_train_student(cfg, cached);
        } else if (eval->parsed()) {
            reba::pipeline::cmd_evaluate(cfg);
        } else if (rep->parsed()) {
            reba::pipeline::cmd_report(cfg, std::cout);
        } else if (abl->parsed()) {
            std::vector<std::uint64_t> seeds;
            for (int i = 0; i < ablation_seeds; ++i) seeds.push_back(cfg.seed + std::uint64_t(i));
            reba::pipeline::cmd_ablation(cfg, seeds, ablation_variants, std::cout);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2; // prints help or the parse error
    } catch (const reba::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const reba::MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const reba::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
