#include "reba/config.hpp"

#include "reba/errors.hpp"
#include "reba/sha256.hpp"

#include <fstream>
#include <set>

namespace reba {

std::string to_string(LabelMode m) { return m == LabelMode::soft ? "soft" : "chron"; }

LabelMode label_mode_from_string(const std::string& s) {
    if (s == "soft") return LabelMode::soft;
    if (s == "chron") return LabelMode::chron;
    throw ValidationError("unknown label mode: " + s);
}

metrics::MetricsConfig MetricsParams::to_metrics_config() const {
    metrics::MetricsConfig cfg;
    cfg.mmd.rule = metrics::bandwidth_rule_from_string(bandwidth);
    cfg.mmd.fixed_m = bandwidth_m;
    cfg.include_raw = raw;
    return cfg;
}

void ExperimentConfig::validate() const {
    dataset.validate();
    teacher_opt.validate();
    student_opt.validate();
    if (model.d_m < 4) throw ValidationError("config: d_m must be >= 4");
    if (model.d_p < 1 || model.hidden < 1 || model.film_hidden < 1 || model.adapter_hidden < 1)
        throw ValidationError("config: model widths must be >= 1");
    if (model.channels.empty()) throw ValidationError("config: need at least one conv stage");
    if (alpha < 0) throw ValidationError("config: alpha must be >= 0");
    if (eta < 0) throw ValidationError("config: eta must be >= 0");
    if (zeta < 0) throw ValidationError("config: zeta must be >= 0");
    metrics.to_metrics_config(); // validates the bandwidth rule name
}

BackboneDesc ExperimentConfig::backbone_desc() const {
    BackboneDesc desc;
    desc.input = dataset.shape;
    desc.d_m = model.d_m;
    desc.channels = model.channels;
    desc.hidden = model.hidden;
    return desc;
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ValidationError("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_dataset(const nlohmann::json& j, DatasetParams& p) {
    check_keys(j, {"shape", "regions", "networks", "n_hc_train", "n_hc_test", "age_min",
                   "age_max", "network_aging_offsets", "network_jitter", "region_jitter",
                   "base_intensity", "decay_per_year", "noise_sigma", "diseases"},
               "dataset");
    if (j.contains("shape")) {
        const auto dims = j.at("shape").get<std::vector<int>>();
        if (dims.size() != 3) throw ValidationError("config: dataset.shape must have 3 entries");
        p.shape = GridShape{dims[0], dims[1], dims[2]};
    }
    get_if(j, "regions", p.regions);
    get_if(j, "networks", p.networks);
    get_if(j, "n_hc_train", p.n_hc_train);
    get_if(j, "n_hc_test", p.n_hc_test);
    get_if(j, "age_min", p.age_min);
    get_if(j, "age_max", p.age_max);
    get_if(j, "network_aging_offsets", p.network_aging_offsets);
    get_if(j, "network_jitter", p.network_jitter);
    get_if(j, "region_jitter", p.region_jitter);
    get_if(j, "base_intensity", p.base_intensity);
    get_if(j, "decay_per_year", p.decay_per_year);
    get_if(j, "noise_sigma", p.noise_sigma);
    if (j.contains("diseases")) {
        p.diseases.clear();
        for (const auto& d : j.at("diseases")) {
            check_keys(d, {"name", "count", "offset_years", "regions"}, "dataset.diseases[]");
            DiseaseSpec spec;
            spec.name = d.at("name").get<std::string>();
            get_if(d, "count", spec.count);
            get_if(d, "offset_years", spec.offset_years);
            spec.regions = d.at("regions").get<std::vector<int>>();
            p.diseases.push_back(std::move(spec));
        }
    }
}

void parse_optimizer(const nlohmann::json& j, OptimizerConfig& o, const std::string& where) {
    check_keys(j, {"lr", "weight_decay", "lr_min", "epochs", "batch_size"}, where);
    get_if(j, "lr", o.lr);
    get_if(j, "weight_decay", o.weight_decay);
    get_if(j, "lr_min", o.lr_min);
    get_if(j, "epochs", o.epochs);
    get_if(j, "batch_size", o.batch_size);
}

void parse_model(const nlohmann::json& j, ModelParams& m) {
    check_keys(j, {"d_m", "d_p", "channels", "hidden", "film_hidden", "adapter_hidden"}, "model");
    get_if(j, "d_m", m.d_m);
    get_if(j, "d_p", m.d_p);
    get_if(j, "channels", m.channels);
    get_if(j, "hidden", m.hidden);
    get_if(j, "film_hidden", m.film_hidden);
    get_if(j, "adapter_hidden", m.adapter_hidden);
}

void parse_metrics(const nlohmann::json& j, MetricsParams& m) {
    check_keys(j, {"bandwidth", "bandwidth_m", "raw"}, "metrics");
    get_if(j, "bandwidth", m.bandwidth);
    get_if(j, "bandwidth_m", m.bandwidth_m);
    get_if(j, "raw", m.raw);
}

} // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    check_keys(j, {"seed", "dataset", "model", "teacher_opt", "student_opt", "alpha", "eta",
                   "zeta", "labels", "film_enabled", "student_enabled", "func_loss_detach_mean",
                   "dilate_occlusion", "metrics", "paths"},
               "config root");
    ExperimentConfig cfg;
    get_if(j, "seed", cfg.seed);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("teacher_opt")) parse_optimizer(j.at("teacher_opt"), cfg.teacher_opt, "teacher_opt");
    if (j.contains("student_opt")) parse_optimizer(j.at("student_opt"), cfg.student_opt, "student_opt");
    get_if(j, "alpha", cfg.alpha);
    get_if(j, "eta", cfg.eta);
    get_if(j, "zeta", cfg.zeta);
    if (j.contains("labels")) cfg.labels = label_mode_from_string(j.at("labels").get<std::string>());
    get_if(j, "film_enabled", cfg.film_enabled);
    get_if(j, "student_enabled", cfg.student_enabled);
    get_if(j, "func_loss_detach_mean", cfg.func_loss_detach_mean);
    get_if(j, "dilate_occlusion", cfg.dilate_occlusion);
    if (j.contains("metrics")) parse_metrics(j.at("metrics"), cfg.metrics);
    if (j.contains("paths")) {
        check_keys(j.at("paths"), {"out_root"}, "paths");
        if (j.at("paths").contains("out_root"))
            cfg.out_root = j.at("paths").at("out_root").get<std::string>();
    }
    cfg.dataset.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("config file not found: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config parse error in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json dis = nlohmann::json::array();
    for (const auto& d : cfg.dataset.diseases)
        dis.push_back({{"name", d.name},
                       {"count", d.count},
                       {"offset_years", d.offset_years},
                       {"regions", d.regions}});
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["dataset"] = {{"shape", {cfg.dataset.shape.d, cfg.dataset.shape.h, cfg.dataset.shape.w}},
                    {"regions", cfg.dataset.regions},
                    {"networks", cfg.dataset.networks},
                    {"n_hc_train", cfg.dataset.n_hc_train},
                    {"n_hc_test", cfg.dataset.n_hc_test},
                    {"age_min", cfg.dataset.age_min},
                    {"age_max", cfg.dataset.age_max},
                    {"network_aging_offsets", cfg.dataset.network_aging_offsets},
                    {"network_jitter", cfg.dataset.network_jitter},
                    {"region_jitter", cfg.dataset.region_jitter},
                    {"base_intensity", cfg.dataset.base_intensity},
                    {"decay_per_year", cfg.dataset.decay_per_year},
                    {"noise_sigma", cfg.dataset.noise_sigma},
                    {"diseases", dis}};
    j["model"] = {{"d_m", cfg.model.d_m},
                  {"d_p", cfg.model.d_p},
                  {"channels", cfg.model.channels},
                  {"hidden", cfg.model.hidden},
                  {"film_hidden", cfg.model.film_hidden},
                  {"adapter_hidden", cfg.model.adapter_hidden}};
    auto opt_json = [](const OptimizerConfig& o) {
        return nlohmann::json{{"lr", o.lr},
                              {"weight_decay", o.weight_decay},
                              {"lr_min", o.lr_min},
                              {"epochs", o.epochs},
                              {"batch_size", o.batch_size}};
    };
    j["teacher_opt"] = opt_json(cfg.teacher_opt);
    j["student_opt"] = opt_json(cfg.student_opt);
    j["alpha"] = cfg.alpha;
    j["eta"] = cfg.eta;
    j["zeta"] = cfg.zeta;
    j["labels"] = to_string(cfg.labels);
    j["film_enabled"] = cfg.film_enabled;
    j["student_enabled"] = cfg.student_enabled;
    j["func_loss_detach_mean"] = cfg.func_loss_detach_mean;
    j["dilate_occlusion"] = cfg.dilate_occlusion;
    j["metrics"] = {{"bandwidth", cfg.metrics.bandwidth},
                    {"bandwidth_m", cfg.metrics.bandwidth_m},
                    {"raw", cfg.metrics.raw}};
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
    return sha256_hex(config_to_json(cfg).dump());
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::gen_data: return "gen-data";
        case Stage::train_teacher: return "train-teacher";
        case Stage::build_soft_labels: return "build-soft-labels";
        case Stage::train_student: return "train-student";
        default: return "evaluate";
    }
}

std::string stage_fingerprint(const ExperimentConfig& cfg, Stage stage) {
    const nlohmann::json full = config_to_json(cfg);
    nlohmann::json scoped;
    scoped["seed"] = full.at("seed");
    scoped["dataset"] = full.at("dataset");
    if (stage >= Stage::train_teacher) {
        scoped["model"] = full.at("model");
        scoped["teacher_opt"] = full.at("teacher_opt");
    }
    if (stage >= Stage::build_soft_labels) {
        scoped["alpha"] = full.at("alpha");
        scoped["eta"] = full.at("eta");
        scoped["dilate_occlusion"] = full.at("dilate_occlusion");
    }
    if (stage >= Stage::train_student) {
        scoped["student_opt"] = full.at("student_opt");
        scoped["zeta"] = full.at("zeta");
        scoped["labels"] = full.at("labels");
        scoped["film_enabled"] = full.at("film_enabled");
        scoped["student_enabled"] = full.at("student_enabled");
        scoped["func_loss_detach_mean"] = full.at("func_loss_detach_mean");
    }
    if (stage >= Stage::evaluate) scoped["metrics"] = full.at("metrics");
    scoped["stage"] = to_string(stage);
    return sha256_hex(scoped.dump());
}

} // namespace reba
