#include "reba/student.hpp"

#include "reba/errors.hpp"
#include "reba/sha256.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace reba::student {

StudentModel::StudentModel(const StudentDesc& desc, std::uint64_t seed, std::string backbone_hash)
    : desc_(desc), backbone_hash_(std::move(backbone_hash)) {
    if (desc.regions < 1) throw ValidationError("student: region count must be >= 1");
    if (desc.d_p < 1 || desc.d_m < 1 || desc.film_hidden < 1 || desc.adapter_hidden < 1)
        throw ValidationError("student: all widths must be >= 1");
    Rng rng(derive_seed(seed, "student-init"));

    prompts_.assign(std::size_t(desc.regions) * std::size_t(desc.d_p), 0.0);
    for (auto& p : prompts_) p = 0.02 * rng.next_normal();

    film_w1_.assign(std::size_t(desc.film_hidden) * std::size_t(desc.d_p), 0.0);
    film_b1_.assign(std::size_t(desc.film_hidden), 0.0);
    nn::he_init(film_w1_, film_w1_.size(), std::size_t(desc.d_p), rng);

    film_w2_.assign(std::size_t(2 * desc.d_m) * std::size_t(desc.film_hidden), 0.0);
    film_b2_.assign(std::size_t(2 * desc.d_m), 0.0);
    const double w2_scale = 0.02 / std::sqrt(double(desc.film_hidden));
    for (auto& w : film_w2_) w = w2_scale * rng.next_normal();
    for (int i = 0; i < desc.d_m; ++i) film_b2_[std::size_t(i)] = 1.0; // gamma starts at 1

    ad_w1_.assign(std::size_t(desc.adapter_hidden) * std::size_t(desc.d_m), 0.0);
    ad_b1_.assign(std::size_t(desc.adapter_hidden), 0.0);
    nn::he_init(ad_w1_, ad_w1_.size(), std::size_t(desc.d_m), rng);

    ad_w2_.assign(std::size_t(desc.adapter_hidden), 0.0);
    ad_b2_.assign(1, 0.0);
    nn::he_init(ad_w2_, ad_w2_.size(), std::size_t(desc.adapter_hidden), rng);

    g_prompts_.assign(prompts_.size(), 0.0);
    g_film_w1_.assign(film_w1_.size(), 0.0);
    g_film_b1_.assign(film_b1_.size(), 0.0);
    g_film_w2_.assign(film_w2_.size(), 0.0);
    g_film_b2_.assign(film_b2_.size(), 0.0);
    g_ad_w1_.assign(ad_w1_.size(), 0.0);
    g_ad_b1_.assign(ad_b1_.size(), 0.0);
    g_ad_w2_.assign(ad_w2_.size(), 0.0);
    g_ad_b2_.assign(ad_b2_.size(), 0.0);
}

std::pair<nn::Vec, nn::Vec> StudentModel::film_params(int region) const {
    const int dm = desc_.d_m;
    nn::Vec gamma(std::size_t(dm), 1.0), beta(std::size_t(dm), 0.0);
    if (!desc_.film_enabled) return {gamma, beta};
    if (region < 1 || region > desc_.regions)
        throw ValidationError("student: region id out of range");
    const double* p = prompts_.data() + std::size_t(region - 1) * std::size_t(desc_.d_p);
    nn::Vec h(std::size_t(desc_.film_hidden));
    for (int j = 0; j < desc_.film_hidden; ++j) {
        double acc = film_b1_[std::size_t(j)];
        const double* wrow = film_w1_.data() + std::size_t(j) * std::size_t(desc_.d_p);
        for (int i = 0; i < desc_.d_p; ++i) acc += wrow[i] * p[i];
        h[std::size_t(j)] = acc > 0.0 ? acc : 0.0;
    }
    for (int o = 0; o < 2 * dm; ++o) {
        double acc = film_b2_[std::size_t(o)];
        const double* wrow = film_w2_.data() + std::size_t(o) * std::size_t(desc_.film_hidden);
        for (int j = 0; j < desc_.film_hidden; ++j) acc += wrow[j] * h[std::size_t(j)];
        if (o < dm)
            gamma[std::size_t(o)] = acc;
        else
            beta[std::size_t(o - dm)] = acc;
    }
    return {gamma, beta};
}

double StudentModel::forward_acts(std::span<const double> e_main, int region, Acts& acts) const {
    if (int(e_main.size()) != desc_.d_m)
        throw ValidationError("student: embedding width mismatch");
    if (region < 1 || region > desc_.regions)
        throw ValidationError("student: region id out of range");
    const int dm = desc_.d_m;
    acts.region = region;
    acts.e_main.assign(e_main.begin(), e_main.end());

    acts.film_out.assign(std::size_t(2 * dm), 0.0);
    if (desc_.film_enabled) {
        const double* p = prompts_.data() + std::size_t(region - 1) * std::size_t(desc_.d_p);
        acts.film_h.assign(std::size_t(desc_.film_hidden), 0.0);
        for (int j = 0; j < desc_.film_hidden; ++j) {
            double acc = film_b1_[std::size_t(j)];
            const double* wrow = film_w1_.data() + std::size_t(j) * std::size_t(desc_.d_p);
            for (int i = 0; i < desc_.d_p; ++i) acc += wrow[i] * p[i];
            acts.film_h[std::size_t(j)] = acc;
        }
        for (int o = 0; o < 2 * dm; ++o) {
            double acc = film_b2_[std::size_t(o)];
            const double* wrow = film_w2_.data() + std::size_t(o) * std::size_t(desc_.film_hidden);
            for (int j = 0; j < desc_.film_hidden; ++j) {
                const double hj = acts.film_h[std::size_t(j)];
                acc += wrow[j] * (hj > 0.0 ? hj : 0.0);
            }
            acts.film_out[std::size_t(o)] = acc;
        }
    } else {
        for (int i = 0; i < dm; ++i) acts.film_out[std::size_t(i)] = 1.0;
    }

    acts.e_film.assign(std::size_t(dm), 0.0);
    for (int i = 0; i < dm; ++i)
        acts.e_film[std::size_t(i)] = acts.film_out[std::size_t(i)] * acts.e_main[std::size_t(i)] +
                                      acts.film_out[std::size_t(dm + i)];

    acts.adapter_h.assign(std::size_t(desc_.adapter_hidden), 0.0);
    for (int j = 0; j < desc_.adapter_hidden; ++j) {
        double acc = ad_b1_[std::size_t(j)];
        const double* wrow = ad_w1_.data() + std::size_t(j) * std::size_t(dm);
        for (int i = 0; i < dm; ++i) acc += wrow[i] * acts.e_film[std::size_t(i)];
        acts.adapter_h[std::size_t(j)] = acc;
    }
    double pred = ad_b2_[0];
    for (int j = 0; j < desc_.adapter_hidden; ++j) {
        const double hj = acts.adapter_h[std::size_t(j)];
        pred += ad_w2_[std::size_t(j)] * (hj > 0.0 ? hj : 0.0);
    }
    acts.pred = pred;
    return pred;
}

double StudentModel::forward(std::span<const double> e_main, int region) const {
    Acts acts;
    return forward_acts(e_main, region, acts);
}

void StudentModel::backward_acts(const Acts& acts, double dpred) {
    const int dm = desc_.d_m;
    // adapter output layer
    g_ad_b2_[0] += dpred;
    nn::Vec dh(std::size_t(desc_.adapter_hidden));
    for (int j = 0; j < desc_.adapter_hidden; ++j) {
        const double hj = acts.adapter_h[std::size_t(j)];
        const double hr = hj > 0.0 ? hj : 0.0;
        g_ad_w2_[std::size_t(j)] += dpred * hr;
        dh[std::size_t(j)] = hj > 0.0 ? dpred * ad_w2_[std::size_t(j)] : 0.0;
    }
    // adapter hidden layer
    nn::Vec de_film(std::size_t(dm), 0.0);
    for (int j = 0; j < desc_.adapter_hidden; ++j) {
        const double g = dh[std::size_t(j)];
        if (g == 0.0) continue;
        g_ad_b1_[std::size_t(j)] += g;
        const double* wrow = ad_w1_.data() + std::size_t(j) * std::size_t(dm);
        double* gwrow = g_ad_w1_.data() + std::size_t(j) * std::size_t(dm);
        for (int i = 0; i < dm; ++i) {
            gwrow[i] += g * acts.e_film[std::size_t(i)];
            de_film[std::size_t(i)] += g * wrow[i];
        }
    }
    if (!desc_.film_enabled) return; // modulation constants carry no parameters

    // modulation: e_film = gamma .* e_main + beta
    nn::Vec dfo(std::size_t(2 * dm));
    for (int i = 0; i < dm; ++i) {
        dfo[std::size_t(i)] = de_film[std::size_t(i)] * acts.e_main[std::size_t(i)]; // dgamma
        dfo[std::size_t(dm + i)] = de_film[std::size_t(i)];                          // dbeta
    }
    // FiLM output layer
    nn::Vec dfh(std::size_t(desc_.film_hidden), 0.0);
    for (int o = 0; o < 2 * dm; ++o) {
        const double g = dfo[std::size_t(o)];
        g_film_b2_[std::size_t(o)] += g;
        const double* wrow = film_w2_.data() + std::size_t(o) * std::size_t(desc_.film_hidden);
        double* gwrow = g_film_w2_.data() + std::size_t(o) * std::size_t(desc_.film_hidden);
        for (int j = 0; j < desc_.film_hidden; ++j) {
            const double hj = acts.film_h[std::size_t(j)];
            const double hr = hj > 0.0 ? hj : 0.0;
            gwrow[j] += g * hr;
            if (hj > 0.0) dfh[std::size_t(j)] += g * wrow[j];
        }
    }
    // FiLM hidden layer and prompt
    const double* p = prompts_.data() + std::size_t(acts.region - 1) * std::size_t(desc_.d_p);
    double* gp = g_prompts_.data() + std::size_t(acts.region - 1) * std::size_t(desc_.d_p);
    for (int j = 0; j < desc_.film_hidden; ++j) {
        const double g = dfh[std::size_t(j)];
        if (g == 0.0) continue;
        g_film_b1_[std::size_t(j)] += g;
        const double* wrow = film_w1_.data() + std::size_t(j) * std::size_t(desc_.d_p);
        double* gwrow = g_film_w1_.data() + std::size_t(j) * std::size_t(desc_.d_p);
        for (int i = 0; i < desc_.d_p; ++i) {
            gwrow[i] += g * p[i];
            gp[i] += g * wrow[i];
        }
    }
}

std::vector<nn::ParamBlock> StudentModel::param_blocks() {
    std::vector<nn::ParamBlock> blocks;
    auto add = [&](nn::Vec& p, nn::Vec& g) { blocks.push_back({p.data(), g.data(), p.size()}); };
    if (desc_.film_enabled) {
        add(prompts_, g_prompts_);
        add(film_w1_, g_film_w1_);
        add(film_b1_, g_film_b1_);
        add(film_w2_, g_film_w2_);
        add(film_b2_, g_film_b2_);
    }
    add(ad_w1_, g_ad_w1_);
    add(ad_b1_, g_ad_b1_);
    add(ad_w2_, g_ad_w2_);
    add(ad_b2_, g_ad_b2_);
    return blocks;
}

void StudentModel::zero_grad() {
    for (auto* g : {&g_prompts_, &g_film_w1_, &g_film_b1_, &g_film_w2_, &g_film_b2_, &g_ad_w1_,
                    &g_ad_b1_, &g_ad_w2_, &g_ad_b2_})
        std::fill(g->begin(), g->end(), 0.0);
}

void StudentModel::set_adapter_bias(double b) { ad_b2_[0] = b; }

std::size_t StudentModel::param_count() const {
    return prompts_.size() + film_w1_.size() + film_b1_.size() + film_w2_.size() +
           film_b2_.size() + ad_w1_.size() + ad_b1_.size() + ad_w2_.size() + ad_b2_.size();
}

std::vector<float> StudentModel::params_f32() const {
    std::vector<float> out;
    out.reserve(param_count());
    for (const auto* v : {&prompts_, &film_w1_, &film_b1_, &film_w2_, &film_b2_, &ad_w1_, &ad_b1_,
                          &ad_w2_, &ad_b2_})
        for (double x : *v) out.push_back(float(x));
    return out;
}

void StudentModel::load_params_f32(std::span<const float> p) {
    if (p.size() != param_count())
        throw ValidationError("student checkpoint: parameter count mismatch");
    std::size_t off = 0;
    for (auto* v : {&prompts_, &film_w1_, &film_b1_, &film_w2_, &film_b2_, &ad_w1_, &ad_b1_,
                    &ad_w2_, &ad_b2_}) {
        for (auto& x : *v) x = double(p[off++]);
    }
}

RegionEmbeddings compute_region_embeddings(RegressorModel& backbone,
                                           std::span<const SubjectRecord* const> subjects,
                                           const teacher::VolumeProvider& volumes,
                                           const std::vector<parc::RegionMask>& masks,
                                           double eta, std::uint64_t noise_base) {
    RegionEmbeddings out;
    out.ids.reserve(subjects.size());
    out.e.reserve(subjects.size());
    for (const auto* s : subjects) {
        const Volume v = volumes(*s);
        std::vector<nn::Vec> per_region;
        per_region.reserve(masks.size());
        for (const auto& mask : masks) {
            const parc::NoiseSpec noise{
                eta, parc::noise_seed(noise_base, s->id, mask.region, teacher::kExtractTag)};
            per_region.push_back(backbone.embed(parc::extract_region(v, mask, noise)));
        }
        out.ids.push_back(s->id);
        out.e.push_back(std::move(per_region));
    }
    return out;
}

std::vector<double> student_forward(const StudentModel& model, RegressorModel& backbone,
                                    const Volume& volume,
                                    const std::vector<parc::RegionMask>& masks, double eta,
                                    std::uint64_t noise_base, const std::string& subject_id) {
    std::vector<double> out;
    out.reserve(masks.size());
    for (const auto& mask : masks) {
        const parc::NoiseSpec noise{
            eta, parc::noise_seed(noise_base, subject_id, mask.region, teacher::kExtractTag)};
        const nn::Vec e = backbone.embed(parc::extract_region(volume, mask, noise));
        out.push_back(model.forward(e, mask.region));
    }
    return out;
}

double distill_loss(const PredictionTable& pred, const SoftLabelTable& soft) {
    if (pred.regions != soft.regions)
        throw ValidationError("distill_loss: region count mismatch");
    if (pred.rows.size() != soft.rows.size() || pred.rows.empty())
        throw ValidationError("distill_loss: subject grid mismatch");
    double acc = 0.0;
    for (const auto& row : pred.rows) {
        const SoftLabelRow* target = soft.find(row.id);
        if (!target) throw ValidationError("distill_loss: no soft labels for " + row.id);
        for (int r = 0; r < pred.regions; ++r)
            acc += std::fabs(row.reba[std::size_t(r)] - target->y_soft[std::size_t(r)]);
    }
    return acc / (double(pred.regions) * double(pred.rows.size()));
}

double func_consistency_loss(const PredictionTable& pred, const NetworkMap& networks) {
    if (networks.regions() != pred.regions)
        throw ValidationError("func_consistency_loss: network map does not cover the regions");
    networks.validate();
    if (pred.rows.empty()) throw ValidationError("func_consistency_loss: empty table");
    const auto members = networks.members();
    double acc = 0.0;
    for (const auto& row : pred.rows) {
        for (const auto& group : members) {
            double mean = 0.0;
            for (int r : group) mean += row.reba[std::size_t(r - 1)];
            mean /= double(group.size());
            double dev = 0.0;
            for (int r : group) dev += std::fabs(row.reba[std::size_t(r - 1)] - mean);
            acc += dev / double(group.size());
        }
    }
    return acc / double(pred.rows.size());
}

std::pair<double, double> student_loss_gradients(StudentModel& model,
                                                 const RegionEmbeddings& embeddings,
                                                 const std::vector<std::vector<double>>& targets,
                                                 const NetworkMap& networks,
                                                 const StudentTrainOptions& options,
                                                 std::span<const std::size_t> subject_idx) {
    if (subject_idx.empty()) throw ValidationError("student_loss_gradients: empty batch");
    const int R = model.desc().regions;
    const auto members = networks.members();
    const double inv_bn = 1.0 / double(subject_idx.size());
    std::vector<StudentModel::Acts> acts;
    acts.resize(std::size_t(R));
    std::vector<double> preds(std::size_t(R), 0.0), dpred(std::size_t(R), 0.0);
    double sum_dist = 0.0, sum_func = 0.0;
    for (const std::size_t n : subject_idx) {
        for (int r = 0; r < R; ++r) {
            preds[std::size_t(r)] =
                model.forward_acts(embeddings.e[n][std::size_t(r)], r + 1, acts[std::size_t(r)]);
            if (!std::isfinite(preds[std::size_t(r)]))
                throw NumericalError("student: non-finite prediction for subject " +
                                     embeddings.ids[n]);
            dpred[std::size_t(r)] = 0.0;
        }
        // distillation term, mean over the region x subject grid
        for (int r = 0; r < R; ++r) {
            const double res = preds[std::size_t(r)] - targets[n][std::size_t(r)];
            sum_dist += std::fabs(res);
            const double sgn = res > 0.0 ? 1.0 : (res < 0.0 ? -1.0 : 0.0);
            dpred[std::size_t(r)] += sgn / double(R) * inv_bn;
        }
        // functional consistency: per network, deviation from the subject's
        // network mean; the mean is inside the gradient unless detached
        for (const auto& group : members) {
            double mean = 0.0;
            for (int r : group) mean += preds[std::size_t(r - 1)];
            mean /= double(group.size());
            double sign_sum = 0.0;
            for (int r : group) {
                const double res = preds[std::size_t(r - 1)] - mean;
                sum_func += std::fabs(res) / double(group.size());
                sign_sum += res > 0.0 ? 1.0 : (res < 0.0 ? -1.0 : 0.0);
            }
            for (int r : group) {
                const double res = preds[std::size_t(r - 1)] - mean;
                double g = res > 0.0 ? 1.0 : (res < 0.0 ? -1.0 : 0.0);
                if (!options.detach_network_mean) g -= sign_sum / double(group.size());
                dpred[std::size_t(r - 1)] += options.zeta * g / double(group.size()) * inv_bn;
            }
        }
        for (int r = 0; r < R; ++r) model.backward_acts(acts[std::size_t(r)], dpred[std::size_t(r)]);
    }
    return {sum_dist / (double(R) * double(subject_idx.size())),
            sum_func / double(subject_idx.size())};
}

StudentHistory train_student(StudentModel& model, const RegionEmbeddings& embeddings,
                             const std::vector<std::vector<double>>& targets,
                             const NetworkMap& networks, const StudentTrainOptions& options,
                             const OptimizerConfig& opt, std::uint64_t seed) {
    opt.validate();
    if (options.zeta < 0) throw ValidationError("train_student: zeta must be >= 0");
    const std::size_t n_subjects = embeddings.e.size();
    if (n_subjects == 0) throw ValidationError("train_student: no training subjects");
    if (targets.size() != n_subjects)
        throw ValidationError("train_student: targets misaligned with embeddings");
    const int R = model.desc().regions;
    if (networks.regions() != R)
        throw ValidationError("train_student: network map does not cover the regions");
    networks.validate();
    for (const auto& t : targets)
        if (int(t.size()) != R) throw ValidationError("train_student: target width mismatch");
    for (const auto& e : embeddings.e)
        if (int(e.size()) != R) throw ValidationError("train_student: embedding grid mismatch");

    // Warm start the shared output bias at the mean target.
    double mean_target = 0.0;
    for (const auto& t : targets)
        for (double v : t) mean_target += v;
    model.set_adapter_bias(mean_target / (double(n_subjects) * double(R)));

    const auto blocks = model.param_blocks();
    nn::AdamW optimizer;
    StudentHistory hist;
    std::vector<std::size_t> idx(n_subjects);
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const double lr = nn::cosine_lr(opt.lr, opt.lr_min, epoch, opt.epochs);
        Rng shuffle_rng(derive_seed(seed, "student-shuffle", std::uint64_t(epoch)));
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j = std::size_t(shuffle_rng.next_below(i));
            std::swap(idx[i - 1], idx[j]);
        }
        double sum_dist = 0.0, sum_func = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += std::size_t(opt.batch_size)) {
            const std::size_t end = std::min(idx.size(), start + std::size_t(opt.batch_size));
            model.zero_grad();
            const auto [dist, func] = student_loss_gradients(
                model, embeddings, targets, networks, options,
                std::span<const std::size_t>(idx.data() + start, end - start));
            sum_dist += dist * double(end - start);
            sum_func += func * double(end - start);
            optimizer.step(lr, opt.weight_decay, blocks);
        }
        const double dist = sum_dist / double(n_subjects);
        const double func = sum_func / double(n_subjects);
        if (!std::isfinite(dist) || !std::isfinite(func))
            throw NumericalError("train_student: non-finite loss at epoch " +
                                 std::to_string(epoch));
        hist.dist.push_back(dist);
        hist.func.push_back(func);
        hist.total.push_back(dist + options.zeta * func);
    }
    return hist;
}

PredictionTable predict_cohort(const StudentModel& model,
                               std::span<const SubjectRecord* const> subjects,
                               const RegionEmbeddings& embeddings) {
    if (subjects.size() != embeddings.e.size())
        throw ValidationError("predict_cohort: embeddings misaligned with subjects");
    PredictionTable t;
    t.regions = model.desc().regions;
    for (std::size_t n = 0; n < subjects.size(); ++n) {
        if (subjects[n]->id != embeddings.ids[n])
            throw ValidationError("predict_cohort: subject order mismatch");
        PredictionRow row;
        row.id = subjects[n]->id;
        row.age = subjects[n]->age;
        row.cohort = subjects[n]->cohort;
        row.split = subjects[n]->split;
        row.reba.reserve(std::size_t(t.regions));
        for (int r = 0; r < t.regions; ++r)
            row.reba.push_back(model.forward(embeddings.e[n][std::size_t(r)], r + 1));
        t.rows.push_back(std::move(row));
    }
    return t;
}

void save_student_checkpoint(const std::filesystem::path& path, const StudentModel& model) {
    const std::vector<float> params = model.params_f32();
    nlohmann::json j;
    j["kind"] = "student";
    j["regions"] = model.desc().regions;
    j["d_m"] = model.desc().d_m;
    j["d_p"] = model.desc().d_p;
    j["film_hidden"] = model.desc().film_hidden;
    j["adapter_hidden"] = model.desc().adapter_hidden;
    j["film_enabled"] = model.desc().film_enabled;
    j["backbone_sha256"] = model.backbone_hash();
    j["param_count"] = params.size();
    j["sha256"] = sha256_hex(params.data(), params.size() * sizeof(float));
    io::write_container(path, io::kCheckpointMagic, j.dump(), params.data(),
                        params.size() * sizeof(float));
}

StudentModel load_student_checkpoint(const std::filesystem::path& path) {
    const io::Container c = io::read_container(path, io::kCheckpointMagic);
    const nlohmann::json j = nlohmann::json::parse(c.header_json);
    if (j.at("kind").get<std::string>() != "student")
        throw ValidationError("checkpoint " + path.string() + ": expected kind 'student'");
    if (j.at("sha256").get<std::string>() != sha256_hex(c.payload.data(), c.payload.size()))
        throw ValidationError("checkpoint " + path.string() +
                              ": content hash mismatch (corrupt or tampered file)");
    StudentDesc desc;
    desc.regions = j.at("regions").get<int>();
    desc.d_m = j.at("d_m").get<int>();
    desc.d_p = j.at("d_p").get<int>();
    desc.film_hidden = j.at("film_hidden").get<int>();
    desc.adapter_hidden = j.at("adapter_hidden").get<int>();
    desc.film_enabled = j.at("film_enabled").get<bool>();
    StudentModel model(desc, 0, j.at("backbone_sha256").get<std::string>());
    std::vector<float> params(j.at("param_count").get<std::size_t>());
    if (c.payload.size() != params.size() * sizeof(float))
        throw ValidationError("checkpoint " + path.string() + ": payload size mismatch");
    std::memcpy(params.data(), c.payload.data(), c.payload.size());
    model.load_params_f32(params);
    return model;
}

} // namespace reba::student
