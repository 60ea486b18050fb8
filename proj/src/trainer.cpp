#include "ssgan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ssgan/rng.hpp"

namespace ssgan::trainer {

namespace {

Tensor uniform_leaf(const Shape& shape, double lo, double hi, std::uint64_t seed) {
    rng::Rng gen(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = gen.uniform(lo, hi);
    return Tensor::from_vector(std::move(v), shape);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void AdamConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ValueError("adam: betas must lie in [0,1)");
    if (eps <= 0.0) throw ValueError("adam: eps must be positive");
}

void TrainConfig::validate() const {
    sched.validate();
    adam.validate();
    if (batch_labeled == 0 || batch_unlabeled == 0)
        throw ValueError("config: batch sizes must be positive");
    if (eval_every <= 0 || checkpoint_every <= 0)
        throw ValueError("config: eval_every and checkpoint_every must be positive");
    if (placement.kind != losses::PlacementKind::prediction &&
        kind != losses::ConsistencyKind::composite)
        throw ValueError("config: feature-space consistency requires the composite kind");
    if (placement.kind != losses::PlacementKind::prediction && placement.feature_weight <= 0.0)
        throw ValueError("config: feature_weight must be positive");
}

AdamState AdamState::init_for(const nn::ParamSet& params) {
    AdamState s;
    for (const auto& e : params.entries()) {
        if (!e.trainable) continue;
        s.m.emplace_back(e.tensor.numel(), 0.0);
        s.v.emplace_back(e.tensor.numel(), 0.0);
    }
    return s;
}

void adam_step(nn::ParamSet& params, AdamState& state, double lr, const AdamConfig& cfg) {
    std::size_t k = 0;
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        if (k >= state.m.size() || state.m[k].size() != e.tensor.numel())
            throw ShapeError("adam_step: state does not match parameters at " + e.name);
        auto g = e.tensor.grad();
        auto theta = e.tensor.mutable_data();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        ++k;
    }
}

// ---- evaluation ----

std::vector<int> predict(const nn::ModelConfig& cfg, nn::ParamSet& params,
                         const Tensor& inputs) {
    const std::size_t n = inputs.shape()[0];
    const std::size_t chunk = 512;
    const int k = cfg.num_classes;
    std::vector<int> out(n);
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t stop = std::min(start + chunk, n);
        std::vector<std::size_t> rows(stop - start);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
        Tensor x = index_rows(inputs, rows).detach();
        auto fo = nn::forward_discriminator(cfg, params, x, nn::Mode::eval());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            int best = 0;
            double best_p = fo.probs.at(r * (k + 1));
            for (int c = 1; c < k; ++c) {
                const double p = fo.probs.at(r * (k + 1) + c);
                if (p > best_p) {  // strict: ties keep the lowest index
                    best_p = p;
                    best = c;
                }
            }
            out[start + r] = best;
        }
    }
    return out;
}

double evaluate(const nn::ModelConfig& cfg, nn::ParamSet& params, const data::Dataset& test) {
    if (test.size() == 0) throw DataError("evaluate: empty test set");
    auto pred = predict(cfg, params, test.inputs);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] != test.labels[i]) ++wrong;
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(test.size());
}

void export_embeddings(const nn::ModelConfig& cfg, nn::ParamSet& params,
                       const data::Dataset& ds, const std::string& out_path) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("export_embeddings: cannot write " + out_path);
    const std::size_t n = ds.size();
    const std::size_t chunk = 512;
    bool wrote_header = false;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t stop = std::min(start + chunk, n);
        std::vector<std::size_t> rows(stop - start);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
        Tensor x = index_rows(ds.inputs, rows).detach();
        auto fo = nn::forward_discriminator(cfg, params, x, nn::Mode::eval());
        const std::size_t f = fo.features.shape()[1];
        if (!wrote_header) {
            out << "id,label";
            for (std::size_t j = 0; j < f; ++j) out << ",f" << j;
            out << "\n";
            wrote_header = true;
        }
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out << (start + r) << "," << ds.labels[start + r];
            for (std::size_t j = 0; j < f; ++j)
                out << "," << format_double(fo.features.at(r * f + j));
            out << "\n";
        }
    }
}

// ---- metrics ----

std::string metrics_csv_header() {
    return "epoch,lr,lambda_cons,loss_supervised,loss_unsupervised,loss_consistency,"
           "loss_generator,student_error,teacher_error";
}

std::string metrics_csv_row(const MetricsRecord& r) {
    std::string row = std::to_string(r.epoch);
    for (double v : {r.lr, r.lambda_eff, r.loss_supervised, r.loss_unsupervised,
                     r.loss_consistency, r.loss_generator, r.student_error, r.teacher_error})
        row += "," + format_double(v);
    return row;
}

// ---- trainer ----

Trainer::Trainer(const TrainConfig& cfg, data::Dataset train, data::Dataset test)
    : cfg_(cfg), train_(std::move(train)), test_(std::move(test)) {
    cfg_.validate();
    train_.validate();

    state_.d_cfg = nn::discriminator_preset(cfg_.disc_preset, train_.num_classes);
    state_.g_cfg = nn::generator_preset(cfg_.gen_preset);
    if (state_.g_cfg.output_shape() != train_.sample_shape())
        throw ConfigError("generator preset " + cfg_.gen_preset + " emits " +
                          shape_to_string(state_.g_cfg.output_shape()) + " but the data is " +
                          shape_to_string(train_.sample_shape()));
    if (state_.d_cfg.input_shape != train_.sample_shape())
        throw ConfigError("discriminator preset " + cfg_.disc_preset + " expects " +
                          shape_to_string(state_.d_cfg.input_shape) + " but the data is " +
                          shape_to_string(train_.sample_shape()));

    state_.student = nn::build_model(state_.d_cfg, rng::mix(cfg_.seed, rng::stream::kInit, 1));
    state_.student.set_requires_grad(true);
    // the teacher starts as a copy of the student and is never optimized
    state_.teacher = state_.student.clone(false);
    state_.generator = nn::build_model(state_.g_cfg, rng::mix(cfg_.seed, rng::stream::kInit, 2));
    state_.generator.set_requires_grad(true);
    state_.adam_student = AdamState::init_for(state_.student);
    state_.adam_generator = AdamState::init_for(state_.generator);

    split_ = data::make_split(
        train_, data::SplitSpec{cfg_.dataset.n_labeled, cfg_.dataset.split_seed,
                                cfg_.dataset.stratified});

    dloss_cfg_.kind = cfg_.kind;
    dloss_cfg_.consistency_on_labeled = cfg_.consistency_on_labeled;
    dloss_cfg_.opts.div = cfg_.divergence;
    dloss_cfg_.opts.placement = cfg_.placement;
    dloss_cfg_.opts.renormalize = cfg_.renormalize;
    dloss_cfg_.opts.augment = data::make_augment_fn(cfg_.aug);
}

losses::LossTerms Trainer::train_iteration(const data::PairedBatch& batch, int epoch,
                                           std::size_t iter_index, double* generator_loss) {
    const double lr = schedule::learning_rate(epoch, cfg_.sched);
    const double lambda_eff = schedule::consistency_weight(epoch, cfg_.sched);
    const std::size_t latent = static_cast<std::size_t>(state_.g_cfg.latent_dim);

    // D step
    state_.student.zero_grad();
    Tensor fakes;
    {
        nn::GradFreeze freeze(state_.generator);
        Tensor z = uniform_leaf({batch.x_unlabeled.shape()[0], latent}, 0.0, 1.0,
                                rng::mix(cfg_.seed, rng::stream::kLatent, epoch, iter_index, 0));
        fakes = nn::forward_generator(state_.g_cfg, state_.generator, z,
                                      nn::Mode::train_mode(batch.xi))
                    .detach();
    }
    losses::LossTerms terms = losses::discriminator_total_loss(
        state_.d_cfg, state_.student, state_.teacher, batch.x_labeled, batch.y_labeled,
        batch.x_unlabeled, fakes, lambda_eff, batch.mix, batch.xi, batch.xi_prime, dloss_cfg_);
    if (!std::isfinite(terms.total.value()))
        throw DivergenceError(
            "non-finite discriminator loss at epoch " + std::to_string(epoch) + " iteration " +
            std::to_string(iter_index) + ": supervised=" + format_double(terms.supervised) +
            " unsupervised=" + format_double(terms.unsupervised) +
            " consistency=" + format_double(terms.consistency) +
            " lambda=" + format_double(terms.lambda_eff));
    terms.total.backward();
    adam_step(state_.student, state_.adam_student, lr, cfg_.adam);

    // G step on fresh noise
    state_.generator.zero_grad();
    Tensor z2 = uniform_leaf({batch.x_unlabeled.shape()[0], latent}, 0.0, 1.0,
                             rng::mix(cfg_.seed, rng::stream::kLatent, epoch, iter_index, 1));
    Tensor g_loss = losses::generator_total_loss(state_.d_cfg, state_.g_cfg, state_.student,
                                                 state_.generator, batch.x_unlabeled, z2,
                                                 batch.xi, dloss_cfg_.opts.augment);
    if (!std::isfinite(g_loss.value()))
        throw DivergenceError("non-finite generator loss at epoch " + std::to_string(epoch) +
                              " iteration " + std::to_string(iter_index));
    g_loss.backward();
    adam_step(state_.generator, state_.adam_generator, lr, cfg_.adam);
    if (generator_loss) *generator_loss = g_loss.value();

    // EMA teacher
    nn::ema_update(state_.teacher, state_.student, cfg_.sched.ema_k);
    return terms;
}

MetricsRecord Trainer::run_epoch(int epoch) {
    data::BatchConfig bcfg;
    bcfg.batch_labeled = cfg_.batch_labeled;
    bcfg.batch_unlabeled = cfg_.batch_unlabeled;
    bcfg.alpha = cfg_.sched.alpha;
    bcfg.consistency_on_labeled = cfg_.consistency_on_labeled;
    data::BatchStream stream(train_, split_, bcfg,
                             rng::mix(cfg_.seed, rng::stream::kEpoch, epoch));

    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = schedule::learning_rate(epoch, cfg_.sched);
    rec.lambda_eff = schedule::consistency_weight(epoch, cfg_.sched);
    const std::size_t iters = stream.num_batches();
    for (std::size_t i = 0; i < iters; ++i) {
        double g_loss = 0.0;
        auto terms = train_iteration(stream.batch(i), epoch, i, &g_loss);
        rec.loss_supervised += terms.supervised / static_cast<double>(iters);
        rec.loss_unsupervised += terms.unsupervised / static_cast<double>(iters);
        rec.loss_consistency += terms.consistency / static_cast<double>(iters);
        rec.loss_generator += g_loss / static_cast<double>(iters);
    }
    state_.epochs_done = epoch + 1;
    return rec;
}

std::vector<MetricsRecord> Trainer::run(const std::function<void(const MetricsRecord&)>& on_eval,
                                        const std::string& checkpoint_dir) {
    std::vector<MetricsRecord> records;
    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = state_.epochs_done; epoch < cfg_.sched.total_epochs; ++epoch) {
        MetricsRecord rec = run_epoch(epoch);
        const bool last = epoch + 1 == cfg_.sched.total_epochs;
        if ((epoch + 1) % cfg_.eval_every == 0 || last) {
            rec.student_error = evaluate_student();
            rec.teacher_error = evaluate_teacher();
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
            records.push_back(rec);
            if (on_eval) on_eval(rec);
        }
        if (!checkpoint_dir.empty() &&
            ((epoch + 1) % cfg_.checkpoint_every == 0 || last)) {
            std::filesystem::create_directories(checkpoint_dir);
            checkpoint_save(checkpoint_dir + "/ckpt-" + std::to_string(epoch + 1) + ".bin",
                            state_, config_json_, cfg_.seed);
        }
    }
    return records;
}

}  // namespace ssgan::trainer
