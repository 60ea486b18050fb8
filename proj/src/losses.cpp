#include "ssgan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ssgan/rng.hpp"

namespace ssgan::losses {

namespace {

constexpr double kProbFloor = 1e-12;

void check_perm(const MixupSample& mix, std::size_t batch) {
    if (!(mix.lambda >= 0.0 && mix.lambda <= 1.0))
        throw ValueError("mixup: lambda " + std::to_string(mix.lambda) + " outside [0,1]");
    if (mix.perm.size() != batch)
        throw ShapeError("mixup permutation covers " + std::to_string(mix.perm.size()) +
                         " rows, batch has " + std::to_string(batch));
    std::vector<std::size_t> sorted = mix.perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        if (sorted[i] != i) throw ValueError("mixup permutation is not a bijection");
}

const AugmentFn& augment_or_identity(const ConsistencyOpts& opts) {
    static const AugmentFn identity = identity_augment();
    return opts.augment ? opts.augment : identity;
}

}  // namespace

AugmentFn identity_augment() {
    return [](const Tensor& x, std::uint64_t) { return x; };
}

Tensor supervised_loss(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.shape().size() != 2)
        throw ShapeError("supervised_loss: probs must be (B,K+1), got " +
                         shape_to_string(probs.shape()));
    const std::size_t batch = probs.shape()[0];
    const std::size_t cols = probs.shape()[1];
    if (labels.size() != batch)
        throw ShapeError("supervised_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
    std::vector<std::size_t> idx(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        // valid labels are the K real classes; the fake class (last column)
        // is not a legal target
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols - 1)
            throw ValueError("supervised_loss: label " + std::to_string(labels[i]) +
                             " outside [0," + std::to_string(cols - 1) + ")");
        idx[i] = static_cast<std::size_t>(labels[i]);
    }
    Tensor picked = take_per_row(probs, idx);
    return neg(mean(log(clamp(picked, kProbFloor, 1.0))));
}

Tensor unsupervised_gan_loss(const Tensor& real_probs, const Tensor& fake_probs) {
    if (real_probs.shape().size() != 2 || fake_probs.shape().size() != 2 ||
        real_probs.shape()[1] != fake_probs.shape()[1])
        throw ShapeError("unsupervised_gan_loss: class counts disagree: " +
                         shape_to_string(real_probs.shape()) + " vs " +
                         shape_to_string(fake_probs.shape()));
    const std::size_t fake_class = real_probs.shape()[1] - 1;
    Tensor p_fake = clamp(col(fake_probs, fake_class), kProbFloor, 1.0 - kProbFloor);
    Tensor p_real = clamp(col(real_probs, fake_class), kProbFloor, 1.0 - kProbFloor);
    Tensor term_fake = neg(mean(log(p_fake)));
    Tensor term_real = neg(mean(log(rsub_scalar(1.0, p_real))));
    return add(term_fake, term_real);
}

Tensor feature_matching_loss(const Tensor& real_features, const Tensor& fake_features) {
    if (real_features.shape().size() != 2 || fake_features.shape().size() != 2 ||
        real_features.shape()[1] != fake_features.shape()[1])
        throw ShapeError("feature_matching_loss: feature widths disagree: " +
                         shape_to_string(real_features.shape()) + " vs " +
                         shape_to_string(fake_features.shape()));
    Tensor d = sub(mean(real_features, {0}, false), mean(fake_features, {0}, false));
    return sum(mul(d, d));
}

Tensor mixup(const Tensor& u, const Tensor& v, double lambda) {
    if (u.shape() != v.shape())
        throw ShapeError("mixup: shape mismatch " + shape_to_string(u.shape()) + " vs " +
                         shape_to_string(v.shape()));
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ValueError("mixup: lambda " + std::to_string(lambda) + " outside [0,1]");
    return add(mul_scalar(u, lambda), mul_scalar(v, 1.0 - lambda));
}

Tensor divergence(Divergence kind, const Tensor& student_probs, const Tensor& teacher_probs) {
    if (student_probs.shape() != teacher_probs.shape())
        throw ShapeError("divergence: class counts disagree: " +
                         shape_to_string(student_probs.shape()) + " vs " +
                         shape_to_string(teacher_probs.shape()));
    Tensor target = teacher_probs.detach();
    if (kind == Divergence::mse) {
        Tensor d = sub(student_probs, target);
        return mean(mul(d, d));
    }
    const std::size_t batch = student_probs.shape().size() == 2 ? student_probs.shape()[0] : 1;
    Tensor t = clamp(target, kProbFloor, 1.0);
    Tensor s = clamp(student_probs, kProbFloor, 1.0);
    Tensor per_elem = mul(t, sub(log(t), log(s)));
    return mul_scalar(sum(per_elem), 1.0 / static_cast<double>(batch));
}

Tensor class_distribution(const Tensor& probs, int num_classes, bool renormalize) {
    if (probs.shape().size() != 2 ||
        probs.shape()[1] != static_cast<std::size_t>(num_classes) + 1)
        throw ShapeError("class_distribution: expected (B," + std::to_string(num_classes + 1) +
                         "), got " + shape_to_string(probs.shape()));
    Tensor pk = slice_cols(probs, 0, static_cast<std::size_t>(num_classes));
    if (!renormalize) return pk;
    Tensor denom = clamp(sum(pk, {1}, /*keepdims=*/true), kProbFloor, 1.0);
    return div(pk, denom);
}

Tensor mt_consistency(const nn::ModelConfig& cfg, nn::ParamSet& student, nn::ParamSet& teacher,
                      const Tensor& x, std::uint64_t xi_seed, std::uint64_t xi_prime_seed,
                      const ConsistencyOpts& opts) {
    const AugmentFn& augment = augment_or_identity(opts);
    Tensor x_student = augment(x, rng::mix(xi_seed, rng::stream::kAugment));
    auto out_s = nn::forward_discriminator(
        cfg, student, x_student, nn::Mode::train_mode(rng::mix(xi_seed, rng::stream::kDropout)));

    nn::ForwardOutput out_t;
    {
        nn::GradFreeze freeze(teacher);
        Tensor x_teacher = augment(x, rng::mix(xi_prime_seed, rng::stream::kAugment));
        out_t = nn::forward_discriminator(
            cfg, teacher, x_teacher,
            nn::Mode::train_mode(rng::mix(xi_prime_seed, rng::stream::kDropout)));
    }

    Tensor ps = class_distribution(out_s.probs, cfg.num_classes, opts.renormalize);
    Tensor pt =
        class_distribution(out_t.probs, cfg.num_classes, opts.renormalize).detach();
    return divergence(opts.div, ps, pt);
}

Tensor ict_consistency(const nn::ModelConfig& cfg, nn::ParamSet& student, nn::ParamSet& teacher,
                       const Tensor& x, const MixupSample& mix, std::uint64_t xi_seed,
                       const ConsistencyOpts& opts) {
    check_perm(mix, x.shape().empty() ? 0 : x.shape()[0]);
    const AugmentFn& augment = augment_or_identity(opts);
    Tensor x_m = augment(x, rng::mix(xi_seed, rng::stream::kAugment));
    Tensor x_n = index_rows(x_m, mix.perm);
    const std::uint64_t pass_seed = rng::mix(xi_seed, rng::stream::kDropout);

    auto out_s = nn::forward_discriminator(cfg, student, mixup(x_m, x_n, mix.lambda),
                                           nn::Mode::train_mode(pass_seed));
    nn::ForwardOutput out_m, out_n;
    {
        nn::GradFreeze freeze(teacher);
        out_m = nn::forward_discriminator(cfg, teacher, x_m, nn::Mode::train_mode(pass_seed));
        out_n = nn::forward_discriminator(cfg, teacher, x_n, nn::Mode::train_mode(pass_seed));
    }

    Tensor ps = class_distribution(out_s.probs, cfg.num_classes, opts.renormalize);
    Tensor pt = mixup(class_distribution(out_m.probs, cfg.num_classes, opts.renormalize),
                      class_distribution(out_n.probs, cfg.num_classes, opts.renormalize),
                      mix.lambda)
                    .detach();
    return divergence(opts.div, ps, pt);
}

Tensor composite_consistency_from_pairs(const nn::ModelConfig& cfg, nn::ParamSet& student,
                                        nn::ParamSet& teacher, const Tensor& xm_student,
                                        const Tensor& xn_student, const Tensor& xm_teacher,
                                        const Tensor& xn_teacher, double lambda,
                                        std::uint64_t student_pass_seed,
                                        std::uint64_t teacher_pass_seed,
                                        const ConsistencyOpts& opts) {
    auto out_s = nn::forward_discriminator(cfg, student, mixup(xm_student, xn_student, lambda),
                                           nn::Mode::train_mode(student_pass_seed));
    nn::ForwardOutput out_m, out_n;
    {
        nn::GradFreeze freeze(teacher);
        out_m = nn::forward_discriminator(cfg, teacher, xm_teacher,
                                          nn::Mode::train_mode(teacher_pass_seed));
        out_n = nn::forward_discriminator(cfg, teacher, xn_teacher,
                                          nn::Mode::train_mode(teacher_pass_seed));
    }

    Tensor pred_term;
    if (opts.placement.kind != PlacementKind::feature) {
        Tensor ps = class_distribution(out_s.probs, cfg.num_classes, opts.renormalize);
        Tensor pt = mixup(class_distribution(out_m.probs, cfg.num_classes, opts.renormalize),
                          class_distribution(out_n.probs, cfg.num_classes, opts.renormalize),
                          lambda)
                        .detach();
        pred_term = divergence(opts.div, ps, pt);
    }
    Tensor feat_term;
    if (opts.placement.kind != PlacementKind::prediction) {
        if (opts.placement.feature_weight <= 0.0)
            throw ValueError("composite_consistency: feature_weight must be > 0");
        Tensor target = mixup(out_m.features, out_n.features, lambda).detach();
        Tensor d = sub(out_s.features, target);
        feat_term = mul_scalar(mean(mul(d, d)), opts.placement.feature_weight);
    }
    if (!pred_term.defined()) return feat_term;
    if (!feat_term.defined()) return pred_term;
    return add(pred_term, feat_term);
}

Tensor composite_consistency(const nn::ModelConfig& cfg, nn::ParamSet& student,
                             nn::ParamSet& teacher, const Tensor& x, const MixupSample& mix,
                             std::uint64_t xi_seed, std::uint64_t xi_prime_seed,
                             const ConsistencyOpts& opts) {
    check_perm(mix, x.shape().empty() ? 0 : x.shape()[0]);
    const AugmentFn& augment = augment_or_identity(opts);
    Tensor x_m = augment(x, rng::mix(xi_seed, rng::stream::kAugment));
    Tensor x_n = index_rows(x_m, mix.perm);
    Tensor x_m_t = augment(x, rng::mix(xi_prime_seed, rng::stream::kAugment));
    Tensor x_n_t = index_rows(x_m_t, mix.perm);
    return composite_consistency_from_pairs(
        cfg, student, teacher, x_m, x_n, x_m_t, x_n_t, mix.lambda,
        rng::mix(xi_seed, rng::stream::kDropout),
        rng::mix(xi_prime_seed, rng::stream::kDropout), opts);
}

LossTerms discriminator_total_loss(const nn::ModelConfig& cfg, nn::ParamSet& student,
                                   nn::ParamSet& teacher, const Tensor& x_labeled,
                                   const std::vector<int>& y_labeled, const Tensor& x_unlabeled,
                                   const Tensor& x_fake, double lambda_eff,
                                   const MixupSample& mix, std::uint64_t xi_seed,
                                   std::uint64_t xi_prime_seed,
                                   const DiscriminatorLossConfig& mode_cfg) {
    if (lambda_eff < 0.0)
        throw ValueError("discriminator_total_loss: lambda_cons must be >= 0");
    const AugmentFn& augment = augment_or_identity(mode_cfg.opts);
    // One student perturbation per iteration: the same xi-derived augmentation
    // and dropout seeds cover the supervised, unsupervised and fake passes.
    const std::uint64_t aug_seed = rng::mix(xi_seed, rng::stream::kAugment);
    const nn::Mode student_mode =
        nn::Mode::train_mode(rng::mix(xi_seed, rng::stream::kDropout));

    auto out_l = nn::forward_discriminator(cfg, student, augment(x_labeled, aug_seed),
                                           student_mode);
    Tensor sup = supervised_loss(out_l.probs, y_labeled);

    auto out_u = nn::forward_discriminator(cfg, student, augment(x_unlabeled, aug_seed),
                                           student_mode);
    auto out_f = nn::forward_discriminator(cfg, student, x_fake, student_mode);
    Tensor unsup = unsupervised_gan_loss(out_u.probs, out_f.probs);

    LossTerms terms;
    terms.lambda_eff = lambda_eff;
    terms.supervised = sup.value();
    terms.unsupervised = unsup.value();

    Tensor total = add(sup, unsup);
    if (mode_cfg.kind != ConsistencyKind::none && lambda_eff != 0.0) {
        Tensor x_cons = mode_cfg.consistency_on_labeled
                            ? concat_rows({x_unlabeled, x_labeled})
                            : x_unlabeled;
        Tensor cons;
        switch (mode_cfg.kind) {
            case ConsistencyKind::mt:
                cons = mt_consistency(cfg, student, teacher, x_cons, xi_seed, xi_prime_seed,
                                      mode_cfg.opts);
                break;
            case ConsistencyKind::ict:
                cons = ict_consistency(cfg, student, teacher, x_cons, mix, xi_seed,
                                       mode_cfg.opts);
                break;
            case ConsistencyKind::composite:
                cons = composite_consistency(cfg, student, teacher, x_cons, mix, xi_seed,
                                             xi_prime_seed, mode_cfg.opts);
                break;
            case ConsistencyKind::none:
                break;
        }
        terms.consistency = cons.value();
        total = add(total, mul_scalar(cons, lambda_eff));
    }
    terms.total = total;
    return terms;
}

Tensor generator_total_loss(const nn::ModelConfig& d_cfg, const nn::ModelConfig& g_cfg,
                            nn::ParamSet& student, nn::ParamSet& generator,
                            const Tensor& x_unlabeled, const Tensor& z, std::uint64_t xi_seed,
                            const AugmentFn& augment) {
    const AugmentFn& aug = augment ? augment : identity_augment();
    Tensor fakes = nn::forward_generator(g_cfg, generator, z, nn::Mode::train_mode(xi_seed));

    nn::GradFreeze freeze(student);
    const nn::Mode mode = nn::Mode::train_mode(rng::mix(xi_seed, rng::stream::kDropout));
    auto real_out = nn::forward_discriminator(
        d_cfg, student, aug(x_unlabeled, rng::mix(xi_seed, rng::stream::kAugment)), mode);
    auto fake_out = nn::forward_discriminator(d_cfg, student, fakes, mode);
    return feature_matching_loss(real_out.features, fake_out.features);
}

}  // namespace ssgan::losses
