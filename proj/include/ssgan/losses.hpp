#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ssgan/nn.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan::losses {

enum class Divergence { mse, kl };
enum class ConsistencyKind { none, mt, ict, composite };
enum class PlacementKind { prediction, feature, both };

struct ConsistencyPlacement {
    PlacementKind kind = PlacementKind::prediction;
    double feature_weight = 1.0;
};

// A batch-level MixUp draw: one lambda plus the shuffle that produces the
// second view x_n from x_m.
struct MixupSample {
    double lambda = 1.0;
    std::vector<std::size_t> perm;
};

// Seeded augmentation hook; the data module provides the real one.
using AugmentFn = std::function<Tensor(const Tensor&, std::uint64_t)>;
AugmentFn identity_augment();

// -log D(y|x) averaged over the batch, using the full (K+1)-softmax
// probability of the true class.
Tensor supervised_loss(const Tensor& probs, const std::vector<int>& labels);

// -E log D(K+1|G(z)) - E log(1 - D(K+1|x)); probabilities clamped to
// [1e-12, 1-1e-12] before the logs.
Tensor unsupervised_gan_loss(const Tensor& real_probs, const Tensor& fake_probs);

// Squared L2 distance between batch-mean features.
Tensor feature_matching_loss(const Tensor& real_features, const Tensor& fake_features);

// lambda * u + (1 - lambda) * v
Tensor mixup(const Tensor& u, const Tensor& v, double lambda);

// mse: mean over batch and classes of squared differences.
// kl:  KL(teacher || student) averaged over the batch; the teacher side is
//      treated as constant.
Tensor divergence(Divergence kind, const Tensor& student_probs, const Tensor& teacher_probs);

// K-class distribution from (K+1)-softmax rows: the first K probabilities,
// renormalized to sum to one unless renormalize is off.
Tensor class_distribution(const Tensor& probs, int num_classes, bool renormalize);

struct ConsistencyOpts {
    Divergence div = Divergence::mse;
    ConsistencyPlacement placement;
    bool renormalize = true;
    AugmentFn augment;  // identity when empty
};

Tensor mt_consistency(const nn::ModelConfig& cfg, nn::ParamSet& student, nn::ParamSet& teacher,
                      const Tensor& x, std::uint64_t xi_seed, std::uint64_t xi_prime_seed,
                      const ConsistencyOpts& opts);

// Shared augmentation on both branches: one seed conditions x_m and x_n.
Tensor ict_consistency(const nn::ModelConfig& cfg, nn::ParamSet& student, nn::ParamSet& teacher,
                       const Tensor& x, const MixupSample& mix, std::uint64_t xi_seed,
                       const ConsistencyOpts& opts);

// Independent augmentations per branch (student xi, teacher xi') with the
// same shuffle, MixUp on the student input and on the teacher predictions.
Tensor composite_consistency(const nn::ModelConfig& cfg, nn::ParamSet& student,
                             nn::ParamSet& teacher, const Tensor& x, const MixupSample& mix,
                             std::uint64_t xi_seed, std::uint64_t xi_prime_seed,
                             const ConsistencyOpts& opts);

// Core of composite consistency on pre-built branch pairs; exposed so the
// (x_m,x_n,lambda) <-> (x_n,x_m,1-lambda) symmetry can be probed directly.
Tensor composite_consistency_from_pairs(const nn::ModelConfig& cfg, nn::ParamSet& student,
                                        nn::ParamSet& teacher, const Tensor& xm_student,
                                        const Tensor& xn_student, const Tensor& xm_teacher,
                                        const Tensor& xn_teacher, double lambda,
                                        std::uint64_t student_pass_seed,
                                        std::uint64_t teacher_pass_seed,
                                        const ConsistencyOpts& opts);

struct DiscriminatorLossConfig {
    ConsistencyKind kind = ConsistencyKind::composite;
    ConsistencyOpts opts;
    bool consistency_on_labeled = false;
};

struct LossTerms {
    Tensor total;
    double supervised = 0.0;
    double unsupervised = 0.0;
    double consistency = 0.0;
    double lambda_eff = 0.0;
};

// Full discriminator objective: supervised + unsupervised GAN terms plus
// lambda_eff times the chosen consistency loss. Student-side augmentation and
// dropout derive from xi, teacher-side from xi_prime; the consistency term is
// skipped entirely when the kind is none or lambda_eff is zero, which makes
// the reduction to the plain semi-GAN objective bit-exact.
LossTerms discriminator_total_loss(const nn::ModelConfig& cfg, nn::ParamSet& student,
                                   nn::ParamSet& teacher, const Tensor& x_labeled,
                                   const std::vector<int>& y_labeled, const Tensor& x_unlabeled,
                                   const Tensor& x_fake, double lambda_eff,
                                   const MixupSample& mix, std::uint64_t xi_seed,
                                   std::uint64_t xi_prime_seed,
                                   const DiscriminatorLossConfig& mode_cfg);

// Feature matching against the current student; the student receives no
// gradient here.
Tensor generator_total_loss(const nn::ModelConfig& d_cfg, const nn::ModelConfig& g_cfg,
                            nn::ParamSet& student, nn::ParamSet& generator,
                            const Tensor& x_unlabeled, const Tensor& z, std::uint64_t xi_seed,
                            const AugmentFn& augment);

}  // namespace ssgan::losses
