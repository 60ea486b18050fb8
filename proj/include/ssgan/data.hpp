#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssgan/losses.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan::data {

// In-memory dataset: inputs scaled to [-1,1], integer labels.
struct Dataset {
    Tensor inputs;  // (N,C,H,W) for images, (N,D) for vector data
    std::vector<int> labels;
    int num_classes = 0;
    std::string name;
    double noise = 0.0;  // generation noise of synthetic sets

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const;
    void validate() const;
};

struct SplitSpec {
    std::size_t n_labeled = 0;
    std::uint64_t seed = 0;
    bool stratified = true;
};

// The unlabeled pool is the full training set with labels stripped; labeled
// indices are a stratified draw inside it.
struct Split {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
};

struct AugmentationSpec {
    int max_translate_px = 2;
    bool horizontal_flip = false;
    enum class Pad { reflect, zero };
    Pad pad_mode = Pad::reflect;
    // additive Gaussian jitter for vector-shaped data (images ignore it);
    // conventionally half the dataset generation noise
    double vector_jitter_sigma = 0.0;
};

struct PairedBatch {
    Tensor x_labeled;
    std::vector<int> y_labeled;
    Tensor x_unlabeled;
    std::uint64_t xi = 0;        // student perturbation seed
    std::uint64_t xi_prime = 0;  // teacher perturbation seed
    losses::MixupSample mix;     // permutation sized to the consistency pool
};

// CIFAR-10 binary batches (3073-byte records: label byte + 3x32x32 pixels).
// split is "train" (data_batch_1..5.bin) or "test" (test_batch.bin).
Dataset load_cifar10(const std::string& dir, const std::string& split);

// SVHN converted to the same record format by `convert-svhn`
// (svhn_train.bin / svhn_test.bin in dir).
Dataset load_svhn(const std::string& dir, const std::string& split);

// One file of 3073-byte records.
Dataset load_record_file(const std::string& path, const std::string& name);

// Converts an SVHN .mat container (X: 32x32x3xN uint8, y: Nx1) into the
// record format above. Labels 1..10 map to 0..9 (10 is the digit zero).
void convert_svhn_mat(const std::string& mat_path, const std::string& out_path);

// two_moons: interleaved 2-D crescents (K=2). blobs: three Gaussian clusters
// (K=3). bars: 8x8 single-channel horizontal/vertical bar images (K=2).
Dataset make_synthetic(const std::string& kind, std::size_t n, double noise,
                       std::uint64_t seed);

// Named dataset dispatch used by the CLI: synthetic kinds or cifar10/svhn.
Dataset load_dataset(const std::string& name, const std::string& dir,
                     const std::string& split, std::size_t n, double noise,
                     std::uint64_t seed);

Split make_split(const Dataset& ds, const SplitSpec& spec);

// Seeded per-sample augmentation: random translation with reflect/zero fill
// and optional horizontal flips for images, Gaussian jitter for vectors.
Tensor augment(const Tensor& x, const AugmentationSpec& spec, std::uint64_t seed);
losses::AugmentFn make_augment_fn(const AugmentationSpec& spec);

struct BatchConfig {
    std::size_t batch_labeled = 128;
    std::size_t batch_unlabeled = 128;
    double alpha = 0.1;  // MixUp Beta parameter
    bool consistency_on_labeled = false;
};

// One epoch of paired batches: a full shuffled pass over the unlabeled pool
// (last partial batch dropped), the labeled pool cycled with reshuffles.
// Everything is a pure function of (split, config, epoch_seed).
class BatchStream {
public:
    BatchStream(const Dataset& ds, const Split& split, const BatchConfig& cfg,
                std::uint64_t epoch_seed);

    std::size_t num_batches() const { return num_batches_; }
    PairedBatch batch(std::size_t i) const;

private:
    const Dataset& ds_;
    BatchConfig cfg_;
    std::uint64_t epoch_seed_;
    std::size_t num_batches_ = 0;
    std::vector<std::size_t> labeled_order_;    // num_batches * batch_labeled entries
    std::vector<std::size_t> unlabeled_order_;  // shuffled unlabeled pool
};

}  // namespace ssgan::data
