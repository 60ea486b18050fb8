#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssgan/data.hpp"
#include "ssgan/losses.hpp"
#include "ssgan/nn.hpp"
#include "ssgan/schedule.hpp"

namespace ssgan::trainer {

struct AdamConfig {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

// First/second moments parallel to the trainable entries of one ParamSet.
struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;

    static AdamState init_for(const nn::ParamSet& params);
};

// Bias-corrected Adam update reading gradients from the params' grad buffers.
void adam_step(nn::ParamSet& params, AdamState& state, double lr, const AdamConfig& cfg);

struct DataConfig {
    std::string name = "two_moons";
    std::string dir;            // record files for cifar10/svhn
    std::size_t n = 1000;       // synthetic train size
    std::size_t test_n = 1000;  // synthetic test size
    double noise = 0.1;
    std::size_t n_labeled = 6;
    std::uint64_t split_seed = 1;
    bool stratified = true;
};

struct TrainConfig {
    std::uint64_t seed = 1;
    int threads = 0;  // 0 keeps the OpenMP default
    int eval_every = 10;
    int checkpoint_every = 50;
    DataConfig dataset;
    data::AugmentationSpec aug;
    std::string disc_preset = "mlp-2d";
    std::string gen_preset = "mlp-2d-gen";
    std::size_t batch_labeled = 128;
    std::size_t batch_unlabeled = 128;
    losses::ConsistencyKind kind = losses::ConsistencyKind::composite;
    losses::Divergence divergence = losses::Divergence::mse;
    losses::ConsistencyPlacement placement;
    bool consistency_on_labeled = false;
    bool renormalize = true;
    schedule::ScheduleConfig sched;
    AdamConfig adam;

    void validate() const;
};

// One row per evaluation. Everything except `seconds` is deterministic per
// (config, seed); the CSV therefore carries every field but `seconds`.
struct MetricsRecord {
    int epoch = 0;  // epochs completed
    double lr = 0.0;
    double lambda_eff = 0.0;
    double loss_supervised = 0.0;
    double loss_unsupervised = 0.0;
    double loss_consistency = 0.0;
    double loss_generator = 0.0;
    double student_error = 0.0;  // percent
    double teacher_error = 0.0;  // percent
    double seconds = 0.0;        // wall clock since run start
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);

// Argmax over the K real classes (fake class ignored, ties to the lowest
// index), eval mode; returns percent misclassified.
double evaluate(const nn::ModelConfig& cfg, nn::ParamSet& params, const data::Dataset& test);

std::vector<int> predict(const nn::ModelConfig& cfg, nn::ParamSet& params, const Tensor& inputs);

// CSV export of the feature embeddings (id, label, f0..fF-1), eval mode.
void export_embeddings(const nn::ModelConfig& cfg, nn::ParamSet& params,
                       const data::Dataset& ds, const std::string& out_path);

struct TrainerState {
    nn::ModelConfig d_cfg, g_cfg;
    nn::ParamSet student, teacher, generator;
    AdamState adam_student, adam_generator;
    int epochs_done = 0;
};

class Trainer {
public:
    Trainer(const TrainConfig& cfg, data::Dataset train, data::Dataset test);

    // D step on Eq.-style total loss, G step on feature matching, then the
    // EMA teacher update. Throws DivergenceError with the term breakdown if
    // the loss goes non-finite.
    losses::LossTerms train_iteration(const data::PairedBatch& batch, int epoch,
                                      std::size_t iter_index, double* generator_loss = nullptr);

    MetricsRecord run_epoch(int epoch);

    // Trains from state().epochs_done to sched.total_epochs. on_eval fires
    // for every metrics row; when checkpoint_dir is non-empty a checkpoint is
    // written every checkpoint_every epochs and at the end.
    std::vector<MetricsRecord> run(
        const std::function<void(const MetricsRecord&)>& on_eval = {},
        const std::string& checkpoint_dir = "");

    double evaluate_student() { return evaluate(state_.d_cfg, state_.student, test_); }
    double evaluate_teacher() { return evaluate(state_.d_cfg, state_.teacher, test_); }

    TrainerState& state() { return state_; }
    const TrainConfig& config() const { return cfg_; }
    const data::Dataset& train_set() const { return train_; }
    const data::Dataset& test_set() const { return test_; }
    const data::Split& split() const { return split_; }

    // resolved config JSON embedded into checkpoints (set by the CLI)
    void set_config_json(std::string j) { config_json_ = std::move(j); }

private:
    TrainConfig cfg_;
    data::Dataset train_, test_;
    data::Split split_;
    TrainerState state_;
    losses::DiscriminatorLossConfig dloss_cfg_;
    std::string config_json_;
};

// Little-endian float32 arrays plus a JSON manifest (names, shapes, epoch,
// seed, config, format version, crc32 of the data blob). Saving snaps the
// live state to the stored 32-bit precision so a resumed run continues
// exactly like an uninterrupted one that saved at the same epoch.
void checkpoint_save(const std::string& path, TrainerState& state,
                     const std::string& config_json, std::uint64_t seed);

// Loads into a state built from the same configs; throws CheckpointError on
// version or checksum mismatch without touching the destination.
void checkpoint_load(const std::string& path, TrainerState& state);

// The resolved config JSON stored in a checkpoint (for standalone eval).
std::string checkpoint_config_json(const std::string& path);

}  // namespace ssgan::trainer
