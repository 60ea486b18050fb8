#pragma once

#include <cstdint>

namespace ssgan::schedule {

struct ScheduleConfig {
    int total_epochs = 600;
    int lr_const_epochs = 400;  // constant lr, then linear decay to zero
    int rampup_epochs = 200;
    double base_lr = 3e-4;
    double lambda_cons_max = 10.0;
    double alpha = 0.1;  // Beta(alpha, alpha) for MixUp
    double ema_k = 0.99;

    void validate() const;
};

// exp(-5 (1-gamma)^2) with gamma = min(epoch / rampup_epochs, 1).
double rampup(int epoch, int rampup_epochs);

double learning_rate(int epoch, const ScheduleConfig& cfg);

// One Beta(alpha, alpha) draw via two Gamma draws, deterministic per seed.
double sample_lambda(double alpha, std::uint64_t rng_seed);

double consistency_weight(int epoch, const ScheduleConfig& cfg);

}  // namespace ssgan::schedule
