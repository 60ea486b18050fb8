#include "ssgan/schedule.hpp"

#include <cmath>
#include <string>

#include "ssgan/errors.hpp"
#include "ssgan/rng.hpp"

namespace ssgan::schedule {

void ScheduleConfig::validate() const {
    if (total_epochs <= 0 || lr_const_epochs <= 0 || rampup_epochs <= 0)
        throw ValueError("schedule: epoch counts must be positive");
    if (rampup_epochs > total_epochs)
        throw ValueError("schedule: rampup_epochs exceeds total_epochs");
    if (lr_const_epochs > total_epochs)
        throw ValueError("schedule: lr_const_epochs exceeds total_epochs");
    if (base_lr <= 0.0) throw ValueError("schedule: base_lr must be positive");
    if (lambda_cons_max < 0.0) throw ValueError("schedule: lambda_cons must be >= 0");
    if (alpha <= 0.0) throw ValueError("schedule: alpha must be positive");
    if (!(ema_k >= 0.0 && ema_k <= 1.0)) throw ValueError("schedule: ema_k outside [0,1]");
}

double rampup(int epoch, int rampup_epochs) {
    if (rampup_epochs <= 0) throw ValueError("rampup: rampup_epochs must be positive");
    if (epoch < 0) throw ValueError("rampup: negative epoch");
    const double gamma =
        std::min(static_cast<double>(epoch) / static_cast<double>(rampup_epochs), 1.0);
    return std::exp(-5.0 * (1.0 - gamma) * (1.0 - gamma));
}

double learning_rate(int epoch, const ScheduleConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.total_epochs)
        throw ValueError("learning_rate: epoch " + std::to_string(epoch) + " outside [0," +
                         std::to_string(cfg.total_epochs) + ")");
    if (epoch < cfg.lr_const_epochs) return cfg.base_lr;
    return cfg.base_lr * static_cast<double>(cfg.total_epochs - epoch) /
           static_cast<double>(cfg.total_epochs - cfg.lr_const_epochs);
}

double sample_lambda(double alpha, std::uint64_t rng_seed) {
    if (alpha <= 0.0) throw ValueError("sample_lambda: alpha must be positive");
    rng::Rng gen(rng_seed);
    const double g1 = gen.gamma(alpha);
    const double g2 = gen.gamma(alpha);
    if (g1 + g2 == 0.0) return 0.5;  // both draws underflowed
    return g1 / (g1 + g2);
}

double consistency_weight(int epoch, const ScheduleConfig& cfg) {
    return cfg.lambda_cons_max * rampup(epoch, cfg.rampup_epochs);
}

}  // namespace ssgan::schedule
