#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan::nn {

enum class Act { none, relu, lrelu, tanh, sigmoid };

enum class LayerKind { dense, conv, conv_transpose, dropout, global_average_pool, reshape };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::string name;  // auto-assigned from kind + index when empty
    std::size_t in = 0, out = 0;  // features (dense) or channels (conv)
    std::size_t kernel = 0, pad = 0, stride = 1, output_pad = 0;
    bool weight_norm = false;
    bool batch_norm = false;
    Act act = Act::none;
    double slope = 0.2;  // lrelu
    double p = 0.5;      // dropout
    Shape target;        // reshape target, per sample
};

// Declarative architecture. Discriminators carry num_classes K and end in a
// dense head with K+1 outputs; generators carry latent_dim.
struct ModelConfig {
    std::string name = "custom";
    Shape input_shape;
    std::vector<LayerSpec> layers;
    int num_classes = 0;
    int latent_dim = 0;

    // Per-layer output shapes (per sample). Throws ShapeError naming the
    // offending layer when consecutive layers do not compose.
    std::vector<Shape> propagate_shapes() const;
    Shape output_shape() const;
    // Index of the final dense layer; the activations entering it are the
    // model's feature embedding.
    std::size_t head_index() const;
};

ModelConfig discriminator_preset(const std::string& name, int num_classes);
ModelConfig generator_preset(const std::string& name);
std::vector<std::string> discriminator_preset_names();
std::vector<std::string> generator_preset_names();

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Named, ordered collection of tensors for one network. Running batch-norm
// statistics live here too, marked non-trainable.
class ParamSet {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool trainable = true;
    };

    void add(const std::string& name, Tensor t, bool trainable = true);
    bool has(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::vector<Tensor> tensors(bool trainable_only = false) const;
    std::size_t total_numel() const;
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);

    void zero_grad();
    void set_requires_grad(bool rg);  // trainable entries only
    ParamSet clone(bool requires_grad) const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

// Temporarily freezes the trainable entries of a ParamSet so a forward pass
// through it contributes no gradients (generator step, teacher branches).
class GradFreeze {
public:
    explicit GradFreeze(ParamSet& params);
    ~GradFreeze();
    GradFreeze(const GradFreeze&) = delete;
    GradFreeze& operator=(const GradFreeze&) = delete;

private:
    ParamSet& params_;
    std::vector<bool> saved_;
};

struct Mode {
    bool train = false;
    std::uint64_t seed = 0;
    static Mode train_mode(std::uint64_t seed) { return {true, seed}; }
    static Mode eval() { return {}; }
};

struct ForwardOutput {
    Tensor logits;    // B x (K+1)
    Tensor probs;     // softmax(logits), rows sum to 1
    Tensor features;  // activations entering the final dense layer
};

ParamSet build_model(const ModelConfig& config, std::uint64_t init_seed);

ForwardOutput forward_discriminator(const ModelConfig& config, ParamSet& params,
                                    const Tensor& x, const Mode& mode);
Tensor forward_generator(const ModelConfig& config, ParamSet& params, const Tensor& z,
                         const Mode& mode);

// Effective weight w = g * v / ||v||, one norm per output unit (columns of a
// dense (in,out) matrix, filters of a conv (out,in,k,k) stack).
Tensor weight_norm_forward(const Tensor& v, const Tensor& g);

// teacher <- k * teacher + (1-k) * student, entrywise, running stats included.
void ema_update(ParamSet& teacher, const ParamSet& student, double k);

}  // namespace ssgan::nn
