#include "ssgan/nn.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "ssgan/rng.hpp"

namespace ssgan::nn {

namespace {

constexpr double kInitStddev = 0.05;
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

std::string layer_label(std::size_t i, const LayerSpec& l) {
    return "layer " + std::to_string(i) + " (" + l.name + ")";
}

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv: return "conv";
        case LayerKind::conv_transpose: return "conv_transpose";
        case LayerKind::dropout: return "dropout";
        case LayerKind::global_average_pool: return "global_average_pool";
        case LayerKind::reshape: return "reshape";
    }
    return "?";
}

LayerKind kind_from_name(const std::string& s) {
    for (LayerKind k : {LayerKind::dense, LayerKind::conv, LayerKind::conv_transpose,
                        LayerKind::dropout, LayerKind::global_average_pool, LayerKind::reshape})
        if (s == kind_name(k)) return k;
    throw ValueError("unknown layer kind: " + s);
}

const char* act_name(Act a) {
    switch (a) {
        case Act::none: return "none";
        case Act::relu: return "relu";
        case Act::lrelu: return "lrelu";
        case Act::tanh: return "tanh";
        case Act::sigmoid: return "sigmoid";
    }
    return "?";
}

Act act_from_name(const std::string& s) {
    for (Act a : {Act::none, Act::relu, Act::lrelu, Act::tanh, Act::sigmoid})
        if (s == act_name(a)) return a;
    throw ValueError("unknown activation: " + s);
}

}  // namespace

// ---- ModelConfig ----

std::vector<Shape> ModelConfig::propagate_shapes() const {
    std::vector<Shape> out;
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::dense:
                if (cur.size() != 1 || cur[0] != l.in)
                    throw ShapeError(layer_label(i, l) + ": expects input (" +
                                     std::to_string(l.in) + "), got " + shape_to_string(cur));
                cur = {l.out};
                break;
            case LayerKind::conv: {
                if (cur.size() != 3 || cur[0] != l.in)
                    throw ShapeError(layer_label(i, l) + ": expects input (" +
                                     std::to_string(l.in) + ",H,W), got " + shape_to_string(cur));
                if (cur[1] + 2 * l.pad < l.kernel || cur[2] + 2 * l.pad < l.kernel)
                    throw ShapeError(layer_label(i, l) + ": kernel does not fit input " +
                                     shape_to_string(cur));
                const std::size_t oh = (cur[1] + 2 * l.pad - l.kernel) / l.stride + 1;
                const std::size_t ow = (cur[2] + 2 * l.pad - l.kernel) / l.stride + 1;
                cur = {l.out, oh, ow};
                break;
            }
            case LayerKind::conv_transpose: {
                if (cur.size() != 3 || cur[0] != l.in)
                    throw ShapeError(layer_label(i, l) + ": expects input (" +
                                     std::to_string(l.in) + ",H,W), got " + shape_to_string(cur));
                const std::ptrdiff_t oh =
                    static_cast<std::ptrdiff_t>((cur[1] - 1) * l.stride + l.kernel +
                                                l.output_pad) -
                    2 * static_cast<std::ptrdiff_t>(l.pad);
                const std::ptrdiff_t ow =
                    static_cast<std::ptrdiff_t>((cur[2] - 1) * l.stride + l.kernel +
                                                l.output_pad) -
                    2 * static_cast<std::ptrdiff_t>(l.pad);
                if (oh <= 0 || ow <= 0)
                    throw ShapeError(layer_label(i, l) + ": non-positive output size");
                cur = {l.out, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
                break;
            }
            case LayerKind::dropout:
                break;
            case LayerKind::global_average_pool:
                if (cur.size() != 3)
                    throw ShapeError(layer_label(i, l) + ": expects (C,H,W), got " +
                                     shape_to_string(cur));
                cur = {cur[0]};
                break;
            case LayerKind::reshape:
                if (shape_numel(l.target) != shape_numel(cur))
                    throw ShapeError(layer_label(i, l) + ": cannot reshape " +
                                     shape_to_string(cur) + " to " + shape_to_string(l.target));
                cur = l.target;
                break;
        }
        out.push_back(cur);
    }
    return out;
}

Shape ModelConfig::output_shape() const {
    auto shapes = propagate_shapes();
    return shapes.empty() ? input_shape : shapes.back();
}

std::size_t ModelConfig::head_index() const {
    for (std::size_t i = layers.size(); i-- > 0;)
        if (layers[i].kind == LayerKind::dense) return i;
    throw ShapeError("model " + name + " has no dense layer");
}

// ---- presets ----

namespace {

LayerSpec conv(std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
               std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.in = in;
    l.out = out;
    l.kernel = k;
    l.pad = pad;
    l.stride = stride;
    l.weight_norm = true;
    l.act = Act::lrelu;
    l.slope = 0.2;
    return l;
}

LayerSpec deconv(std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
                 std::size_t stride, std::size_t output_pad) {
    LayerSpec l;
    l.kind = LayerKind::conv_transpose;
    l.in = in;
    l.out = out;
    l.kernel = k;
    l.pad = pad;
    l.stride = stride;
    l.output_pad = output_pad;
    l.batch_norm = true;
    l.act = Act::relu;
    return l;
}

LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec drop(double p) {
    LayerSpec l;
    l.kind = LayerKind::dropout;
    l.p = p;
    return l;
}

void autoname(ModelConfig& cfg) {
    for (std::size_t i = 0; i < cfg.layers.size(); ++i)
        if (cfg.layers[i].name.empty())
            cfg.layers[i].name = std::string(kind_name(cfg.layers[i].kind)) + std::to_string(i);
}

}  // namespace

ModelConfig discriminator_preset(const std::string& name, int num_classes) {
    if (num_classes < 2) throw ValueError("discriminator_preset: num_classes must be >= 2");
    const std::size_t head = static_cast<std::size_t>(num_classes) + 1;
    ModelConfig cfg;
    cfg.name = name;
    cfg.num_classes = num_classes;
    if (name == "paper-discriminator") {
        cfg.input_shape = {3, 32, 32};
        cfg.layers = {conv(3, 128, 3, 1, 1),   conv(128, 128, 3, 1, 1), conv(128, 128, 3, 1, 2),
                      drop(0.5),               conv(128, 256, 3, 1, 1), conv(256, 256, 3, 1, 1),
                      conv(256, 256, 3, 1, 2), drop(0.5),               conv(256, 512, 3, 0, 1),
                      conv(512, 256, 1, 0, 1), conv(256, 128, 1, 0, 1)};
        LayerSpec gap;
        gap.kind = LayerKind::global_average_pool;
        cfg.layers.push_back(gap);
        LayerSpec fc = dense(128, head);
        fc.weight_norm = true;
        cfg.layers.push_back(fc);
    } else if (name == "mlp-2d") {
        cfg.input_shape = {2};
        LayerSpec h1 = dense(2, 64);
        h1.weight_norm = true;
        h1.act = Act::lrelu;
        LayerSpec h2 = dense(64, 64);
        h2.weight_norm = true;
        h2.act = Act::lrelu;
        LayerSpec fc = dense(64, head);
        fc.weight_norm = true;
        cfg.layers = {h1, h2, fc};
    } else if (name == "bars-conv") {
        cfg.input_shape = {1, 8, 8};
        cfg.layers = {conv(1, 16, 3, 1, 1), conv(16, 16, 3, 1, 2), drop(0.5),
                      conv(16, 32, 3, 1, 1)};
        LayerSpec gap;
        gap.kind = LayerKind::global_average_pool;
        cfg.layers.push_back(gap);
        LayerSpec fc = dense(32, head);
        fc.weight_norm = true;
        cfg.layers.push_back(fc);
    } else {
        throw ValueError("unknown discriminator preset: " + name);
    }
    autoname(cfg);
    cfg.propagate_shapes();
    return cfg;
}

ModelConfig generator_preset(const std::string& name) {
    ModelConfig cfg;
    cfg.name = name;
    if (name == "paper-generator") {
        cfg.latent_dim = 100;
        cfg.input_shape = {100};
        LayerSpec fc = dense(100, 8192);
        fc.batch_norm = true;
        fc.act = Act::relu;
        LayerSpec rs;
        rs.kind = LayerKind::reshape;
        rs.target = {512, 4, 4};
        LayerSpec out = deconv(128, 3, 5, 2, 2, 1);
        out.batch_norm = false;
        out.weight_norm = true;
        out.act = Act::tanh;
        cfg.layers = {fc, rs, deconv(512, 256, 5, 2, 2, 1), deconv(256, 128, 5, 2, 2, 1), out};
    } else if (name == "mlp-2d-gen") {
        cfg.latent_dim = 16;
        cfg.input_shape = {16};
        LayerSpec h1 = dense(16, 64);
        h1.batch_norm = true;
        h1.act = Act::relu;
        LayerSpec h2 = dense(64, 64);
        h2.batch_norm = true;
        h2.act = Act::relu;
        LayerSpec out = dense(64, 2);
        out.weight_norm = true;
        out.act = Act::tanh;
        cfg.layers = {h1, h2, out};
    } else if (name == "bars-gen") {
        cfg.latent_dim = 16;
        cfg.input_shape = {16};
        LayerSpec fc = dense(16, 128);
        fc.batch_norm = true;
        fc.act = Act::relu;
        LayerSpec rs;
        rs.kind = LayerKind::reshape;
        rs.target = {8, 4, 4};
        LayerSpec up = deconv(8, 8, 4, 1, 2, 0);
        LayerSpec out = deconv(8, 1, 3, 1, 1, 0);
        out.batch_norm = false;
        out.weight_norm = true;
        out.act = Act::tanh;
        cfg.layers = {fc, rs, up, out};
    } else {
        throw ValueError("unknown generator preset: " + name);
    }
    autoname(cfg);
    cfg.propagate_shapes();
    return cfg;
}

std::vector<std::string> discriminator_preset_names() {
    return {"paper-discriminator", "mlp-2d", "bars-conv"};
}
std::vector<std::string> generator_preset_names() {
    return {"paper-generator", "mlp-2d-gen", "bars-gen"};
}

// ---- JSON round-trip ----

std::string model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["name"] = cfg.name;
    j["input_shape"] = cfg.input_shape;
    j["num_classes"] = cfg.num_classes;
    j["latent_dim"] = cfg.latent_dim;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : cfg.layers) {
        nlohmann::json jl;
        jl["kind"] = kind_name(l.kind);
        jl["name"] = l.name;
        jl["in"] = l.in;
        jl["out"] = l.out;
        jl["kernel"] = l.kernel;
        jl["pad"] = l.pad;
        jl["stride"] = l.stride;
        jl["output_pad"] = l.output_pad;
        jl["weight_norm"] = l.weight_norm;
        jl["batch_norm"] = l.batch_norm;
        jl["act"] = act_name(l.act);
        jl["slope"] = l.slope;
        jl["p"] = l.p;
        jl["target"] = l.target;
        layers.push_back(jl);
    }
    j["layers"] = layers;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.name = j.at("name").get<std::string>();
    cfg.input_shape = j.at("input_shape").get<Shape>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.latent_dim = j.at("latent_dim").get<int>();
    for (const auto& jl : j.at("layers")) {
        LayerSpec l;
        l.kind = kind_from_name(jl.at("kind").get<std::string>());
        l.name = jl.at("name").get<std::string>();
        l.in = jl.at("in").get<std::size_t>();
        l.out = jl.at("out").get<std::size_t>();
        l.kernel = jl.at("kernel").get<std::size_t>();
        l.pad = jl.at("pad").get<std::size_t>();
        l.stride = jl.at("stride").get<std::size_t>();
        l.output_pad = jl.at("output_pad").get<std::size_t>();
        l.weight_norm = jl.at("weight_norm").get<bool>();
        l.batch_norm = jl.at("batch_norm").get<bool>();
        l.act = act_from_name(jl.at("act").get<std::string>());
        l.slope = jl.at("slope").get<double>();
        l.p = jl.at("p").get<double>();
        l.target = jl.at("target").get<Shape>();
        cfg.layers.push_back(l);
    }
    cfg.propagate_shapes();
    return cfg;
}

// ---- ParamSet ----

void ParamSet::add(const std::string& name, Tensor t, bool trainable) {
    if (index_.count(name)) throw ValueError("ParamSet: duplicate entry " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(t), trainable});
}

bool ParamSet::has(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParamSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("ParamSet: no entry " + name);
    return entries_[it->second].tensor;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("ParamSet: no entry " + name);
    return entries_[it->second].tensor;
}

std::vector<Tensor> ParamSet::tensors(bool trainable_only) const {
    std::vector<Tensor> out;
    for (const auto& e : entries_)
        if (!trainable_only || e.trainable) out.push_back(e.tensor);
    return out;
}

std::size_t ParamSet::total_numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

std::vector<double> ParamSet::flatten() const {
    std::vector<double> flat;
    flat.reserve(total_numel());
    for (const auto& e : entries_)
        flat.insert(flat.end(), e.tensor.data().begin(), e.tensor.data().end());
    return flat;
}

void ParamSet::unflatten(std::span<const double> flat) {
    if (flat.size() != total_numel())
        throw ShapeError("ParamSet::unflatten: got " + std::to_string(flat.size()) +
                         " values, need " + std::to_string(total_numel()));
    std::size_t off = 0;
    for (auto& e : entries_) {
        auto dst = e.tensor.mutable_data();
        std::copy(flat.begin() + off, flat.begin() + off + dst.size(), dst.begin());
        off += dst.size();
    }
}

void ParamSet::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamSet::set_requires_grad(bool rg) {
    for (auto& e : entries_)
        if (e.trainable) e.tensor.set_requires_grad(rg);
}

ParamSet ParamSet::clone(bool requires_grad) const {
    ParamSet out;
    for (const auto& e : entries_) {
        Tensor t = e.tensor.clone();
        if (e.trainable && requires_grad) t.set_requires_grad(true);
        out.add(e.name, std::move(t), e.trainable);
    }
    return out;
}

GradFreeze::GradFreeze(ParamSet& params) : params_(params) {
    for (auto& e : params_.entries()) {
        saved_.push_back(e.tensor.requires_grad());
        if (e.trainable) e.tensor.set_requires_grad(false);
    }
}

GradFreeze::~GradFreeze() {
    for (std::size_t i = 0; i < params_.entries().size(); ++i)
        if (params_.entries()[i].trainable)
            params_.entries()[i].tensor.set_requires_grad(saved_[i]);
}

// ---- build ----

namespace {

Tensor normal_init(const Shape& shape, rng::Rng& gen) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = gen.normal(0.0, kInitStddev);
    return Tensor::from_vector(std::move(v), shape, true);
}

// Per-unit L2 norms of v laid out like the weight-norm g tensor.
std::vector<double> unit_norms(const Tensor& v) {
    const Shape& s = v.shape();
    if (s.size() == 2) {
        // dense (in,out): one norm per column
        std::vector<double> norms(s[1], 0.0);
        for (std::size_t i = 0; i < s[0]; ++i)
            for (std::size_t j = 0; j < s[1]; ++j) norms[j] += v.at(i * s[1] + j) * v.at(i * s[1] + j);
        for (auto& n : norms) n = std::sqrt(n);
        return norms;
    }
    // conv (out,in,k,k): one norm per filter
    const std::size_t fan = s[1] * s[2] * s[3];
    std::vector<double> norms(s[0], 0.0);
    for (std::size_t o = 0; o < s[0]; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < fan; ++i) acc += v.at(o * fan + i) * v.at(o * fan + i);
        norms[o] = std::sqrt(acc);
    }
    return norms;
}

Shape bn_param_shape(const Shape& activation_shape_per_sample) {
    // dense activations (F) -> (1,F); conv activations (C,H,W) -> (1,C,1,1)
    if (activation_shape_per_sample.size() == 1) return {1, activation_shape_per_sample[0]};
    return {1, activation_shape_per_sample[0], 1, 1};
}

}  // namespace

ParamSet build_model(const ModelConfig& config, std::uint64_t init_seed) {
    auto shapes = config.propagate_shapes();
    if (config.num_classes > 0) {
        const LayerSpec& head = config.layers.at(config.head_index());
        if (head.out != static_cast<std::size_t>(config.num_classes) + 1)
            throw ShapeError("build_model: discriminator head has " + std::to_string(head.out) +
                             " outputs, expected K+1 = " +
                             std::to_string(config.num_classes + 1));
    }

    ParamSet params;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& l = config.layers[i];
        rng::Rng gen(rng::mix(init_seed, rng::stream::kInit, i));
        if (l.kind == LayerKind::dense || l.kind == LayerKind::conv ||
            l.kind == LayerKind::conv_transpose) {
            const Shape wshape = l.kind == LayerKind::dense
                                     ? Shape{l.in, l.out}
                                     : Shape{l.out, l.in, l.kernel, l.kernel};
            Tensor w = normal_init(wshape, gen);
            const Shape bshape =
                l.kind == LayerKind::dense ? Shape{l.out} : Shape{l.out, 1, 1};
            Tensor b = Tensor::zeros(bshape, true);
            if (l.weight_norm) {
                auto norms = unit_norms(w);
                const Shape gshape = l.kind == LayerKind::dense
                                         ? Shape{1, l.out}
                                         : Shape{l.out, 1, 1, 1};
                Tensor g = Tensor::from_vector(std::move(norms), gshape, true);
                params.add(l.name + ".v", std::move(w));
                params.add(l.name + ".g", std::move(g));
            } else {
                params.add(l.name + ".w", std::move(w));
            }
            params.add(l.name + ".b", std::move(b));
            if (l.batch_norm) {
                const Shape ps = bn_param_shape(shapes[i]);
                params.add(l.name + ".bn_gamma", Tensor::full(ps, 1.0, true));
                params.add(l.name + ".bn_beta", Tensor::zeros(ps, true));
                params.add(l.name + ".bn_mean", Tensor::zeros(ps), /*trainable=*/false);
                params.add(l.name + ".bn_var", Tensor::full(ps, 1.0), /*trainable=*/false);
            }
        }
    }
    return params;
}

// ---- weight norm ----

Tensor weight_norm_forward(const Tensor& v, const Tensor& g) {
    const std::size_t rank = v.shape().size();
    if (rank != 2 && rank != 4)
        throw ShapeError("weight_norm: expects dense (in,out) or conv (out,in,k,k), got " +
                         shape_to_string(v.shape()));
    for (double n : unit_norms(v))
        if (n == 0.0) throw ValueError("weight_norm: degenerate direction (zero-norm unit)");
    const std::vector<std::size_t> fan_axes =
        rank == 2 ? std::vector<std::size_t>{0} : std::vector<std::size_t>{1, 2, 3};
    Tensor norm = sqrt(sum(mul(v, v), fan_axes, /*keepdims=*/true));
    return mul(v, div(g, norm));
}

// ---- forward ----

namespace {

Tensor apply_act(const LayerSpec& l, const Tensor& x) {
    switch (l.act) {
        case Act::none: return x;
        case Act::relu: return relu(x);
        case Act::lrelu: return leaky_relu(x, l.slope);
        case Act::tanh: return ssgan::tanh(x);
        case Act::sigmoid: return sigmoid(x);
    }
    return x;
}

Tensor apply_batch_norm(const LayerSpec& l, ParamSet& params, const Tensor& h,
                        const Mode& mode) {
    Tensor gamma = params.at(l.name + ".bn_gamma");
    Tensor beta = params.at(l.name + ".bn_beta");
    Tensor run_mean = params.at(l.name + ".bn_mean");
    Tensor run_var = params.at(l.name + ".bn_var");
    const std::vector<std::size_t> axes =
        h.shape().size() == 2 ? std::vector<std::size_t>{0} : std::vector<std::size_t>{0, 2, 3};
    if (mode.train) {
        Tensor mu = mean(h, axes, /*keepdims=*/true);
        Tensor centered = sub(h, mu);
        Tensor var = mean(mul(centered, centered), axes, /*keepdims=*/true);
        Tensor xhat = div(centered, sqrt(add_scalar(var, kBnEps)));
        // running averages track the batch statistics (momentum 0.9)
        auto rm = run_mean.mutable_data();
        auto rv = run_var.mutable_data();
        for (std::size_t i = 0; i < rm.size(); ++i) {
            rm[i] = kBnMomentum * rm[i] + (1.0 - kBnMomentum) * mu.at(i);
            rv[i] = kBnMomentum * rv[i] + (1.0 - kBnMomentum) * var.at(i);
        }
        return add(mul(gamma, xhat), beta);
    }
    Tensor xhat = div(sub(h, run_mean), sqrt(add_scalar(run_var, kBnEps)));
    return add(mul(gamma, xhat), beta);
}

struct ModelOut {
    Tensor output;
    Tensor features;
};

ModelOut forward_model(const ModelConfig& config, ParamSet& params, const Tensor& x,
                       const Mode& mode) {
    Shape expected{x.shape().empty() ? 0 : x.shape()[0]};
    expected.insert(expected.end(), config.input_shape.begin(), config.input_shape.end());
    if (x.shape() != expected)
        throw ShapeError("forward: input " + shape_to_string(x.shape()) +
                         " does not match model input " + shape_to_string(expected));
    const std::size_t batch = x.shape()[0];

    std::size_t feature_layer = config.layers.size();
    if (config.num_classes > 0) feature_layer = config.head_index();

    Tensor h = x;
    Tensor features;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& l = config.layers[i];
        if (i == feature_layer) features = h;
        switch (l.kind) {
            case LayerKind::dense: {
                Tensor w = l.weight_norm
                               ? weight_norm_forward(params.at(l.name + ".v"),
                                                     params.at(l.name + ".g"))
                               : params.at(l.name + ".w");
                h = add(matmul(h, w), params.at(l.name + ".b"));
                break;
            }
            case LayerKind::conv: {
                Tensor w = l.weight_norm
                               ? weight_norm_forward(params.at(l.name + ".v"),
                                                     params.at(l.name + ".g"))
                               : params.at(l.name + ".w");
                h = add(conv2d(h, w, l.pad, l.stride), params.at(l.name + ".b"));
                break;
            }
            case LayerKind::conv_transpose: {
                Tensor w = l.weight_norm
                               ? weight_norm_forward(params.at(l.name + ".v"),
                                                     params.at(l.name + ".g"))
                               : params.at(l.name + ".w");
                h = add(conv_transpose2d(h, w, l.pad, l.stride, l.output_pad),
                        params.at(l.name + ".b"));
                break;
            }
            case LayerKind::dropout:
                if (mode.train) h = dropout(h, l.p, rng::mix(mode.seed, rng::stream::kDropout, i));
                break;
            case LayerKind::global_average_pool:
                h = global_average_pool(h);
                break;
            case LayerKind::reshape: {
                Shape target{batch};
                target.insert(target.end(), l.target.begin(), l.target.end());
                h = reshape(h, target);
                break;
            }
        }
        if (l.batch_norm) h = apply_batch_norm(l, params, h, mode);
        h = apply_act(l, h);
    }
    return {h, features};
}

}  // namespace

ForwardOutput forward_discriminator(const ModelConfig& config, ParamSet& params,
                                    const Tensor& x, const Mode& mode) {
    if (config.num_classes < 2)
        throw ValueError("forward_discriminator: config has no classes");
    ModelOut out = forward_model(config, params, x, mode);
    ForwardOutput fo;
    fo.logits = out.output;
    fo.probs = softmax(out.output);
    fo.features = out.features;
    return fo;
}

Tensor forward_generator(const ModelConfig& config, ParamSet& params, const Tensor& z,
                         const Mode& mode) {
    if (config.latent_dim <= 0) throw ValueError("forward_generator: config has no latent_dim");
    if (z.shape().size() != 2 ||
        z.shape()[1] != static_cast<std::size_t>(config.latent_dim))
        throw ShapeError("forward_generator: latent " + shape_to_string(z.shape()) +
                         " does not match latent_dim " + std::to_string(config.latent_dim));
    for (double v : z.data())
        if (v < 0.0 || v > 1.0)
            throw ValueError("forward_generator: z must lie in [0,1]");
    return forward_model(config, params, z, mode).output;
}

// ---- EMA ----

void ema_update(ParamSet& teacher, const ParamSet& student, double k) {
    if (!(k >= 0.0 && k <= 1.0)) throw ValueError("ema_update: k must be in [0,1]");
    if (teacher.size() != student.size())
        throw ShapeError("ema_update: parameter sets differ in size");
    for (std::size_t i = 0; i < teacher.entries().size(); ++i) {
        auto& te = teacher.entries()[i];
        const auto& se = student.entries()[i];
        if (te.name != se.name)
            throw ShapeError("ema_update: key mismatch " + te.name + " vs " + se.name);
        if (te.tensor.shape() != se.tensor.shape())
            throw ShapeError("ema_update: shape mismatch at " + te.name + ": " +
                             shape_to_string(te.tensor.shape()) + " vs " +
                             shape_to_string(se.tensor.shape()));
        auto t = te.tensor.mutable_data();
        auto s = se.tensor.data();
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = k * t[j] + (1.0 - k) * s[j];
    }
}

}  // namespace ssgan::nn
