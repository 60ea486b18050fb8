#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssgan/errors.hpp"

namespace ssgan {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

// One recorded value in the computation graph. Non-leaf nodes carry a
// backward function that pulls this node's grad and pushes into the parents'.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first written; empty == all zeros
    bool requires_grad = false;
    bool leaf = true;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Ordered record of the operations reachable from a root node, inputs before
// users. backward() walks it once in reverse.
struct Tape {
    std::vector<detail::Node*> order;
    static Tape build(detail::Node* root);
};

// Dense row-major float64 tensor with optional gradient tracking. Copying a
// Tensor copies the handle; ops build a fresh graph each call (define-by-run)
// and the graph lives exactly as long as some Tensor still references it.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double v, bool requires_grad = false);
    static Tensor scalar(double v);
    static Tensor from_vector(std::vector<double> data, const Shape& shape,
                              bool requires_grad = false);

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::size_t numel() const { return n_->value.size(); }
    bool is_scalar() const { return numel() == 1; }

    std::span<const double> data() const { return n_->value; }
    // Direct value mutation; meaningful for leaves (parameters, datasets).
    std::span<double> mutable_data() { return n_->value; }

    double value() const;  // scalar extraction
    double at(std::size_t i) const { return n_->value[i]; }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg);
    bool is_leaf() const { return n_->leaf; }

    std::span<const double> grad() const;  // zeros if never written
    void zero_grad();

    // Reverse-mode sweep from a scalar. Repeated calls accumulate into the
    // leaf grads; call zero_grad between steps.
    void backward() const;

    // Same values, cut from the graph, requires_grad off.
    Tensor detach() const;

    Tensor clone() const;  // deep copy of values, fresh leaf

    detail::Node* node() const { return n_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return n_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n);

private:
    std::shared_ptr<detail::Node> n_;
};

// ---- primitive ops ----

enum class BinaryKind { add, sub, mul, div };

Tensor tensor_binary(BinaryKind kind, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor rsub_scalar(double c, const Tensor& x);  // c - x
Tensor neg(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t pad, std::size_t stride);
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, std::size_t pad, std::size_t stride,
                        std::size_t output_pad);

enum class ActKind { relu, leaky_relu, tanh, sigmoid };
Tensor activation(ActKind kind, const Tensor& x, double slope = 0.2);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax(const Tensor& x);      // over the last axis
Tensor log_softmax(const Tensor& x);  // over the last axis

Tensor sum(const Tensor& x);  // scalar
Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdims);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdims);
Tensor global_average_pool(const Tensor& x);  // (B,C,H,W) -> (B,C)

// Inverted-scaling dropout; the mask is a pure function of (seed, element
// index) so the same noise can be replayed.
Tensor dropout(const Tensor& x, double p, std::uint64_t seed);

Tensor clamp(const Tensor& x, double lo, double hi);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor index_rows(const Tensor& x, const std::vector<std::size_t>& idx);
// y[i] = x[i, cols[i]]
Tensor take_per_row(const Tensor& x, const std::vector<std::size_t>& cols);
Tensor col(const Tensor& x, std::size_t j);  // j-th column of a 2-D tensor
Tensor slice_cols(const Tensor& x, std::size_t j0, std::size_t j1);  // columns [j0, j1)

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return rsub_scalar(c, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Central-difference gradient verification. Builds the loss once via
// `loss_fn`, runs backward, then perturbs a sampled subset of coordinates of
// the given leaves (at least `min_coords` across all leaves, all of them if
// fewer) and compares. `loss_fn` must be deterministic: any dropout or
// augmentation seeds inside it have to be frozen. Returns the max relative
// error, with 0/0 defined as 0.
double finite_difference_check(const std::vector<Tensor>& leaves,
                               const std::function<Tensor()>& loss_fn, double eps = 1e-5,
                               std::size_t min_coords = 200, std::uint64_t seed = 17);

}  // namespace ssgan
