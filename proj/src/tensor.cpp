#include "ssgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_set>

#include "ssgan/kernels.hpp"
#include "ssgan/rng.hpp"

namespace ssgan {

std::string shape_to_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

namespace {

using detail::Node;

std::shared_ptr<Node> new_leaf(Shape shape, std::vector<double> value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->leaf = true;
    return n;
}

std::shared_ptr<Node> new_op(Shape shape, const char* op,
                             std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), 0.0);
    n->leaf = false;
    n->op = op;
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    n->parents = std::move(parents);
    return n;
}

// Row-major strides of `shape` aligned to a broadcast output of rank
// out_rank; broadcast dims get stride 0.
std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out,
                                         const char* opname, const Shape& other) {
    const std::size_t rank = out.size();
    std::vector<std::size_t> strides(rank, 0);
    std::size_t run = 1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const std::size_t d = shape.size() - 1 - i;    // dim index in shape
        const std::size_t o = rank - 1 - i;            // dim index in out
        if (shape[d] == out[o]) {
            strides[o] = (shape[d] == 1) ? 0 : run;
        } else if (shape[d] == 1) {
            strides[o] = 0;
        } else {
            throw ShapeError(std::string(opname) + ": shapes not broadcastable: " +
                             shape_to_string(shape) + " vs " + shape_to_string(other));
        }
        run *= shape[d];
    }
    return strides;
}

struct BcastPlan {
    Shape out;
    std::vector<std::size_t> sa, sb;
    bool same = false;
};

BcastPlan make_bcast(const Shape& a, const Shape& b, const char* opname) {
    BcastPlan plan;
    if (a == b) {
        plan.out = a;
        plan.same = true;
        return plan;
    }
    const std::size_t rank = std::max(a.size(), b.size());
    plan.out.assign(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t o = rank - 1 - i;
        const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da == db || db == 1)
            plan.out[o] = da;
        else if (da == 1)
            plan.out[o] = db;
        else
            throw ShapeError(std::string(opname) + ": shapes not broadcastable: " +
                             shape_to_string(a) + " vs " + shape_to_string(b));
    }
    plan.sa = aligned_strides(a, plan.out, opname, b);
    plan.sb = aligned_strides(b, plan.out, opname, a);
    return plan;
}

// Visits every element of the broadcast output, handing the strided source
// offsets to `f(out_index, a_index, b_index)`.
template <typename F>
void for_each_bcast(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t rank = out.size();
    const std::size_t total = shape_numel(out);
    std::vector<std::size_t> coord(rank, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t o = 0; o < total; ++o) {
        f(o, ai, bi);
        for (std::size_t i = rank; i-- > 0;) {
            ++coord[i];
            ai += sa[i];
            bi += sb[i];
            if (coord[i] < out[i]) break;
            ai -= sa[i] * out[i];
            bi -= sb[i] * out[i];
            coord[i] = 0;
        }
    }
}

}  // namespace

// ---- Tape ----

Tape Tape::build(detail::Node* root) {
    Tape tape;
    if (!root->requires_grad) return tape;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* child = f.n->parents[f.next++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            tape.order.push_back(f.n);
            stack.pop_back();
        }
    }
    return tape;
}

// ---- Tensor ----

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return wrap(new_leaf(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad));
}

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
    return wrap(new_leaf(shape, std::vector<double>(shape_numel(shape), v), requires_grad));
}

Tensor Tensor::scalar(double v) { return from_vector({v}, Shape{}); }

Tensor Tensor::from_vector(std::vector<double> data, const Shape& shape, bool requires_grad) {
    if (data.size() != shape_numel(shape))
        throw ShapeError("from_vector: " + std::to_string(data.size()) +
                         " values do not fill shape " + shape_to_string(shape));
    return wrap(new_leaf(shape, std::move(data), requires_grad));
}

double Tensor::value() const {
    if (!is_scalar())
        throw ValueError("value: tensor of shape " + shape_to_string(shape()) +
                         " is not a scalar");
    return n_->value[0];
}

void Tensor::set_requires_grad(bool rg) {
    if (!n_->leaf) throw ValueError("set_requires_grad: only leaf tensors");
    n_->requires_grad = rg;
}

std::span<const double> Tensor::grad() const {
    n_->ensure_grad();
    return n_->grad;
}

void Tensor::zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (!is_scalar())
        throw ValueError("backward: loss must be a scalar, got shape " +
                         shape_to_string(shape()));
    if (!n_->requires_grad) return;
    Tape tape = Tape::build(n_.get());
    // Intermediate grads are scratch for this sweep; only leaves accumulate
    // across repeated calls.
    for (Node* n : tape.order)
        if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
    n_->ensure_grad();
    n_->grad[0] += 1.0;
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn();
    }
}

Tensor Tensor::detach() const {
    return wrap(new_leaf(n_->shape, n_->value, false));
}

Tensor Tensor::clone() const {
    return wrap(new_leaf(n_->shape, n_->value, false));
}

// ---- elementwise binary ----

Tensor tensor_binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
    static const char* names[] = {"add", "sub", "mul", "div"};
    const char* opname = names[static_cast<int>(kind)];
    BcastPlan plan = make_bcast(a.shape(), b.shape(), opname);

    auto out = new_op(plan.out, opname, {a.node_ptr(), b.node_ptr()});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* py = out->value.data();

    if (kind == BinaryKind::div) {
        for (double v : b.data())
            if (v == 0.0) throw ValueError("div: division by zero");
    }

    if (plan.same) {
        kernels::ew_binary(static_cast<kernels::Binary>(kind), pa, pb, py, out->numel());
    } else {
        switch (kind) {
            case BinaryKind::add:
                for_each_bcast(plan.out, plan.sa, plan.sb,
                               [&](std::size_t o, std::size_t i, std::size_t j) { py[o] = pa[i] + pb[j]; });
                break;
            case BinaryKind::sub:
                for_each_bcast(plan.out, plan.sa, plan.sb,
                               [&](std::size_t o, std::size_t i, std::size_t j) { py[o] = pa[i] - pb[j]; });
                break;
            case BinaryKind::mul:
                for_each_bcast(plan.out, plan.sa, plan.sb,
                               [&](std::size_t o, std::size_t i, std::size_t j) { py[o] = pa[i] * pb[j]; });
                break;
            case BinaryKind::div:
                for_each_bcast(plan.out, plan.sa, plan.sb,
                               [&](std::size_t o, std::size_t i, std::size_t j) { py[o] = pa[i] / pb[j]; });
                break;
        }
    }

    if (out->requires_grad) {
        Node* self = out.get();
        Node* na = a.node();
        Node* nb = b.node();
        // gradient routing is fixed at graph-construction time
        const bool ga = na->requires_grad;
        const bool gb = nb->requires_grad;
        out->backward_fn = [self, na, nb, kind, plan, ga, gb]() {
            const double* g = self->grad.data();
            if (ga) na->ensure_grad();
            if (gb) nb->ensure_grad();
            auto visit = [&](auto&& fn) {
                if (plan.same) {
                    const std::size_t n = self->numel();
                    for (std::size_t o = 0; o < n; ++o) fn(o, o, o);
                } else {
                    for_each_bcast(plan.out, plan.sa, plan.sb, fn);
                }
            };
            switch (kind) {
                case BinaryKind::add:
                    visit([&](std::size_t o, std::size_t i, std::size_t j) {
                        if (ga) na->grad[i] += g[o];
                        if (gb) nb->grad[j] += g[o];
                    });
                    break;
                case BinaryKind::sub:
                    visit([&](std::size_t o, std::size_t i, std::size_t j) {
                        if (ga) na->grad[i] += g[o];
                        if (gb) nb->grad[j] -= g[o];
                    });
                    break;
                case BinaryKind::mul:
                    visit([&](std::size_t o, std::size_t i, std::size_t j) {
                        if (ga) na->grad[i] += g[o] * nb->value[j];
                        if (gb) nb->grad[j] += g[o] * na->value[i];
                    });
                    break;
                case BinaryKind::div:
                    visit([&](std::size_t o, std::size_t i, std::size_t j) {
                        const double bv = nb->value[j];
                        if (ga) na->grad[i] += g[o] / bv;
                        if (gb) nb->grad[j] -= g[o] * na->value[i] / (bv * bv);
                    });
                    break;
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor add(const Tensor& a, const Tensor& b) { return tensor_binary(BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return tensor_binary(BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return tensor_binary(BinaryKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return tensor_binary(BinaryKind::div, a, b); }

// ---- scalar ops ----

namespace {
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd bwd) {
    auto out = new_op(x.shape(), name, {x.node_ptr()});
    const double* px = x.data().data();
    double* py = out->value.data();
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i) py[i] = fwd(px[i]);
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        out->backward_fn = [self, nx, bwd]() {
            nx->ensure_grad();
            const std::size_t n = self->numel();
            for (std::size_t i = 0; i < n; ++i)
                nx->grad[i] += self->grad[i] * bwd(nx->value[i], self->value[i]);
        };
    }
    return Tensor::wrap(out);
}
}  // namespace

Tensor add_scalar(const Tensor& x, double c) {
    return unary_op(
        x, "add_scalar", [c](double v) { return v + c; },
        [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
    return unary_op(
        x, "mul_scalar", [c](double v) { return v * c; },
        [c](double, double) { return c; });
}

Tensor rsub_scalar(double c, const Tensor& x) {
    return unary_op(
        x, "rsub_scalar", [c](double v) { return c - v; },
        [](double, double) { return -1.0; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul: expects 2-D operands, got " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
    auto out = new_op({m, n}, "matmul", {a.node_ptr(), b.node_ptr()});
    kernels::matmul(a.data().data(), b.data().data(), out->value.data(), m, k, n, false, false,
                    false);
    if (out->requires_grad) {
        Node* self = out.get();
        Node* na = a.node();
        Node* nb = b.node();
        const bool ga = na->requires_grad;
        const bool gb = nb->requires_grad;
        out->backward_fn = [self, na, nb, m, k, n, ga, gb]() {
            const double* g = self->grad.data();
            if (ga) {
                na->ensure_grad();
                // dA = dC * B^T
                kernels::matmul(g, nb->value.data(), na->grad.data(), m, n, k, false, true, true);
            }
            if (gb) {
                nb->ensure_grad();
                // dB = A^T * dC
                kernels::matmul(na->value.data(), g, nb->grad.data(), k, m, n, true, false, true);
            }
        };
    }
    return Tensor::wrap(out);
}

// ---- convolution ----

namespace {
kernels::Conv2dDims conv_dims(const Tensor& x, const Tensor& w, std::size_t pad,
                              std::size_t stride, bool transpose, std::size_t output_pad) {
    if (x.shape().size() != 4)
        throw ShapeError("conv2d: input must be 4-D (B,C,H,W), got " +
                         shape_to_string(x.shape()));
    if (w.shape().size() != 4 || w.shape()[2] != w.shape()[3])
        throw ShapeError("conv2d: weight must be (out_ch,in_ch,k,k), got " +
                         shape_to_string(w.shape()));
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    kernels::Conv2dDims d;
    d.batch = x.shape()[0];
    d.kernel = w.shape()[2];
    d.pad = pad;
    d.stride = stride;
    d.output_pad = output_pad;
    if (!transpose) {
        d.in_ch = x.shape()[1];
        d.in_h = x.shape()[2];
        d.in_w = x.shape()[3];
        d.out_ch = w.shape()[0];
        if (w.shape()[1] != d.in_ch)
            throw ShapeError("conv2d: input has " + std::to_string(d.in_ch) +
                             " channels but weight expects " + std::to_string(w.shape()[1]));
        if (d.in_h + 2 * pad < d.kernel || d.in_w + 2 * pad < d.kernel)
            throw ShapeError("conv2d: kernel " + std::to_string(d.kernel) +
                             " does not fit padded input " + shape_to_string(x.shape()));
        d.out_h = (d.in_h + 2 * pad - d.kernel) / stride + 1;
        d.out_w = (d.in_w + 2 * pad - d.kernel) / stride + 1;
        if (d.out_h == 0 || d.out_w == 0)
            throw ShapeError("conv2d: non-positive output size for input " +
                             shape_to_string(x.shape()));
    } else {
        d.in_ch = x.shape()[1];
        d.in_h = x.shape()[2];
        d.in_w = x.shape()[3];
        d.out_ch = w.shape()[0];
        if (w.shape()[1] != d.in_ch)
            throw ShapeError("conv_transpose2d: input has " + std::to_string(d.in_ch) +
                             " channels but weight expects " + std::to_string(w.shape()[1]));
        if (output_pad >= stride)
            throw ValueError("conv_transpose2d: output_pad must be < stride");
        const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>((d.in_h - 1) * stride + d.kernel +
                                                              output_pad) -
                                  2 * static_cast<std::ptrdiff_t>(pad);
        const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>((d.in_w - 1) * stride + d.kernel +
                                                              output_pad) -
                                  2 * static_cast<std::ptrdiff_t>(pad);
        if (oh <= 0 || ow <= 0)
            throw ShapeError("conv_transpose2d: non-positive output size for input " +
                             shape_to_string(x.shape()));
        d.out_h = static_cast<std::size_t>(oh);
        d.out_w = static_cast<std::size_t>(ow);
    }
    return d;
}
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t pad, std::size_t stride) {
    kernels::Conv2dDims d = conv_dims(x, w, pad, stride, false, 0);
    auto out = new_op({d.batch, d.out_ch, d.out_h, d.out_w}, "conv2d",
                      {x.node_ptr(), w.node_ptr()});
    kernels::conv2d(x.data().data(), w.data().data(), out->value.data(), d);
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        Node* nw = w.node();
        const bool gx = nx->requires_grad;
        const bool gw = nw->requires_grad;
        out->backward_fn = [self, nx, nw, d, gx, gw]() {
            if (gx) {
                nx->ensure_grad();
                kernels::conv2d_grad_input(self->grad.data(), nw->value.data(), nx->grad.data(),
                                           d);
            }
            if (gw) {
                nw->ensure_grad();
                kernels::conv2d_grad_weight(self->grad.data(), nx->value.data(), nw->grad.data(),
                                            d);
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, std::size_t pad, std::size_t stride,
                        std::size_t output_pad) {
    kernels::Conv2dDims d = conv_dims(x, w, pad, stride, true, output_pad);
    auto out = new_op({d.batch, d.out_ch, d.out_h, d.out_w}, "conv_transpose2d",
                      {x.node_ptr(), w.node_ptr()});
    kernels::conv_transpose2d(x.data().data(), w.data().data(), out->value.data(), d);
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        Node* nw = w.node();
        const bool gx = nx->requires_grad;
        const bool gw = nw->requires_grad;
        out->backward_fn = [self, nx, nw, d, gx, gw]() {
            if (gx) {
                nx->ensure_grad();
                kernels::conv_transpose2d_grad_input(self->grad.data(), nw->value.data(),
                                                     nx->grad.data(), d);
            }
            if (gw) {
                nw->ensure_grad();
                kernels::conv_transpose2d_grad_weight(self->grad.data(), nx->value.data(),
                                                      nw->grad.data(), d);
            }
        };
    }
    return Tensor::wrap(out);
}

// ---- activations ----

Tensor activation(ActKind kind, const Tensor& x, double slope) {
    switch (kind) {
        case ActKind::relu:
            return unary_op(
                x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
        case ActKind::leaky_relu:
            return unary_op(
                x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
                [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
        case ActKind::tanh:
            return unary_op(
                x, "tanh", [](double v) { return std::tanh(v); },
                [](double, double y) { return 1.0 - y * y; });
        case ActKind::sigmoid:
            return unary_op(
                x, "sigmoid",
                [](double v) {
                    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                    const double e = std::exp(v);
                    return e / (1.0 + e);
                },
                [](double, double y) { return y * (1.0 - y); });
    }
    throw ValueError("activation: unknown kind");
}

Tensor relu(const Tensor& x) { return activation(ActKind::relu, x); }
Tensor leaky_relu(const Tensor& x, double slope) {
    return activation(ActKind::leaky_relu, x, slope);
}
Tensor tanh(const Tensor& x) { return activation(ActKind::tanh, x); }
Tensor sigmoid(const Tensor& x) { return activation(ActKind::sigmoid, x); }

// ---- softmax family ----

namespace {
void rows_cols(const Tensor& x, const char* op, std::size_t& rows, std::size_t& cols) {
    if (x.shape().empty())
        throw ShapeError(std::string(op) + ": needs at least one axis, got scalar");
    cols = x.shape().back();
    if (cols == 0) throw ShapeError(std::string(op) + ": empty class axis");
    rows = x.numel() / cols;
}
}  // namespace

Tensor softmax(const Tensor& x) {
    std::size_t rows, cols;
    rows_cols(x, "softmax", rows, cols);
    auto out = new_op(x.shape(), "softmax", {x.node_ptr()});
    kernels::softmax_rows(x.data().data(), out->value.data(), rows, cols);
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        out->backward_fn = [self, nx, rows, cols]() {
            nx->ensure_grad();
            const double* y = self->value.data();
            const double* g = self->grad.data();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                for (std::size_t c = 0; c < cols; ++c)
                    nx->grad[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor log_softmax(const Tensor& x) {
    std::size_t rows, cols;
    rows_cols(x, "log_softmax", rows, cols);
    auto out = new_op(x.shape(), "log_softmax", {x.node_ptr()});
    const double* px = x.data().data();
    double* py = out->value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = px[r * cols];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, px[r * cols + c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < cols; ++c) denom += std::exp(px[r * cols + c] - mx);
        const double lse = mx + std::log(denom);
        for (std::size_t c = 0; c < cols; ++c) py[r * cols + c] = px[r * cols + c] - lse;
    }
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        out->backward_fn = [self, nx, rows, cols]() {
            nx->ensure_grad();
            const double* y = self->value.data();
            const double* g = self->grad.data();
            for (std::size_t r = 0; r < rows; ++r) {
                double gsum = 0.0;
                for (std::size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
                for (std::size_t c = 0; c < cols; ++c)
                    nx->grad[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * gsum;
            }
        };
    }
    return Tensor::wrap(out);
}

// ---- reductions ----

namespace {
Tensor reduce(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdims,
              bool take_mean, const char* name) {
    const Shape& in = x.shape();
    std::vector<bool> reduced(in.size(), false);
    for (auto a : axes) {
        if (a >= in.size())
            throw ShapeError(std::string(name) + ": axis " + std::to_string(a) +
                             " out of range for shape " + shape_to_string(in));
        if (reduced[a]) throw ValueError(std::string(name) + ": duplicate axis");
        reduced[a] = true;
    }
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (reduced[i]) {
            count *= in[i];
            if (keepdims) out_shape.push_back(1);
        } else {
            out_shape.push_back(in[i]);
        }
    }
    const double scale = take_mean ? 1.0 / static_cast<double>(count) : 1.0;

    // out strides indexed by input dim (0 where reduced)
    std::vector<std::size_t> ostride(in.size(), 0);
    {
        std::size_t run = 1;
        for (std::size_t i = in.size(); i-- > 0;) {
            if (!reduced[i]) {
                ostride[i] = run;
                run *= in[i];
            }
        }
    }

    auto out = new_op(out_shape, name, {x.node_ptr()});
    const double* px = x.data().data();
    double* py = out->value.data();
    const std::size_t total = x.numel();
    std::vector<std::size_t> coord(in.size(), 0);
    std::size_t oi = 0;
    for (std::size_t i = 0; i < total; ++i) {
        py[oi] += px[i] * scale;
        for (std::size_t d = in.size(); d-- > 0;) {
            ++coord[d];
            oi += ostride[d];
            if (coord[d] < in[d]) break;
            oi -= ostride[d] * in[d];
            coord[d] = 0;
        }
    }
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        const Shape in_shape = in;
        out->backward_fn = [self, nx, in_shape, ostride, scale]() {
            nx->ensure_grad();
            const double* g = self->grad.data();
            const std::size_t total = nx->value.size();
            std::vector<std::size_t> coord(in_shape.size(), 0);
            std::size_t oi = 0;
            for (std::size_t i = 0; i < total; ++i) {
                nx->grad[i] += g[oi] * scale;
                for (std::size_t d = in_shape.size(); d-- > 0;) {
                    ++coord[d];
                    oi += ostride[d];
                    if (coord[d] < in_shape[d]) break;
                    oi -= ostride[d] * in_shape[d];
                    coord[d] = 0;
                }
            }
        };
    }
    return Tensor::wrap(out);
}

std::vector<std::size_t> all_axes(const Tensor& x) {
    std::vector<std::size_t> axes(x.shape().size());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return axes;
}
}  // namespace

Tensor sum(const Tensor& x) { return reduce(x, all_axes(x), false, false, "sum"); }
Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdims) {
    return reduce(x, axes, keepdims, false, "sum");
}
Tensor mean(const Tensor& x) { return reduce(x, all_axes(x), false, true, "mean"); }
Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdims) {
    return reduce(x, axes, keepdims, true, "mean");
}

Tensor global_average_pool(const Tensor& x) {
    if (x.shape().size() != 4)
        throw ShapeError("global_average_pool: expects (B,C,H,W), got " +
                         shape_to_string(x.shape()));
    return reduce(x, {2, 3}, false, true, "global_average_pool");
}

// ---- dropout ----

Tensor dropout(const Tensor& x, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p < 1.0))
        throw ValueError("dropout: p must be in [0,1), got " + std::to_string(p));
    if (p == 0.0) return mul_scalar(x, 1.0);
    auto out = new_op(x.shape(), "dropout", {x.node_ptr()});
    const double keep_scale = 1.0 / (1.0 - p);
    const std::size_t n = out->numel();
    auto mask = std::make_shared<std::vector<bool>>(n);
    const double* px = x.data().data();
    double* py = out->value.data();
    for (std::size_t i = 0; i < n; ++i) {
        const bool keep = rng::unit_double(rng::mix(seed, i)) >= p;
        (*mask)[i] = keep;
        py[i] = keep ? px[i] * keep_scale : 0.0;
    }
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        out->backward_fn = [self, nx, mask, keep_scale]() {
            nx->ensure_grad();
            const std::size_t n = self->numel();
            for (std::size_t i = 0; i < n; ++i)
                if ((*mask)[i]) nx->grad[i] += self->grad[i] * keep_scale;
        };
    }
    return Tensor::wrap(out);
}

// ---- pointwise math ----

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) throw ValueError("clamp: lo > hi");
    return unary_op(
        x, "clamp", [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
    for (double v : x.data())
        if (!(v > 0.0)) throw ValueError("log: non-positive input " + std::to_string(v));
    return unary_op(
        x, "log", [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        x, "exp", [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& x) {
    for (double v : x.data())
        if (v < 0.0) throw ValueError("sqrt: negative input " + std::to_string(v));
    return unary_op(
        x, "sqrt", [](double v) { return std::sqrt(v); },
        [](double, double y) { return 0.5 / y; });
}

// ---- structural ops ----

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                         shape_to_string(shape));
    auto out = new_op(shape, "reshape", {x.node_ptr()});
    out->value = std::vector<double>(x.data().begin(), x.data().end());
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        out->backward_fn = [self, nx]() {
            nx->ensure_grad();
            const std::size_t n = self->numel();
            for (std::size_t i = 0; i < n; ++i) nx->grad[i] += self->grad[i];
        };
    }
    return Tensor::wrap(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValueError("concat_rows: no inputs");
    Shape rest(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t rows = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        if (p.shape().empty() ||
            Shape(p.shape().begin() + 1, p.shape().end()) != rest)
            throw ShapeError("concat_rows: incompatible part shape " +
                             shape_to_string(p.shape()));
        rows += p.shape()[0];
        parents.push_back(p.node_ptr());
    }
    Shape out_shape{rows};
    out_shape.insert(out_shape.end(), rest.begin(), rest.end());
    auto out = new_op(out_shape, "concat_rows", parents);
    double* py = out->value.data();
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), py + off);
        off += p.numel();
    }
    if (out->requires_grad) {
        Node* self = out.get();
        std::vector<Node*> srcs;
        std::vector<bool> wants;
        for (const auto& p : parts) {
            srcs.push_back(p.node());
            wants.push_back(p.node()->requires_grad);
        }
        out->backward_fn = [self, srcs, wants]() {
            std::size_t off = 0;
            for (std::size_t k = 0; k < srcs.size(); ++k) {
                Node* s = srcs[k];
                const std::size_t n = s->value.size();
                if (wants[k]) {
                    s->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) s->grad[i] += self->grad[off + i];
                }
                off += n;
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor index_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    if (x.shape().empty()) throw ShapeError("index_rows: scalar input");
    const std::size_t rows = x.shape()[0];
    const std::size_t row_len = x.numel() / std::max<std::size_t>(rows, 1);
    for (auto i : idx)
        if (i >= rows)
            throw ShapeError("index_rows: index " + std::to_string(i) + " out of range " +
                             std::to_string(rows));
    Shape out_shape = x.shape();
    out_shape[0] = idx.size();
    auto out = new_op(out_shape, "index_rows", {x.node_ptr()});
    const double* px = x.data().data();
    double* py = out->value.data();
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(px + idx[r] * row_len, px + (idx[r] + 1) * row_len, py + r * row_len);
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        auto indices = idx;
        out->backward_fn = [self, nx, indices, row_len]() {
            nx->ensure_grad();
            for (std::size_t r = 0; r < indices.size(); ++r)
                for (std::size_t j = 0; j < row_len; ++j)
                    nx->grad[indices[r] * row_len + j] += self->grad[r * row_len + j];
        };
    }
    return Tensor::wrap(out);
}

Tensor take_per_row(const Tensor& x, const std::vector<std::size_t>& cols) {
    if (x.shape().size() != 2)
        throw ShapeError("take_per_row: expects 2-D input, got " + shape_to_string(x.shape()));
    const std::size_t rows = x.shape()[0], width = x.shape()[1];
    if (cols.size() != rows)
        throw ShapeError("take_per_row: " + std::to_string(cols.size()) + " indices for " +
                         std::to_string(rows) + " rows");
    for (auto c : cols)
        if (c >= width)
            throw ShapeError("take_per_row: column " + std::to_string(c) + " out of range " +
                             std::to_string(width));
    auto out = new_op({rows}, "take_per_row", {x.node_ptr()});
    for (std::size_t r = 0; r < rows; ++r) out->value[r] = x.data()[r * width + cols[r]];
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        auto indices = cols;
        out->backward_fn = [self, nx, indices, width]() {
            nx->ensure_grad();
            for (std::size_t r = 0; r < indices.size(); ++r)
                nx->grad[r * width + indices[r]] += self->grad[r];
        };
    }
    return Tensor::wrap(out);
}

Tensor col(const Tensor& x, std::size_t j) {
    if (x.shape().size() != 2)
        throw ShapeError("col: expects 2-D input, got " + shape_to_string(x.shape()));
    if (j >= x.shape()[1])
        throw ShapeError("col: column " + std::to_string(j) + " out of range " +
                         std::to_string(x.shape()[1]));
    return take_per_row(x, std::vector<std::size_t>(x.shape()[0], j));
}

Tensor slice_cols(const Tensor& x, std::size_t j0, std::size_t j1) {
    if (x.shape().size() != 2)
        throw ShapeError("slice_cols: expects 2-D input, got " + shape_to_string(x.shape()));
    const std::size_t rows = x.shape()[0], width = x.shape()[1];
    if (j0 >= j1 || j1 > width)
        throw ShapeError("slice_cols: invalid range [" + std::to_string(j0) + "," +
                         std::to_string(j1) + ") for width " + std::to_string(width));
    const std::size_t out_w = j1 - j0;
    auto out = new_op({rows, out_w}, "slice_cols", {x.node_ptr()});
    const double* px = x.data().data();
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(px + r * width + j0, px + r * width + j1, out->value.data() + r * out_w);
    if (out->requires_grad) {
        Node* self = out.get();
        Node* nx = x.node();
        out->backward_fn = [self, nx, j0, out_w, width, rows]() {
            nx->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < out_w; ++c)
                    nx->grad[r * width + j0 + c] += self->grad[r * out_w + c];
        };
    }
    return Tensor::wrap(out);
}

// ---- finite differences ----

double finite_difference_check(const std::vector<Tensor>& leaves,
                               const std::function<Tensor()>& loss_fn, double eps,
                               std::size_t min_coords, std::uint64_t seed) {
    for (auto leaf : leaves) {
        if (!leaf.is_leaf()) throw ValueError("finite_difference_check: non-leaf tensor");
        leaf.zero_grad();
    }
    Tensor loss = loss_fn();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    std::size_t total = 0;
    for (const auto& leaf : leaves) {
        auto g = leaf.grad();
        analytic.emplace_back(g.begin(), g.end());
        total += leaf.numel();
    }

    // Pick the coordinates to probe.
    std::vector<std::size_t> coords;
    if (total <= min_coords) {
        coords.resize(total);
        for (std::size_t i = 0; i < total; ++i) coords[i] = i;
    } else {
        rng::Rng gen(rng::mix(seed, total));
        std::unordered_set<std::size_t> seen;
        while (seen.size() < min_coords)
            seen.insert(static_cast<std::size_t>(
                gen.uniform_int(0, static_cast<std::int64_t>(total) - 1)));
        coords.assign(seen.begin(), seen.end());
        std::sort(coords.begin(), coords.end());
    }

    double max_rel = 0.0;
    for (std::size_t flat : coords) {
        std::size_t li = 0, off = flat;
        while (off >= leaves[li].numel()) {
            off -= leaves[li].numel();
            ++li;
        }
        Tensor leaf = leaves[li];
        double* slot = &leaf.mutable_data()[off];
        const double orig = *slot;
        *slot = orig + eps;
        const double f_plus = loss_fn().value();
        *slot = orig - eps;
        const double f_minus = loss_fn().value();
        *slot = orig;
        const double fd = (f_plus - f_minus) / (2.0 * eps);
        const double an = analytic[li][off];
        const double denom = std::max(std::abs(fd), std::abs(an));
        const double rel = denom < 1e-12 ? 0.0 : std::abs(fd - an) / denom;
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace ssgan
