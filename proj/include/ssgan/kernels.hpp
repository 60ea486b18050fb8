#pragma once

#include <cstddef>

// Numeric inner loops behind the tensor ops. Every kernel exists twice: a
// plain serial reference under kernels::serial and an OpenMP version under
// kernels::par. The dispatching functions at namespace scope pick one at
// runtime via set_parallel(). Both versions compute every output element on
// exactly one thread with the same accumulation order, so results are
// bitwise identical regardless of thread count — the parity tests and the
// training determinism contract rely on this.

namespace ssgan::kernels {

void set_parallel(bool enabled);
bool parallel_enabled();

struct Conv2dDims {
    std::size_t batch = 0;
    std::size_t in_ch = 0, in_h = 0, in_w = 0;
    std::size_t out_ch = 0, out_h = 0, out_w = 0;
    std::size_t kernel = 0;
    std::size_t pad = 0, stride = 1;
    std::size_t output_pad = 0;  // conv_transpose only
};

enum class Binary { add, sub, mul, div };

namespace serial {
void ew_binary(Binary op, const double* a, const double* b, double* out, std::size_t n);
// C[m x n] = op(A) * op(B), op = optional transpose. accumulate adds into C.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate);
void conv2d(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv2d_grad_input(const double* dy, const double* w, double* dx, const Conv2dDims& d);
void conv2d_grad_weight(const double* dy, const double* x, double* dw, const Conv2dDims& d);
void conv_transpose2d(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv_transpose2d_grad_input(const double* dy, const double* w, double* dx,
                                 const Conv2dDims& d);
void conv_transpose2d_grad_weight(const double* dy, const double* x, double* dw,
                                  const Conv2dDims& d);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
}  // namespace serial

namespace par {
void ew_binary(Binary op, const double* a, const double* b, double* out, std::size_t n);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate);
void conv2d(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv2d_grad_input(const double* dy, const double* w, double* dx, const Conv2dDims& d);
void conv2d_grad_weight(const double* dy, const double* x, double* dw, const Conv2dDims& d);
void conv_transpose2d(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv_transpose2d_grad_input(const double* dy, const double* w, double* dx,
                                 const Conv2dDims& d);
void conv_transpose2d_grad_weight(const double* dy, const double* x, double* dw,
                                  const Conv2dDims& d);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
}  // namespace par

// Runtime-dispatching entry points used by the tensor ops.
void ew_binary(Binary op, const double* a, const double* b, double* out, std::size_t n);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate);
void conv2d(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv2d_grad_input(const double* dy, const double* w, double* dx, const Conv2dDims& d);
void conv2d_grad_weight(const double* dy, const double* x, double* dw, const Conv2dDims& d);
void conv_transpose2d(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv_transpose2d_grad_input(const double* dy, const double* w, double* dx,
                                 const Conv2dDims& d);
void conv_transpose2d_grad_weight(const double* dy, const double* x, double* dw,
                                  const Conv2dDims& d);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

}  // namespace ssgan::kernels
