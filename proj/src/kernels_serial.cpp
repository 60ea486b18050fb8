#include "ssgan/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

// Reference kernels: straight loops, no threading. These define the numeric
// behavior; the OpenMP versions must match them bitwise.

namespace ssgan::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

namespace serial {

void ew_binary(Binary op, const double* a, const double* b, double* out, std::size_t n) {
    switch (op) {
        case Binary::add:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
            break;
        case Binary::sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
            break;
        case Binary::mul:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
            break;
        case Binary::div:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
            break;
    }
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
    auto a_at = [&](std::size_t i, std::size_t p) { return trans_a ? a[p * m + i] : a[i * k + p]; };
    auto b_at = [&](std::size_t p, std::size_t j) { return trans_b ? b[j * k + p] : b[p * n + j]; };
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a_at(i, p) * b_at(p, j);
            c[i * n + j] = acc;
        }
    }
}

void conv2d(const double* x, const double* w, double* y, const Conv2dDims& d) {
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t co = 0; co < d.out_ch; ++co) {
            for (std::size_t ho = 0; ho < d.out_h; ++ho) {
                for (std::size_t wo = 0; wo < d.out_w; ++wo) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
                        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                            const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ho * d.stride + kh) -
                                                      static_cast<std::ptrdiff_t>(d.pad);
                            if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
                            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                                const std::ptrdiff_t wi =
                                    static_cast<std::ptrdiff_t>(wo * d.stride + kw) -
                                    static_cast<std::ptrdiff_t>(d.pad);
                                if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(d.in_w)) continue;
                                acc += x[((b * d.in_ch + ci) * d.in_h + hi) * d.in_w + wi] *
                                       w[((co * d.in_ch + ci) * d.kernel + kh) * d.kernel + kw];
                            }
                        }
                    }
                    y[((b * d.out_ch + co) * d.out_h + ho) * d.out_w + wo] = acc;
                }
            }
        }
    }
}

void conv2d_grad_input(const double* dy, const double* w, double* dx, const Conv2dDims& d) {
    // dx owned per (b, ci); gather over the output positions that read it.
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
            for (std::size_t co = 0; co < d.out_ch; ++co) {
                for (std::size_t ho = 0; ho < d.out_h; ++ho) {
                    for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ho * d.stride + kh) -
                                                  static_cast<std::ptrdiff_t>(d.pad);
                        if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
                        for (std::size_t wo = 0; wo < d.out_w; ++wo) {
                            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                                const std::ptrdiff_t wi =
                                    static_cast<std::ptrdiff_t>(wo * d.stride + kw) -
                                    static_cast<std::ptrdiff_t>(d.pad);
                                if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(d.in_w)) continue;
                                dx[((b * d.in_ch + ci) * d.in_h + hi) * d.in_w + wi] +=
                                    dy[((b * d.out_ch + co) * d.out_h + ho) * d.out_w + wo] *
                                    w[((co * d.in_ch + ci) * d.kernel + kh) * d.kernel + kw];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_grad_weight(const double* dy, const double* x, double* dw, const Conv2dDims& d) {
    for (std::size_t co = 0; co < d.out_ch; ++co) {
        for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
            for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b < d.batch; ++b) {
                        for (std::size_t ho = 0; ho < d.out_h; ++ho) {
                            const std::ptrdiff_t hi =
                                static_cast<std::ptrdiff_t>(ho * d.stride + kh) -
                                static_cast<std::ptrdiff_t>(d.pad);
                            if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
                            for (std::size_t wo = 0; wo < d.out_w; ++wo) {
                                const std::ptrdiff_t wi =
                                    static_cast<std::ptrdiff_t>(wo * d.stride + kw) -
                                    static_cast<std::ptrdiff_t>(d.pad);
                                if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(d.in_w)) continue;
                                acc += dy[((b * d.out_ch + co) * d.out_h + ho) * d.out_w + wo] *
                                       x[((b * d.in_ch + ci) * d.in_h + hi) * d.in_w + wi];
                            }
                        }
                    }
                    dw[((co * d.in_ch + ci) * d.kernel + kh) * d.kernel + kw] += acc;
                }
            }
        }
    }
}

// y[b,co,hi*stride-pad+kh, wi*stride-pad+kw] += x[b,ci,hi,wi] * w[co,ci,kh,kw]
// restructured as a gather over each output element so parallel and serial
// versions sum in the same order.
void conv_transpose2d(const double* x, const double* w, double* y, const Conv2dDims& d) {
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t co = 0; co < d.out_ch; ++co) {
            for (std::size_t ho = 0; ho < d.out_h; ++ho) {
                for (std::size_t wo = 0; wo < d.out_w; ++wo) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
                        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                            const std::ptrdiff_t num_h = static_cast<std::ptrdiff_t>(ho + d.pad) -
                                                         static_cast<std::ptrdiff_t>(kh);
                            if (num_h < 0 || num_h % static_cast<std::ptrdiff_t>(d.stride)) continue;
                            const std::ptrdiff_t hi = num_h / static_cast<std::ptrdiff_t>(d.stride);
                            if (hi >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
                            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                                const std::ptrdiff_t num_w =
                                    static_cast<std::ptrdiff_t>(wo + d.pad) -
                                    static_cast<std::ptrdiff_t>(kw);
                                if (num_w < 0 || num_w % static_cast<std::ptrdiff_t>(d.stride))
                                    continue;
                                const std::ptrdiff_t wi =
                                    num_w / static_cast<std::ptrdiff_t>(d.stride);
                                if (wi >= static_cast<std::ptrdiff_t>(d.in_w)) continue;
                                acc += x[((b * d.in_ch + ci) * d.in_h + hi) * d.in_w + wi] *
                                       w[((co * d.in_ch + ci) * d.kernel + kh) * d.kernel + kw];
                            }
                        }
                    }
                    y[((b * d.out_ch + co) * d.out_h + ho) * d.out_w + wo] = acc;
                }
            }
        }
    }
}

void conv_transpose2d_grad_input(const double* dy, const double* w, double* dx,
                                 const Conv2dDims& d) {
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
            for (std::size_t hi = 0; hi < d.in_h; ++hi) {
                for (std::size_t wi = 0; wi < d.in_w; ++wi) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < d.out_ch; ++co) {
                        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                            const std::ptrdiff_t ho = static_cast<std::ptrdiff_t>(hi * d.stride + kh) -
                                                      static_cast<std::ptrdiff_t>(d.pad);
                            if (ho < 0 || ho >= static_cast<std::ptrdiff_t>(d.out_h)) continue;
                            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                                const std::ptrdiff_t wo =
                                    static_cast<std::ptrdiff_t>(wi * d.stride + kw) -
                                    static_cast<std::ptrdiff_t>(d.pad);
                                if (wo < 0 || wo >= static_cast<std::ptrdiff_t>(d.out_w)) continue;
                                acc += dy[((b * d.out_ch + co) * d.out_h + ho) * d.out_w + wo] *
                                       w[((co * d.in_ch + ci) * d.kernel + kh) * d.kernel + kw];
                            }
                        }
                    }
                    dx[((b * d.in_ch + ci) * d.in_h + hi) * d.in_w + wi] += acc;
                }
            }
        }
    }
}

void conv_transpose2d_grad_weight(const double* dy, const double* x, double* dw,
                                  const Conv2dDims& d) {
    for (std::size_t co = 0; co < d.out_ch; ++co) {
        for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
            for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b < d.batch; ++b) {
                        for (std::size_t hi = 0; hi < d.in_h; ++hi) {
                            const std::ptrdiff_t ho =
                                static_cast<std::ptrdiff_t>(hi * d.stride + kh) -
                                static_cast<std::ptrdiff_t>(d.pad);
                            if (ho < 0 || ho >= static_cast<std::ptrdiff_t>(d.out_h)) continue;
                            for (std::size_t wi = 0; wi < d.in_w; ++wi) {
                                const std::ptrdiff_t wo =
                                    static_cast<std::ptrdiff_t>(wi * d.stride + kw) -
                                    static_cast<std::ptrdiff_t>(d.pad);
                                if (wo < 0 || wo >= static_cast<std::ptrdiff_t>(d.out_w)) continue;
                                acc += dy[((b * d.out_ch + co) * d.out_h + ho) * d.out_w + wo] *
                                       x[((b * d.in_ch + ci) * d.in_h + hi) * d.in_w + wi];
                            }
                        }
                    }
                    dw[((co * d.in_ch + ci) * d.kernel + kh) * d.kernel + kw] += acc;
                }
            }
        }
    }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * cols;
        double* yr = y + r * cols;
        double mx = xr[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            denom += yr[c];
        }
        for (std::size_t c = 0; c < cols; ++c) yr[c] /= denom;
    }
}

}  // namespace serial

// Dispatch layer.
#define SSGAN_DISPATCH(fn, ...)            \
    do {                                   \
        if (parallel_enabled())            \
            par::fn(__VA_ARGS__);          \
        else                               \
            serial::fn(__VA_ARGS__);       \
    } while (0)

void ew_binary(Binary op, const double* a, const double* b, double* out, std::size_t n) {
    SSGAN_DISPATCH(ew_binary, op, a, b, out, n);
}
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
    SSGAN_DISPATCH(matmul, a, b, c, m, k, n, trans_a, trans_b, accumulate);
}
void conv2d(const double* x, const double* w, double* y, const Conv2dDims& d) {
    SSGAN_DISPATCH(conv2d, x, w, y, d);
}
void conv2d_grad_input(const double* dy, const double* w, double* dx, const Conv2dDims& d) {
    SSGAN_DISPATCH(conv2d_grad_input, dy, w, dx, d);
}
void conv2d_grad_weight(const double* dy, const double* x, double* dw, const Conv2dDims& d) {
    SSGAN_DISPATCH(conv2d_grad_weight, dy, x, dw, d);
}
void conv_transpose2d(const double* x, const double* w, double* y, const Conv2dDims& d) {
    SSGAN_DISPATCH(conv_transpose2d, x, w, y, d);
}
void conv_transpose2d_grad_input(const double* dy, const double* w, double* dx,
                                 const Conv2dDims& d) {
    SSGAN_DISPATCH(conv_transpose2d_grad_input, dy, w, dx, d);
}
void conv_transpose2d_grad_weight(const double* dy, const double* x, double* dw,
                                  const Conv2dDims& d) {
    SSGAN_DISPATCH(conv_transpose2d_grad_weight, dy, x, dw, d);
}
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
    SSGAN_DISPATCH(softmax_rows, x, y, rows, cols);
}

#undef SSGAN_DISPATCH

}  // namespace ssgan::kernels
