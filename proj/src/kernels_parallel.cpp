#include <omp.h>

#include <algorithm>
#include <cmath>

#include "ssgan/kernels.hpp"

// OpenMP kernels. Work is split so that each output element is produced by
// exactly one thread and its inner accumulation order matches the serial
// reference, which keeps results bitwise identical for any thread count.

namespace ssgan::kernels::par {

namespace {
// Below this many elements the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 16 * 1024;
}

void ew_binary(Binary op, const double* a, const double* b, double* out, std::size_t n) {
    const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
    switch (op) {
        case Binary::add:
#pragma omp parallel for if (n >= kMinParallelWork) schedule(static)
            for (std::ptrdiff_t i = 0; i < sn; ++i) out[i] = a[i] + b[i];
            break;
        case Binary::sub:
#pragma omp parallel for if (n >= kMinParallelWork) schedule(static)
            for (std::ptrdiff_t i = 0; i < sn; ++i) out[i] = a[i] - b[i];
            break;
        case Binary::mul:
#pragma omp parallel for if (n >= kMinParallelWork) schedule(static)
            for (std::ptrdiff_t i = 0; i < sn; ++i) out[i] = a[i] * b[i];
            break;
        case Binary::div:
#pragma omp parallel for if (n >= kMinParallelWork) schedule(static)
            for (std::ptrdiff_t i = 0; i < sn; ++i) out[i] = a[i] / b[i];
            break;
    }
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
    const std::ptrdiff_t sm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for if (m * k * n >= kMinParallelWork) schedule(static)
    for (std::ptrdiff_t i = 0; i < sm; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = trans_a ? a[p * m + i] : a[i * k + p];
                const double bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
}

void conv2d(const double* x, const double* w, double* y, const Conv2dDims& d) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(d.batch * d.out_ch);
#pragma omp parallel for if (d.batch* d.out_ch* d.out_h* d.out_w* d.in_ch* d.kernel* d.kernel >= \
                                 kMinParallelWork) schedule(static)
    for (std::ptrdiff_t bc = 0; bc < work; ++bc) {
        const std::size_t b = static_cast<std::size_t>(bc) / d.out_ch;
        const std::size_t co = static_cast<std::size_t>(bc) % d.out_ch;
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

void conv2d_grad_input(const double* dy, const double* w, double* dx, const Conv2dDims& d) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(d.batch * d.in_ch);
#pragma omp parallel for if (d.batch* d.in_ch* d.out_h* d.out_w* d.out_ch* d.kernel* d.kernel >= \
                                 kMinParallelWork) schedule(static)
    for (std::ptrdiff_t bc = 0; bc < work; ++bc) {
        const std::size_t b = static_cast<std::size_t>(bc) / d.in_ch;
        const std::size_t ci = static_cast<std::size_t>(bc) % d.in_ch;
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

void conv2d_grad_weight(const double* dy, const double* x, double* dw, const Conv2dDims& d) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(d.out_ch * d.in_ch);
#pragma omp parallel for if (d.batch* d.out_ch* d.in_ch* d.out_h* d.out_w* d.kernel* d.kernel >= \
                                 kMinParallelWork) schedule(static)
    for (std::ptrdiff_t oc = 0; oc < work; ++oc) {
        const std::size_t co = static_cast<std::size_t>(oc) / d.in_ch;
        const std::size_t ci = static_cast<std::size_t>(oc) % d.in_ch;
        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                double acc = 0.0;
                for (std::size_t b = 0; b < d.batch; ++b) {
                    for (std::size_t ho = 0; ho < d.out_h; ++ho) {
                        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ho * d.stride + kh) -
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

void conv_transpose2d(const double* x, const double* w, double* y, const Conv2dDims& d) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(d.batch * d.out_ch);
#pragma omp parallel for if (d.batch* d.out_ch* d.out_h* d.out_w* d.in_ch >= kMinParallelWork) \
    schedule(static)
    for (std::ptrdiff_t bc = 0; bc < work; ++bc) {
        const std::size_t b = static_cast<std::size_t>(bc) / d.out_ch;
        const std::size_t co = static_cast<std::size_t>(bc) % d.out_ch;
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
                            const std::ptrdiff_t num_w = static_cast<std::ptrdiff_t>(wo + d.pad) -
                                                         static_cast<std::ptrdiff_t>(kw);
                            if (num_w < 0 || num_w % static_cast<std::ptrdiff_t>(d.stride)) continue;
                            const std::ptrdiff_t wi = num_w / static_cast<std::ptrdiff_t>(d.stride);
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

void conv_transpose2d_grad_input(const double* dy, const double* w, double* dx,
                                 const Conv2dDims& d) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(d.batch * d.in_ch);
#pragma omp parallel for if (d.batch* d.in_ch* d.in_h* d.in_w* d.out_ch >= kMinParallelWork) \
    schedule(static)
    for (std::ptrdiff_t bc = 0; bc < work; ++bc) {
        const std::size_t b = static_cast<std::size_t>(bc) / d.in_ch;
        const std::size_t ci = static_cast<std::size_t>(bc) % d.in_ch;
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

void conv_transpose2d_grad_weight(const double* dy, const double* x, double* dw,
                                  const Conv2dDims& d) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(d.out_ch * d.in_ch);
#pragma omp parallel for if (d.batch* d.out_ch* d.in_ch* d.in_h* d.in_w >= kMinParallelWork) \
    schedule(static)
    for (std::ptrdiff_t oc = 0; oc < work; ++oc) {
        const std::size_t co = static_cast<std::size_t>(oc) / d.in_ch;
        const std::size_t ci = static_cast<std::size_t>(oc) % d.in_ch;
        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                double acc = 0.0;
                for (std::size_t b = 0; b < d.batch; ++b) {
                    for (std::size_t hi = 0; hi < d.in_h; ++hi) {
                        const std::ptrdiff_t ho = static_cast<std::ptrdiff_t>(hi * d.stride + kh) -
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

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
    const std::ptrdiff_t sr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for if (rows * cols >= kMinParallelWork) schedule(static)
    for (std::ptrdiff_t r = 0; r < sr; ++r) {
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

}  // namespace ssgan::kernels::par
