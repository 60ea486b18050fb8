#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "ssgan/kernels.hpp"
#include "ssgan/rng.hpp"

using namespace ssgan;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::vector<double> v(n);
    rng::Rng gen(seed);
    for (auto& x : v) x = gen.uniform(-2.0, 2.0);
    return v;
}

}  // namespace

TEST_CASE("elementwise: parallel matches serial bitwise") {
    for (std::size_t n : {7ul, 1024ul, 40000ul}) {
        auto a = random_vec(n, rng::mix(1, n));
        auto b = random_vec(n, rng::mix(2, n));
        // keep divisors away from zero
        for (auto& x : b)
            if (std::abs(x) < 0.1) x = 0.5;
        for (auto op : {kernels::Binary::add, kernels::Binary::sub, kernels::Binary::mul,
                        kernels::Binary::div}) {
            std::vector<double> ys(n), yp(n);
            kernels::serial::ew_binary(op, a.data(), b.data(), ys.data(), n);
            kernels::par::ew_binary(op, a.data(), b.data(), yp.data(), n);
            CHECK(ys == yp);
        }
    }
}

TEST_CASE("matmul: parallel matches serial bitwise, all transpose modes") {
    const std::size_t m = 33, k = 47, n = 29;
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            auto a = random_vec(m * k, rng::mix(3, ta));
            auto b = random_vec(k * n, rng::mix(4, tb));
            std::vector<double> cs(m * n, 0.1), cp(m * n, 0.1);
            kernels::serial::matmul(a.data(), b.data(), cs.data(), m, k, n, ta, tb, true);
            kernels::par::matmul(a.data(), b.data(), cp.data(), m, k, n, ta, tb, true);
            CHECK(cs == cp);
        }
    }
}

TEST_CASE("matmul: 2x2 arithmetic") {
    // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
    std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4, 0.0);
    kernels::serial::matmul(a.data(), b.data(), c.data(), 2, 2, 2, false, false, false);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("conv2d family: parallel matches serial bitwise") {
    kernels::Conv2dDims d;
    d.batch = 3;
    d.in_ch = 4;
    d.in_h = 11;
    d.in_w = 9;
    d.out_ch = 5;
    d.kernel = 3;
    d.pad = 1;
    d.stride = 2;
    d.out_h = (d.in_h + 2 * d.pad - d.kernel) / d.stride + 1;
    d.out_w = (d.in_w + 2 * d.pad - d.kernel) / d.stride + 1;

    auto x = random_vec(d.batch * d.in_ch * d.in_h * d.in_w, 11);
    auto w = random_vec(d.out_ch * d.in_ch * d.kernel * d.kernel, 12);
    const std::size_t ysz = d.batch * d.out_ch * d.out_h * d.out_w;
    auto dy = random_vec(ysz, 13);

    std::vector<double> ys(ysz), yp(ysz);
    kernels::serial::conv2d(x.data(), w.data(), ys.data(), d);
    kernels::par::conv2d(x.data(), w.data(), yp.data(), d);
    CHECK(ys == yp);

    std::vector<double> dxs(x.size(), 0.0), dxp(x.size(), 0.0);
    kernels::serial::conv2d_grad_input(dy.data(), w.data(), dxs.data(), d);
    kernels::par::conv2d_grad_input(dy.data(), w.data(), dxp.data(), d);
    CHECK(dxs == dxp);

    std::vector<double> dws(w.size(), 0.0), dwp(w.size(), 0.0);
    kernels::serial::conv2d_grad_weight(dy.data(), x.data(), dws.data(), d);
    kernels::par::conv2d_grad_weight(dy.data(), x.data(), dwp.data(), d);
    CHECK(dws == dwp);
}

TEST_CASE("conv_transpose2d family: parallel matches serial bitwise") {
    kernels::Conv2dDims d;
    d.batch = 2;
    d.in_ch = 6;
    d.in_h = 4;
    d.in_w = 4;
    d.out_ch = 3;
    d.kernel = 5;
    d.pad = 2;
    d.stride = 2;
    d.output_pad = 1;
    d.out_h = (d.in_h - 1) * d.stride + d.kernel + d.output_pad - 2 * d.pad;
    d.out_w = (d.in_w - 1) * d.stride + d.kernel + d.output_pad - 2 * d.pad;

    auto x = random_vec(d.batch * d.in_ch * d.in_h * d.in_w, 21);
    auto w = random_vec(d.out_ch * d.in_ch * d.kernel * d.kernel, 22);
    const std::size_t ysz = d.batch * d.out_ch * d.out_h * d.out_w;
    auto dy = random_vec(ysz, 23);

    std::vector<double> ys(ysz), yp(ysz);
    kernels::serial::conv_transpose2d(x.data(), w.data(), ys.data(), d);
    kernels::par::conv_transpose2d(x.data(), w.data(), yp.data(), d);
    CHECK(ys == yp);

    std::vector<double> dxs(x.size(), 0.0), dxp(x.size(), 0.0);
    kernels::serial::conv_transpose2d_grad_input(dy.data(), w.data(), dxs.data(), d);
    kernels::par::conv_transpose2d_grad_input(dy.data(), w.data(), dxp.data(), d);
    CHECK(dxs == dxp);

    std::vector<double> dws(w.size(), 0.0), dwp(w.size(), 0.0);
    kernels::serial::conv_transpose2d_grad_weight(dy.data(), x.data(), dws.data(), d);
    kernels::par::conv_transpose2d_grad_weight(dy.data(), x.data(), dwp.data(), d);
    CHECK(dws == dwp);
}

TEST_CASE("softmax_rows: parallel matches serial bitwise") {
    const std::size_t rows = 333, cols = 11;
    auto x = random_vec(rows * cols, 31);
    std::vector<double> ys(x.size()), yp(x.size());
    kernels::serial::softmax_rows(x.data(), ys.data(), rows, cols);
    kernels::par::softmax_rows(x.data(), yp.data(), rows, cols);
    CHECK(ys == yp);
}

TEST_CASE("dispatch honors set_parallel") {
    CHECK(kernels::parallel_enabled());
    kernels::set_parallel(false);
    CHECK_FALSE(kernels::parallel_enabled());
    kernels::set_parallel(true);
    CHECK(kernels::parallel_enabled());
}
