#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssgan/rng.hpp"
#include "ssgan/tensor.hpp"

using namespace ssgan;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, bool requires_grad = false,
                     double lo = -1.0, double hi = 1.0) {
    rng::Rng gen(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = gen.uniform(lo, hi);
    return Tensor::from_vector(std::move(v), shape, requires_grad);
}

// Independent naive convolution used as oracle (no shared code with kernels).
std::vector<double> brute_conv(const std::vector<double>& x, std::size_t h, std::size_t w,
                               const std::vector<double>& ker, std::size_t k, std::size_t pad,
                               std::size_t stride, std::size_t& oh, std::size_t& ow) {
    oh = (h + 2 * pad - k) / stride + 1;
    ow = (w + 2 * pad - k) / stride + 1;
    std::vector<double> y(oh * ow, 0.0);
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b) {
                    const long r = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                    const long c = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                    if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w))
                        continue;
                    y[i * ow + j] += x[r * w + c] * ker[a * k + b];
                }
    return y;
}

}  // namespace

TEST_CASE("binary ops: elementwise arithmetic") {
    auto a = Tensor::from_vector({1, 2}, {2});
    auto b = Tensor::from_vector({3, 4}, {2});
    auto s = add(a, b);
    CHECK(s.at(0) == 4);
    CHECK(s.at(1) == 6);

    auto x = random_tensor({3, 4}, 7, true);
    auto z = mul(x, Tensor::zeros({3, 4}));
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z.at(i) == 0.0);
    sum(z).backward();
    for (double g : x.grad()) CHECK(g == 0.0);

    auto d = sub(x, x);
    for (std::size_t i = 0; i < d.numel(); ++i) CHECK(d.at(i) == 0.0);
}

TEST_CASE("binary ops: trailing-dimension broadcast") {
    auto m = Tensor::from_vector({1, 2, 3, 4, 5, 6}, {2, 3});
    auto v = Tensor::from_vector({10, 20, 30}, {3});
    auto r = add(m, v);
    CHECK(r.shape() == Shape{2, 3});
    CHECK(r.at(0) == 11);
    CHECK(r.at(5) == 36);

    // per-channel scale against (B,C,H,W)
    auto x = Tensor::full({2, 3, 2, 2}, 1.0);
    auto c = Tensor::from_vector({1, 2, 3}, {3, 1, 1});
    auto y = mul(x, c);
    CHECK(y.at(0) == 1);
    CHECK(y.at(4) == 2);
    CHECK(y.at(8) == 3);
    CHECK(y.at(12 + 0) == 1);

    CHECK_THROWS_WITH_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2})),
                         doctest::Contains("(2,3)"), ShapeError);
}

TEST_CASE("broadcast backward reduces over expanded dims") {
    auto m = random_tensor({4, 3}, 1, true);
    auto v = random_tensor({3}, 2, true);
    sum(mul(m, v)).backward();
    // d/dv_j sum_ij m_ij v_j = sum_i m_ij
    for (std::size_t j = 0; j < 3; ++j) {
        double want = 0.0;
        for (std::size_t i = 0; i < 4; ++i) want += m.at(i * 3 + j);
        CHECK(v.grad()[j] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("matmul: identity and arithmetic") {
    auto eye = Tensor::from_vector({1, 0, 0, 1}, {2, 2});
    auto m = Tensor::from_vector({1, 2, 3, 4}, {2, 2});
    auto r = matmul(eye, m);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.at(i) == m.at(i));

    auto a = Tensor::from_vector({1, 2}, {1, 2});
    auto b = Tensor::from_vector({3, 4}, {2, 1});
    CHECK(matmul(a, b).at(0) == 11);

    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul: gradients match finite differences") {
    auto a = random_tensor({3, 4}, 11, true);
    auto b = random_tensor({4, 2}, 12, true);
    auto r = random_tensor({3, 2}, 13);
    const double err = finite_difference_check(
        {a, b}, [&]() { return sum(mul(matmul(a, b), r)); }, 1e-5, 200, 1);
    CHECK(err <= 1e-6);
}

TEST_CASE("conv2d: scalar kernel scales input") {
    auto x = random_tensor({1, 1, 3, 3}, 21, false);
    auto w = Tensor::full({1, 1, 1, 1}, 2.0);
    auto y = conv2d(x, w, 0, 1);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) CHECK(y.at(i) == doctest::Approx(2 * x.at(i)));
}

TEST_CASE("conv2d: padded strided window sums against brute force") {
    std::vector<double> xv{0, 1, 2, 3, 4, 5, 6, 7, 8};
    auto x = Tensor::from_vector(xv, {1, 1, 3, 3});
    auto w = Tensor::full({1, 1, 3, 3}, 1.0);
    auto y = conv2d(x, w, 1, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    // frozen from the sliding-window oracle
    CHECK(y.at(0) == 8);
    CHECK(y.at(1) == 12);
    CHECK(y.at(2) == 20);
    CHECK(y.at(3) == 24);

    std::size_t oh, ow;
    auto expect = brute_conv(xv, 3, 3, std::vector<double>(9, 1.0), 3, 1, 2, oh, ow);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == expect[i]);
}

TEST_CASE("conv2d: errors") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), 1, 1),
                    ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), 0, 1),
                    ShapeError);
}

TEST_CASE("conv_transpose2d: inverts the conv shape map (4->8, Table-style)") {
    auto x = random_tensor({1, 2, 4, 4}, 31);
    auto w = random_tensor({3, 2, 5, 5}, 32);
    auto y = conv_transpose2d(x, w, 2, 2, 1);
    CHECK(y.shape() == Shape{1, 3, 8, 8});
    // and the matching conv maps 8 back to 4: floor((8+4-5)/2)+1
    auto back = conv2d(Tensor::zeros({1, 3, 8, 8}), random_tensor({2, 3, 5, 5}, 33), 2, 2);
    CHECK(back.shape() == Shape{1, 2, 4, 4});
}

TEST_CASE("conv and conv_transpose gradients match finite differences") {
    auto x = random_tensor({2, 2, 5, 5}, 41, true);
    auto w = random_tensor({3, 2, 3, 3}, 42, true);
    auto r = random_tensor({2, 3, 3, 3}, 43);
    const double err = finite_difference_check(
        {x, w}, [&]() { return sum(mul(conv2d(x, w, 1, 2), r)); }, 1e-5, 250, 2);
    CHECK(err <= 1e-5);

    auto xt = random_tensor({2, 3, 3, 3}, 44, true);
    auto wt = random_tensor({2, 3, 4, 4}, 45, true);
    auto yt = conv_transpose2d(xt, wt, 1, 2, 1);
    auto rt = random_tensor(yt.shape(), 46);
    const double errt = finite_difference_check(
        {xt, wt}, [&]() { return sum(mul(conv_transpose2d(xt, wt, 1, 2, 1), rt)); }, 1e-5, 250,
        3);
    CHECK(errt <= 1e-5);
}

TEST_CASE("activations: values and slopes") {
    auto x = Tensor::from_vector({-1, 0, 2}, {3}, true);
    auto y = leaky_relu(x, 0.2);
    CHECK(y.at(0) == doctest::Approx(-0.2));
    CHECK(y.at(1) == 0.0);
    CHECK(y.at(2) == 2.0);

    CHECK(tanh(Tensor::scalar(0.0)).value() == 0.0);

    auto z = Tensor::from_vector({-3.0}, {1}, true);
    sum(leaky_relu(z, 0.2)).backward();
    CHECK(z.grad()[0] == doctest::Approx(0.2));

    auto s = sigmoid(Tensor::scalar(0.0));
    CHECK(s.value() == doctest::Approx(0.5));
}

TEST_CASE("softmax: symmetry, shift invariance, normalization") {
    auto p = softmax(Tensor::from_vector({0, 0}, {2}));
    CHECK(p.at(0) == doctest::Approx(0.5));
    CHECK(p.at(1) == doctest::Approx(0.5));

    auto x = random_tensor({5, 7}, 51);
    auto a = softmax(x);
    auto b = softmax(add_scalar(x, 3.7));
    for (std::size_t i = 0; i < a.numel(); ++i)
        CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-12));

    for (std::size_t r = 0; r < 5; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
            const double v = a.at(r * 7 + c);
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            row += v;
        }
        CHECK(std::abs(row - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax and log_softmax gradients match finite differences") {
    auto x = random_tensor({3, 5}, 61, true);
    auto r = random_tensor({3, 5}, 62);
    CHECK(finite_difference_check({x}, [&]() { return sum(mul(softmax(x), r)); }, 1e-5, 200,
                                  4) <= 1e-6);
    CHECK(finite_difference_check({x}, [&]() { return sum(mul(log_softmax(x), r)); }, 1e-5,
                                  200, 5) <= 1e-6);
}

TEST_CASE("reductions and pooling") {
    auto x = Tensor::from_vector({1, 2, 3, 4, 5, 6}, {2, 3}, true);
    CHECK(sum(x).value() == 21);
    CHECK(mean(x).value() == doctest::Approx(3.5));

    auto srow = sum(x, {1}, false);
    CHECK(srow.shape() == Shape{2});
    CHECK(srow.at(0) == 6);
    CHECK(srow.at(1) == 15);

    auto skeep = sum(x, {0}, true);
    CHECK(skeep.shape() == Shape{1, 3});

    auto img = Tensor::from_vector({1, 2, 3, 4, 10, 20, 30, 40}, {1, 2, 2, 2}, true);
    auto g = global_average_pool(img);
    CHECK(g.shape() == Shape{1, 2});
    CHECK(g.at(0) == doctest::Approx(2.5));
    CHECK(g.at(1) == doctest::Approx(25.0));

    auto r = random_tensor({2}, 71);
    CHECK(finite_difference_check({img}, [&]() { return sum(mul(global_average_pool(img), r)); },
                                  1e-5, 200, 6) <= 1e-7);
}

TEST_CASE("dropout: replayable, unbiased, identity at p=0") {
    auto x = random_tensor({10, 10}, 81, false, 0.5, 1.5);

    auto y1 = dropout(x, 0.5, 123);
    auto y2 = dropout(x, 0.5, 123);
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.at(i) == y2.at(i));

    auto y3 = dropout(x, 0.5, 124);
    bool differs = false;
    for (std::size_t i = 0; i < y1.numel(); ++i)
        if (y1.at(i) != y3.at(i)) differs = true;
    CHECK(differs);

    // Monte-Carlo oracle: E[dropout(x)] == x within 2% over 1e4 seeds.
    const std::size_t trials = 10000;
    double ratio_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        auto y = dropout(x, 0.5, rng::mix(9000, t));
        for (std::size_t i = 0; i < y.numel(); ++i) {
            ratio_sum += y.at(i) / x.at(i);
            ++count;
        }
    }
    CHECK(ratio_sum / static_cast<double>(count) == doctest::Approx(1.0).epsilon(0.02));

    CHECK_THROWS_AS(dropout(x, 1.0, 1), ValueError);
    CHECK_THROWS_AS(dropout(x, -0.1, 1), ValueError);
}

TEST_CASE("backward: analytic gradients and accumulation") {
    auto x = random_tensor({4}, 91, true);
    sum(mul(x, x)).backward();
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(x.grad()[i] == doctest::Approx(2 * x.at(i)).epsilon(1e-12));

    // independent loss leaves grads untouched
    auto y = random_tensor({4}, 92, true);
    x.zero_grad();
    sum(mul(y, y)).backward();
    for (double g : x.grad()) CHECK(g == 0.0);

    // repeated backward accumulates
    x.zero_grad();
    auto loss = sum(mul(x, x));
    loss.backward();
    loss.backward();
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(x.grad()[i] == doctest::Approx(4 * x.at(i)).epsilon(1e-12));
}

TEST_CASE("backward: diamond graph visits each node once") {
    auto x = Tensor::from_vector({3.0}, {1}, true);
    auto y = mul(x, x);
    auto z = add(y, y);  // z = 2x^2, dz/dx = 4x = 12
    sum(z).backward();
    CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("backward: rejects non-scalar loss") {
    auto x = random_tensor({3}, 101, true);
    CHECK_THROWS_AS(mul(x, x).backward(), ValueError);
}

TEST_CASE("detach cuts the graph") {
    auto x = random_tensor({3}, 111, true);
    auto d = mul(x, x).detach();
    CHECK_FALSE(d.requires_grad());
    auto loss = sum(mul(d, x));
    loss.backward();
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(x.grad()[i] == doctest::Approx(d.at(i)).epsilon(1e-12));
}

TEST_CASE("structural ops: reshape, concat, index, take, col") {
    auto x = random_tensor({2, 6}, 121, true);
    auto r = reshape(x, {3, 4});
    CHECK(r.shape() == Shape{3, 4});
    CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);

    auto a = Tensor::from_vector({1, 2, 3, 4}, {2, 2}, true);
    auto b = Tensor::from_vector({5, 6}, {1, 2}, true);
    auto cat = concat_rows({a, b});
    CHECK(cat.shape() == Shape{3, 2});
    CHECK(cat.at(4) == 5);
    sum(mul(cat, cat)).backward();
    CHECK(b.grad()[0] == doctest::Approx(10.0));

    auto sel = index_rows(cat, {2, 0});
    CHECK(sel.at(0) == 5);
    CHECK(sel.at(2) == 1);

    auto t = take_per_row(a, {1, 0});
    CHECK(t.at(0) == 2);
    CHECK(t.at(1) == 3);

    auto c1 = col(a, 1);
    CHECK(c1.at(0) == 2);
    CHECK(c1.at(1) == 4);
}

TEST_CASE("clamp, log, exp, sqrt") {
    auto x = Tensor::from_vector({-2, 0.5, 3}, {3}, true);
    auto c = clamp(x, 0.0, 1.0);
    CHECK(c.at(0) == 0.0);
    CHECK(c.at(1) == 0.5);
    CHECK(c.at(2) == 1.0);
    sum(c).backward();
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 0.0);

    CHECK_THROWS_AS(log(Tensor::from_vector({0.0}, {1})), ValueError);
    CHECK_THROWS_AS(sqrt(Tensor::from_vector({-1.0}, {1})), ValueError);

    auto p = Tensor::from_vector({0.25, 4.0}, {2}, true);
    auto s = sqrt(p);
    CHECK(s.at(0) == doctest::Approx(0.5));
    CHECK(s.at(1) == doctest::Approx(2.0));
    CHECK(finite_difference_check({p}, [&]() { return sum(mul(log(p), sqrt(p))); }, 1e-6, 200,
                                  7) <= 1e-7);
}

TEST_CASE("finite_difference_check: quadratic and zero function") {
    auto x = random_tensor({10}, 131, true);
    const double err =
        finite_difference_check({x}, [&]() { return sum(mul(x, x)); }, 1e-5, 200, 8);
    CHECK(err <= 1e-7);

    const double zero_err = finite_difference_check(
        {x}, [&]() { return mul_scalar(sum(x), 0.0); }, 1e-5, 200, 9);
    CHECK(zero_err == 0.0);
}

TEST_CASE("ops are deterministic given identical inputs and seeds") {
    auto x = random_tensor({17, 5}, 141);
    auto once = softmax(mul(x, x));
    auto twice = softmax(mul(x, x));
    for (std::size_t i = 0; i < once.numel(); ++i) CHECK(once.at(i) == twice.at(i));
}
