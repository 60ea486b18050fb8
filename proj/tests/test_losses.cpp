#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssgan/losses.hpp"
#include "ssgan/nn.hpp"
#include "ssgan/rng.hpp"

using namespace ssgan;
using namespace ssgan::losses;

namespace {

Tensor uniform_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    rng::Rng gen(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = gen.uniform(lo, hi);
    return Tensor::from_vector(std::move(v), shape);
}

// A bare 2-in / (K+1)-out linear softmax discriminator with known weights,
// plus a plain-double mirror of its forward pass used as the oracle.
struct TinyLinear {
    nn::ModelConfig cfg;
    nn::ParamSet params;
    std::vector<double> w;  // (2 x 3) row-major
    std::vector<double> b;  // (3)

    explicit TinyLinear(std::uint64_t seed) {
        cfg.name = "tiny";
        cfg.input_shape = {2};
        cfg.num_classes = 2;
        nn::LayerSpec fc;
        fc.kind = nn::LayerKind::dense;
        fc.name = "fc";
        fc.in = 2;
        fc.out = 3;
        cfg.layers = {fc};
        params = nn::build_model(cfg, seed);
        w.assign(params.at("fc.w").data().begin(), params.at("fc.w").data().end());
        b.assign(params.at("fc.b").data().begin(), params.at("fc.b").data().end());
    }

    // renormalized 2-class distribution per row
    std::vector<std::array<double, 2>> predict(const std::vector<std::array<double, 2>>& x) const {
        std::vector<std::array<double, 2>> out;
        for (const auto& row : x) {
            double logits[3];
            for (int c = 0; c < 3; ++c)
                logits[c] = row[0] * w[0 * 3 + c] + row[1] * w[1 * 3 + c] + b[c];
            double mx = std::max({logits[0], logits[1], logits[2]});
            double e[3], denom = 0.0;
            for (int c = 0; c < 3; ++c) {
                e[c] = std::exp(logits[c] - mx);
                denom += e[c];
            }
            const double p0 = e[0] / denom, p1 = e[1] / denom;
            out.push_back({p0 / (p0 + p1), p1 / (p0 + p1)});
        }
        return out;
    }
};

}  // namespace

TEST_CASE("supervised_loss: closed forms") {
    // true-class probability 1 -> loss 0 (up to the 1e-12 clamp)
    auto sure = Tensor::from_vector({1, 0, 0}, {1, 3});
    CHECK(supervised_loss(sure, {0}).value() == doctest::Approx(0.0).epsilon(1e-9));

    // uniform over K+1 = 11 classes -> ln 11
    auto uniform = Tensor::full({4, 11}, 1.0 / 11.0);
    CHECK(supervised_loss(uniform, {0, 3, 9, 5}).value() ==
          doctest::Approx(std::log(11.0)).epsilon(1e-12));

    // batch of losses {0, ln 2} -> mean (ln 2)/2
    auto two = Tensor::from_vector({1.0, 0.0, 0.0, 0.5, 0.25, 0.25}, {2, 3});
    CHECK(supervised_loss(two, {0, 0}).value() ==
          doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-9));

    CHECK_THROWS_AS(supervised_loss(two, {0, 2}), ValueError);  // fake class not a target
    CHECK_THROWS_AS(supervised_loss(two, {-1, 0}), ValueError);
}

TEST_CASE("unsupervised_gan_loss: closed forms") {
    auto mk = [](double p_fake, std::size_t rows) {
        std::vector<double> v;
        for (std::size_t r = 0; r < rows; ++r) {
            v.push_back((1.0 - p_fake) / 2.0);
            v.push_back((1.0 - p_fake) / 2.0);
            v.push_back(p_fake);
        }
        return Tensor::from_vector(std::move(v), {rows, 3});
    };

    // perfect discriminator
    CHECK(unsupervised_gan_loss(mk(0.0, 3), mk(1.0, 3)).value() ==
          doctest::Approx(0.0).epsilon(1e-9));
    // fake p=0.5 with perfect reals -> ln 2
    CHECK(unsupervised_gan_loss(mk(0.0, 3), mk(0.5, 3)).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));
    // real p=0.5 with perfect fakes -> ln 2
    CHECK(unsupervised_gan_loss(mk(0.5, 3), mk(1.0, 3)).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("feature_matching_loss: closed forms") {
    auto a = uniform_tensor({5, 4}, 1);
    CHECK(feature_matching_loss(a, a).value() == 0.0);

    // means differ by a unit vector
    auto zero = Tensor::zeros({2, 3});
    auto unit = Tensor::from_vector({1, 0, 0, 1, 0, 0}, {2, 3});
    CHECK(feature_matching_loss(unit, zero).value() == doctest::Approx(1.0));

    auto real = Tensor::from_vector({1, 2, 1, 2}, {2, 2});
    auto fake = Tensor::zeros({2, 2});
    CHECK(feature_matching_loss(real, fake).value() == doctest::Approx(5.0));

    CHECK_THROWS_AS(feature_matching_loss(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})),
                    ShapeError);
}

TEST_CASE("mixup: definition and edge lambdas") {
    auto u = uniform_tensor({3, 2}, 2);
    auto v = uniform_tensor({3, 2}, 3);

    auto m1 = mixup(u, v, 1.0);
    for (std::size_t i = 0; i < u.numel(); ++i) CHECK(m1.at(i) == u.at(i));

    auto m = mixup(Tensor::from_vector({1, 0}, {2}), Tensor::from_vector({0, 1}, {2}), 0.3);
    CHECK(m.at(0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(m.at(1) == doctest::Approx(0.7).epsilon(1e-12));

    for (double lam : {0.0, 0.25, 0.8}) {
        auto idem = mixup(u, u, lam);
        for (std::size_t i = 0; i < u.numel(); ++i)
            CHECK(idem.at(i) == doctest::Approx(u.at(i)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(mixup(u, uniform_tensor({2, 2}, 4), 0.5), ShapeError);
    CHECK_THROWS_AS(mixup(u, v, 1.5), ValueError);
    CHECK_THROWS_AS(mixup(u, v, -0.1), ValueError);
}

TEST_CASE("divergence: closed forms and order convention") {
    auto p = Tensor::from_vector({0.3, 0.7}, {1, 2});
    CHECK(divergence(Divergence::mse, p, p).value() == 0.0);
    CHECK(divergence(Divergence::kl, p, p).value() == doctest::Approx(0.0).epsilon(1e-12));

    auto s = Tensor::from_vector({1, 0}, {1, 2});
    auto t = Tensor::from_vector({0, 1}, {1, 2});
    CHECK(divergence(Divergence::mse, s, t).value() == doctest::Approx(1.0));

    // KL(teacher || student), teacher [0.5,0.5], student [0.25,0.75]
    auto student = Tensor::from_vector({0.25, 0.75}, {1, 2});
    auto teacher = Tensor::from_vector({0.5, 0.5}, {1, 2});
    const double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(divergence(Divergence::kl, student, teacher).value() ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.143841).epsilon(1e-5));

    CHECK_THROWS_AS(divergence(Divergence::mse, Tensor::zeros({1, 2}), Tensor::zeros({1, 3})),
                    ShapeError);
}

TEST_CASE("divergence: teacher side receives no gradient") {
    auto s = Tensor::from_vector({0.3, 0.7}, {1, 2}, true);
    auto t = Tensor::from_vector({0.6, 0.4}, {1, 2}, true);
    divergence(Divergence::kl, s, t).backward();
    for (double g : t.grad()) CHECK(g == 0.0);
    bool student_has_grad = false;
    for (double g : s.grad())
        if (g != 0.0) student_has_grad = true;
    CHECK(student_has_grad);
}

TEST_CASE("class_distribution: renormalized rows sum to one") {
    auto probs = softmax(uniform_tensor({6, 4}, 7, -2.0, 2.0));
    auto d = class_distribution(probs, 3, true);
    CHECK(d.shape() == Shape{6, 3});
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += d.at(r * 3 + c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto raw = class_distribution(probs, 3, false);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(raw.at(r * 3 + c) == probs.at(r * 4 + c));
}

TEST_CASE("mt_consistency: identical branches vanish; teacher gets no gradient") {
    auto cfg = nn::discriminator_preset("bars-conv", 2);
    auto student = nn::build_model(cfg, 11);
    auto teacher = student.clone(true);
    auto x = uniform_tensor({4, 1, 8, 8}, 100);

    ConsistencyOpts opts;
    auto zero = mt_consistency(cfg, student, teacher, x, 5, 5, opts);
    CHECK(zero.value() == 0.0);

    auto loss = mt_consistency(cfg, student, teacher, x, 5, 6, opts);
    CHECK(loss.value() >= 0.0);
    student.zero_grad();
    teacher.zero_grad();
    loss.backward();
    for (const auto& e : teacher.entries())
        for (double g : e.tensor.grad()) CHECK(g == 0.0);
    bool any = false;
    for (const auto& e : student.entries())
        for (double g : e.tensor.grad())
            if (g != 0.0) any = true;
    CHECK(any);
}

TEST_CASE("mt_consistency: matches direct divergence on a dropout-free linear model") {
    TinyLinear student(21), teacher(22);
    auto x = uniform_tensor({5, 2}, 101);

    ConsistencyOpts opts;
    auto loss = mt_consistency(student.cfg, student.params, teacher.params, x, 9, 10, opts);

    std::vector<std::array<double, 2>> rows;
    for (std::size_t r = 0; r < 5; ++r) rows.push_back({x.at(r * 2), x.at(r * 2 + 1)});
    auto ps = student.predict(rows);
    auto pt = teacher.predict(rows);
    double mse = 0.0;
    for (std::size_t r = 0; r < 5; ++r)
        for (int c = 0; c < 2; ++c) mse += (ps[r][c] - pt[r][c]) * (ps[r][c] - pt[r][c]);
    mse /= 5.0 * 2.0;
    CHECK(loss.value() == doctest::Approx(mse).epsilon(1e-12));
}

TEST_CASE("ict_consistency: lambda=1 reduces to MT with shared augmentation") {
    auto cfg = nn::discriminator_preset("bars-conv", 2);
    auto student = nn::build_model(cfg, 31);
    auto teacher = nn::build_model(cfg, 32);
    auto x = uniform_tensor({6, 1, 8, 8}, 102);

    ConsistencyOpts opts;
    MixupSample mix{1.0, {3, 1, 5, 0, 2, 4}};
    auto ict = ict_consistency(cfg, student, teacher, x, mix, 13, opts);
    auto mt = mt_consistency(cfg, student, teacher, x, 13, 13, opts);
    CHECK(std::abs(ict.value() - mt.value()) <= 1e-12);
}

TEST_CASE("ict_consistency: lambda=0 reduces symmetrically onto x_n") {
    TinyLinear student(41), teacher(42);
    auto x = uniform_tensor({4, 2}, 103);
    ConsistencyOpts opts;
    MixupSample mix{0.0, {2, 3, 0, 1}};
    auto ict = ict_consistency(student.cfg, student.params, teacher.params, x, mix, 14, opts);

    // oracle on the shuffled batch
    std::vector<std::array<double, 2>> shuffled;
    for (std::size_t r : mix.perm) shuffled.push_back({x.at(r * 2), x.at(r * 2 + 1)});
    auto ps = student.predict(shuffled);
    auto pt = teacher.predict(shuffled);
    double mse = 0.0;
    for (std::size_t r = 0; r < 4; ++r)
        for (int c = 0; c < 2; ++c) mse += (ps[r][c] - pt[r][c]) * (ps[r][c] - pt[r][c]);
    mse /= 4.0 * 2.0;
    CHECK(ict.value() == doctest::Approx(mse).epsilon(1e-12));
}

TEST_CASE("ict_consistency: hand-composed oracle, B=3, lambda=0.4") {
    TinyLinear student(51), teacher(52);
    auto x = uniform_tensor({3, 2}, 104);
    const double lam = 0.4;
    MixupSample mix{lam, {1, 2, 0}};
    ConsistencyOpts opts;
    auto ict = ict_consistency(student.cfg, student.params, teacher.params, x, mix, 15, opts);

    std::vector<std::array<double, 2>> xm, xn, mixed;
    for (std::size_t r = 0; r < 3; ++r) xm.push_back({x.at(r * 2), x.at(r * 2 + 1)});
    for (std::size_t r : mix.perm) xn.push_back(xm[r]);
    for (std::size_t r = 0; r < 3; ++r)
        mixed.push_back({lam * xm[r][0] + (1 - lam) * xn[r][0],
                         lam * xm[r][1] + (1 - lam) * xn[r][1]});
    auto ps = student.predict(mixed);
    auto pm = teacher.predict(xm);
    auto pn = teacher.predict(xn);
    double mse = 0.0;
    for (std::size_t r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) {
            const double target = lam * pm[r][c] + (1 - lam) * pn[r][c];
            mse += (ps[r][c] - target) * (ps[r][c] - target);
        }
    mse /= 3.0 * 2.0;
    CHECK(ict.value() == doctest::Approx(mse).epsilon(1e-11));
}

TEST_CASE("composite_consistency: coincident branches vanish; lambda=1 equals MT") {
    auto cfg = nn::discriminator_preset("bars-conv", 2);
    auto student = nn::build_model(cfg, 61);
    auto teacher = student.clone(false);
    auto x = uniform_tensor({4, 1, 8, 8}, 105);

    ConsistencyOpts opts;
    MixupSample mix{1.0, {1, 0, 3, 2}};
    CHECK(composite_consistency(cfg, student, teacher, x, mix, 7, 7, opts).value() == 0.0);

    auto teacher2 = nn::build_model(cfg, 62);
    auto comp = composite_consistency(cfg, student, teacher2, x, mix, 7, 8, opts);
    auto mt = mt_consistency(cfg, student, teacher2, x, 7, 8, opts);
    CHECK(std::abs(comp.value() - mt.value()) <= 1e-12);
}

TEST_CASE("composite_consistency: hand-composed oracle, B=2, lambda=0.5") {
    TinyLinear student(71), teacher(72);
    auto x = uniform_tensor({2, 2}, 106);
    const double lam = 0.5;
    MixupSample mix{lam, {1, 0}};
    ConsistencyOpts opts;
    auto comp =
        composite_consistency(student.cfg, student.params, teacher.params, x, mix, 16, 17, opts);

    // identity augmentation makes both branches see the same pixels
    std::vector<std::array<double, 2>> xm, xn, mixed;
    for (std::size_t r = 0; r < 2; ++r) xm.push_back({x.at(r * 2), x.at(r * 2 + 1)});
    for (std::size_t r : mix.perm) xn.push_back(xm[r]);
    for (std::size_t r = 0; r < 2; ++r)
        mixed.push_back({lam * xm[r][0] + (1 - lam) * xn[r][0],
                         lam * xm[r][1] + (1 - lam) * xn[r][1]});
    auto ps = student.predict(mixed);
    auto pm = teacher.predict(xm);
    auto pn = teacher.predict(xn);
    double mse = 0.0;
    for (std::size_t r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            const double target = lam * pm[r][c] + (1 - lam) * pn[r][c];
            mse += (ps[r][c] - target) * (ps[r][c] - target);
        }
    mse /= 2.0 * 2.0;
    CHECK(comp.value() == doctest::Approx(mse).epsilon(1e-11));
}

TEST_CASE("composite_consistency: swapping the pair with lambda <-> 1-lambda is symmetric") {
    auto cfg = nn::discriminator_preset("bars-conv", 2);
    auto student = nn::build_model(cfg, 81);
    auto teacher = nn::build_model(cfg, 82);
    auto xm_s = uniform_tensor({4, 1, 8, 8}, 107);
    auto xn_s = uniform_tensor({4, 1, 8, 8}, 108);
    auto xm_t = uniform_tensor({4, 1, 8, 8}, 109);
    auto xn_t = uniform_tensor({4, 1, 8, 8}, 110);

    ConsistencyOpts opts;
    for (double lam : {0.0, 0.3, 0.5, 0.9}) {
        auto a = composite_consistency_from_pairs(cfg, student, teacher, xm_s, xn_s, xm_t, xn_t,
                                                  lam, 19, 20, opts);
        auto b = composite_consistency_from_pairs(cfg, student, teacher, xn_s, xm_s, xn_t, xm_t,
                                                  1.0 - lam, 19, 20, opts);
        CHECK(std::abs(a.value() - b.value()) <= 1e-10);
    }
}

TEST_CASE("composite_consistency: feature placement terms") {
    auto cfg = nn::discriminator_preset("mlp-2d", 2);
    auto student = nn::build_model(cfg, 91);
    auto teacher = nn::build_model(cfg, 92);
    auto x = uniform_tensor({4, 2}, 111);
    MixupSample mix{0.4, {2, 0, 3, 1}};

    ConsistencyOpts pred;
    pred.placement.kind = PlacementKind::prediction;
    ConsistencyOpts feat;
    feat.placement.kind = PlacementKind::feature;
    feat.placement.feature_weight = 0.5;
    ConsistencyOpts both;
    both.placement.kind = PlacementKind::both;
    both.placement.feature_weight = 0.5;

    const double p = composite_consistency(cfg, student, teacher, x, mix, 3, 4, pred).value();
    const double f = composite_consistency(cfg, student, teacher, x, mix, 3, 4, feat).value();
    const double pf = composite_consistency(cfg, student, teacher, x, mix, 3, 4, both).value();
    CHECK(p > 0.0);
    CHECK(f > 0.0);
    CHECK(pf == doctest::Approx(p + f).epsilon(1e-12));
}

TEST_CASE("consistency losses are nonnegative (kl up to clamp error)") {
    auto cfg = nn::discriminator_preset("mlp-2d", 3);
    auto student = nn::build_model(cfg, 93);
    auto teacher = nn::build_model(cfg, 94);
    auto x = uniform_tensor({8, 2}, 112);
    MixupSample mix{0.7, {4, 2, 7, 1, 0, 3, 6, 5}};
    for (auto div : {Divergence::mse, Divergence::kl}) {
        ConsistencyOpts opts;
        opts.div = div;
        CHECK(mt_consistency(cfg, student, teacher, x, 1, 2, opts).value() >= -1e-9);
        CHECK(ict_consistency(cfg, student, teacher, x, mix, 1, opts).value() >= -1e-9);
        CHECK(composite_consistency(cfg, student, teacher, x, mix, 1, 2, opts).value() >=
              -1e-9);
    }
}

TEST_CASE("logit shift invariance carries through every loss term") {
    auto logits = uniform_tensor({5, 4}, 113, -3.0, 3.0);
    auto shifted = add_scalar(logits, 11.25);
    auto p1 = softmax(logits);
    auto p2 = softmax(shifted);

    CHECK(std::abs(supervised_loss(p1, {0, 1, 2, 0, 1}).value() -
                   supervised_loss(p2, {0, 1, 2, 0, 1}).value()) <= 1e-12);
    CHECK(std::abs(unsupervised_gan_loss(p1, p1).value() -
                   unsupervised_gan_loss(p2, p2).value()) <= 1e-12);
    CHECK(std::abs(divergence(Divergence::mse, class_distribution(p1, 3, true),
                              class_distribution(p2, 3, true))
                       .value()) <= 1e-12);
}

TEST_CASE("discriminator_total_loss: lambda=0 reduces exactly to the semi-GAN objective") {
    auto cfg = nn::discriminator_preset("bars-conv", 2);
    auto student = nn::build_model(cfg, 95);
    auto teacher = nn::build_model(cfg, 96);
    auto x_l = uniform_tensor({3, 1, 8, 8}, 114);
    auto x_u = uniform_tensor({5, 1, 8, 8}, 115);
    auto x_f = uniform_tensor({5, 1, 8, 8}, 116);
    std::vector<int> y{0, 1, 0};
    MixupSample mix{0.5, {3, 1, 4, 0, 2}};

    DiscriminatorLossConfig none_cfg;
    none_cfg.kind = ConsistencyKind::none;
    DiscriminatorLossConfig comp_cfg;
    comp_cfg.kind = ConsistencyKind::composite;

    auto none_terms = discriminator_total_loss(cfg, student, teacher, x_l, y, x_u, x_f, 5.0,
                                               mix, 23, 24, none_cfg);
    auto zero_terms = discriminator_total_loss(cfg, student, teacher, x_l, y, x_u, x_f, 0.0,
                                               mix, 23, 24, comp_cfg);
    CHECK(none_terms.total.value() == zero_terms.total.value());  // bit-for-bit
    CHECK(none_terms.consistency == 0.0);

    // and the baseline really is supervised + unsupervised
    CHECK(std::abs(none_terms.total.value() -
                   (none_terms.supervised + none_terms.unsupervised)) <= 1e-12);
}

TEST_CASE("discriminator_total_loss: term breakdown sums to the optimized total") {
    auto cfg = nn::discriminator_preset("bars-conv", 2);
    auto student = nn::build_model(cfg, 97);
    auto teacher = nn::build_model(cfg, 98);
    auto x_l = uniform_tensor({3, 1, 8, 8}, 117);
    auto x_u = uniform_tensor({6, 1, 8, 8}, 118);
    auto x_f = uniform_tensor({6, 1, 8, 8}, 119);
    std::vector<int> y{1, 0, 1};
    MixupSample mix{0.25, {5, 3, 0, 4, 1, 2}};

    for (auto kind : {ConsistencyKind::mt, ConsistencyKind::ict, ConsistencyKind::composite}) {
        DiscriminatorLossConfig dcfg;
        dcfg.kind = kind;
        auto terms = discriminator_total_loss(cfg, student, teacher, x_l, y, x_u, x_f, 7.5, mix,
                                              29, 30, dcfg);
        CHECK(std::abs(terms.total.value() - (terms.supervised + terms.unsupervised +
                                              7.5 * terms.consistency)) <= 1e-12);
        CHECK(terms.consistency >= 0.0);
    }
}

TEST_CASE("discriminator_total_loss: consistency_on_labeled widens the pool") {
    auto cfg = nn::discriminator_preset("mlp-2d", 2);
    auto student = nn::build_model(cfg, 99);
    auto teacher = nn::build_model(cfg, 100);
    auto x_l = uniform_tensor({2, 2}, 120);
    auto x_u = uniform_tensor({4, 2}, 121);
    auto x_f = uniform_tensor({4, 2}, 122);
    std::vector<int> y{0, 1};

    DiscriminatorLossConfig dcfg;
    dcfg.kind = ConsistencyKind::composite;
    dcfg.consistency_on_labeled = true;
    MixupSample mix{0.6, {5, 2, 0, 4, 1, 3}};  // pool of 4 + 2
    auto terms =
        discriminator_total_loss(cfg, student, teacher, x_l, y, x_u, x_f, 1.0, mix, 31, 32, dcfg);
    CHECK(terms.consistency > 0.0);
}

TEST_CASE("generator_total_loss: no gradient reaches the discriminator") {
    auto d_cfg = nn::discriminator_preset("mlp-2d", 2);
    auto g_cfg = nn::generator_preset("mlp-2d-gen");
    auto student = nn::build_model(d_cfg, 101);
    auto generator = nn::build_model(g_cfg, 102);
    auto x_u = uniform_tensor({6, 2}, 123);
    auto z = uniform_tensor({6, 16}, 124, 0.0, 1.0);

    student.zero_grad();
    generator.zero_grad();
    auto loss = generator_total_loss(d_cfg, g_cfg, student, generator, x_u, z, 33,
                                     identity_augment());
    CHECK(loss.value() >= 0.0);
    loss.backward();
    for (const auto& e : student.entries())
        for (double g : e.tensor.grad()) CHECK(g == 0.0);
    bool any = false;
    for (const auto& e : generator.entries())
        for (double g : e.tensor.grad())
            if (g != 0.0) any = true;
    CHECK(any);
}

TEST_CASE("generator_total_loss: matches a hand-built two-network oracle") {
    // discriminator: tiny linear; generator: fixed affine map of z
    TinyLinear disc(131);
    nn::ModelConfig g_cfg;
    g_cfg.name = "tiny-gen";
    g_cfg.input_shape = {2};
    g_cfg.latent_dim = 2;
    nn::LayerSpec fc;
    fc.kind = nn::LayerKind::dense;
    fc.name = "fc";
    fc.in = 2;
    fc.out = 2;
    g_cfg.layers = {fc};
    auto generator = nn::build_model(g_cfg, 132);

    auto x_u = uniform_tensor({3, 2}, 125);
    auto z = uniform_tensor({3, 2}, 126, 0.0, 1.0);
    auto loss = generator_total_loss(disc.cfg, g_cfg, disc.params, generator, x_u, z, 34,
                                     identity_augment());

    // oracle: features of the tiny linear model are its inputs
    std::vector<double> gw(generator.at("fc.w").data().begin(),
                           generator.at("fc.w").data().end());
    std::vector<double> gb(generator.at("fc.b").data().begin(),
                           generator.at("fc.b").data().end());
    double mean_real[2] = {0, 0}, mean_fake[2] = {0, 0};
    for (std::size_t r = 0; r < 3; ++r) {
        for (int c = 0; c < 2; ++c) {
            mean_real[c] += x_u.at(r * 2 + c) / 3.0;
            const double fake =
                z.at(r * 2) * gw[0 * 2 + c] + z.at(r * 2 + 1) * gw[1 * 2 + c] + gb[c];
            mean_fake[c] += fake / 3.0;
        }
    }
    const double expect = (mean_real[0] - mean_fake[0]) * (mean_real[0] - mean_fake[0]) +
                          (mean_real[1] - mean_fake[1]) * (mean_real[1] - mean_fake[1]);
    CHECK(loss.value() == doctest::Approx(expect).epsilon(1e-12));
}
