#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "handseg/tensor.hpp"
#include "test_util.hpp"

using namespace handseg;
using namespace handseg::test;

TEST_CASE("conv2d identity kernel") {
    Tensor input({1, 3, 3}, std::vector<real>(9, 1.0));
    KernelBank k = KernelBank::zeros(1, 1, 1, 1);
    k.weights[0] = 1.0;
    Tensor out = conv2d_forward(input, k);
    CHECK(out.shape() == input.shape());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(1.0));
}

TEST_CASE("conv2d averaging kernel center value") {
    Tensor input({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    KernelBank k = KernelBank::zeros(1, 1, 3, 3);
    for (auto& w : k.weights) w = 1.0 / 9.0;
    Tensor out = conv2d_forward(input, k);
    CHECK(out.at(0, 1, 1) == doctest::Approx(5.0));
}

TEST_CASE("conv2d matches the nested-loop reference") {
    Rng rng(7);
    Tensor input = random_tensor(rng, {3, 8, 8});
    KernelBank k = random_bank(rng, 4, 3, 5, 5);
    CHECK(max_rel_error(conv2d_forward(input, k), conv2d_reference(input, k)) < 1e-6);
}

TEST_CASE("conv2d oracle equivalence over 50 random instances") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int in_c = rng.range(1, 4), out_c = rng.range(1, 4);
        const int h = rng.range(1, 8), w = rng.range(1, 8);
        const int kh = 2 * rng.range(0, 3) + 1, kw = 2 * rng.range(0, 3) + 1;
        Tensor input = random_tensor(rng, {in_c, h, w});
        KernelBank k = random_bank(rng, out_c, in_c, kh, kw);
        CHECK(max_rel_error(conv2d_forward(input, k), conv2d_reference(input, k)) < 1e-6);
    }
}

TEST_CASE("conv2d rejects channel mismatch with both shapes named") {
    Tensor input({2, 4, 4});
    KernelBank k = KernelBank::zeros(1, 3, 3, 3);
    CHECK_THROWS_WITH_AS(conv2d_forward(input, k),
                         doctest::Contains("2x4x4"), std::invalid_argument);
}

TEST_CASE("conv2d linearity with zero bias") {
    Rng rng(13);
    Tensor x = random_tensor(rng, {2, 6, 6});
    Tensor y = random_tensor(rng, {2, 6, 6});
    KernelBank k = random_bank(rng, 3, 2, 3, 3);
    for (auto& b : k.bias) b = 0;
    const real a = 1.7, b = -0.4;
    Tensor combo({2, 6, 6});
    for (std::size_t i = 0; i < combo.size(); ++i)
        combo.data()[i] = a * x.data()[i] + b * y.data()[i];
    Tensor lhs = conv2d_forward(combo, k);
    Tensor fx = conv2d_forward(x, k), fy = conv2d_forward(y, k);
    Tensor rhs({3, 6, 6});
    for (std::size_t i = 0; i < rhs.size(); ++i)
        rhs.data()[i] = a * fx.data()[i] + b * fy.data()[i];
    CHECK(max_rel_error(lhs, rhs) < 1e-6);
}

TEST_CASE("conv2d_backward zero grad_output") {
    Rng rng(17);
    Tensor input = random_tensor(rng, {2, 4, 4});
    KernelBank k = random_bank(rng, 2, 2, 3, 3);
    ConvGrads g = conv2d_backward(input, k, Tensor({2, 4, 4}));
    for (real v : g.grad_input.data()) CHECK(v == 0);
    for (real v : g.grad_weights) CHECK(v == 0);
    for (real v : g.grad_bias) CHECK(v == 0);
}

TEST_CASE("conv2d_backward 1x1 scalar case") {
    Rng rng(19);
    Tensor input = random_tensor(rng, {1, 4, 4});
    KernelBank k = random_bank(rng, 1, 1, 1, 1);
    Tensor grad_out = random_tensor(rng, {1, 4, 4});
    ConvGrads g = conv2d_backward(input, k, grad_out);
    real expect = 0;
    for (std::size_t i = 0; i < input.size(); ++i)
        expect += input.data()[i] * grad_out.data()[i];
    CHECK(g.grad_weights[0] == doctest::Approx(expect));
}

TEST_CASE("conv2d_backward matches finite differences") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor input = random_tensor(rng, {2, 5, 5});
        KernelBank k = random_bank(rng, 2, 2, 3, 3);
        Tensor grad_out = random_tensor(rng, {2, 5, 5});
        ConvGrads g = conv2d_backward(input, k, grad_out);

        auto objective = [&](const Tensor& in, const KernelBank& kk) {
            Tensor out = conv2d_forward(in, kk);
            real s = 0;
            for (std::size_t i = 0; i < out.size(); ++i)
                s += out.data()[i] * grad_out.data()[i];
            return s;
        };
        for (std::size_t i = 0; i < input.size(); i += 7) {
            Tensor in2 = input;
            const real numeric = central_diff(
                [&](real v) { in2.data()[i] = v; return objective(in2, k); }, input.data()[i]);
            CHECK(grad_close(g.grad_input.data()[i], numeric));
        }
        for (std::size_t i = 0; i < k.weights.size(); i += 5) {
            KernelBank k2 = k;
            const real numeric = central_diff(
                [&](real v) { k2.weights[i] = v; return objective(input, k2); }, k.weights[i]);
            CHECK(grad_close(g.grad_weights[i], numeric));
        }
        for (std::size_t i = 0; i < k.bias.size(); ++i) {
            KernelBank k2 = k;
            const real numeric = central_diff(
                [&](real v) { k2.bias[i] = v; return objective(input, k2); }, k.bias[i]);
            CHECK(grad_close(g.grad_bias[i], numeric));
        }
    }
}

TEST_CASE("leaky relu forward values") {
    Tensor x({1, 1, 2}, {2.0, -3.0});
    Tensor out = leaky_relu_forward(x, 0.01);
    CHECK(out.data()[0] == doctest::Approx(2.0));
    CHECK(out.data()[1] == doctest::Approx(-0.03));
}

TEST_CASE("leaky relu gradient matches finite differences away from zero") {
    Rng rng(29);
    Tensor x = random_tensor(rng, {2, 4, 4});
    for (auto& v : x.data())
        if (std::abs(v) < 0.05) v += 0.1;  // keep clear of the kink
    Tensor grad_out = random_tensor(rng, {2, 4, 4});
    Tensor g = leaky_relu_backward(x, 0.01, grad_out);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const real numeric = central_diff(
            [&](real v) {
                Tensor x2 = x;
                x2.data()[i] = v;
                Tensor out = leaky_relu_forward(x2, 0.01);
                real s = 0;
                for (std::size_t j = 0; j < out.size(); ++j)
                    s += out.data()[j] * grad_out.data()[j];
                return s;
            },
            x.data()[i]);
        CHECK(grad_close(g.data()[i], numeric));
    }
}

TEST_CASE("sigmoid values and saturation") {
    Tensor x({1, 1, 3}, {0.0, 1000.0, std::log(3.0)});
    Tensor out = sigmoid(x);
    CHECK(out.data()[0] == doctest::Approx(0.5));
    CHECK(out.data()[1] == doctest::Approx(1.0));
    CHECK(out.data()[2] == doctest::Approx(0.75));
    CHECK(out.all_finite());
    Tensor neg({1, 1, 1}, {-1000.0});
    CHECK(sigmoid(neg).data()[0] == doctest::Approx(0.0));
}

TEST_CASE("resize_bilinear constant preservation") {
    Tensor t({2, 3, 5}, std::vector<real>(30, 0.42));
    Tensor out = resize_bilinear(t, 7, 11);
    for (real v : out.data()) CHECK(v == doctest::Approx(0.42));
}

TEST_CASE("resize_bilinear to same size is bit-identical") {
    Rng rng(31);
    Tensor t = random_tensor(rng, {3, 6, 9});
    Tensor out = resize_bilinear(t, 6, 9);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(out.data()[i] == t.data()[i]);
}

TEST_CASE("resize_bilinear 2x2 to 2x4 hand-computed row") {
    Tensor t({1, 2, 2}, {0, 1, 0, 1});
    Tensor out = resize_bilinear(t, 2, 4);
    const real expect[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x) CHECK(out.at(0, y, x) == doctest::Approx(expect[x]));
}

namespace {

// independent scalar resize used as an oracle for the sampling convention
real resize_scalar_oracle(const Tensor& t, int c, int oy, int ox, int out_h, int out_w) {
    auto pos = [](int i, int out_n, int in_n) {
        if (out_n == 1) return (in_n - 1) / 2.0;
        return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
    };
    const double sy = pos(oy, out_h, t.height());
    const double sx = pos(ox, out_w, t.width());
    const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
    const int y1 = std::min(y0 + 1, t.height() - 1), x1 = std::min(x0 + 1, t.width() - 1);
    const double fy = sy - y0, fx = sx - x0;
    return t.at(c, y0, x0) * (1 - fy) * (1 - fx) + t.at(c, y0, x1) * (1 - fy) * fx +
           t.at(c, y1, x0) * fy * (1 - fx) + t.at(c, y1, x1) * fy * fx;
}

}  // namespace

TEST_CASE("resize_bilinear matches the independent scalar oracle") {
    Rng rng(37);
    Tensor t = random_tensor(rng, {2, 5, 7});
    for (auto [oh, ow] : {std::pair{9, 3}, {2, 11}, {1, 1}, {5, 7}}) {
        Tensor out = resize_bilinear(t, oh, ow);
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x)
                    CHECK(out.at(c, y, x) ==
                          doctest::Approx(resize_scalar_oracle(t, c, y, x, oh, ow)));
    }
}

TEST_CASE("resize_bilinear never extrapolates the per-channel range") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor t = random_tensor(rng, {2, rng.range(1, 6), rng.range(1, 6)});
        Tensor out = resize_bilinear(t, rng.range(1, 9), rng.range(1, 9));
        for (int c = 0; c < 2; ++c) {
            real lo = 1e9, hi = -1e9;
            const std::size_t n = static_cast<std::size_t>(t.height()) * t.width();
            for (std::size_t i = 0; i < n; ++i) {
                lo = std::min(lo, t.channel_ptr(c)[i]);
                hi = std::max(hi, t.channel_ptr(c)[i]);
            }
            const std::size_t m = static_cast<std::size_t>(out.height()) * out.width();
            for (std::size_t i = 0; i < m; ++i) {
                CHECK(out.channel_ptr(c)[i] >= lo - 1e-12);
                CHECK(out.channel_ptr(c)[i] <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("resize_bilinear backward is the exact adjoint") {
    // <R x, y> == <x, R^T y> for random x, y
    Rng rng(43);
    const int in_h = 5, in_w = 6, out_h = 8, out_w = 3;
    Tensor x = random_tensor(rng, {1, in_h, in_w});
    Tensor y = random_tensor(rng, {1, out_h, out_w});
    Tensor rx = resize_bilinear(x, out_h, out_w);
    Tensor rty = resize_bilinear_backward(y, in_h, in_w);
    real lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) lhs += rx.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * rty.data()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("area_downsample averages ragged edge boxes") {
    Tensor t({1, 3, 5}, {1, 1, 0, 0, 1,
                         1, 1, 0, 0, 1,
                         0, 0, 0, 0, 1});
    Tensor out = area_downsample(t, 2);
    CHECK(out.shape() == Shape{1, 2, 3});
    CHECK(out.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(out.at(0, 0, 1) == doctest::Approx(0.0));
    CHECK(out.at(0, 0, 2) == doctest::Approx(1.0));   // 1-wide edge box
    CHECK(out.at(0, 1, 0) == doctest::Approx(0.0));
    CHECK(out.at(0, 1, 2) == doctest::Approx(1.0));
}

TEST_CASE("concat_channels ordering and singleton") {
    Rng rng(47);
    Tensor a = random_tensor(rng, {2, 3, 4});
    Tensor b = random_tensor(rng, {3, 3, 4});
    Tensor one = concat_channels({a});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(one.data()[i] == a.data()[i]);
    Tensor both = concat_channels({a, b});
    CHECK(both.channels() == 5);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x) CHECK(both.at(c, y, x) == a.at(c, y, x));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x) CHECK(both.at(c + 2, y, x) == b.at(c, y, x));
}

TEST_CASE("concat_channels rejects spatial mismatch") {
    CHECK_THROWS_AS(concat_channels({Tensor({1, 3, 3}), Tensor({1, 4, 3})}),
                    std::invalid_argument);
}

TEST_CASE("split_channels is the identity adjoint of concat") {
    Rng rng(53);
    Tensor a = random_tensor(rng, {2, 4, 4});
    Tensor b = random_tensor(rng, {1, 4, 4});
    Tensor c = random_tensor(rng, {3, 4, 4});
    Tensor joined = concat_channels({a, b, c});
    auto parts = split_channels(joined, {2, 1, 3});
    REQUIRE(parts.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(parts[0].data()[i] == a.data()[i]);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(parts[1].data()[i] == b.data()[i]);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(parts[2].data()[i] == c.data()[i]);
}
