#include "dce/net.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "support/fd_check.hpp"

using namespace dce;

namespace {

TEST(DenseLayerTest, ForwardKnownValues) {
    Rng rng(1);
    DenseLayer l(1, 1, rng);
    l.w(0, 0) = 2;
    l.b[0] = 1;
    RMat x(2, 1);
    x(0, 0) = 3;
    x(1, 0) = -4;
    RMat y;
    dense_forward(l, x, y);
    EXPECT_EQ(y(0, 0), real(7));
    EXPECT_EQ(y(1, 0), real(-7));
}

TEST(MlpTest, HandComputedForward) {
    Rng rng(2);
    Mlp net({1, 2, 1}, rng);
    auto& layers = net.layers();
    layers[0].w(0, 0) = 1;
    layers[0].w(1, 0) = -1;
    layers[0].b = {real(0.5), real(-0.5)};
    layers[1].w(0, 0) = 2;
    layers[1].w(0, 1) = 3;
    layers[1].b = {real(1)};
    RMat x(1, 1);
    x(0, 0) = 2;
    // Hidden pre-activations are 2.5 and -2.5; ReLU keeps 2.5 and 0, so the
    // output is 2.5 * 2 + 0 * 3 + 1.
    RMat y = net.forward(x);
    EXPECT_NEAR(static_cast<double>(y(0, 0)), 6.0, 1e-12);
}

TEST(MlpTest, TapeAndPlainForwardAgree) {
    Rng rng(3);
    Mlp net({4, 16, 16, 3}, rng);
    RMat x(5, 4);
    for (real& v : x.a) v = static_cast<real>(rng.uniform(-2.0, 2.0));
    MlpTape tape;
    RMat y1 = net.forward(x, tape);
    RMat y2 = net.forward(x);
    ASSERT_EQ(y1.a.size(), y2.a.size());
    for (std::size_t i = 0; i < y1.a.size(); ++i) EXPECT_EQ(y1.a[i], y2.a[i]);
}

TEST(MlpTest, BackwardMatchesFiniteDifferences) {
    Rng rng(4);
    Mlp net({3, 8, 8, 2}, rng);
    RMat x(4, 3);
    for (real& v : x.a) v = static_cast<real>(rng.uniform(-1.5, 1.5));
    RMat weights(4, 2);
    for (real& v : weights.a) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    auto loss = [&]() {
        RMat y = net.forward(x);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.a.size(); ++i)
            acc += static_cast<double>(weights.a[i]) * static_cast<double>(y.a[i]);
        return acc;
    };
    MlpTape tape;
    net.forward(x, tape);
    MlpGrads grads = net.backward(tape, weights);
    testoracle::FdReport rep = testoracle::fd_check(loss, net.param_views(), grads.views());
    EXPECT_TRUE(rep.ok()) << testoracle::describe(rep);
    EXPECT_EQ(rep.checked, net.param_count());
}

TEST(MlpTest, InputGradientMatchesFiniteDifferences) {
    Rng rng(5);
    Mlp net({3, 10, 2}, rng);
    RMat x(3, 3);
    for (real& v : x.a) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    RMat weights(3, 2);
    for (real& v : weights.a) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    MlpTape tape;
    net.forward(x, tape);
    RMat dx;
    net.backward(tape, weights, &dx);
    double h = 1e-6;
    for (std::size_t i = 0; i < x.a.size(); ++i) {
        real saved = x.a[i];
        x.a[i] = saved + static_cast<real>(h);
        RMat up = net.forward(x);
        x.a[i] = saved - static_cast<real>(h);
        RMat down = net.forward(x);
        x.a[i] = saved;
        double numeric = 0.0;
        for (std::size_t k = 0; k < up.a.size(); ++k)
            numeric += static_cast<double>(weights.a[k]) *
                       (static_cast<double>(up.a[k]) - static_cast<double>(down.a[k]));
        numeric /= 2.0 * h;
        EXPECT_NEAR(static_cast<double>(dx.a[i]), numeric, 1e-5);
    }
}

TEST(MlpTest, ReluFlatRegionHasZeroGradient) {
    Rng rng(6);
    Mlp net({1, 1}, rng, /*relu_output=*/true);
    net.layers()[0].w(0, 0) = 1;
    net.layers()[0].b[0] = -5;  // pre-activation stays negative for small inputs
    RMat x(1, 1);
    x(0, 0) = 1;
    MlpTape tape;
    RMat y = net.forward(x, tape);
    EXPECT_EQ(y(0, 0), real(0));
    RMat upstream(1, 1);
    upstream(0, 0) = 1;
    MlpGrads g = net.backward(tape, upstream);
    EXPECT_EQ(g.layers[0].w(0, 0), real(0));
    EXPECT_EQ(g.layers[0].b[0], real(0));
}

TEST(AdamTest, FirstStepMovesByAlmostExactlyLr) {
    RVec w = {real(0)};
    RVec g = {real(7)};
    AdamConfig cfg;
    AdamState state(1, cfg);
    adam_step(state, {std::span<real>(w)}, {std::span<const real>(g)});
    // Bias correction makes the first update lr * g / (|g| + eps).
    EXPECT_NEAR(static_cast<double>(w[0]), -static_cast<double>(cfg.lr), 1e-7);
    EXPECT_EQ(state.step_count(), 1);
}

TEST(AdamTest, ZeroGradientLeavesParametersUntouched) {
    RVec w = {real(1.25), real(-3)};
    RVec g = {real(0), real(0)};
    AdamState state(2);
    adam_step(state, {std::span<real>(w)}, {std::span<const real>(g)});
    EXPECT_EQ(w[0], real(1.25));
    EXPECT_EQ(w[1], real(-3));
}

TEST(AdamTest, RejectsNonFiniteGradientsWithDiagnostic) {
    RVec w = {real(0)};
    RVec g = {std::numeric_limits<real>::quiet_NaN()};
    AdamState state(1);
    try {
        adam_step(state, {std::span<real>(w)}, {std::span<const real>(g)});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("tensor 0"), std::string::npos);
    }
}

TEST(AdamTest, RejectsShapeMismatch) {
    RVec w = {real(0), real(0)};
    RVec g = {real(1)};
    AdamState state(2);
    EXPECT_THROW(
        adam_step(state, {std::span<real>(w)}, {std::span<const real>(g)}),
        ConfigError);
    AdamState wrong_size(5);
    RVec g2 = {real(1), real(1)};
    EXPECT_THROW(
        adam_step(wrong_size, {std::span<real>(w)}, {std::span<const real>(g2)}),
        ConfigError);
}

TEST(AdamTest, ConvergesOnQuadraticBowl) {
    RVec w = {real(-4)};
    AdamConfig cfg;
    cfg.lr = real(0.05);
    AdamState state(1, cfg);
    for (int i = 0; i < 2000; ++i) {
        RVec g = {real(2) * (w[0] - real(3))};
        adam_step(state, {std::span<real>(w)}, {std::span<const real>(g)});
    }
    EXPECT_NEAR(static_cast<double>(w[0]), 3.0, 1e-3);
}

TEST(AdamTest, DeterministicAcrossIdenticalRuns) {
    auto run = [] {
        Rng rng(42);
        Mlp net({2, 8, 1}, rng);
        AdamState state(net.param_count());
        RMat x(4, 2);
        Rng data_rng(43);
        for (real& v : x.a) v = static_cast<real>(data_rng.uniform(-1.0, 1.0));
        RMat upstream(4, 1, real(0.5));
        for (int i = 0; i < 50; ++i) {
            MlpTape tape;
            net.forward(x, tape);
            MlpGrads g = net.backward(tape, upstream);
            adam_step(state, net.param_views(), g.views());
        }
        return net;
    };
    Mlp a = run();
    Mlp b = run();
    auto va = a.param_views();
    auto vb = b.param_views();
    ASSERT_EQ(va.size(), vb.size());
    for (std::size_t t = 0; t < va.size(); ++t)
        for (std::size_t i = 0; i < va[t].size(); ++i) EXPECT_EQ(va[t][i], vb[t][i]);
}

TEST(SoftUpdateTest, BlendsTowardOnlineWeights) {
    RVec target = {real(1), real(0)};
    RVec online = {real(0), real(2)};
    soft_update({std::span<real>(target)}, {std::span<const real>(online)}, real(0.005));
    EXPECT_NEAR(static_cast<double>(target[0]), 0.995, 1e-12);
    EXPECT_NEAR(static_cast<double>(target[1]), 0.01, 1e-12);
    soft_update({std::span<real>(target)}, {std::span<const real>(online)}, real(1));
    EXPECT_EQ(target[0], real(0));
    EXPECT_EQ(target[1], real(2));
}

TEST(SoftUpdateTest, IsAContractionTowardTheOnlineNet) {
    Rng rng(9);
    RVec target(32), online(32);
    for (real& v : target) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    for (real& v : online) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    double before = 0.0;
    for (std::size_t i = 0; i < 32; ++i)
        before = std::max(before, std::abs(static_cast<double>(target[i] - online[i])));
    soft_update({std::span<real>(target)}, {std::span<const real>(online)}, real(0.1));
    double after = 0.0;
    for (std::size_t i = 0; i < 32; ++i)
        after = std::max(after, std::abs(static_cast<double>(target[i] - online[i])));
    EXPECT_LE(after, 0.9 * before + 1e-12);
}

TEST(SoftUpdateTest, RejectsMismatchedShapesAndBadRate) {
    RVec target = {real(1)};
    RVec online = {real(1), real(2)};
    EXPECT_THROW(
        soft_update({std::span<real>(target)}, {std::span<const real>(online)}, real(0.5)),
        ConfigError);
    RVec online1 = {real(1)};
    EXPECT_THROW(
        soft_update({std::span<real>(target)}, {std::span<const real>(online1)}, real(0)),
        ConfigError);
}

TEST(MlpTest, ParamViewsCoverEveryParameter) {
    Rng rng(10);
    Mlp net({3, 7, 5, 2}, rng);
    std::size_t total = 0;
    for (auto s : net.param_views()) total += s.size();
    EXPECT_EQ(total, net.param_count());
    EXPECT_EQ(total, std::size_t(3 * 7 + 7 + 7 * 5 + 5 + 5 * 2 + 2));
}

}  // namespace
