#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "elp/error.hpp"
#include "elp/nn/adam.hpp"
#include "elp/nn/layers.hpp"
#include "elp/nn/parameters.hpp"

using namespace elp;
using namespace elp::nn;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    AdamMoments m;
    for (std::uint64_t step = 1; step <= 5; ++step) adam_update(p, g, m, step, {}, 1e-3);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, ConstantGradientDescends) {
    std::vector<double> p{0.0, 0.0};
    const std::vector<double> g{0.5, -2.0};
    AdamMoments m;
    for (std::uint64_t step = 1; step <= 100; ++step) adam_update(p, g, m, step, {}, 1e-2);
    EXPECT_LT(p[0], 0.0);
    EXPECT_GT(p[1], 0.0);
}

TEST(Adam, ScalarStepMatchesReference) {
    // Hand-rolled first step: m = 0.1 g, v = 0.001 g^2, bias-corrected to g and g^2.
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 1e-4, g = 1.0;
    const double m = (1 - b1) * g, v = (1 - b2) * g * g;
    const double m_hat = m / (1 - b1), v_hat = v / (1 - b2);
    const double expected = 1.0 - lr * m_hat / (std::sqrt(v_hat) + eps);

    std::vector<double> p{1.0};
    AdamMoments moments;
    adam_update(p, std::vector<double>{g}, moments, 1, {}, lr);
    EXPECT_NEAR(p[0], expected, 1e-12);
}

TEST(Adam, TwoStepsMatchReference) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 1e-3;
    double ref = 0.5, m = 0.0, v = 0.0;
    std::vector<double> p{0.5};
    AdamMoments moments;
    const double grads[] = {0.3, -1.2};
    for (int t = 1; t <= 2; ++t) {
        const double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        adam_update(p, std::vector<double>{g}, moments, static_cast<std::uint64_t>(t), {}, lr);
    }
    EXPECT_NEAR(p[0], ref, 1e-12);
}

TEST(Adam, StepUsesStoreGradients) {
    ParameterStore store;
    auto w = store.constant("w", {1, 2}, 1.0);
    Adam adam(store, {}, 1e-2);
    sum(mul(w, w)).backward();
    adam.step(store, 1e-2);
    EXPECT_EQ(adam.steps(), 1u);
    EXPECT_LT(w.values()[0], 1.0);
}

TEST(LrSchedule, HalvesEachEpoch) {
    EXPECT_DOUBLE_EQ(lr_schedule(0, 1e-4), 1e-4);
    EXPECT_DOUBLE_EQ(lr_schedule(1, 1e-4), 5e-5);
    EXPECT_DOUBLE_EQ(lr_schedule(3, 1e-4), 1.25e-5);
    EXPECT_THROW(lr_schedule(-1, 1e-4), Error);
}

TEST(ParameterStore, DuplicateNamesRejected) {
    ParameterStore store;
    store.constant("a", {1, 1}, 0.0);
    EXPECT_THROW(store.constant("a", {1, 1}, 0.0), Error);
    EXPECT_THROW(store.get("b"), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
    Rng rng(1);
    ParameterStore a;
    a.uniform("w", {3, 4}, 0.7, rng);
    a.uniform("b", {1, 4}, 1e-300, rng);
    const auto text = checkpoint_to_string(a);

    Rng other(2);
    ParameterStore b;
    b.uniform("w", {3, 4}, 0.7, other);
    b.uniform("b", {1, 4}, 1.0, other);
    checkpoint_from_string(b, text);
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto va = a.parameters()[i].tensor.values();
        const auto vb = b.parameters()[i].tensor.values();
        for (std::size_t k = 0; k < va.size(); ++k) EXPECT_EQ(va[k], vb[k]);
    }

    const auto path = std::filesystem::temp_directory_path() / "elp_ckpt_test.txt";
    save_checkpoint(a, path.string());
    ParameterStore c;
    c.constant("w", {3, 4}, 0.0);
    c.constant("b", {1, 4}, 0.0);
    load_checkpoint(c, path.string());
    EXPECT_EQ(c.get("w").values()[5], a.get("w").values()[5]);
    std::filesystem::remove(path);
}

TEST(Checkpoint, MismatchesRejected) {
    ParameterStore a;
    a.constant("w", {2, 2}, 1.0);
    const auto text = checkpoint_to_string(a);
    ParameterStore wrong_shape;
    wrong_shape.constant("w", {1, 4}, 0.0);
    EXPECT_THROW(checkpoint_from_string(wrong_shape, text), Error);
    ParameterStore missing;
    EXPECT_THROW(checkpoint_from_string(missing, text), Error);
    EXPECT_THROW(checkpoint_from_string(a, "garbage"), Error);
}

TEST(Layers, Shapes) {
    Rng rng(3);
    ParameterStore store;
    Linear lin(store, "lin", 4, 6, rng);
    LayerNorm norm(store, "norm", 6);
    Conv1d conv(store, "conv", 6, 5, 3, rng);
    const auto x = Tensor::zeros({7, 4});
    const auto y = conv(norm(lin(x)));
    EXPECT_EQ(y.shape(), (Shape{7, 5}));
    EXPECT_EQ(store.scalar_count(), 4u * 6 + 6 + 6 + 6 + 3 * 6 * 5 + 5);
}
