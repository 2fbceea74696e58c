#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "elp/error.hpp"
#include "elp/model/easeformer.hpp"
#include "elp/model/training.hpp"
#include "elp/nn/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/model_gradcheck.hpp"

using namespace elp;
using namespace elp::model;

namespace {

using check::random_features;
using check::tiny_config;

// Toy sessions: noisy ramps whose slope depends on a distance-like feature.
std::vector<Sample> toy_samples(const EaseformerConfig& c, std::size_t sessions, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sample> out;
    for (std::size_t s = 0; s < sessions; ++s) {
        const double dist = 0.2 * static_cast<double>(s % 3);
        const std::size_t total = c.seq_len + c.pred_len;
        FeatureMatrix all;
        all.rows = total;
        all.data.resize(total * kFeatureCount);
        for (std::size_t t = 0; t < total; ++t) {
            const double x = static_cast<double>(t) / static_cast<double>(total) - 0.5;
            all.at(t, kTargetCol) = (1.0 + dist) * x + rng.normal(0.0, 0.02);
            all.at(t, kTimeCol) = x;
            all.at(t, kDistanceCol) = dist;
        }
        Sample smp;
        smp.x_en = all.slice_rows(0, c.seq_len);
        const std::vector<double> prior(c.pred_len, dist);
        smp.x_de = build_decoder_input(smp.x_en, c.token_len, prior, false);
        for (std::size_t t = c.seq_len; t < total; ++t) smp.target.push_back(all.at(t, kTargetCol));
        out.push_back(std::move(smp));
    }
    return out;
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
    const EaseformerConfig c;
    EXPECT_DOUBLE_EQ(c.base_lr, 1e-4);
    EXPECT_EQ(c.epochs, 10);
    EXPECT_EQ(c.batch_size, 8u);
    EXPECT_EQ(c.d_model, 64u);
    EXPECT_EQ(c.n_heads, 4u);
    EXPECT_DOUBLE_EQ(c.temperature, 0.85);
    EXPECT_EQ(EaseformerConfig::full_scale().d_model, 512u);
    EXPECT_EQ(EaseformerConfig::full_scale().n_heads, 8u);

    auto bad = c;
    bad.n_heads = 5;
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.token_len = c.seq_len + 1;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Config, KeyValueRoundTrip) {
    EaseformerConfig c = tiny_config();
    c.temperature = 0.123456789012345;
    c.eit_enabled = false;
    c.seed = 77;
    std::map<std::string, std::string> kv;
    std::istringstream in(c.to_kv());
    std::string line;
    while (std::getline(in, line)) kv[line.substr(0, line.find('='))] = line.substr(line.find('=') + 1);
    const auto back = EaseformerConfig::from_kv(kv);
    EXPECT_EQ(back.to_kv(), c.to_kv());
    EXPECT_EQ(back.temperature, c.temperature);
}

TEST(DecoderInput, TokenAndPredictionBlocks) {
    Rng rng(1);
    const auto hist = random_features(rng, 90);
    const auto table = eit_transform(std::vector<double>{1.0, 1.5, 2.0}, 0.85);
    const auto x_de = build_decoder_input(hist, 60, 1.5, table, 30, false);
    ASSERT_EQ(x_de.rows, 90u);
    for (std::size_t r = 0; r < 60; ++r) {
        for (std::size_t c = 0; c < kFeatureCount; ++c) EXPECT_EQ(x_de.at(r, c), hist.at(30 + r, c));
    }
    for (std::size_t r = 60; r < 90; ++r) {
        EXPECT_EQ(x_de.at(r, kTargetCol), 0.0);
        EXPECT_EQ(x_de.at(r, kTimeCol), 0.0);
        EXPECT_EQ(x_de.at(r, kDistanceCol), table.lookup(1.5));
    }
}

TEST(DecoderInput, ZeroInitClearsPrior) {
    Rng rng(2);
    const auto hist = random_features(rng, 10);
    const auto table = eit_transform(std::vector<double>{1.0, 2.0}, 0.85);
    const auto x_de = build_decoder_input(hist, 5, 2.0, table, 4, true);
    for (std::size_t r = 5; r < 9; ++r) {
        for (std::size_t c = 0; c < kFeatureCount; ++c) EXPECT_EQ(x_de.at(r, c), 0.0);
    }
}

TEST(DecoderInput, EmptyTokenWindow) {
    Rng rng(3);
    const auto hist = random_features(rng, 10);
    const std::vector<double> prior{0.1, 0.2, 0.3};
    const auto x_de = build_decoder_input(hist, 0, prior, false);
    ASSERT_EQ(x_de.rows, 3u);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(x_de.at(r, kDistanceCol), prior[r]);
    try {
        build_decoder_input(hist, 11, prior, false);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientHistory);
    }
}

TEST(Embedding, ShapeAndZeroInput) {
    Rng rng(4);
    nn::ParameterStore store;
    DataEmbedding emb(store, "emb", kFeatureCount, 8, rng, 10);
    const auto table = sinusoidal_table(12, 8);
    const auto& bias = store.get("emb.value.bias");
    for (std::size_t len : {1u, 7u, 10u, 12u}) {
        const auto y = emb(nn::Tensor::zeros({len, kFeatureCount}));
        ASSERT_EQ(y.shape(), (nn::Shape{len, 8}));
        for (std::size_t r = 0; r < len; ++r) {
            for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(r, c), table[r * 8 + c] + bias.values()[c], 1e-15);
        }
    }
}

TEST(Distill, HalvesLength) {
    Rng rng(6);
    nn::ParameterStore store;
    DistillLayer distill(store, "d", 4, rng);
    for (std::size_t len : {1u, 2u, 15u, 30u, 45u, 90u}) {
        EXPECT_EQ(distill(nn::Tensor::zeros({len, 4})).rows(), (len + 1) / 2);
    }
}

TEST(Distill, ConstantInputStaysConstantAwayFromEdges) {
    Rng rng(7);
    nn::ParameterStore store;
    DistillLayer distill(store, "d", 3, rng);
    const auto y = distill(nn::Tensor::from({30, 3}, std::vector<double>(90, 0.7)));
    ASSERT_EQ(y.rows(), 15u);
    // Interior rows see identical padded-free windows.
    for (std::size_t r = 2; r < 14; ++r) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y.at(r, c), y.at(1, c), 1e-12);
    }
}

TEST(Easeformer, OutputLengthForEveryTokenLength) {
    Rng rng(9);
    for (std::size_t token : {0u, 5u, 12u}) {
        auto c = tiny_config();
        c.token_len = token;
        c.pred_len = 6;
        Easeformer model(c);
        const auto x_en = random_features(rng, c.seq_len);
        const auto x_de = build_decoder_input(x_en, token, std::vector<double>(6, 0.3), false);
        EXPECT_EQ(model.predict(x_en, x_de).size(), 6u);
    }
}

TEST(Easeformer, InformerAndEitModesShareWeightShapes) {
    auto a = tiny_config();
    a.eit_enabled = false;
    a.zero_init_decoder = true;
    auto b = tiny_config();
    b.eit_enabled = true;
    b.zero_init_decoder = false;
    Easeformer ma(a), mb(b);
    const auto& pa = ma.parameters().parameters();
    const auto& pb = mb.parameters().parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i].name, pb[i].name);
        EXPECT_EQ(pa[i].tensor.shape(), pb[i].tensor.shape());
    }
}

TEST(Easeformer, DeterministicForwardAndBackward) {
    Rng rng(10);
    auto c = tiny_config();
    c.seq_len = 40;  // long enough for sparse query selection
    c.token_len = 10;
    c.pred_len = 10;
    c.dropout = 0.1;
    const auto x_en = random_features(rng, c.seq_len);
    const auto x_de = build_decoder_input(x_en, c.token_len, std::vector<double>(10, 0.5), false);
    const auto target = nn::Tensor::from({10, 1}, std::vector<double>(10, 0.25));

    auto run = [&] {
        Easeformer model(c);
        ForwardContext ctx{true, Rng(3)};
        const auto loss = nn::mse_loss(model.forward(x_en, x_de, ctx), target);
        loss.backward();
        std::vector<double> out{loss.item()};
        for (const auto& p : model.parameters().parameters()) {
            const auto g = p.tensor.grad();
            out.insert(out.end(), g.begin(), g.end());
        }
        return out;
    };
    const auto r1 = run(), r2 = run();
    for (std::size_t i = 0; i < r1.size(); ++i) if (r1[i] != r2[i]) { ADD_FAILURE() << i << " " << r1[i] << " " << r2[i]; break; }

    Easeformer model(c);
    EXPECT_EQ(model.predict(x_en, x_de), model.predict(x_en, x_de));
}

TEST(Easeformer, EndToEndGradientOnSampledWeights) {
    EXPECT_LT(check::sampled_weight_grad_error(check::tiny_config(), 11), 1e-3);
}

TEST(Training, LossDecreasesOnToySessions) {
    auto c = tiny_config();
    c.base_lr = 3e-3;
    c.epochs = 8;
    c.batch_size = 4;
    c.patience = 8;
    const auto samples = toy_samples(c, 5, 13);
    Easeformer model(c);
    const double before = evaluate_mse(model, samples);
    const auto history = train(model, samples, {});
    EXPECT_LT(evaluate_mse(model, samples), before);
    EXPECT_EQ(history.learning_rate.front(), c.base_lr);
    EXPECT_DOUBLE_EQ(history.learning_rate[1], c.base_lr / 2);
}

TEST(Training, SameSeedSameHistory) {
    auto c = tiny_config();
    c.epochs = 3;
    c.dropout = 0.05;
    const auto samples = toy_samples(c, 6, 14);
    Easeformer a(c), b(c);
    const auto ha = train(a, samples, samples);
    const auto hb = train(b, samples, samples);
    EXPECT_EQ(ha.train_loss, hb.train_loss);
    EXPECT_EQ(ha.val_loss, hb.val_loss);
}

TEST(Training, OverfitsOneBatch) {
    auto c = tiny_config();
    c.d_model = 32;
    c.n_heads = 4;
    c.d_ff = 64;
    const auto batch = toy_samples(c, 8, 15);
    Easeformer model(c);
    nn::Adam adam(model.parameters(), {}, 1e-3);
    Rng rng(16);
    for (int step = 0; step < 200; ++step) train_batch(model, adam, batch, 1e-3, rng);
    EXPECT_LT(evaluate_mse(model, batch), 1e-2);
}

TEST(Training, RestoresBestWeights) {
    auto c = tiny_config();
    c.epochs = 4;
    const auto samples = toy_samples(c, 4, 17);
    Easeformer model(c);
    const auto h = train(model, samples, samples);
    EXPECT_DOUBLE_EQ(evaluate_mse(model, samples), h.best_val);
}
