#pragma once

// Encoder-decoder forecaster for sharing-state series.
//
// Encoder: value embedding (conv, kernel 3) + sinusoidal positions, then
// ProbSparse attention layers with a distilling stage (conv, ELU, max-pool
// stride 2) between consecutive layers. Decoder: causal ProbSparse
// self-attention and dense cross-attention onto the encoder map, repeated
// d_layers times, then a linear head. One pass emits all L_y predictions.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "elp/model/eit.hpp"
#include "elp/nn/layers.hpp"
#include "elp/nn/parameters.hpp"
#include "elp/rng.hpp"

namespace elp::model {

inline constexpr std::size_t kFeatureCount = 3;  // target, time, distance
inline constexpr std::size_t kTargetCol = 0;
inline constexpr std::size_t kTimeCol = 1;
inline constexpr std::size_t kDistanceCol = 2;   // the prior-knowledge column

struct EaseformerConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t e_layers = 2;
    std::size_t d_layers = 2;
    std::size_t d_ff = 128;
    std::size_t seq_len = 90;    // L_x
    std::size_t token_len = 30;  // L_token
    std::size_t pred_len = 30;   // L_y
    std::size_t factor = 5;      // c in c * ceil(ln L)
    double temperature = 0.85;
    bool eit_enabled = true;
    bool zero_init_decoder = false;
    double dropout = 0.05;
    double base_lr = 1e-4;
    int epochs = 10;
    std::size_t batch_size = 8;
    int patience = 3;
    std::uint64_t seed = 0;

    void validate() const;

    /// key=value lines, one per field, in a fixed order.
    std::string to_kv() const;
    static EaseformerConfig from_kv(const std::map<std::string, std::string>& kv, EaseformerConfig base);
    static EaseformerConfig from_kv(const std::map<std::string, std::string>& kv) { return from_kv(kv, EaseformerConfig()); }

    /// Full-size architecture: d_model 512, 8 heads.
    static EaseformerConfig full_scale();
};

/// Row-major matrix of model features.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = kFeatureCount;
    std::vector<double> data;

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    FeatureMatrix slice_rows(std::size_t begin, std::size_t end) const;
};

struct ModelInput {
    FeatureMatrix x_en;         // L_x rows
    FeatureMatrix x_de;         // L_token + L_y rows
    std::size_t token_len = 0;  // rows of x_de that carry real history
};

/// Decoder input: the last `token_len` rows of `history`, followed by L_y rows
/// whose non-prior columns are zero and whose prior column holds
/// `prior_per_row` (or zero when `zero_init` is set).
FeatureMatrix build_decoder_input(const FeatureMatrix& history, std::size_t token_len,
                                  std::span<const double> prior_per_row, bool zero_init);

/// Single-distance form: every prediction row gets table[distance_cm].
FeatureMatrix build_decoder_input(const FeatureMatrix& history, std::size_t token_len, double distance_cm,
                                  const DistancePreferenceTable& table, std::size_t pred_len, bool zero_init);

struct ForwardContext {
    bool train = false;
    Rng rng{0};
};

/// Value embedding plus fixed sinusoidal positions; no calendar features.
class DataEmbedding {
public:
    DataEmbedding() = default;
    /// Positions up to `max_len` rows are precomputed.
    DataEmbedding(nn::ParameterStore& store, const std::string& name, std::size_t d_in, std::size_t d_model,
                  Rng& rng, std::size_t max_len = 0);

    nn::Tensor operator()(const nn::Tensor& x) const;
    std::size_t d_model() const { return d_model_; }

private:
    nn::Conv1d value_;
    std::size_t d_model_ = 0;
    std::size_t max_len_ = 0;
    std::vector<double> positions_;
};

std::vector<double> sinusoidal_table(std::size_t length, std::size_t d_model);

enum class AttentionKind { ProbSparse, Dense };

class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(nn::ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
                       AttentionKind kind, bool causal, std::size_t factor, Rng& rng);

    nn::Tensor operator()(const nn::Tensor& queries, const nn::Tensor& keys, ForwardContext& ctx) const;

private:
    nn::Linear wq_, wk_, wv_, wo_;
    std::size_t heads_ = 1;
    AttentionKind kind_ = AttentionKind::ProbSparse;
    bool causal_ = false;
    std::size_t factor_ = 5;
};

/// conv (kernel 3) -> ELU -> max-pool (window 3, stride 2, pad 1): L -> ceil(L/2).
class DistillLayer {
public:
    DistillLayer() = default;
    DistillLayer(nn::ParameterStore& store, const std::string& name, std::size_t d_model, Rng& rng);

    nn::Tensor operator()(const nn::Tensor& x) const;

private:
    nn::Conv1d conv_;
};

class Easeformer {
public:
    explicit Easeformer(const EaseformerConfig& config);

    Easeformer(const Easeformer&) = delete;
    Easeformer& operator=(const Easeformer&) = delete;

    const EaseformerConfig& config() const { return config_; }
    nn::ParameterStore& parameters() { return store_; }
    const nn::ParameterStore& parameters() const { return store_; }

    /// Predicted target column for the last L_y rows of x_de, shape [L_y, 1].
    nn::Tensor forward(const FeatureMatrix& x_en, const FeatureMatrix& x_de, ForwardContext& ctx) const;

    /// Evaluation-mode prediction with a deterministic key sample.
    std::vector<double> predict(const FeatureMatrix& x_en, const FeatureMatrix& x_de) const;

    nn::Tensor encode(const FeatureMatrix& x_en, ForwardContext& ctx) const;

    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

private:
    struct EncoderLayer {
        MultiHeadAttention attention;
        nn::Linear ff1, ff2;
        nn::LayerNorm norm1, norm2;
    };
    struct DecoderLayer {
        MultiHeadAttention self_attention;
        MultiHeadAttention cross_attention;
        nn::Linear ff1, ff2;
        nn::LayerNorm norm1, norm2, norm3;
    };

    nn::Tensor encoder_layer(const EncoderLayer& layer, const nn::Tensor& x, ForwardContext& ctx) const;
    nn::Tensor decoder_layer(const DecoderLayer& layer, const nn::Tensor& x, const nn::Tensor& memory,
                             ForwardContext& ctx) const;

    EaseformerConfig config_;
    nn::ParameterStore store_;
    DataEmbedding enc_embedding_;
    DataEmbedding dec_embedding_;
    std::vector<EncoderLayer> encoder_;
    std::vector<DistillLayer> distill_;
    nn::LayerNorm encoder_norm_;
    std::vector<DecoderLayer> decoder_;
    nn::LayerNorm decoder_norm_;
    nn::Linear head_;
};

}  // namespace elp::model
