#include "elp/model/easeformer.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "elp/error.hpp"
#include "elp/model/attention.hpp"
#include "elp/nn/ops.hpp"

namespace elp::model {

using nn::Tensor;

void EaseformerConfig::validate() const {
    auto bad = [](const std::string& msg) { throw Error(ErrorKind::InvalidParam, "easeformer config: " + msg); };
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) bad("d_model must be a positive multiple of n_heads");
    if (e_layers == 0 || d_layers == 0) bad("layer counts must be positive");
    if (d_ff == 0) bad("d_ff must be positive");
    if (seq_len == 0 || pred_len == 0) bad("seq_len and pred_len must be positive");
    if (token_len > seq_len) bad("token_len must not exceed seq_len");
    if (factor == 0) bad("factor must be positive");
    if (!(temperature > 0.0)) bad("temperature must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) bad("dropout must lie in [0, 1)");
    if (!(base_lr > 0.0)) bad("base_lr must be > 0");
    if (epochs <= 0) bad("epochs must be positive");
    if (batch_size == 0) bad("batch_size must be positive");
    if (patience <= 0) bad("patience must be positive");
}

std::string EaseformerConfig::to_kv() const {
    std::string out;
    auto put = [&](const char* key, const std::string& v) { out += std::string(key) + "=" + v + "\n"; };
    auto real = [](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    put("d_model", std::to_string(d_model));
    put("n_heads", std::to_string(n_heads));
    put("e_layers", std::to_string(e_layers));
    put("d_layers", std::to_string(d_layers));
    put("d_ff", std::to_string(d_ff));
    put("seq_len", std::to_string(seq_len));
    put("token_len", std::to_string(token_len));
    put("pred_len", std::to_string(pred_len));
    put("factor", std::to_string(factor));
    put("temperature", real(temperature));
    put("eit_enabled", eit_enabled ? "1" : "0");
    put("zero_init_decoder", zero_init_decoder ? "1" : "0");
    put("dropout", real(dropout));
    put("base_lr", real(base_lr));
    put("epochs", std::to_string(epochs));
    put("batch_size", std::to_string(batch_size));
    put("patience", std::to_string(patience));
    put("seed", std::to_string(seed));
    return out;
}

EaseformerConfig EaseformerConfig::from_kv(const std::map<std::string, std::string>& kv, EaseformerConfig c) {
    auto num = [&](const char* key, auto& field) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        const std::string& v = it->second;
        auto fail = [&] { throw Error(ErrorKind::ParseError, std::string("easeformer config: bad value for ") + key); };
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, bool>) {
            if (v == "1" || v == "true" || v == "on") {
                field = true;
            } else if (v == "0" || v == "false" || v == "off") {
                field = false;
            } else {
                fail();
            }
        } else {
            try {
                std::size_t used = 0;
                if constexpr (std::is_same_v<T, double>) {
                    field = std::stod(v, &used);
                } else if constexpr (std::is_same_v<T, int>) {
                    field = std::stoi(v, &used);
                } else {
                    if (v.empty() || v[0] == '-') fail();
                    field = static_cast<T>(std::stoull(v, &used));
                }
                if (used != v.size()) fail();
            } catch (const std::logic_error&) {
                fail();
            }
        }
    };
    num("d_model", c.d_model);
    num("n_heads", c.n_heads);
    num("e_layers", c.e_layers);
    num("d_layers", c.d_layers);
    num("d_ff", c.d_ff);
    num("seq_len", c.seq_len);
    num("token_len", c.token_len);
    num("pred_len", c.pred_len);
    num("factor", c.factor);
    num("temperature", c.temperature);
    num("eit_enabled", c.eit_enabled);
    num("zero_init_decoder", c.zero_init_decoder);
    num("dropout", c.dropout);
    num("base_lr", c.base_lr);
    num("epochs", c.epochs);
    num("batch_size", c.batch_size);
    num("patience", c.patience);
    num("seed", c.seed);
    return c;
}

EaseformerConfig EaseformerConfig::full_scale() {
    EaseformerConfig c;
    c.d_model = 512;
    c.n_heads = 8;
    c.d_ff = 2048;
    return c;
}

FeatureMatrix FeatureMatrix::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows) throw Error(ErrorKind::ShapeError, "feature slice out of range");
    FeatureMatrix out;
    out.rows = end - begin;
    out.cols = cols;
    out.data.assign(data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                    data.begin() + static_cast<std::ptrdiff_t>(end * cols));
    return out;
}

FeatureMatrix build_decoder_input(const FeatureMatrix& history, std::size_t token_len,
                                  std::span<const double> prior_per_row, bool zero_init) {
    if (history.cols != kFeatureCount) throw Error(ErrorKind::ShapeError, "decoder input: wrong feature count");
    if (history.rows < token_len) {
        throw Error(ErrorKind::InsufficientHistory, "decoder input: need " + std::to_string(token_len) +
                                                        " history rows, have " + std::to_string(history.rows));
    }
    FeatureMatrix out = history.slice_rows(history.rows - token_len, history.rows);
    out.rows = token_len + prior_per_row.size();
    out.data.resize(out.rows * out.cols, 0.0);
    if (!zero_init) {
        for (std::size_t i = 0; i < prior_per_row.size(); ++i) out.at(token_len + i, kDistanceCol) = prior_per_row[i];
    }
    return out;
}

FeatureMatrix build_decoder_input(const FeatureMatrix& history, std::size_t token_len, double distance_cm,
                                  const DistancePreferenceTable& table, std::size_t pred_len, bool zero_init) {
    const std::vector<double> prior(pred_len, table.lookup(distance_cm));
    return build_decoder_input(history, token_len, prior, zero_init);
}

std::vector<double> sinusoidal_table(std::size_t length, std::size_t d_model) {
    std::vector<double> pe(length * d_model);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d_model; i += 2) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(d_model));
            pe[pos * d_model + i] = std::sin(static_cast<double>(pos) * freq);
            if (i + 1 < d_model) pe[pos * d_model + i + 1] = std::cos(static_cast<double>(pos) * freq);
        }
    }
    return pe;
}

DataEmbedding::DataEmbedding(nn::ParameterStore& store, const std::string& name, std::size_t d_in,
                             std::size_t d_model, Rng& rng, std::size_t max_len)
    : value_(store, name + ".value", d_in, d_model, 3, rng),
      d_model_(d_model),
      max_len_(max_len),
      positions_(sinusoidal_table(max_len, d_model)) {}

Tensor DataEmbedding::operator()(const Tensor& x) const {
    const std::size_t n = x.rows() * d_model_;
    const Tensor pos = x.rows() <= max_len_
                           ? Tensor::from({x.rows(), d_model_}, std::vector<double>(positions_.begin(), positions_.begin() + static_cast<std::ptrdiff_t>(n)))
                           : Tensor::from({x.rows(), d_model_}, sinusoidal_table(x.rows(), d_model_));
    return nn::add(value_(x), pos);
}

MultiHeadAttention::MultiHeadAttention(nn::ParameterStore& store, const std::string& name, std::size_t d_model,
                                       std::size_t heads, AttentionKind kind, bool causal, std::size_t factor,
                                       Rng& rng)
    : wq_(store, name + ".q", d_model, d_model, rng),
      wk_(store, name + ".k", d_model, d_model, rng),
      wv_(store, name + ".v", d_model, d_model, rng),
      wo_(store, name + ".out", d_model, d_model, rng),
      heads_(heads),
      kind_(kind),
      causal_(causal),
      factor_(factor) {}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys, ForwardContext& ctx) const {
    const Tensor q = wq_(queries);
    const Tensor k = wk_(keys);
    const Tensor v = wv_(keys);
    const std::size_t width = q.cols() / heads_;
    std::vector<Tensor> outs;
    outs.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
        const Tensor qh = nn::slice_cols(q, h * width, (h + 1) * width);
        const Tensor kh = nn::slice_cols(k, h * width, (h + 1) * width);
        const Tensor vh = nn::slice_cols(v, h * width, (h + 1) * width);
        if (kind_ == AttentionKind::Dense) {
            outs.push_back(dense_attention(qh, kh, vh, causal_));
        } else {
            outs.push_back(probsparse_attention(qh, kh, vh, top_u(factor_, qh.rows()), factor_, ctx.rng, causal_));
        }
    }
    return wo_(heads_ == 1 ? outs.front() : nn::concat_cols(outs));
}

DistillLayer::DistillLayer(nn::ParameterStore& store, const std::string& name, std::size_t d_model, Rng& rng)
    : conv_(store, name + ".conv", d_model, d_model, 3, rng) {}

Tensor DistillLayer::operator()(const Tensor& x) const { return nn::maxpool1d(nn::elu(conv_(x)), 3, 2, 1); }

Easeformer::Easeformer(const EaseformerConfig& config) : config_(config) {
    config_.validate();
    Rng rng = Rng(config_.seed).derive(1);
    const std::size_t d = config_.d_model;
    enc_embedding_ = DataEmbedding(store_, "enc_embedding", kFeatureCount, d, rng, config_.seq_len);
    dec_embedding_ = DataEmbedding(store_, "dec_embedding", kFeatureCount, d, rng, config_.token_len + config_.pred_len);
    for (std::size_t i = 0; i < config_.e_layers; ++i) {
        const std::string p = "encoder." + std::to_string(i);
        EncoderLayer layer;
        layer.attention = MultiHeadAttention(store_, p + ".attention", d, config_.n_heads, AttentionKind::ProbSparse,
                                             false, config_.factor, rng);
        layer.ff1 = nn::Linear(store_, p + ".ff1", d, config_.d_ff, rng);
        layer.ff2 = nn::Linear(store_, p + ".ff2", config_.d_ff, d, rng);
        layer.norm1 = nn::LayerNorm(store_, p + ".norm1", d);
        layer.norm2 = nn::LayerNorm(store_, p + ".norm2", d);
        encoder_.push_back(std::move(layer));
        if (i + 1 < config_.e_layers) distill_.emplace_back(store_, "distill." + std::to_string(i), d, rng);
    }
    encoder_norm_ = nn::LayerNorm(store_, "encoder.norm", d);
    for (std::size_t i = 0; i < config_.d_layers; ++i) {
        const std::string p = "decoder." + std::to_string(i);
        DecoderLayer layer;
        layer.self_attention = MultiHeadAttention(store_, p + ".self_attention", d, config_.n_heads,
                                                  AttentionKind::ProbSparse, true, config_.factor, rng);
        layer.cross_attention = MultiHeadAttention(store_, p + ".cross_attention", d, config_.n_heads,
                                                   AttentionKind::Dense, false, config_.factor, rng);
        layer.ff1 = nn::Linear(store_, p + ".ff1", d, config_.d_ff, rng);
        layer.ff2 = nn::Linear(store_, p + ".ff2", config_.d_ff, d, rng);
        layer.norm1 = nn::LayerNorm(store_, p + ".norm1", d);
        layer.norm2 = nn::LayerNorm(store_, p + ".norm2", d);
        layer.norm3 = nn::LayerNorm(store_, p + ".norm3", d);
        decoder_.push_back(std::move(layer));
    }
    decoder_norm_ = nn::LayerNorm(store_, "decoder.norm", d);
    head_ = nn::Linear(store_, "head", d, 1, rng);
}

Tensor Easeformer::encoder_layer(const EncoderLayer& layer, const Tensor& x, ForwardContext& ctx) const {
    const double p = config_.dropout;
    Tensor h = layer.norm1(nn::add(x, nn::dropout(layer.attention(x, x, ctx), p, ctx.rng, ctx.train)));
    Tensor y = layer.ff2(nn::dropout(nn::elu(layer.ff1(h)), p, ctx.rng, ctx.train));
    return layer.norm2(nn::add(h, nn::dropout(y, p, ctx.rng, ctx.train)));
}

Tensor Easeformer::decoder_layer(const DecoderLayer& layer, const Tensor& x, const Tensor& memory,
                                 ForwardContext& ctx) const {
    const double p = config_.dropout;
    Tensor h = layer.norm1(nn::add(x, nn::dropout(layer.self_attention(x, x, ctx), p, ctx.rng, ctx.train)));
    h = layer.norm2(nn::add(h, nn::dropout(layer.cross_attention(h, memory, ctx), p, ctx.rng, ctx.train)));
    Tensor y = layer.ff2(nn::dropout(nn::elu(layer.ff1(h)), p, ctx.rng, ctx.train));
    return layer.norm3(nn::add(h, nn::dropout(y, p, ctx.rng, ctx.train)));
}

namespace {
Tensor as_tensor(const FeatureMatrix& m) { return Tensor::from({m.rows, m.cols}, m.data); }
}  // namespace

Tensor Easeformer::encode(const FeatureMatrix& x_en, ForwardContext& ctx) const {
    if (x_en.cols != kFeatureCount || x_en.rows == 0) throw Error(ErrorKind::ShapeError, "encoder input shape");
    Tensor x = nn::dropout(enc_embedding_(as_tensor(x_en)), config_.dropout, ctx.rng, ctx.train);
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        x = encoder_layer(encoder_[i], x, ctx);
        if (i < distill_.size()) x = distill_[i](x);
    }
    return encoder_norm_(x);
}

Tensor Easeformer::forward(const FeatureMatrix& x_en, const FeatureMatrix& x_de, ForwardContext& ctx) const {
    if (x_de.cols != kFeatureCount || x_de.rows < config_.pred_len) {
        throw Error(ErrorKind::ShapeError, "decoder input must have at least pred_len rows");
    }
    const Tensor memory = encode(x_en, ctx);
    Tensor y = nn::dropout(dec_embedding_(as_tensor(x_de)), config_.dropout, ctx.rng, ctx.train);
    for (const auto& layer : decoder_) y = decoder_layer(layer, y, memory, ctx);
    y = head_(decoder_norm_(y));
    return nn::slice_rows(y, y.rows() - config_.pred_len, y.rows());
}

std::vector<double> Easeformer::predict(const FeatureMatrix& x_en, const FeatureMatrix& x_de) const {
    const nn::NoGradGuard no_grad;
    ForwardContext ctx{false, Rng(config_.seed).derive(7)};
    const Tensor out = forward(x_en, x_de, ctx);
    return {out.values().begin(), out.values().end()};
}

std::vector<std::vector<double>> Easeformer::snapshot() const {
    std::vector<std::vector<double>> out;
    for (const auto& p : store_.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    return out;
}

void Easeformer::restore(const std::vector<std::vector<double>>& values) {
    auto& params = store_.parameters();
    if (values.size() != params.size()) throw Error(ErrorKind::ShapeError, "restore: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].tensor.mutable_values();
        if (dst.size() != values[i].size()) throw Error(ErrorKind::ShapeError, "restore: size mismatch");
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

}  // namespace elp::model
