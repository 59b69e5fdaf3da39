#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pkt/core/array.hpp"
#include "pkt/core/digest.hpp"
#include "pkt/core/graph.hpp"
#include "pkt/lm/tokenizer.hpp"

namespace pkt::lm {

struct BackboneConfig {
    std::uint32_t vocab_size = 256;
    std::uint32_t d_model = 64;
    std::uint32_t n_layers = 4;
    std::uint32_t n_heads = 4;
    std::uint32_t d_ffn = 256;
    std::uint32_t max_context = 128;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    std::uint32_t head_dim() const { return d_model / n_heads; }
    bool operator==(const BackboneConfig&) const = default;
};

struct LayerWeights {
    Array ln1_g, ln1_b;
    Array w_qkv, b_qkv;  // [d, 3d], [3d]
    Array w_o, b_o;      // [d, d], [d]
    Array ln2_g, ln2_b;
    Array w_fc, b_fc;      // [d, ffn], [ffn]
    Array w_proj, b_proj;  // [ffn, d], [d]
};

/// Frozen transformer weights plus the tokenizer they were trained with.
///
/// Weight order (also the checkpoint order): tok_emb [V,d], pos_emb [C,d],
/// then per layer ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc,
/// b_fc, w_proj, b_proj, then lnf_g, lnf_b. The output head is tied to tok_emb.
class BackboneModel {
   public:
    BackboneModel() = default;
    BackboneModel(BackboneConfig config, Tokenizer tokenizer);

    /// GPT-2 style initialisation: N(0, 0.02) weights, residual projections
    /// scaled by 1/sqrt(2 n_layers), zero biases, unit layer-norm gains.
    static BackboneModel initialize(const BackboneConfig& config, Tokenizer tokenizer, std::uint64_t seed);

    const BackboneConfig& config() const { return config_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

    std::vector<NamedArray> parameters();
    std::vector<const Array*> parameters() const;
    std::size_t parameter_count() const;

    /// SHA-256 over config fields, weights (f64 LE, fixed order) and vocabulary JSON.
    Digest digest() const;
    bool weights_bit_equal(const BackboneModel& other) const;

    Array tok_emb, pos_emb;
    std::vector<LayerWeights> layers;
    Array lnf_g, lnf_b;

   private:
    BackboneConfig config_;
    Tokenizer tokenizer_;
};

/// Deployed prefix: per-layer key/value activations, ordered
/// [layer][key, value][position][dim]. This is the stored per-persona artifact.
struct DeployedPrefix {
    std::uint32_t n_layers = 0;
    std::uint32_t length = 0;
    std::uint32_t d_model = 0;
    Digest backbone_digest{};
    std::vector<double> activations;

    std::size_t count() const { return activations.size(); }
    /// Rows of layer `layer`'s keys (kv = 0) or values (kv = 1) as an [L, d] array.
    Array block(std::uint32_t layer, int kv) const;
    bool bit_equal(const DeployedPrefix& other) const;
};

/// Trainable prefix in reparametrized form: P = MLP(P') with one tanh hidden
/// layer. Only `deploy()`'s output is kept after training.
struct PrefixParams {
    std::uint32_t n_layers = 0;
    std::uint32_t length = 0;
    std::uint32_t d_model = 0;
    std::uint32_t hidden = 0;
    Digest backbone_digest{};

    Array embedding;  // [L, d]
    Array w_in;       // [d, hidden]
    Array b_in;       // [hidden]
    Array w_out;      // [hidden, 2 n_layers d]
    Array b_out;      // [2 n_layers d]

    /// N(0, std) for the embedding and MLP weights, zero biases.
    static PrefixParams random(const BackboneConfig& cfg, std::uint32_t length, std::uint32_t hidden,
                               std::uint64_t seed, double std = 0.02);

    std::vector<NamedArray> tensors();
    std::vector<const Array*> tensors() const;
    std::size_t trainable_count() const;
    DeployedPrefix deploy() const;
    bool bit_equal(const PrefixParams& other) const;
};

/// Graph leaves for the backbone weights.
struct BoundBackbone {
    struct Layer {
        Var ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
    };
    Var tok_emb, pos_emb;
    std::vector<Layer> layers;
    Var lnf_g, lnf_b;
    std::vector<Var> all;  // same order as BackboneModel::parameters()
};

/// Per-layer [L, d] key and value nodes prepended to every attention block.
struct PrefixKV {
    std::vector<Var> keys, values;
    std::uint32_t length = 0;
};

struct BoundPrefix {
    PrefixKV kv;
    std::vector<Var> params;  // same order as PrefixParams::tensors()
};

BoundBackbone bind_backbone(Graph& g, const BackboneModel& model, bool trainable);
BoundPrefix bind_prefix(Graph& g, const PrefixParams& prefix, bool trainable);
/// Prefix key/value nodes from caller-bound leaves in PrefixParams::tensors()
/// order; `prefix` supplies the shape only.
PrefixKV prefix_kv(Graph& g, const PrefixParams& prefix, std::span<const Var> params);
PrefixKV bind_deployed(Graph& g, const DeployedPrefix& prefix);

/// Logits [T, V] for every input position. A prefix of length 0 is treated as
/// no prefix. Throws ShapeError when T + L exceeds max_context.
Var forward_logits(Graph& g, const BackboneModel& model, const BoundBackbone& w, std::span<const int> ids,
                   const PrefixKV* prefix);

/// Softmax of forward_logits, without gradient recording.
Array next_token_distributions(const BackboneModel& model, const DeployedPrefix* prefix, std::span<const int> ids);

}  // namespace pkt::lm
