#include "pkt/lm/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "pkt/core/binary_io.hpp"
#include "pkt/core/errors.hpp"
#include "pkt/core/random.hpp"

namespace pkt::lm {

void BackboneConfig::validate() const {
    auto positive = [](std::uint32_t v, const char* name) {
        if (v == 0) throw std::invalid_argument(std::string("backbone config: ") + name + " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(d_model, "d_model");
    positive(n_layers, "n_layers");
    positive(n_heads, "n_heads");
    positive(d_ffn, "d_ffn");
    positive(max_context, "max_context");
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("backbone config: d_model " + std::to_string(d_model) +
                                    " is not divisible by n_heads " + std::to_string(n_heads));
    }
}

BackboneModel::BackboneModel(BackboneConfig config, Tokenizer tokenizer)
    : config_(config), tokenizer_(std::move(tokenizer)) {
    config_.validate();
    if (tokenizer_.size() != config_.vocab_size) {
        throw std::invalid_argument("backbone: tokenizer has " + std::to_string(tokenizer_.size()) +
                                    " entries but vocab_size is " + std::to_string(config_.vocab_size));
    }
    const std::size_t d = config_.d_model, f = config_.d_ffn;
    tok_emb = Array({config_.vocab_size, d});
    pos_emb = Array({config_.max_context, d});
    layers.resize(config_.n_layers);
    for (auto& l : layers) {
        l.ln1_g = Array({d}, 1.0);
        l.ln1_b = Array({d});
        l.w_qkv = Array({d, 3 * d});
        l.b_qkv = Array({3 * d});
        l.w_o = Array({d, d});
        l.b_o = Array({d});
        l.ln2_g = Array({d}, 1.0);
        l.ln2_b = Array({d});
        l.w_fc = Array({d, f});
        l.b_fc = Array({f});
        l.w_proj = Array({f, d});
        l.b_proj = Array({d});
    }
    lnf_g = Array({d}, 1.0);
    lnf_b = Array({d});
}

BackboneModel BackboneModel::initialize(const BackboneConfig& config, Tokenizer tokenizer, std::uint64_t seed) {
    BackboneModel m(config, std::move(tokenizer));
    Rng rng(seed);
    auto normal = [&](Array& a, double std) {
        for (double& v : a.data()) v = std * rng.normal();
    };
    const double resid = 0.02 / std::sqrt(2.0 * config.n_layers);
    normal(m.tok_emb, 0.02);
    normal(m.pos_emb, 0.01);
    for (auto& l : m.layers) {
        normal(l.w_qkv, 0.02);
        normal(l.w_o, resid);
        normal(l.w_fc, 0.02);
        normal(l.w_proj, resid);
    }
    return m;
}

std::vector<NamedArray> BackboneModel::parameters() {
    std::vector<NamedArray> out{{"tok_emb", &tok_emb}, {"pos_emb", &pos_emb}};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        for (auto [name, arr] : {std::pair{"ln1_g", &l.ln1_g}, {"ln1_b", &l.ln1_b}, {"w_qkv", &l.w_qkv},
                                 {"b_qkv", &l.b_qkv}, {"w_o", &l.w_o}, {"b_o", &l.b_o}, {"ln2_g", &l.ln2_g},
                                 {"ln2_b", &l.ln2_b}, {"w_fc", &l.w_fc}, {"b_fc", &l.b_fc}, {"w_proj", &l.w_proj},
                                 {"b_proj", &l.b_proj}}) {
            out.push_back({p + name, arr});
        }
    }
    out.push_back({"lnf_g", &lnf_g});
    out.push_back({"lnf_b", &lnf_b});
    return out;
}

std::vector<const Array*> BackboneModel::parameters() const {
    std::vector<const Array*> out;
    for (auto& p : const_cast<BackboneModel*>(this)->parameters()) out.push_back(p.value);
    return out;
}

std::size_t BackboneModel::parameter_count() const {
    std::size_t n = 0;
    for (const Array* a : parameters()) n += a->size();
    return n;
}

Digest BackboneModel::digest() const {
    Sha256 h;
    for (std::uint32_t v : {config_.vocab_size, config_.d_model, config_.n_layers, config_.n_heads, config_.d_ffn,
                            config_.max_context}) {
        const std::uint32_t le = binio::to_le(v);
        h.update(std::span(reinterpret_cast<const std::uint8_t*>(&le), sizeof le));
    }
    for (const Array* a : parameters()) h.update(binio::le_bytes(a->data()));
    h.update(tokenizer_.to_json().dump());
    return h.finish();
}

bool BackboneModel::weights_bit_equal(const BackboneModel& other) const {
    const auto a = parameters();
    const auto b = other.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!a[i]->bit_equal(*b[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Prefixes

Array DeployedPrefix::block(std::uint32_t layer, int kv) const {
    const std::size_t rows = length, d = d_model;
    const std::size_t off = (static_cast<std::size_t>(layer) * 2 + static_cast<std::size_t>(kv)) * rows * d;
    return Array({rows, d}, std::vector<double>(activations.begin() + static_cast<std::ptrdiff_t>(off),
                                                activations.begin() + static_cast<std::ptrdiff_t>(off + rows * d)));
}

bool DeployedPrefix::bit_equal(const DeployedPrefix& other) const {
    return n_layers == other.n_layers && length == other.length && d_model == other.d_model &&
           backbone_digest == other.backbone_digest && activations.size() == other.activations.size() &&
           std::memcmp(activations.data(), other.activations.data(), activations.size() * sizeof(double)) == 0;
}

PrefixParams PrefixParams::random(const BackboneConfig& cfg, std::uint32_t length, std::uint32_t hidden,
                                  std::uint64_t seed, double std) {
    PrefixParams p;
    p.n_layers = cfg.n_layers;
    p.length = length;
    p.d_model = cfg.d_model;
    p.hidden = hidden;
    const std::size_t d = cfg.d_model, out = 2ull * cfg.n_layers * cfg.d_model;
    p.embedding = Array({length, d});
    p.w_in = Array({d, hidden});
    p.b_in = Array({hidden});
    p.w_out = Array({hidden, out});
    p.b_out = Array({out});
    Rng rng(seed);
    for (Array* a : {&p.embedding, &p.w_in, &p.w_out})
        for (double& v : a->data()) v = std * rng.normal();
    return p;
}

std::vector<NamedArray> PrefixParams::tensors() {
    return {{"prefix.embedding", &embedding},
            {"prefix.mlp.w_in", &w_in},
            {"prefix.mlp.b_in", &b_in},
            {"prefix.mlp.w_out", &w_out},
            {"prefix.mlp.b_out", &b_out}};
}

std::vector<const Array*> PrefixParams::tensors() const { return {&embedding, &w_in, &b_in, &w_out, &b_out}; }

std::size_t PrefixParams::trainable_count() const {
    std::size_t n = 0;
    for (const Array* a : tensors()) n += a->size();
    return n;
}

bool PrefixParams::bit_equal(const PrefixParams& other) const {
    if (n_layers != other.n_layers || length != other.length || d_model != other.d_model || hidden != other.hidden)
        return false;
    const auto a = tensors();
    const auto b = other.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!a[i]->bit_equal(*b[i])) return false;
    return true;
}

namespace {

Var prefix_mlp(Graph& g, const std::vector<Var>& p) {
    Var h = g.tanh(g.add_bias(g.matmul(p[0], p[1]), p[2]));
    return g.add_bias(g.matmul(h, p[3]), p[4]);
}

}  // namespace

PrefixKV prefix_kv(Graph& g, const PrefixParams& prefix, std::span<const Var> params) {
    PrefixKV kv;
    kv.length = prefix.length;
    if (prefix.length == 0) return kv;
    Var act = prefix_mlp(g, std::vector<Var>(params.begin(), params.end()));
    const std::size_t d = prefix.d_model;
    for (std::uint32_t l = 0; l < prefix.n_layers; ++l) {
        kv.keys.push_back(g.slice_cols(act, (2 * l) * d, d));
        kv.values.push_back(g.slice_cols(act, (2 * l + 1) * d, d));
    }
    return kv;
}

BoundPrefix bind_prefix(Graph& g, const PrefixParams& prefix, bool trainable) {
    BoundPrefix out;
    if (prefix.length > 0)
        for (const Array* a : prefix.tensors()) out.params.push_back(g.borrow(*a, trainable));
    out.kv = prefix_kv(g, prefix, out.params);
    return out;
}

DeployedPrefix PrefixParams::deploy() const {
    DeployedPrefix dp;
    dp.n_layers = n_layers;
    dp.length = length;
    dp.d_model = d_model;
    dp.backbone_digest = backbone_digest;
    dp.activations.resize(2ull * n_layers * length * d_model);
    if (length == 0) return dp;
    Graph g;
    std::vector<Var> p;
    for (const Array* a : tensors()) p.push_back(g.borrow(*a, false));
    const Array& act = g.value(prefix_mlp(g, p));
    const std::size_t d = d_model, width = 2ull * n_layers * d_model;
    for (std::size_t l = 0; l < n_layers; ++l)
        for (std::size_t kv = 0; kv < 2; ++kv)
            for (std::size_t pos = 0; pos < length; ++pos)
                for (std::size_t j = 0; j < d; ++j)
                    dp.activations[((l * 2 + kv) * length + pos) * d + j] = act[pos * width + (2 * l + kv) * d + j];
    return dp;
}

PrefixKV bind_deployed(Graph& g, const DeployedPrefix& prefix) {
    PrefixKV kv;
    kv.length = prefix.length;
    if (prefix.length == 0) return kv;
    for (std::uint32_t l = 0; l < prefix.n_layers; ++l) {
        kv.keys.push_back(g.leaf(prefix.block(l, 0)));
        kv.values.push_back(g.leaf(prefix.block(l, 1)));
    }
    return kv;
}

// ---------------------------------------------------------------------------
// Forward

BoundBackbone bind_backbone(Graph& g, const BackboneModel& model, bool trainable) {
    BoundBackbone b;
    auto bind = [&](const Array& a) {
        Var v = g.borrow(a, trainable);
        b.all.push_back(v);
        return v;
    };
    b.tok_emb = bind(model.tok_emb);
    b.pos_emb = bind(model.pos_emb);
    for (const auto& l : model.layers) {
        BoundBackbone::Layer bl;
        bl.ln1_g = bind(l.ln1_g);
        bl.ln1_b = bind(l.ln1_b);
        bl.w_qkv = bind(l.w_qkv);
        bl.b_qkv = bind(l.b_qkv);
        bl.w_o = bind(l.w_o);
        bl.b_o = bind(l.b_o);
        bl.ln2_g = bind(l.ln2_g);
        bl.ln2_b = bind(l.ln2_b);
        bl.w_fc = bind(l.w_fc);
        bl.b_fc = bind(l.b_fc);
        bl.w_proj = bind(l.w_proj);
        bl.b_proj = bind(l.b_proj);
        b.layers.push_back(bl);
    }
    b.lnf_g = bind(model.lnf_g);
    b.lnf_b = bind(model.lnf_b);
    return b;
}

Var forward_logits(Graph& g, const BackboneModel& model, const BoundBackbone& w, std::span<const int> ids,
                   const PrefixKV* prefix) {
    const BackboneConfig& cfg = model.config();
    if (prefix && prefix->length == 0) prefix = nullptr;
    const std::size_t plen = prefix ? prefix->length : 0;
    const std::size_t t = ids.size();
    if (t == 0) throw ShapeError("forward: empty input sequence");
    if (t + plen > cfg.max_context) {
        throw ShapeError("forward: " + std::to_string(t) + " tokens + " + std::to_string(plen) +
                         " prefix positions exceed max_context " + std::to_string(cfg.max_context));
    }
    if (prefix && prefix->keys.size() != cfg.n_layers) {
        throw ShapeError("forward: prefix has " + std::to_string(prefix->keys.size()) + " layers, backbone has " +
                         std::to_string(cfg.n_layers));
    }
    const std::size_t d = cfg.d_model, hd = cfg.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<int> positions(t);
    for (std::size_t i = 0; i < t; ++i) positions[i] = static_cast<int>(i);
    Var x = g.add(g.embedding(w.tok_emb, ids), g.embedding(w.pos_emb, positions));

    for (std::size_t li = 0; li < cfg.n_layers; ++li) {
        const auto& l = w.layers[li];
        Var h = g.layer_norm(x, l.ln1_g, l.ln1_b);
        Var qkv = g.add_bias(g.matmul(h, l.w_qkv), l.b_qkv);
        Var q = g.slice_cols(qkv, 0, d);
        Var k = g.slice_cols(qkv, d, d);
        Var v = g.slice_cols(qkv, 2 * d, d);
        if (prefix) {
            k = g.concat_rows(prefix->keys[li], k);
            v = g.concat_rows(prefix->values[li], v);
        }
        std::vector<Var> heads;
        heads.reserve(cfg.n_heads);
        for (std::size_t hi = 0; hi < cfg.n_heads; ++hi) {
            Var qh = g.slice_cols(q, hi * hd, hd);
            Var kh = g.slice_cols(k, hi * hd, hd);
            Var vh = g.slice_cols(v, hi * hd, hd);
            Var att = g.softmax(g.scale(g.matmul_nt(qh, kh), att_scale), plen);
            heads.push_back(g.matmul(att, vh));
        }
        Var o = cfg.n_heads == 1 ? heads[0] : g.concat_cols(heads);
        x = g.add(x, g.add_bias(g.matmul(o, l.w_o), l.b_o));
        Var h2 = g.layer_norm(x, l.ln2_g, l.ln2_b);
        Var f = g.gelu(g.add_bias(g.matmul(h2, l.w_fc), l.b_fc));
        x = g.add(x, g.add_bias(g.matmul(f, l.w_proj), l.b_proj));
    }
    x = g.layer_norm(x, w.lnf_g, w.lnf_b);
    return g.matmul_nt(x, w.tok_emb);
}

Array next_token_distributions(const BackboneModel& model, const DeployedPrefix* prefix, std::span<const int> ids) {
    Graph g;
    BoundBackbone w = bind_backbone(g, model, false);
    PrefixKV kv;
    if (prefix) kv = bind_deployed(g, *prefix);
    Var logits = forward_logits(g, model, w, ids, prefix ? &kv : nullptr);
    return g.value(g.softmax(logits));
}

}  // namespace pkt::lm
