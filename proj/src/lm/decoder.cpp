#include "pkt/lm/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "pkt/core/errors.hpp"
#include "pkt/core/kernels.hpp"

namespace pkt::lm {

using kernels::Trans;

namespace {

constexpr double kGeluC = 0.7978845608028654;
constexpr double kGeluA = 0.044715;
constexpr double kLayerNormEps = 1e-5;

void layer_norm(const double* x, const Array& g, const Array& b, double* y, std::size_t d) {
    double mean, rstd;
    kernels::layer_norm_rows(x, g.ptr(), b.ptr(), y, &mean, &rstd, 1, d, kLayerNormEps);
}

void affine(const double* x, const Array& w, const Array& b, double* y, std::size_t in, std::size_t out) {
    kernels::gemm(Trans::kNone, Trans::kNone, 1, out, in, x, w.ptr(), y, false);
    for (std::size_t j = 0; j < out; ++j) y[j] += b[j];
}

}  // namespace

Decoder::Decoder(const BackboneModel& model, const DeployedPrefix* prefix) : model_(model), prefix_(prefix) {
    if (prefix_ && prefix_->length == 0) prefix_ = nullptr;
    if (prefix_ && (prefix_->n_layers != model.config().n_layers || prefix_->d_model != model.config().d_model)) {
        throw ShapeError("decoder: prefix dims (" + std::to_string(prefix_->n_layers) + " layers, d=" +
                         std::to_string(prefix_->d_model) + ") do not match the backbone");
    }
}

Decoder::State Decoder::start(std::span<const int> history) const {
    if (history.empty()) throw ShapeError("decoder: empty history");
    const auto& cfg = model_.config();
    State s;
    s.keys.resize(cfg.n_layers);
    s.values.resize(cfg.n_layers);
    if (prefix_) {
        const std::size_t block = static_cast<std::size_t>(prefix_->length) * cfg.d_model;
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            auto base = prefix_->activations.begin() + static_cast<std::ptrdiff_t>(2 * l * block);
            s.keys[l].assign(base, base + static_cast<std::ptrdiff_t>(block));
            s.values[l].assign(base + static_cast<std::ptrdiff_t>(block), base + static_cast<std::ptrdiff_t>(2 * block));
        }
        s.rows = prefix_->length;
    }
    for (std::size_t i = 0; i < history.size(); ++i) step(s, history[i], i + 1 == history.size());
    return s;
}

Decoder::State Decoder::advance(const State& s, int token) const {
    State next = s;
    step(next, token, true);
    return next;
}

void Decoder::step(State& s, int token, bool want_logits) const {
    const auto& cfg = model_.config();
    const std::size_t d = cfg.d_model, hd = cfg.head_dim(), f = cfg.d_ffn, v = cfg.vocab_size;
    if (s.rows + 1 > cfg.max_context) {
        throw ShapeError("decoder: " + std::to_string(s.position + 1) + " tokens + " +
                         std::to_string(s.rows - s.position) + " prefix positions exceed max_context " +
                         std::to_string(cfg.max_context));
    }
    if (token < 0 || static_cast<std::size_t>(token) >= v) {
        throw ShapeError("decoder: token id " + std::to_string(token) + " outside vocabulary");
    }
    std::vector<double> x(d), h(d), qkv(3 * d), o(d), tmp(d), ff(f), scores(s.rows + 1), probs(s.rows + 1);
    for (std::size_t j = 0; j < d; ++j)
        x[j] = model_.tok_emb[static_cast<std::size_t>(token) * d + j] + model_.pos_emb[s.position * d + j];

    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const std::size_t rows = s.rows + 1;
    for (std::size_t li = 0; li < cfg.n_layers; ++li) {
        const auto& l = model_.layers[li];
        layer_norm(x.data(), l.ln1_g, l.ln1_b, h.data(), d);
        affine(h.data(), l.w_qkv, l.b_qkv, qkv.data(), d, 3 * d);
        auto& kc = s.keys[li];
        auto& vc = s.values[li];
        kc.insert(kc.end(), qkv.begin() + static_cast<std::ptrdiff_t>(d), qkv.begin() + static_cast<std::ptrdiff_t>(2 * d));
        vc.insert(vc.end(), qkv.begin() + static_cast<std::ptrdiff_t>(2 * d), qkv.end());
        for (std::size_t hi = 0; hi < cfg.n_heads; ++hi) {
            const double* q = qkv.data() + hi * hd;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* k = kc.data() + r * d + hi * hd;
                double dot = 0.0;
                for (std::size_t j = 0; j < hd; ++j) dot += q[j] * k[j];
                scores[r] = dot * att_scale;
            }
            kernels::softmax_rows(scores.data(), probs.data(), 1, rows, kernels::kNoMask);
            double* oh = o.data() + hi * hd;
            std::fill(oh, oh + hd, 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* vr = vc.data() + r * d + hi * hd;
                for (std::size_t j = 0; j < hd; ++j) oh[j] += probs[r] * vr[j];
            }
        }
        affine(o.data(), l.w_o, l.b_o, tmp.data(), d, d);
        for (std::size_t j = 0; j < d; ++j) x[j] += tmp[j];
        layer_norm(x.data(), l.ln2_g, l.ln2_b, h.data(), d);
        affine(h.data(), l.w_fc, l.b_fc, ff.data(), d, f);
        for (double& z : ff) z = 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z)));
        affine(ff.data(), l.w_proj, l.b_proj, tmp.data(), f, d);
        for (std::size_t j = 0; j < d; ++j) x[j] += tmp[j];
    }
    s.rows = rows;
    s.position += 1;
    if (!want_logits) return;

    layer_norm(x.data(), model_.lnf_g, model_.lnf_b, h.data(), d);
    s.log_probs.resize(v);
    kernels::gemm(Trans::kNone, Trans::kTranspose, 1, v, d, h.data(), model_.tok_emb.ptr(), s.log_probs.data(), false);
    const double mx = *std::max_element(s.log_probs.begin(), s.log_probs.end());
    double se = 0.0;
    for (double z : s.log_probs) se += std::exp(z - mx);
    const double lse = mx + std::log(se);
    for (double& z : s.log_probs) z -= lse;
}

}  // namespace pkt::lm
