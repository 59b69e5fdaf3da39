#include "pkt/pipeline/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <mutex>
#include <optional>
#include <thread>

#include "pkt/core/errors.hpp"
#include "pkt/core/fs.hpp"
#include "pkt/core/random.hpp"
#include "pkt/data/partition.hpp"
#include "pkt/lm/loss.hpp"

namespace pkt::pipeline {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

EncodedPersona encode_persona(const lm::Tokenizer& tok, const data::Persona& persona, const data::Split& split,
                              std::size_t max_tokens) {
    EncodedPersona e;
    e.id = persona.id;
    auto enc = [&](const std::vector<std::size_t>& idx, std::vector<lm::TokenSeq>& out) {
        for (std::size_t i : idx) {
            if (i >= persona.dialogues.size())
                throw DataError("persona '" + persona.id + "': split index " + std::to_string(i) + " out of range");
            lm::TokenSeq s = lm::encode_dialogue(tok, persona.dialogues[i], max_tokens);
            if (s.target_count() > 0) out.push_back(std::move(s));
        }
    };
    enc(split.train, e.train);
    enc(split.valid, e.valid);
    enc(split.test, e.test);
    return e;
}

std::vector<EncodedPersona> encode_part(const lm::Tokenizer& tok, const data::PersonaDataset& ds, data::Part part,
                                        std::size_t max_tokens) {
    if (!ds.partitioned() || !ds.has_splits()) throw DataError("dataset is not partitioned and split");
    std::vector<EncodedPersona> out;
    for (std::size_t i : ds.part_indices(part)) out.push_back(encode_persona(tok, ds.personas[i], ds.splits[i], max_tokens));
    return out;
}

lm::PrefixParams init_prefix(const lm::BackboneModel& model, const PrefixLayout& layout, std::uint64_t seed) {
    lm::PrefixParams p = lm::PrefixParams::random(model.config(), layout.length, layout.hidden, seed, layout.init_std);
    p.backbone_digest = model.digest();
    return p;
}

LossGrad prefix_loss_grad(const lm::BackboneModel& model, const lm::PrefixParams& prefix,
                          std::span<const lm::TokenSeq* const> batch) {
    if (batch.empty()) throw DataError("empty training batch");
    Graph g;
    const lm::BoundBackbone w = lm::bind_backbone(g, model, false);
    const lm::BoundPrefix bp = lm::bind_prefix(g, prefix, true);
    std::vector<Var> losses;
    losses.reserve(batch.size());
    for (const lm::TokenSeq* s : batch) losses.push_back(lm::sequence_loss(g, model, w, *s, &bp.kv));
    const Var loss = g.mean(losses);
    LossGrad out;
    out.loss = g.value(loss)[0];
    if (!std::isfinite(out.loss)) return out;
    g.backward(loss);
    for (Var v : bp.params) out.grads.push_back(g.grad(v));
    return out;
}

double prefix_loss(const lm::BackboneModel& model, const lm::PrefixParams& prefix, std::span<const lm::TokenSeq> seqs) {
    if (seqs.empty()) return kNaN;
    const lm::DeployedPrefix d = prefix.deploy();
    return lm::corpus_loss(model, seqs, &d);
}

nlohmann::json epoch_json(const EpochLog& e) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"epoch", e.epoch}, {"train_loss", num(e.train_loss)}, {"valid_loss", num(e.valid_loss)}, {"lr", e.lr}};
}

void write_training_log(const std::string& path, std::span<const EpochLog> log) {
    fsutil::atomic_write(path, [&](std::ostream& out) {
        for (const auto& e : log) out << epoch_json(e).dump() << '\n';
    });
}

namespace {

/// Applies one optimizer update, failing with the step index on divergence.
void check_finite(const LossGrad& lg, std::size_t step, const char* what) {
    if (!std::isfinite(lg.loss))
        throw NumericError(std::string(what) + " diverged at step " + std::to_string(step) + " (loss is not finite)");
    for (const Array& g : lg.grads)
        if (!g.all_finite())
            throw NumericError(std::string(what) + " diverged at step " + std::to_string(step) + " (non-finite gradient)");
}

struct EarlyStopState {
    lm::PrefixParams best;
    double best_valid = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t bad = 0;
};

/// Runs epochs with validation-based early stopping. `epoch_fn(prefix)`
/// trains one epoch in place and returns {mean train loss, lr at epoch end}.
template <class EpochFn>
void run_epochs(const lm::BackboneModel& model, lm::PrefixParams& prefix, std::span<const lm::TokenSeq> valid,
                std::size_t max_epochs, std::size_t patience, EpochFn epoch_fn, const EpochCallback& on_epoch,
                std::vector<EpochLog>& log, lm::PrefixParams& best_out, std::size_t& best_epoch) {
    const bool has_valid = !valid.empty();
    EarlyStopState st{prefix};
    EpochLog e0{0, kNaN, has_valid ? prefix_loss(model, prefix, valid) : kNaN, 0.0};
    log.push_back(e0);
    if (on_epoch) on_epoch(e0, prefix);
    if (has_valid) st.best_valid = e0.valid_loss;
    for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
        const auto [train_loss, lr] = epoch_fn(prefix);
        EpochLog e{epoch, train_loss, has_valid ? prefix_loss(model, prefix, valid) : kNaN, lr};
        log.push_back(e);
        if (on_epoch) on_epoch(e, prefix);
        if (!has_valid) {
            st.best = prefix;
            st.best_epoch = epoch;
            continue;
        }
        if (e.valid_loss < st.best_valid) {
            st.best_valid = e.valid_loss;
            st.best = prefix;
            st.best_epoch = epoch;
            st.bad = 0;
        } else if (++st.bad >= patience) {
            break;
        }
    }
    best_out = std::move(st.best);
    best_epoch = st.best_epoch;
}

std::vector<lm::TokenSeq> pooled_valid(std::span<const EncodedPersona> part) {
    std::vector<lm::TokenSeq> v;
    for (const auto& p : part) v.insert(v.end(), p.valid.begin(), p.valid.end());
    return v;
}

std::size_t total_train(std::span<const EncodedPersona> part) {
    std::size_t n = 0;
    for (const auto& p : part) n += p.train.size();
    return n;
}

/// Shared body of the base and temperature strategies: `next_batch` yields
/// (persona index, sequence) pairs for one optimizer step.
template <class NextBatch>
SourceResult train_source_steps(const lm::BackboneModel& model, std::span<const EncodedPersona> part_a,
                                const lm::PrefixParams& init, const SourceTrainConfig& config,
                                const EpochCallback& on_epoch, NextBatch next_batch, const char* what) {
    if (part_a.empty()) throw DataError(std::string(what) + ": Part A is empty");
    const std::size_t n_train = total_train(part_a);
    if (n_train == 0) throw DataError(std::string(what) + ": Part A has no train dialogues");
    if (config.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    const std::size_t steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
    const std::size_t total = steps_per_epoch * config.max_epochs;
    const optim::LinearSchedule schedule{config.lr, total,
                                         static_cast<std::size_t>(config.warmup_fraction * static_cast<double>(total))};

    SourceResult res;
    res.persona_draws.assign(part_a.size(), 0);
    lm::PrefixParams prefix = init;
    const std::vector<NamedArray> params = prefix.tensors();
    optim::AdamW opt(config.adam, params);
    std::size_t step = 0;
    const auto valid = pooled_valid(part_a);

    auto epoch_fn = [&](lm::PrefixParams& p) {
        double sum = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<const lm::TokenSeq*> batch;
            for (const auto& [pi, seq] : next_batch(s)) {
                batch.push_back(seq);
                ++res.persona_draws[pi];
            }
            const LossGrad lg = prefix_loss_grad(model, p, batch);
            check_finite(lg, step, what);
            opt.step(params, lg.grads, schedule.rate(step));
            ++step;
            sum += lg.loss;
        }
        return std::pair{sum / static_cast<double>(steps_per_epoch), schedule.rate(step)};
    };
    run_epochs(model, prefix, valid, config.max_epochs, config.patience, epoch_fn, on_epoch, res.log, res.prefix,
               res.best_epoch);
    return res;
}

}  // namespace

SourceResult train_source_base(const lm::BackboneModel& model, std::span<const EncodedPersona> part_a,
                               const lm::PrefixParams& init, const SourceTrainConfig& config,
                               const EpochCallback& on_epoch) {
    std::vector<std::pair<std::size_t, const lm::TokenSeq*>> pool;
    for (std::size_t i = 0; i < part_a.size(); ++i)
        for (const auto& s : part_a[i].train) pool.emplace_back(i, &s);
    Rng rng(derive_seed(config.seed, "source_base"));
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    auto next_batch = [&](std::size_t s) {
        if (s == 0) rng.shuffle(order);
        std::vector<std::pair<std::size_t, const lm::TokenSeq*>> b;
        for (std::size_t i = s * config.batch_size; i < std::min(order.size(), (s + 1) * config.batch_size); ++i)
            b.push_back(pool[order[i]]);
        return b;
    };
    return train_source_steps(model, part_a, init, config, on_epoch, next_batch, "source training (base)");
}

SourceResult train_source_temperature(const lm::BackboneModel& model, std::span<const EncodedPersona> part_a,
                                      const lm::PrefixParams& init, const SourceTrainConfig& config,
                                      double temperature, const EpochCallback& on_epoch) {
    std::vector<std::size_t> slots;
    std::vector<std::vector<std::size_t>> candidates;
    std::vector<double> counts;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < part_a.size(); ++i) {
        if (part_a[i].train.empty()) {
            ++skipped;
            continue;
        }
        slots.push_back(i);
        candidates.emplace_back(part_a[i].train.size());
        std::iota(candidates.back().begin(), candidates.back().end(), 0);
        counts.push_back(static_cast<double>(part_a[i].train.size()));
    }
    if (slots.empty()) throw DataError("source training (temperature): Part A has no train dialogues");
    data::BatchSampler sampler(slots, candidates, data::temperature_mix(counts, temperature),
                               derive_seed(config.seed, "source_temperature"));
    auto next_batch = [&](std::size_t) {
        std::vector<std::pair<std::size_t, const lm::TokenSeq*>> b;
        for (const auto& r : sampler.next(config.batch_size))
            b.emplace_back(r.persona, &part_a[r.persona].train[r.dialogue]);
        return b;
    };
    SourceResult res =
        train_source_steps(model, part_a, init, config, on_epoch, next_batch, "source training (temperature)");
    res.skipped_personas = skipped;
    return res;
}

lm::PrefixParams ppreptile_inner(const lm::BackboneModel& model, const lm::PrefixParams& theta,
                                 const EncodedPersona& persona, const MetaTrainConfig& config, std::uint64_t seed,
                                 double* first_loss) {
    lm::PrefixParams w = theta;
    if (config.k_inner == 0) return w;
    if (persona.train.empty()) throw DataError("ppreptile: persona '" + persona.id + "' has no train dialogues");
    if (config.b_in == 0) throw std::invalid_argument("b_in must be positive");
    const std::vector<NamedArray> params = w.tensors();
    std::optional<optim::AdamW> adam;
    if (config.inner == InnerOptimizer::AdamW) adam.emplace(optim::AdamWConfig{}, params);
    Rng rng(seed);
    std::vector<std::size_t> idx(persona.train.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t step = 0; step < config.k_inner; ++step) {
        rng.shuffle(idx);
        std::vector<const lm::TokenSeq*> batch;
        for (std::size_t i = 0; i < std::min(config.b_in, idx.size()); ++i) batch.push_back(&persona.train[idx[i]]);
        const LossGrad lg = prefix_loss_grad(model, w, batch);
        check_finite(lg, step, "ppreptile inner loop");
        if (step == 0 && first_loss) *first_loss = lg.loss;
        if (adam) {
            adam->step(params, lg.grads, config.alpha);
        } else {
            optim::sgd_step(params, lg.grads, config.alpha);
        }
    }
    return w;
}

lm::PrefixParams ppreptile_outer(const lm::PrefixParams& theta, std::span<const lm::PrefixParams> ws, double beta) {
    lm::PrefixParams out = theta;
    if (ws.empty()) return out;
    const auto dst = out.tensors();
    const auto src = theta.tensors();
    for (const auto& w : ws) {
        const auto wt = w.tensors();
        if (wt.size() != src.size()) throw ShapeError("ppreptile_outer: tensor count mismatch");
        for (std::size_t t = 0; t < src.size(); ++t) {
            if (!wt[t]->same_shape(*src[t]))
                throw ShapeError("ppreptile_outer: " + dst[t].name + " is " + shape_str(src[t]->shape()) +
                                 " in theta but " + shape_str(wt[t]->shape()) + " in an inner result");
        }
    }
    std::vector<std::vector<const Array*>> wts;
    for (const auto& w : ws) wts.push_back(w.tensors());
    const double inv_n = 1.0 / static_cast<double>(ws.size());
    for (std::size_t t = 0; t < src.size(); ++t) {
        Array& o = *dst[t].value;
        const Array& th = *src[t];
        for (std::size_t j = 0; j < th.size(); ++j) {
            double acc = 0.0;
            for (const auto& wt : wts) acc += (*wt[t])[j] - th[j];
            o[j] = th[j] + beta * (acc * inv_n);
        }
    }
    return out;
}

SourceResult train_source_ppreptile(const lm::BackboneModel& model, std::span<const EncodedPersona> part_a,
                                    const lm::PrefixParams& init, const MetaTrainConfig& config,
                                    const EpochCallback& on_epoch) {
    if (part_a.size() < config.n_personas || config.n_personas == 0)
        throw DataError("ppreptile: Part A has " + std::to_string(part_a.size()) + " personas, n = " +
                        std::to_string(config.n_personas));
    const std::size_t n_train = total_train(part_a);
    if (n_train == 0) throw DataError("ppreptile: Part A has no train dialogues");
    const std::size_t per_iter = config.n_personas * std::max<std::size_t>(1, config.k_inner) * config.b_in;
    const std::size_t iterations = config.iterations ? config.iterations : (n_train + per_iter - 1) / per_iter;

    SourceResult res;
    res.persona_draws.assign(part_a.size(), 0);
    Rng rng(derive_seed(config.seed, "ppreptile"));
    std::vector<std::size_t> order(part_a.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t iteration = 0;
    lm::PrefixParams prefix = init;
    const auto valid = pooled_valid(part_a);

    auto epoch_fn = [&](lm::PrefixParams& theta) {
        double sum = 0.0;
        std::size_t counted = 0;
        for (std::size_t it = 0; it < iterations; ++it, ++iteration) {
            // Uniform without replacement within an iteration.
            for (std::size_t i = 0; i < config.n_personas; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
            std::vector<lm::PrefixParams> ws;
            for (std::size_t i = 0; i < config.n_personas; ++i) {
                const EncodedPersona& p = part_a[order[i]];
                ++res.persona_draws[order[i]];
                if (p.train.empty()) {
                    ++res.skipped_personas;
                    continue;
                }
                const std::uint64_t s = derive_seed(config.seed, p.id + "#" + std::to_string(iteration));
                double first = kNaN;
                ws.push_back(ppreptile_inner(model, theta, p, config, s, &first));
                if (std::isfinite(first)) {
                    sum += first;
                    ++counted;
                }
            }
            theta = ppreptile_outer(theta, ws, config.beta);
        }
        return std::pair{counted ? sum / static_cast<double>(counted) : kNaN, config.beta};
    };
    run_epochs(model, prefix, valid, config.max_epochs, config.patience, epoch_fn, on_epoch, res.log, res.prefix,
               res.best_epoch);
    return res;
}

PersonaResult train_personalized(const lm::BackboneModel& model, const lm::PrefixParams& init,
                                 const EncodedPersona& persona, const PersonaTrainConfig& config,
                                 const EpochCallback& on_epoch) {
    if (persona.train.empty() && config.max_epochs > 0)
        throw DataError("persona '" + persona.id + "' has no train dialogues");
    if (config.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    const std::size_t steps_per_epoch = (persona.train.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total = steps_per_epoch * config.max_epochs;
    const optim::LinearSchedule schedule{config.lr, total,
                                         static_cast<std::size_t>(config.warmup_fraction * static_cast<double>(total))};
    PersonaResult res;
    res.no_valid_split = persona.valid.empty();
    lm::PrefixParams prefix = init;
    const std::vector<NamedArray> params = prefix.tensors();
    optim::AdamW opt(config.adam, params);
    Rng rng(derive_seed(config.seed, "persona:" + persona.id));
    std::vector<std::size_t> order(persona.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;

    auto epoch_fn = [&](lm::PrefixParams& p) {
        rng.shuffle(order);
        double sum = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<const lm::TokenSeq*> batch;
            for (std::size_t i = s * config.batch_size; i < std::min(order.size(), (s + 1) * config.batch_size); ++i)
                batch.push_back(&persona.train[order[i]]);
            const LossGrad lg = prefix_loss_grad(model, p, batch);
            check_finite(lg, step, "personalized training");
            opt.step(params, lg.grads, schedule.rate(step));
            ++step;
            sum += lg.loss;
        }
        return std::pair{sum / static_cast<double>(steps_per_epoch), schedule.rate(step)};
    };
    run_epochs(model, prefix, persona.valid, config.max_epochs, config.patience, epoch_fn, on_epoch, res.log,
               res.prefix, res.best_epoch);
    return res;
}

std::vector<PersonaResult> train_personalized_all(
    const lm::BackboneModel& model, const lm::PrefixParams& init, std::span<const EncodedPersona> personas,
    const PersonaTrainConfig& config, std::size_t jobs,
    const std::function<void(std::size_t, const PersonaResult&)>& on_done) {
    std::vector<PersonaResult> results(personas.size());
    std::vector<std::exception_ptr> errors(personas.size());
    std::atomic<std::size_t> next{0};
    std::mutex done_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < personas.size(); i = next++) {
            try {
                results[i] = train_personalized(model, init, personas[i], config);
                if (on_done) {
                    const std::lock_guard lock(done_mutex);
                    on_done(i, results[i]);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, personas.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

}  // namespace pkt::pipeline
