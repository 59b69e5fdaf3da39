#include "pkt/lm/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "pkt/core/errors.hpp"
#include "pkt/core/random.hpp"
#include "pkt/lm/loss.hpp"

namespace pkt::lm {

std::vector<LmEpochRecord> train_backbone(BackboneModel& model, std::span<const TokenSeq> train,
                                          std::span<const TokenSeq> valid, const LmTrainConfig& config,
                                          const LmEpochCallback& on_epoch) {
    if (train.empty()) throw DataError("train_backbone: empty training set");
    if (config.batch_size == 0) throw std::invalid_argument("batch_size must be positive");

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total = per_epoch * config.epochs;
    const optim::LinearSchedule schedule{
        config.lr, total, static_cast<std::size_t>(config.warmup_fraction * static_cast<double>(total))};

    const std::vector<NamedArray> params = model.parameters();
    optim::AdamW opt(config.adam, params);
    Rng rng(derive_seed(config.seed, "train_backbone"));
    std::vector<LmEpochRecord> log;
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            Graph g;
            const BoundBackbone w = bind_backbone(g, model, true);
            std::vector<Var> losses;
            for (std::size_t i = start; i < end; ++i) {
                const TokenSeq& s = train[order[i]];
                if (s.target_count() == 0) continue;
                losses.push_back(sequence_loss(g, model, w, s, nullptr));
            }
            if (losses.empty()) continue;
            const Var loss = g.mean(losses);
            const double lv = g.value(loss)[0];
            if (!std::isfinite(lv)) {
                throw NumericError("backbone training diverged at step " + std::to_string(step) +
                                   " (loss = " + std::to_string(lv) + ")");
            }
            g.backward(loss);
            std::vector<Array> grads;
            grads.reserve(params.size());
            for (Var v : w.all) grads.push_back(g.grad(v));
            for (std::size_t i = 0; i < grads.size(); ++i) {
                if (!grads[i].all_finite()) {
                    throw NumericError("backbone training diverged at step " + std::to_string(step) +
                                       " (non-finite gradient for " + params[i].name + ")");
                }
            }
            optim::clip_grad_norm(grads, config.max_grad_norm);
            opt.step(params, grads, schedule.rate(step));
            ++step;
            loss_sum += lv;
            ++batches;
        }
        LmEpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN();
        rec.valid_loss = valid.empty() ? std::numeric_limits<double>::quiet_NaN() : corpus_loss(model, valid);
        rec.lr = schedule.rate(step);
        rec.steps = step;
        log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return log;
}

}  // namespace pkt::lm
