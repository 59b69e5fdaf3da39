#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pkt/lm/encoding.hpp"
#include "pkt/lm/model.hpp"
#include "pkt/optim/optimizer.hpp"

namespace pkt::lm {

/// Full-parameter training of the backbone (pretraining and the
/// persona-agnostic fine-tune).
struct LmTrainConfig {
    std::size_t epochs = 4;
    std::size_t batch_size = 8;
    double lr = 3e-3;
    double warmup_fraction = 0.05;
    double max_grad_norm = 0.0;  // 0 disables clipping
    optim::AdamWConfig adam{};
    std::uint64_t seed = 0;
};

struct LmEpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;  // NaN without a validation set
    double lr = 0.0;          // rate at the end of the epoch
    std::size_t steps = 0;    // cumulative optimizer steps
};

using LmEpochCallback = std::function<void(const LmEpochRecord&)>;

/// Shuffled mini-batches, AdamW, linear warmup and decay. Throws NumericError
/// naming the step when a batch loss or gradient becomes non-finite.
std::vector<LmEpochRecord> train_backbone(BackboneModel& model, std::span<const TokenSeq> train,
                                          std::span<const TokenSeq> valid, const LmTrainConfig& config,
                                          const LmEpochCallback& on_epoch = {});

}  // namespace pkt::lm
