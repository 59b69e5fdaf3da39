#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pkt/data/dataset.hpp"
#include "pkt/lm/encoding.hpp"
#include "pkt/lm/model.hpp"
#include "pkt/optim/optimizer.hpp"

namespace pkt::pipeline {

/// One persona's dialogues encoded for training: each dialogue is one
/// sequence with every speaker-2 turn as a target.
struct EncodedPersona {
    std::string id;
    std::vector<lm::TokenSeq> train, valid, test;
};

/// Sequences are cut to fit max_context - prefix_length.
EncodedPersona encode_persona(const lm::Tokenizer& tok, const data::Persona& persona, const data::Split& split,
                              std::size_t max_tokens);
std::vector<EncodedPersona> encode_part(const lm::Tokenizer& tok, const data::PersonaDataset& ds, data::Part part,
                                        std::size_t max_tokens);

struct PrefixLayout {
    std::uint32_t length = 8;
    std::uint32_t hidden = 512;
    double init_std = 0.02;
};

lm::PrefixParams init_prefix(const lm::BackboneModel& model, const PrefixLayout& layout, std::uint64_t seed);

struct LossGrad {
    double loss = 0.0;
    std::vector<Array> grads;  // PrefixParams::tensors() order
};

/// Mean over `batch` of per-sequence token-mean cross-entropy, with gradients
/// for the prefix parameters only. The backbone is borrowed read-only.
LossGrad prefix_loss_grad(const lm::BackboneModel& model, const lm::PrefixParams& prefix,
                          std::span<const lm::TokenSeq* const> batch);

/// Token-weighted mean cross-entropy of `seqs` under the deployed prefix.
double prefix_loss(const lm::BackboneModel& model, const lm::PrefixParams& prefix, std::span<const lm::TokenSeq> seqs);

/// One line of a training log.
struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // NaN for epoch 0 (initialization)
    double valid_loss = 0.0;  // NaN without validation data
    double lr = 0.0;
};

nlohmann::json epoch_json(const EpochLog& e);
/// One JSON object per line: {"epoch", "train_loss", "valid_loss", "lr"}; NaN as null.
void write_training_log(const std::string& path, std::span<const EpochLog> log);

/// Called after every epoch (and once for epoch 0) with the current prefix.
using EpochCallback = std::function<void(const EpochLog&, const lm::PrefixParams&)>;

// ---- source prefix -------------------------------------------------------

/// Shared by the base and temperature strategies.
struct SourceTrainConfig {
    std::size_t max_epochs = 50;
    std::size_t patience = 3;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double warmup_fraction = 0.0;
    optim::AdamWConfig adam{};
    std::uint64_t seed = 0;
};

enum class InnerOptimizer { Sgd, AdamW };

struct MetaTrainConfig {
    double alpha = 1e-4;           // inner rate
    double beta = 3e-5;            // outer rate
    std::size_t k_inner = 5;       // inner steps per sampled persona
    std::size_t n_personas = 4;    // personas per outer iteration (the outer batch b_out)
    std::size_t b_in = 2;          // dialogues per inner step
    InnerOptimizer inner = InnerOptimizer::Sgd;
    std::size_t iterations = 0;    // per epoch; 0 = one pass over Part A train dialogues
    // Logged train loss: mean first-inner-step loss at theta over the epoch.
    std::size_t max_epochs = 50;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
};

struct SourceResult {
    lm::PrefixParams prefix;  // best validation checkpoint
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    std::vector<std::size_t> persona_draws;  // per Part A persona, over the whole run
    std::size_t skipped_personas = 0;        // sampled with an empty train split
};

/// Persona-agnostic shuffle of all Part A train dialogues.
SourceResult train_source_base(const lm::BackboneModel& model, std::span<const EncodedPersona> part_a,
                               const lm::PrefixParams& init, const SourceTrainConfig& config,
                               const EpochCallback& on_epoch = {});

/// Same step budget as base, but each example first draws a persona with
/// temperature-mixed probabilities, then one of its train dialogues.
SourceResult train_source_temperature(const lm::BackboneModel& model, std::span<const EncodedPersona> part_a,
                                      const lm::PrefixParams& init, const SourceTrainConfig& config,
                                      double temperature, const EpochCallback& on_epoch = {});

/// W_i: k_inner optimizer steps on one persona's train dialogues from a copy
/// of theta. Each step uses min(b_in, |train|) distinct dialogues drawn with
/// `seed`. `first_loss` receives the loss of the first step's batch at theta.
lm::PrefixParams ppreptile_inner(const lm::BackboneModel& model, const lm::PrefixParams& theta,
                                 const EncodedPersona& persona, const MetaTrainConfig& config, std::uint64_t seed,
                                 double* first_loss = nullptr);

/// theta + beta * mean_i(W_i - theta). Throws ShapeError on a shape mismatch.
lm::PrefixParams ppreptile_outer(const lm::PrefixParams& theta, std::span<const lm::PrefixParams> ws, double beta);

SourceResult train_source_ppreptile(const lm::BackboneModel& model, std::span<const EncodedPersona> part_a,
                                    const lm::PrefixParams& init, const MetaTrainConfig& config,
                                    const EpochCallback& on_epoch = {});

// ---- personalized prefix -------------------------------------------------

struct PersonaTrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 2;
    std::size_t max_epochs = 20;
    std::size_t patience = 3;
    double warmup_fraction = 0.0;
    optim::AdamWConfig adam{};
    std::uint64_t seed = 0;
};

struct PersonaResult {
    lm::PrefixParams prefix;  // best validation checkpoint (fixed budget without valid data)
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    bool no_valid_split = false;
};

/// Trains on exactly one persona's train split, early-stopping on its valid
/// split. Epoch 0 is the initialization, so an init that is never improved on
/// is returned unchanged.
PersonaResult train_personalized(const lm::BackboneModel& model, const lm::PrefixParams& init,
                                 const EncodedPersona& persona, const PersonaTrainConfig& config,
                                 const EpochCallback& on_epoch = {});

/// train_personalized for every persona on up to `jobs` threads sharing the
/// read-only backbone. Results are in input order and independent of `jobs`;
/// on_done runs under a lock as each persona finishes. The first failure (by
/// input order) is rethrown after all threads stop.
std::vector<PersonaResult> train_personalized_all(
    const lm::BackboneModel& model, const lm::PrefixParams& init, std::span<const EncodedPersona> personas,
    const PersonaTrainConfig& config, std::size_t jobs,
    const std::function<void(std::size_t, const PersonaResult&)>& on_done = {});

}  // namespace pkt::pipeline
