#pragma once

#include <span>

#include "pkt/core/graph.hpp"
#include "pkt/lm/encoding.hpp"
#include "pkt/lm/model.hpp"

namespace pkt::lm {

/// Mean token cross-entropy of one sequence, recorded on `g`. Throws DataError
/// when the sequence has no scored positions.
Var sequence_loss(Graph& g, const BackboneModel& model, const BoundBackbone& w, const TokenSeq& seq,
                  const PrefixKV* prefix);

/// Mean cross-entropy (nats per target token) of one sequence.
double lm_loss(const BackboneModel& model, const TokenSeq& seq, const DeployedPrefix* prefix = nullptr);

/// Token-weighted mean cross-entropy over a set of sequences.
double corpus_loss(const BackboneModel& model, std::span<const TokenSeq> seqs, const DeployedPrefix* prefix = nullptr);

}  // namespace pkt::lm
