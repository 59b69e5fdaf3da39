#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pkt/core/random.hpp"
#include "pkt/data/dataset.hpp"

namespace pkt::data {

struct PartitionConfig {
    std::size_t few_shot_threshold = 6;
    std::size_t n_source = 1;  // minimum Part A size
    std::size_t n_regular_target = 20;
    std::uint64_t seed = 0;
};

/// Personas with fewer than `few_shot_threshold` dialogues go to C;
/// `n_regular_target` randomly chosen regular personas go to B; the rest to A.
/// Throws DataError (with counts) when fewer than n_source + n_regular_target
/// regular personas exist.
std::vector<Part> partition_personas(std::span<const std::size_t> dialogue_counts, const PartitionConfig& config);

/// 8:1:1 split of d dialogue indices. Shares are floored; for d >= 3 leftovers
/// go to an empty test, then an empty valid, and train gives up one dialogue
/// to each of valid and test that is still empty. All other leftovers go to
/// train. Lists are sorted.
Split split_dialogues(std::size_t d, std::uint64_t seed);

/// Partition plus per-persona splits (seed derived from the persona id).
PersonaDataset build_dataset(std::vector<Persona> personas, const PartitionConfig& config);

/// q_i = r_i^(1/T) / sum_j r_j^(1/T), r_i = n_i / sum n. Computed in log space.
/// Throws std::invalid_argument for T <= 0 or a zero count.
std::vector<double> temperature_mix(std::span<const double> counts, double temperature);

/// One training example drawn from a part: (persona index, dialogue index).
struct DialogueRef {
    std::size_t persona = 0;
    std::size_t dialogue = 0;
    bool operator==(const DialogueRef&) const = default;
};

/// Endless batches: persona i with probability p_i, then one of its
/// candidate dialogues uniformly.
class BatchSampler {
   public:
    /// candidates[i] lists the dialogue indices of persona `personas[i]`.
    BatchSampler(std::vector<std::size_t> personas, std::vector<std::vector<std::size_t>> candidates,
                 std::vector<double> probabilities, std::uint64_t seed);

    std::size_t draw_slot();  // index into `personas`
    std::vector<DialogueRef> next(std::size_t batch_size);

   private:
    std::vector<std::size_t> personas_;
    std::vector<std::vector<std::size_t>> candidates_;
    std::vector<double> cumulative_;
    Rng rng_;
};

}  // namespace pkt::data
