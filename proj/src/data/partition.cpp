#include "pkt/data/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pkt/core/errors.hpp"

namespace pkt::data {

std::vector<Part> partition_personas(std::span<const std::size_t> dialogue_counts, const PartitionConfig& config) {
    std::vector<Part> parts(dialogue_counts.size(), Part::A);
    std::vector<std::size_t> regular;
    for (std::size_t i = 0; i < dialogue_counts.size(); ++i) {
        if (dialogue_counts[i] < config.few_shot_threshold) {
            parts[i] = Part::C;
        } else {
            regular.push_back(i);
        }
    }
    if (regular.size() < config.n_source + config.n_regular_target) {
        throw DataError("partition: " + std::to_string(regular.size()) + " regular personas (>= " +
                        std::to_string(config.few_shot_threshold) + " dialogues) but " +
                        std::to_string(config.n_source) + " source + " + std::to_string(config.n_regular_target) +
                        " target personas requested");
    }
    Rng rng(derive_seed(config.seed, "partition"));
    rng.shuffle(regular);
    for (std::size_t i = 0; i < config.n_regular_target; ++i) parts[regular[i]] = Part::B;
    return parts;
}

Split split_dialogues(std::size_t d, std::uint64_t seed) {
    std::size_t train = d * 8 / 10, valid = d / 10, test = d / 10;
    std::size_t left = d - train - valid - test;
    if (d >= 3) {
        if (left > 0 && test == 0) {
            ++test;
            --left;
        }
        if (left > 0 && valid == 0) {
            ++valid;
            --left;
        }
    }
    train += left;
    if (d >= 3) {
        if (test == 0) {
            ++test;
            --train;
        }
        if (valid == 0) {
            ++valid;
            --train;
        }
    }
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train));
    s.valid.assign(idx.begin() + static_cast<std::ptrdiff_t>(train),
                   idx.begin() + static_cast<std::ptrdiff_t>(train + valid));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(train + valid), idx.end());
    for (auto* v : {&s.train, &s.valid, &s.test}) std::sort(v->begin(), v->end());
    s.degenerate = s.valid.empty() || s.test.empty();
    return s;
}

PersonaDataset build_dataset(std::vector<Persona> personas, const PartitionConfig& config) {
    PersonaDataset ds;
    std::vector<std::size_t> counts;
    for (const auto& p : personas) {
        if (p.dialogues.empty()) throw DataError("persona '" + p.id + "' has no dialogues");
        counts.push_back(p.dialogues.size());
    }
    ds.parts = partition_personas(counts, config);
    for (const auto& p : personas) ds.splits.push_back(split_dialogues(p.dialogues.size(), derive_seed(config.seed, p.id)));
    ds.personas = std::move(personas);
    return ds;
}

std::vector<double> temperature_mix(std::span<const double> counts, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("temperature must be positive and finite");
    if (counts.empty()) return {};
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (!(counts[i] > 0.0)) {
            throw std::invalid_argument("temperature_mix: count " + std::to_string(i) +
                                        " is not positive (filter personas without training dialogues first)");
        }
        total += counts[i];
    }
    std::vector<double> logq(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) logq[i] = std::log(counts[i] / total) / temperature;
    const double mx = *std::max_element(logq.begin(), logq.end());
    double z = 0.0;
    for (double& v : logq) z += (v = std::exp(v - mx));
    for (double& v : logq) v /= z;
    return logq;
}

BatchSampler::BatchSampler(std::vector<std::size_t> personas, std::vector<std::vector<std::size_t>> candidates,
                           std::vector<double> probabilities, std::uint64_t seed)
    : personas_(std::move(personas)), candidates_(std::move(candidates)), rng_(seed) {
    if (personas_.empty()) throw DataError("sampler: no personas");
    if (candidates_.size() != personas_.size() || probabilities.size() != personas_.size())
        throw std::invalid_argument("sampler: personas, candidates and probabilities differ in length");
    double acc = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (!(probabilities[i] >= 0.0)) throw std::invalid_argument("sampler: negative probability");
        if (candidates_[i].empty() && probabilities[i] > 0.0)
            throw DataError("sampler: persona slot " + std::to_string(i) + " has no dialogues");
        acc += probabilities[i];
        cumulative_.push_back(acc);
    }
    if (std::abs(acc - 1.0) > 1e-9) throw std::invalid_argument("sampler: probabilities sum to " + std::to_string(acc));
    cumulative_.back() = 1.0;
}

std::size_t BatchSampler::draw_slot() {
    const double u = rng_.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t slot = static_cast<std::size_t>(it - cumulative_.begin());
    if (slot >= cumulative_.size()) slot = cumulative_.size() - 1;
    return slot;
}

std::vector<DialogueRef> BatchSampler::next(std::size_t batch_size) {
    std::vector<DialogueRef> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t slot = draw_slot();
        const auto& c = candidates_[slot];
        out.push_back({personas_[slot], c[rng_.below(c.size())]});
    }
    return out;
}

}  // namespace pkt::data
