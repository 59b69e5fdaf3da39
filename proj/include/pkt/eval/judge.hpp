#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pkt/data/synthetic.hpp"

namespace pkt::eval {

/// Entailment-style judgment of an utterance against one persona sentence:
/// +1 entails, 0 independent, -1 contradicts.
class ConsistencyJudge {
   public:
    virtual ~ConsistencyJudge() = default;
    virtual int judge(const std::string& utterance, const std::string& persona_sentence) const = 0;
};

/// C(u) = sum_j judge(u, p_j), in [-m, m].
int c_score(const std::string& utterance, std::span<const std::string> persona, const ConsistencyJudge& judge);

/// Slot-value keyword matcher for synthetic personas. A persona sentence
/// names one slot value; the utterance scores +1 if it contains that value
/// token, -1 if it contains another value of the same slot, else 0.
class KeywordJudge : public ConsistencyJudge {
   public:
    explicit KeywordJudge(std::vector<data::TraitSlot> slots);
    int judge(const std::string& utterance, const std::string& persona_sentence) const override;

   private:
    std::vector<data::TraitSlot> slots_;
};

/// Runs an external judge program once and exchanges one JSON line per query:
/// request {"utterance": str, "persona_sentence": str}, reply {"label": -1|0|1}.
class SubprocessJudge : public ConsistencyJudge {
   public:
    /// argv[0] is resolved through PATH. Throws DataError if it cannot start.
    explicit SubprocessJudge(std::vector<std::string> argv);
    ~SubprocessJudge() override;
    SubprocessJudge(const SubprocessJudge&) = delete;
    SubprocessJudge& operator=(const SubprocessJudge&) = delete;

    /// Throws DataError on a protocol violation or if the program exits.
    int judge(const std::string& utterance, const std::string& persona_sentence) const override;

   private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pkt::eval
