#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pkt/data/dataset.hpp"
#include "pkt/eval/judge.hpp"
#include "pkt/eval/params.hpp"
#include "pkt/lm/model.hpp"

namespace pkt::eval {

/// Produces a response for one persona given a dialogue history.
class ResponseGenerator {
   public:
    virtual ~ResponseGenerator() = default;
    /// False when the persona has no prefix; such personas are skipped.
    virtual bool has_persona(const std::string& persona_id) const = 0;
    /// Must be safe to call concurrently.
    virtual std::string respond(const std::string& persona_id, std::span<const data::Turn> history) const = 0;
};

/// Beam-search decoding on a frozen backbone with an optional prefix per
/// persona. A generator without a prefix map is a no-prefix baseline and
/// covers every persona.
class BackboneGenerator : public ResponseGenerator {
   public:
    BackboneGenerator(const lm::BackboneModel& model, std::size_t beam, std::size_t max_len);
    BackboneGenerator(const lm::BackboneModel& model, std::map<std::string, lm::DeployedPrefix> prefixes,
                      std::size_t beam, std::size_t max_len);

    bool has_persona(const std::string& persona_id) const override;
    std::string respond(const std::string& persona_id, std::span<const data::Turn> history) const override;

   private:
    const lm::BackboneModel& model_;
    std::optional<std::map<std::string, lm::DeployedPrefix>> prefixes_;
    std::size_t beam_, max_len_;
};

struct EvalSample {
    std::string persona_id;
    std::size_t dialogue = 0;
    std::size_t turn = 0;
    std::string hypothesis, reference;
    double f1_1 = 0, f1_2 = 0, f1_lcs = 0;
    int c = 0;
};

struct EvalMetrics {
    double f1_1 = 0, f1_2 = 0, f1_lcs = 0, c_mean = 0;
};

struct EvalReport {
    std::string setting;
    data::Part part = data::Part::B;
    std::optional<EvalMetrics> metrics;  // empty when there are no samples
    ParamAccounting params;
    std::size_t samples = 0;
    std::vector<std::string> skipped;
    std::vector<EvalSample> details;  // ordered by persona id, dialogue, turn

    /// Report JSON; null metrics when samples == 0. `with_details` adds the
    /// per-response records.
    nlohmann::json to_json(bool with_details = false) const;
};

/// Decodes every speaker-2 turn of every test dialogue of the part's personas
/// and scores it. Personas are processed by `jobs` threads; results merge in
/// persona-id order, so the report does not depend on `jobs`.
EvalReport evaluate_setting(const std::string& setting, const data::PersonaDataset& ds, data::Part part,
                            const ResponseGenerator& gen, const ConsistencyJudge& judge, const ParamAccounting& params,
                            std::size_t jobs = 1);

}  // namespace pkt::eval
