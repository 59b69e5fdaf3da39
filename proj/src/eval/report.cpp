#include "pkt/eval/report.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "pkt/core/errors.hpp"
#include "pkt/eval/metrics.hpp"
#include "pkt/lm/beam_search.hpp"
#include "pkt/lm/encoding.hpp"

namespace pkt::eval {

BackboneGenerator::BackboneGenerator(const lm::BackboneModel& model, std::size_t beam, std::size_t max_len)
    : model_(model), beam_(beam), max_len_(max_len) {}

BackboneGenerator::BackboneGenerator(const lm::BackboneModel& model,
                                     std::map<std::string, lm::DeployedPrefix> prefixes, std::size_t beam,
                                     std::size_t max_len)
    : model_(model), prefixes_(std::move(prefixes)), beam_(beam), max_len_(max_len) {}

bool BackboneGenerator::has_persona(const std::string& persona_id) const {
    return !prefixes_ || prefixes_->contains(persona_id);
}

std::string BackboneGenerator::respond(const std::string& persona_id, std::span<const data::Turn> history) const {
    const lm::DeployedPrefix* prefix = nullptr;
    if (prefixes_) {
        const auto it = prefixes_->find(persona_id);
        if (it == prefixes_->end()) throw NotFoundError("no prefix for persona '" + persona_id + "'");
        prefix = &it->second;
    }
    const std::size_t context = model_.config().max_context - (prefix ? prefix->length : 0);
    const auto ids = lm::encode_history(model_.tokenizer(), history, context, max_len_);
    return lm::beam_decode(model_, prefix, ids, beam_, max_len_);
}

nlohmann::json EvalReport::to_json(bool with_details) const {
    nlohmann::json j;
    j["setting"] = setting;
    j["part"] = std::string(1, data::part_letter(part));
    if (metrics) {
        j["metrics"] = {{"f1_1", metrics->f1_1}, {"f1_2", metrics->f1_2}, {"f1_lcs", metrics->f1_lcs},
                        {"c_mean", metrics->c_mean}};
    } else {
        j["metrics"] = {{"f1_1", nullptr}, {"f1_2", nullptr}, {"f1_lcs", nullptr}, {"c_mean", nullptr}};
    }
    j["params"] = {{"deployed", params.deployed}, {"backbone", params.backbone}, {"ratio", params.ratio}};
    j["samples"] = samples;
    j["skipped_personas"] = skipped.size();
    j["skipped_ids"] = skipped;
    j["aggregation"] = {{"f1", "mean of per-response F1"}, {"c", "mean of per-response C score"}};
    if (with_details) {
        nlohmann::json d = nlohmann::json::array();
        for (const auto& s : details) {
            d.push_back({{"persona_id", s.persona_id}, {"dialogue", s.dialogue}, {"turn", s.turn},
                         {"hypothesis", s.hypothesis}, {"reference", s.reference}, {"f1_1", s.f1_1},
                         {"f1_2", s.f1_2}, {"f1_lcs", s.f1_lcs}, {"c", s.c}});
        }
        j["details"] = std::move(d);
    }
    return j;
}

namespace {

std::vector<EvalSample> evaluate_persona(const data::PersonaDataset& ds, std::size_t pi, const ResponseGenerator& gen,
                                         const ConsistencyJudge& judge) {
    const data::Persona& p = ds.personas[pi];
    std::vector<EvalSample> out;
    for (std::size_t di : ds.splits[pi].test) {
        const data::Dialogue& d = p.dialogues[di];
        for (std::size_t t = 0; t < d.size(); ++t) {
            if (d[t].speaker != 2) continue;
            EvalSample s;
            s.persona_id = p.id;
            s.dialogue = di;
            s.turn = t;
            s.reference = d[t].text;
            s.hypothesis = gen.respond(p.id, std::span(d).first(t));
            const auto h = normalize_tokens(s.hypothesis);
            const auto r = normalize_tokens(s.reference);
            s.f1_1 = ngram_f1(h, r, 1);
            s.f1_2 = ngram_f1(h, r, 2);
            s.f1_lcs = lcs_f1(h, r);
            s.c = c_score(s.hypothesis, p.description, judge);
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

EvalReport evaluate_setting(const std::string& setting, const data::PersonaDataset& ds, data::Part part,
                            const ResponseGenerator& gen, const ConsistencyJudge& judge, const ParamAccounting& params,
                            std::size_t jobs) {
    if (!ds.partitioned() && !ds.personas.empty()) throw DataError("evaluate: dataset is not partitioned");
    EvalReport rep;
    rep.setting = setting;
    rep.part = part;
    rep.params = params;

    std::vector<std::size_t> todo;
    for (std::size_t i : ds.part_indices(part)) {
        if (gen.has_persona(ds.personas[i].id)) {
            todo.push_back(i);
        } else {
            rep.skipped.push_back(ds.personas[i].id);
        }
    }
    std::sort(todo.begin(), todo.end(), [&](std::size_t a, std::size_t b) { return ds.personas[a].id < ds.personas[b].id; });
    std::sort(rep.skipped.begin(), rep.skipped.end());

    std::vector<std::vector<EvalSample>> results(todo.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t k; (k = next++) < todo.size();) {
            try {
                results[k] = evaluate_persona(ds, todo[k], gen, judge);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, todo.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    if (error) std::rethrow_exception(error);

    EvalMetrics m;
    for (auto& r : results) {
        for (auto& s : r) {
            m.f1_1 += s.f1_1;
            m.f1_2 += s.f1_2;
            m.f1_lcs += s.f1_lcs;
            m.c_mean += s.c;
            rep.details.push_back(std::move(s));
        }
    }
    rep.samples = rep.details.size();
    if (rep.samples > 0) {
        const double n = static_cast<double>(rep.samples);
        m.f1_1 /= n;
        m.f1_2 /= n;
        m.f1_lcs /= n;
        m.c_mean /= n;
        rep.metrics = m;
    }
    return rep;
}

}  // namespace pkt::eval
