#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pkt/core/errors.hpp"
#include "pkt/core/fs.hpp"
#include "pkt/data/partition.hpp"
#include "pkt/data/personachat.hpp"
#include "pkt/data/synthetic.hpp"
#include "pkt/eval/judge.hpp"
#include "pkt/eval/params.hpp"
#include "pkt/eval/report.hpp"
#include "pkt/lm/beam_search.hpp"
#include "pkt/lm/checkpoint.hpp"
#include "pkt/lm/encoding.hpp"
#include "pkt/lm/trainer.hpp"
#include "pkt/pipeline/backbone.hpp"
#include "pkt/pipeline/store.hpp"
#include "pkt/pipeline/training.hpp"

namespace fs = std::filesystem;
using namespace pkt;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// ---- config file ----------------------------------------------------------

/// Flat key=value lines ('#' comments) become "--key value" arguments placed
/// before the command-line flags; options keep their last value, so flags win.
std::vector<std::string> config_args(const std::string& path) {
    std::istringstream in(fsutil::read_text(path));
    std::vector<std::string> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(n) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw UsageError(path + ":" + std::to_string(n) + ": empty key");
        if (key == "config") throw UsageError(path + ":" + std::to_string(n) + ": nested config files are not supported");
        if (value == "true") {
            out.push_back("--" + key);
        } else if (value != "false") {
            out.push_back("--" + key);
            out.push_back(value);
        }
    }
    return out;
}

std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::optional<std::string> path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (!path || args.size() < 2) return args;
    const auto extra = config_args(*path);
    args.insert(args.begin() + 2, extra.begin(), extra.end());
    return args;
}

// ---- shared loading -------------------------------------------------------

data::PersonaDataset load_dataset(const std::string& corpus, const std::string& split) {
    auto personas = data::load_corpus(corpus);
    const std::string text = fsutil::read_text(split);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("split manifest " + split + ": " + e.what());
    }
    return data::apply_manifest(std::move(personas), manifest);
}

void write_json(const std::string& path, const nlohmann::json& j) {
    fsutil::atomic_write(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::size_t context_budget(const lm::BackboneModel& m, std::size_t prefix_len) {
    const std::size_t ctx = m.config().max_context;
    if (prefix_len >= ctx) throw UsageError("prefix length " + std::to_string(prefix_len) + " leaves no room in context " + std::to_string(ctx));
    return ctx - prefix_len;
}

// ---- options shared by several commands -----------------------------------

struct Common {
    std::string corpus, split, backbone, store, config;
    std::uint64_t seed = 0;
};

void add_seed(CLI::App* c, Common& o) {
    c->add_option("--seed", o.seed, "Random seed (falls back to $PKT_SEED)")->envname("PKT_SEED");
    c->add_option("--config", o.config, "Flat key=value file; command-line flags win");
}

struct PrefixOpts {
    std::uint32_t length = 8;
    std::uint32_t hidden = 512;
    double init_std = 0.02;
};

void add_prefix(CLI::App* c, PrefixOpts& p) {
    c->add_option("--prefix-len", p.length, "Prefix length L")->check(CLI::PositiveNumber);
    c->add_option("--hidden", p.hidden, "Reparametrization MLP width")->check(CLI::PositiveNumber);
    c->add_option("--init-std", p.init_std, "Std of the random prefix initialization")->check(CLI::NonNegativeNumber);
}

// ---- commands --------------------------------------------------------------

struct GenCorpusOpts {
    Common c;
    std::string out, generic_out;
    std::vector<std::string> personachat;
    data::SyntheticSpec spec;
    std::size_t generic = 1500;
    std::size_t generic_exchanges = 6;
    double generic_small_talk = 0.1;
};

int cmd_gen_corpus(GenCorpusOpts& o) {
    if (o.out.empty() && o.generic_out.empty()) throw UsageError("give --out, --generic-out or both");
    if (o.out.empty() && !o.personachat.empty()) throw UsageError("--personachat needs --out");
    if (!o.personachat.empty()) {
        data::PersonaChatConverter conv;
        for (const auto& f : o.personachat) {
            std::ifstream in(f);
            if (!in) throw NotFoundError("persona-chat file " + f + ": cannot open");
            conv.add(in, f);
        }
        const auto personas = conv.finish();
        data::save_corpus(o.out, personas);
        std::cout << nlohmann::json{{"personas", personas.size()}, {"dialogues", conv.dialogue_count()}, {"out", o.out}}.dump()
                  << '\n';
        return 0;
    }
    o.spec.seed = o.c.seed;
    nlohmann::json summary{{"seed", o.c.seed}};
    if (!o.out.empty()) {
        const auto personas = data::generate_synthetic(o.spec);
        data::save_corpus(o.out, personas);
        summary["personas"] = personas.size();
        summary["out"] = o.out;
    }
    if (!o.generic_out.empty()) {
        data::SyntheticSpec g = o.spec;
        g.exchanges = o.generic_exchanges;
        g.small_talk_probability = o.generic_small_talk;
        const auto generic = data::generate_generic(g, o.generic, o.c.seed);
        data::save_corpus(o.generic_out, generic);
        summary["generic"] = generic.size();
        summary["generic_out"] = o.generic_out;
    }
    std::cout << summary.dump() << '\n';
    return 0;
}

struct SplitOpts {
    Common c;
    std::string out;
    data::PartitionConfig part;
};

int cmd_split(SplitOpts& o) {
    o.part.seed = o.c.seed;
    const auto ds = data::build_dataset(data::load_corpus(o.c.corpus), o.part);
    write_json(o.out, data::manifest_json(ds, o.c.seed, o.part.few_shot_threshold));
    std::map<char, std::size_t> counts;
    for (auto p : ds.parts) ++counts[data::part_letter(p)];
    std::cout << nlohmann::json{{"A", counts['A']}, {"B", counts['B']}, {"C", counts['C']}, {"out", o.out}}.dump() << '\n';
    return 0;
}

struct PretrainOpts {
    Common c;
    std::string out;
    std::vector<std::string> vocab_corpus;
    lm::BackboneConfig arch{.n_layers = 2};
    lm::LmTrainConfig train{.epochs = 14, .batch_size = 8, .lr = 2e-3};
    std::size_t valid_every = 10;
    std::size_t max_vocab = 0;
    double grounding_df = 0.5;
};

void print_lm_epoch(const lm::LmEpochRecord& r) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    std::cerr << nlohmann::json{{"epoch", r.epoch}, {"train_loss", num(r.train_loss)}, {"valid_loss", num(r.valid_loss)}, {"lr", r.lr}}
                     .dump()
              << '\n';
}

int cmd_pretrain(PretrainOpts& o) {
    const auto corpus = data::load_corpus(o.c.corpus);
    auto texts = pipeline::corpus_texts(corpus);
    for (const auto& f : o.vocab_corpus) {
        const auto extra = pipeline::corpus_texts(data::load_corpus(f));
        texts.insert(texts.end(), extra.begin(), extra.end());
    }
    lm::Tokenizer tok = lm::Tokenizer::build(texts, o.max_vocab);
    o.arch.vocab_size = static_cast<std::uint32_t>(tok.size());
    try {
        o.arch.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    lm::BackboneModel model = lm::BackboneModel::initialize(o.arch, std::move(tok), o.c.seed);
    std::vector<lm::TokenSeq> train, valid;
    pipeline::holdout(pipeline::encode_pretraining(model.tokenizer(), corpus, o.arch.max_context), o.valid_every, train,
                      valid);
    if (o.grounding_df > 0.0) {
        auto copies = pipeline::grounding_copies(train, o.grounding_df);
        train.insert(train.end(), std::make_move_iterator(copies.begin()), std::make_move_iterator(copies.end()));
    }
    o.train.seed = o.c.seed;
    lm::train_backbone(model, train, valid, o.train, print_lm_epoch);
    lm::save_backbone(o.out, model);
    std::cout << nlohmann::json{{"out", o.out}, {"params", model.parameter_count()}, {"vocab", model.tokenizer().size()},
                                {"digest", to_hex(model.digest())}}
                     .dump()
              << '\n';
    return 0;
}

struct FinetuneOpts {
    Common c;
    std::string out;
    lm::LmTrainConfig train{.epochs = 3, .batch_size = 8, .lr = 1e-3};
};

int cmd_finetune(FinetuneOpts& o) {
    const auto ds = load_dataset(o.c.corpus, o.c.split);
    lm::BackboneModel model = lm::load_backbone(o.c.backbone);
    const auto part_a = pipeline::encode_part(model.tokenizer(), ds, data::Part::A, model.config().max_context);
    std::vector<lm::TokenSeq> train, valid;
    pipeline::pool_part(part_a, train, valid);
    o.train.seed = o.c.seed;
    lm::train_backbone(model, train, valid, o.train, print_lm_epoch);
    lm::save_backbone(o.out, model);
    std::cout << nlohmann::json{{"out", o.out}, {"digest", to_hex(model.digest())}}.dump() << '\n';
    return 0;
}

void print_epoch(const pipeline::EpochLog& e) { std::cerr << pipeline::epoch_json(e).dump() << '\n'; }

struct SourceOpts {
    Common c;
    std::string strategy = "base";
    std::string key = pipeline::PrefixStore::kSourceKey;
    std::string log_out;
    PrefixOpts prefix;
    pipeline::SourceTrainConfig source;
    pipeline::MetaTrainConfig meta;
    double temperature = 1.0;
    bool adamw_inner = false;
};

int cmd_train_source(SourceOpts& o) {
    const auto ds = load_dataset(o.c.corpus, o.c.split);
    const lm::BackboneModel model = lm::load_backbone(o.c.backbone);
    const auto part_a =
        pipeline::encode_part(model.tokenizer(), ds, data::Part::A, context_budget(model, o.prefix.length));
    const lm::PrefixParams init =
        pipeline::init_prefix(model, {o.prefix.length, o.prefix.hidden, o.prefix.init_std}, o.c.seed);
    o.source.seed = o.c.seed;
    o.meta.seed = o.c.seed;
    o.meta.max_epochs = o.source.max_epochs;
    o.meta.patience = o.source.patience;
    o.meta.inner = o.adamw_inner ? pipeline::InnerOptimizer::AdamW : pipeline::InnerOptimizer::Sgd;
    auto cb = [](const pipeline::EpochLog& e, const lm::PrefixParams&) { print_epoch(e); };

    pipeline::SourceResult res;
    nlohmann::json config;
    if (o.strategy == "base") {
        res = pipeline::train_source_base(model, part_a, init, o.source, cb);
    } else if (o.strategy == "temperature") {
        res = pipeline::train_source_temperature(model, part_a, init, o.source, o.temperature, cb);
        config["temperature"] = o.temperature;
    } else if (o.strategy == "ppreptile") {
        res = pipeline::train_source_ppreptile(model, part_a, init, o.meta, cb);
        config.update({{"alpha", o.meta.alpha},
                       {"beta", o.meta.beta},
                       {"k_inner", o.meta.k_inner},
                       {"n_personas", o.meta.n_personas},
                       {"b_in", o.meta.b_in},
                       {"inner", o.adamw_inner ? "adamw" : "sgd"},
                       {"iterations", o.meta.iterations}});
    } else {
        throw UsageError("--strategy must be base, temperature or ppreptile (got '" + o.strategy + "')");
    }
    if (o.strategy != "ppreptile") config.update({{"lr", o.source.lr}, {"batch_size", o.source.batch_size}});
    config["max_epochs"] = o.source.max_epochs;
    config["patience"] = o.source.patience;
    config.update({{"prefix_len", o.prefix.length}, {"hidden", o.prefix.hidden}, {"init_std", o.prefix.init_std}});

    const auto& best = res.log.at(res.best_epoch);
    nlohmann::json meta{{"strategy", o.strategy},
                        {"config", config},
                        {"seed", o.c.seed},
                        {"metrics",
                         {{"best_epoch", res.best_epoch},
                          {"valid_loss", std::isfinite(best.valid_loss) ? nlohmann::json(best.valid_loss) : nlohmann::json(nullptr)},
                          {"epochs_run", res.log.size() - 1}}}};
    pipeline::PrefixStore store(o.c.store, model.digest());
    store.put(o.key, res.prefix, meta, true);
    if (!o.log_out.empty()) pipeline::write_training_log(o.log_out, res.log);
    std::cout << nlohmann::json{{"key", o.key}, {"store", o.c.store}, {"best_epoch", res.best_epoch}}.dump() << '\n';
    return 0;
}

struct PersonaOpts {
    Common c;
    std::string persona, all_part, init = "source", source_store, source_key = pipeline::PrefixStore::kSourceKey;
    std::string log_dir;
    PrefixOpts prefix;
    pipeline::PersonaTrainConfig train{.lr = 3e-3};
    std::size_t jobs = 1;
};

int cmd_train_persona(PersonaOpts& o) {
    if (o.persona.empty() == o.all_part.empty()) throw UsageError("give exactly one of --persona or --all-part");
    const auto ds = load_dataset(o.c.corpus, o.c.split);
    const lm::BackboneModel model = lm::load_backbone(o.c.backbone);
    pipeline::PrefixStore store(o.c.store, model.digest());

    lm::PrefixParams init;
    if (o.init == "source") {
        const std::string src_dir = o.source_store.empty() ? o.c.store : o.source_store;
        init = pipeline::PrefixStore(src_dir, model.digest()).load_reparam(o.source_key);
    } else if (o.init == "random") {
        init = pipeline::init_prefix(model, {o.prefix.length, o.prefix.hidden, o.prefix.init_std}, o.c.seed);
    } else {
        throw UsageError("--init must be source or random (got '" + o.init + "')");
    }

    std::vector<std::size_t> idx;
    if (!o.persona.empty()) {
        idx.push_back(ds.index_of(o.persona));
    } else {
        data::Part part;
        try {
            part = data::parse_part(o.all_part);
        } catch (const std::exception&) {
            throw UsageError("--all-part must be A, B or C (got '" + o.all_part + "')");
        }
        idx = ds.part_indices(part);
    }
    const std::size_t budget = context_budget(model, init.length);
    std::vector<pipeline::EncodedPersona> enc;
    for (std::size_t i : idx) enc.push_back(pipeline::encode_persona(model.tokenizer(), ds.personas[i], ds.splits[i], budget));

    o.train.seed = o.c.seed;
    const nlohmann::json config{{"lr", o.train.lr},
                                {"batch_size", o.train.batch_size},
                                {"max_epochs", o.train.max_epochs},
                                {"patience", o.train.patience},
                                {"init", o.init},
                                {"prefix_len", init.length},
                                {"hidden", init.hidden}};
    nlohmann::json summary = nlohmann::json::array();
    pipeline::train_personalized_all(model, init, enc, o.train, o.jobs, [&](std::size_t i, const pipeline::PersonaResult& r) {
        const auto& best = r.log.at(r.best_epoch);
        const nlohmann::json meta{
            {"strategy", "personalized"},
            {"config", config},
            {"seed", o.c.seed},
            {"persona_id", enc[i].id},
            {"metrics",
             {{"best_epoch", r.best_epoch},
              {"valid_loss", std::isfinite(best.valid_loss) ? nlohmann::json(best.valid_loss) : nlohmann::json(nullptr)},
              {"no_valid_split", r.no_valid_split}}}};
        store.put(enc[i].id, r.prefix, meta);
        if (!o.log_dir.empty()) pipeline::write_training_log((fs::path(o.log_dir) / (enc[i].id + ".jsonl")).string(), r.log);
        std::cerr << nlohmann::json{{"persona", enc[i].id}, {"best_epoch", r.best_epoch}}.dump() << '\n';
    });
    for (const auto& e : enc) summary.push_back(e.id);
    std::cout << nlohmann::json{{"trained", summary}, {"store", o.c.store}}.dump() << '\n';
    return 0;
}

struct GenerateOpts {
    Common c;
    std::string persona;
    std::vector<std::string> turns;
    std::size_t beam = 5, max_len = 20;
};

int cmd_generate(GenerateOpts& o) {
    const lm::BackboneModel model = lm::load_backbone(o.c.backbone);
    data::Dialogue history;
    for (std::size_t i = 0; i < o.turns.size(); ++i) history.push_back({i % 2 == 0 ? 1 : 2, o.turns[i]});
    std::unique_ptr<eval::BackboneGenerator> gen;
    if (o.c.store.empty()) {
        gen = std::make_unique<eval::BackboneGenerator>(model, o.beam, o.max_len);
    } else {
        if (o.persona.empty()) throw UsageError("--persona is required with --store");
        pipeline::PrefixStore store(o.c.store, model.digest());
        std::map<std::string, lm::DeployedPrefix> m{{o.persona, store.load(o.persona)}};
        gen = std::make_unique<eval::BackboneGenerator>(model, std::move(m), o.beam, o.max_len);
    }
    std::cout << gen->respond(o.persona, history) << '\n';
    return 0;
}

struct EvaluateOpts {
    Common c;
    std::string part = "B", setting, report_out, judge_cmd;
    std::size_t beam = 5, max_len = 20, jobs = 1;
    bool details = false;
};

int cmd_evaluate(EvaluateOpts& o) {
    const auto ds = load_dataset(o.c.corpus, o.c.split);
    const lm::BackboneModel model = lm::load_backbone(o.c.backbone);
    data::Part part;
    try {
        part = data::parse_part(o.part);
    } catch (const std::exception&) {
        throw UsageError("--part must be A, B or C (got '" + o.part + "')");
    }
    std::unique_ptr<eval::ConsistencyJudge> judge;
    if (o.judge_cmd.empty()) {
        judge = std::make_unique<eval::KeywordJudge>(data::default_slots());
    } else {
        judge = std::make_unique<eval::SubprocessJudge>(split_words(o.judge_cmd));
    }

    std::unique_ptr<eval::BackboneGenerator> gen;
    eval::ParamAccounting params;
    if (o.c.store.empty()) {
        gen = std::make_unique<eval::BackboneGenerator>(model, o.beam, o.max_len);
        const auto n = model.parameter_count();
        params = {n, n, 1.0};
    } else {
        pipeline::PrefixStore store(o.c.store, model.digest());
        std::map<std::string, lm::DeployedPrefix> prefixes;
        std::uint32_t length = 0;
        for (std::size_t i : ds.part_indices(part)) {
            const auto& id = ds.personas[i].id;
            if (!store.contains(id)) continue;
            prefixes.emplace(id, store.load(id));
            length = prefixes.at(id).length;
        }
        params = eval::param_accounting(model.config().n_layers, model.config().d_model, length, model.parameter_count());
        gen = std::make_unique<eval::BackboneGenerator>(model, std::move(prefixes), o.beam, o.max_len);
    }
    const std::string setting = o.setting.empty() ? (o.c.store.empty() ? "backbone" : "prefix") : o.setting;
    const auto report = eval::evaluate_setting(setting, ds, part, *gen, *judge, params, o.jobs);
    const auto j = report.to_json(o.details);
    if (!o.report_out.empty()) write_json(o.report_out, j);
    std::cout << j.dump() << '\n';
    return 0;
}

struct ParamsOpts {
    std::uint64_t layers = 0, dmodel = 0, prefix_len = 0, backbone_params = 0, personas = 0;
};

int cmd_params(const ParamsOpts& o) {
    eval::ParamAccounting p;
    try {
        p = eval::param_accounting(o.layers, o.dmodel, o.prefix_len, o.backbone_params);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    std::cout << nlohmann::json{{"deployed", p.deployed},
                                {"backbone", p.backbone},
                                {"ratio", p.ratio},
                                {"personas", o.personas},
                                {"store_total", p.store_total(o.personas)}}
                     .dump()
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persona prefix training on a frozen transformer"};
    app.require_subcommand(1);
    app.name("pkt");
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
    int rc = 0;

    GenCorpusOpts gc;
    auto* c_gen = app.add_subcommand("gen-corpus", "Write a synthetic persona corpus (or convert persona-chat text)");
    add_seed(c_gen, gc.c);
    c_gen->add_option("--out", gc.out, "Corpus JSONL to write");
    c_gen->add_option("--personachat", gc.personachat, "Convert these persona-chat text files instead")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    c_gen->add_option("--regular", gc.spec.regular_personas, "Regular personas (Parts A and B)");
    c_gen->add_option("--few-shot", gc.spec.few_shot_personas, "Few-shot personas (Part C)");
    c_gen->add_option("--min-dialogues", gc.spec.min_dialogues);
    c_gen->add_option("--max-dialogues", gc.spec.max_dialogues);
    c_gen->add_option("--few-shot-dialogues", gc.spec.few_shot_dialogues);
    c_gen->add_option("--exchanges", gc.spec.exchanges)->check(CLI::PositiveNumber);
    c_gen->add_option("--small-talk", gc.spec.small_talk_probability)->check(CLI::Range(0.0, 1.0));
    c_gen->add_option("--generic-out", gc.generic_out, "Also write a grounded pretraining corpus here");
    c_gen->add_option("--generic", gc.generic, "Dialogues in the pretraining corpus");
    c_gen->add_option("--generic-exchanges", gc.generic_exchanges)->check(CLI::PositiveNumber);
    c_gen->add_option("--generic-small-talk", gc.generic_small_talk)->check(CLI::Range(0.0, 1.0));
    c_gen->callback([&] { rc = cmd_gen_corpus(gc); });

    SplitOpts sp;
    auto* c_split = app.add_subcommand("split", "Partition personas into Parts A/B/C and split dialogues 8:1:1");
    add_seed(c_split, sp.c);
    c_split->add_option("--corpus", sp.c.corpus)->required();
    c_split->add_option("--out", sp.out, "Split manifest JSON to write")->required();
    c_split->add_option("--few-shot-threshold", sp.part.few_shot_threshold);
    c_split->add_option("--n-source", sp.part.n_source, "Minimum Part A size");
    c_split->add_option("--n-target", sp.part.n_regular_target, "Part B size");
    c_split->callback([&] { rc = cmd_split(sp); });

    PretrainOpts pt;
    auto* c_pre = app.add_subcommand("pretrain", "Pretrain the backbone on a (grounded) chit-chat corpus");
    add_seed(c_pre, pt.c);
    c_pre->add_option("--corpus", pt.c.corpus)->required();
    c_pre->add_option("--out", pt.out, "Checkpoint to write (vocabulary goes next to it)")->required();
    c_pre->add_option("--vocab-corpus", pt.vocab_corpus, "Extra corpora whose words join the vocabulary")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    c_pre->add_option("--max-vocab", pt.max_vocab, "Vocabulary cap (0 = no cap)");
    c_pre->add_option("--layers", pt.arch.n_layers);
    c_pre->add_option("--dmodel", pt.arch.d_model);
    c_pre->add_option("--heads", pt.arch.n_heads);
    c_pre->add_option("--ffn", pt.arch.d_ffn);
    c_pre->add_option("--context", pt.arch.max_context);
    c_pre->add_option("--epochs", pt.train.epochs);
    c_pre->add_option("--batch-size", pt.train.batch_size)->check(CLI::PositiveNumber);
    c_pre->add_option("--lr", pt.train.lr);
    c_pre->add_option("--warmup", pt.train.warmup_fraction)->check(CLI::Range(0.0, 1.0));
    c_pre->add_option("--grounding-df", pt.grounding_df,
                      "Add persona-word-only copies of training dialogues; words must appear in fewer than this "
                      "fraction of descriptions (0 = off)")
        ->check(CLI::Range(0.0, 1.0));
    c_pre->add_option("--max-grad-norm", pt.train.max_grad_norm, "Clip threshold (0 = off)");
    c_pre->add_option("--valid-every", pt.valid_every, "Every n-th sequence is held out (0 = none)");
    c_pre->callback([&] { rc = cmd_pretrain(pt); });

    FinetuneOpts ft;
    auto* c_ft = app.add_subcommand("finetune", "Persona-agnostic full fine-tune of the backbone on Part A");
    add_seed(c_ft, ft.c);
    c_ft->add_option("--corpus", ft.c.corpus)->required();
    c_ft->add_option("--split", ft.c.split)->required();
    c_ft->add_option("--backbone", ft.c.backbone)->required();
    c_ft->add_option("--out", ft.out)->required();
    c_ft->add_option("--epochs", ft.train.epochs);
    c_ft->add_option("--batch-size", ft.train.batch_size)->check(CLI::PositiveNumber);
    c_ft->add_option("--lr", ft.train.lr);
    c_ft->add_option("--max-grad-norm", ft.train.max_grad_norm, "Clip threshold (0 = off)");
    c_ft->callback([&] { rc = cmd_finetune(ft); });

    SourceOpts so;
    auto* c_src = app.add_subcommand("train-source", "Train the persona-agnostic source prefix on Part A");
    add_seed(c_src, so.c);
    add_prefix(c_src, so.prefix);
    c_src->add_option("--corpus", so.c.corpus)->required();
    c_src->add_option("--split", so.c.split)->required();
    c_src->add_option("--backbone", so.c.backbone)->required();
    c_src->add_option("--store", so.c.store)->required();
    c_src->add_option("--key", so.key, "Store key for the result");
    c_src->add_option("--strategy", so.strategy, "base | temperature | ppreptile");
    c_src->add_option("--temperature", so.temperature)->check(CLI::PositiveNumber);
    c_src->add_option("--lr", so.source.lr);
    c_src->add_option("--batch-size", so.source.batch_size)->check(CLI::PositiveNumber);
    c_src->add_option("--epochs", so.source.max_epochs);
    c_src->add_option("--patience", so.source.patience);
    c_src->add_option("--alpha", so.meta.alpha, "Inner rate");
    c_src->add_option("--beta", so.meta.beta, "Outer rate");
    c_src->add_option("--k-inner", so.meta.k_inner);
    c_src->add_option("--n-personas", so.meta.n_personas, "Personas per outer iteration");
    c_src->add_option("--b-in", so.meta.b_in, "Dialogues per inner step")->check(CLI::PositiveNumber);
    c_src->add_option("--iterations", so.meta.iterations, "Outer iterations per epoch (0 = one pass over Part A)");
    c_src->add_flag("--adamw-inner", so.adamw_inner, "AdamW instead of SGD in the inner loop");
    c_src->add_option("--log-out", so.log_out, "Training log (one JSON object per epoch)");
    c_src->callback([&] { rc = cmd_train_source(so); });

    PersonaOpts po;
    auto* c_per = app.add_subcommand("train-persona", "Train personalized prefixes");
    add_seed(c_per, po.c);
    add_prefix(c_per, po.prefix);
    c_per->add_option("--corpus", po.c.corpus)->required();
    c_per->add_option("--split", po.c.split)->required();
    c_per->add_option("--backbone", po.c.backbone)->required();
    c_per->add_option("--store", po.c.store)->required();
    c_per->add_option("--persona", po.persona);
    c_per->add_option("--all-part", po.all_part, "Train every persona of part B or C");
    c_per->add_option("--init", po.init, "source | random");
    c_per->add_option("--source-store", po.source_store, "Store holding the source prefix (default --store)");
    c_per->add_option("--source-key", po.source_key);
    c_per->add_option("--lr", po.train.lr);
    c_per->add_option("--batch-size", po.train.batch_size)->check(CLI::PositiveNumber);
    c_per->add_option("--epochs", po.train.max_epochs);
    c_per->add_option("--patience", po.train.patience);
    c_per->add_option("--jobs", po.jobs)->check(CLI::PositiveNumber);
    c_per->add_option("--log-dir", po.log_dir, "Write <persona>.jsonl training logs here");
    c_per->callback([&] { rc = cmd_train_persona(po); });

    GenerateOpts go;
    auto* c_gen2 = app.add_subcommand("generate", "Decode one response");
    add_seed(c_gen2, go.c);
    c_gen2->add_option("--backbone", go.c.backbone)->required();
    c_gen2->add_option("--store", go.c.store);
    c_gen2->add_option("--persona", go.persona);
    c_gen2->add_option("--turn", go.turns, "History turns, alternating from speaker 1")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    c_gen2->add_option("--beam", go.beam)->check(CLI::PositiveNumber);
    c_gen2->add_option("--max-len", go.max_len)->check(CLI::PositiveNumber);
    c_gen2->callback([&] { rc = cmd_generate(go); });

    EvaluateOpts eo;
    auto* c_eval = app.add_subcommand("evaluate", "Decode a part's test responses and score them");
    add_seed(c_eval, eo.c);
    c_eval->add_option("--corpus", eo.c.corpus)->required();
    c_eval->add_option("--split", eo.c.split)->required();
    c_eval->add_option("--backbone", eo.c.backbone)->required();
    c_eval->add_option("--store", eo.c.store, "Prefix store (omit for the backbone alone)");
    c_eval->add_option("--part", eo.part);
    c_eval->add_option("--setting", eo.setting, "Setting name recorded in the report");
    c_eval->add_option("--report-out", eo.report_out);
    c_eval->add_option("--beam", eo.beam)->check(CLI::PositiveNumber);
    c_eval->add_option("--max-len", eo.max_len)->check(CLI::PositiveNumber);
    c_eval->add_option("--jobs", eo.jobs)->check(CLI::PositiveNumber);
    c_eval->add_option("--judge-cmd", eo.judge_cmd, "External judge program (line-delimited JSON)");
    c_eval->add_flag("--details", eo.details, "Include per-response records");
    c_eval->callback([&] { rc = cmd_evaluate(eo); });

    ParamsOpts pa;
    auto* c_par = app.add_subcommand("params", "Trainable-parameter accounting for a prefix");
    c_par->add_option("--layers", pa.layers)->required();
    c_par->add_option("--dmodel", pa.dmodel)->required();
    c_par->add_option("--prefix-len", pa.prefix_len)->required();
    c_par->add_option("--backbone-params", pa.backbone_params)->required();
    c_par->add_option("--personas", pa.personas, "N for the store total (N+1) * deployed");
    c_par->callback([&] { rc = cmd_params(pa); });

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        args.erase(args.begin());
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        app.parse(args);
        return rc;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
