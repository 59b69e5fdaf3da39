#include "pkt/eval/judge.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <mutex>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "pkt/core/errors.hpp"
#include "pkt/eval/metrics.hpp"

namespace pkt::eval {

int c_score(const std::string& utterance, std::span<const std::string> persona, const ConsistencyJudge& judge) {
    int total = 0;
    for (const auto& p : persona) {
        const int v = judge.judge(utterance, p);
        if (v < -1 || v > 1) throw DataError("judge returned label " + std::to_string(v) + " outside {-1, 0, 1}");
        total += v;
    }
    return total;
}

KeywordJudge::KeywordJudge(std::vector<data::TraitSlot> slots) : slots_(std::move(slots)) {}

int KeywordJudge::judge(const std::string& utterance, const std::string& persona_sentence) const {
    const auto u = normalize_tokens(utterance);
    const auto p = normalize_tokens(persona_sentence);
    auto has = [](const std::vector<std::string>& toks, const std::string& w) {
        return std::find(toks.begin(), toks.end(), w) != toks.end();
    };
    for (const auto& slot : slots_) {
        for (const auto& value : slot.values) {
            if (!has(p, value)) continue;
            if (has(u, value)) return 1;
            for (const auto& other : slot.values)
                if (other != value && has(u, other)) return -1;
            return 0;
        }
    }
    return 0;
}

struct SubprocessJudge::Impl {
    pid_t pid = -1;
    FILE* to = nullptr;
    FILE* from = nullptr;
    std::string name;
    mutable std::mutex mu;
};

SubprocessJudge::SubprocessJudge(std::vector<std::string> argv) : impl_(std::make_unique<Impl>()) {
    if (argv.empty()) throw DataError("judge command is empty");
    impl_->name = argv[0];
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) throw DataError("judge: pipe() failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw DataError("judge: fork() failed");
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        std::vector<char*> args;
        for (auto& a : argv) args.push_back(a.data());
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    std::signal(SIGPIPE, SIG_IGN);
    impl_->pid = pid;
    impl_->to = ::fdopen(in_pipe[1], "w");
    impl_->from = ::fdopen(out_pipe[0], "r");
}

SubprocessJudge::~SubprocessJudge() {
    if (impl_->to) std::fclose(impl_->to);
    if (impl_->from) std::fclose(impl_->from);
    if (impl_->pid > 0) {
        int status = 0;
        ::waitpid(impl_->pid, &status, 0);
    }
}

int SubprocessJudge::judge(const std::string& utterance, const std::string& persona_sentence) const {
    std::lock_guard lock(impl_->mu);
    const std::string req = nlohmann::json{{"utterance", utterance}, {"persona_sentence", persona_sentence}}.dump() + "\n";
    if (std::fputs(req.c_str(), impl_->to) < 0 || std::fflush(impl_->to) != 0)
        throw DataError("judge '" + impl_->name + "': cannot write request (program exited?)");
    std::string line;
    int c;
    while ((c = std::fgetc(impl_->from)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
    if (line.empty() && c == EOF) throw DataError("judge '" + impl_->name + "': no reply (program exited?)");
    try {
        const auto j = nlohmann::json::parse(line);
        const int label = j.at("label").get<int>();
        if (label < -1 || label > 1) throw DataError("judge '" + impl_->name + "': label out of range: " + line);
        return label;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("judge '" + impl_->name + "': malformed reply '" + line + "'");
    }
}

}  // namespace pkt::eval
