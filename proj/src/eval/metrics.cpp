#include "pkt/eval/metrics.hpp"

#include <cctype>
#include <map>
#include <stdexcept>

namespace pkt::eval {

std::vector<std::string> normalize_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& t, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> m;
    if (t.size() < n) return m;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++m[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
    return m;
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double ngram_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, std::size_t n) {
    if (n == 0) throw std::invalid_argument("ngram_f1: n must be >= 1");
    if (hyp.size() < n || ref.size() < n) return 0.0;
    const auto h = ngram_counts(hyp, n);
    const auto r = ngram_counts(ref, n);
    std::size_t overlap = 0;
    for (const auto& [g, c] : h) {
        const auto it = r.find(g);
        if (it != r.end()) overlap += std::min(c, it->second);
    }
    const double p = static_cast<double>(overlap) / static_cast<double>(hyp.size() - n + 1);
    const double rc = static_cast<double>(overlap) / static_cast<double>(ref.size() - n + 1);
    return harmonic(p, rc);
}

double ngram_f1(std::string_view hyp, std::string_view ref, std::size_t n) {
    return ngram_f1(normalize_tokens(hyp), normalize_tokens(ref), n);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double lcs_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    if (hyp.empty() || ref.empty()) return 0.0;
    const double l = static_cast<double>(lcs_length(hyp, ref));
    return harmonic(l / static_cast<double>(hyp.size()), l / static_cast<double>(ref.size()));
}

double lcs_f1(std::string_view hyp, std::string_view ref) { return lcs_f1(normalize_tokens(hyp), normalize_tokens(ref)); }

}  // namespace pkt::eval
