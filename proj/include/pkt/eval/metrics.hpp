#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pkt::eval {

/// Lowercases, splits every punctuation character into its own token and
/// splits on whitespace.
std::vector<std::string> normalize_tokens(std::string_view text);

/// Clipped multiset n-gram F1; 0 when either side has no n-grams.
double ngram_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, std::size_t n);
double ngram_f1(std::string_view hyp, std::string_view ref, std::size_t n);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Token-level LCS F1; 0 when either side is empty.
double lcs_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);
double lcs_f1(std::string_view hyp, std::string_view ref);

}  // namespace pkt::eval
