#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evidex/corpus.hpp"

namespace evidex {

/// Normalized unigrams of a text (lowercased, ASCII punctuation stripped,
/// English articles dropped). Order of appearance is kept so the same value
/// serves multiset and contiguous-subsequence queries.
struct TokenBag {
    std::vector<std::string> tokens;
    std::size_t source_len_words = 0;

    bool empty() const noexcept { return tokens.empty(); }
    std::string joined() const;
};

TokenBag normalize(std::string_view text);

/// Number of whitespace-separated words in the raw text. This is the length
/// unit used by length rewards and compression ratios.
std::size_t word_count(std::string_view text);

double unigram_f1(std::string_view prediction, std::span<const std::string> golds);
int exact_match(std::string_view prediction, std::span<const std::string> golds);
int answer_recall(std::string_view evidence, std::span<const std::string> golds);

/// Total words of passage titles and bodies over evidence words.
/// Throws MetricError when the evidence has no words.
double compression_ratio(std::span<const Passage> passages, std::string_view evidence);

std::size_t passage_word_count(std::span<const Passage> passages);

}  // namespace evidex
