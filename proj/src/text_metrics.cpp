#include "evidex/text_metrics.hpp"

#include <algorithm>
#include <map>

#include "evidex/errors.hpp"

namespace evidex {
namespace {

bool is_ascii_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

void require_golds(std::span<const std::string> golds) {
    if (golds.empty()) {
        throw MetricError("gold answer list is empty");
    }
}

}  // namespace

std::string TokenBag::joined() const {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += t;
    }
    return out;
}

std::size_t word_count(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

TokenBag normalize(std::string_view text) {
    TokenBag bag;
    bag.source_len_words = word_count(text);

    // Punctuation is deleted rather than split on, so "don't" -> "dont".
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !is_article(current)) {
            bag.tokens.push_back(current);
        }
        current.clear();
    };
    for (unsigned char c : text) {
        if (is_space(c)) {
            flush();
        } else if (!is_ascii_punct(c)) {
            current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
        }
    }
    flush();
    return bag;
}

double unigram_f1(std::string_view prediction, std::span<const std::string> golds) {
    require_golds(golds);
    const auto pred = normalize(prediction);
    double best = 0.0;
    for (const auto& gold_text : golds) {
        const auto gold = normalize(gold_text);
        if (pred.empty() || gold.empty()) {
            best = std::max(best, pred.empty() && gold.empty() ? 1.0 : 0.0);
            continue;
        }
        std::map<std::string_view, int> counts;
        for (const auto& t : gold.tokens) {
            ++counts[t];
        }
        int common = 0;
        for (const auto& t : pred.tokens) {
            auto it = counts.find(t);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++common;
            }
        }
        if (common == 0) {
            continue;
        }
        const double precision = static_cast<double>(common) / static_cast<double>(pred.tokens.size());
        const double recall = static_cast<double>(common) / static_cast<double>(gold.tokens.size());
        best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    return best;
}

int exact_match(std::string_view prediction, std::span<const std::string> golds) {
    require_golds(golds);
    const auto pred = normalize(prediction).joined();
    for (const auto& gold : golds) {
        if (normalize(gold).joined() == pred) {
            return 1;
        }
    }
    return 0;
}

int answer_recall(std::string_view evidence, std::span<const std::string> golds) {
    require_golds(golds);
    const auto ev = normalize(evidence);
    for (const auto& gold_text : golds) {
        const auto gold = normalize(gold_text);
        if (gold.empty()) {
            continue;
        }
        auto it = std::search(ev.tokens.begin(), ev.tokens.end(), gold.tokens.begin(), gold.tokens.end());
        if (it != ev.tokens.end()) {
            return 1;
        }
    }
    return 0;
}

std::size_t passage_word_count(std::span<const Passage> passages) {
    std::size_t total = 0;
    for (const auto& p : passages) {
        total += word_count(p.title) + word_count(p.body);
    }
    return total;
}

double compression_ratio(std::span<const Passage> passages, std::string_view evidence) {
    const auto evidence_words = word_count(evidence);
    if (evidence_words == 0) {
        throw MetricError("compression ratio undefined for empty evidence");
    }
    return static_cast<double>(passage_word_count(passages)) / static_cast<double>(evidence_words);
}

}  // namespace evidex
