#include "evidex/toy_task.hpp"

#include <cctype>
#include <sstream>

#include "evidex/errors.hpp"
#include "evidex/random.hpp"

namespace evidex {
namespace {

std::vector<std::string> filler_words(const ToyTaskSpec& spec, Rng& rng, int count) {
    std::vector<std::string> words;
    for (int i = 0; i < count; ++i) {
        words.push_back(spec.filler_symbol(static_cast<int>(rng.below(spec.num_fillers))));
    }
    return words;
}

void insert_pair(std::vector<std::string>& words, Rng& rng, const std::string& key, const std::string& value) {
    const auto at = rng.below(words.size() + 1);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), {key, value});
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

}  // namespace

std::vector<QAInstance> make_toy_dataset(const ToyTaskSpec& spec, int count, Split split, std::uint64_t seed) {
    if (spec.num_keys < 2 || spec.num_values < 1 || spec.passages_per_instance < 1 || spec.num_fillers < 1) {
        throw Error("invalid toy task spec");
    }
    Rng rng(seed);
    std::vector<QAInstance> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const int key = static_cast<int>(rng.below(spec.num_keys));
        const int value = static_cast<int>(rng.below(spec.num_values));
        const int fact_at = static_cast<int>(rng.below(spec.passages_per_instance));

        QAInstance inst;
        inst.id = "toy-" + std::string(to_string(split)) + "-" + std::to_string(n);
        inst.split = split;
        inst.question = "which value does " + spec.key_symbol(key) + " hold?";
        inst.gold_answers = {spec.value_symbol(value)};
        for (int p = 0; p < spec.passages_per_instance; ++p) {
            auto words = filler_words(spec, rng, spec.passage_words);
            if (p == fact_at) {
                insert_pair(words, rng, spec.key_symbol(key), spec.value_symbol(value));
            } else if (rng.uniform() < spec.distractor_rate) {
                int other = static_cast<int>(rng.below(spec.num_keys - 1));
                if (other >= key) ++other;
                insert_pair(words, rng, spec.key_symbol(other),
                            spec.value_symbol(static_cast<int>(rng.below(spec.num_values))));
            }
            Passage psg;
            psg.doc_id = inst.id + "-p" + std::to_string(p + 1);
            psg.title = "t" + std::to_string(rng.below(100));
            psg.body = join(words);
            psg.rank = p + 1;
            inst.passages.push_back(std::move(psg));
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<Passage> make_toy_noise_pool(const ToyTaskSpec& spec, int count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Passage> out;
    for (int n = 0; n < count; ++n) {
        Passage psg;
        psg.doc_id = "toy-noise-" + std::to_string(n);
        psg.title = "t" + std::to_string(rng.below(100));
        psg.body = join(filler_words(spec, rng, spec.passage_words));
        psg.rank = n + 1;
        out.push_back(std::move(psg));
    }
    return out;
}

std::string toy_reference_response(const QAInstance& instance) {
    std::istringstream q(instance.question);
    std::string word, key;
    while (q >> word) {
        if (word.size() > 1 && word[0] == 'k' && std::isdigit(static_cast<unsigned char>(word[1]))) {
            key = word;
        }
    }
    const auto& value = instance.gold_answers.at(0);
    const std::string fact = key + " " + value;
    int rank = 0;
    for (const auto& p : instance.passages) {
        if ((" " + p.body + " ").find(" " + fact + " ") != std::string::npos) {
            rank = p.rank;
            break;
        }
    }
    if (key.empty() || rank == 0) {
        throw Error("instance '" + instance.id + "' is not a toy instance");
    }
    return "<reason> " + key + " in passage " + std::to_string(rank) + " </reason> <extract> " + fact +
           " </extract> <answer> " + value + " </answer>";
}

}  // namespace evidex
