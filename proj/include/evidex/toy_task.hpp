#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evidex/corpus.hpp"

namespace evidex {

/// Synthetic extraction task. Each question asks for the value bound to one
/// key symbol ("k3"); exactly one passage states the binding ("k3 v5"), the
/// other passages are filler with optional distractor bindings for other keys.
struct ToyTaskSpec {
    int num_keys = 12;
    int num_values = 12;
    int num_fillers = 24;
    int passages_per_instance = 5;
    int passage_words = 8;
    double distractor_rate = 0.5;

    std::string key_symbol(int i) const { return "k" + std::to_string(i); }
    std::string value_symbol(int i) const { return "v" + std::to_string(i); }
    std::string filler_symbol(int i) const { return "f" + std::to_string(i); }
};

std::vector<QAInstance> make_toy_dataset(const ToyTaskSpec& spec, int count, Split split, std::uint64_t seed);

/// Filler-only passages usable as a noise pool for toy instances.
std::vector<Passage> make_toy_noise_pool(const ToyTaskSpec& spec, int count, std::uint64_t seed);

/// The best-possible response for a toy instance.
std::string toy_reference_response(const QAInstance& instance);

}  // namespace evidex
