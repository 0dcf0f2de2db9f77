#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evidex/config.hpp"
#include "evidex/corpus.hpp"
#include "evidex/policy_backend.hpp"

namespace evidex {

struct InstanceEval {
    std::string id;
    std::string evidence;
    std::string answer;
    int em = 0;
    double f1 = 0.0;
    int ar = 0;
    std::optional<double> cr;  // empty when the evidence is empty
};

/// Means over the instances that completed. EM, F1 and AR are fractions in
/// [0, 1]; CR averages only instances where it is defined.
struct DatasetMetrics {
    std::string name;
    std::size_t count = 0;
    double em = 0.0;
    double f1 = 0.0;
    double ar = 0.0;
    double cr = 0.0;
    std::size_t cr_count = 0;
    std::size_t cr_undefined = 0;
    std::size_t failures = 0;
    std::vector<InstanceEval> instances;
};

struct LatencyStats {
    std::size_t queries = 0;
    double mean_seconds = 0.0;
    double std_seconds = 0.0;
    double output_words_std = 0.0;
    double mean_output_words = 0.0;
};

struct MetricsReport {
    std::vector<DatasetMetrics> datasets;
    std::optional<LatencyStats> latency;
    std::map<int, DatasetMetrics> noise_sweep;

    std::string to_json(bool with_instances = false) const;
};

/// Extracts evidence with `extractor` (decoding stops at "</extract>") and
/// answers from (question, evidence) with `generator` through rag_qa. Backend
/// failures skip the instance and are counted.
DatasetMetrics evaluate(std::span<const QAInstance> dataset,
                        GenerationBackend& extractor,
                        GenerationBackend& generator,
                        const DecodingConfig& decoding,
                        const TemplateSet& templates,
                        std::string name = "dataset");

inline const std::vector<int> kDefaultNoiseLevels = {0, 2, 4, 6, 8};

/// evaluate over noise-augmented copies of `dataset`, one table row per level.
/// Pool passages that duplicate an instance's own passages are left out for
/// that instance.
std::map<int, DatasetMetrics> noise_sweep(std::span<const QAInstance> dataset,
                                          GenerationBackend& extractor,
                                          GenerationBackend& generator,
                                          std::span<const Passage> noise_pool,
                                          std::span<const int> levels,
                                          std::uint64_t seed,
                                          const DecodingConfig& decoding,
                                          const TemplateSet& templates);

/// Wall-clock seconds per query of batched extraction. The first batch is a
/// warmup and is not timed; mean and std are taken across timed batches.
LatencyStats latency_bench(std::span<const QAInstance> sample,
                           GenerationBackend& backend,
                           int batch_size,
                           int max_new_tokens,
                           const TemplateSet& templates);

}  // namespace evidex
