#include "evidex/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "evidex/errors.hpp"
#include "evidex/random.hpp"
#include "evidex/response_schema.hpp"
#include "evidex/text_metrics.hpp"

namespace evidex {

using nlohmann::json;

namespace {

json metrics_json(const DatasetMetrics& m, bool with_instances) {
    json j{{"name", m.name},
           {"count", m.count},
           {"em", m.em},
           {"f1", m.f1},
           {"ar", m.ar},
           {"cr", m.cr},
           {"cr_count", m.cr_count},
           {"cr_undefined", m.cr_undefined},
           {"failures", m.failures}};
    if (with_instances) {
        json rows = json::array();
        for (const auto& e : m.instances) {
            json row{{"id", e.id}, {"evidence", e.evidence}, {"answer", e.answer},
                     {"em", e.em}, {"f1", e.f1}, {"ar", e.ar}};
            row["cr"] = e.cr ? json(*e.cr) : json(nullptr);
            rows.push_back(std::move(row));
        }
        j["instances"] = std::move(rows);
    }
    return j;
}

std::pair<double, double> mean_std(std::span<const double> xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace

std::string MetricsReport::to_json(bool with_instances) const {
    json j;
    j["datasets"] = json::array();
    for (const auto& d : datasets) j["datasets"].push_back(metrics_json(d, with_instances));
    if (latency) {
        j["latency"] = {{"queries", latency->queries},
                        {"mean_seconds", latency->mean_seconds},
                        {"std_seconds", latency->std_seconds},
                        {"mean_output_words", latency->mean_output_words},
                        {"output_words_std", latency->output_words_std}};
    }
    if (!noise_sweep.empty()) {
        json table = json::object();
        for (const auto& [level, m] : noise_sweep) table[std::to_string(level)] = metrics_json(m, with_instances);
        j["noise_sweep"] = std::move(table);
    }
    return j.dump(2);
}

DatasetMetrics evaluate(std::span<const QAInstance> dataset,
                        GenerationBackend& extractor,
                        GenerationBackend& generator,
                        const DecodingConfig& decoding,
                        const TemplateSet& templates,
                        std::string name) {
    DatasetMetrics out;
    out.name = std::move(name);
    for (const auto& inst : dataset) {
        InstanceEval e;
        e.id = inst.id;
        try {
            GenerationRequest ex;
            ex.prompt = render_prompt(templates.rational_extraction, inst);
            ex.temperature = decoding.extraction_temperature;
            ex.max_new_tokens = decoding.extraction_max_new_tokens;
            ex.stop_sequences = {std::string(kExtractionStop)};
            ex.return_logprobs = false;
            e.evidence = evidence_from_extraction(extractor.generate(ex).at(0).text).value_or("");

            GenerationRequest gen;
            gen.prompt = render_prompt(templates.rag_qa, inst, e.evidence);
            gen.temperature = decoding.answer_temperature;
            gen.max_new_tokens = decoding.answer_max_new_tokens;
            gen.stop_sequences = decoding.answer_stop;
            gen.return_logprobs = false;
            e.answer = strip_stop(generator.generate(gen).at(0).text, decoding.answer_stop);
        } catch (const BackendError& err) {
            spdlog::warn("evaluation of '{}' failed: {}", inst.id, err.what());
            ++out.failures;
            continue;
        }
        e.em = exact_match(e.answer, inst.gold_answers);
        e.f1 = unigram_f1(e.answer, inst.gold_answers);
        e.ar = answer_recall(e.evidence, inst.gold_answers);
        try {
            e.cr = compression_ratio(inst.passages, e.evidence);
        } catch (const MetricError&) {
            ++out.cr_undefined;
        }
        out.em += e.em;
        out.f1 += e.f1;
        out.ar += e.ar;
        if (e.cr) {
            out.cr += *e.cr;
            ++out.cr_count;
        }
        ++out.count;
        out.instances.push_back(std::move(e));
    }
    if (out.count > 0) {
        const double n = static_cast<double>(out.count);
        out.em /= n;
        out.f1 /= n;
        out.ar /= n;
    }
    if (out.cr_count > 0) out.cr /= static_cast<double>(out.cr_count);
    return out;
}

std::map<int, DatasetMetrics> noise_sweep(std::span<const QAInstance> dataset,
                                          GenerationBackend& extractor,
                                          GenerationBackend& generator,
                                          std::span<const Passage> noise_pool,
                                          std::span<const int> levels,
                                          std::uint64_t seed,
                                          const DecodingConfig& decoding,
                                          const TemplateSet& templates) {
    std::map<int, DatasetMetrics> table;
    for (int level : levels) {
        std::vector<QAInstance> noisy;
        noisy.reserve(dataset.size());
        for (const auto& inst : dataset) {
            std::unordered_set<std::string> ids, bodies;
            for (const auto& p : inst.passages) {
                ids.insert(p.doc_id);
                bodies.insert(p.body);
            }
            std::vector<Passage> pool;
            for (const auto& p : noise_pool) {
                if (!ids.contains(p.doc_id) && !bodies.contains(p.body)) pool.push_back(p);
            }
            const auto s = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(level)), fnv1a(inst.id));
            noisy.push_back(inject_noise(inst, level, pool, s));
        }
        table.emplace(level, evaluate(noisy, extractor, generator, decoding, templates,
                                      "noise-" + std::to_string(level)));
    }
    return table;
}

LatencyStats latency_bench(std::span<const QAInstance> sample,
                           GenerationBackend& backend,
                           int batch_size,
                           int max_new_tokens,
                           const TemplateSet& templates) {
    if (batch_size < 1) throw Error("batch_size must be positive");
    if (sample.empty()) throw Error("latency sample is empty");

    std::vector<std::vector<GenerationRequest>> batches;
    for (std::size_t i = 0; i < sample.size(); i += static_cast<std::size_t>(batch_size)) {
        std::vector<GenerationRequest> b;
        for (std::size_t j = i; j < std::min(sample.size(), i + static_cast<std::size_t>(batch_size)); ++j) {
            GenerationRequest r;
            r.prompt = render_prompt(templates.rational_extraction, sample[j]);
            r.temperature = 0.0;
            r.max_new_tokens = max_new_tokens;
            r.stop_sequences = {std::string(kExtractionStop)};
            r.return_logprobs = false;
            b.push_back(std::move(r));
        }
        batches.push_back(std::move(b));
    }

    backend.generate_batch(batches.front());  // warmup

    std::vector<double> per_query;
    std::vector<double> lengths;
    for (const auto& b : batches) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto results = backend.generate_batch(b);
        const auto t1 = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(t1 - t0).count();
        per_query.push_back(secs / static_cast<double>(b.size()));
        for (const auto& rs : results) {
            for (const auto& r : rs) lengths.push_back(static_cast<double>(word_count(r.text)));
        }
    }

    LatencyStats stats;
    stats.queries = sample.size();
    std::tie(stats.mean_seconds, stats.std_seconds) = mean_std(per_query);
    std::tie(stats.mean_output_words, stats.output_words_std) = mean_std(lengths);
    return stats;
}

}  // namespace evidex
