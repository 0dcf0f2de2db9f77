#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evidex {

enum class Split { train, dev, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct Passage {
    std::string doc_id;
    std::string title;
    std::string body;
    int rank = 1;

    bool operator==(const Passage&) const = default;
};

struct QAInstance {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<Passage> passages;
    Split split = Split::train;

    bool operator==(const QAInstance&) const = default;
};

/// Throws DatasetError when an instance breaks the record invariants:
/// non-empty answers (after normalization), non-empty passage bodies and
/// ranks contiguous from 1 in list order.
void validate(const QAInstance& instance);

/// One JSON record per line:
///   {"id", "question", "answers": [..], "passages": [{"id","title","text","rank"}]}
/// Every record is tagged with `split`; the file's own "split" field, if any,
/// is ignored.
std::vector<QAInstance> load_dataset(const std::filesystem::path& path, Split split);
std::vector<QAInstance> parse_dataset(std::istream& in, Split split);

std::string serialize_record(const QAInstance& instance);
void write_dataset(const std::filesystem::path& path, std::span<const QAInstance> instances);

enum class TemplateKind { rag_qa, closed_book, cot, rational_extraction };

std::string_view to_string(TemplateKind kind);
TemplateKind parse_template_kind(std::string_view name);

struct PromptTemplate {
    TemplateKind name = TemplateKind::rag_qa;
    std::string body;

    static PromptTemplate builtin(TemplateKind kind);
    static PromptTemplate from_file(TemplateKind kind, const std::filesystem::path& path);
};

/// The four templates used by the pipeline. Defaults are the built-in texts;
/// `from_directory` overrides any `<name>.txt` found in `dir`; a missing
/// directory is a TemplateError.
struct TemplateSet {
    PromptTemplate rag_qa = PromptTemplate::builtin(TemplateKind::rag_qa);
    PromptTemplate closed_book = PromptTemplate::builtin(TemplateKind::closed_book);
    PromptTemplate cot = PromptTemplate::builtin(TemplateKind::cot);
    PromptTemplate rational_extraction = PromptTemplate::builtin(TemplateKind::rational_extraction);

    const PromptTemplate& get(TemplateKind kind) const;
    static TemplateSet from_directory(const std::filesystem::path& dir);
};

/// "Passage {rank}: {title}\n{body}" blocks separated by blank lines.
std::string join_passages(std::span<const Passage> passages);

/// Fills {question}, {passages} and {document}. `{document}` takes `extra`
/// when given and the joined passages otherwise. Throws TemplateError on an
/// unknown placeholder.
std::string render_prompt(const PromptTemplate& tmpl,
                          const QAInstance& instance,
                          std::optional<std::string_view> extra = std::nullopt);

bool is_protocol_noise_level(int n_noise);

/// `n_noise` passages drawn without replacement from `noise_pool`.
std::vector<Passage> sample_noise(std::span<const Passage> noise_pool, int n_noise, std::uint64_t seed);

/// Appends sampled noise passages, shuffles the combined list and re-ranks
/// it. n_noise = 0 returns a copy. Throws Error when the pool shares a doc id
/// or body with the instance, or holds fewer than n_noise passages.
QAInstance inject_noise(const QAInstance& instance,
                        int n_noise,
                        std::span<const Passage> noise_pool,
                        std::uint64_t seed);

}  // namespace evidex
