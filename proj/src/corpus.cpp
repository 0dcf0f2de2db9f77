#include "evidex/corpus.hpp"

#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include <spdlog/spdlog.h>

#include "evidex/errors.hpp"
#include "evidex/random.hpp"
#include "evidex/text_metrics.hpp"

namespace evidex {

using nlohmann::json;

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "dev") return Split::dev;
    if (name == "test") return Split::test;
    throw Error("unknown split: " + std::string(name));
}

void validate(const QAInstance& instance) {
    if (instance.question.empty()) {
        throw DatasetError("instance '" + instance.id + "' has an empty question");
    }
    if (instance.gold_answers.empty()) {
        throw DatasetError("instance '" + instance.id + "' has no gold answers");
    }
    for (const auto& a : instance.gold_answers) {
        if (normalize(a).empty()) {
            throw DatasetError("instance '" + instance.id + "' has a gold answer that normalizes to nothing");
        }
    }
    if (instance.passages.empty()) {
        throw DatasetError("instance '" + instance.id + "' has no passages");
    }
    for (std::size_t i = 0; i < instance.passages.size(); ++i) {
        const auto& p = instance.passages[i];
        if (p.body.empty()) {
            throw DatasetError("instance '" + instance.id + "' passage " + std::to_string(i + 1) + " has an empty body");
        }
        if (p.rank != static_cast<int>(i) + 1) {
            throw DatasetError("instance '" + instance.id + "' passage ranks are not contiguous from 1");
        }
    }
}

namespace {

std::string required_string(const json& rec, const char* key) {
    auto it = rec.find(key);
    if (it == rec.end()) {
        throw Error(std::string("missing field '") + key + "'");
    }
    if (!it->is_string()) {
        throw Error(std::string("field '") + key + "' is not a string");
    }
    return it->get<std::string>();
}

QAInstance instance_from_json(const json& rec, Split split) {
    if (!rec.is_object()) {
        throw Error("record is not an object");
    }
    QAInstance inst;
    inst.split = split;
    inst.id = required_string(rec, "id");
    inst.question = required_string(rec, "question");

    auto answers = rec.find("answers");
    if (answers == rec.end() || !answers->is_array()) {
        throw Error("missing field 'answers'");
    }
    for (const auto& a : *answers) {
        inst.gold_answers.push_back(a.get<std::string>());
    }

    auto passages = rec.find("passages");
    if (passages == rec.end() || !passages->is_array()) {
        throw Error("missing field 'passages'");
    }
    int position = 1;
    for (const auto& p : *passages) {
        Passage psg;
        psg.doc_id = p.value("id", std::string{});
        psg.title = p.value("title", std::string{});
        psg.body = required_string(p, "text");
        psg.rank = p.value("rank", position);
        inst.passages.push_back(std::move(psg));
        ++position;
    }
    validate(inst);
    return inst;
}

}  // namespace

std::vector<QAInstance> parse_dataset(std::istream& in, Split split) {
    std::vector<QAInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(instance_from_json(json::parse(line), split));
        } catch (const json::exception& e) {
            throw DatasetError(e.what(), line_no);
        } catch (const DatasetError& e) {
            throw DatasetError(e.what(), line_no);
        } catch (const Error& e) {
            throw DatasetError(e.what(), line_no);
        }
    }
    if (out.empty()) {
        throw DatasetError("dataset is empty");
    }
    return out;
}

std::vector<QAInstance> load_dataset(const std::filesystem::path& path, Split split) {
    std::ifstream in(path);
    if (!in) {
        throw DatasetError("cannot open dataset file " + path.string());
    }
    return parse_dataset(in, split);
}

std::string serialize_record(const QAInstance& instance) {
    json rec;
    rec["id"] = instance.id;
    rec["question"] = instance.question;
    rec["answers"] = instance.gold_answers;
    rec["split"] = std::string(to_string(instance.split));
    json passages = json::array();
    for (const auto& p : instance.passages) {
        passages.push_back({{"id", p.doc_id}, {"title", p.title}, {"text", p.body}, {"rank", p.rank}});
    }
    rec["passages"] = std::move(passages);
    return rec.dump();
}

void write_dataset(const std::filesystem::path& path, std::span<const QAInstance> instances) {
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write dataset file " + path.string());
    }
    for (const auto& inst : instances) {
        out << serialize_record(inst) << '\n';
    }
}

// Templates --------------------------------------------------------------

std::string_view to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::rag_qa: return "rag_qa";
        case TemplateKind::closed_book: return "closed_book";
        case TemplateKind::cot: return "cot";
        case TemplateKind::rational_extraction: return "rational_extraction";
    }
    return "rag_qa";
}

TemplateKind parse_template_kind(std::string_view name) {
    for (auto k : {TemplateKind::rag_qa, TemplateKind::closed_book, TemplateKind::cot,
                   TemplateKind::rational_extraction}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw TemplateError("unknown template: " + std::string(name));
}

namespace {

constexpr std::string_view kRagQa =
    "[Instruction]\n"
    "You are a helpful assistant. Your task is:\n"
    "1. Read the given question and use the documents provided to answer the question.\n"
    "2. If the documents don't work, please answer the question based on your own knowledge.\n"
    "Question: {question}\n"
    "Document: {document}\n"
    "Answer:";

constexpr std::string_view kClosedBook =
    "[Instruction]\n"
    "You are a helpful assistant. Your task is:\n"
    "1. Read the given question and then answer the question directly.\n"
    "2. Give a short answer to the question based on your own knowledge.\n"
    "Question: {question}\n"
    "Answer:";

constexpr std::string_view kCot =
    "[Instruction]\n"
    "You are a helpful assistant. Your task is:\n"
    "Read the given documents, and answer the question below.\n"
    "Question: {question}\n"
    "Document: {document}\n"
    "Let's think step by step.";

constexpr std::string_view kRationalExtraction =
    "[Instruction]\n"
    "You are a highly skilled knowledge reasoner and extractor.\n"
    "Your task is to carefully read the given question and passages to reason how the passages lead to the "
    "answer and extract relevant information that may be used to answer the question.\n"
    "Follow these steps:\n"
    "1. In the <reason></reason> tag, perform the following steps. Question Analysis: Analyze the question to "
    "understand the specific information they are seeking. Identify the key concepts, entities, and "
    "relationships involved. Passage Analysis: For each passage, carefully read and identify sentences or "
    "phrases that are useful for answering the given question.\n"
    "2. In the <extract></extract> tag, synthesize useful information from the passages into a coherent "
    "narrative. Organize the information logically and concisely.\n"
    "3. In <answer></answer> tags, give a short answer to the given question, based on the passages, "
    "reasoning information, and extracted knowledge. If none of them work, please answer the question based "
    "on your knowledge.\n"
    "Question: {question}\n"
    "Passages: {passages}\n";

}  // namespace

PromptTemplate PromptTemplate::builtin(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::rag_qa: return {kind, std::string(kRagQa)};
        case TemplateKind::closed_book: return {kind, std::string(kClosedBook)};
        case TemplateKind::cot: return {kind, std::string(kCot)};
        case TemplateKind::rational_extraction: return {kind, std::string(kRationalExtraction)};
    }
    throw TemplateError("unknown template kind");
}

PromptTemplate PromptTemplate::from_file(TemplateKind kind, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TemplateError("cannot open template " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return {kind, ss.str()};
}

const PromptTemplate& TemplateSet::get(TemplateKind kind) const {
    switch (kind) {
        case TemplateKind::rag_qa: return rag_qa;
        case TemplateKind::closed_book: return closed_book;
        case TemplateKind::cot: return cot;
        case TemplateKind::rational_extraction: return rational_extraction;
    }
    return rag_qa;
}

TemplateSet TemplateSet::from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw TemplateError("template directory not found: " + dir.string());
    }
    TemplateSet set;
    for (auto kind : {TemplateKind::rag_qa, TemplateKind::closed_book, TemplateKind::cot,
                      TemplateKind::rational_extraction}) {
        auto file = dir / (std::string(to_string(kind)) + ".txt");
        if (std::filesystem::exists(file)) {
            auto loaded = PromptTemplate::from_file(kind, file);
            switch (kind) {
                case TemplateKind::rag_qa: set.rag_qa = loaded; break;
                case TemplateKind::closed_book: set.closed_book = loaded; break;
                case TemplateKind::cot: set.cot = loaded; break;
                case TemplateKind::rational_extraction: set.rational_extraction = loaded; break;
            }
        }
    }
    return set;
}

std::string join_passages(std::span<const Passage> passages) {
    std::string out;
    for (const auto& p : passages) {
        if (!out.empty()) {
            out += "\n\n";
        }
        out += "Passage " + std::to_string(p.rank) + ": " + p.title + "\n" + p.body;
    }
    return out;
}

std::string render_prompt(const PromptTemplate& tmpl,
                          const QAInstance& instance,
                          std::optional<std::string_view> extra) {
    if (instance.question.empty()) {
        throw TemplateError("cannot render a prompt for an empty question");
    }
    const std::string_view body = tmpl.body;
    std::string out;
    out.reserve(body.size() + instance.question.size() + 1024);

    std::size_t pos = 0;
    while (pos < body.size()) {
        const auto open = body.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, open - pos));
        auto close = open + 1;
        while (close < body.size() && (std::islower(static_cast<unsigned char>(body[close])) || body[close] == '_')) {
            ++close;
        }
        if (close >= body.size() || body[close] != '}' || close == open + 1) {
            out.push_back('{');
            pos = open + 1;
            continue;
        }
        const auto name = body.substr(open + 1, close - open - 1);
        if (name == "question") {
            out += instance.question;
        } else if (name == "passages") {
            out += join_passages(instance.passages);
        } else if (name == "document") {
            if (extra) {
                out.append(*extra);
            } else {
                out += join_passages(instance.passages);
            }
        } else {
            throw TemplateError("template '" + std::string(to_string(tmpl.name)) + "' uses unresolvable placeholder {" +
                                std::string(name) + "}");
        }
        pos = close + 1;
    }
    return out;
}

// Noise injection ---------------------------------------------------------

bool is_protocol_noise_level(int n_noise) {
    return n_noise == 0 || n_noise == 2 || n_noise == 4 || n_noise == 6 || n_noise == 8;
}

std::vector<Passage> sample_noise(std::span<const Passage> noise_pool, int n_noise, std::uint64_t seed) {
    if (n_noise < 0) {
        throw Error("n_noise must be non-negative");
    }
    if (noise_pool.size() < static_cast<std::size_t>(n_noise)) {
        throw Error("noise pool has " + std::to_string(noise_pool.size()) + " passages, " +
                    std::to_string(n_noise) + " requested");
    }
    Rng rng(seed);
    std::vector<std::size_t> idx(noise_pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<Passage> drawn;
    for (int i = 0; i < n_noise; ++i) {
        const auto j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
        drawn.push_back(noise_pool[idx[i]]);
    }
    return drawn;
}

QAInstance inject_noise(const QAInstance& instance,
                        int n_noise,
                        std::span<const Passage> noise_pool,
                        std::uint64_t seed) {
    if (!is_protocol_noise_level(n_noise)) {
        spdlog::warn("noise level {} is outside the {{0,2,4,6,8}} protocol grid", n_noise);
    }
    QAInstance out = instance;
    if (n_noise == 0) {
        return out;
    }

    std::set<std::string> ids;
    std::set<std::string> bodies;
    for (const auto& p : instance.passages) {
        if (!p.doc_id.empty()) ids.insert(p.doc_id);
        bodies.insert(p.body);
    }
    for (const auto& p : noise_pool) {
        if ((!p.doc_id.empty() && ids.count(p.doc_id)) || bodies.count(p.body)) {
            throw Error("noise pool overlaps the passages of instance '" + instance.id + "'");
        }
    }

    auto drawn = sample_noise(noise_pool, n_noise, seed);
    out.passages.insert(out.passages.end(), drawn.begin(), drawn.end());
    Rng rng(mix_seed(seed, 1));
    rng.shuffle(std::span<Passage>(out.passages));
    for (std::size_t i = 0; i < out.passages.size(); ++i) {
        out.passages[i].rank = static_cast<int>(i) + 1;
    }
    return out;
}

}  // namespace evidex
