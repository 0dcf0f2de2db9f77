#include "evidex/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>

#include "evidex/errors.hpp"
#include "evidex/random.hpp"
#include "evidex/response_schema.hpp"

namespace evidex {

// GenerationBackend helpers ----------------------------------------------

std::string_view to_string(FinishReason reason) { return reason == FinishReason::stop ? "stop" : "length"; }

std::vector<std::vector<GenerationResult>> GenerationBackend::generate_batch(
    std::span<const GenerationRequest> requests) {
    std::vector<std::vector<GenerationResult>> out;
    out.reserve(requests.size());
    for (const auto& r : requests) {
        out.push_back(generate(r));
    }
    return out;
}

std::string strip_stop(std::string_view text, std::span<const std::string> stop_sequences) {
    auto rtrim = [](std::string_view s) {
        const auto e = s.find_last_not_of(" \t\r\n");
        return e == std::string_view::npos ? std::string_view{} : s.substr(0, e + 1);
    };
    std::string_view t = rtrim(text);
    for (const auto& stop : stop_sequences) {
        if (!stop.empty() && t.size() >= stop.size() && t.substr(t.size() - stop.size()) == stop) {
            t = rtrim(t.substr(0, t.size() - stop.size()));
            break;
        }
    }
    const auto b = t.find_first_not_of(" \t\r\n");
    return b == std::string_view::npos ? std::string{} : std::string(t.substr(b));
}

// ToyVocab ---------------------------------------------------------------

namespace {

constexpr std::string_view kTagWords[ToyVocab::kNumTags] = {kReasonOpen,  kReasonClose, kExtractOpen,
                                                            kExtractClose, kAnswerOpen, kAnswerClose};
constexpr std::string_view kLiteralWords[] = {"passage", "in",      "holds", "value",  "key",
                                              "fact",    "says",    "so",    "because", "answer"};
constexpr int kVocabSize = 50;

bool symbol_in_range(std::string_view word, char prefix, int count) {
    if (word.size() < 2 || word[0] != prefix) return false;
    int v = 0;
    for (std::size_t i = 1; i < word.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(word[i]))) return false;
        v = v * 10 + (word[i] - '0');
        if (v >= count) return false;
    }
    return !(word.size() > 2 && word[1] == '0');
}

std::vector<std::string_view> split_words(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const auto start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
    return out;
}

std::string_view strip_trailing_punct(std::string_view w) {
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.remove_suffix(1);
    return w;
}

/// Question line and the text that follows it.
std::pair<std::string_view, std::string_view> split_at_question(std::string_view prompt) {
    constexpr std::string_view label = "Question: ";
    std::size_t at = prompt.rfind(std::string("\n").append(label));
    at = at == std::string_view::npos ? (prompt.substr(0, label.size()) == label ? 0 : at) : at + 1;
    if (at == std::string_view::npos) {
        return {{}, prompt};
    }
    const auto start = at + label.size();
    const auto end = prompt.find('\n', start);
    if (end == std::string_view::npos) {
        return {prompt.substr(start), {}};
    }
    return {prompt.substr(start, end - start), prompt.substr(end + 1)};
}

double log_sum_exp(const double* row, int n) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp(row[j] - m);
    return m + std::log(s);
}

}  // namespace

ToyVocab::ToyVocab(const ToyTaskSpec& spec) : spec_(spec) {
    for (auto t : kTagWords) names_.emplace_back(t);
    names_.emplace_back("<key>");
    names_.emplace_back("<value>");
    names_.emplace_back("<passage>");
    names_.emplace_back("<open>");
    names_.emplace_back("<close>");
    for (auto w : kLiteralWords) names_.emplace_back(w);
    for (int i = 0; static_cast<int>(names_.size()) < kVocabSize; ++i) {
        std::ostringstream ss;
        ss << 'w' << std::setw(2) << std::setfill('0') << i;
        names_.push_back(ss.str());
    }
}

bool ToyVocab::is_key(std::string_view word) const { return symbol_in_range(word, 'k', spec_.num_keys); }
bool ToyVocab::is_value(std::string_view word) const { return symbol_in_range(word, 'v', spec_.num_values); }

int ToyVocab::tag_index(std::string_view word) {
    for (int i = 0; i < kNumTags; ++i) {
        if (kTagWords[i] == word) return i;
    }
    return -1;
}

// ToyPolicy --------------------------------------------------------------

ToyPolicy::ToyPolicy(const ToyTaskSpec& spec, int max_slot) : vocab_(spec), max_slot_(max_slot) {
    if (max_slot_ < 1) {
        throw Error("toy policy needs at least one slot");
    }
    live_.assign(num_parameters(), 0.0);
    old_ = live_;
    reference_ = live_;
}

ToyPolicy::ToyPolicy(const ToyPolicy& other) : vocab_(other.vocab_), max_slot_(other.max_slot_) {
    std::shared_lock lock(other.mutex_);
    live_ = other.live_;
    old_ = other.old_;
    reference_ = other.reference_;
    call_counter_ = other.call_counter_.load();
}

ToyPolicy& ToyPolicy::operator=(const ToyPolicy& other) {
    if (this == &other) return *this;
    ToyPolicy copy(other);
    std::unique_lock lock(mutex_);
    vocab_ = copy.vocab_;
    max_slot_ = copy.max_slot_;
    live_ = std::move(copy.live_);
    old_ = std::move(copy.old_);
    reference_ = std::move(copy.reference_);
    call_counter_ = copy.call_counter_.load();
    return *this;
}

const ToyParameters& ToyPolicy::table(Snapshot snapshot) const {
    switch (snapshot) {
        case Snapshot::live: return live_;
        case Snapshot::old: return old_;
        case Snapshot::reference: return reference_;
    }
    return live_;
}

int ToyPolicy::row_of(const ToyState& state) const {
    // Openers have even tag ids; last_tag stores id + 1.
    const int segment = state.last_tag > 0 && (state.last_tag - 1) % 2 == 0 ? (state.last_tag - 1) / 2 + 1 : 0;
    return segment * max_slot_ + std::min(state.since_tag, max_slot_ - 1);
}

PointerReading ToyPolicy::read_pointers(std::string_view prompt) const {
    PointerReading reading;
    const auto [question, rest] = split_at_question(prompt);
    for (auto w : split_words(question)) {
        w = strip_trailing_punct(w);
        if (vocab_.is_key(w)) {
            reading.key = std::string(w);
            break;
        }
    }
    if (reading.key.empty()) {
        return reading;
    }
    const auto words = split_words(rest);
    std::string current_passage;
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
        if (words[i] == "Passage") {
            const auto n = words[i + 1];
            if (n.size() > 1 && n.back() == ':') {
                current_passage = std::string(n.substr(0, n.size() - 1));
            }
            continue;
        }
        if (strip_trailing_punct(words[i]) == reading.key) {
            const auto next = strip_trailing_punct(words[i + 1]);
            if (vocab_.is_value(next)) {
                reading.value = std::string(next);
                reading.passage = current_passage;
                return reading;
            }
        }
    }
    // No "key value" pair: fall back to the first value mentioned at all.
    current_passage.clear();
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i] == "Passage" && i + 1 < words.size() && words[i + 1].size() > 1 && words[i + 1].back() == ':') {
            current_passage = std::string(words[i + 1].substr(0, words[i + 1].size() - 1));
            continue;
        }
        const auto w = strip_trailing_punct(words[i]);
        if (vocab_.is_value(w)) {
            reading.value = std::string(w);
            reading.passage = current_passage;
            break;
        }
    }
    return reading;
}

ToyState ToyPolicy::advance(ToyState state, std::string_view word) {
    const int tag = ToyVocab::tag_index(word);
    if (tag >= 0) {
        return ToyState{tag + 1, 0};
    }
    return ToyState{state.last_tag, state.since_tag + 1};
}

ToyState ToyPolicy::initial_state(std::string_view prompt) const {
    const auto e = prompt.find_last_not_of(" \t\r\n");
    const auto trimmed = e == std::string_view::npos ? std::string_view{} : prompt.substr(0, e + 1);
    constexpr std::string_view answer_cue = "Answer:";
    if (trimmed.size() >= answer_cue.size() && trimmed.substr(trimmed.size() - answer_cue.size()) == answer_cue) {
        return ToyState{ToyVocab::kAnswerOpenId + 1, 0};
    }
    // Only tags after the question line belong to a partial response; the
    // instruction block mentions the tags too.
    const auto rest = split_at_question(prompt).second;
    ToyState state;
    bool in_response = false;
    for (auto w : split_words(rest)) {
        if (ToyVocab::tag_index(w) >= 0) in_response = true;
        if (in_response) state = advance(state, w);
    }
    return state;
}

namespace {

std::string structural_word(int action, const ToyState& state) {
    const int tag = state.last_tag - 1;
    if (action == ToyVocab::kOpenPointer) {
        const int next = tag < 0 ? 0 : (tag / 2 + 1) * 2;
        return next < ToyVocab::kNumTags ? std::string(kTagWords[next]) : std::string(ToyVocab::kUnresolved);
    }
    return tag >= 0 && tag % 2 == 0 ? std::string(kTagWords[tag + 1]) : std::string(ToyVocab::kUnresolved);
}

}  // namespace

std::string ToyPolicy::decode(int action, const PointerReading& reading, const ToyState& state) const {
    auto or_nil = [](const std::string& s) { return s.empty() ? std::string(ToyVocab::kUnresolved) : s; };
    switch (action) {
        case ToyVocab::kKeyPointer: return or_nil(reading.key);
        case ToyVocab::kValuePointer: return or_nil(reading.value);
        case ToyVocab::kPassagePointer: return or_nil(reading.passage);
        case ToyVocab::kOpenPointer:
        case ToyVocab::kClosePointer: return structural_word(action, state);
        default: return vocab_.name(action);
    }
}

namespace {

/// The word each action emits; structural pointers are refreshed per state.
struct DecodeTable {
    std::vector<std::string> words;

    bool emits(int action, std::string_view word) const { return words[action] == word; }
};

void refresh(DecodeTable& table, const ToyState& state) {
    table.words[ToyVocab::kOpenPointer] = structural_word(ToyVocab::kOpenPointer, state);
    table.words[ToyVocab::kClosePointer] = structural_word(ToyVocab::kClosePointer, state);
}

}  // namespace

std::vector<GenerationResult> ToyPolicy::generate_locked(const ToyParameters& params,
                                                         const GenerationRequest& request) const {
    if (request.num_samples < 1) throw BackendError("num_samples must be at least 1");
    if (request.temperature < 0.0) throw BackendError("temperature must be non-negative");
    if (request.max_new_tokens < 0) throw BackendError("max_new_tokens must be non-negative");

    const auto reading = read_pointers(request.prompt);
    const auto start = initial_state(request.prompt);
    DecodeTable table;
    const int vocab = vocab_.size();
    for (int a = 0; a < vocab; ++a) table.words.push_back(decode(a, reading, start));
    const std::uint64_t base_seed =
        request.seed ? *request.seed : mix_seed(fnv1a(request.prompt), call_counter_.fetch_add(1));

    std::vector<GenerationResult> results;
    std::vector<double> probs(vocab);
    for (int i = 0; i < request.num_samples; ++i) {
        Rng rng(mix_seed(base_seed, static_cast<std::uint64_t>(i)));
        GenerationResult res;
        ToyState state = start;
        for (int step = 0; step < request.max_new_tokens; ++step) {
            refresh(table, state);
            const double* row = params.data() + static_cast<std::size_t>(row_of(state)) * vocab;
            int action = 0;
            if (request.temperature == 0.0) {
                action = static_cast<int>(std::max_element(row, row + vocab) - row);
            } else {
                double m = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < vocab; ++j) m = std::max(m, row[j] / request.temperature);
                double z = 0.0;
                for (int j = 0; j < vocab; ++j) {
                    probs[j] = std::exp(row[j] / request.temperature - m);
                    z += probs[j];
                }
                double u = rng.uniform() * z;
                action = vocab - 1;
                for (int j = 0; j < vocab; ++j) {
                    u -= probs[j];
                    if (u < 0.0) {
                        action = j;
                        break;
                    }
                }
            }
            const std::string& word = table.words[action];
            const double lse = log_sum_exp(row, vocab);
            double m = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < vocab; ++j) {
                if (table.emits(j, word)) m = std::max(m, row[j]);
            }
            double s = 0.0;
            for (int j = 0; j < vocab; ++j) {
                if (table.emits(j, word)) s += std::exp(row[j] - m);
            }
            res.token_ids.push_back(action);
            res.tokens.push_back(word);
            res.token_logprobs.push_back(m + std::log(s) - lse);
            if (!res.text.empty()) res.text.push_back(' ');
            res.text += word;
            state = advance(state, word);

            bool stopped = false;
            for (const auto& stop : request.stop_sequences) {
                if (!stop.empty() && res.text.size() >= stop.size() &&
                    std::string_view(res.text).substr(res.text.size() - stop.size()) == stop) {
                    stopped = true;
                    break;
                }
            }
            if (stopped) {
                res.finish_reason = FinishReason::stop;
                break;
            }
        }
        if (!request.return_logprobs) res.token_logprobs.clear();
        results.push_back(std::move(res));
    }
    return results;
}

std::vector<double> ToyPolicy::score_locked(const ToyParameters& params,
                                            std::string_view prompt,
                                            std::string_view completion) const {
    const auto reading = read_pointers(prompt);
    ToyState state = initial_state(prompt);
    DecodeTable table;
    const int vocab = vocab_.size();
    for (int a = 0; a < vocab; ++a) table.words.push_back(decode(a, reading, state));

    std::vector<double> out;
    for (auto word : split_words(completion)) {
        refresh(table, state);
        const double* row = params.data() + static_cast<std::size_t>(row_of(state)) * vocab;
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < vocab; ++j) {
            if (table.emits(j, word)) m = std::max(m, row[j]);
        }
        if (!std::isfinite(m)) {
            throw BackendError("completion token '" + std::string(word) + "' cannot be produced by the toy policy");
        }
        double s = 0.0;
        for (int j = 0; j < vocab; ++j) {
            if (table.emits(j, word)) s += std::exp(row[j] - m);
        }
        out.push_back(m + std::log(s) - log_sum_exp(row, vocab));
        state = advance(state, word);
    }
    return out;
}

std::vector<GenerationResult> ToyPolicy::generate(const GenerationRequest& request) {
    return generate_from(Snapshot::live, request);
}

std::vector<double> ToyPolicy::score(std::string_view prompt, std::string_view completion) {
    return score_under(Snapshot::live, prompt, completion);
}

std::vector<GenerationResult> ToyPolicy::generate_from(Snapshot snapshot, const GenerationRequest& request) const {
    std::shared_lock lock(mutex_);
    return generate_locked(table(snapshot), request);
}

std::vector<double> ToyPolicy::score_under(Snapshot snapshot,
                                           std::string_view prompt,
                                           std::string_view completion) const {
    std::shared_lock lock(mutex_);
    return score_locked(table(snapshot), prompt, completion);
}

void ToyPolicy::accumulate_gradient(std::string_view prompt,
                                    std::string_view completion,
                                    std::span<const double> weights,
                                    ToyParameters& gradient) const {
    if (gradient.size() != num_parameters()) {
        gradient.assign(num_parameters(), 0.0);
    }
    std::shared_lock lock(mutex_);
    const auto reading = read_pointers(prompt);
    ToyState state = initial_state(prompt);
    DecodeTable table;
    const int vocab = vocab_.size();
    for (int a = 0; a < vocab; ++a) table.words.push_back(decode(a, reading, state));

    const auto words = split_words(completion);
    if (words.size() != weights.size()) {
        throw Error("gradient weights do not match the completion tokens");
    }
    std::vector<double> pi(vocab);
    for (std::size_t t = 0; t < words.size(); ++t) {
        refresh(table, state);
        const auto row_index = static_cast<std::size_t>(row_of(state)) * vocab;
        const double* row = live_.data() + row_index;
        const double lse = log_sum_exp(row, vocab);
        double p_word = 0.0;
        for (int j = 0; j < vocab; ++j) {
            pi[j] = std::exp(row[j] - lse);
            if (table.emits(j, words[t])) p_word += pi[j];
        }
        if (p_word <= 0.0) {
            throw BackendError("completion token '" + std::string(words[t]) + "' cannot be produced by the toy policy");
        }
        // d log p(word) / d logit_j = pi_j [j emits word] / p(word) - pi_j
        const double w = weights[t];
        for (int j = 0; j < vocab; ++j) {
            const double own = table.emits(j, words[t]) ? pi[j] / p_word : 0.0;
            gradient[row_index + j] += w * (own - pi[j]);
        }
        state = advance(state, words[t]);
    }
}

ToyParameters ToyPolicy::parameters(Snapshot snapshot) const {
    std::shared_lock lock(mutex_);
    return table(snapshot);
}

void ToyPolicy::set_parameters(const ToyParameters& params, Snapshot snapshot) {
    if (params.size() != num_parameters()) {
        throw Error("parameter table has the wrong size");
    }
    std::unique_lock lock(mutex_);
    switch (snapshot) {
        case Snapshot::live: live_ = params; break;
        case Snapshot::old: old_ = params; break;
        case Snapshot::reference: reference_ = params; break;
    }
}

void ToyPolicy::sync_old() {
    std::unique_lock lock(mutex_);
    old_ = live_;
}

void ToyPolicy::reset_reference() {
    std::unique_lock lock(mutex_);
    reference_ = live_;
}

void ToyPolicy::apply_gradient(const ToyParameters& gradient, double learning_rate) {
    if (gradient.size() != num_parameters()) {
        throw Error("gradient has the wrong size");
    }
    std::unique_lock lock(mutex_);
    for (std::size_t i = 0; i < live_.size(); ++i) {
        live_[i] += learning_rate * gradient[i];
    }
}

void toy_gradient_step(ToyPolicy& policy, const ToyParameters& gradient, double learning_rate) {
    for (double g : gradient) {
        if (!std::isfinite(g)) {
            throw Error("non-finite gradient");
        }
    }
    if (!std::isfinite(learning_rate)) {
        throw Error("non-finite learning rate");
    }
    policy.apply_gradient(gradient, learning_rate);
}

// Checkpoints ------------------------------------------------------------

namespace {
constexpr std::string_view kCheckpointMagic = "evidex-toy-policy";
constexpr int kCheckpointVersion = 1;
}  // namespace

void ToyPolicy::save(const std::filesystem::path& path, std::uint64_t config_hash) const {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write checkpoint " + path.string());
    }
    std::shared_lock lock(mutex_);
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "config_hash " << std::hex << std::setw(16) << std::setfill('0') << config_hash << std::dec << '\n';
    out << "rows " << num_rows() << " vocab " << vocab_.size() << " max_slot " << max_slot_ << '\n';
    for (int a = 0; a < vocab_.size(); ++a) {
        out << (a ? " " : "") << vocab_.name(a);
    }
    out << '\n' << std::setprecision(17);
    for (int r = 0; r < num_rows(); ++r) {
        for (int a = 0; a < vocab_.size(); ++a) {
            out << (a ? " " : "") << live_[static_cast<std::size_t>(r) * vocab_.size() + a];
        }
        out << '\n';
    }
}

ToyPolicy ToyPolicy::load(const std::filesystem::path& path, const ToyTaskSpec& spec, std::uint64_t* config_hash) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open checkpoint " + path.string());
    }
    std::string magic, label;
    int version = 0;
    in >> magic >> version;
    if (magic != kCheckpointMagic || version != kCheckpointVersion) {
        throw Error("not a toy policy checkpoint (version " + std::to_string(kCheckpointVersion) + "): " + path.string());
    }
    std::uint64_t hash = 0;
    in >> label >> std::hex >> hash >> std::dec;
    int rows = 0, vocab = 0, max_slot = 0;
    std::string l1, l2, l3;
    in >> l1 >> rows >> l2 >> vocab >> l3 >> max_slot;
    if (!in || label != "config_hash" || l1 != "rows" || l2 != "vocab" || l3 != "max_slot") {
        throw Error("malformed checkpoint header in " + path.string());
    }
    ToyPolicy policy(spec, max_slot);
    if (rows != policy.num_rows() || vocab != policy.vocab().size()) {
        throw Error("checkpoint shape does not match the toy policy");
    }
    for (int a = 0; a < vocab; ++a) {
        std::string name;
        in >> name;
        if (name != policy.vocab().name(a)) {
            throw Error("checkpoint vocabulary does not match the toy policy");
        }
    }
    ToyParameters params(policy.num_parameters());
    for (auto& v : params) {
        if (!(in >> v)) {
            throw Error("truncated checkpoint " + path.string());
        }
    }
    policy.set_parameters(params, Snapshot::live);
    policy.sync_old();
    policy.reset_reference();
    if (config_hash) *config_hash = hash;
    return policy;
}

}  // namespace evidex
