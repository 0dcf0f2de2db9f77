#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evidex/policy_backend.hpp"
#include "evidex/toy_task.hpp"

namespace evidex {

/// Action inventory of the toy policy. Tag actions and literal words decode
/// to themselves. Three pointer actions decode to symbols read out of the
/// prompt (the question's key, the value that follows it in the context or
/// else the first value mentioned, and the rank of the passage that holds
/// it); two structural pointers decode from
/// the response so far (the opener of the segment after the last tag, and the
/// closer of the open segment). Unresolvable pointers decode to "nil".
class ToyVocab {
public:
    enum Special : int {
        kReasonOpenId = 0,
        kReasonCloseId,
        kExtractOpenId,
        kExtractCloseId,
        kAnswerOpenId,
        kAnswerCloseId,
        kKeyPointer,
        kValuePointer,
        kPassagePointer,
        kOpenPointer,
        kClosePointer,
        kFirstLiteral
    };
    static constexpr int kNumTags = 6;
    static constexpr std::string_view kUnresolved = "nil";

    explicit ToyVocab(const ToyTaskSpec& spec);

    int size() const noexcept { return static_cast<int>(names_.size()); }
    const std::string& name(int action) const { return names_.at(action); }
    const ToyTaskSpec& spec() const noexcept { return spec_; }

    bool is_key(std::string_view word) const;
    bool is_value(std::string_view word) const;

    /// Tag index 0..5 for tag words, -1 otherwise.
    static int tag_index(std::string_view word);

private:
    ToyTaskSpec spec_;
    std::vector<std::string> names_;
};

/// Symbols the pointer actions resolve to for one prompt.
struct PointerReading {
    std::string key;
    std::string value;
    std::string passage;
};

/// Decoding state: last structural tag seen (0 = none, 1..6 = tag id + 1)
/// and the number of tokens emitted since it.
struct ToyState {
    int last_tag = 0;
    int since_tag = 0;
};

using ToyParameters = std::vector<double>;

enum class Snapshot { live, old, reference };

/// Tabular softmax policy: one logit row per (open segment, tokens since last
/// tag) over the toy action vocabulary. The open segment is reason, extract or
/// answer when the last tag was that opener, and "outside" otherwise. Word
/// probabilities marginalize over the actions that decode to the same word.
class ToyPolicy : public GenerationBackend {
public:
    static constexpr int kNumSegments = 4;

    explicit ToyPolicy(const ToyTaskSpec& spec, int max_slot = 8);
    ToyPolicy(const ToyPolicy& other);
    ToyPolicy& operator=(const ToyPolicy& other);

    std::vector<GenerationResult> generate(const GenerationRequest& request) override;
    std::vector<double> score(std::string_view prompt, std::string_view completion) override;

    std::vector<GenerationResult> generate_from(Snapshot snapshot, const GenerationRequest& request) const;
    std::vector<double> score_under(Snapshot snapshot, std::string_view prompt, std::string_view completion) const;

    /// Accumulates d(sum_t w_t * logp_t)/d(logits) into `gradient` (live
    /// parameters), for the tokens of `completion` given `prompt`.
    void accumulate_gradient(std::string_view prompt,
                             std::string_view completion,
                             std::span<const double> weights,
                             ToyParameters& gradient) const;

    ToyParameters parameters(Snapshot snapshot = Snapshot::live) const;
    void set_parameters(const ToyParameters& params, Snapshot snapshot = Snapshot::live);
    void sync_old();
    void reset_reference();
    /// live += learning_rate * gradient, under the write lock.
    void apply_gradient(const ToyParameters& gradient, double learning_rate);

    const ToyVocab& vocab() const noexcept { return vocab_; }
    int max_slot() const noexcept { return max_slot_; }
    int num_rows() const noexcept { return kNumSegments * max_slot_; }
    std::size_t num_parameters() const noexcept {
        return static_cast<std::size_t>(num_rows()) * static_cast<std::size_t>(vocab_.size());
    }

    int row_of(const ToyState& state) const;
    PointerReading read_pointers(std::string_view prompt) const;
    ToyState initial_state(std::string_view prompt) const;
    static ToyState advance(ToyState state, std::string_view word);
    std::string decode(int action, const PointerReading& reading, const ToyState& state) const;

    /// Text checkpoint carrying the live parameters and a config hash.
    void save(const std::filesystem::path& path, std::uint64_t config_hash) const;
    static ToyPolicy load(const std::filesystem::path& path, const ToyTaskSpec& spec, std::uint64_t* config_hash = nullptr);

private:
    const ToyParameters& table(Snapshot snapshot) const;
    std::vector<GenerationResult> generate_locked(const ToyParameters& params, const GenerationRequest& request) const;
    std::vector<double> score_locked(const ToyParameters& params, std::string_view prompt, std::string_view completion) const;

    ToyVocab vocab_;
    int max_slot_;
    ToyParameters live_;
    ToyParameters old_;
    ToyParameters reference_;
    mutable std::shared_mutex mutex_;
    mutable std::atomic<std::uint64_t> call_counter_{0};
};

/// Read-only backend view of one snapshot of a ToyPolicy.
class SnapshotView : public GenerationBackend {
public:
    SnapshotView(const ToyPolicy& policy, Snapshot snapshot) : policy_(policy), snapshot_(snapshot) {}

    std::vector<GenerationResult> generate(const GenerationRequest& request) override {
        return policy_.generate_from(snapshot_, request);
    }
    std::vector<double> score(std::string_view prompt, std::string_view completion) override {
        return policy_.score_under(snapshot_, prompt, completion);
    }

private:
    const ToyPolicy& policy_;
    Snapshot snapshot_;
};

/// Gradient ascent on the live parameters. Snapshots are untouched.
/// Throws Error on a non-finite gradient.
void toy_gradient_step(ToyPolicy& policy, const ToyParameters& gradient, double learning_rate);

}  // namespace evidex
