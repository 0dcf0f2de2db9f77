#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "evidex/corpus.hpp"
#include "evidex/response_schema.hpp"

namespace evidex {

enum class ContextMode { rationale_only, evidence_only, full };

std::string_view to_string(ContextMode mode);

/// A freshly rendered generation prompt with some knowledge hard-masked out.
/// `permitted_segments` lists the content the prompt is allowed to carry;
/// overlap between a masked segment and permitted content is not a leak.
struct MaskedContext {
    ContextMode mode = ContextMode::full;
    std::string prompt;
    std::vector<std::string> masked_segments;
    std::vector<std::string> permitted_segments;
};

/// rationale_only: question, passages and rationale, evidence masked.
/// evidence_only:  question and evidence, passages and rationale masked.
/// full:           the extraction prompt followed by the sampled response up
///                 to and including the answer opener.
/// Throws MissingSegmentError when the response lacks a segment the mode needs.
MaskedContext build_context(ContextMode mode,
                            const QAInstance& instance,
                            const ParsedResponse& parsed,
                            const TemplateSet& templates);

inline constexpr std::size_t kLeakShingleWords = 4;

/// True iff no 4-word normalized shingle of a masked segment appears in the
/// prompt without also appearing in permitted content.
bool assert_no_leakage(const MaskedContext& ctx);

}  // namespace evidex
