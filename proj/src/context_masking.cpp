#include "evidex/context_masking.hpp"

#include <unordered_set>

#include "evidex/errors.hpp"
#include "evidex/text_metrics.hpp"

namespace evidex {

std::string_view to_string(ContextMode mode) {
    switch (mode) {
        case ContextMode::rationale_only: return "rationale_only";
        case ContextMode::evidence_only: return "evidence_only";
        case ContextMode::full: return "full";
    }
    return "full";
}

namespace {

/// Static text of a template, split at its placeholders.
std::vector<std::string> template_literals(const PromptTemplate& tmpl) {
    std::vector<std::string> out;
    const std::string_view body = tmpl.body;
    std::size_t start = 0;
    for (std::size_t pos = body.find('{'); pos != std::string_view::npos; pos = body.find('{', pos + 1)) {
        const auto close = body.find('}', pos);
        if (close == std::string_view::npos) {
            break;
        }
        out.emplace_back(body.substr(start, pos - start));
        start = close + 1;
        pos = close;
    }
    out.emplace_back(body.substr(start));
    return out;
}

const std::string& require(const std::optional<std::string>& seg, const char* what, ContextMode mode) {
    if (!seg) {
        throw MissingSegmentError(std::string("response has no ") + what + " segment required by " +
                                  std::string(to_string(mode)) + " context");
    }
    return *seg;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::unordered_set<std::string> shingles(std::string_view text) {
    const auto bag = normalize(text);
    std::unordered_set<std::string> out;
    if (bag.tokens.size() < kLeakShingleWords) {
        return out;
    }
    for (std::size_t i = 0; i + kLeakShingleWords <= bag.tokens.size(); ++i) {
        std::string s = bag.tokens[i];
        for (std::size_t k = 1; k < kLeakShingleWords; ++k) {
            s.push_back(' ');
            s += bag.tokens[i + k];
        }
        out.insert(std::move(s));
    }
    return out;
}

}  // namespace

MaskedContext build_context(ContextMode mode,
                            const QAInstance& instance,
                            const ParsedResponse& parsed,
                            const TemplateSet& templates) {
    MaskedContext ctx;
    ctx.mode = mode;
    switch (mode) {
        case ContextMode::rationale_only: {
            const auto& rationale = require(parsed.rationale, "rationale", mode);
            const auto passages = join_passages(instance.passages);
            const auto document = passages + "\n\nRationale: " + trim(rationale);
            ctx.prompt = render_prompt(templates.rag_qa, instance, document);
            ctx.masked_segments = {parsed.evidence.value_or(std::string{})};
            ctx.permitted_segments = template_literals(templates.rag_qa);
            ctx.permitted_segments.push_back(instance.question);
            ctx.permitted_segments.push_back(passages);
            ctx.permitted_segments.push_back(rationale);
            break;
        }
        case ContextMode::evidence_only: {
            const auto& evidence = require(parsed.evidence, "evidence", mode);
            ctx.prompt = render_prompt(templates.rag_qa, instance, trim(evidence));
            for (const auto& p : instance.passages) {
                ctx.masked_segments.push_back(p.body);
            }
            ctx.masked_segments.push_back(parsed.rationale.value_or(std::string{}));
            ctx.permitted_segments = template_literals(templates.rag_qa);
            ctx.permitted_segments.push_back(instance.question);
            ctx.permitted_segments.push_back(evidence);
            break;
        }
        case ContextMode::full: {
            const auto& rationale = require(parsed.rationale, "rationale", mode);
            const auto& evidence = require(parsed.evidence, "evidence", mode);
            ctx.prompt = render_prompt(templates.rational_extraction, instance);
            // Reuse the sampled prefix verbatim when the response carries it,
            // so the context matches what the policy was conditioned on.
            const std::string_view raw = parsed.raw;
            const auto extract_close = raw.find(kExtractClose);
            const auto answer_open =
                extract_close == std::string_view::npos ? extract_close : raw.find(kAnswerOpen, extract_close);
            if (parsed.well_formed && answer_open != std::string_view::npos) {
                ctx.prompt.append(raw.substr(0, answer_open + kAnswerOpen.size()));
            } else {
                ctx.prompt.append(kReasonOpen).append(rationale).append(kReasonClose);
                ctx.prompt.append(kExtractOpen).append(evidence).append(kExtractClose);
                ctx.prompt.append(kAnswerOpen);
            }
            break;
        }
    }
    return ctx;
}

bool assert_no_leakage(const MaskedContext& ctx) {
    const auto prompt = shingles(ctx.prompt);
    std::unordered_set<std::string> permitted;
    for (const auto& seg : ctx.permitted_segments) {
        auto s = shingles(seg);
        permitted.insert(s.begin(), s.end());
    }
    for (const auto& seg : ctx.masked_segments) {
        for (const auto& sh : shingles(seg)) {
            if (prompt.count(sh) && !permitted.count(sh)) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace evidex
