#include "evidex/response_schema.hpp"

#include <array>

namespace evidex {
namespace {

struct Span {
    std::size_t open = std::string_view::npos;   // position of the opener
    std::size_t close = std::string_view::npos;  // position of the closer
};

std::optional<std::string> segment_between(std::string_view raw,
                                           std::string_view open,
                                           std::string_view close,
                                           Span* where) {
    const auto o = raw.find(open);
    if (o == std::string_view::npos) {
        return std::nullopt;
    }
    const auto body = o + open.size();
    const auto c = raw.find(close, body);
    if (c == std::string_view::npos) {
        return std::nullopt;
    }
    if (where != nullptr) {
        *where = Span{o, c};
    }
    return std::string(raw.substr(body, c - body));
}

std::size_t count_occurrences(std::string_view raw, std::string_view token) {
    std::size_t n = 0;
    for (auto pos = raw.find(token); pos != std::string_view::npos; pos = raw.find(token, pos + token.size())) {
        ++n;
    }
    return n;
}

}  // namespace

ParsedResponse parse_response(std::string_view raw) {
    ParsedResponse out;
    out.raw = std::string(raw);

    Span reason, extract, answer;
    out.rationale = segment_between(raw, kReasonOpen, kReasonClose, &reason);
    out.evidence = segment_between(raw, kExtractOpen, kExtractClose, &extract);
    out.answer = segment_between(raw, kAnswerOpen, kAnswerClose, &answer);

    if (!out.rationale || !out.evidence || !out.answer) {
        return out;
    }
    constexpr std::array<std::string_view, 6> tags = {kReasonOpen, kReasonClose, kExtractOpen,
                                                       kExtractClose, kAnswerOpen, kAnswerClose};
    for (auto tag : tags) {
        if (count_occurrences(raw, tag) != 1) {
            return out;
        }
    }
    out.well_formed = reason.close < extract.open && extract.close < answer.open;
    return out;
}

bool check_format(std::string_view raw) { return parse_response(raw).well_formed; }

std::string render_response(std::string_view rationale, std::string_view evidence, std::string_view answer) {
    std::string out;
    out.reserve(rationale.size() + evidence.size() + answer.size() + 60);
    out.append(kReasonOpen).append(rationale).append(kReasonClose);
    out.append(kExtractOpen).append(evidence).append(kExtractClose);
    out.append(kAnswerOpen).append(answer).append(kAnswerClose);
    return out;
}

std::optional<std::string> evidence_from_extraction(std::string_view text) {
    if (auto closed = segment_between(text, kExtractOpen, kExtractClose, nullptr)) {
        return closed;
    }
    const auto o = text.find(kExtractOpen);
    if (o == std::string_view::npos) {
        return std::nullopt;
    }
    return std::string(text.substr(o + kExtractOpen.size()));
}

}  // namespace evidex
