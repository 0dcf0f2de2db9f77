#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace evidex {

inline constexpr std::string_view kReasonOpen = "<reason>";
inline constexpr std::string_view kReasonClose = "</reason>";
inline constexpr std::string_view kExtractOpen = "<extract>";
inline constexpr std::string_view kExtractClose = "</extract>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

/// Deployment-time extraction stops once the evidence is closed.
inline constexpr std::string_view kExtractionStop = kExtractClose;

struct ParsedResponse {
    std::string raw;
    std::optional<std::string> rationale;
    std::optional<std::string> evidence;
    std::optional<std::string> answer;
    bool well_formed = false;
};

ParsedResponse parse_response(std::string_view raw);
bool check_format(std::string_view raw);

/// Canonical "<reason>r</reason><extract>e</extract><answer>a</answer>".
std::string render_response(std::string_view rationale, std::string_view evidence, std::string_view answer);

/// Evidence from an extraction-only decode. Servers that drop the stop
/// sequence leave "<extract>..." unterminated; that tail is accepted.
std::optional<std::string> evidence_from_extraction(std::string_view text);

}  // namespace evidex
