#include "cmo/types.hpp"

#include <bit>

#include "cmo/util.hpp"

namespace cmo {

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::rationality: return "rationality";
        case Metric::comprehensiveness: return "comprehensiveness";
        case Metric::conciseness: return "conciseness";
        case Metric::expressiveness: return "expressiveness";
    }
    return "rationality";
}

std::optional<Metric> parse_metric(std::string_view name) {
    const std::string lower = to_lower(name);
    for (Metric m : kMetrics)
        if (lower == to_string(m)) return m;
    return std::nullopt;
}

bool MetricScores::valid() const {
    for (double v : values)
        if (!(v >= 0.0 && v <= 4.0)) return false;
    return true;
}

MetricScores make_scores(double rationality, double comprehensiveness, double conciseness, double expressiveness) {
    return MetricScores{{rationality, comprehensiveness, conciseness, expressiveness}};
}

std::string_view to_string(ContextKind k) {
    switch (k) {
        case ContextKind::ImportantFileInfo: return "ImportantFileInfo";
        case ContextKind::PullRequestIssueTitle: return "PullRequestIssueTitle";
        case ContextKind::MethodBodySummary: return "MethodBodySummary";
        case ContextKind::ClassBodySummary: return "ClassBodySummary";
        case ContextKind::SyntacticBlock: return "SyntacticBlock";
        case ContextKind::InvokedMethods: return "InvokedMethods";
        case ContextKind::VariableDataTypes: return "VariableDataTypes";
    }
    return "ImportantFileInfo";
}

std::string_view display_name(ContextKind k) {
    switch (k) {
        case ContextKind::ImportantFileInfo: return "Important File Information";
        case ContextKind::PullRequestIssueTitle: return "Pull Request/Issue Title";
        case ContextKind::MethodBodySummary: return "Method Body Summary";
        case ContextKind::ClassBodySummary: return "Class Body Summary";
        case ContextKind::SyntacticBlock: return "Syntactically Related Code Block";
        case ContextKind::InvokedMethods: return "Invoked Methods";
        case ContextKind::VariableDataTypes: return "Variable Data Types";
    }
    return "";
}

std::optional<ContextKind> parse_context_kind(std::string_view name) {
    const std::string lower = to_lower(name);
    for (ContextKind k : kContextKinds)
        if (lower == to_lower(to_string(k))) return k;
    return std::nullopt;
}

std::size_t ContextKindSet::size() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<ContextKind> ContextKindSet::kinds() const {
    std::vector<ContextKind> out;
    for (ContextKind k : kContextKinds)
        if (contains(k)) out.push_back(k);
    return out;
}

std::vector<std::string> default_commit_taxonomy() {
    return {"feat", "fix", "refactor", "docs", "test", "style", "build", "chore"};
}

}  // namespace cmo
