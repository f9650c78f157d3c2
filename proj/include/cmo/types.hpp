#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cmo {

// ---- quality metrics -------------------------------------------------------

enum class Metric { rationality = 0, comprehensiveness = 1, conciseness = 2, expressiveness = 3 };

inline constexpr std::array<Metric, 4> kMetrics = {Metric::rationality, Metric::comprehensiveness,
                                                   Metric::conciseness, Metric::expressiveness};

std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

/// The four-dimensional quality vector; each component lies in [0, 4].
struct MetricScores {
    std::array<double, 4> values{};

    double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
    double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }

    double rationality() const { return (*this)[Metric::rationality]; }
    double comprehensiveness() const { return (*this)[Metric::comprehensiveness]; }
    double conciseness() const { return (*this)[Metric::conciseness]; }
    double expressiveness() const { return (*this)[Metric::expressiveness]; }

    bool valid() const;
    friend bool operator==(const MetricScores&, const MetricScores&) = default;
};

MetricScores make_scores(double rationality, double comprehensiveness, double conciseness, double expressiveness);

/// Sum of the four metric scores, in [0, 16].
struct OptimizationScore {
    double value = 0.0;
    friend auto operator<=>(const OptimizationScore&, const OptimizationScore&) = default;
};

// ---- software contexts -----------------------------------------------------

enum class ContextKind : std::uint8_t {
    ImportantFileInfo = 0,
    PullRequestIssueTitle,
    MethodBodySummary,
    ClassBodySummary,
    SyntacticBlock,
    InvokedMethods,
    VariableDataTypes,
};

inline constexpr std::size_t kContextKindCount = 7;
inline constexpr std::array<ContextKind, kContextKindCount> kContextKinds = {
    ContextKind::ImportantFileInfo, ContextKind::PullRequestIssueTitle, ContextKind::MethodBodySummary,
    ContextKind::ClassBodySummary,  ContextKind::SyntacticBlock,        ContextKind::InvokedMethods,
    ContextKind::VariableDataTypes};

std::string_view to_string(ContextKind k);
/// Human-readable label used in prompts, e.g. "Method Body Summary".
std::string_view display_name(ContextKind k);
std::optional<ContextKind> parse_context_kind(std::string_view name);

/// Set of context kinds, iterated in declaration order.
class ContextKindSet {
public:
    ContextKindSet() = default;

    bool contains(ContextKind k) const noexcept { return (bits_ >> static_cast<unsigned>(k)) & 1U; }
    void insert(ContextKind k) noexcept { bits_ |= static_cast<std::uint8_t>(1U << static_cast<unsigned>(k)); }
    ContextKindSet with(ContextKind k) const noexcept {
        ContextKindSet s = *this;
        s.insert(k);
        return s;
    }
    std::size_t size() const noexcept;
    bool empty() const noexcept { return bits_ == 0; }
    std::vector<ContextKind> kinds() const;
    std::uint8_t bits() const noexcept { return bits_; }

    friend bool operator==(const ContextKindSet&, const ContextKindSet&) = default;

private:
    std::uint8_t bits_ = 0;
};

struct ContextItem {
    ContextKind kind = ContextKind::ImportantFileInfo;
    std::string payload;
    /// Where the payload came from: "path:first-last", a URL, or "classifier".
    std::string provenance;
};

struct CommitType {
    std::string label;
    friend bool operator==(const CommitType&, const CommitType&) = default;
};

std::vector<std::string> default_commit_taxonomy();

// ---- search candidates -----------------------------------------------------

struct MessageCandidate {
    std::size_t id = 0;
    std::string text;
    ContextKindSet considered;
    MetricScores scores;
    OptimizationScore opt_score;
    std::optional<std::size_t> parent_id;
    std::optional<ContextKind> added_kind;
    int created_at_step = 0;
    double temperature_used = 0.0;
};

}  // namespace cmo
