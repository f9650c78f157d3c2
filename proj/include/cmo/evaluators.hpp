#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmo/corpus.hpp"
#include "cmo/embed.hpp"
#include "cmo/gateway.hpp"
#include "cmo/prompts.hpp"
#include "cmo/types.hpp"

namespace cmo::eval {

enum class Equation { even, correlation };

std::string_view to_string(Equation eq);
/// Accepts "even"/"eq1" and "correlation"/"eq2". Throws ConfigError.
Equation parse_equation(std::string_view text);

struct MetricWeight {
    double sim_coeff = 1.0;
    double llm_coeff = 1.0;
    friend bool operator==(const MetricWeight&, const MetricWeight&) = default;
};

struct EvaluatorWeights {
    Equation equation = Equation::correlation;
    std::array<MetricWeight, 4> per_metric{};

    const MetricWeight& operator[](Metric m) const { return per_metric[static_cast<std::size_t>(m)]; }
    MetricWeight& operator[](Metric m) { return per_metric[static_cast<std::size_t>(m)]; }

    /// Throws ConfigError on negative or non-finite coefficients, or a zero pair under
    /// the correlation equation.
    void validate() const;

    std::string to_json() const;
    static EvaluatorWeights from_json(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static EvaluatorWeights load(const std::filesystem::path& path);

    friend bool operator==(const EvaluatorWeights&, const EvaluatorWeights&) = default;
};

/// Correlation weighting with equal coefficients, except conciseness which uses the
/// LLM score alone.
EvaluatorWeights default_weights();

/// Mean cosine similarity in [0, 1].
struct SimScore {
    double value = 0.0;
};

double combine_metric(double sim, double llm, const MetricWeight& weight, Equation equation);
MetricScores combine(SimScore sim, const MetricScores& llm, const EvaluatorWeights& weights);
OptimizationScore optimization_score(const MetricScores& scores);

// ---- score sources ---------------------------------------------------------

class LlmScoreSource {
public:
    virtual ~LlmScoreSource() = default;
    /// Integer scores in 0..4.
    virtual MetricScores llm_scores(std::string_view diff_text, std::string_view message) = 0;
};

class SimScoreSource {
public:
    virtual ~SimScoreSource() = default;
    virtual SimScore sim_score(std::string_view diff_text, std::string_view message) = 0;
};

/// One score prompt per metric at temperature 0; an unparseable reply is re-asked once.
/// Results are memoized on the (diff, message) pair.
class LlmScorer final : public LlmScoreSource {
public:
    explicit LlmScorer(llm::Gateway& gateway, llm::PromptSettings settings = {});
    /// Throws PreconditionError on an empty message and UnparseableResponse.
    MetricScores llm_scores(std::string_view diff_text, std::string_view message) override;

private:
    llm::Gateway& gateway_;
    llm::PromptSettings settings_;
    std::mutex mu_;
    std::map<std::string, MetricScores> memo_;
};

/// Mean of the message cosines against the top-k neighbours' messages, each clamped at 0.
SimScore mean_clamped_similarity(const std::vector<double>& message_embedding,
                                 const std::vector<corpus::Neighbor>& neighbors);

/// Retrieval-based scorer: neighbours are chosen by diff similarity, then compared by message.
class RetrievalScorer final : public SimScoreSource {
public:
    RetrievalScorer(const corpus::CorpusIndex& index, embed::Embedder& embedder, std::size_t k = 10);
    /// Throws EmptyIndex and EmbedServiceError.
    SimScore sim_score(std::string_view diff_text, std::string_view message) override;

    /// The k most similar corpus entries to `diff_text`; cached per diff.
    std::vector<corpus::Neighbor> neighbors(std::string_view diff_text);

private:
    const corpus::CorpusIndex& index_;
    embed::Embedder& embedder_;
    std::size_t k_;
    std::mutex mu_;
    std::map<std::string, std::vector<corpus::Neighbor>> neighbors_;
    std::map<std::string, std::vector<double>> messages_;
};

// ---- evaluation --------------------------------------------------------------

struct Evaluation {
    MetricScores metrics;
    MetricScores llm;
    /// Absent when similarity scoring is disabled.
    std::optional<double> sim;
    OptimizationScore opt;
};

class CandidateEvaluator {
public:
    virtual ~CandidateEvaluator() = default;
    virtual Evaluation evaluate(std::string_view diff_text, std::string_view message) = 0;
};

/// Memoized composition of the score sources. Without a similarity source every
/// metric score is the LLM score.
class Evaluator final : public CandidateEvaluator {
public:
    Evaluator(std::shared_ptr<LlmScoreSource> llm, std::shared_ptr<SimScoreSource> sim, EvaluatorWeights weights);
    Evaluation evaluate(std::string_view diff_text, std::string_view message) override;

    const EvaluatorWeights& weights() const noexcept { return weights_; }
    std::size_t cache_hits() const;

private:
    std::shared_ptr<LlmScoreSource> llm_;
    std::shared_ptr<SimScoreSource> sim_;
    EvaluatorWeights weights_;
    mutable std::mutex mu_;
    std::map<std::string, Evaluation> memo_;
    std::size_t hits_ = 0;
};

// ---- calibration -------------------------------------------------------------

struct Correlation {
    double r = 0.0;
    double p_value = 1.0;
};

/// Pearson r with a two-tailed Student-t p-value on n-2 degrees of freedom.
/// Throws PreconditionError for mismatched or short series, DegenerateInput for a constant one.
Correlation pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct LabeledScores {
    MetricScores human;
    MetricScores llm;
    double sim = 0.0;
};

/// Coefficients are Pearson r against the human scores; any with p > alpha or r <= 0 is
/// zeroed, and a metric left with two zeros falls back to even weights. A constant score
/// series counts as insignificant. Throws PreconditionError below 10 items and
/// DegenerateInput when a human series is constant.
EvaluatorWeights calibrate_weights(const std::vector<LabeledScores>& items, double alpha = 0.05);

struct CalibrationItem {
    std::string diff;
    std::string message;
    MetricScores human;
};

/// JSON lines of {diff, message, human_scores: {rationality, comprehensiveness, conciseness, expressiveness}}.
std::vector<CalibrationItem> load_calibration_set(const std::filesystem::path& path);

/// Scores every item with both sources, then calibrates.
EvaluatorWeights calibrate(const std::vector<CalibrationItem>& items, LlmScoreSource& llm, SimScoreSource& sim,
                           double alpha = 0.05);

}  // namespace cmo::eval
