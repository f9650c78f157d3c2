#include "cmo/evaluators.hpp"

#include <fmt/format.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "cmo/errors.hpp"
#include "cmo/util.hpp"

namespace cmo::eval {

using nlohmann::json;

std::string_view to_string(Equation eq) { return eq == Equation::even ? "even" : "correlation"; }

Equation parse_equation(std::string_view text) {
    const std::string t = to_lower(trim(text));
    if (t == "even" || t == "eq1" || t == "1") return Equation::even;
    if (t == "correlation" || t == "eq2" || t == "2") return Equation::correlation;
    throw ConfigError(fmt::format("unknown equation '{}' (expected even or correlation)", text));
}

// ---- weights ---------------------------------------------------------------

void EvaluatorWeights::validate() const {
    for (Metric m : kMetrics) {
        const auto& w = (*this)[m];
        if (!std::isfinite(w.sim_coeff) || !std::isfinite(w.llm_coeff) || w.sim_coeff < 0 || w.llm_coeff < 0)
            throw ConfigError(fmt::format("{} weights must be finite and non-negative", to_string(m)));
        if (equation == Equation::correlation && w.sim_coeff + w.llm_coeff <= 0)
            throw ConfigError(fmt::format("{} weights sum to zero", to_string(m)));
    }
}

std::string EvaluatorWeights::to_json() const {
    json metrics = json::object();
    for (Metric m : kMetrics)
        metrics[std::string(cmo::to_string(m))] = {{"sim_coeff", (*this)[m].sim_coeff},
                                                   {"llm_coeff", (*this)[m].llm_coeff}};
    return json{{"equation", eval::to_string(equation)}, {"metrics", metrics}}.dump(2) + "\n";
}

EvaluatorWeights EvaluatorWeights::from_json(std::string_view text) {
    EvaluatorWeights w = default_weights();
    try {
        const json j = json::parse(text);
        if (j.contains("equation")) w.equation = parse_equation(j.at("equation").get<std::string>());
        if (j.contains("metrics")) {
            for (const auto& [name, v] : j.at("metrics").items()) {
                const auto m = parse_metric(name);
                if (!m) throw ConfigError("unknown metric in weights: " + name);
                w[*m].sim_coeff = v.at("sim_coeff").get<double>();
                w[*m].llm_coeff = v.at("llm_coeff").get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed weights document: ") + e.what());
    }
    w.validate();
    return w;
}

void EvaluatorWeights::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json()); }

EvaluatorWeights EvaluatorWeights::load(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("weights file not found: " + path.string());
    return from_json(read_file(path));
}

EvaluatorWeights default_weights() {
    EvaluatorWeights w;
    w[Metric::conciseness] = {0.0, 1.0};
    return w;
}

// ---- combination -------------------------------------------------------------

double combine_metric(double sim, double llm, const MetricWeight& weight, Equation equation) {
    if (equation == Equation::even) return 0.5 * (4.0 * sim) + 0.5 * llm;
    const double total = weight.sim_coeff + weight.llm_coeff;
    if (weight.sim_coeff == 0.0) return llm;
    return 4.0 * sim * (weight.sim_coeff / total) + llm * (weight.llm_coeff / total);
}

MetricScores combine(SimScore sim, const MetricScores& llm, const EvaluatorWeights& weights) {
    MetricScores out;
    for (Metric m : kMetrics) out[m] = combine_metric(sim.value, llm[m], weights[m], weights.equation);
    return out;
}

OptimizationScore optimization_score(const MetricScores& scores) {
    return {scores.values[0] + scores.values[1] + scores.values[2] + scores.values[3]};
}

// ---- LLM scorer --------------------------------------------------------------

LlmScorer::LlmScorer(llm::Gateway& gateway, llm::PromptSettings settings)
    : gateway_(gateway), settings_(std::move(settings)) {
    settings_.temperature = 0.0;
}

MetricScores LlmScorer::llm_scores(std::string_view diff_text, std::string_view message) {
    if (trim(message).empty()) throw PreconditionError("cannot score an empty commit message");
    const std::string key = sha256_hex(diff_text) + ":" + sha256_hex(message);
    {
        std::lock_guard lock(mu_);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    MetricScores out;
    for (Metric m : kMetrics) {
        const auto request = llm::build_score_prompt(diff_text, message, m, settings_);
        const std::string reply = gateway_.chat(request);
        auto value = llm::parse_score(reply);
        if (!value) {
            const std::string again = gateway_.chat(llm::build_score_reprompt(request, reply));
            value = llm::parse_score(again);
            if (!value)
                throw UnparseableResponse(
                    fmt::format("{} score reply has no integer 0-4: {}", cmo::to_string(m), again.substr(0, 40)));
        }
        out[m] = *value;
    }
    std::lock_guard lock(mu_);
    memo_.emplace(key, out);
    return out;
}

// ---- retrieval scorer ----------------------------------------------------------

SimScore mean_clamped_similarity(const std::vector<double>& message_embedding,
                                 const std::vector<corpus::Neighbor>& neighbors) {
    if (neighbors.empty()) throw EmptyIndex();
    double sum = 0.0;
    for (const auto& n : neighbors) sum += std::max(0.0, embed::cosine(message_embedding, n.entry->message_embedding));
    return {sum / static_cast<double>(neighbors.size())};
}

RetrievalScorer::RetrievalScorer(const corpus::CorpusIndex& index, embed::Embedder& embedder, std::size_t k)
    : index_(index), embedder_(embedder), k_(k) {
    if (k_ == 0) throw ConfigError("retrieval k must be at least 1");
}

std::vector<corpus::Neighbor> RetrievalScorer::neighbors(std::string_view diff_text) {
    if (index_.empty()) throw EmptyIndex();
    const std::string key = sha256_hex(diff_text);
    {
        std::lock_guard lock(mu_);
        if (auto it = neighbors_.find(key); it != neighbors_.end()) return it->second;
    }
    const auto e = embedder_.embed(embed::EmbedKind::code_diff, diff_text);
    auto found = index_.retrieve_similar(e.vector, k_);
    std::lock_guard lock(mu_);
    return neighbors_.emplace(key, std::move(found)).first->second;
}

SimScore RetrievalScorer::sim_score(std::string_view diff_text, std::string_view message) {
    const auto near = neighbors(diff_text);
    const std::string key = sha256_hex(message);
    std::vector<double> v;
    {
        std::lock_guard lock(mu_);
        if (auto it = messages_.find(key); it != messages_.end()) v = it->second;
    }
    if (v.empty()) {
        v = embedder_.embed(embed::EmbedKind::text, message).vector;
        std::lock_guard lock(mu_);
        messages_.emplace(key, v);
    }
    return mean_clamped_similarity(v, near);
}

// ---- evaluator -----------------------------------------------------------------

Evaluator::Evaluator(std::shared_ptr<LlmScoreSource> llm, std::shared_ptr<SimScoreSource> sim,
                     EvaluatorWeights weights)
    : llm_(std::move(llm)), sim_(std::move(sim)), weights_(std::move(weights)) {
    if (!llm_) throw ConfigError("evaluator needs an LLM score source");
    weights_.validate();
}

Evaluation Evaluator::evaluate(std::string_view diff_text, std::string_view message) {
    const std::string key = sha256_hex(diff_text) + ":" + sha256_hex(message);
    {
        std::lock_guard lock(mu_);
        if (auto it = memo_.find(key); it != memo_.end()) {
            ++hits_;
            return it->second;
        }
    }
    Evaluation e;
    e.llm = llm_->llm_scores(diff_text, message);
    if (sim_) {
        const SimScore s = sim_->sim_score(diff_text, message);
        e.sim = s.value;
        e.metrics = combine(s, e.llm, weights_);
    } else {
        e.metrics = e.llm;
    }
    e.opt = optimization_score(e.metrics);
    std::lock_guard lock(mu_);
    memo_.emplace(key, e);
    return e;
}

std::size_t Evaluator::cache_hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

// ---- calibration -----------------------------------------------------------------

namespace {

bool constant(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

Correlation pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw PreconditionError("pearson series differ in length");
    if (xs.size() < 3) throw PreconditionError("pearson needs at least 3 points");
    if (constant(xs) || constant(ys)) throw DegenerateInput("pearson correlation of a constant series");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Correlation c;
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (std::abs(c.r) == 1.0) {
        c.p_value = 0.0;
        return c;
    }
    const double df = n - 2.0;
    const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
    boost::math::students_t dist(df);
    c.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
    return c;
}

EvaluatorWeights calibrate_weights(const std::vector<LabeledScores>& items, double alpha) {
    if (items.size() < 10) throw PreconditionError("calibration needs at least 10 labeled items");
    EvaluatorWeights w;
    w.equation = Equation::correlation;
    std::vector<double> sim;
    for (const auto& it : items) sim.push_back(it.sim);
    const auto coefficient = [&](const std::vector<double>& xs, const std::vector<double>& human) {
        if (constant(xs)) return 0.0;
        const auto c = pearson(xs, human);
        return (c.p_value > alpha || c.r <= 0.0) ? 0.0 : c.r;
    };
    for (Metric m : kMetrics) {
        std::vector<double> human, llm;
        for (const auto& it : items) {
            human.push_back(it.human[m]);
            llm.push_back(it.llm[m]);
        }
        if (constant(human))
            throw DegenerateInput(fmt::format("human {} scores are constant", cmo::to_string(m)));
        MetricWeight mw{coefficient(sim, human), coefficient(llm, human)};
        if (mw.sim_coeff == 0.0 && mw.llm_coeff == 0.0) mw = {1.0, 1.0};
        w[m] = mw;
    }
    return w;
}

std::vector<CalibrationItem> load_calibration_set(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("calibration set not found: " + path.string());
    std::vector<CalibrationItem> out;
    int line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            CalibrationItem item;
            item.diff = j.at("diff").get<std::string>();
            item.message = j.at("message").get<std::string>();
            for (Metric m : kMetrics) {
                const double v = j.at("human_scores").at(std::string(cmo::to_string(m))).get<double>();
                if (v < 0 || v > 4) throw ConfigError(fmt::format("line {}: human score out of range", line_no));
                item.human[m] = v;
            }
            out.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
    return out;
}

EvaluatorWeights calibrate(const std::vector<CalibrationItem>& items, LlmScoreSource& llm, SimScoreSource& sim,
                           double alpha) {
    std::vector<LabeledScores> scored;
    for (const auto& it : items)
        scored.push_back({it.human, llm.llm_scores(it.diff, it.message), sim.sim_score(it.diff, it.message).value});
    return calibrate_weights(scored, alpha);
}

}  // namespace cmo::eval
