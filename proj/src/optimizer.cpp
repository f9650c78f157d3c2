#include "cmo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cmo/errors.hpp"
#include "cmo/util.hpp"

namespace cmo::opt {

using nlohmann::json;

void OptimizerConfig::validate() const {
    if (step_limit <= 0) throw ConfigError("step_limit must be positive");
    if (!(p > 0.0 && p <= 100.0)) throw ConfigError("p must lie in (0, 100]");
    if (!std::isfinite(base_temperature) || base_temperature < 0.0)
        throw ConfigError("base_temperature must be a non-negative number");
    if (!std::isfinite(escalated_temperature) || escalated_temperature <= base_temperature)
        throw ConfigError("escalated_temperature must exceed base_temperature");
}

double threshold_schedule(double t_prev, int step, int step_limit, double min_threshold) {
    if (step < 1 || step_limit < 1) throw PreconditionError("threshold_schedule: step and step_limit must be >= 1");
    const double next = t_prev - t_prev * static_cast<double>(step) / static_cast<double>(step_limit);
    return std::max(next, min_threshold);
}

// ---- updaters ----------------------------------------------------------------

GatewayUpdater::GatewayUpdater(llm::Gateway& gateway, std::string diff_text, UpdateSettings settings)
    : gateway_(gateway), diff_text_(std::move(diff_text)), settings_(std::move(settings)) {}

std::string GatewayUpdater::update(const MessageCandidate& current, const ContextItem& context, double temperature) {
    llm::UpdateInputs in{diff_text_,     current.text,          context, current.considered, current.scores,
                         settings_.commit_type, settings_.similar};
    llm::PromptSettings ps = settings_.prompt;
    ps.temperature = temperature;
    return llm::clean_message(gateway_.chat(llm::build_update_prompt(in, ps)));
}

std::string GatewayUpdater::update_all(const MessageCandidate& current, const std::vector<ContextItem>& contexts,
                                       double temperature) {
    llm::UpdateAllInputs in{diff_text_, current.text, contexts, current.scores, settings_.commit_type,
                            settings_.similar};
    llm::PromptSettings ps = settings_.prompt;
    ps.temperature = temperature;
    return llm::clean_message(gateway_.chat(llm::build_update_all_prompt(in, ps)));
}

// ---- queue -------------------------------------------------------------------

bool CandidateQueue::before(const MessageCandidate& a, std::size_t seq_a, const MessageCandidate& b,
                            std::size_t seq_b) {
    if (a.opt_score.value != b.opt_score.value) return a.opt_score.value > b.opt_score.value;
    if (a.considered.size() != b.considered.size()) return a.considered.size() < b.considered.size();
    return seq_a < seq_b;
}

namespace {

// std heap keeps the "largest" element on top, so order by "dequeued later".
struct LaterFirst {
    template <typename Slot>
    bool operator()(const Slot& x, const Slot& y) const {
        return CandidateQueue::before(y.candidate, y.seq, x.candidate, x.seq);
    }
};

}  // namespace

void CandidateQueue::push(const MessageCandidate& candidate) {
    heap_.push_back({candidate, next_seq_++});
    std::push_heap(heap_.begin(), heap_.end(), LaterFirst{});
}

const MessageCandidate& CandidateQueue::head() const {
    if (heap_.empty()) throw PreconditionError("head of an empty candidate queue");
    return heap_.front().candidate;
}

MessageCandidate CandidateQueue::pop() {
    if (heap_.empty()) throw PreconditionError("pop from an empty candidate queue");
    std::pop_heap(heap_.begin(), heap_.end(), LaterFirst{});
    MessageCandidate out = std::move(heap_.back().candidate);
    heap_.pop_back();
    return out;
}

std::vector<std::size_t> CandidateQueue::order() const {
    std::vector<Slot> sorted = heap_;
    std::sort(sorted.begin(), sorted.end(),
              [](const Slot& x, const Slot& y) { return before(x.candidate, x.seq, y.candidate, y.seq); });
    std::vector<std::size_t> ids;
    ids.reserve(sorted.size());
    for (const auto& s : sorted) ids.push_back(s.candidate.id);
    return ids;
}

std::string_view to_string(StopReason reason) {
    switch (reason) {
        case StopReason::step_limit: return "step_limit";
        case StopReason::threshold: return "threshold";
        case StopReason::queue_exhausted: return "queue_exhausted";
    }
    return "unknown";
}

// ---- serialization -----------------------------------------------------------

namespace {

json scores_array(const MetricScores& s) { return json(s.values); }

MetricScores scores_from(const json& j) {
    MetricScores s;
    if (!j.is_array() || j.size() != 4) throw ConfigError("trace: score arrays need four entries");
    for (std::size_t i = 0; i < 4; ++i) s.values[i] = j.at(i).get<double>();
    return s;
}

json scores_object(const MetricScores& s) {
    json j = json::object();
    for (Metric m : kMetrics) j[std::string(to_string(m))] = s[m];
    return j;
}

json evaluation_json(const eval::Evaluation& e) {
    return {{"metrics", scores_array(e.metrics)},
            {"llm", scores_array(e.llm)},
            {"sim", e.sim ? json(*e.sim) : json(nullptr)},
            {"opt", e.opt.value}};
}

eval::Evaluation evaluation_from(const json& j) {
    eval::Evaluation e;
    e.metrics = scores_from(j.at("metrics"));
    e.llm = scores_from(j.at("llm"));
    if (!j.at("sim").is_null()) e.sim = j.at("sim").get<double>();
    e.opt.value = j.at("opt").get<double>();
    return e;
}

json kinds_json(const ContextKindSet& set) {
    json j = json::array();
    for (ContextKind k : set.kinds()) j.push_back(std::string(to_string(k)));
    return j;
}

ContextKind kind_from(const json& j) {
    auto k = parse_context_kind(j.get<std::string>());
    if (!k) throw ConfigError("trace: unknown context kind " + j.dump());
    return *k;
}

json candidate_json(const MessageCandidate& c, const eval::Evaluation& e) {
    return {{"id", c.id},
            {"parent", c.parent_id ? json(*c.parent_id) : json(nullptr)},
            {"kind", c.added_kind ? json(std::string(to_string(*c.added_kind))) : json(nullptr)},
            {"considered", kinds_json(c.considered)},
            {"temperature", c.temperature_used},
            {"text", c.text},
            {"evaluation", evaluation_json(e)}};
}

std::string result_document(const MessageCandidate& c, std::string_view stop, int steps) {
    json j = {{"message", c.text},
              {"metric_scores", scores_object(c.scores)},
              {"opt_score", c.opt_score.value},
              {"stop_reason", std::string(stop)},
              {"steps_used", steps}};
    return j.dump(2) + "\n";
}

MessageCandidate root_candidate(std::string_view human_message, const eval::Evaluation& e, double temperature) {
    MessageCandidate root;
    root.id = 0;
    root.text = std::string(human_message);
    root.scores = e.metrics;
    root.opt_score = e.opt;
    root.temperature_used = temperature;
    return root;
}

void check_contexts(const std::vector<ContextItem>& contexts) {
    if (contexts.empty()) throw NoContexts();
    ContextKindSet seen;
    for (const auto& c : contexts) {
        if (seen.contains(c.kind))
            throw PreconditionError(fmt::format("duplicate context kind {}", to_string(c.kind)));
        seen.insert(c.kind);
    }
}

}  // namespace

std::string OptimizationResult::trace_text() const {
    std::string out;
    for (const auto& line : trace) out += line + "\n";
    return out;
}

std::string OptimizationResult::result_json() const {
    return result_document(best, to_string(stop_reason), steps_used);
}

std::string NoSearchResult::result_json() const { return result_document(message, "no_search", 1); }

// ---- search ------------------------------------------------------------------

MessageCandidate update_candidate(const MessageCandidate& current, const ContextItem& context,
                                  std::string_view diff_text, eval::CandidateEvaluator& evaluator, Updater& updater,
                                  double temperature) {
    if (current.considered.contains(context.kind))
        throw PreconditionError(fmt::format("context {} already considered", to_string(context.kind)));
    std::string text = updater.update(current, context, temperature);
    if (trim(text).empty()) throw UnparseableResponse("update produced an empty message");
    const eval::Evaluation e = evaluator.evaluate(diff_text, text);
    MessageCandidate child;
    child.text = std::move(text);
    child.considered = current.considered.with(context.kind);
    child.scores = e.metrics;
    child.opt_score = e.opt;
    child.parent_id = current.id;
    child.added_kind = context.kind;
    child.temperature_used = temperature;
    return child;
}

OptimizationResult optimize(std::string_view diff_text, std::string_view human_message,
                            const std::vector<ContextItem>& contexts, eval::CandidateEvaluator& evaluator,
                            Updater& updater, const OptimizerConfig& config) {
    config.validate();
    check_contexts(contexts);

    const int n = config.step_limit;
    const eval::Evaluation initial = evaluator.evaluate(diff_text, human_message);
    double highest = initial.opt.value;
    double threshold = highest * config.p / 100.0;
    const double min_threshold = threshold / n;
    double temperature = config.base_temperature;
    bool escalated = false;

    OptimizationResult result;
    result.initial = root_candidate(human_message, initial, temperature);
    result.best = result.initial;
    result.candidates.push_back(result.initial);
    result.highest_history.push_back(highest);

    CandidateQueue queue;
    queue.push(result.initial);

    result.trace.push_back(json{{"event", "init"},
                                {"step_limit", n},
                                {"p", config.p},
                                {"threshold", threshold},
                                {"min_threshold", min_threshold},
                                {"temperature", temperature},
                                {"highest", highest},
                                {"root", candidate_json(result.initial, initial)}}
                               .dump());

    std::optional<StopReason> stop;
    int step = 0;
    while (step < n) {
        if (queue.empty()) {
            stop = StopReason::queue_exhausted;
            break;
        }
        ++step;
        threshold = threshold_schedule(threshold, step, n, min_threshold);

        const MessageCandidate current = queue.pop();
        json generated = json::array();
        json failed = json::array();
        for (const ContextItem& context : contexts) {
            if (current.considered.contains(context.kind)) continue;
            ++result.update_calls;
            std::string text;
            try {
                text = updater.update(current, context, temperature);
            } catch (const GatewayError& e) {
                spdlog::warn("step {}: update of candidate {} with {} failed: {}", step, current.id,
                             to_string(context.kind), e.what());
                failed.push_back({{"kind", std::string(to_string(context.kind))},
                                  {"temperature", temperature},
                                  {"error", "gateway"},
                                  {"detail", e.what()}});
                continue;
            }
            if (trim(text).empty()) {
                spdlog::warn("step {}: update of candidate {} with {} returned an empty message", step, current.id,
                             to_string(context.kind));
                failed.push_back({{"kind", std::string(to_string(context.kind))},
                                  {"temperature", temperature},
                                  {"error", "empty"},
                                  {"detail", "empty message"}});
                continue;
            }
            const eval::Evaluation e = evaluator.evaluate(diff_text, text);
            MessageCandidate child;
            child.id = result.candidates.size();
            child.text = std::move(text);
            child.considered = current.considered.with(context.kind);
            child.scores = e.metrics;
            child.opt_score = e.opt;
            child.parent_id = current.id;
            child.added_kind = context.kind;
            child.created_at_step = step;
            child.temperature_used = temperature;
            result.candidates.push_back(child);
            queue.push(child);
            generated.push_back(candidate_json(child, e));
        }

        json record = {{"event", "step"},       {"step", step},           {"threshold", threshold},
                       {"temperature", temperature}, {"dequeued", current.id}, {"generated", generated},
                       {"failed", failed},      {"queue", queue.order()}};

        bool updated = false;
        if (!queue.empty()) {
            const MessageCandidate& head = queue.head();
            record["head"] = head.id;
            if (head.opt_score.value > highest) {
                updated = true;
                highest = head.opt_score.value;
                result.best = head;
                result.highest_history.push_back(highest);
                const auto& h = result.highest_history;
                if (h.size() >= 3 && h[h.size() - 1] - h[h.size() - 3] < threshold) {
                    if (escalated) {
                        stop = StopReason::threshold;
                    } else {
                        escalated = true;
                        temperature = config.escalated_temperature;
                        spdlog::info("step {}: improvement below {:.4f}, raising temperature to {}", step, threshold,
                                     temperature);
                    }
                }
            }
        } else {
            record["head"] = nullptr;
        }
        record["highest"] = highest;
        record["updated"] = updated;
        record["history"] = result.highest_history;
        record["escalated"] = escalated;
        record["stop"] = stop ? json(std::string(to_string(*stop))) : json(nullptr);
        result.trace.push_back(record.dump());
        if (stop) break;
    }

    result.stop_reason = stop.value_or(StopReason::step_limit);
    result.steps_used = step;
    result.trace.push_back(json{{"event", "stop"},
                                {"reason", std::string(to_string(result.stop_reason))},
                                {"steps_used", step},
                                {"update_calls", result.update_calls},
                                {"best", result.best.id},
                                {"highest", highest}}
                               .dump());
    return result;
}

NoSearchResult optimize_no_search(std::string_view diff_text, std::string_view human_message,
                                  const std::vector<ContextItem>& contexts, eval::CandidateEvaluator& evaluator,
                                  Updater& updater, const OptimizerConfig& config) {
    config.validate();
    check_contexts(contexts);
    std::vector<ContextItem> ordered = contexts;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const ContextItem& a, const ContextItem& b) { return a.kind < b.kind; });

    const eval::Evaluation initial = evaluator.evaluate(diff_text, human_message);
    NoSearchResult out;
    out.initial = root_candidate(human_message, initial, config.base_temperature);

    std::string text = updater.update_all(out.initial, ordered, config.base_temperature);
    if (trim(text).empty()) throw UnparseableResponse("update produced an empty message");
    const eval::Evaluation e = evaluator.evaluate(diff_text, text);
    out.message.id = 1;
    out.message.text = std::move(text);
    for (const auto& c : ordered) out.message.considered.insert(c.kind);
    out.message.scores = e.metrics;
    out.message.opt_score = e.opt;
    out.message.parent_id = 0;
    out.message.created_at_step = 1;
    out.message.temperature_used = config.base_temperature;
    return out;
}

// ---- replay ------------------------------------------------------------------

std::shared_ptr<TraceReplay> TraceReplay::parse(std::string_view trace_text) {
    auto replay = std::shared_ptr<TraceReplay>(new TraceReplay());
    std::map<std::size_t, std::string> texts;
    bool saw_init = false;
    int line_no = 0;
    for (const auto& line : split_lines(trace_text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            const std::string event = j.at("event").get<std::string>();
            auto remember = [&](const json& c) {
                const auto id = c.at("id").get<std::size_t>();
                const std::string text = c.at("text").get<std::string>();
                texts[id] = text;
                replay->scores_[text] = evaluation_from(c.at("evaluation"));
                return text;
            };
            if (event == "init") {
                replay->human_message_ = remember(j.at("root"));
                saw_init = true;
            } else if (event == "step") {
                if (!saw_init) throw ConfigError("step record before init");
                const auto parent = j.at("dequeued").get<std::size_t>();
                auto it = texts.find(parent);
                if (it == texts.end()) throw ConfigError(fmt::format("unknown candidate {}", parent));
                const std::string parent_text = it->second;
                for (const auto& c : j.at("generated")) {
                    const std::string text = remember(c);
                    replay->updates_[{parent_text, kind_from(c.at("kind")), c.at("temperature").get<double>()}] = text;
                }
                for (const auto& f : j.at("failed")) {
                    const auto key = std::make_tuple(parent_text, kind_from(f.at("kind")),
                                                     f.at("temperature").get<double>());
                    if (f.at("error").get<std::string>() == "empty")
                        replay->updates_[key] = "";
                    else
                        replay->failures_[key] = f.at("detail").get<std::string>();
                }
            } else if (event != "stop") {
                throw ConfigError("unknown event '" + event + "'");
            }
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("trace line {}: {}", line_no, e.what()));
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("trace line {}: {}", line_no, e.what()));
        }
    }
    if (!saw_init) throw ConfigError("trace has no init record");
    return replay;
}

std::string TraceReplay::update(const MessageCandidate& current, const ContextItem& context, double temperature) {
    const auto key = std::make_tuple(current.text, context.kind, temperature);
    if (auto f = failures_.find(key); f != failures_.end())
        throw GatewayError(GatewayError::Kind::transport, 0, f->second);
    auto it = updates_.find(key);
    if (it == updates_.end())
        throw GatewayError(GatewayError::Kind::unconfigured, 0,
                           fmt::format("trace has no update for {} at temperature {}", to_string(context.kind),
                                       temperature));
    return it->second;
}

std::string TraceReplay::update_all(const MessageCandidate&, const std::vector<ContextItem>&, double) {
    throw GatewayError(GatewayError::Kind::unconfigured, 0, "search traces do not record combined updates");
}

eval::Evaluation TraceReplay::evaluate(std::string_view, std::string_view message) {
    auto it = scores_.find(std::string(message));
    if (it == scores_.end()) throw PreconditionError("trace has no evaluation for the requested message");
    return it->second;
}

}  // namespace cmo::opt
