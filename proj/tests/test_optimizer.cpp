#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cmo/errors.hpp"
#include "cmo/gateway.hpp"
#include "cmo/optimizer.hpp"
#include "cmo/util.hpp"

using namespace cmo;
using namespace cmo::opt;
using nlohmann::json;

namespace {

// Appends " [Kind]" (or " [Kind@T]" above temperature 0) to the parent text.
class TagUpdater final : public Updater {
public:
    std::function<bool(const MessageCandidate&, ContextKind)> fail;
    std::size_t calls = 0;
    std::size_t all_calls = 0;
    std::vector<double> temperatures;

    std::string update(const MessageCandidate& current, const ContextItem& context, double temperature) override {
        ++calls;
        temperatures.push_back(temperature);
        if (fail && fail(current, context.kind))
            throw GatewayError(GatewayError::Kind::http_status, 500, "injected failure");
        return current.text + tag(context.kind, temperature);
    }
    std::string update_all(const MessageCandidate& current, const std::vector<ContextItem>& contexts,
                           double temperature) override {
        ++all_calls;
        std::string out = current.text;
        for (const auto& c : contexts) out += tag(c.kind, temperature);
        return out;
    }

    static std::string tag(ContextKind k, double t) {
        return t == 0.0 ? fmt::format(" [{}]", to_string(k)) : fmt::format(" [{}@{:g}]", to_string(k), t);
    }
};

class FnEvaluator final : public eval::CandidateEvaluator {
public:
    explicit FnEvaluator(std::function<double(const std::string&)> fn) : fn_(std::move(fn)) {}
    std::size_t calls = 0;

    eval::Evaluation evaluate(std::string_view, std::string_view message) override {
        ++calls;
        const double opt = fn_(std::string(message));
        eval::Evaluation e;
        e.metrics = make_scores(opt / 4, opt / 4, opt / 4, opt / 4);
        e.llm = e.metrics;
        e.opt.value = opt;
        return e;
    }

private:
    std::function<double(const std::string&)> fn_;
};

int depth(const std::string& text) {
    int n = 0;
    for (std::size_t pos = text.find(" ["); pos != std::string::npos; pos = text.find(" [", pos + 1)) ++n;
    return n;
}

std::vector<ContextItem> all_contexts(std::size_t count = kContextKindCount) {
    std::vector<ContextItem> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back({kContextKinds[i], fmt::format("payload {}", i), "test"});
    return out;
}

std::string path_text(std::initializer_list<std::pair<ContextKind, double>> steps) {
    std::string s = "fix bug";
    for (auto [k, t] : steps) s += TagUpdater::tag(k, t);
    return s;
}

std::vector<json> parse_trace(const OptimizationResult& r) {
    std::vector<json> out;
    for (const auto& line : r.trace) out.push_back(json::parse(line));
    return out;
}

}  // namespace

// ---- threshold ---------------------------------------------------------------

TEST(ThresholdSchedule, FirstStepAndClamp) {
    const double t0 = 12.0 * 5.0 / 100.0;
    EXPECT_NEAR(t0, 0.6, 1e-15);
    EXPECT_NEAR(threshold_schedule(t0, 1, 50, t0 / 50), 0.588, 1e-12);
    EXPECT_NEAR(threshold_schedule(0.3, 50, 50, 0.012), 0.012, 1e-15);
    EXPECT_THROW(threshold_schedule(0.6, 0, 50, 0.012), PreconditionError);
}

TEST(ThresholdSchedule, MonotoneAndBoundedForEveryStepLimit) {
    for (int n = 1; n <= 80; ++n) {
        for (double initial : {0.0, 0.5, 7.25, 12.0, 16.0}) {
            const double t0 = initial * 5.0 / 100.0;
            const double min_t = t0 / n;
            double t = t0;
            for (int step = 1; step <= n; ++step) {
                const double next = threshold_schedule(t, step, n, min_t);
                ASSERT_LE(next, t) << "n=" << n << " step=" << step;
                ASSERT_GE(next, min_t);
                t = next;
            }
            EXPECT_DOUBLE_EQ(t, min_t);
        }
    }
}

TEST(OptimizerConfig, Validation) {
    EXPECT_NO_THROW(OptimizerConfig{}.validate());
    OptimizerConfig c;
    c.step_limit = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.p = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.p = 101;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.escalated_temperature = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

// ---- queue -------------------------------------------------------------------

TEST(CandidateQueue, TieBreaks) {
    CandidateQueue q;
    MessageCandidate a, b, c, d;
    a.id = 1, a.opt_score.value = 5, a.considered = ContextKindSet{}.with(ContextKind::SyntacticBlock).with(ContextKind::InvokedMethods);
    b.id = 2, b.opt_score.value = 5, b.considered = ContextKindSet{}.with(ContextKind::SyntacticBlock);
    c.id = 3, c.opt_score.value = 5, c.considered = ContextKindSet{}.with(ContextKind::VariableDataTypes);
    d.id = 4, d.opt_score.value = 6, d.considered = a.considered;
    for (const auto* x : {&a, &b, &c, &d}) q.push(*x);
    EXPECT_EQ(q.order(), (std::vector<std::size_t>{4, 2, 3, 1}));
    EXPECT_EQ(q.pop().id, 4u);
    EXPECT_EQ(q.pop().id, 2u);
    EXPECT_EQ(q.pop().id, 3u);
    EXPECT_EQ(q.pop().id, 1u);
    EXPECT_TRUE(q.empty());
    EXPECT_THROW(q.pop(), PreconditionError);
}

TEST(CandidateQueue, MatchesNaiveSortedListUnderRandomOperations) {
    std::mt19937 rng(20240611);
    for (int trial = 0; trial < 200; ++trial) {
        CandidateQueue q;
        // Naive model: (candidate, seq), scanned linearly for the best entry.
        std::vector<std::pair<MessageCandidate, std::size_t>> naive;
        std::size_t seq = 0, id = 0;
        for (int op = 0; op < 60; ++op) {
            if (naive.empty() || rng() % 3 != 0) {
                MessageCandidate m;
                m.id = id++;
                m.opt_score.value = static_cast<double>(rng() % 5);  // many ties
                for (ContextKind k : kContextKinds)
                    if (rng() % 3 == 0) m.considered.insert(k);
                q.push(m);
                naive.emplace_back(m, seq++);
            } else {
                auto best = naive.begin();
                for (auto it = naive.begin(); it != naive.end(); ++it) {
                    const bool better = it->first.opt_score.value > best->first.opt_score.value ||
                                        (it->first.opt_score.value == best->first.opt_score.value &&
                                         (it->first.considered.size() < best->first.considered.size() ||
                                          (it->first.considered.size() == best->first.considered.size() &&
                                           it->second < best->second)));
                    if (better) best = it;
                }
                ASSERT_EQ(q.head().id, best->first.id);
                ASSERT_EQ(q.pop().id, best->first.id);
                naive.erase(best);
            }
            ASSERT_EQ(q.size(), naive.size());
        }
    }
}

// ---- single update -----------------------------------------------------------

TEST(UpdateCandidate, AddsExactlyOneKind) {
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) { return static_cast<double>(depth(s)); });
    MessageCandidate root;
    root.text = "fix bug";
    root.considered = ContextKindSet{}.with(ContextKind::ImportantFileInfo);
    const ContextItem ctx{ContextKind::InvokedMethods, "calls", "x"};
    const auto child = update_candidate(root, ctx, "diff", ev, up, 0.0);
    EXPECT_EQ(child.text, "fix bug [InvokedMethods]");
    EXPECT_EQ(child.considered, root.considered.with(ContextKind::InvokedMethods));
    EXPECT_EQ(child.considered.size(), root.considered.size() + 1);
    EXPECT_EQ(child.added_kind, ContextKind::InvokedMethods);
    EXPECT_DOUBLE_EQ(child.opt_score.value, 1.0);
    EXPECT_THROW(update_candidate(child, ctx, "diff", ev, up, 0.0), PreconditionError);
}

TEST(UpdateCandidate, EmptyReplyIsRejected) {
    class Blank final : public Updater {
    public:
        std::string update(const MessageCandidate&, const ContextItem&, double) override { return "  \n"; }
        std::string update_all(const MessageCandidate&, const std::vector<ContextItem>&, double) override {
            return "";
        }
    } blank;
    FnEvaluator ev([](const std::string&) { return 1.0; });
    MessageCandidate root;
    root.text = "x";
    EXPECT_THROW(update_candidate(root, {ContextKind::SyntacticBlock, "p", ""}, "d", ev, blank, 0.0),
                 UnparseableResponse);
    EXPECT_EQ(ev.calls, 0u);
}

// ---- full search: frozen against tests/oracles/search_oracle.py --------------

TEST(Optimize, MonotoneImprovementReachesAllKinds) {
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) { return 10.0 + depth(s); });
    const auto r = optimize("diff", "fix bug", all_contexts(), ev, up);

    EXPECT_EQ(r.stop_reason, StopReason::step_limit);
    EXPECT_EQ(r.steps_used, 50);
    EXPECT_EQ(r.update_calls, 66u);
    EXPECT_EQ(up.calls, 66u);
    EXPECT_EQ(r.candidates.size(), 67u);
    EXPECT_EQ(r.best.id, 28u);
    EXPECT_EQ(r.best.text, path_text({{ContextKind::ImportantFileInfo, 0}, {ContextKind::PullRequestIssueTitle, 0},
                                      {ContextKind::MethodBodySummary, 0}, {ContextKind::ClassBodySummary, 0},
                                      {ContextKind::SyntacticBlock, 0}, {ContextKind::InvokedMethods, 0},
                                      {ContextKind::VariableDataTypes, 0}}));
    EXPECT_EQ(r.best.considered.size(), 7u);
    EXPECT_DOUBLE_EQ(r.best.opt_score.value, 17.0);
    EXPECT_EQ(r.highest_history, (std::vector<double>{10, 11, 12, 13, 14, 15, 16, 17}));

    // Step by step: the first expansion yields seven children scored 11, the head is the
    // first of them, and each later step goes one level deeper.
    const auto trace = parse_trace(r);
    ASSERT_EQ(trace.size(), 52u);
    EXPECT_EQ(trace[1]["generated"].size(), 7u);
    EXPECT_EQ(trace[1]["head"], 1);
    for (int step = 1; step <= 7; ++step) {
        EXPECT_EQ(trace[step]["generated"].size(), static_cast<std::size_t>(8 - step)) << step;
        EXPECT_TRUE(trace[step]["updated"].get<bool>());
    }
    EXPECT_FALSE(trace[8]["updated"].get<bool>());
    EXPECT_FALSE(trace[8]["escalated"].get<bool>());
    EXPECT_EQ(trace.back()["reason"], "step_limit");
}

TEST(Optimize, ConstantScoresReturnHumanMessage) {
    TagUpdater up;
    FnEvaluator ev([](const std::string&) { return 12.0; });
    const auto r = optimize("diff", "fix bug", all_contexts(), ev, up);
    EXPECT_EQ(r.stop_reason, StopReason::step_limit);
    EXPECT_EQ(r.steps_used, 50);
    EXPECT_EQ(r.best.id, 0u);
    EXPECT_EQ(r.best.text, "fix bug");
    EXPECT_DOUBLE_EQ(r.best.opt_score.value, 12.0);
    EXPECT_EQ(r.highest_history, std::vector<double>{12.0});
    EXPECT_EQ(r.update_calls, 259u);
    EXPECT_LE(r.update_calls, 50u * 7u);
}

TEST(Optimize, SmallImprovementsEscalateOnceThenStop) {
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) { return 12.0 + 0.1 * depth(s); });
    const auto r = optimize("diff", "fix bug", all_contexts(), ev, up);

    EXPECT_EQ(r.stop_reason, StopReason::threshold);
    EXPECT_EQ(r.steps_used, 3);
    EXPECT_EQ(r.update_calls, 18u);
    EXPECT_EQ(r.best.id, 14u);
    EXPECT_EQ(r.best.text, path_text({{ContextKind::ImportantFileInfo, 0}, {ContextKind::PullRequestIssueTitle, 0},
                                      {ContextKind::MethodBodySummary, 1}}));
    EXPECT_DOUBLE_EQ(r.best.temperature_used, 1.0);
    ASSERT_EQ(r.highest_history.size(), 4u);

    // Step 2 trips the two-ago check (0.2 < 0.56448) and escalates; step 3 updates at
    // temperature 1 and trips again.
    const auto trace = parse_trace(r);
    EXPECT_NEAR(trace[2]["threshold"].get<double>(), 0.56448, 1e-12);
    EXPECT_TRUE(trace[2]["escalated"].get<bool>());
    EXPECT_TRUE(trace[2]["stop"].is_null());
    EXPECT_DOUBLE_EQ(trace[3]["temperature"].get<double>(), 1.0);
    EXPECT_EQ(trace[3]["stop"], "threshold");
    EXPECT_EQ(std::count(up.temperatures.begin(), up.temperatures.end(), 0.0), 13);
    EXPECT_EQ(std::count(up.temperatures.begin(), up.temperatures.end(), 1.0), 5);
}

TEST(Optimize, LargeThenTinyGainsNeedTwoAgoReferent) {
    // +10 on the first context, +0.001 after. The second update is compared with the
    // initial score (gain 10.001), so the first trip happens on the third update.
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) { return depth(s) == 0 ? 12.0 : 22.0 + 0.001 * (depth(s) - 1); });
    const auto r = optimize("diff", "fix bug", all_contexts(), ev, up);
    EXPECT_EQ(r.stop_reason, StopReason::threshold);
    EXPECT_EQ(r.steps_used, 4);
    EXPECT_EQ(r.update_calls, 22u);
    EXPECT_EQ(r.best.id, 19u);
    EXPECT_EQ(r.best.text, path_text({{ContextKind::ImportantFileInfo, 0}, {ContextKind::PullRequestIssueTitle, 0},
                                      {ContextKind::MethodBodySummary, 0}, {ContextKind::ClassBodySummary, 1}}));
    const auto trace = parse_trace(r);
    EXPECT_FALSE(trace[2]["escalated"].get<bool>());
    EXPECT_TRUE(trace[3]["escalated"].get<bool>());
    EXPECT_EQ(trace[4]["stop"], "threshold");
}

TEST(Optimize, QueueExhaustion) {
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) { return 10.0 + depth(s); });
    const auto r = optimize("diff", "fix bug", all_contexts(2), ev, up);
    EXPECT_EQ(r.stop_reason, StopReason::queue_exhausted);
    EXPECT_EQ(r.steps_used, 5);
    EXPECT_EQ(r.update_calls, 4u);
    EXPECT_EQ(r.best.id, 3u);
    EXPECT_EQ(r.highest_history, (std::vector<double>{10, 11, 12}));
}

TEST(Optimize, GatewayFailureSkipsOnlyThatContext) {
    TagUpdater up;
    up.fail = [](const MessageCandidate& parent, ContextKind k) {
        return parent.id == 0 && k == ContextKind::SyntacticBlock;
    };
    FnEvaluator ev([](const std::string& s) { return 10.0 + depth(s); });
    OptimizerConfig cfg;
    cfg.step_limit = 3;
    const auto r = optimize("diff", "fix bug", all_contexts(), ev, up, cfg);
    EXPECT_EQ(r.stop_reason, StopReason::step_limit);
    EXPECT_EQ(r.update_calls, 18u);
    EXPECT_EQ(r.candidates.size(), 18u);
    EXPECT_EQ(r.best.id, 13u);
    const auto trace = parse_trace(r);
    EXPECT_EQ(trace[1]["generated"].size(), 6u);
    ASSERT_EQ(trace[1]["failed"].size(), 1u);
    EXPECT_EQ(trace[1]["failed"][0]["kind"], "SyntacticBlock");
    for (const auto& g : trace[1]["generated"]) EXPECT_NE(g["kind"], "SyntacticBlock");
}

TEST(Optimize, EvaluatorErrorsPropagate) {
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) -> double {
        if (depth(s) == 1) throw UnparseableResponse("score reply");
        return 1.0;
    });
    EXPECT_THROW(optimize("diff", "fix bug", all_contexts(), ev, up), UnparseableResponse);
}

TEST(Optimize, Preconditions) {
    TagUpdater up;
    FnEvaluator ev([](const std::string&) { return 1.0; });
    EXPECT_THROW(optimize("diff", "fix bug", {}, ev, up), NoContexts);
    auto dup = all_contexts(2);
    dup.push_back(dup.front());
    EXPECT_THROW(optimize("diff", "fix bug", dup, ev, up), PreconditionError);
    OptimizerConfig bad;
    bad.p = -1;
    EXPECT_THROW(optimize("diff", "fix bug", all_contexts(), ev, up, bad), ConfigError);
}

TEST(Optimize, InvariantsHoldUnderRandomScores) {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 30);
        const std::size_t count = 1 + rng() % kContextKindCount;
        const unsigned salt = rng();
        TagUpdater up;
        FnEvaluator ev([salt](const std::string& s) {
            return static_cast<double>((std::hash<std::string>{}(s) ^ salt) % 1700) / 100.0;
        });
        OptimizerConfig cfg;
        cfg.step_limit = n;
        cfg.p = 1 + static_cast<double>(rng() % 20);
        const auto r = optimize("diff", "fix bug", all_contexts(count), ev, up, cfg);

        ASSERT_LE(r.update_calls, static_cast<std::size_t>(n) * 7);
        ASSERT_LE(r.steps_used, n);
        for (std::size_t i = 1; i < r.highest_history.size(); ++i)
            ASSERT_GT(r.highest_history[i], r.highest_history[i - 1]);
        ASSERT_DOUBLE_EQ(r.best.opt_score.value, r.highest_history.back());
        ASSERT_GE(r.best.opt_score.value, r.initial.opt_score.value);
        double max_seen = 0;
        for (const auto& c : r.candidates) {
            if (c.id == 0) {
                ASSERT_TRUE(c.considered.empty());
                continue;
            }
            const auto& parent = r.candidates.at(*c.parent_id);
            ASSERT_FALSE(parent.considered.contains(*c.added_kind));
            ASSERT_EQ(c.considered, parent.considered.with(*c.added_kind));
            ASSERT_LE(c.considered.size(), count);
            max_seen = std::max(max_seen, c.opt_score.value);
        }
        ASSERT_DOUBLE_EQ(r.best.opt_score.value, std::max(max_seen, r.initial.opt_score.value));

        // The candidate dequeued at each step is the head of the queue left by the previous one.
        const auto trace = parse_trace(r);
        for (std::size_t i = 2; i + 1 < trace.size(); ++i) {
            const auto& prev_queue = trace[i - 1]["queue"];
            ASSERT_FALSE(prev_queue.empty());
            ASSERT_EQ(trace[i]["dequeued"], prev_queue[0]);
            const double dequeued = r.candidates.at(trace[i]["dequeued"].get<std::size_t>()).opt_score.value;
            for (const auto& id : prev_queue) ASSERT_LE(r.candidates.at(id.get<std::size_t>()).opt_score.value, dequeued);
        }
    }
}

// ---- replay ------------------------------------------------------------------

TEST(TraceReplay, ReproducesIdenticalTrace) {
    for (int scenario = 0; scenario < 3; ++scenario) {
        TagUpdater up;
        if (scenario == 2)
            up.fail = [](const MessageCandidate& p, ContextKind k) { return p.id == 0 && k == ContextKind::ClassBodySummary; };
        FnEvaluator ev([scenario](const std::string& s) {
            return scenario == 0 ? 12.0 + 0.1 * depth(s) : 10.0 + depth(s) + (s.size() % 3) * 0.25;
        });
        OptimizerConfig cfg;
        cfg.step_limit = 12;
        const auto first = optimize("diff", "fix bug", all_contexts(), ev, up, cfg);

        auto replay = TraceReplay::parse(first.trace_text());
        EXPECT_EQ(replay->human_message(), "fix bug");
        const auto second = optimize("diff", replay->human_message(), all_contexts(), *replay, *replay, cfg);
        EXPECT_EQ(second.trace_text(), first.trace_text()) << "scenario " << scenario;
        EXPECT_EQ(second.result_json(), first.result_json());
    }
}

TEST(TraceReplay, RejectsMalformedTraces) {
    EXPECT_THROW(TraceReplay::parse(""), ConfigError);
    EXPECT_THROW(TraceReplay::parse("not json\n"), ConfigError);
    EXPECT_THROW(TraceReplay::parse(R"({"event":"step","dequeued":0,"generated":[],"failed":[]})"), ConfigError);
    EXPECT_THROW(TraceReplay::parse(R"({"event":"mystery"})"), ConfigError);
}

TEST(OptimizationResult, JsonShape) {
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) { return 10.0 + depth(s); });
    OptimizerConfig cfg;
    cfg.step_limit = 2;
    const auto r = optimize("diff", "fix bug", all_contexts(), ev, up, cfg);
    const json j = json::parse(r.result_json());
    EXPECT_EQ(j["message"], r.best.text);
    EXPECT_EQ(j["stop_reason"], "step_limit");
    EXPECT_EQ(j["steps_used"], 2);
    EXPECT_DOUBLE_EQ(j["opt_score"].get<double>(), 12.0);
    EXPECT_DOUBLE_EQ(j["metric_scores"]["conciseness"].get<double>(), 3.0);
    EXPECT_EQ(j.size(), 5u);
}

// ---- no-search ablation --------------------------------------------------------

TEST(NoSearch, SingleCombinedUpdate) {
    TagUpdater up;
    FnEvaluator ev([](const std::string& s) { return 10.0 + depth(s); });
    auto contexts = all_contexts();
    std::reverse(contexts.begin(), contexts.end());
    const auto r = optimize_no_search("diff", "fix bug", contexts, ev, up);
    EXPECT_EQ(up.all_calls, 1u);
    EXPECT_EQ(up.calls, 0u);
    EXPECT_EQ(ev.calls, 2u);
    EXPECT_EQ(depth(r.message.text), 7);
    EXPECT_LT(r.message.text.find("[ImportantFileInfo]"), r.message.text.find("[VariableDataTypes]"));
    EXPECT_EQ(r.message.considered.size(), 7u);
    EXPECT_EQ(json::parse(r.result_json())["stop_reason"], "no_search");
    EXPECT_THROW(optimize_no_search("diff", "fix bug", {}, ev, up), NoContexts);
}

TEST(NoSearch, ExactlyOneChatCallThroughGateway) {
    auto client = std::make_shared<llm::MockChatClient>(std::nullopt, llm::heuristic_response);
    llm::Gateway gateway(client);
    UpdateSettings settings;
    settings.prompt.model = "gpt-test";
    settings.commit_type = CommitType{"fix"};
    GatewayUpdater updater(gateway, "diff --git a/A.java b/A.java\n", settings);
    FnEvaluator ev([](const std::string& s) { return static_cast<double>(s.size() % 16); });
    for (std::size_t count : {1u, 4u, 7u}) {
        const std::size_t before = gateway.total_calls();
        const auto r = optimize_no_search("diff", "Fix null check", all_contexts(count), ev, updater);
        EXPECT_EQ(gateway.total_calls() - before, 1u) << count;
        EXPECT_FALSE(trim(r.message.text).empty());
    }
    EXPECT_EQ(gateway.calls("update_all"), 3u);
    EXPECT_EQ(gateway.calls("update"), 0u);
}

TEST(NoSearch, PromptMatchesGolden) {
    std::vector<ContextItem> contexts = {
        {ContextKind::VariableDataTypes, "count: int (local variable)", "Cart.java:41"},
        {ContextKind::ImportantFileInfo, "src/Cart.java (modified): +3 -1\nMost important file: src/Cart.java (4 changed lines)", "src/Cart.java"},
        {ContextKind::PullRequestIssueTitle, "#12: Cart total ignores discounts", "https://forge.example/issues/12"},
        {ContextKind::MethodBodySummary, "Cart.total(): sums item prices and applies the discount.", "Cart.java:25-36"},
        {ContextKind::ClassBodySummary, "Cart: holds line items and computes totals.", "Cart.java:7-60"},
        {ContextKind::SyntacticBlock, "Cart.java:33-35 (if):\nif (discount > 0) {\n  sum -= discount;\n}", "Cart.java:33-35"},
        {ContextKind::InvokedMethods, "Computer reset(): clears the cached state.", "Computer.java:18-23"},
    };
    llm::ChatRequest captured;
    auto client = std::make_shared<llm::MockChatClient>(std::nullopt, [&](const llm::ChatRequest& r) {
        captured = r;
        return std::string("fix: apply discount once");
    });
    llm::Gateway gateway(client);
    UpdateSettings settings;
    settings.prompt.model = "gpt-test";
    settings.commit_type = CommitType{"fix"};
    GatewayUpdater updater(gateway, "diff --git a/src/Cart.java b/src/Cart.java\n-  sum -= d;\n+  sum -= discount;\n",
                           settings);
    FnEvaluator ev([](const std::string&) { return 8.0; });
    const auto r = optimize_no_search("diff", "Fix discount", contexts, ev, updater);
    EXPECT_EQ(r.message.text, "fix: apply discount once");

    std::size_t last = 0;
    for (const auto& c : all_contexts()) {
        const auto it = std::find_if(contexts.begin(), contexts.end(), [&](const ContextItem& x) { return x.kind == c.kind; });
        const auto pos = captured.user.find(it->payload);
        ASSERT_NE(pos, std::string::npos) << to_string(c.kind);
        EXPECT_GT(pos, last);
        last = pos;
    }
    const std::string golden = std::string(CMO_GOLDEN) + "/update_all_prompt.txt";
    if (std::getenv("CMO_UPDATE_GOLDEN")) write_file_atomic(golden, captured.system + "\n---\n" + captured.user);
    EXPECT_EQ(captured.system + "\n---\n" + captured.user, read_file(golden));
}
