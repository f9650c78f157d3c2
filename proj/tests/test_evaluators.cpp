#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "cmo/errors.hpp"
#include "cmo/evaluators.hpp"
#include "cmo/util.hpp"
#include "test_support.hpp"

using namespace cmo;
using namespace cmo::eval;

namespace {

/// Answers embed requests from a fixed table.
class TableEmbedder final : public embed::Embedder {
public:
    std::map<std::string, std::vector<double>> table;
    int calls = 0;

    embed::Embedding embed(embed::EmbedKind, std::string_view body) override {
        ++calls;
        auto it = table.find(std::string(body));
        if (it == table.end()) throw EmbedServiceError("no vector for " + std::string(body));
        return {it->second, static_cast<int>(it->second.size()), "table", false};
    }
    std::string model_id(embed::EmbedKind) const override { return "table"; }
};

class FixedLlm final : public LlmScoreSource {
public:
    explicit FixedLlm(MetricScores s) : scores(s) {}
    MetricScores llm_scores(std::string_view, std::string_view message) override {
        if (trim(message).empty()) throw PreconditionError("empty message");
        ++calls;
        return scores;
    }
    MetricScores scores;
    int calls = 0;
};

class FixedSim final : public SimScoreSource {
public:
    explicit FixedSim(double v) : value(v) {}
    SimScore sim_score(std::string_view, std::string_view) override {
        ++calls;
        return {value};
    }
    double value;
    int calls = 0;
};

llm::MockChatClient::Responder per_metric(std::map<std::string, std::string> replies, int* calls) {
    return [replies, calls](const llm::ChatRequest& r) {
        ++*calls;
        return replies.at(r.slots.at("metric"));
    };
}

}  // namespace

// ---- combination -------------------------------------------------------------

TEST(Combine, EvenEquationExample) {
    EXPECT_NEAR(combine_metric(0.75, 3.0, {}, Equation::even), 3.0, 1e-12);
}

TEST(Combine, CorrelationEquationExample) {
    EXPECT_NEAR(combine_metric(0.5, 3.0, {0.3, 0.6}, Equation::correlation), 2.0 / 3.0 + 2.0, 1e-12);
}

TEST(Combine, ZeroSimCoefficientUsesLlmScoreAlone) {
    for (double llm : {0.0, 1.0, 2.5, 4.0}) EXPECT_EQ(combine_metric(0.9, llm, {0.0, 0.42}, Equation::correlation), llm);
    const auto w = default_weights();
    const auto out = combine({0.8}, make_scores(1, 2, 3, 4), w);
    EXPECT_EQ(out[Metric::conciseness], 3.0);
}

TEST(Combine, EqualCoefficientsReduceToEvenEquation) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> sim(0.0, 1.0), llm(0.0, 4.0), coeff(0.01, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double s = sim(rng), l = llm(rng), c = coeff(rng);
        EXPECT_NEAR(combine_metric(s, l, {c, c}, Equation::correlation), combine_metric(s, l, {}, Equation::even), 1e-12);
    }
}

TEST(Combine, StaysWithinScaleForValidInputs) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> sim(0.0, 1.0), llm(0.0, 4.0), coeff(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double s = sim(rng), l = llm(rng);
        MetricWeight w{coeff(rng), coeff(rng)};
        if (w.sim_coeff + w.llm_coeff == 0) continue;
        for (auto eq : {Equation::even, Equation::correlation}) {
            const double v = combine_metric(s, l, w, eq);
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 4.0);
        }
    }
}

TEST(OptimizationScore, SumsMetrics) {
    EXPECT_NEAR(optimization_score(make_scores(3.054, 3.283, 4, 3.274)).value, 13.611, 1e-9);
    EXPECT_EQ(optimization_score(make_scores(0, 0, 0, 0)).value, 0.0);
    EXPECT_EQ(optimization_score(make_scores(4, 4, 4, 4)).value, 16.0);
}

TEST(OptimizationScore, StrictlyMonotoneInEachMetric) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> v(0.0, 3.9), bump(1e-6, 0.1);
    for (int i = 0; i < 500; ++i) {
        const auto base = make_scores(v(rng), v(rng), v(rng), v(rng));
        for (Metric m : kMetrics) {
            auto up = base;
            up[m] += bump(rng);
            EXPECT_GT(optimization_score(up), optimization_score(base));
        }
    }
}

// ---- weights ---------------------------------------------------------------

TEST(Weights, DefaultsAndJsonRoundTrip) {
    const auto d = default_weights();
    EXPECT_EQ(d.equation, Equation::correlation);
    EXPECT_EQ(d[Metric::conciseness], (MetricWeight{0.0, 1.0}));
    EXPECT_EQ(d[Metric::rationality], (MetricWeight{1.0, 1.0}));
    auto w = d;
    w.equation = Equation::even;
    w[Metric::expressiveness] = {0.25, 0.5};
    EXPECT_EQ(EvaluatorWeights::from_json(w.to_json()), w);

    test::TempDir dir;
    w.save(dir.path() / "weights.json");
    EXPECT_EQ(EvaluatorWeights::load(dir.path() / "weights.json"), w);
}

TEST(Weights, InvalidDocumentsRejected) {
    EXPECT_THROW(EvaluatorWeights::from_json(R"({"metrics":{"rationality":{"sim_coeff":-1,"llm_coeff":1}}})"),
                 ConfigError);
    EXPECT_THROW(EvaluatorWeights::from_json(R"({"metrics":{"rationality":{"sim_coeff":0,"llm_coeff":0}}})"),
                 ConfigError);
    EXPECT_THROW(EvaluatorWeights::from_json(R"({"metrics":{"clarity":{"sim_coeff":1,"llm_coeff":1}}})"),
                 ConfigError);
    EXPECT_THROW(EvaluatorWeights::from_json("{"), ConfigError);
    EXPECT_THROW(parse_equation("eq3"), ConfigError);
    EXPECT_EQ(parse_equation("Eq1"), Equation::even);
}

// ---- LLM scorer ----------------------------------------------------------------

TEST(LlmScorer, ReturnsMockScoresAndMemoizes) {
    int calls = 0;
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(
        std::nullopt, per_metric({{"rationality", "3"}, {"comprehensiveness", "Score: 2"}, {"conciseness", "4"},
                                  {"expressiveness", "1/4"}},
                                 &calls)));
    LlmScorer scorer(gw);
    EXPECT_EQ(scorer.llm_scores("diff", "Fix parser"), make_scores(3, 2, 4, 1));
    EXPECT_EQ(scorer.llm_scores("diff", "Fix parser"), make_scores(3, 2, 4, 1));
    EXPECT_EQ(calls, 4);
    EXPECT_EQ(gw.total_calls(), 4u);
    for (const auto& j : gw.journal()) EXPECT_EQ(j.temperature, 0.0);
}

TEST(LlmScorer, UnparseableAfterReprompt) {
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(std::nullopt, [](const llm::ChatRequest&) { return "five"; }));
    LlmScorer scorer(gw);
    EXPECT_THROW(scorer.llm_scores("diff", "Fix parser"), UnparseableResponse);
    EXPECT_EQ(gw.total_calls(), 2u);
}

TEST(LlmScorer, RepromptRecovers) {
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(std::nullopt, [](const llm::ChatRequest& r) {
        return r.slots.count("reprompt") ? std::string("2") : std::string("quite good");
    }));
    LlmScorer scorer(gw);
    EXPECT_EQ(scorer.llm_scores("diff", "Fix parser"), make_scores(2, 2, 2, 2));
    EXPECT_EQ(gw.total_calls(), 8u);
}

TEST(LlmScorer, EmptyMessageIsPrecondition) {
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(std::nullopt, llm::heuristic_response));
    LlmScorer scorer(gw);
    EXPECT_THROW(scorer.llm_scores("diff", " \n"), PreconditionError);
}

// ---- retrieval scorer ------------------------------------------------------------

namespace {

corpus::CorpusIndex toy_index() {
    corpus::IndexMetadata m;
    m.diff_dim = 2;
    m.message_dim = 3;
    const double s = std::sqrt(0.5);
    return corpus::CorpusIndex(m, {
                                      {"e1", "r", "d1", "m1", {1, 0}, {1, 0, 0}},
                                      {"e2", "r", "d2", "m2", {0.8, 0.6}, {0, 1, 0}},
                                      {"e3", "r", "d3", "m3", {0.6, 0.8}, {-1, 0, 0}},
                                      {"e4", "r", "d4", "m4", {0, 1}, {0, 0, 1}},
                                      {"e5", "r", "d5", "m5", {-1, 0}, {s, s, 0}},
                                  });
}

}  // namespace

TEST(SimScore, ToyIndexMatchesHandComputedMean) {
    const auto index = toy_index();
    TableEmbedder emb;
    emb.table["the diff"] = {1, 0};
    emb.table["candidate"] = {0.6, 0.8, 0};
    RetrievalScorer scorer(index, emb, 3);
    // Top 3 by diff: e1 (1.0), e2 (0.8), e3 (0.6). Message cosines 0.6, 0.8, -0.6 -> 0.
    EXPECT_NEAR(scorer.sim_score("the diff", "candidate").value, (0.6 + 0.8 + 0.0) / 3.0, 1e-12);
    const auto near = scorer.neighbors("the diff");
    ASSERT_EQ(near.size(), 3u);
    EXPECT_EQ(near[2].entry->commit_id, "e3");
}

TEST(SimScore, SelfSimilarityAndOrthogonality) {
    const auto index = toy_index();
    TableEmbedder emb;
    emb.table["d"] = {0.8, 0.6};
    emb.table["same as m2"] = {0, 1, 0};
    emb.table["orthogonal"] = {0, 0, 1};
    RetrievalScorer k1(index, emb, 1);
    EXPECT_DOUBLE_EQ(k1.sim_score("d", "same as m2").value, 1.0);
    EXPECT_DOUBLE_EQ(k1.sim_score("d", "orthogonal").value, 0.0);
}

TEST(SimScore, CachesEmbeddingsAndRejectsEmptyIndex) {
    const auto index = toy_index();
    TableEmbedder emb;
    emb.table["d"] = {1, 0};
    emb.table["m"] = {1, 0, 0};
    RetrievalScorer scorer(index, emb, 2);
    scorer.sim_score("d", "m");
    scorer.sim_score("d", "m");
    EXPECT_EQ(emb.calls, 2);

    corpus::CorpusIndex empty;
    RetrievalScorer none(empty, emb, 2);
    EXPECT_THROW(none.sim_score("d", "m"), EmptyIndex);
    EXPECT_THROW(RetrievalScorer(index, emb, 0), ConfigError);
}

TEST(SimScore, AlwaysInUnitInterval) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    corpus::IndexMetadata m;
    m.diff_dim = 4;
    m.message_dim = 4;
    std::vector<corpus::CorpusEntry> entries;
    for (int i = 0; i < 30; ++i) {
        std::vector<double> d(4), t(4);
        for (double& x : d) x = g(rng);
        for (double& x : t) x = g(rng);
        entries.push_back({"c" + std::to_string(i), "r", "d", "m", embed::normalized(d), embed::normalized(t)});
    }
    const corpus::CorpusIndex index(m, entries);
    for (int q = 0; q < 100; ++q) {
        std::vector<double> d(4), t(4);
        for (double& x : d) x = g(rng);
        for (double& x : t) x = g(rng);
        const double s = mean_clamped_similarity(t, index.retrieve_similar(d, 10)).value;
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
    }
}

// ---- evaluator ---------------------------------------------------------------------

TEST(Evaluator, EvenEquationComposition) {
    auto llm = std::make_shared<FixedLlm>(make_scores(2, 2, 4, 3));
    auto sim = std::make_shared<FixedSim>(0.5);
    auto w = default_weights();
    w.equation = Equation::even;
    Evaluator ev(llm, sim, w);
    const auto e = ev.evaluate("diff", "msg");
    EXPECT_EQ(e.metrics, make_scores(2, 2, 3, 2.5));
    EXPECT_DOUBLE_EQ(e.opt.value, 9.5);
    EXPECT_EQ(e.llm, make_scores(2, 2, 4, 3));
    EXPECT_EQ(e.sim, 0.5);

    const auto again = ev.evaluate("diff", "msg");
    EXPECT_EQ(again.metrics, e.metrics);
    EXPECT_EQ(llm->calls, 1);
    EXPECT_EQ(sim->calls, 1);
    EXPECT_EQ(ev.cache_hits(), 1u);
}

TEST(Evaluator, WithoutSimilarityUsesLlmScores) {
    auto llm = std::make_shared<FixedLlm>(make_scores(1, 2, 3, 4));
    Evaluator ev(llm, nullptr, default_weights());
    const auto e = ev.evaluate("diff", "msg");
    EXPECT_EQ(e.metrics, make_scores(1, 2, 3, 4));
    EXPECT_FALSE(e.sim.has_value());
    EXPECT_EQ(e.opt.value, 10.0);
}

TEST(Evaluator, EmptyMessagePropagatesPrecondition) {
    Evaluator ev(std::make_shared<FixedLlm>(make_scores(1, 1, 1, 1)), std::make_shared<FixedSim>(0.1), default_weights());
    EXPECT_THROW(ev.evaluate("diff", ""), PreconditionError);
}

TEST(Evaluator, MockModeIsRepeatable) {
    const auto run = [] {
        auto gw = std::make_shared<llm::Gateway>(std::make_shared<llm::MockChatClient>(std::nullopt, llm::heuristic_response));
        Evaluator ev(std::make_shared<LlmScorer>(*gw), std::make_shared<FixedSim>(0.3), default_weights());
        const auto e = ev.evaluate("--- a/x.c\n+++ b/x.c\n@@ -1 +1 @@\n-a\n+b\n", "fix: handle null input in x.c");
        return std::make_pair(e.metrics, e.opt.value);
    };
    EXPECT_EQ(run(), run());
}

// ---- Pearson -------------------------------------------------------------------

namespace {

const std::vector<double> kXs = {2.1, 3.4, 1.7, 4.0, 2.8, 3.9, 0.6, 1.2, 3.1, 2.2,
                                 0.9, 3.6, 2.5, 1.4, 3.3, 0.3, 2.9, 1.8, 3.7, 2.4};
const std::vector<double> kYs = {1.9, 3.0, 2.2, 3.8, 2.1, 3.5, 1.1, 0.8, 2.6, 2.9,
                                 1.5, 3.1, 1.9, 2.0, 3.6, 0.7, 2.2, 1.3, 2.8, 2.7};
const std::vector<double> kWeak = {2.0, 1.0, 3.0, 2.5, 1.5, 2.2, 2.8, 1.9, 1.1, 3.3,
                                   2.4, 1.6, 2.9, 2.1, 1.2, 2.6, 1.8, 3.1, 2.3, 1.7};

}  // namespace

TEST(Pearson, PerfectLinearity) {
    const auto up = pearson({1, 2, 3}, {2, 4, 6});
    EXPECT_EQ(up.r, 1.0);
    EXPECT_EQ(up.p_value, 0.0);
    const auto down = pearson({1, 2, 3}, {3, 2, 1});
    EXPECT_EQ(down.r, -1.0);
    EXPECT_EQ(down.p_value, 0.0);
}

TEST(Pearson, MatchesIndependentReference) {
    // Frozen from tests/oracles/pearson_oracle.py (scipy.stats.pearsonr).
    const auto c = pearson(kXs, kYs);
    EXPECT_NEAR(c.r, 0.88612797884139716, 1e-9);
    EXPECT_NEAR(c.p_value, 2.008650610703166e-07, 1e-9);
    EXPECT_NEAR(c.p_value / 2.008650610703166e-07, 1.0, 1e-9);
    const auto w = pearson(kXs, kWeak);
    EXPECT_NEAR(w.r, -0.44171342190540169, 1e-9);
    EXPECT_NEAR(w.p_value, 0.051194741361085115, 1e-9);
}

TEST(Pearson, DegenerateAndShortInputs) {
    EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), DegenerateInput);
    EXPECT_THROW(pearson({1, 2, 3}, {5, 5, 5}), DegenerateInput);
    EXPECT_THROW(pearson({1, 2}, {1, 2}), PreconditionError);
    EXPECT_THROW(pearson({1, 2, 3}, {1, 2}), PreconditionError);
}

TEST(Pearson, SymmetricAndBounded) {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> a(8), b(8);
        for (double& x : a) x = g(rng);
        for (double& x : b) x = g(rng);
        const auto ab = pearson(a, b), ba = pearson(b, a);
        EXPECT_NEAR(ab.r, ba.r, 1e-12);
        EXPECT_NEAR(ab.p_value, ba.p_value, 1e-12);
        EXPECT_LE(std::abs(ab.r), 1.0);
        EXPECT_GE(ab.p_value, 0.0);
        EXPECT_LE(ab.p_value, 1.0);
    }
}

// ---- calibration -------------------------------------------------------------------

namespace {

/// Human scores cycle 0..4; sim tracks them exactly and the LLM series is (h-2)^2,
/// which is uncorrelated with a symmetric h.
std::vector<LabeledScores> synthetic(std::size_t n) {
    std::vector<LabeledScores> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double h = static_cast<double>(i % 5);
        LabeledScores s;
        s.human = make_scores(h, h, h, h);
        s.llm = make_scores((h - 2) * (h - 2), h, 4 - h, h);
        s.sim = h / 4.0;
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST(Calibrate, SimTracksHumanWhileLlmIsNoise) {
    const auto w = calibrate_weights(synthetic(20));
    EXPECT_EQ(w.equation, Equation::correlation);
    EXPECT_NEAR(w[Metric::rationality].sim_coeff, 1.0, 1e-12);
    EXPECT_EQ(w[Metric::rationality].llm_coeff, 0.0);
    // Both perfectly correlated.
    EXPECT_NEAR(w[Metric::comprehensiveness].llm_coeff, 1.0, 1e-12);
    // Negative correlation is zeroed.
    EXPECT_EQ(w[Metric::conciseness].llm_coeff, 0.0);
    EXPECT_NEAR(w[Metric::conciseness].sim_coeff, 1.0, 1e-12);
}

TEST(Calibrate, ConstantSimSeriesGetsZeroWeight) {
    auto items = synthetic(20);
    for (auto& s : items) s.sim = 0.4;
    const auto w = calibrate_weights(items);
    EXPECT_EQ(w[Metric::comprehensiveness].sim_coeff, 0.0);
    EXPECT_NEAR(w[Metric::comprehensiveness].llm_coeff, 1.0, 1e-12);
    EXPECT_EQ(w[Metric::expressiveness].sim_coeff, 0.0);
    // Nothing significant and positive: even fallback.
    EXPECT_EQ(w[Metric::rationality], (MetricWeight{1.0, 1.0}));
    EXPECT_EQ(w[Metric::conciseness], (MetricWeight{1.0, 1.0}));
}

TEST(Calibrate, InsignificantPositiveCorrelationIsZeroed) {
    std::vector<LabeledScores> items;
    for (std::size_t i = 0; i < kXs.size(); ++i) {
        LabeledScores s;
        s.human = make_scores(kXs[i], kXs[i], kXs[i], kXs[i]);
        // r = +0.4417, p = 0.0512 against the human series.
        s.llm = make_scores(4 - kWeak[i], kYs[i], kYs[i], kYs[i]);
        s.sim = kYs[i] / 4;
        items.push_back(s);
    }
    const auto w = calibrate_weights(items);
    EXPECT_EQ(w[Metric::rationality].llm_coeff, 0.0);
    EXPECT_NEAR(w[Metric::rationality].sim_coeff, 0.88612797884139716, 1e-9);
    EXPECT_NEAR(w[Metric::expressiveness].llm_coeff, 0.88612797884139716, 1e-9);
    EXPECT_EQ(calibrate_weights(items, 0.06)[Metric::rationality].llm_coeff > 0, true);
}

TEST(Calibrate, Preconditions) {
    EXPECT_THROW(calibrate_weights(synthetic(9)), PreconditionError);
    auto items = synthetic(12);
    for (auto& s : items) s.human[Metric::expressiveness] = 2;
    EXPECT_THROW(calibrate_weights(items), DegenerateInput);
}

TEST(Calibrate, FromJsonLinesSet) {
    test::TempDir dir;
    std::string lines;
    for (int i = 0; i < 12; ++i) {
        const int h = i % 5;
        lines += nlohmann::json{{"diff", "d" + std::to_string(i)},
                                {"message", "m" + std::to_string(h)},
                                {"human_scores",
                                 {{"rationality", h}, {"comprehensiveness", h}, {"conciseness", h}, {"expressiveness", h}}}}
                     .dump() +
                 "\n";
    }
    test::write_text(dir.path() / "cal.jsonl", lines);
    const auto set = load_calibration_set(dir.path() / "cal.jsonl");
    ASSERT_EQ(set.size(), 12u);
    EXPECT_EQ(set[3].human, make_scores(3, 3, 3, 3));

    class ByMessage final : public LlmScoreSource, public SimScoreSource {
    public:
        MetricScores llm_scores(std::string_view, std::string_view m) override {
            const double h = m.back() - '0';
            return make_scores(h, 4 - h, h, h);
        }
        SimScore sim_score(std::string_view, std::string_view m) override { return {(m.back() - '0') / 8.0}; }
    } src;
    const auto w = calibrate(set, src, src);
    EXPECT_NEAR(w[Metric::rationality].llm_coeff, 1.0, 1e-12);
    EXPECT_EQ(w[Metric::comprehensiveness].llm_coeff, 0.0);
    EXPECT_NEAR(w[Metric::comprehensiveness].sim_coeff, 1.0, 1e-12);

    test::write_text(dir.path() / "bad.jsonl", "{\"diff\": 1}\n");
    EXPECT_THROW(load_calibration_set(dir.path() / "bad.jsonl"), ConfigError);
}
