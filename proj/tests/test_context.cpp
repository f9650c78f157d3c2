#include <gtest/gtest.h>

#include <random>

#include "cmo/context.hpp"
#include "cmo/errors.hpp"
#include "cmo/util.hpp"
#include "stub_forge_server.hpp"
#include "test_support.hpp"

using namespace cmo;
using namespace cmo::context;

namespace {

const std::filesystem::path kProject = std::filesystem::path(CMO_FIXTURES) / "java_project";
const std::string kStore = "src/main/java/org/example/shop/Store.java";
const std::string kComputer = "src/main/java/org/example/shop/Computer.java";

struct Fixture {
    std::shared_ptr<code::MemoryTree> tree = test::fixture_tree(kProject);
    code::ProjectIndex project{tree, std::make_shared<code::JavaGrammar>()};
    diff::CodeDiff diff = diff::parse_unified_diff(read_file(kProject / "change.diff"));
};

std::shared_ptr<llm::Gateway> heuristic_gateway() {
    return std::make_shared<llm::Gateway>(std::make_shared<llm::MockChatClient>(std::nullopt, llm::heuristic_response));
}

/// One-file project from a pre and post text, with the diff computed by hand.
struct Tiny {
    std::shared_ptr<code::MemoryTree> tree = std::make_shared<code::MemoryTree>();
    std::unique_ptr<code::ProjectIndex> project;
    diff::CodeDiff diff;

    Tiny(std::string path, std::string pre, std::string post, std::string diff_text) {
        tree->pre[path] = std::move(pre);
        tree->post[path] = std::move(post);
        project = std::make_unique<code::ProjectIndex>(tree, std::make_shared<code::JavaGrammar>());
        diff = diff::parse_unified_diff(diff_text);
    }
};

std::string fmt_diff(const std::string& path, int line, const std::string& old_line, const std::string& new_line) {
    return "--- a/" + path + "\n+++ b/" + path + "\n@@ -" + std::to_string(line) + " +" + std::to_string(line) +
           " @@\n-" + old_line + "\n+" + new_line + "\n";
}

}  // namespace

// ---- invoked methods -------------------------------------------------------

TEST(InvokedMethods, FixtureResolvesProjectCallsAndSkipsThirdParty) {
    Fixture f;
    const auto ex = extract_invoked_methods(f.diff, f.project);
    EXPECT_TRUE(ex.failures.empty());
    ASSERT_EQ(ex.items.size(), 2u);
    EXPECT_EQ(ex.items[0].path, kStore);
    EXPECT_EQ(ex.items[0].signature, "public Computer getComputer(String id, int slot)");
    EXPECT_EQ(ex.items[0].lines, (diff::LineRange{18, 23}));
    EXPECT_EQ(ex.items[0].body, f.tree->post[kStore].substr(f.tree->post[kStore].find("    public Computer getComputer"),
                                                           ex.items[0].body.size()));
    EXPECT_EQ(ex.items[1].path, kComputer);
    EXPECT_EQ(ex.items[1].owner_type, "Computer");
    EXPECT_EQ(ex.items[1].signature, "public void reset()");
    EXPECT_EQ(ex.items[1].body, "    public void reset() {\n        resets++;\n    }\n");
}

TEST(InvokedMethods, LineWithoutCallsYieldsNothing) {
    Tiny t("A.java", "class A {\n    int x = 1;\n}\n", "class A {\n    int x = 2;\n}\n",
           "--- a/A.java\n+++ b/A.java\n@@ -1,3 +1,3 @@\n class A {\n-    int x = 1;\n+    int x = 2;\n }\n");
    EXPECT_TRUE(extract_invoked_methods(t.diff, *t.project).items.empty());
}

TEST(InvokedMethods, ArityAndReceiverSelectOverload) {
    const std::string post =
        "class A {\n"
        "    B b = new B();\n"
        "    void f() {\n"
        "        b.run(1);\n"
        "        this.g();\n"
        "        B.make();\n"
        "    }\n"
        "    void g() {}\n"
        "    void g(int x) {}\n"
        "}\n"
        "class B {\n"
        "    void run() {}\n"
        "    void run(int n) {}\n"
        "    static B make() { return new B(); }\n"
        "}\n";
    const std::string pre = post.substr(0, post.find("        b.run(1);\n")) +
                            post.substr(post.find("    }\n    void g()"));
    Tiny t("A.java", pre, post,
           "--- a/A.java\n+++ b/A.java\n@@ -3,2 +3,5 @@\n     void f() {\n+        b.run(1);\n+        this.g();\n"
           "+        B.make();\n     }\n");
    const auto ex = extract_invoked_methods(t.diff, *t.project);
    ASSERT_EQ(ex.items.size(), 3u);
    EXPECT_EQ(ex.items[0].signature, "void run(int n)");
    EXPECT_EQ(ex.items[1].signature, "void g()");
    EXPECT_EQ(ex.items[2].signature, "static B make()");
}

TEST(InvokedMethods, UnparseableFileIsReportedAndOthersContinue) {
    auto tree = test::fixture_tree(kProject);
    tree->post["Broken.java"] = "class Broken { void f() { g();\n";
    code::ProjectIndex project(tree, std::make_shared<code::JavaGrammar>());
    const std::string text = read_file(kProject / "change.diff") +
                             "--- /dev/null\n+++ b/Broken.java\n@@ -0,0 +1 @@\n+class Broken { void f() { g();\n";
    const auto ex = extract_invoked_methods(diff::parse_unified_diff(text), project);
    EXPECT_EQ(ex.items.size(), 2u);
    ASSERT_EQ(ex.failures.size(), 1u);
    EXPECT_EQ(ex.failures[0].path, "Broken.java");
}

// ---- variable types --------------------------------------------------------

TEST(VariableTypes, FixtureMatchesManualScopeResolution) {
    Fixture f;
    const auto ex = extract_variable_types(f.diff, f.project);
    struct Want {
        std::string name, type;
        bool field;
        int line;
        std::vector<std::string> modifiers;
    };
    const std::vector<Want> want = {
        {"MAX_ITEMS", "int", true, 8, {"private", "static", "final"}},
        {"name", "String", true, 11, {"private"}},
        {"sum", "int", false, 30, {}},
        {"price", "int", false, 32, {}},
        {"discount", "int", false, 29, {"parameter"}},
        {"key", "String", false, 43, {}},
        {"id", "String", false, 40, {"parameter"}},
        {"c", "Computer", false, 44, {}},
        // The local declared on line 41 shadows the long field on line 12.
        {"count", "int", false, 41, {}},
    };
    ASSERT_EQ(ex.items.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        SCOPED_TRACE(want[i].name);
        EXPECT_EQ(ex.items[i].name, want[i].name);
        EXPECT_EQ(ex.items[i].type, want[i].type);
        EXPECT_EQ(ex.items[i].field, want[i].field);
        EXPECT_EQ(ex.items[i].declared_line, want[i].line);
        EXPECT_EQ(ex.items[i].modifiers, want[i].modifiers);
        EXPECT_EQ(ex.items[i].path, kStore);
    }
}

TEST(VariableTypes, LiteralsOnlyYieldNothing) {
    Tiny t("A.java", "class A {\n    void f() {\n        System.out.println(1);\n    }\n}\n",
           "class A {\n    void f() {\n        System.out.println(\"x\" + 2);\n    }\n}\n",
           "--- a/A.java\n+++ b/A.java\n@@ -3 +3 @@\n-        System.out.println(1);\n"
           "+        System.out.println(\"x\" + 2);\n");
    EXPECT_TRUE(extract_variable_types(t.diff, *t.project).items.empty());
}

TEST(VariableTypes, ThisQualifiedNameResolvesToField) {
    const std::string post =
        "class A {\n"
        "    private long size;\n"
        "    void set(int size) {\n"
        "        this.size = size;\n"
        "    }\n"
        "}\n";
    Tiny t("A.java", "class A {\n    private long size;\n    void set(int size) {\n    }\n}\n", post,
           "--- a/A.java\n+++ b/A.java\n@@ -3,2 +3,3 @@\n     void set(int size) {\n+        this.size = size;\n     }\n");
    const auto ex = extract_variable_types(t.diff, *t.project);
    ASSERT_EQ(ex.items.size(), 2u);
    EXPECT_EQ(ex.items[0].type, "long");
    EXPECT_TRUE(ex.items[0].field);
    EXPECT_EQ(ex.items[1].type, "int");
    EXPECT_FALSE(ex.items[1].field);
}

// ---- enclosing blocks ------------------------------------------------------

TEST(EnclosingBlock, FixtureRegions) {
    Fixture f;
    const auto ex = extract_enclosing_block(f.diff, f.project);
    ASSERT_EQ(ex.items.size(), 4u);
    const std::vector<std::pair<std::string, diff::LineRange>> want = {
        {"class", {7, 60}},  // field declaration
        {"class", {7, 60}},  // added method plus the blank line after it
        {"if", {33, 35}},
        {"try", {42, 50}},  // the whole try/catch/finally
    };
    code::ProjectIndex fresh(f.tree, std::make_shared<code::JavaGrammar>());
    const auto* model = fresh.post(kStore);
    for (std::size_t i = 0; i < want.size(); ++i) {
        SCOPED_TRACE(i);
        EXPECT_EQ(ex.items[i].kind, want[i].first);
        EXPECT_EQ(ex.items[i].lines, want[i].second);
        EXPECT_EQ(ex.items[i].text, model->lines_text(want[i].second.first, want[i].second.last));
    }
    EXPECT_NE(ex.items[3].text.find("} catch (IllegalStateException e) {"), std::string::npos);
    EXPECT_NE(ex.items[3].text.find("} finally {"), std::string::npos);
}

TEST(EnclosingBlock, PureDeletionUsesSurroundingPostLines) {
    const std::string pre =
        "class A {\n    void f(int x) {\n        if (x > 0) {\n            g();\n            h();\n        }\n    }\n}\n";
    const std::string post = "class A {\n    void f(int x) {\n        if (x > 0) {\n            g();\n        }\n    }\n}\n";
    Tiny t("A.java", pre, post, "--- a/A.java\n+++ b/A.java\n@@ -4,3 +4,2 @@\n             g();\n-            h();\n         }\n");
    const auto ex = extract_enclosing_block(t.diff, *t.project);
    ASSERT_EQ(ex.items.size(), 1u);
    EXPECT_EQ(ex.items[0].kind, "if");
    EXPECT_EQ(ex.items[0].lines, (diff::LineRange{3, 5}));
}

TEST(EnclosingBlock, AddedAndDeletedFilesAreSkipped) {
    auto tree = std::make_shared<code::MemoryTree>();
    tree->post["N.java"] = "class N {\n}\n";
    tree->pre["D.java"] = "class D {\n}\n";
    code::ProjectIndex project(tree, std::make_shared<code::JavaGrammar>());
    const auto d = diff::parse_unified_diff(
        "--- /dev/null\n+++ b/N.java\n@@ -0,0 +1,2 @@\n+class N {\n+}\n"
        "--- a/D.java\n+++ /dev/null\n@@ -1,2 +0,0 @@\n-class D {\n-}\n");
    EXPECT_TRUE(extract_enclosing_block(d, project).items.empty());
}

TEST(EnclosingBlock, PropertyBlockContainsEveryAddedLine) {
    // Mutate single lines of the fixture's Store.java and check containment each time.
    const std::string base = read_file(kProject / "post" / kStore);
    const auto lines = split_lines(base);
    std::mt19937 rng(3);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const int ln = std::uniform_int_distribution<int>(8, static_cast<int>(lines.size()) - 1)(rng);
        const std::string& old_line = lines[ln - 1];
        if (trim(old_line).empty() || trim(old_line) == "}" || old_line.find('{') != std::string::npos) continue;
        const std::string new_line = old_line + " // edited";
        std::string post;
        for (int i = 1; i <= static_cast<int>(lines.size()); ++i) post += (i == ln ? new_line : lines[i - 1]) + "\n";
        Tiny t(kStore, base, post, fmt_diff(kStore, ln, old_line, new_line));
        const auto ex = extract_enclosing_block(t.diff, *t.project);
        ASSERT_EQ(ex.items.size(), 1u) << "line " << ln;
        EXPECT_NE(ex.items[0].text.find(new_line + "\n"), std::string::npos) << "line " << ln;
        EXPECT_TRUE(ex.items[0].lines.contains(ln));
        ++checked;
    }
    EXPECT_GT(checked, 20);
}

// ---- important file information --------------------------------------------

namespace {

std::string churn_diff(const std::vector<std::pair<std::string, int>>& files) {
    std::string out;
    for (const auto& [path, n] : files) {
        out += "--- a/" + path + "\n+++ b/" + path + "\n@@ -1," + std::to_string(n) + " +1," + std::to_string(n) + " @@\n";
        for (int i = 0; i < n; ++i) out += "-x" + std::to_string(i) + "\n";
        for (int i = 0; i < n; ++i) out += "+y" + std::to_string(i) + "\n";
    }
    return out;
}

}  // namespace

TEST(ImportantFile, SingleFileIsFlagged) {
    const auto item = important_file_info(diff::parse_unified_diff(churn_diff({{"a.c", 1}})));
    EXPECT_EQ(item.kind, ContextKind::ImportantFileInfo);
    EXPECT_EQ(item.provenance, "a.c");
    EXPECT_NE(item.payload.find("Most important file: a.c (2 changed lines)"), std::string::npos);
}

TEST(ImportantFile, LargestChurnWins) {
    const auto item = important_file_info(diff::parse_unified_diff(churn_diff({{"b.c", 5}, {"a.c", 1}})));
    EXPECT_EQ(item.provenance, "b.c");
    EXPECT_NE(item.payload.find("b.c (modified): +5 -5\na.c (modified): +1 -1\n"), std::string::npos);
}

TEST(ImportantFile, TieGoesToFirstPathLexicographically) {
    EXPECT_EQ(important_file_info(diff::parse_unified_diff(churn_diff({{"z.c", 2}, {"m.c", 2}, {"q.c", 2}}))).provenance,
              "m.c");
    EXPECT_THROW(important_file_info(diff::CodeDiff{}), PreconditionError);
}

// ---- summaries -------------------------------------------------------------

TEST(Summaries, EmptyBodyIsRejected) {
    auto gw = heuristic_gateway();
    EXPECT_THROW(summarize_method_body(*gw, "  \n"), PreconditionError);
}

TEST(Summaries, FixtureReplyIsReturnedVerbatim) {
    test::TempDir dir;
    const std::string body = "int twice(int x) {\n    return 2 * x;\n}\n";
    llm::PromptSettings s;
    const auto request = llm::build_summary_prompt(body, llm::SummaryTarget::method, 120, s);
    test::write_text(dir.path() / llm::MockChatClient::fixture_name(request), "Doubles its argument.\n");
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(dir.path(), nullptr));
    EXPECT_EQ(summarize_method_body(gw, body), "Doubles its argument.");
}

TEST(Summaries, LongBodyIsCutToInputBudget) {
    std::string body = "class Huge {\n";
    for (int i = 0; i < 2000; ++i) body += "    int field" + std::to_string(i) + " = " + std::to_string(i) + ";\n";
    body += "}\n";
    std::string seen_body;
    double seen_temperature = -1;
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(std::nullopt, [&](const llm::ChatRequest& r) {
        seen_body = r.slots.at("body");
        seen_temperature = r.temperature;
        return std::string(4000, 'w');
    }));
    SummaryOptions opts;
    opts.input_token_budget = 500;
    opts.summary_token_budget = 50;
    opts.settings.temperature = 0.9;
    const auto summary = summarize_class_body(gw, body, opts);
    EXPECT_LE(estimate_tokens(seen_body), 500u);
    EXPECT_EQ(seen_body.rfind("class Huge {\n", 0), 0u);
    EXPECT_NE(seen_body.find("more lines)"), std::string::npos);
    EXPECT_EQ(seen_temperature, 0.0);
    EXPECT_LE(estimate_tokens(summary), 50u);
}

TEST(Summaries, FitToBudgetKeepsShortBodies) {
    EXPECT_EQ(fit_to_budget("a\nb\n", 10), "a\nb\n");
}

// ---- commit type -----------------------------------------------------------

TEST(CommitTypeClassifier, DocsOnlyDiff) {
    auto gw = heuristic_gateway();
    const std::string d = "--- a/README.md\n+++ b/README.md\n@@ -1 +1 @@\n-old\n+new\n";
    EXPECT_EQ(classify_commit_type(*gw, d, "update readme").label, "docs");
}

TEST(CommitTypeClassifier, LabelOutsideTaxonomyFailsAfterRetries) {
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(std::nullopt, [](const llm::ChatRequest&) { return "banana"; }));
    EXPECT_THROW(classify_commit_type(gw, "d", "m"), UnparseableResponse);
    EXPECT_EQ(gw.calls("classify"), 3u);
}

TEST(CommitTypeClassifier, PromptCarriesDiffAndMessage) {
    llm::ChatRequest seen;
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(std::nullopt, [&](const llm::ChatRequest& r) {
        seen = r;
        return "Fix.";
    }));
    Fixture f;
    EXPECT_EQ(classify_commit_type(gw, f.diff.raw_text, "Guard computer lookup").label, "fix");
    const std::string golden = std::string(CMO_GOLDEN) + "/classify_prompt.txt";
    if (std::getenv("CMO_UPDATE_GOLDEN")) write_file_atomic(golden, seen.system + "\n---\n" + seen.user);
    EXPECT_EQ(seen.system + "\n---\n" + seen.user, read_file(golden));
    EXPECT_NE(seen.user.find("+            Computer c = getComputer(key, count);"), std::string::npos);
    EXPECT_NE(seen.user.find("Guard computer lookup"), std::string::npos);
    EXPECT_EQ(seen.temperature, 0.0);
}

// ---- forge -----------------------------------------------------------------

TEST(ArtifactRefs, RecognizedForms) {
    const auto refs = forge::find_artifact_refs(
        "Fix #123 (HADOOP-42), see https://github.com/o/r/pull/7 and "
        "https://issues.apache.org/jira/browse/JENKINS-5; UTF-8 and &#60; are not refs. Again #123.");
    std::vector<std::string> ids;
    for (const auto& r : refs) ids.push_back(r.id);
    EXPECT_EQ(ids, (std::vector<std::string>{"123", "HADOOP-42", "7", "JENKINS-5"}));
    EXPECT_TRUE(forge::find_artifact_refs("plain message").empty());
    EXPECT_TRUE(forge::find_artifact_refs("HADOOP-42", {"HDFS"}).empty());
}

TEST(Forge, TitleFromStub) {
    test::StubForgeServer server(std::map<std::string, std::string>{{"123", "Computer view hides master"}, {"HDFS-9", "Slow restart"}});
    forge::ForgeClient client({server.url()});
    const auto item = forge::fetch_linked_artifact_titles("Fix lookup (#123, HDFS-9)", client);
    ASSERT_TRUE(item);
    EXPECT_EQ(item->kind, ContextKind::PullRequestIssueTitle);
    EXPECT_EQ(item->payload, "#123: Computer view hides master\nHDFS-9: Slow restart");
    EXPECT_EQ(item->provenance, server.url() + "/issues/123, " + server.url() + "/issues/HDFS-9");
}

TEST(Forge, NoReferenceIsAbsentWithoutCalls) {
    test::StubForgeServer server({});
    forge::ForgeClient client({server.url()});
    EXPECT_FALSE(forge::fetch_linked_artifact_titles("Tidy imports", client));
    EXPECT_EQ(server.hits(), 0);
}

TEST(Forge, NotFoundIsAbsent) {
    test::StubForgeServer server({});
    forge::ForgeClient client({server.url()});
    EXPECT_FALSE(forge::fetch_linked_artifact_titles("Fix #404", client));
    EXPECT_EQ(server.hits(), 1);
}

TEST(Forge, AuthAndTransportFailures) {
    test::StubForgeServer server(std::map<std::string, std::string>{{"1", "t"}}, "sekrit");
    unsetenv("CMO_TEST_FORGE_TOKEN");
    forge::ForgeClient anonymous({server.url(), "CMO_TEST_FORGE_TOKEN"});
    EXPECT_THROW(forge::fetch_linked_artifact_titles("#1", anonymous), AuthFailure);
    setenv("CMO_TEST_FORGE_TOKEN", "sekrit", 1);
    EXPECT_TRUE(forge::fetch_linked_artifact_titles("#1", anonymous));
    unsetenv("CMO_TEST_FORGE_TOKEN");

    forge::ForgeClient nowhere({"http://127.0.0.1:1", "CMO_TEST_FORGE_TOKEN", 1.0});
    EXPECT_THROW(forge::fetch_linked_artifact_titles("#1", nowhere), ForgeUnreachable);
    EXPECT_THROW(forge::ForgeClient({}), ConfigError);
}

// ---- collection ------------------------------------------------------------

TEST(CollectContexts, AllSevenWithForgeStub) {
    Fixture f;
    test::StubForgeServer server(std::map<std::string, std::string>{{"123", "Computer view hides master"}});
    forge::ForgeClient client({server.url()});
    auto gw = heuristic_gateway();
    CollectOptions opts;
    opts.human_message = "Guard computer lookup (#123)";
    opts.forge = &client;
    const auto got = collect_contexts(f.diff, f.project, *gw, opts);
    EXPECT_TRUE(got.warnings.empty());
    ASSERT_EQ(got.items.size(), 7u);
    for (std::size_t i = 0; i < kContextKindCount; ++i) EXPECT_EQ(got.items[i].kind, kContextKinds[i]);
    for (const auto& item : got.items) {
        SCOPED_TRACE(std::string(to_string(item.kind)));
        EXPECT_FALSE(trim(item.payload).empty());
        const bool points_at_input = item.provenance.find(kStore) != std::string::npos ||
                                     item.provenance.find(kComputer) != std::string::npos ||
                                     item.provenance.rfind(server.url(), 0) == 0;
        EXPECT_TRUE(points_at_input) << item.provenance;
    }
    EXPECT_NE(got.find(ContextKind::SyntacticBlock)->payload.find("} finally {"), std::string::npos);
    EXPECT_NE(got.find(ContextKind::VariableDataTypes)->payload.find("count: int (local variable)"), std::string::npos);
    EXPECT_NE(got.find(ContextKind::InvokedMethods)->payload.find("public void reset():"), std::string::npos);
    EXPECT_NE(got.find(ContextKind::MethodBodySummary)->payload.find("Store.total(int discount):"), std::string::npos);
    EXPECT_EQ(gw->calls("summarize_class"), 1u);
}

TEST(CollectContexts, WithoutForgeSixKinds) {
    Fixture f;
    auto gw = heuristic_gateway();
    const auto got = collect_contexts(f.diff, f.project, *gw, {.human_message = "Guard lookup (#123)"});
    ContextKindSet want;
    for (auto k : kContextKinds)
        if (k != ContextKind::PullRequestIssueTitle) want.insert(k);
    EXPECT_EQ(got.kinds(), want);
}

TEST(CollectContexts, ToolFailuresBecomeWarnings) {
    Fixture f;
    llm::Gateway gw(std::make_shared<llm::MockChatClient>(std::nullopt, nullptr));
    const auto got = collect_contexts(f.diff, f.project, gw);
    ContextKindSet want;
    want.insert(ContextKind::ImportantFileInfo);
    want.insert(ContextKind::SyntacticBlock);
    want.insert(ContextKind::VariableDataTypes);
    EXPECT_EQ(got.kinds(), want);
    EXPECT_EQ(got.warnings.size(), 3u);
}

TEST(CollectContexts, EmptyDiffIsPrecondition) {
    Fixture f;
    auto gw = heuristic_gateway();
    EXPECT_THROW(collect_contexts(diff::CodeDiff{}, f.project, *gw), PreconditionError);
}
