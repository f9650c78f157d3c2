// Content-driven stand-in for a chat model. Every answer is a pure function of the
// request's slots and temperature, so offline runs are reproducible byte for byte.

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "cmo/gateway.hpp"
#include "cmo/types.hpp"
#include "cmo/util.hpp"

namespace cmo::llm {
namespace {

const std::string& slot(const ChatRequest& r, const std::string& name) {
    static const std::string empty;
    auto it = r.slots.find(name);
    return it == r.slots.end() ? empty : it->second;
}

std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool has_type_prefix(std::string_view message) {
    static const std::regex re(R"(^[a-z]+(\([^)]*\))?!?: \S)");
    const std::string first = split_lines(message).empty() ? "" : split_lines(message).front();
    return std::regex_search(first, re);
}

std::vector<std::string> changed_files(std::string_view diff) {
    std::vector<std::string> out;
    for (const auto& line : split_lines(diff)) {
        if (line.rfind("+++ ", 0) != 0) continue;
        std::string p = line.substr(4);
        if (p == "/dev/null") continue;
        if (p.rfind("b/", 0) == 0) p = p.substr(2);
        out.push_back(p);
    }
    return out;
}

std::string stem_of(const std::string& path) {
    std::string base = path.substr(path.find_last_of('/') == std::string::npos ? 0 : path.find_last_of('/') + 1);
    return to_lower(base.substr(0, base.find('.')));
}

std::set<std::string> changed_identifiers(std::string_view diff) {
    std::set<std::string> out;
    for (const auto& line : split_lines(diff)) {
        if (line.empty() || (line[0] != '+' && line[0] != '-')) continue;
        if (line.rfind("+++", 0) == 0 || line.rfind("---", 0) == 0) continue;
        for (auto& w : words(line.substr(1)))
            if (w.size() >= 4 && !std::isdigit(static_cast<unsigned char>(w[0]))) out.insert(w);
    }
    return out;
}

int score_rationality(const std::string& message) {
    static const char* markers[] = {"because", "so that", "in order to", "to avoid", "to prevent",
                                    "otherwise", "since", "ensure", "needed", "fixes", "addresses"};
    const std::string lower = to_lower(message);
    int found = 0;
    for (const char* m : markers)
        if (lower.find(m) != std::string::npos) ++found;
    int s = std::min(found, 2);
    if (has_type_prefix(message)) ++s;
    const auto lines = split_lines(message);
    const auto body = std::count_if(lines.begin() + (lines.empty() ? 0 : 1), lines.end(),
                                    [](const std::string& l) { return !trim(l).empty(); });
    if (body >= 2) ++s;
    return std::min(s, 4);
}

int score_comprehensiveness(const std::string& message, const std::string& diff) {
    const std::string lower = to_lower(message);
    const auto files = changed_files(diff);
    int s = 0;
    if (!files.empty()) {
        std::size_t mentioned = 0;
        for (const auto& f : files)
            if (lower.find(stem_of(f)) != std::string::npos) ++mentioned;
        s += static_cast<int>(2 * mentioned / files.size());
    }
    const auto ids = changed_identifiers(diff);
    const auto msg_words = words(message);
    const std::set<std::string> msg_set(msg_words.begin(), msg_words.end());
    std::size_t hits = 0;
    for (const auto& id : ids)
        if (msg_set.count(id)) ++hits;
    if (hits >= 1) ++s;
    if (hits >= 3) ++s;
    return std::min(s, 4);
}

int score_conciseness(const std::string& message) {
    const auto n = words(message).size();
    if (n <= 25) return 4;
    if (n <= 50) return 3;
    if (n <= 90) return 2;
    if (n <= 150) return 1;
    return 0;
}

int score_expressiveness(const std::string& message) {
    int s = 4;
    const auto lines = split_lines(message);
    const std::string summary = lines.empty() ? "" : lines.front();
    if (summary.size() > 72) --s;
    if (message.find("  ") != std::string::npos) --s;
    if (message.find("??") != std::string::npos || message.find("!!") != std::string::npos) --s;
    if (words(message).size() < 3) --s;
    std::string rest = summary;
    if (auto colon = rest.find(": "); colon != std::string::npos && has_type_prefix(message)) rest = rest.substr(colon + 2);
    if (!rest.empty() && !std::isalpha(static_cast<unsigned char>(rest[0]))) --s;
    return std::max(s, 0);
}

std::string answer_score(const ChatRequest& r) {
    const std::string& message = slot(r, "message");
    const std::string& metric = slot(r, "metric");
    int v = 0;
    if (metric == "rationality") v = score_rationality(message);
    else if (metric == "comprehensiveness") v = score_comprehensiveness(message, slot(r, "diff"));
    else if (metric == "conciseness") v = score_conciseness(message);
    else if (metric == "expressiveness") v = score_expressiveness(message);
    return std::to_string(v);
}

std::string first_meaningful_line(std::string_view payload, std::size_t limit) {
    for (const auto& line : split_lines(payload)) {
        std::string t = trim(line);
        if (t.empty() || t == "{" || t == "}") continue;
        if (t.size() > limit) {
            t = t.substr(0, limit);
            while (!t.empty() && t.back() != ' ') t.pop_back();
            t = trim(t);
        }
        while (!t.empty() && (t.back() == '{' || t.back() == ';' || t.back() == '.' || t.back() == ':')) t.pop_back();
        return trim(t);
    }
    return "";
}

std::string context_sentence(const std::string& kind, const std::string& payload, bool escalated) {
    const std::string gist = first_meaningful_line(payload, 60);
    if (kind == "ImportantFileInfo")
        return escalated ? fmt::format("Most of the edit lands in {}.", gist)
                         : fmt::format("The main change is in {}.", gist);
    if (kind == "PullRequestIssueTitle")
        return escalated ? fmt::format("Needed for \"{}\".", gist) : fmt::format("This addresses \"{}\".", gist);
    if (kind == "MethodBodySummary")
        return escalated ? fmt::format("Touched method: {}.", gist) : fmt::format("The changed method: {}.", gist);
    if (kind == "ClassBodySummary")
        return escalated ? fmt::format("Enclosing class: {}.", gist) : fmt::format("Within the class: {}.", gist);
    if (kind == "SyntacticBlock")
        return escalated ? fmt::format("The edit sits in `{}`.", gist)
                         : fmt::format("The edit is inside `{}` so that the surrounding flow stays intact.", gist);
    if (kind == "InvokedMethods")
        return escalated ? fmt::format("It relies on `{}`.", gist)
                         : fmt::format("It now calls `{}` to avoid duplicated logic.", gist);
    if (kind == "VariableDataTypes")
        return escalated ? fmt::format("Uses {}.", gist) : fmt::format("Relevant state: {}.", gist);
    return fmt::format("Also considers {}.", gist);
}

std::string with_type_prefix(const std::string& message, const std::string& type) {
    if (type.empty() || has_type_prefix(message)) return message;
    auto lines = split_lines(message);
    if (lines.empty()) return message;
    std::string first = lines.front();
    if (!first.empty()) first[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(first[0])));
    lines.front() = type + ": " + first;
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) out += (i ? "\n" : "") + lines[i];
    return out;
}

std::string append_body_line(const std::string& message, const std::string& line) {
    const auto lines = split_lines(message);
    const bool has_body = lines.size() >= 2;
    return message + (has_body ? "\n" : "\n\n") + line;
}

std::string answer_update(const ChatRequest& r) {
    std::string msg = with_type_prefix(trim(slot(r, "previous_message")), slot(r, "commit_type"));
    return append_body_line(msg, context_sentence(slot(r, "context_kind"), slot(r, "context_payload"),
                                                  r.temperature > 0.0));
}

std::string answer_update_all(const ChatRequest& r) {
    std::string msg = with_type_prefix(trim(slot(r, "previous_message")), slot(r, "commit_type"));
    const std::string& contexts = slot(r, "contexts");
    // Sections look like "#### Display Name\npayload"; map display names back to kinds.
    std::string current_kind, payload;
    auto flush = [&] {
        if (!current_kind.empty())
            msg = append_body_line(msg, context_sentence(current_kind, payload, r.temperature > 0.0));
        payload.clear();
    };
    for (const auto& line : split_lines(contexts)) {
        if (line.rfind("#### ", 0) == 0) {
            flush();
            current_kind.clear();
            for (ContextKind k : kContextKinds)
                if (line.substr(5) == display_name(k)) current_kind = std::string(to_string(k));
            continue;
        }
        payload += line + "\n";
    }
    flush();
    return msg;
}

std::string answer_classify(const ChatRequest& r) {
    const auto files = changed_files(slot(r, "diff"));
    const std::string msg = to_lower(slot(r, "message"));
    const auto all = [&](auto pred) { return !files.empty() && std::all_of(files.begin(), files.end(), pred); };
    const auto ends = [](const std::string& s, std::string_view suf) {
        return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
    };
    std::string label = "chore";
    if (all([&](const std::string& f) { return ends(f, ".md") || ends(f, ".txt") || ends(f, ".rst") || f.rfind("docs/", 0) == 0; }))
        label = "docs";
    else if (all([&](const std::string& f) { return to_lower(f).find("test") != std::string::npos; }))
        label = "test";
    else if (all([&](const std::string& f) {
                 return ends(f, "pom.xml") || ends(f, ".gradle") || ends(f, "CMakeLists.txt") || ends(f, "Makefile");
             }))
        label = "build";
    else if (msg.find("fix") != std::string::npos || msg.find("bug") != std::string::npos ||
             msg.find("error") != std::string::npos)
        label = "fix";
    else if (msg.find("refactor") != std::string::npos || msg.find("rename") != std::string::npos ||
             msg.find("clean") != std::string::npos)
        label = "refactor";
    else if (msg.find("add") != std::string::npos || msg.find("implement") != std::string::npos ||
             msg.find("support") != std::string::npos)
        label = "feat";
    else if (msg.find("format") != std::string::npos || msg.find("style") != std::string::npos)
        label = "style";
    const std::string& taxonomy = slot(r, "taxonomy");
    if (!taxonomy.empty() && taxonomy.find(label) == std::string::npos) {
        const auto comma = taxonomy.find(',');
        return trim(taxonomy.substr(0, comma));
    }
    return label;
}

std::string answer_summary(const ChatRequest& r, std::string_view what) {
    const std::string& body = slot(r, "body");
    const auto lines = split_lines(body);
    const std::string head = first_meaningful_line(body, 80);
    return fmt::format("The {} {} spans {} lines", what, head, lines.size());
}

std::string answer_filter(const ChatRequest& r) {
    const std::string& message = slot(r, "message");
    return (words(message).size() >= 3 && score_rationality(message) >= 1) ? "yes" : "no";
}

}  // namespace

std::string heuristic_response(const ChatRequest& request) {
    const std::string& t = request.template_id;
    if (t == "score") return answer_score(request);
    if (t == "update") return answer_update(request);
    if (t == "update_all") return answer_update_all(request);
    if (t == "classify") return answer_classify(request);
    if (t == "summarize_method") return answer_summary(request, "method");
    if (t == "summarize_class") return answer_summary(request, "class");
    if (t == "filter_good") return answer_filter(request);
    return "";
}

}  // namespace cmo::llm
