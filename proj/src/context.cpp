#include "cmo/context.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "cmo/errors.hpp"
#include "cmo/util.hpp"

namespace cmo::context {

namespace {

using code::SyntaxModel;

/// Post-change line numbers of the added lines of every surviving textual file.
std::map<std::string, std::set<int>> added_lines(const diff::CodeDiff& diff) {
    std::map<std::string, std::set<int>> out;
    for (const auto& f : diff.files) {
        if (f.binary || f.change_kind == diff::ChangeKind::deleted) continue;
        auto& lines = out[f.path()];
        for (const auto& h : f.hunks) {
            int n = h.new_start;
            for (const auto& l : h.lines) {
                if (l.tag == diff::LineTag::removed) continue;
                if (l.tag == diff::LineTag::added) lines.insert(n);
                ++n;
            }
        }
    }
    return out;
}

template <typename T>
const SyntaxModel* load_post(code::ProjectIndex& project, const std::string& path, Extraction<T>& ex) {
    try {
        return project.post(path);
    } catch (const UnparseableFile& e) {
        ex.failures.push_back({path, e.what()});
        return nullptr;
    }
}

std::string base_type(std::string type) {
    if (auto lt = type.find('<'); lt != std::string::npos) type.erase(lt);
    while (!type.empty() && (type.back() == ']' || type.back() == '[' || type.back() == '.' || type.back() == ' '))
        type.pop_back();
    if (auto dot = type.rfind('.'); dot != std::string::npos) type.erase(0, dot + 1);
    return trim(type);
}

/// Named types enclosing `offset`, innermost first.
std::vector<const code::TypeDecl*> enclosing_types(const SyntaxModel& m, std::size_t offset) {
    std::vector<const code::TypeDecl*> out;
    for (const auto& t : m.types)
        if (t.kind != "anonymous" && t.body.contains(offset)) out.push_back(&t);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->body.length() < b->body.length(); });
    return out;
}

const code::VariableDecl* resolve_variable(const SyntaxModel& m, const std::string& name, std::size_t offset,
                                           bool this_only) {
    const auto types = enclosing_types(m, offset);
    const std::string owner = types.empty() ? std::string() : types.front()->name;
    const code::VariableDecl* best = nullptr;
    for (const auto& v : m.variables) {
        if (v.name != name || !v.scope.contains(offset)) continue;
        if (this_only && !(v.field && v.owner_type == owner)) continue;
        if (!best || v.scope.length() < best->scope.length() ||
            (v.scope.length() == best->scope.length() && v.offset > best->offset))
            best = &v;
    }
    return best;
}

bool arity_matches(const code::MethodDecl& md, int arity) {
    const auto n = static_cast<int>(md.params.size());
    if (n == arity) return true;
    return n > 0 && md.params.back().varargs && arity >= n - 1;
}

struct Located {
    const SyntaxModel* model;
    const code::MethodDecl* method;
};

class TypeDirectory {
public:
    explicit TypeDirectory(code::ProjectIndex& project) {
        for (const SyntaxModel* m : project.all_post())
            for (const auto& t : m->types)
                if (t.kind != "anonymous") by_name_[t.name].push_back(m);
    }

    bool known(const std::string& type) const { return by_name_.count(type) > 0; }

    std::vector<Located> methods(const std::string& type, const std::string& name, int arity) const {
        std::vector<Located> out;
        auto it = by_name_.find(type);
        if (it == by_name_.end()) return out;
        for (const SyntaxModel* m : it->second)
            for (const auto& md : m->methods)
                if (!md.constructor && md.owner_type == type && md.name == name && arity_matches(md, arity))
                    out.push_back({m, &md});
        return out;
    }

private:
    std::map<std::string, std::vector<const SyntaxModel*>> by_name_;
};

std::vector<Located> methods_in_file(const SyntaxModel& m, const std::string& type, const std::string& name,
                                     int arity) {
    std::vector<Located> out;
    for (const auto& md : m.methods)
        if (!md.constructor && md.owner_type == type && md.name == name && arity_matches(md, arity))
            out.push_back({&m, &md});
    return out;
}

std::vector<Located> resolve_invocation(const SyntaxModel& m, const code::Invocation& inv, const TypeDirectory& dir) {
    if (inv.receiver.empty() || inv.receiver == "this") {
        for (const auto* t : enclosing_types(m, inv.offset)) {
            auto found = methods_in_file(m, t->name, inv.name, inv.arity);
            if (!found.empty() || inv.receiver == "this") return found;
        }
        return {};
    }
    if (inv.receiver == "super" || inv.receiver == "<expr>") return {};
    if (const auto* v = resolve_variable(m, inv.receiver, inv.offset, false))
        return dir.methods(base_type(v->type), inv.name, inv.arity);
    if (dir.known(inv.receiver)) return dir.methods(inv.receiver, inv.name, inv.arity);
    return {};
}

/// Lines that must lie inside the enclosing block of `region`.
diff::LineRange region_span(const diff::ChangedRegion& region, int line_count) {
    if (region.new_lines) return *region.new_lines;
    const int below = std::clamp(region.new_anchor, 1, std::max(1, line_count));
    const int above = std::clamp(region.new_anchor - 1, 1, std::max(1, line_count));
    return {std::min(above, below), below};
}

std::string join_modifiers(const std::vector<std::string>& mods) {
    std::string out;
    for (const auto& m : mods) {
        if (m == "parameter") continue;
        out += (out.empty() ? "" : " ") + m;
    }
    return out;
}

std::string truncate_tokens(std::string text, std::size_t budget) {
    const std::size_t max_bytes = budget * 4;
    if (text.size() <= max_bytes) return text;
    auto cut = text.rfind(' ', max_bytes);
    if (cut == std::string::npos || cut == 0) cut = max_bytes;
    text.erase(cut);
    return trim(text);
}

std::string summarize(llm::Gateway& gateway, std::string_view body, llm::SummaryTarget target,
                      const SummaryOptions& options) {
    llm::PromptSettings settings = options.settings;
    settings.temperature = 0.0;
    const auto request = llm::build_summary_prompt(fit_to_budget(body, options.input_token_budget), target,
                                                   options.summary_token_budget, settings);
    std::string reply = trim(gateway.chat(request));
    if (reply.empty()) throw UnparseableResponse("empty summary reply");
    return truncate_tokens(std::move(reply), options.summary_token_budget);
}

std::string qualified(const code::MethodDecl& md) {
    std::string params;
    for (const auto& p : md.params) params += (params.empty() ? "" : ", ") + p.type + " " + p.name;
    return fmt::format("{}.{}({})", md.owner_type, md.name, params);
}

std::string range_label(const std::string& path, diff::LineRange r) {
    return r.first == r.last ? fmt::format("{}:{}", path, r.first) : fmt::format("{}:{}-{}", path, r.first, r.last);
}

}  // namespace

Extraction<InvokedMethod> extract_invoked_methods(const diff::CodeDiff& diff, code::ProjectIndex& project) {
    Extraction<InvokedMethod> ex;
    std::optional<TypeDirectory> dir;
    std::set<std::pair<std::string, std::size_t>> seen;
    for (const auto& [path, lines] : added_lines(diff)) {
        if (lines.empty()) continue;
        const SyntaxModel* m = load_post(project, path, ex);
        if (!m) continue;
        for (const auto& inv : m->invocations) {
            if (!lines.count(inv.line)) continue;
            if (!dir) dir.emplace(project);
            for (const auto& [owner, md] : resolve_invocation(*m, inv, *dir)) {
                if (!seen.insert({owner->path, md->span.begin}).second) continue;
                ex.items.push_back({owner->path, md->owner_type, md->signature, md->span.lines(), owner->span_lines(md->span)});
            }
        }
    }
    for (const auto& f : project.failures())
        if (std::none_of(ex.failures.begin(), ex.failures.end(), [&](const auto& x) { return x.path == f.path; }))
            ex.failures.push_back(f);
    return ex;
}

Extraction<VariableType> extract_variable_types(const diff::CodeDiff& diff, code::ProjectIndex& project) {
    Extraction<VariableType> ex;
    std::set<std::pair<std::string, std::size_t>> seen;
    for (const auto& [path, lines] : added_lines(diff)) {
        if (lines.empty()) continue;
        const SyntaxModel* m = load_post(project, path, ex);
        if (!m) continue;
        for (const auto& use : m->identifiers) {
            if (!lines.count(use.line)) continue;
            const auto* v = resolve_variable(*m, use.name, use.offset, use.this_qualified);
            if (!v || !seen.insert({path, v->offset}).second) continue;
            ex.items.push_back({v->name, v->type, v->modifiers, v->field, path, v->line});
        }
    }
    return ex;
}

Extraction<EnclosingBlock> extract_enclosing_block(const diff::CodeDiff& diff, code::ProjectIndex& project) {
    Extraction<EnclosingBlock> ex;
    std::set<std::string> surviving;
    for (const auto& f : diff.files)
        if (!f.binary && f.change_kind != diff::ChangeKind::deleted && f.change_kind != diff::ChangeKind::added)
            surviving.insert(f.path());
    for (const auto& region : diff::changed_regions(diff)) {
        if (!surviving.count(region.path)) continue;
        const SyntaxModel* m = load_post(project, region.path, ex);
        if (!m) continue;
        const diff::LineRange want = region_span(region, m->line_count());
        const auto spans = [&](const code::SourceSpan& s) { return s.lines().contains(want); };

        const code::SourceSpan* best = nullptr;
        std::string kind;
        for (const auto& s : m->statements)
            if (spans(s.span) && (!best || s.span.length() < best->length())) best = &s.span, kind = s.keyword;
        if (!best)
            for (const auto& md : m->methods)
                if (spans(md.span) && (!best || md.span.length() < best->length())) best = &md.span, kind = "method";
        if (!best)
            for (const auto& t : m->types)
                if (spans(t.span) && (!best || t.span.length() < best->length())) best = &t.span, kind = t.kind;
        if (!best) continue;
        ex.items.push_back({region, region.path, kind, best->lines(), m->span_lines(*best)});
    }
    return ex;
}

std::vector<FileChurn> file_churn(const diff::CodeDiff& diff) {
    std::vector<FileChurn> out;
    for (const auto& f : diff.files) out.push_back({f.path(), f.added_lines(), f.removed_lines()});
    return out;
}

ContextItem important_file_info(const diff::CodeDiff& diff) {
    const auto churn = file_churn(diff);
    if (churn.empty()) throw PreconditionError("important file information needs at least one changed file");
    const FileChurn* top = &churn.front();
    for (const auto& c : churn)
        if (c.churn() > top->churn() || (c.churn() == top->churn() && c.path < top->path)) top = &c;
    std::string payload;
    for (std::size_t i = 0; i < churn.size(); ++i) {
        const auto& c = churn[i];
        payload += fmt::format("{} ({}): +{} -{}\n", c.path, to_string(diff.files[i].change_kind), c.added, c.removed);
    }
    payload += fmt::format("Most important file: {} ({} changed lines)", top->path, top->churn());
    return {ContextKind::ImportantFileInfo, std::move(payload), top->path};
}

std::string fit_to_budget(std::string_view body, std::size_t token_budget) {
    if (estimate_tokens(body) <= token_budget) return std::string(body);
    const auto lines = split_lines(body);
    const std::size_t max_bytes = token_budget * 4;
    std::string out;
    std::size_t kept = 0;
    for (const auto& l : lines) {
        if (out.size() + l.size() + 1 > max_bytes - std::min<std::size_t>(max_bytes, 40)) break;
        out += l + "\n";
        ++kept;
    }
    out += fmt::format("... ({} more lines)", lines.size() - kept);
    return out;
}

std::string summarize_method_body(llm::Gateway& gateway, std::string_view body, const SummaryOptions& options) {
    return summarize(gateway, body, llm::SummaryTarget::method, options);
}

std::string summarize_class_body(llm::Gateway& gateway, std::string_view body, const SummaryOptions& options) {
    return summarize(gateway, body, llm::SummaryTarget::class_body, options);
}

CommitType classify_commit_type(llm::Gateway& gateway, std::string_view diff_text, std::string_view human_message,
                                const std::vector<std::string>& taxonomy, const llm::PromptSettings& settings) {
    llm::PromptSettings s = settings;
    s.temperature = 0.0;
    const auto request = llm::build_classify_prompt(diff_text, human_message, taxonomy, s);
    std::string last;
    for (int attempt = 0; attempt < 3; ++attempt) {
        last = to_lower(trim(gateway.chat(request)));
        while (!last.empty() && (last.back() == '.' || last.back() == ':')) last.pop_back();
        for (const auto& label : taxonomy)
            if (last == to_lower(label)) return {label};
    }
    throw UnparseableResponse("commit type reply is not in the taxonomy: " + last.substr(0, 40));
}

const ContextItem* Collected::find(ContextKind kind) const {
    for (const auto& i : items)
        if (i.kind == kind) return &i;
    return nullptr;
}

ContextKindSet Collected::kinds() const {
    ContextKindSet s;
    for (const auto& i : items) s.insert(i.kind);
    return s;
}

Collected collect_contexts(const diff::CodeDiff& diff, code::ProjectIndex& project, llm::Gateway& gateway,
                           const CollectOptions& options) {
    if (diff.empty()) throw PreconditionError("cannot collect contexts for an empty diff");
    Collected out;
    const auto warn = [&](ContextKind kind, const std::string& what) {
        out.warnings.push_back(fmt::format("{}: {}", display_name(kind), what));
        spdlog::warn("{}", out.warnings.back());
    };
    const auto note_failures = [&](ContextKind kind, const auto& failures) {
        for (const auto& f : failures) warn(kind, f.path + ": " + f.message);
    };
    const auto run = [&](ContextKind kind, auto&& tool) {
        if (options.disabled.contains(kind)) return;
        try {
            if (auto item = tool(); item && !trim(item->payload).empty()) out.items.push_back(std::move(*item));
        } catch (const std::exception& e) {
            warn(kind, e.what());
        }
    };

    run(ContextKind::ImportantFileInfo, [&]() -> std::optional<ContextItem> { return important_file_info(diff); });

    run(ContextKind::PullRequestIssueTitle, [&]() -> std::optional<ContextItem> {
        if (!options.forge || trim(options.human_message).empty()) return std::nullopt;
        return forge::fetch_linked_artifact_titles(options.human_message, *options.forge);
    });

    // Methods and types touched by each region, in region order.
    std::vector<std::pair<const SyntaxModel*, const code::MethodDecl*>> methods;
    std::vector<std::pair<const SyntaxModel*, const code::TypeDecl*>> types;
    {
        Extraction<int> scratch;
        std::set<const void*> seen;
        for (const auto& region : diff::changed_regions(diff)) {
            const SyntaxModel* m = load_post(project, region.path, scratch);
            if (!m) continue;
            const auto want = region_span(region, m->line_count());
            const auto overlaps = [&](const code::SourceSpan& s) {
                return s.first_line <= want.last && s.last_line >= want.first;
            };
            for (const auto& md : m->methods)
                if (overlaps(md.span) && seen.insert(&md).second) methods.push_back({m, &md});
            const code::TypeDecl* inner = nullptr;
            for (const auto& t : m->types)
                if (t.kind != "anonymous" && overlaps(t.span) && (!inner || t.span.length() < inner->span.length()))
                    inner = &t;
            if (inner && seen.insert(inner).second) types.push_back({m, inner});
        }
        note_failures(ContextKind::MethodBodySummary, scratch.failures);
    }

    run(ContextKind::MethodBodySummary, [&]() -> std::optional<ContextItem> {
        std::string payload, prov;
        for (std::size_t i = 0; i < methods.size() && i < options.max_methods; ++i) {
            const auto& [m, md] = methods[i];
            const auto summary = summarize_method_body(gateway, m->span_lines(md->span), options.summaries);
            payload += (payload.empty() ? "" : "\n") + qualified(*md) + ": " + summary;
            prov += (prov.empty() ? "" : "; ") + range_label(m->path, md->span.lines());
        }
        if (payload.empty()) return std::nullopt;
        return ContextItem{ContextKind::MethodBodySummary, payload, prov};
    });

    run(ContextKind::ClassBodySummary, [&]() -> std::optional<ContextItem> {
        std::string payload, prov;
        for (std::size_t i = 0; i < types.size() && i < options.max_classes; ++i) {
            const auto& [m, t] = types[i];
            const auto summary = summarize_class_body(gateway, m->span_lines(t->span), options.summaries);
            payload += (payload.empty() ? "" : "\n") + t->kind + " " + t->name + ": " + summary;
            prov += (prov.empty() ? "" : "; ") + range_label(m->path, t->span.lines());
        }
        if (payload.empty()) return std::nullopt;
        return ContextItem{ContextKind::ClassBodySummary, payload, prov};
    });

    run(ContextKind::SyntacticBlock, [&]() -> std::optional<ContextItem> {
        auto ex = extract_enclosing_block(diff, project);
        note_failures(ContextKind::SyntacticBlock, ex.failures);
        std::string payload, prov;
        std::set<std::tuple<std::string, int, int>> seen;
        for (const auto& b : ex.items) {
            if (!seen.insert({b.path, b.lines.first, b.lines.last}).second) continue;
            const auto label = range_label(b.path, b.lines);
            payload += fmt::format("{}{} ({}):\n{}", payload.empty() ? "" : "\n", label, b.kind,
                                   fit_to_budget(b.text, options.summaries.input_token_budget));
            if (!payload.empty() && payload.back() == '\n') payload.pop_back();
            prov += (prov.empty() ? "" : "; ") + label;
        }
        if (payload.empty()) return std::nullopt;
        return ContextItem{ContextKind::SyntacticBlock, payload, prov};
    });

    run(ContextKind::InvokedMethods, [&]() -> std::optional<ContextItem> {
        auto ex = extract_invoked_methods(diff, project);
        note_failures(ContextKind::InvokedMethods, ex.failures);
        std::string payload, prov;
        for (std::size_t i = 0; i < ex.items.size() && i < options.max_invoked; ++i) {
            const auto& im = ex.items[i];
            const auto summary = summarize_method_body(gateway, im.body, options.summaries);
            payload += fmt::format("{}{}: {}", payload.empty() ? "" : "\n", im.signature, summary);
            prov += (prov.empty() ? "" : "; ") + range_label(im.path, im.lines);
        }
        if (payload.empty()) return std::nullopt;
        return ContextItem{ContextKind::InvokedMethods, payload, prov};
    });

    run(ContextKind::VariableDataTypes, [&]() -> std::optional<ContextItem> {
        auto ex = extract_variable_types(diff, project);
        note_failures(ContextKind::VariableDataTypes, ex.failures);
        std::string payload, prov;
        std::set<std::string> files;
        for (const auto& v : ex.items) {
            const bool param = std::find(v.modifiers.begin(), v.modifiers.end(), "parameter") != v.modifiers.end();
            const std::string role = v.field ? "field" : param ? "parameter" : "local variable";
            const std::string mods = join_modifiers(v.modifiers);
            payload += fmt::format("{}{}: {} ({}{}{})", payload.empty() ? "" : "\n", v.name, v.type, role,
                                   mods.empty() ? "" : ", ", mods);
            if (files.insert(v.path).second) prov += (prov.empty() ? "" : "; ") + v.path;
        }
        if (payload.empty()) return std::nullopt;
        return ContextItem{ContextKind::VariableDataTypes, payload, prov};
    });

    std::stable_sort(out.items.begin(), out.items.end(), [](const auto& a, const auto& b) { return a.kind < b.kind; });
    return out;
}

}  // namespace cmo::context
