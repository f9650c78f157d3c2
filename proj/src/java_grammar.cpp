#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "cmo/errors.hpp"
#include "cmo/grammar.hpp"

namespace cmo::code {

std::size_t SyntaxModel::line_offset(int line) const {
    if (line < 1) return 0;
    if (line > line_count()) return text.size();
    return line_starts[static_cast<std::size_t>(line - 1)];
}

std::string SyntaxModel::lines_text(int first, int last) const {
    if (first < 1) first = 1;
    if (last > line_count()) last = line_count();
    if (first > last) return {};
    const std::size_t b = line_offset(first);
    const std::size_t e = last < line_count() ? line_offset(last + 1) : text.size();
    return text.substr(b, e - b);
}

bool JavaGrammar::handles(std::string_view path) const {
    return path.size() > 5 && path.substr(path.size() - 5) == ".java";
}

std::shared_ptr<const Grammar> make_grammar(std::string_view name) {
    if (name == "java") return std::make_shared<JavaGrammar>();
    throw ConfigError("unknown grammar '" + std::string(name) + "'");
}

namespace {

enum class Tok { ident, keyword, literal, punct };

struct Token {
    Tok kind;
    std::string text;
    std::size_t offset;
    std::size_t end;
    int line;

    bool is(std::string_view p) const { return kind == Tok::punct && text == p; }
    bool kw(std::string_view k) const { return kind == Tok::keyword && text == k; }
};

const std::unordered_set<std::string_view> kKeywords = {
    "abstract", "assert",     "boolean",   "break",     "byte",       "case",      "catch",
    "char",     "class",      "const",     "continue",  "default",    "do",        "double",
    "else",     "enum",       "extends",   "final",     "finally",    "float",     "for",
    "goto",     "if",         "implements", "import",   "instanceof", "int",       "interface",
    "long",     "native",     "new",       "package",   "private",    "protected", "public",
    "return",   "short",      "static",    "strictfp",  "super",      "switch",    "synchronized",
    "this",     "throw",      "throws",    "transient", "try",        "void",      "volatile",
    "while",    "true",       "false",     "null"};

const std::unordered_set<std::string_view> kPrimitives = {"boolean", "byte",  "char", "short", "int",
                                                          "long",    "float", "double", "void"};

const std::unordered_set<std::string_view> kModifiers = {
    "public", "protected", "private",  "static", "final",    "abstract", "transient",
    "volatile", "synchronized", "native", "strictfp", "default", "sealed"};

const std::unordered_set<std::string_view> kControl = {"if",   "else",   "for",    "while",       "do",
                                                       "try",  "catch",  "finally", "switch",     "synchronized"};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }

class Lexer {
public:
    Lexer(const std::string& path, const std::string& text) : path_(path), s_(text) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (i_ < s_.size()) {
            const char c = s_[i_];
            if (c == '\n') {
                ++line_;
                ++i_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++i_;
            } else if (c == '/' && peek(1) == '/') {
                while (i_ < s_.size() && s_[i_] != '\n') ++i_;
            } else if (c == '/' && peek(1) == '*') {
                auto close = s_.find("*/", i_ + 2);
                if (close == std::string::npos) fail("unterminated comment");
                advance_to(close + 2);
            } else if (c == '"' && peek(1) == '"' && peek(2) == '"') {
                lex_text_block(out);
            } else if (c == '"' || c == '\'') {
                lex_quoted(out, c);
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
                lex_number(out);
            } else if (ident_start(static_cast<unsigned char>(c))) {
                const std::size_t b = i_;
                while (i_ < s_.size() && ident_char(static_cast<unsigned char>(s_[i_]))) ++i_;
                std::string word = s_.substr(b, i_ - b);
                const Tok kind = kKeywords.count(word) ? Tok::keyword : Tok::ident;
                out.push_back({kind, std::move(word), b, i_, line_});
            } else {
                lex_punct(out);
            }
        }
        return out;
    }

private:
    char peek(std::size_t k) const { return i_ + k < s_.size() ? s_[i_ + k] : '\0'; }

    [[noreturn]] void fail(const std::string& what) const {
        throw UnparseableFile(path_, what + " at line " + std::to_string(line_));
    }

    void advance_to(std::size_t pos) {
        for (; i_ < pos; ++i_)
            if (s_[i_] == '\n') ++line_;
    }

    void lex_text_block(std::vector<Token>& out) {
        const std::size_t b = i_;
        const int line = line_;
        std::size_t j = i_ + 3;
        while (true) {
            j = s_.find("\"\"\"", j);
            if (j == std::string::npos) fail("unterminated text block");
            if (s_[j - 1] != '\\') break;
            ++j;
        }
        advance_to(j + 3);
        out.push_back({Tok::literal, s_.substr(b, i_ - b), b, i_, line});
    }

    void lex_quoted(std::vector<Token>& out, char quote) {
        const std::size_t b = i_;
        ++i_;
        while (i_ < s_.size() && s_[i_] != quote) {
            if (s_[i_] == '\n') fail("unterminated literal");
            if (s_[i_] == '\\') ++i_;
            ++i_;
        }
        if (i_ >= s_.size()) fail("unterminated literal");
        ++i_;
        out.push_back({Tok::literal, s_.substr(b, i_ - b), b, i_, line_});
    }

    void lex_number(std::vector<Token>& out) {
        const std::size_t b = i_;
        while (i_ < s_.size()) {
            const char c = s_[i_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
                ++i_;
            } else if ((c == '+' || c == '-') && i_ > b &&
                       (s_[i_ - 1] == 'e' || s_[i_ - 1] == 'E' || s_[i_ - 1] == 'p' || s_[i_ - 1] == 'P') &&
                       !(s_[b] == '0' && b + 1 < s_.size() && (s_[b + 1] == 'x' || s_[b + 1] == 'X') &&
                         s_[i_ - 1] != 'p' && s_[i_ - 1] != 'P')) {
                ++i_;
            } else {
                break;
            }
        }
        out.push_back({Tok::literal, s_.substr(b, i_ - b), b, i_, line_});
    }

    void lex_punct(std::vector<Token>& out) {
        static const std::string_view kTwo[] = {"->", "::", "==", "!=", "<=", ">=", "&&", "||", "++",
                                                "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^="};
        const std::size_t b = i_;
        if (s_.compare(i_, 3, "...") == 0) {
            i_ += 3;
        } else {
            std::size_t len = 1;
            for (auto op : kTwo) {
                if (s_.compare(i_, 2, op) == 0) {
                    len = 2;
                    break;
                }
            }
            i_ += len;
        }
        out.push_back({Tok::punct, s_.substr(b, i_ - b), b, i_, line_});
    }

    const std::string& path_;
    const std::string& s_;
    std::size_t i_ = 0;
    int line_ = 1;
};

enum class BlockKind { type_body, method_body, initializer, lambda_body, control, plain, array_init };

struct Block {
    int open = 0;
    int close = 0;
    int header_start = 0;
    int parent = -1;
    BlockKind kind = BlockKind::plain;
    std::string keyword;
    std::string type_name;
    std::string type_kind;
    bool continuation = false;
};

class JavaParser {
public:
    JavaParser(std::string path, std::string text) {
        model_.path = std::move(path);
        model_.text = std::move(text);
    }

    SyntaxModel run() {
        index_lines();
        toks_ = Lexer(model_.path, model_.text).run();
        match_groups();
        build_blocks();
        collect_imports();
        collect_types_and_methods();
        collect_statements();
        collect_variables();
        collect_invocations_and_identifiers();
        return std::move(model_);
    }

private:
    // ---- helpers ---------------------------------------------------------

    void index_lines() {
        model_.line_starts.push_back(0);
        for (std::size_t i = 0; i < model_.text.size(); ++i)
            if (model_.text[i] == '\n' && i + 1 < model_.text.size()) model_.line_starts.push_back(i + 1);
    }

    int line_of(std::size_t offset) const {
        auto it = std::upper_bound(model_.line_starts.begin(), model_.line_starts.end(), offset);
        return static_cast<int>(it - model_.line_starts.begin());
    }

    SourceSpan span(int first_tok, int last_tok) const {
        SourceSpan s;
        s.begin = toks_[first_tok].offset;
        s.end = toks_[last_tok].end;
        s.first_line = toks_[first_tok].line;
        s.last_line = line_of(s.end == 0 ? 0 : s.end - 1);
        return s;
    }

    bool is_p(int i, std::string_view p) const { return i >= 0 && i < ntok() && toks_[i].is(p); }
    bool is_kw(int i, std::string_view k) const { return i >= 0 && i < ntok() && toks_[i].kw(k); }
    bool is_ident(int i) const { return i >= 0 && i < ntok() && toks_[i].kind == Tok::ident; }
    int ntok() const { return static_cast<int>(toks_.size()); }

    [[noreturn]] void fail(int tok, const std::string& what) const {
        const int line = tok >= 0 && tok < ntok() ? toks_[tok].line : line_of(model_.text.size());
        throw UnparseableFile(model_.path, what + " at line " + std::to_string(line));
    }

    void match_groups() {
        match_.assign(toks_.size(), -1);
        std::vector<int> stack;
        for (int i = 0; i < ntok(); ++i) {
            const auto& t = toks_[i];
            if (t.kind != Tok::punct) continue;
            if (t.text == "(" || t.text == "[" || t.text == "{") {
                stack.push_back(i);
            } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                const char want = t.text == ")" ? '(' : t.text == "]" ? '[' : '{';
                if (stack.empty() || toks_[stack.back()].text[0] != want) fail(i, "unbalanced '" + t.text + "'");
                match_[i] = stack.back();
                match_[stack.back()] = i;
                stack.pop_back();
            }
        }
        if (!stack.empty()) fail(stack.back(), "unclosed '" + toks_[stack.back()].text + "'");
    }

    // Index just past a balanced run of angle brackets starting at `i` ('<'), or -1.
    int skip_angles(int i, int limit) const {
        int depth = 0;
        for (int k = i; k < limit; ++k) {
            const auto& t = toks_[k];
            if (t.is("<")) {
                ++depth;
            } else if (t.is(">")) {
                if (--depth == 0) return k + 1;
            } else if (t.kind == Tok::ident || t.is(".") || t.is(",") || t.is("?") || t.is("&") ||
                       t.is("[") || t.is("]") || t.kw("extends") || t.kw("super") ||
                       (t.kind == Tok::keyword && kPrimitives.count(t.text)) || t.is("@")) {
                continue;
            } else {
                return -1;
            }
        }
        return -1;
    }

    // Parses a type starting at `i`; returns index past it or -1.
    int parse_type(int i, int limit) const {
        if (i >= limit) return -1;
        const auto& t = toks_[i];
        int k = i;
        if (t.kind == Tok::keyword && kPrimitives.count(t.text)) {
            k = i + 1;
        } else if (t.kind == Tok::ident && t.text != "yield") {
            k = i + 1;
            while (true) {
                if (k < limit && toks_[k].is("<")) {
                    k = skip_angles(k, limit);
                    if (k < 0) return -1;
                }
                if (k + 1 < limit && toks_[k].is(".") && toks_[k + 1].kind == Tok::ident) {
                    k += 2;
                    continue;
                }
                break;
            }
        } else {
            return -1;
        }
        while (k + 1 < limit && toks_[k].is("[") && toks_[k + 1].is("]")) k += 2;
        if (k < limit && toks_[k].is("...")) ++k;
        return k;
    }

    std::string join(int b, int e) const {
        std::string out;
        for (int k = b; k < e; ++k) {
            const auto& t = toks_[k];
            if (!out.empty()) {
                const auto& prev = toks_[k - 1];
                const bool tight_after = prev.is(".") || prev.is("(") || prev.is("[") || prev.is("<") ||
                                         prev.is("@") || prev.is("::");
                const bool tight_before = t.is(".") || t.is(")") || t.is("[") || t.is("]") || t.is(",") ||
                                          t.is(";") || t.is("<") || t.is(">") || t.is("::") ||
                                          (t.is("(") && prev.kind != Tok::keyword) || t.is("...");
                const bool space_after_gt = prev.is(">") && (t.kind == Tok::ident || t.kind == Tok::keyword);
                if ((!tight_after && !tight_before) || space_after_gt) out.push_back(' ');
            }
            out += t.text;
        }
        return out;
    }

    // Skips an annotation starting at '@'; returns index after it.
    int skip_annotation(int i, int limit) const {
        int k = i + 1;
        if (is_kw(k, "interface")) return i;
        while (k < limit && (is_ident(k) || is_p(k, "."))) ++k;
        if (k < limit && is_p(k, "(")) k = match_[k] + 1;
        return k;
    }

    // Index just past the statement that starts at `i`, skipping nested groups.
    int statement_end(int i) const {
        for (int k = i; k < ntok(); ++k) {
            const auto& t = toks_[k];
            if (t.is("(") || t.is("[") || t.is("{")) {
                k = match_[k];
                if (t.is("{")) {
                    const auto it = block_at_.find(k == -1 ? -1 : match_[k]);
                    if (it != block_at_.end() && is_statement_block(blocks_[it->second])) return k;
                }
                continue;
            }
            if (t.is(";")) return k;
        }
        return ntok() - 1;
    }

    // ---- blocks ---------------------------------------------------------

    static bool is_statement_block(const Block& b) {
        return b.kind == BlockKind::control || b.kind == BlockKind::plain || b.kind == BlockKind::method_body ||
               b.kind == BlockKind::initializer || (b.kind == BlockKind::type_body && b.type_kind != "anonymous");
    }

    int header_start(int open) const {
        int j = open - 1;
        while (j >= 0) {
            const auto& t = toks_[j];
            if ((t.is(")") || t.is("]")) && match_[j] >= 0) {
                j = match_[j] - 1;
                continue;
            }
            if (t.is(";") || t.is("{") || t.is("}") || t.is(":") || t.is("(") || t.is("[") || t.is(",") ||
                t.is("=") || t.is("->")) {
                break;
            }
            --j;
        }
        return j + 1;
    }

    bool anonymous_class_header(int open, int hs, std::string& type_name) const {
        int k = open - 1;
        if (!is_p(k, ")")) return false;
        k = match_[k] - 1;
        if (is_p(k, ">")) {
            // new Foo<Bar>() {
            int depth = 0;
            for (; k >= hs; --k) {
                if (is_p(k, ">")) ++depth;
                else if (is_p(k, "<") && --depth == 0) break;
            }
            --k;
        }
        const int name_end = k;
        while (k >= hs && (is_ident(k) || is_p(k, "."))) --k;
        if (k < hs || !is_kw(k, "new") || name_end <= k) return false;
        type_name = join(k + 1, name_end + 1);
        return true;
    }

    void build_blocks() {
        std::vector<int> stack;
        for (int i = 0; i < ntok(); ++i) {
            if (toks_[i].is("{")) {
                Block b;
                b.open = i;
                b.close = match_[i];
                b.parent = stack.empty() ? -1 : stack.back();
                b.header_start = header_start(i);
                classify(b);
                block_at_[i] = static_cast<int>(blocks_.size());
                stack.push_back(static_cast<int>(blocks_.size()));
                blocks_.push_back(std::move(b));
            } else if (toks_[i].is("}")) {
                stack.pop_back();
            }
        }
        for (auto& b : blocks_) {
            if (b.kind != BlockKind::control) continue;
            if (b.keyword != "else" && b.keyword != "catch" && b.keyword != "finally") continue;
            const int prev = b.header_start - 1;
            if (prev < 0 || !toks_[prev].is("}")) continue;
            auto it = block_at_.find(match_[prev]);
            if (it != block_at_.end() && blocks_[it->second].kind == BlockKind::control) b.continuation = true;
        }
    }

    void classify(Block& b) const {
        const int hs = b.header_start;
        const int prev = b.open - 1;
        const Block* parent = b.parent >= 0 ? &blocks_[b.parent] : nullptr;

        if (is_p(prev, "->")) {
            int lhs = header_start(prev);
            if (is_kw(lhs, "case") || is_kw(lhs, "default")) {
                b.kind = BlockKind::plain;
                b.keyword = "case";
                b.header_start = lhs;
            } else {
                b.kind = BlockKind::lambda_body;
                b.keyword = "lambda";
                b.header_start = lhs;
            }
            return;
        }
        if (parent != nullptr && parent->kind == BlockKind::array_init) {
            b.kind = BlockKind::array_init;
            return;
        }
        if (is_p(prev, "=") || is_p(prev, ",") || is_p(prev, "(") ||
            (is_p(prev, "]") && hs < b.open && std::any_of(toks_.begin() + hs, toks_.begin() + b.open,
                                                             [](const Token& t) { return t.kw("new"); }))) {
            b.kind = BlockKind::array_init;
            return;
        }
        std::string anon;
        if (anonymous_class_header(b.open, hs, anon)) {
            b.kind = BlockKind::type_body;
            b.type_kind = "anonymous";
            b.type_name = anon;
            return;
        }
        for (int k = hs; k < b.open; ++k) {
            const auto& t = toks_[k];
            const bool after_dot = k > 0 && toks_[k - 1].is(".");
            const bool record = t.kind == Tok::ident && t.text == "record" && is_ident(k + 1) && is_p(k + 2, "(") &&
                                (parent == nullptr || parent->kind == BlockKind::type_body);
            if (!after_dot && (t.kw("class") || t.kw("interface") || t.kw("enum") || record)) {
                b.kind = BlockKind::type_body;
                b.type_kind = (t.kw("interface") && k > 0 && toks_[k - 1].is("@")) ? "@interface" : t.text;
                if (is_ident(k + 1)) b.type_name = toks_[k + 1].text;
                return;
            }
        }
        if (hs < b.open && toks_[hs].kind == Tok::keyword && kControl.count(toks_[hs].text)) {
            b.kind = BlockKind::control;
            b.keyword = toks_[hs].text;
            return;
        }
        if (parent != nullptr && parent->kind == BlockKind::type_body) {
            const bool has_params = std::any_of(toks_.begin() + hs, toks_.begin() + b.open,
                                                [](const Token& t) { return t.is("("); });
            b.kind = has_params ? BlockKind::method_body : BlockKind::initializer;
            b.keyword = has_params ? "method" : "initializer";
            return;
        }
        b.kind = BlockKind::plain;
        b.keyword = "block";
    }

    const Block* enclosing_type(int block_index) const {
        for (int p = block_index; p >= 0; p = blocks_[p].parent)
            if (blocks_[p].kind == BlockKind::type_body) return &blocks_[p];
        return nullptr;
    }

    std::string owner_of(int block_index) const {
        const Block* t = enclosing_type(block_index);
        return t ? t->type_name : std::string();
    }

    // ---- declarations ----------------------------------------------------

    void collect_imports() {
        for (int i = 0; i < ntok(); ++i) {
            if (!is_kw(i, "import")) continue;
            int k = i + 1;
            if (is_kw(k, "static")) ++k;
            int e = k;
            while (e < ntok() && !is_p(e, ";")) ++e;
            model_.imports.push_back(join(k, e));
            i = e;
        }
    }

    void collect_types_and_methods() {
        for (int bi = 0; bi < static_cast<int>(blocks_.size()); ++bi) {
            const Block& b = blocks_[bi];
            if (b.kind == BlockKind::type_body) {
                TypeDecl t;
                t.name = b.type_name;
                t.kind = b.type_kind;
                t.span = span(b.header_start, b.close);
                t.body = span(b.open, b.close);
                model_.types.push_back(std::move(t));
            } else if (b.kind == BlockKind::method_body) {
                parse_method(bi);
            }
        }
    }

    void parse_method(int bi) {
        const Block& b = blocks_[bi];
        int group = -1;
        for (int k = b.header_start; k < b.open; ++k) {
            if (!is_p(k, "(")) continue;
            int j = k - 1;
            while (j >= b.header_start && (is_ident(j) || is_p(j, "."))) --j;
            const bool annotation = j >= b.header_start && is_p(j, "@");
            if (!annotation && is_ident(k - 1)) group = k;
            k = match_[k];
        }
        if (group < 0) return;

        MethodDecl m;
        m.name = toks_[group - 1].text;
        m.owner_type = owner_of(b.parent);
        m.constructor = m.name == m.owner_type;
        method_name_tokens_.insert(group - 1);

        int sig_begin = b.header_start;
        while (sig_begin < b.open && is_p(sig_begin, "@")) sig_begin = skip_annotation(sig_begin, b.open);
        m.signature = join(sig_begin, b.open);
        m.span = span(b.header_start, b.close);
        m.body = span(b.open, b.close);

        const int close = match_[group];
        int start = group + 1;
        auto add_param = [&](int pb, int pe) {
            while (pb < pe && (is_p(pb, "@") || is_kw(pb, "final"))) pb = is_p(pb, "@") ? skip_annotation(pb, pe) : pb + 1;
            int name_tok = pe - 1;
            while (name_tok > pb && (is_p(name_tok, "]") || is_p(name_tok, "["))) --name_tok;
            if (name_tok <= pb || !is_ident(name_tok)) return;
            Parameter p;
            p.name = toks_[name_tok].text;
            p.varargs = is_p(name_tok - 1, "...");
            p.type = join(pb, name_tok);
            m.params.push_back(p);

            VariableDecl v;
            v.name = p.name;
            v.type = p.type;
            for (int q = group + 1; q < name_tok; ++q)
                if (is_kw(q, "final")) v.modifiers.push_back("final");
            v.modifiers.push_back("parameter");
            v.owner_type = m.owner_type;
            v.offset = toks_[name_tok].offset;
            v.line = toks_[name_tok].line;
            v.scope = span(name_tok, b.close);
            model_.variables.push_back(std::move(v));
        };
        int depth = 0;
        for (int k = group + 1; k < close; ++k) {
            if (is_p(k, "<")) ++depth;
            else if (is_p(k, ">")) --depth;
            else if (is_p(k, "(") || is_p(k, "[")) k = match_[k];
            else if (is_p(k, ",") && depth == 0) {
                add_param(start, k);
                start = k + 1;
            }
        }
        if (start < close) add_param(start, close);
        model_.methods.push_back(std::move(m));
    }

    void collect_statements() {
        for (int bi = 0; bi < static_cast<int>(blocks_.size()); ++bi) {
            const Block& b = blocks_[bi];
            CompoundStatement st;
            switch (b.kind) {
                case BlockKind::control: {
                    if (b.continuation) continue;
                    st.keyword = b.keyword;
                    int end = chain_end(b);
                    st.span = span(b.header_start, end);
                    break;
                }
                case BlockKind::plain:
                case BlockKind::lambda_body:
                case BlockKind::initializer:
                    st.keyword = b.keyword;
                    st.span = span(b.header_start, b.close);
                    break;
                default:
                    continue;
            }
            model_.statements.push_back(std::move(st));
        }
    }

    int chain_end(const Block& head) const {
        int end = head.close;
        if (head.keyword == "do") {
            if (is_kw(end + 1, "while")) return statement_end(end + 1);
            return end;
        }
        while (true) {
            const int n = end + 1;
            if (!(is_kw(n, "else") || is_kw(n, "catch") || is_kw(n, "finally"))) break;
            const Block* next = nullptr;
            for (const auto& b : blocks_) {
                if (b.header_start == n && b.kind == BlockKind::control) {
                    next = &b;
                    break;
                }
            }
            if (next == nullptr) {
                end = statement_end(n);
                break;
            }
            end = next->close;
        }
        return end;
    }

    // Splits a block into its direct statements (ending in ';'); statement-level child
    // blocks terminate the pending segment without being part of it.
    template <typename Fn>
    void for_each_segment(const Block& b, Fn&& fn) const {
        int seg = b.open + 1;
        int k = seg;
        while (k < b.close) {
            const auto& t = toks_[k];
            if (t.is("{")) {
                const Block& child = blocks_[block_at_.at(k)];
                k = child.close + 1;
                if (is_statement_block(child)) seg = k;
                continue;
            }
            if (t.is("(") || t.is("[")) {
                k = match_[k] + 1;
                continue;
            }
            if (t.is(";")) {
                if (seg < k) fn(seg, k);
                seg = k + 1;
            }
            ++k;
        }
    }

    int strip_labels(int b, int e) const {
        while (b < e) {
            if (is_kw(b, "case") || is_kw(b, "default")) {
                int k = b + 1;
                while (k < e && !is_p(k, ":") && !is_p(k, "->")) {
                    if (is_p(k, "(")) k = match_[k];
                    ++k;
                }
                b = k + 1;
            } else if (is_ident(b) && is_p(b + 1, ":")) {
                b += 2;
            } else {
                break;
            }
        }
        return b;
    }

    // Parses "[modifiers] Type name [= init] (, name [= init])*" in [b, e).
    void parse_declaration(int b, int e, bool field, const std::string& owner, SourceSpan scope_tail,
                           bool scope_from_decl) {
        std::vector<std::string> modifiers;
        int k = b;
        while (k < e) {
            if (is_p(k, "@")) {
                const int next = skip_annotation(k, e);
                if (next == k) return;
                k = next;
            } else if (toks_[k].kind == Tok::keyword && kModifiers.count(toks_[k].text)) {
                modifiers.push_back(toks_[k++].text);
            } else if (is_ident(k) && (toks_[k].text == "sealed" || toks_[k].text == "non")) {
                return;
            } else {
                break;
            }
        }
        const int type_end = parse_type(k, e);
        if (type_end < 0 || !is_ident(type_end)) return;
        const std::string type = join(k, type_end);

        int n = type_end;
        while (n < e && is_ident(n)) {
            const int name_tok = n;
            int dims = 0;
            ++n;
            while (n + 1 < e && is_p(n, "[") && is_p(n + 1, "]")) {
                n += 2;
                ++dims;
            }
            if (n < e && !is_p(n, "=") && !is_p(n, ",") && !is_p(n, ":")) return;

            VariableDecl v;
            v.name = toks_[name_tok].text;
            v.type = type;
            for (int d = 0; d < dims; ++d) v.type += "[]";
            v.modifiers = modifiers;
            v.owner_type = owner;
            v.field = field;
            v.offset = toks_[name_tok].offset;
            v.line = toks_[name_tok].line;
            v.scope = scope_tail;
            if (scope_from_decl) {
                v.scope.begin = v.offset;
                v.scope.first_line = v.line;
            }
            model_.variables.push_back(std::move(v));

            if (n < e && is_p(n, "=")) {
                while (n < e && !is_p(n, ",")) {
                    if (is_p(n, "(") || is_p(n, "[") || is_p(n, "{")) n = match_[n];
                    ++n;
                }
            }
            if (n < e && is_p(n, ",")) ++n;
            else break;
        }
    }

    void collect_variables() {
        for (int bi = 0; bi < static_cast<int>(blocks_.size()); ++bi) {
            const Block& b = blocks_[bi];
            if (b.kind == BlockKind::array_init) continue;
            const bool field = b.kind == BlockKind::type_body;
            const std::string owner = owner_of(bi);
            const SourceSpan scope = span(b.open, b.close);
            for_each_segment(b, [&](int sb, int se) {
                sb = strip_labels(sb, se);
                if (sb >= se) return;
                if (field) {
                    // Abstract/interface method declarations are not fields.
                    for (int q = sb; q < se; ++q) {
                        if (is_p(q, "=")) break;
                        if (is_p(q, "(")) return;
                    }
                }
                parse_declaration(sb, se, field, owner, scope, !field);
            });
            if (b.kind == BlockKind::control) collect_header_variables(bi);
        }
    }

    void collect_header_variables(int bi) {
        const Block& b = blocks_[bi];
        const std::string owner = owner_of(bi);
        int kw = b.header_start;
        if (is_kw(kw, "else")) return;
        if (!is_p(kw + 1, "(")) return;
        const int open = kw + 1;
        const int close = match_[open];
        const SourceSpan scope = span(b.header_start, b.close);
        const std::string& word = toks_[kw].text;
        if (word == "for") {
            int e = open + 1;
            while (e < close && !is_p(e, ";") && !is_p(e, ":")) {
                if (is_p(e, "(") || is_p(e, "[")) e = match_[e];
                ++e;
            }
            parse_declaration(open + 1, e, false, owner, scope, true);
        } else if (word == "catch") {
            int name_tok = close - 1;
            if (!is_ident(name_tok)) return;
            int tb = open + 1;
            while (tb < name_tok && (is_kw(tb, "final") || is_p(tb, "@")))
                tb = is_p(tb, "@") ? skip_annotation(tb, name_tok) : tb + 1;
            VariableDecl v;
            v.name = toks_[name_tok].text;
            v.type = join(tb, name_tok);
            v.owner_type = owner;
            v.offset = toks_[name_tok].offset;
            v.line = toks_[name_tok].line;
            v.scope = scope;
            v.scope.begin = v.offset;
            v.scope.first_line = v.line;
            model_.variables.push_back(std::move(v));
        } else if (word == "try") {
            int sb = open + 1;
            for (int k = open + 1; k <= close; ++k) {
                if (is_p(k, "(") || is_p(k, "[")) {
                    k = match_[k];
                    continue;
                }
                if (is_p(k, ";") || k == close) {
                    if (sb < k) parse_declaration(sb, k, false, owner, scope, true);
                    sb = k + 1;
                }
            }
        }
    }

    // ---- references -------------------------------------------------------

    void collect_invocations_and_identifiers() {
        std::unordered_set<int> decl_name_tokens;
        for (const auto& b : blocks_)
            if (b.kind == BlockKind::type_body && b.type_kind != "anonymous")
                for (int k = b.header_start; k < b.open; ++k)
                    if (is_ident(k) && toks_[k].text == b.type_name) decl_name_tokens.insert(k);

        int import_end = -1;
        for (int i = 0; i < ntok(); ++i) {
            if (is_kw(i, "import") || is_kw(i, "package")) {
                import_end = i;
                while (import_end < ntok() && !is_p(import_end, ";")) ++import_end;
            }
            if (i <= import_end) continue;
            if (!is_ident(i)) continue;
            const auto& t = toks_[i];
            if (is_p(i - 1, "@")) continue;

            if (is_p(i + 1, "(")) {
                if (method_name_tokens_.count(i) || decl_name_tokens.count(i)) continue;
                int j = i - 1;
                while (j >= 0 && (is_p(j, ".") || is_ident(j))) --j;
                if (is_kw(j, "new") && (j == i - 1 || is_p(i - 1, "."))) {
                    // constructor call: new Foo(...) / new a.b.Foo(...)
                    bool qualified_ctor = true;
                    for (int q = j + 1; q < i; ++q)
                        if (!is_ident(q) && !is_p(q, ".")) qualified_ctor = false;
                    if (qualified_ctor) continue;
                }
                Invocation inv;
                inv.name = t.text;
                if (is_p(i - 1, ".")) {
                    const auto& r = toks_[i - 2];
                    inv.receiver = (r.kind == Tok::ident || r.kw("this") || r.kw("super")) ? r.text : "<expr>";
                }
                const int close = match_[i + 1];
                if (close > i + 2) {
                    inv.arity = 1;
                    int depth = 0;
                    for (int k = i + 2; k < close; ++k) {
                        if (is_p(k, "(") || is_p(k, "[") || is_p(k, "{")) k = match_[k];
                        else if (is_p(k, "<")) ++depth;
                        else if (is_p(k, ">")) depth = std::max(0, depth - 1);
                        else if (is_p(k, ",") && depth == 0) ++inv.arity;
                    }
                }
                inv.offset = t.offset;
                inv.line = t.line;
                model_.invocations.push_back(std::move(inv));
                continue;
            }

            IdentifierUse use;
            use.name = t.text;
            if (is_p(i - 1, ".")) {
                if (!is_kw(i - 2, "this")) continue;
                use.this_qualified = true;
            }
            if (is_p(i - 1, "::")) continue;
            use.offset = t.offset;
            use.line = t.line;
            model_.identifiers.push_back(std::move(use));
        }
    }

    SyntaxModel model_;
    std::vector<Token> toks_;
    std::vector<int> match_;
    std::vector<Block> blocks_;
    std::unordered_map<int, int> block_at_;
    std::unordered_set<int> method_name_tokens_;
};

}  // namespace

SyntaxModel JavaGrammar::parse(std::string path, std::string text) const {
    // Work on LF-only text so offsets and line numbers agree with the diff model.
    text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());
    return JavaParser(std::move(path), std::move(text)).run();
}

}  // namespace cmo::code
