#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmo/diff.hpp"

namespace cmo::code {

/// Byte range [begin, end) plus the inclusive 1-based lines it touches.
struct SourceSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    int first_line = 0;
    int last_line = 0;

    diff::LineRange lines() const noexcept { return {first_line, last_line}; }
    bool contains(std::size_t offset) const noexcept { return offset >= begin && offset < end; }
    std::size_t length() const noexcept { return end - begin; }
};

struct TypeDecl {
    std::string name;
    std::string kind;  // class, interface, enum, record, @interface, anonymous
    SourceSpan span;
    SourceSpan body;
};

struct Parameter {
    std::string type;
    std::string name;
    bool varargs = false;
};

struct MethodDecl {
    std::string name;
    std::string owner_type;
    std::string signature;
    std::vector<Parameter> params;
    bool constructor = false;
    SourceSpan span;
    SourceSpan body;
};

/// A statement that owns at least one curly-delimited block. if/else chains,
/// try/catch/finally and do/while are one statement each.
struct CompoundStatement {
    std::string keyword;  // if, try, for, while, do, switch, synchronized, block, lambda, ...
    SourceSpan span;
};

struct VariableDecl {
    std::string name;
    std::string type;
    std::vector<std::string> modifiers;
    std::string owner_type;
    bool field = false;
    std::size_t offset = 0;
    int line = 0;
    /// Region of the source in which the declaration is visible.
    SourceSpan scope;
};

struct Invocation {
    std::string name;
    /// Token before the '.', e.g. "this", "helper", "StringUtils"; empty when unqualified.
    std::string receiver;
    int arity = 0;
    std::size_t offset = 0;
    int line = 0;
};

struct IdentifierUse {
    std::string name;
    bool this_qualified = false;
    std::size_t offset = 0;
    int line = 0;
};

/// Language-neutral view of one parsed source file.
struct SyntaxModel {
    std::string path;
    std::string text;
    std::vector<std::size_t> line_starts;
    std::vector<std::string> imports;
    std::vector<TypeDecl> types;
    std::vector<MethodDecl> methods;
    std::vector<CompoundStatement> statements;
    std::vector<VariableDecl> variables;
    std::vector<Invocation> invocations;
    std::vector<IdentifierUse> identifiers;

    int line_count() const noexcept { return static_cast<int>(line_starts.size()); }
    /// Full text of lines [first, last], newline-terminated lines joined verbatim.
    std::string lines_text(int first, int last) const;
    std::string span_lines(const SourceSpan& span) const { return lines_text(span.first_line, span.last_line); }
    std::string span_text(const SourceSpan& span) const { return text.substr(span.begin, span.length()); }
    std::size_t line_offset(int line) const;
};

class Grammar {
public:
    virtual ~Grammar() = default;
    virtual std::string_view name() const = 0;
    virtual bool handles(std::string_view path) const = 0;
    /// Throws UnparseableFile.
    virtual SyntaxModel parse(std::string path, std::string text) const = 0;
};

/// Reference grammar for Java sources.
class JavaGrammar final : public Grammar {
public:
    std::string_view name() const override { return "java"; }
    bool handles(std::string_view path) const override;
    SyntaxModel parse(std::string path, std::string text) const override;
};

std::shared_ptr<const Grammar> make_grammar(std::string_view name);

}  // namespace cmo::code
