#include "cmo/diff.hpp"

#include <charconv>
#include <regex>

#include "cmo/errors.hpp"

namespace cmo::diff {

std::string_view to_string(ChangeKind kind) {
    switch (kind) {
        case ChangeKind::modified: return "modified";
        case ChangeKind::added: return "added";
        case ChangeKind::deleted: return "deleted";
        case ChangeKind::renamed: return "renamed";
    }
    return "modified";
}

const std::string& FileDiff::path() const noexcept {
    return change_kind == ChangeKind::deleted ? old_path : new_path;
}

int FileDiff::added_lines() const noexcept {
    int n = 0;
    for (const auto& h : hunks)
        for (const auto& l : h.lines)
            if (l.tag == LineTag::added) ++n;
    return n;
}

int FileDiff::removed_lines() const noexcept {
    int n = 0;
    for (const auto& h : hunks)
        for (const auto& l : h.lines)
            if (l.tag == LineTag::removed) ++n;
    return n;
}

namespace {

constexpr std::string_view kNoNewline = "\\ No newline at end of file";
constexpr std::string_view kDevNull = "/dev/null";

bool starts_with(std::string_view s, std::string_view p) {
    return s.substr(0, p.size()) == p;
}

std::string unquote(std::string_view p) {
    if (p.size() >= 2 && p.front() == '"' && p.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < p.size(); ++i) {
            if (p[i] == '\\' && i + 2 < p.size()) {
                char c = p[++i];
                switch (c) {
                    case 't': out.push_back('\t'); break;
                    case 'n': out.push_back('\n'); break;
                    default: out.push_back(c); break;
                }
            } else {
                out.push_back(p[i]);
            }
        }
        return out;
    }
    return std::string(p);
}

// "--- a/foo.c\t2020-01-01" -> "foo.c"; "/dev/null" stays as is.
std::string marker_path(std::string_view rest) {
    auto tab = rest.find('\t');
    if (tab != std::string_view::npos) rest = rest.substr(0, tab);
    std::string p = unquote(rest);
    if (p == kDevNull) return p;
    if (starts_with(p, "a/") || starts_with(p, "b/")) p.erase(0, 2);
    return p;
}

void paths_from_git_header(std::string_view line, FileDiff& f) {
    std::string_view rest = line.substr(std::string_view("diff --git ").size());
    if (rest.empty()) return;
    if (rest.front() == '"') {
        auto close = rest.find('"', 1);
        if (close == std::string_view::npos) return;
        f.old_path = marker_path(rest.substr(0, close + 1));
        f.new_path = marker_path(rest.substr(std::min(rest.size(), close + 2)));
        return;
    }
    // Prefer the split where both sides agree; fall back to the first " b/".
    std::size_t chosen = std::string_view::npos;
    for (std::size_t pos = rest.find(" b/"); pos != std::string_view::npos;
         pos = rest.find(" b/", pos + 1)) {
        if (chosen == std::string_view::npos) chosen = pos;
        if (rest.substr(2, pos - 2) == rest.substr(pos + 3)) {
            chosen = pos;
            break;
        }
    }
    if (chosen == std::string_view::npos) return;
    f.old_path = marker_path(rest.substr(0, chosen));
    f.new_path = marker_path(rest.substr(chosen + 1));
}

int parse_int(const std::string& s) {
    int v = 0;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

class Parser {
public:
    Parser(std::vector<std::string> lines) : lines_(std::move(lines)) {}

    CodeDiff run() {
        CodeDiff d;
        while (i_ < lines_.size() && !at_file_start()) d.preamble.push_back(lines_[i_++]);
        if (i_ >= lines_.size()) throw MalformedDiff(1, "no file headers found");
        while (i_ < lines_.size()) d.files.push_back(parse_file());
        return d;
    }

private:
    bool at_file_start() const {
        const auto& l = lines_[i_];
        if (starts_with(l, "diff --git ")) return true;
        return starts_with(l, "--- ") && i_ + 1 < lines_.size() && starts_with(lines_[i_ + 1], "+++ ");
    }

    FileDiff parse_file() {
        FileDiff f;
        bool saw_new_mode = false, saw_deleted_mode = false, saw_rename = false;
        if (starts_with(lines_[i_], "diff --git ")) {
            paths_from_git_header(lines_[i_], f);
            f.header_lines.push_back(lines_[i_++]);
        }
        while (i_ < lines_.size() && !starts_with(lines_[i_], "@@")) {
            const std::string& l = lines_[i_];
            if (starts_with(l, "diff --git ")) break;
            if (starts_with(l, "--- ")) {
                f.old_path = marker_path(std::string_view(l).substr(4));
            } else if (starts_with(l, "+++ ")) {
                f.new_path = marker_path(std::string_view(l).substr(4));
                f.header_lines.push_back(l);
                ++i_;
                break;
            } else if (starts_with(l, "new file mode") || starts_with(l, "copy to ")) {
                saw_new_mode = true;
                if (starts_with(l, "copy to ")) f.new_path = unquote(std::string_view(l).substr(8));
            } else if (starts_with(l, "deleted file mode")) {
                saw_deleted_mode = true;
            } else if (starts_with(l, "rename from ")) {
                f.old_path = unquote(std::string_view(l).substr(12));
                saw_rename = true;
            } else if (starts_with(l, "rename to ")) {
                f.new_path = unquote(std::string_view(l).substr(10));
                saw_rename = true;
            } else if (starts_with(l, "Binary files ") || starts_with(l, "GIT binary patch")) {
                f.binary = true;
            }
            f.header_lines.push_back(l);
            ++i_;
        }

        while (i_ < lines_.size() && starts_with(lines_[i_], "@@")) f.hunks.push_back(parse_hunk());

        while (i_ < lines_.size() && !at_file_start()) {
            if (starts_with(lines_[i_], "@@")) {
                f.hunks.push_back(parse_hunk());
                continue;
            }
            f.trailing_lines.push_back(lines_[i_++]);
        }

        if (saw_new_mode || f.old_path == kDevNull) {
            f.change_kind = ChangeKind::added;
        } else if (saw_deleted_mode || f.new_path == kDevNull) {
            f.change_kind = ChangeKind::deleted;
        } else if (saw_rename && f.old_path != f.new_path) {
            f.change_kind = ChangeKind::renamed;
        }
        if (f.change_kind == ChangeKind::added && f.old_path == kDevNull) f.old_path = f.new_path;
        if (f.change_kind == ChangeKind::deleted && f.new_path == kDevNull) f.new_path = f.old_path;
        if (f.old_path.empty()) f.old_path = f.new_path;
        if (f.new_path.empty()) f.new_path = f.old_path;
        return f;
    }

    Hunk parse_hunk() {
        static const std::regex kHeader(R"(^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@(.*)$)");
        const std::size_t header_line = i_ + 1;
        std::smatch m;
        if (!std::regex_match(lines_[i_], m, kHeader)) {
            throw MalformedDiff(header_line, "bad hunk header '" + lines_[i_] + "'");
        }
        Hunk h;
        h.old_start = parse_int(m[1].str());
        h.old_len_explicit = m[2].matched;
        h.old_len = m[2].matched ? parse_int(m[2].str()) : 1;
        h.new_start = parse_int(m[3].str());
        h.new_len_explicit = m[4].matched;
        h.new_len = m[4].matched ? parse_int(m[4].str()) : 1;
        h.section = m[5].str();
        ++i_;

        int old_left = h.old_len;
        int new_left = h.new_len;
        while (old_left > 0 || new_left > 0) {
            if (i_ >= lines_.size()) {
                throw MalformedDiff(i_, "hunk at line " + std::to_string(header_line) +
                                            " ends early (line-count mismatch)");
            }
            const std::string& l = lines_[i_];
            if (starts_with(l, "\\")) {
                if (!h.lines.empty()) h.lines.back().no_newline_at_eof = true;
                ++i_;
                continue;
            }
            DiffLine dl;
            char marker = l.empty() ? ' ' : l.front();
            dl.bare_empty = l.empty();
            dl.text = l.empty() ? std::string() : l.substr(1);
            switch (marker) {
                case ' ': dl.tag = LineTag::context; --old_left; --new_left; break;
                case '-': dl.tag = LineTag::removed; --old_left; break;
                case '+': dl.tag = LineTag::added; --new_left; break;
                default:
                    throw MalformedDiff(i_ + 1, "unexpected line in hunk (line-count mismatch)");
            }
            if (old_left < 0 || new_left < 0) {
                throw MalformedDiff(i_ + 1, "hunk has more lines than its header declares");
            }
            h.lines.push_back(std::move(dl));
            ++i_;
        }
        if (i_ < lines_.size() && starts_with(lines_[i_], "\\")) {
            if (!h.lines.empty()) h.lines.back().no_newline_at_eof = true;
            ++i_;
        }
        return h;
    }

    std::vector<std::string> lines_;
    std::size_t i_ = 0;
};

}  // namespace

CodeDiff parse_unified_diff(std::string_view text) {
    if (text.empty()) throw MalformedDiff(0, "empty diff text");

    const bool crlf = text.find("\r\n") != std::string_view::npos;
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        std::string_view line =
            text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }

    CodeDiff d = Parser(std::move(lines)).run();
    d.raw_text = std::string(text);
    d.crlf = crlf;
    d.ends_with_newline = text.back() == '\n';
    return d;
}

std::string serialize(const CodeDiff& diff) {
    std::string out;
    const std::string_view eol = diff.crlf ? "\r\n" : "\n";
    bool first = true;
    auto emit = [&](std::string_view a, std::string_view b = {}) {
        if (!first) out.append(eol);
        first = false;
        out.append(a);
        out.append(b);
    };

    for (const auto& l : diff.preamble) emit(l);
    for (const auto& f : diff.files) {
        for (const auto& l : f.header_lines) emit(l);
        for (const auto& h : f.hunks) {
            std::string header = "@@ -" + std::to_string(h.old_start);
            if (h.old_len_explicit) header += "," + std::to_string(h.old_len);
            header += " +" + std::to_string(h.new_start);
            if (h.new_len_explicit) header += "," + std::to_string(h.new_len);
            header += " @@" + h.section;
            emit(header);
            for (const auto& l : h.lines) {
                if (l.bare_empty) {
                    emit("");
                } else {
                    const char* marker = l.tag == LineTag::added     ? "+"
                                         : l.tag == LineTag::removed ? "-"
                                                                     : " ";
                    emit(marker, l.text);
                }
                if (l.no_newline_at_eof) emit(kNoNewline);
            }
        }
        for (const auto& l : f.trailing_lines) emit(l);
    }
    if (diff.ends_with_newline) out.append(eol);
    return out;
}

std::vector<ChangedRegion> changed_regions(const CodeDiff& diff) {
    std::vector<ChangedRegion> regions;
    for (const auto& f : diff.files) {
        for (const auto& h : f.hunks) {
            int old_line = h.old_start;
            int new_line = h.new_start;
            // git reports "-0,0" / "+0,0" for empty sides; real lines start at 1.
            if (h.old_len == 0) ++old_line;
            if (h.new_len == 0) ++new_line;
            std::optional<ChangedRegion> run;
            auto flush = [&] {
                if (run) regions.push_back(std::move(*run));
                run.reset();
            };
            for (const auto& l : h.lines) {
                if (l.tag == LineTag::context) {
                    flush();
                    ++old_line;
                    ++new_line;
                    continue;
                }
                if (!run) {
                    run = ChangedRegion{f.path(), f.old_path, std::nullopt, std::nullopt, new_line};
                }
                if (l.tag == LineTag::added) {
                    if (!run->new_lines) run->new_lines = LineRange{new_line, new_line};
                    run->new_lines->last = new_line;
                    ++new_line;
                } else {
                    if (!run->old_lines) run->old_lines = LineRange{old_line, old_line};
                    run->old_lines->last = old_line;
                    ++old_line;
                }
            }
            flush();
        }
    }
    return regions;
}

}  // namespace cmo::diff
