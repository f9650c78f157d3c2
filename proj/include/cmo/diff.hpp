#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cmo::diff {

enum class ChangeKind { modified, added, deleted, renamed };
enum class LineTag { context, added, removed };

std::string_view to_string(ChangeKind kind);

struct DiffLine {
    LineTag tag = LineTag::context;
    std::string text;
    /// Followed by a "\ No newline at end of file" marker.
    bool no_newline_at_eof = false;
    /// Context line whose leading space was stripped by an editor or mailer.
    bool bare_empty = false;
};

struct Hunk {
    int old_start = 0;
    int old_len = 0;
    int new_start = 0;
    int new_len = 0;
    // git omits ",1" in "@@ -3 +3 @@"; remember which form we saw.
    bool old_len_explicit = true;
    bool new_len_explicit = true;
    /// Text after the closing "@@" (usually " functionName(...)" or empty).
    std::string section;
    std::vector<DiffLine> lines;
};

struct FileDiff {
    std::string old_path;
    std::string new_path;
    ChangeKind change_kind = ChangeKind::modified;
    bool binary = false;
    /// Every line from "diff --git" up to the first hunk, verbatim.
    std::vector<std::string> header_lines;
    std::vector<Hunk> hunks;
    /// Unrecognized lines following the last hunk, verbatim.
    std::vector<std::string> trailing_lines;

    /// Post-change path, or the old path for deletions.
    const std::string& path() const noexcept;
    int added_lines() const noexcept;
    int removed_lines() const noexcept;
};

/// Inclusive, 1-based line interval.
struct LineRange {
    int first = 0;
    int last = 0;

    bool contains(int line) const noexcept { return line >= first && line <= last; }
    bool contains(const LineRange& other) const noexcept {
        return other.first >= first && other.last <= last;
    }
    friend bool operator==(const LineRange&, const LineRange&) = default;
};

struct ChangedRegion {
    std::string path;
    std::string old_path;
    /// Added lines of the run; absent for pure deletions.
    std::optional<LineRange> new_lines;
    /// Removed lines of the run; absent for pure additions.
    std::optional<LineRange> old_lines;
    /// New-file line the run sits before; locates pure deletions in the post-change file.
    int new_anchor = 0;
};

class CodeDiff {
public:
    std::vector<std::string> preamble;
    std::vector<FileDiff> files;
    std::string raw_text;
    bool crlf = false;
    bool ends_with_newline = true;

    bool empty() const noexcept { return files.empty(); }
};

/// Parses `git diff`/`git show` style unified diffs. Throws MalformedDiff.
CodeDiff parse_unified_diff(std::string_view text);

/// Re-emits the diff from its structured form.
std::string serialize(const CodeDiff& diff);

/// One region per maximal run of added/removed lines, in file then line order.
std::vector<ChangedRegion> changed_regions(const CodeDiff& diff);

}  // namespace cmo::diff
