#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cmo {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename(2), so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

struct ProcessResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// Runs argv[0] (PATH lookup, no shell) in `cwd`, feeding `input` on stdin.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::optional<std::filesystem::path>& cwd = std::nullopt,
                          std::string_view input = {});

std::vector<std::string> split_lines(std::string_view text);
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Rough token count used for prompt budgets (one token per four bytes, rounded up).
std::size_t estimate_tokens(std::string_view text);

std::optional<std::string> env_var(const char* name);

}  // namespace cmo
