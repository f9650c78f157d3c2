#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cmo::metrics {

using Tokens = std::vector<std::string>;

/// Lowercased runs of letters/digits; every punctuation character is a token of its own.
/// Bytes >= 0x80 count as letters so UTF-8 words stay whole.
Tokens tokenize(std::string_view text);

/// Porter (1980) suffix stripping for a lowercase ASCII word.
std::string porter_stem(std::string_view word);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// Sentence BLEU-4 with add-one smoothing of the 2..4-gram precisions and the brevity
/// penalty. A candidate too short for an order scores 1 on it. Throws EmptyReference.
double bleu(const Tokens& candidate, const Tokens& reference);

/// LCS F1. Throws EmptyReference.
double rouge_l(const Tokens& candidate, const Tokens& reference);

/// Exact then Porter-stem unigram matching, Fmean = 10PR/(R+9P) and the fragmentation
/// penalty 0.5 * (chunks/matches)^3. Throws EmptyReference.
double meteor_basic(const Tokens& candidate, const Tokens& reference);

struct MetricReport {
    double bleu = 0.0;
    double meteor = 0.0;
    double rouge_l = 0.0;
};

/// Tokenizes both sides and computes all three scores.
MetricReport evaluate(std::string_view candidate, std::string_view reference);

/// Component-wise mean; all zeros for an empty input.
MetricReport mean(const std::vector<MetricReport>& reports);

}  // namespace cmo::metrics
