#include "cmo/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>

#include "cmo/errors.hpp"

namespace cmo::metrics {

Tokens tokenize(std::string_view text) {
    Tokens out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            word += static_cast<char>(std::tolower(c));
        } else if (std::isspace(c)) {
            flush();
        } else {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        }
    }
    flush();
    return out;
}

// ---- Porter stemmer ----------------------------------------------------------

namespace {

class Stemmer {
public:
    explicit Stemmer(std::string w) : b_(std::move(w)) {}

    std::string run() {
        step1a();
        step1b();
        step1c();
        step2();
        step3();
        step4();
        step5();
        return b_;
    }

private:
    std::string b_;

    bool cons(std::size_t i) const {
        switch (b_[i]) {
            case 'a': case 'e': case 'i': case 'o': case 'u': return false;
            case 'y': return i == 0 || !cons(i - 1);
            default: return true;
        }
    }

    // Number of VC sequences in b_[0, len).
    int measure(std::size_t len) const {
        int m = 0;
        std::size_t i = 0;
        while (i < len && cons(i)) ++i;
        while (i < len) {
            while (i < len && !cons(i)) ++i;
            if (i >= len) break;
            while (i < len && cons(i)) ++i;
            ++m;
        }
        return m;
    }

    bool has_vowel(std::size_t len) const {
        for (std::size_t i = 0; i < len; ++i)
            if (!cons(i)) return true;
        return false;
    }

    bool double_cons(std::size_t len) const {
        return len >= 2 && b_[len - 1] == b_[len - 2] && cons(len - 1);
    }

    // consonant-vowel-consonant ending, the last not w, x or y.
    bool cvc(std::size_t len) const {
        if (len < 3 || !cons(len - 1) || cons(len - 2) || !cons(len - 3)) return false;
        const char c = b_[len - 1];
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(std::string_view s) const {
        return b_.size() >= s.size() && b_.compare(b_.size() - s.size(), s.size(), s) == 0;
    }

    void replace_end(std::size_t suffix_len, std::string_view with) {
        b_.resize(b_.size() - suffix_len);
        b_ += with;
    }

    struct Rule {
        std::string_view suffix;
        std::string_view replacement;
    };

    // Applies the longest matching rule when the remaining stem has measure > min_m.
    template <std::size_t N>
    void apply_longest(const std::array<Rule, N>& rules, int min_m) {
        const Rule* best = nullptr;
        for (const auto& r : rules)
            if (ends(r.suffix) && (!best || r.suffix.size() > best->suffix.size())) best = &r;
        if (best && measure(b_.size() - best->suffix.size()) > min_m) replace_end(best->suffix.size(), best->replacement);
    }

    void step1a() {
        if (ends("sses")) replace_end(4, "ss");
        else if (ends("ies")) replace_end(3, "i");
        else if (ends("ss")) return;
        else if (ends("s")) replace_end(1, "");
    }

    void step1b() {
        if (ends("eed")) {
            if (measure(b_.size() - 3) > 0) replace_end(3, "ee");
            return;
        }
        std::size_t cut = 0;
        if (ends("ed") && has_vowel(b_.size() - 2)) cut = 2;
        else if (ends("ing") && has_vowel(b_.size() - 3)) cut = 3;
        if (!cut) return;
        replace_end(cut, "");
        if (ends("at") || ends("bl") || ends("iz")) {
            b_ += 'e';
        } else if (double_cons(b_.size())) {
            const char c = b_.back();
            if (c != 'l' && c != 's' && c != 'z') b_.pop_back();
        } else if (measure(b_.size()) == 1 && cvc(b_.size())) {
            b_ += 'e';
        }
    }

    void step1c() {
        if (ends("y") && has_vowel(b_.size() - 1)) b_.back() = 'i';
    }

    void step2() {
        static constexpr std::array<Rule, 20> rules{{
            {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},   {"izer", "ize"},
            {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},       {"ousli", "ous"},
            {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"},
            {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
        }};
        apply_longest(rules, 0);
    }

    void step3() {
        static constexpr std::array<Rule, 7> rules{{
            {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"}, {"ical", "ic"}, {"ful", ""}, {"ness", ""},
        }};
        apply_longest(rules, 0);
    }

    void step4() {
        static constexpr std::array<std::string_view, 19> suffixes{
            "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
            "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
        std::string_view best;
        for (auto s : suffixes)
            if (ends(s) && s.size() > best.size()) best = s;
        if (best.empty()) return;
        const std::size_t stem = b_.size() - best.size();
        if (measure(stem) <= 1) return;
        if (best == "ion" && !(stem > 0 && (b_[stem - 1] == 's' || b_[stem - 1] == 't'))) return;
        b_.resize(stem);
    }

    void step5() {
        if (ends("e")) {
            const std::size_t stem = b_.size() - 1;
            const int m = measure(stem);
            if (m > 1 || (m == 1 && !cvc(stem))) b_.pop_back();
        }
        if (measure(b_.size()) > 1 && double_cons(b_.size()) && b_.back() == 'l') b_.pop_back();
    }
};

}  // namespace

std::string porter_stem(std::string_view word) {
    if (word.size() <= 2) return std::string(word);
    for (char c : word)
        if (c < 'a' || c > 'z') return std::string(word);
    return Stemmer(std::string(word)).run();
}

// ---- BLEU / ROUGE-L ----------------------------------------------------------

namespace {

void require_reference(const Tokens& reference) {
    if (reference.empty()) throw EmptyReference();
}

std::map<Tokens, int> ngram_counts(const Tokens& t, std::size_t n) {
    std::map<Tokens, int> out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
    return out;
}

}  // namespace

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double bleu(const Tokens& candidate, const Tokens& reference) {
    require_reference(reference);
    if (candidate.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand = ngram_counts(candidate, n);
        const auto ref = ngram_counts(reference, n);
        int matched = 0, total = 0;
        for (const auto& [gram, count] : cand) {
            total += count;
            if (auto it = ref.find(gram); it != ref.end()) matched += std::min(count, it->second);
        }
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0;
            p = static_cast<double>(matched) / total;
        } else {
            // An order with no candidate n-grams scores (0 + 1) / (0 + 1).
            p = (matched + 1.0) / (total + 1.0);
        }
        log_sum += std::log(p) / 4.0;
    }
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum);
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
    require_reference(reference);
    if (candidate.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

// ---- METEOR ------------------------------------------------------------------

namespace {

// Aligns unmatched candidate tokens to unmatched reference tokens whose key agrees.
// Scans the candidate left to right and prefers the reference position right after the
// previous alignment, which keeps contiguous runs together.
void align_stage(const std::vector<std::string>& cand_keys, const std::vector<std::string>& ref_keys,
                 std::vector<long>& cand_to_ref, std::vector<bool>& ref_used) {
    long prev = -2;
    for (std::size_t i = 0; i < cand_keys.size(); ++i) {
        if (cand_to_ref[i] >= 0) {
            prev = cand_to_ref[i];
            continue;
        }
        long pick = -1;
        const long next = prev + 1;
        if (next >= 0 && static_cast<std::size_t>(next) < ref_keys.size() && !ref_used[next] &&
            ref_keys[next] == cand_keys[i])
            pick = next;
        for (std::size_t j = 0; pick < 0 && j < ref_keys.size(); ++j)
            if (!ref_used[j] && ref_keys[j] == cand_keys[i]) pick = static_cast<long>(j);
        if (pick >= 0) {
            cand_to_ref[i] = pick;
            ref_used[pick] = true;
            prev = pick;
        }
    }
}

}  // namespace

double meteor_basic(const Tokens& candidate, const Tokens& reference) {
    require_reference(reference);
    if (candidate.empty()) return 0.0;

    std::vector<long> cand_to_ref(candidate.size(), -1);
    std::vector<bool> ref_used(reference.size(), false);
    align_stage(candidate, reference, cand_to_ref, ref_used);

    std::vector<std::string> cand_stems, ref_stems;
    for (const auto& t : candidate) cand_stems.push_back(porter_stem(t));
    for (const auto& t : reference) ref_stems.push_back(porter_stem(t));
    align_stage(cand_stems, ref_stems, cand_to_ref, ref_used);

    std::size_t matches = 0, chunks = 0;
    long prev = -2;
    for (long j : cand_to_ref) {
        if (j < 0) {
            prev = -2;
            continue;
        }
        ++matches;
        if (j != prev + 1) ++chunks;
        prev = j;
    }
    if (matches == 0) return 0.0;
    const double p = static_cast<double>(matches) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(matches) / static_cast<double>(reference.size());
    const double fmean = 10.0 * p * r / (r + 9.0 * p);
    const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / static_cast<double>(matches), 3.0);
    return fmean * (1.0 - penalty);
}

MetricReport evaluate(std::string_view candidate, std::string_view reference) {
    const Tokens c = tokenize(candidate);
    const Tokens r = tokenize(reference);
    return {bleu(c, r), meteor_basic(c, r), rouge_l(c, r)};
}

MetricReport mean(const std::vector<MetricReport>& reports) {
    MetricReport out;
    if (reports.empty()) return out;
    for (const auto& r : reports) {
        out.bleu += r.bleu;
        out.meteor += r.meteor;
        out.rouge_l += r.rouge_l;
    }
    const double n = static_cast<double>(reports.size());
    out.bleu /= n;
    out.meteor /= n;
    out.rouge_l /= n;
    return out;
}

}  // namespace cmo::metrics
