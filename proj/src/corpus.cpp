#include "cmo/corpus.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ctime>
#include <set>

#include "cmo/diff.hpp"
#include "cmo/errors.hpp"
#include "cmo/repo.hpp"
#include "cmo/util.hpp"

namespace cmo::corpus {

using nlohmann::json;

// ---- mining ----------------------------------------------------------------

namespace {

bool has_textual_change(const std::string& diff_text) {
    if (trim(diff_text).empty()) return false;
    const auto d = diff::parse_unified_diff(diff_text);
    return std::any_of(d.files.begin(), d.files.end(), [](const diff::FileDiff& f) { return !f.binary; });
}

std::string clone_name(const std::string& url, std::size_t n) {
    std::string base = url;
    while (!base.empty() && (base.back() == '/')) base.pop_back();
    base = base.substr(base.find_last_of("/:") == std::string::npos ? 0 : base.find_last_of("/:") + 1);
    if (base.size() > 4 && base.compare(base.size() - 4, 4, ".git") == 0) base.resize(base.size() - 4);
    return fmt::format("{:03}-{}", n, base.empty() ? "repo" : base);
}

}  // namespace

MineReport mine_commits(const std::vector<std::string>& sources, const MineOptions& options) {
    MineReport report;
    std::set<std::string> seen;
    std::optional<std::filesystem::path> scratch;

    for (std::size_t n = 0; n < sources.size(); ++n) {
        const std::string& source = sources[n];
        try {
            std::filesystem::path path = source;
            if (repo::looks_like_url(source)) {
                std::filesystem::path root;
                if (options.clone_dir) {
                    root = *options.clone_dir;
                } else {
                    if (!scratch) {
                        std::string tmpl = (std::filesystem::temp_directory_path() / "cmo-mine-XXXXXX").string();
                        if (!mkdtemp(tmpl.data())) throw RepoUnavailable("cannot create a clone directory");
                        scratch = tmpl;
                    }
                    root = *scratch;
                }
                std::filesystem::create_directories(root);
                path = repo::clone(source, root / clone_name(source, n));
            }
            const repo::GitRepo git(path);
            for (const auto& id : git.commits(options.max_commits_per_repo)) {
                if (git.parents(id).size() > 1) {
                    ++report.merges;
                    continue;
                }
                if (seen.count(id)) {
                    ++report.duplicates;
                    continue;
                }
                std::string message = git.message(id);
                if (trim(message).empty()) {
                    ++report.empty_messages;
                    continue;
                }
                std::string diff_text = git.diff(id);
                try {
                    if (!has_textual_change(diff_text)) {
                        ++report.non_textual;
                        continue;
                    }
                } catch (const MalformedDiff& e) {
                    spdlog::warn("skipping {} in {}: {}", id, source, e.what());
                    ++report.unparseable;
                    continue;
                }
                seen.insert(id);
                report.records.push_back({id, source, std::move(diff_text), std::move(message)});
            }
        } catch (const RepoUnavailable& e) {
            spdlog::warn("{}", e.what());
            report.errors.push_back(source + ": " + e.what());
        }
    }
    if (scratch) {
        std::error_code ec;
        std::filesystem::remove_all(*scratch, ec);
    }
    return report;
}

// ---- filtering -------------------------------------------------------------

LlmGoodFilter::LlmGoodFilter(llm::Gateway& gateway, llm::PromptSettings settings)
    : gateway_(gateway), settings_(std::move(settings)) {}

bool LlmGoodFilter::accept(const CommitRecord& record) {
    const std::string reply = to_lower(trim(gateway_.chat(llm::build_filter_prompt(record.message, settings_))));
    if (reply.rfind("yes", 0) == 0) return true;
    if (reply.rfind("no", 0) == 0) return false;
    throw UnparseableResponse("filter reply is neither yes nor no: " + reply.substr(0, 40));
}

FilterReport filter_good(std::vector<CommitRecord> records, GoodMessageFilter& filter) {
    FilterReport report;
    for (auto& r : records) {
        try {
            if (filter.accept(r)) report.kept.push_back(std::move(r));
            else ++report.rejected;
        } catch (const GatewayError& e) {
            spdlog::warn("filter {} failed on {}: {}", filter.name(), r.commit_id, e.what());
            ++report.failed;
        } catch (const UnparseableResponse& e) {
            spdlog::warn("filter {} failed on {}: {}", filter.name(), r.commit_id, e.what());
            ++report.failed;
        }
    }
    return report;
}

// ---- index -----------------------------------------------------------------

CorpusIndex::CorpusIndex(IndexMetadata metadata, std::vector<CorpusEntry> entries)
    : metadata_(std::move(metadata)), entries_(std::move(entries)) {
    for (const auto& e : entries_) {
        if (static_cast<int>(e.diff_embedding.size()) != metadata_.diff_dim ||
            static_cast<int>(e.message_embedding.size()) != metadata_.message_dim)
            throw PreconditionError("corpus entry " + e.commit_id + " has embeddings of the wrong dimension");
    }
}

std::vector<Neighbor> CorpusIndex::retrieve_similar(const std::vector<double>& diff_embedding, std::size_t k) const {
    if (entries_.empty()) throw EmptyIndex();
    if (k == 0) throw PreconditionError("k must be at least 1");
    if (static_cast<int>(diff_embedding.size()) != metadata_.diff_dim)
        throw PreconditionError(fmt::format("query has dimension {} but the index stores {}", diff_embedding.size(),
                                            metadata_.diff_dim));
    const double qn = embed::norm(diff_embedding);
    if (qn == 0.0) throw PreconditionError("query embedding is a zero vector");

    std::vector<Neighbor> all;
    all.reserve(entries_.size());
    for (const auto& e : entries_) all.push_back({&e, embed::dot(diff_embedding, e.diff_embedding) / qn});
    const auto better = [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.entry->commit_id < b.entry->commit_id;
    };
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), better);
    all.resize(n);
    return all;
}

namespace {

constexpr char kMagic[8] = {'C', 'M', 'O', 'I', 'D', 'X', '\0', '\1'};
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_bytes(std::string& out, std::string_view s) {
    put_u64(out, s.size());
    out.append(s);
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(out, bits);
}

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string bytes() {
        const auto n = u64();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    double f64() {
        const auto bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        return d;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > data_.size() - pos_) throw Error("corpus index is truncated");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

json metadata_json(const IndexMetadata& m, std::size_t count) {
    return json{{"format", "cmo-corpus-index"},
                {"version", kFormatVersion},
                {"count", count},
                {"diff_model_id", m.diff_model_id},
                {"message_model_id", m.message_model_id},
                {"diff_dim", m.diff_dim},
                {"message_dim", m.message_dim},
                {"built_at", m.built_at},
                {"sources", m.sources},
                {"filter", m.filter}};
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

void CorpusIndex::save(const std::filesystem::path& path) const {
    std::string out(kMagic, sizeof kMagic);
    put_bytes(out, metadata_json(metadata_, entries_.size()).dump());
    for (const auto& e : entries_) {
        put_bytes(out, e.commit_id);
        put_bytes(out, e.repo);
        put_bytes(out, e.diff_text);
        put_bytes(out, e.message_text);
        for (double d : e.diff_embedding) put_f64(out, d);
        for (double d : e.message_embedding) put_f64(out, d);
    }
    out += sha256_hex(out);
    write_file_atomic(path, out);
}

CorpusIndex CorpusIndex::load(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("corpus index not found: " + path.string());
    const std::string data = read_file(path);
    if (data.size() < sizeof kMagic + 64 || data.compare(0, sizeof kMagic, kMagic, sizeof kMagic) != 0)
        throw Error("not a corpus index file: " + path.string());
    const std::string_view body(data.data(), data.size() - 64);
    if (sha256_hex(body) != std::string_view(data).substr(data.size() - 64))
        throw Error("corpus index checksum mismatch: " + path.string());

    Reader in(body);
    in.raw(sizeof kMagic);
    json header;
    try {
        header = json::parse(in.bytes());
    } catch (const json::exception& e) {
        throw Error(std::string("corpus index header is not valid JSON: ") + e.what());
    }
    if (header.value("format", "") != "cmo-corpus-index" || header.value("version", 0) != kFormatVersion)
        throw Error("unsupported corpus index format in " + path.string());

    IndexMetadata m;
    m.diff_model_id = header.at("diff_model_id").get<std::string>();
    m.message_model_id = header.at("message_model_id").get<std::string>();
    m.diff_dim = header.at("diff_dim").get<int>();
    m.message_dim = header.at("message_dim").get<int>();
    m.built_at = header.at("built_at").get<std::string>();
    m.sources = header.at("sources").get<std::vector<std::string>>();
    m.filter = header.value("filter", "");
    const auto count = header.at("count").get<std::size_t>();

    std::vector<CorpusEntry> entries;
    entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        CorpusEntry e;
        e.commit_id = in.bytes();
        e.repo = in.bytes();
        e.diff_text = in.bytes();
        e.message_text = in.bytes();
        e.diff_embedding.resize(static_cast<std::size_t>(m.diff_dim));
        for (double& d : e.diff_embedding) d = in.f64();
        e.message_embedding.resize(static_cast<std::size_t>(m.message_dim));
        for (double& d : e.message_embedding) d = in.f64();
        entries.push_back(std::move(e));
    }
    if (!in.done()) throw Error("corpus index has trailing bytes: " + path.string());
    return CorpusIndex(std::move(m), std::move(entries));
}

CorpusIndex build_index(const std::vector<CommitRecord>& records, embed::Embedder& embedder,
                        const BuildOptions& options) {
    if (records.empty()) throw BuildError("EmptyCorpus: no records survived mining and filtering");
    IndexMetadata m;
    m.diff_model_id = embedder.model_id(embed::EmbedKind::code_diff);
    m.message_model_id = embedder.model_id(embed::EmbedKind::text);
    m.built_at = options.timestamp ? *options.timestamp : utc_now();
    m.sources = options.sources;
    m.filter = options.filter;

    std::vector<CorpusEntry> entries;
    entries.reserve(records.size());
    for (const auto& r : records) {
        CorpusEntry e;
        e.commit_id = r.commit_id;
        e.repo = r.repo;
        e.diff_text = r.diff_text;
        e.message_text = r.message;
        auto d = embedder.embed(embed::EmbedKind::code_diff, r.diff_text);
        auto t = embedder.embed(embed::EmbedKind::text, r.message);
        e.diff_embedding = embed::normalized(std::move(d.vector));
        e.message_embedding = embed::normalized(std::move(t.vector));
        if (entries.empty()) {
            m.diff_dim = static_cast<int>(e.diff_embedding.size());
            m.message_dim = static_cast<int>(e.message_embedding.size());
        }
        entries.push_back(std::move(e));
    }
    return CorpusIndex(std::move(m), std::move(entries));
}

}  // namespace cmo::corpus
