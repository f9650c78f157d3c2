#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace cmo::embed {

enum class EmbedKind { code_diff, text };

std::string_view to_string(EmbedKind kind);

struct Embedding {
    std::vector<double> vector;
    int dim = 0;
    std::string model_id;
    bool truncated = false;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    /// Throws EmbedServiceError; the result is L2-normalized.
    virtual Embedding embed(EmbedKind kind, std::string_view body) = 0;
    virtual std::string model_id(EmbedKind kind) const = 0;
};

/// Feature-hashed bag of words and adjacent word pairs. Deterministic and dependency-free;
/// similar texts share buckets, so retrieval behaves sensibly in offline runs.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(int dim = 256, std::size_t max_body_bytes = 1 << 16);
    Embedding embed(EmbedKind kind, std::string_view body) override;
    std::string model_id(EmbedKind kind) const override;
    int dim() const noexcept { return dim_; }

private:
    int dim_;
    std::size_t max_body_bytes_;
};

struct ServiceHealth {
    std::string status;
    std::map<std::string, std::string> models;
    std::map<std::string, int> dims;
};

/// Client for the embedding sidecar: POST /embed {kind, body}, GET /health.
class HttpEmbedClient final : public Embedder {
public:
    HttpEmbedClient(std::string base_url, double timeout_seconds = 30.0);
    Embedding embed(EmbedKind kind, std::string_view body) override;
    std::string model_id(EmbedKind kind) const override;
    ServiceHealth health() const;

private:
    std::string base_url_;
    double timeout_seconds_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& v);
/// Throws PreconditionError on a zero vector.
std::vector<double> normalized(std::vector<double> v);
/// Throws PreconditionError on mismatched dimensions or a zero vector.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace cmo::embed
