#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "asdcap/embedding.hpp"
#include "asdcap/embedding_store.hpp"

namespace asdcap {

enum class ProviderKind { File, Http, Mock };

std::string_view to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view text);

struct ProviderConfig {
    ProviderKind kind = ProviderKind::Mock;
    std::optional<std::string> base_url;
    std::optional<std::string> api_key_env;
    std::optional<std::string> model_name;
    std::chrono::milliseconds timeout{60'000};
    int max_retries = 2;
    std::size_t max_in_flight = 4;
    /// Store manifest backing the file kind.
    std::optional<std::filesystem::path> store_path;
    /// Embedding dimension of the mock kind.
    std::size_t mock_dim = 64;

    /// Throws InvalidInput when the http kind has no base_url or the file kind
    /// has no store_path.
    void validate() const;
};

/// Audio and text encoder. Implementations are safe for concurrent calls.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dimension() = 0;
    virtual Embedding embed_audio(const std::string& audio_ref) = 0;
    virtual Embedding embed_text(const std::string& text) = 0;
};

/// Caption decoder conditioned on an embedding and a forced prefix.
class DecoderProvider {
public:
    virtual ~DecoderProvider() = default;

    virtual std::string name() const = 0;
    virtual std::string decode_caption(const Embedding& embedding, const std::string& prefix) = 0;
};

/// Chat-style completion: one system message, one user message.
class LlmProvider {
public:
    virtual ~LlmProvider() = default;

    virtual std::string name() const = 0;
    virtual std::string complete(const std::string& system_prefix, const std::string& body) = 0;
};

/// Append-only JSON-lines log of LLM requests and responses.
class AuditTrail {
public:
    explicit AuditTrail(std::ostream& out) : out_(&out) {}

    void record(std::string_view provider, std::string_view system_prefix, std::string_view body,
                std::string_view outcome, std::string_view text, int attempt);

private:
    std::mutex mutex_;
    std::ostream* out_;
};

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t stable_hash(std::string_view bytes);

/// Deterministic stand-ins: unit vectors seeded by a hash of the input.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::size_t dim = 64);

    std::string name() const override;
    std::size_t dimension() override { return dim_; }
    Embedding embed_audio(const std::string& audio_ref) override;
    Embedding embed_text(const std::string& text) override;

private:
    std::size_t dim_;
};

/// prefix + " sample-" + 8 hex digits of the embedding hash.
class MockDecoderProvider final : public DecoderProvider {
public:
    std::string name() const override { return "mock-decoder"; }
    std::string decode_caption(const Embedding& embedding, const std::string& prefix) override;
};

/// "This sound is" followed by the first ten words of the body.
class MockLlmProvider final : public LlmProvider {
public:
    explicit MockLlmProvider(AuditTrail* audit = nullptr) : audit_(audit) {}

    std::string name() const override { return "mock-llm"; }
    std::string complete(const std::string& system_prefix, const std::string& body) override;

private:
    AuditTrail* audit_;
};

/// Precomputed embeddings from a store manifest. Audio refs match a record's
/// source_path or sample_id; texts match a sample_id.
class FileEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit FileEmbeddingProvider(const std::filesystem::path& manifest_path);
    explicit FileEmbeddingProvider(EmbeddingStore store, std::string label = "memory");

    std::string name() const override;
    std::size_t dimension() override { return store_.dim(); }
    Embedding embed_audio(const std::string& audio_ref) override;
    Embedding embed_text(const std::string& text) override;

private:
    EmbeddingStore store_;
    std::string label_;
    std::unordered_map<std::string, std::size_t> by_source_;
};

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config);
std::unique_ptr<DecoderProvider> make_decoder_provider(const ProviderConfig& config);
std::unique_ptr<LlmProvider> make_llm_provider(const ProviderConfig& config,
                                               AuditTrail* audit = nullptr);

}  // namespace asdcap
