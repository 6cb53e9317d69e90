#include "asdcap/providers.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "asdcap/error.hpp"
#include "asdcap/http_providers.hpp"

namespace asdcap {

std::string_view to_string(ProviderKind kind)
{
    switch (kind) {
    case ProviderKind::File: return "file";
    case ProviderKind::Http: return "http";
    case ProviderKind::Mock: return "mock";
    }
    return "mock";
}

ProviderKind parse_provider_kind(std::string_view text)
{
    if (text == "file") return ProviderKind::File;
    if (text == "http") return ProviderKind::Http;
    if (text == "mock") return ProviderKind::Mock;
    throw Error(ErrorCode::InvalidInput, "unknown provider kind '" + std::string(text) + "'");
}

void ProviderConfig::validate() const
{
    if (kind == ProviderKind::Http && (!base_url || base_url->empty())) {
        throw Error(ErrorCode::InvalidInput, "http provider requires a base URL");
    }
    if (kind == ProviderKind::File && !store_path) {
        throw Error(ErrorCode::InvalidInput, "file provider requires a store manifest");
    }
    if (max_retries < 0) {
        throw Error(ErrorCode::InvalidInput, "max_retries must be non-negative");
    }
    if (max_in_flight == 0) {
        throw Error(ErrorCode::InvalidInput, "max_in_flight must be positive");
    }
}

void AuditTrail::record(std::string_view provider, std::string_view system_prefix,
                        std::string_view body, std::string_view outcome, std::string_view text,
                        int attempt)
{
    const nlohmann::json line = {{"provider", provider},   {"attempt", attempt},
                                 {"system", system_prefix}, {"user", body},
                                 {"outcome", outcome},      {"text", text}};
    std::lock_guard lock(mutex_);
    *out_ << line.dump() << '\n';
    out_->flush();
}

std::uint64_t stable_hash(std::string_view bytes)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Embedding hashed_unit_vector(std::string_view key, std::size_t dim)
{
    std::uint64_t state = stable_hash(key);
    std::vector<double> raw(dim);
    double norm = 0.0;
    for (auto& v : raw) {
        // 53 random bits mapped onto [-1, 1).
        v = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    std::vector<float> values(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        values[i] = static_cast<float>(norm > 0.0 ? raw[i] / norm : 1.0 / std::sqrt(double(dim)));
    }
    return Embedding(std::move(values));
}

}  // namespace

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dim)
    : dim_(dim)
{
    if (dim_ == 0) {
        throw Error(ErrorCode::InvalidInput, "mock embedding dimension must be positive");
    }
}

std::string MockEmbeddingProvider::name() const
{
    return "mock-embedding(dim=" + std::to_string(dim_) + ")";
}

Embedding MockEmbeddingProvider::embed_audio(const std::string& audio_ref)
{
    return hashed_unit_vector("audio:" + audio_ref, dim_);
}

Embedding MockEmbeddingProvider::embed_text(const std::string& text)
{
    return hashed_unit_vector("text:" + text, dim_);
}

std::string MockDecoderProvider::decode_caption(const Embedding& embedding, const std::string& prefix)
{
    const auto values = embedding.values();
    const std::string_view bytes(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08x", static_cast<unsigned>(stable_hash(bytes) & 0xffffffffu));
    return prefix.empty() ? "sample-" + std::string(hex) : prefix + " sample-" + hex;
}

std::string MockLlmProvider::complete(const std::string& system_prefix, const std::string& body)
{
    std::istringstream words(body);
    std::string out = "This sound is";
    std::string w;
    for (int i = 0; i < 10 && words >> w; ++i) {
        out += ' ';
        out += w;
    }
    if (audit_ != nullptr) {
        audit_->record(name(), system_prefix, body, "ok", out, 1);
    }
    return out;
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& manifest_path)
    : FileEmbeddingProvider(load_store(manifest_path), manifest_path.string())
{
}

FileEmbeddingProvider::FileEmbeddingProvider(EmbeddingStore store, std::string label)
    : store_(std::move(store)),
      label_(std::move(label))
{
    for (std::size_t i = 0; i < store_.size(); ++i) {
        if (!store_[i].source_path.empty()) {
            by_source_.emplace(store_[i].source_path, i);
        }
    }
}

std::string FileEmbeddingProvider::name() const
{
    return "file:" + label_;
}

Embedding FileEmbeddingProvider::embed_audio(const std::string& audio_ref)
{
    if (const auto it = by_source_.find(audio_ref); it != by_source_.end()) {
        return store_[it->second].embedding;
    }
    if (const auto* r = store_.find(audio_ref)) {
        return r->embedding;
    }
    throw Error(ErrorCode::NotFound, "no precomputed embedding for '" + audio_ref + "'");
}

Embedding FileEmbeddingProvider::embed_text(const std::string& text)
{
    if (const auto* r = store_.find(text)) {
        return r->embedding;
    }
    throw Error(ErrorCode::NotFound, "no precomputed text embedding for '" + text + "'");
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config)
{
    config.validate();
    switch (config.kind) {
    case ProviderKind::File: return std::make_unique<FileEmbeddingProvider>(*config.store_path);
    case ProviderKind::Http: return std::make_unique<HttpEmbeddingProvider>(config);
    case ProviderKind::Mock: return std::make_unique<MockEmbeddingProvider>(config.mock_dim);
    }
    throw Error(ErrorCode::InvalidInput, "unsupported embedding provider");
}

std::unique_ptr<DecoderProvider> make_decoder_provider(const ProviderConfig& config)
{
    config.validate();
    switch (config.kind) {
    case ProviderKind::Http: return std::make_unique<HttpDecoderProvider>(config);
    case ProviderKind::Mock: return std::make_unique<MockDecoderProvider>();
    case ProviderKind::File: break;
    }
    throw Error(ErrorCode::InvalidInput, "caption decoding needs an http or mock provider");
}

std::unique_ptr<LlmProvider> make_llm_provider(const ProviderConfig& config, AuditTrail* audit)
{
    config.validate();
    switch (config.kind) {
    case ProviderKind::Http: return std::make_unique<HttpLlmProvider>(config, audit);
    case ProviderKind::Mock: return std::make_unique<MockLlmProvider>(audit);
    case ProviderKind::File: break;
    }
    throw Error(ErrorCode::InvalidInput, "LLM completion needs an http or mock provider");
}

}  // namespace asdcap
