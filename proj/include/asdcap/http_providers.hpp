#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>

#include "asdcap/providers.hpp"

namespace asdcap {

namespace detail {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Thin JSON-over-HTTP transport shared by the HTTP providers. Transport
/// failures are retried up to max_retries; any HTTP response, including
/// error statuses, is returned to the caller as-is.
class HttpTransport {
public:
    explicit HttpTransport(const ProviderConfig& config);

    HttpResponse get(const std::string& path);
    using FailureHook = std::function<void(int attempt, const std::string& error)>;

    /// `on_failure` is called for every failed transport attempt.
    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::optional<std::string>& bearer = std::nullopt,
                           const FailureHook& on_failure = {});

    const std::string& base_url() const noexcept { return base_url_; }

private:
    HttpResponse send(const char* method, const std::string& path, const std::string* body,
                      const std::optional<std::string>& bearer, const FailureHook& on_failure);

    std::string base_url_;
    std::string path_prefix_;
    std::chrono::milliseconds timeout_;
    int max_retries_;
    std::counting_semaphore<> in_flight_;
};

}  // namespace detail

/// Client of the inference sidecar: GET /info, POST /embed/audio, POST /embed/text.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(const ProviderConfig& config);

    std::string name() const override;
    std::size_t dimension() override;
    Embedding embed_audio(const std::string& audio_ref) override;
    Embedding embed_text(const std::string& text) override;

private:
    Embedding post_embedding(const std::string& path, const std::string& body);
    Embedding checked(Embedding e);

    detail::HttpTransport transport_;
    std::mutex dim_mutex_;
    std::size_t session_dim_ = 0;
    std::string model_name_;
};

/// Client of the sidecar's POST /decode.
class HttpDecoderProvider final : public DecoderProvider {
public:
    explicit HttpDecoderProvider(const ProviderConfig& config);

    std::string name() const override;
    std::string decode_caption(const Embedding& embedding, const std::string& prefix) override;

private:
    detail::HttpTransport transport_;
};

/// Chat-completions client: POST {base_url}/chat/completions.
/// The API key is read from the environment variable named in the config.
class HttpLlmProvider final : public LlmProvider {
public:
    HttpLlmProvider(const ProviderConfig& config, AuditTrail* audit = nullptr);

    std::string name() const override;
    std::string complete(const std::string& system_prefix, const std::string& body) override;

private:
    ProviderConfig config_;
    detail::HttpTransport transport_;
    AuditTrail* audit_;
};

}  // namespace asdcap
