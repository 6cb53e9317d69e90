#include "asdcap/http_providers.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "asdcap/error.hpp"

namespace asdcap {

using nlohmann::json;

namespace detail {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // "" or "/v1"
};

SplitUrl split_url(const std::string& url)
{
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::InvalidInput, "base URL '" + url + "' has no scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = url.substr(0, path_start);
    if (path_start != std::string::npos) {
        out.path = url.substr(path_start);
        while (!out.path.empty() && out.path.back() == '/') {
            out.path.pop_back();
        }
    }
    return out;
}

class InFlightSlot {
public:
    explicit InFlightSlot(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
    ~InFlightSlot() { sem_.release(); }
    InFlightSlot(const InFlightSlot&) = delete;
    InFlightSlot& operator=(const InFlightSlot&) = delete;

private:
    std::counting_semaphore<>& sem_;
};

}  // namespace

HttpTransport::HttpTransport(const ProviderConfig& config)
    : timeout_(config.timeout),
      max_retries_(config.max_retries),
      in_flight_(static_cast<std::ptrdiff_t>(config.max_in_flight))
{
    config.validate();
    if (config.kind != ProviderKind::Http) {
        throw Error(ErrorCode::InvalidInput, "HTTP transport needs an http provider config");
    }
    const SplitUrl parts = split_url(*config.base_url);
    base_url_ = parts.origin;
    path_prefix_ = parts.path;
}

HttpResponse HttpTransport::get(const std::string& path)
{
    return send("GET", path, nullptr, std::nullopt, {});
}

HttpResponse HttpTransport::post_json(const std::string& path, const std::string& body,
                                      const std::optional<std::string>& bearer,
                                      const FailureHook& on_failure)
{
    return send("POST", path, &body, bearer, on_failure);
}

HttpResponse HttpTransport::send(const char* method, const std::string& path,
                                 const std::string* body, const std::optional<std::string>& bearer,
                                 const FailureHook& on_failure)
{
    const InFlightSlot slot(in_flight_);
    const std::string full_path = path_prefix_ + path;
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);

    std::string last_error;
    for (int attempt = 1; attempt <= max_retries_ + 1; ++attempt) {
        httplib::Client client(base_url_);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers headers;
        if (bearer) {
            headers.emplace("Authorization", "Bearer " + *bearer);
        }

        const httplib::Result res = body != nullptr
                                        ? client.Post(full_path, headers, *body, "application/json")
                                        : client.Get(full_path, headers);
        if (res) {
            return {res->status, res->body};
        }
        last_error = httplib::to_string(res.error());
        if (on_failure) {
            on_failure(attempt, last_error);
        }
    }
    throw Error(ErrorCode::ProviderError, std::string(method) + " " + base_url_ + full_path +
                                              " failed after " + std::to_string(max_retries_ + 1) +
                                              " attempts: " + last_error);
}

}  // namespace detail

namespace {

std::string error_text(const detail::HttpResponse& r)
{
    try {
        const json j = json::parse(r.body);
        if (j.is_object() && j.contains("error")) {
            const auto& e = j.at("error");
            if (e.is_string()) return e.get<std::string>();
            if (e.is_object() && e.contains("message")) return e.at("message").get<std::string>();
            return e.dump();
        }
    } catch (const json::exception&) {
    }
    return r.body.substr(0, 200);
}

json parse_ok(const detail::HttpResponse& r, const std::string& what)
{
    if (r.status == 401 || r.status == 403) {
        throw Error(ErrorCode::AuthError, what + ": HTTP " + std::to_string(r.status) + " " + error_text(r));
    }
    if (r.status == 404) {
        throw Error(ErrorCode::NotFound, what + ": " + error_text(r));
    }
    if (r.status < 200 || r.status >= 300) {
        throw Error(ErrorCode::ProviderError, what + ": HTTP " + std::to_string(r.status) + " " + error_text(r));
    }
    try {
        return json::parse(r.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderError, what + ": malformed JSON response: " + e.what());
    }
}

Embedding embedding_from(const json& j, const std::string& what)
{
    try {
        return Embedding(j.at("embedding").get<std::vector<float>>());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderError, what + ": response has no embedding: " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::ProviderError, what + ": " + e.what());
    }
}

}  // namespace

HttpEmbeddingProvider::HttpEmbeddingProvider(const ProviderConfig& config)
    : transport_(config)
{
}

std::string HttpEmbeddingProvider::name() const
{
    return "http:" + transport_.base_url() + (model_name_.empty() ? "" : " model=" + model_name_);
}

std::size_t HttpEmbeddingProvider::dimension()
{
    {
        std::lock_guard lock(dim_mutex_);
        if (session_dim_ != 0) {
            return session_dim_;
        }
    }
    const json info = parse_ok(transport_.get("/info"), "GET /info");
    std::size_t dim = 0;
    try {
        dim = info.at("embedding_dim").get<std::size_t>();
        if (info.contains("model_name")) {
            model_name_ = info.at("model_name").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderError, std::string("GET /info: ") + e.what());
    }
    if (dim == 0) {
        throw Error(ErrorCode::ProviderError, "GET /info: embedding_dim is 0");
    }
    std::lock_guard lock(dim_mutex_);
    if (session_dim_ == 0) {
        session_dim_ = dim;
    } else if (session_dim_ != dim) {
        throw Error(ErrorCode::DimensionMismatch, "sidecar dimension changed within the session");
    }
    return session_dim_;
}

Embedding HttpEmbeddingProvider::checked(Embedding e)
{
    std::lock_guard lock(dim_mutex_);
    if (session_dim_ == 0) {
        session_dim_ = e.dim();
    } else if (e.dim() != session_dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "sidecar returned dimension " + std::to_string(e.dim()) + ", session uses " +
                        std::to_string(session_dim_));
    }
    return e;
}

Embedding HttpEmbeddingProvider::post_embedding(const std::string& path, const std::string& body)
{
    const std::string what = "POST " + path;
    return checked(embedding_from(parse_ok(transport_.post_json(path, body), what), what));
}

Embedding HttpEmbeddingProvider::embed_audio(const std::string& audio_ref)
{
    return post_embedding("/embed/audio", json{{"path", audio_ref}}.dump());
}

Embedding HttpEmbeddingProvider::embed_text(const std::string& text)
{
    return post_embedding("/embed/text", json{{"text", text}}.dump());
}

HttpDecoderProvider::HttpDecoderProvider(const ProviderConfig& config)
    : transport_(config)
{
}

std::string HttpDecoderProvider::name() const
{
    return "http-decoder:" + transport_.base_url();
}

std::string HttpDecoderProvider::decode_caption(const Embedding& embedding, const std::string& prefix)
{
    const json request = {{"embedding", embedding.values()}, {"prefix", prefix}};
    const json response = parse_ok(transport_.post_json("/decode", request.dump()), "POST /decode");
    try {
        return response.at("caption").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderError, std::string("POST /decode: ") + e.what());
    }
}

HttpLlmProvider::HttpLlmProvider(const ProviderConfig& config, AuditTrail* audit)
    : config_(config),
      transport_(config),
      audit_(audit)
{
}

std::string HttpLlmProvider::name() const
{
    return "http-llm:" + transport_.base_url() + " model=" + config_.model_name.value_or("gpt-4");
}

std::string HttpLlmProvider::complete(const std::string& system_prefix, const std::string& body)
{
    std::optional<std::string> key;
    if (config_.api_key_env) {
        const char* value = std::getenv(config_.api_key_env->c_str());
        if (value == nullptr || *value == '\0') {
            throw Error(ErrorCode::AuthError,
                        "environment variable " + *config_.api_key_env + " is not set");
        }
        key = value;
    }

    const json request = {
        {"model", config_.model_name.value_or("gpt-4")},
        {"messages",
         json::array({{{"role", "system"}, {"content", system_prefix}},
                      {{"role", "user"}, {"content", body}}})},
    };
    const std::string provider = name();
    detail::HttpTransport::FailureHook on_failure;
    if (audit_ != nullptr) {
        on_failure = [&](int attempt, const std::string& error) {
            audit_->record(provider, system_prefix, body, "transport_error", error, attempt);
        };
    }
    const detail::HttpResponse response =
        transport_.post_json("/chat/completions", request.dump(), key, on_failure);

    std::string content;
    try {
        const json j = parse_ok(response, "POST /chat/completions");
        content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        if (audit_ != nullptr) {
            audit_->record(provider, system_prefix, body, "malformed", response.body, 0);
        }
        throw Error(ErrorCode::ProviderError, std::string("chat response: ") + e.what());
    } catch (const Error& e) {
        if (audit_ != nullptr) {
            audit_->record(provider, system_prefix, body, "http_" + std::to_string(response.status),
                           response.body, 0);
        }
        throw;
    }
    if (audit_ != nullptr) {
        audit_->record(provider, system_prefix, body, "ok", content, 0);
    }
    return content;
}

}  // namespace asdcap
