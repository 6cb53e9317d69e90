#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "asdcap/http_providers.hpp"
#include "asdcap/io.hpp"
#include "asdcap/zero_shot.hpp"
#include "test_support.hpp"

using namespace asdcap;
using asdcap::testing::code_of;
using asdcap::testing::make_record;
using nlohmann::json;

namespace {

std::string fixture(const std::string& name)
{
    return read_file(std::string(ASDCAP_FIXTURE_DIR) + "/http/" + name);
}

/// Local HTTP server replaying recorded sidecar and chat responses. Every
/// request is captured for inspection.
class PlaybackServer {
public:
    struct Request {
        std::string method;
        std::string path;
        std::string body;
        std::string authorization;
    };

    PlaybackServer()
    {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~PlaybackServer()
    {
        server_.stop();
        thread_.join();
    }

    void get(const std::string& path, int status, std::string body)
    {
        server_.Get(path, recorded(canned(status, std::move(body))));
    }
    void post(const std::string& path, int status, std::string body)
    {
        server_.Post(path, recorded(canned(status, std::move(body))));
    }
    void post(const std::string& path, httplib::Server::Handler handler)
    {
        server_.Post(path, recorded(std::move(handler)));
    }

    std::string url(const std::string& suffix = "") const
    {
        return "http://127.0.0.1:" + std::to_string(port_) + suffix;
    }
    std::vector<Request> requests() const
    {
        std::lock_guard lock(mutex_);
        return requests_;
    }

private:
    static httplib::Server::Handler canned(int status, std::string body)
    {
        return [status, body](const httplib::Request&, httplib::Response& res) {
            res.status = status;
            res.set_content(body, "application/json");
        };
    }

    // Recorded before responding so the record exists once the client returns.
    httplib::Server::Handler recorded(httplib::Server::Handler handler)
    {
        return [this, handler](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard lock(mutex_);
                requests_.push_back({req.method, req.path, req.body, req.get_header_value("Authorization")});
            }
            handler(req, res);
        };
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    mutable std::mutex mutex_;
    std::vector<Request> requests_;
};

ProviderConfig http_config(const std::string& url)
{
    ProviderConfig c;
    c.kind = ProviderKind::Http;
    c.base_url = url;
    c.timeout = std::chrono::milliseconds(2000);
    c.max_retries = 1;
    return c;
}

/// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
public:
    EnvGuard(std::string name, const char* value) : name_(std::move(name))
    {
        if (value) ::setenv(name_.c_str(), value, 1);
        else ::unsetenv(name_.c_str());
    }
    ~EnvGuard() { ::unsetenv(name_.c_str()); }

private:
    std::string name_;
};

/// A TCP port on localhost that nothing listens on.
int closed_port()
{
    httplib::Server probe;
    return probe.bind_to_any_port("127.0.0.1");
}

}  // namespace

TEST(MockEmbedding, DeterministicUnitVectors)
{
    MockEmbeddingProvider a(32);
    MockEmbeddingProvider b(32);
    EXPECT_EQ(a.dimension(), 32u);
    EXPECT_EQ(a.embed_audio("pump/train/x.wav"), b.embed_audio("pump/train/x.wav"));
    EXPECT_FALSE(a.embed_audio("x") == a.embed_audio("y"));
    EXPECT_FALSE(a.embed_audio("x") == a.embed_text("x"));
    for (const auto& t : default_reference_texts()) {
        EXPECT_NEAR(l2_norm(a.embed_text(t).values()), 1.0, 1e-6);
    }
    std::set<std::vector<float>> distinct;
    for (const auto& t : default_reference_texts()) {
        const auto e = a.embed_text(t);
        distinct.emplace(e.values().begin(), e.values().end());
    }
    EXPECT_EQ(distinct.size(), 8u);
    EXPECT_EQ(code_of([] { MockEmbeddingProvider bad(0); }), ErrorCode::InvalidInput);
}

TEST(MockDecoder, PrefixedStableCaption)
{
    MockDecoderProvider decoder;
    const Embedding e({0.25f, 0.5f});
    const auto caption = decoder.decode_caption(e, "Sounds like");
    EXPECT_TRUE(caption.starts_with("Sounds like sample-"));
    EXPECT_EQ(caption.size(), std::string("Sounds like sample-").size() + 8);
    EXPECT_EQ(caption, decoder.decode_caption(e, "Sounds like"));
    EXPECT_NE(caption, decoder.decode_caption(Embedding({0.5f, 0.25f}), "Sounds like"));
    EXPECT_TRUE(decoder.decode_caption(e, "").starts_with("sample-"));
}

TEST(MockLlm, EchoesTheBodyWithTheExpectedPrefix)
{
    std::ostringstream log;
    AuditTrail audit(log);
    MockLlmProvider llm(&audit);
    EXPECT_EQ(llm.complete("sys", "one two three"), "This sound is one two three");
    const auto line = json::parse(log.str());
    EXPECT_EQ(line.at("outcome"), "ok");
    EXPECT_EQ(line.at("user"), "one two three");
    EXPECT_EQ(line.at("system"), "sys");
}

TEST(FileEmbedding, LooksUpBySourcePathOrId)
{
    const EmbeddingStore store(2, {make_record("pump/train/a", {1, 0}), make_record("Vibration", {0, 1})});
    FileEmbeddingProvider provider(store);
    EXPECT_EQ(provider.dimension(), 2u);
    EXPECT_EQ(provider.embed_audio("pump/train/a.wav"), Embedding({1, 0}));
    EXPECT_EQ(provider.embed_audio("pump/train/a"), Embedding({1, 0}));
    EXPECT_EQ(provider.embed_text("Vibration"), Embedding({0, 1}));
    EXPECT_EQ(code_of([&] { provider.embed_audio("missing.wav"); }), ErrorCode::NotFound);
    EXPECT_EQ(code_of([&] { provider.embed_text("Grinding Sounds"); }), ErrorCode::NotFound);
}

TEST(FileEmbedding, ReadsAManifestFromDisk)
{
    asdcap::testing::TempDir dir;
    const EmbeddingStore store(2, {make_record("a", {1, 2})});
    save_store(store, dir / "emb.json");
    ProviderConfig config;
    config.kind = ProviderKind::File;
    config.store_path = dir / "emb.json";
    auto provider = make_embedding_provider(config);
    EXPECT_EQ(provider->embed_audio("a.wav"), Embedding({1, 2}));
}

TEST(ProviderFactories, ValidateTheirConfig)
{
    ProviderConfig http;
    http.kind = ProviderKind::Http;
    EXPECT_EQ(code_of([&] { make_embedding_provider(http); }), ErrorCode::InvalidInput);
    ProviderConfig file;
    file.kind = ProviderKind::File;
    EXPECT_EQ(code_of([&] { make_embedding_provider(file); }), ErrorCode::InvalidInput);
    file.store_path = "x.json";
    EXPECT_EQ(code_of([&] { make_decoder_provider(file); }), ErrorCode::InvalidInput);
    EXPECT_EQ(code_of([&] { make_llm_provider(file); }), ErrorCode::InvalidInput);
    http.base_url = "localhost:8000";
    EXPECT_EQ(code_of([&] { make_embedding_provider(http); }), ErrorCode::InvalidInput);
    EXPECT_EQ(parse_provider_kind("mock"), ProviderKind::Mock);
    EXPECT_EQ(code_of([] { parse_provider_kind("grpc"); }), ErrorCode::InvalidInput);
}

TEST(HttpEmbedding, PlaysBackSidecarResponses)
{
    PlaybackServer server;
    server.get("/info", 200, fixture("info.json"));
    server.post("/embed/audio", 200, fixture("embed_audio.json"));
    server.post("/embed/text", 200, fixture("embed_text.json"));
    HttpEmbeddingProvider provider(http_config(server.url()));

    EXPECT_EQ(provider.dimension(), 4u);
    EXPECT_NE(provider.name().find("clap-htsat-fused"), std::string::npos);
    EXPECT_EQ(provider.embed_audio("/data/pump/train/a.wav"), Embedding({0.5f, -0.5f, 0.5f, -0.5f}));
    EXPECT_EQ(provider.embed_text("Vibration"), Embedding({0.0f, 1.0f, 0.0f, 0.0f}));

    const auto requests = server.requests();
    ASSERT_EQ(requests.size(), 3u);
    EXPECT_EQ(requests[1].path, "/embed/audio");
    EXPECT_EQ(json::parse(requests[1].body), json({{"path", "/data/pump/train/a.wav"}}));
    EXPECT_EQ(json::parse(requests[2].body), json({{"text", "Vibration"}}));
}

TEST(HttpEmbedding, BaseUrlPathPrefixIsKept)
{
    PlaybackServer server;
    server.post("/v1/embed/text", 200, fixture("embed_text.json"));
    HttpEmbeddingProvider provider(http_config(server.url("/v1/")));
    EXPECT_EQ(provider.embed_text("x").dim(), 4u);
}

TEST(HttpEmbedding, DimensionDriftIsRejected)
{
    PlaybackServer server;
    server.post("/embed/audio", 200, fixture("embed_audio.json"));
    server.post("/embed/text", 200, fixture("embed_drift.json"));
    HttpEmbeddingProvider provider(http_config(server.url()));
    EXPECT_EQ(provider.embed_audio("a.wav").dim(), 4u);
    EXPECT_EQ(code_of([&] { provider.embed_text("Vibration"); }), ErrorCode::DimensionMismatch);
}

TEST(HttpEmbedding, ErrorStatusesMapToErrorCodes)
{
    PlaybackServer server;
    server.post("/embed/audio", 404, R"({"error": "file not found"})");
    server.post("/embed/text", 500, R"({"error": "model crashed"})");
    server.get("/info", 200, R"({"model_name": "x"})");
    HttpEmbeddingProvider provider(http_config(server.url()));
    EXPECT_EQ(code_of([&] { provider.embed_audio("a.wav"); }), ErrorCode::NotFound);
    EXPECT_EQ(code_of([&] { provider.embed_text("t"); }), ErrorCode::ProviderError);
    EXPECT_EQ(code_of([&] { provider.dimension(); }), ErrorCode::ProviderError);
}

TEST(HttpEmbedding, MalformedBodyIsAProviderError)
{
    PlaybackServer server;
    server.post("/embed/audio", 200, "not json");
    server.post("/embed/text", 200, R"({"embedding": [1.0, "x"]})");
    HttpEmbeddingProvider provider(http_config(server.url()));
    EXPECT_EQ(code_of([&] { provider.embed_audio("a.wav"); }), ErrorCode::ProviderError);
    EXPECT_EQ(code_of([&] { provider.embed_text("t"); }), ErrorCode::ProviderError);
}

TEST(HttpDecoder, SendsEmbeddingAndPrefix)
{
    PlaybackServer server;
    server.post("/decode", 200, fixture("decode.json"));
    HttpDecoderProvider decoder(http_config(server.url()));
    EXPECT_EQ(decoder.decode_caption(Embedding({0.5f, 0.25f}), "Sounds like"),
              "Sounds like a pump running with water flowing");
    const auto request = json::parse(server.requests().at(0).body);
    EXPECT_EQ(request.at("prefix"), "Sounds like");
    EXPECT_EQ(request.at("embedding"), json({0.5, 0.25}));
}

TEST(HttpLlm, ExtractsTheFirstChoiceAndSendsTheKey)
{
    PlaybackServer server;
    server.post("/v1/chat/completions", 200, fixture("chat_completion.json"));
    const EnvGuard key("ASDCAP_TEST_KEY", "sk-test-123");
    auto config = http_config(server.url("/v1"));
    config.api_key_env = "ASDCAP_TEST_KEY";
    config.model_name = "gpt-4o";
    std::ostringstream log;
    AuditTrail audit(log);
    HttpLlmProvider llm(config, &audit);

    EXPECT_EQ(llm.complete("system text", "user text"),
              "This sound is louder and has a metallic clanking absent from the normal sounds.");
    const auto requests = server.requests();
    ASSERT_EQ(requests.size(), 1u);
    EXPECT_EQ(requests[0].authorization, "Bearer sk-test-123");
    const auto body = json::parse(requests[0].body);
    EXPECT_EQ(body.at("model"), "gpt-4o");
    EXPECT_EQ(body.at("messages").at(0).at("role"), "system");
    EXPECT_EQ(body.at("messages").at(0).at("content"), "system text");
    EXPECT_EQ(body.at("messages").at(1).at("role"), "user");
    EXPECT_EQ(body.at("messages").at(1).at("content"), "user text");

    const auto line = json::parse(log.str());
    EXPECT_EQ(line.at("outcome"), "ok");
    EXPECT_EQ(line.at("system"), "system text");
}

TEST(HttpLlm, MissingKeyFailsBeforeAnyRequest)
{
    PlaybackServer server;
    server.post("/chat/completions", 200, fixture("chat_completion.json"));
    const EnvGuard key("ASDCAP_TEST_KEY_UNSET", nullptr);
    auto config = http_config(server.url());
    config.api_key_env = "ASDCAP_TEST_KEY_UNSET";
    HttpLlmProvider llm(config);
    EXPECT_EQ(code_of([&] { llm.complete("s", "b"); }), ErrorCode::AuthError);
    EXPECT_TRUE(server.requests().empty());
}

TEST(HttpLlm, UnauthorizedIsAnAuthError)
{
    PlaybackServer server;
    server.post("/chat/completions", 401, fixture("unauthorized.json"));
    const EnvGuard key("ASDCAP_TEST_KEY", "sk-wrong");
    auto config = http_config(server.url());
    config.api_key_env = "ASDCAP_TEST_KEY";
    std::ostringstream log;
    AuditTrail audit(log);
    HttpLlmProvider llm(config, &audit);
    try {
        llm.complete("s", "b");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::AuthError);
        EXPECT_NE(std::string(e.what()).find("Incorrect API key"), std::string::npos);
    }
    EXPECT_EQ(json::parse(log.str()).at("outcome"), "http_401");
}

TEST(HttpLlm, MalformedCompletionIsAProviderError)
{
    PlaybackServer server;
    server.post("/chat/completions", 200, R"({"choices": []})");
    HttpLlmProvider llm(http_config(server.url()));
    EXPECT_EQ(code_of([&] { llm.complete("s", "b"); }), ErrorCode::ProviderError);
    EXPECT_TRUE(server.requests().at(0).authorization.empty());
}

TEST(HttpTransport, RetriesTransportFailuresThenGivesUp)
{
    auto config = http_config("http://127.0.0.1:" + std::to_string(closed_port()));
    config.max_retries = 2;
    config.timeout = std::chrono::milliseconds(500);
    std::ostringstream log;
    AuditTrail audit(log);
    HttpLlmProvider llm(config, &audit);
    EXPECT_EQ(code_of([&] { llm.complete("s", "b"); }), ErrorCode::ProviderError);

    std::istringstream lines(log.str());
    std::string line;
    std::vector<int> attempts;
    while (std::getline(lines, line)) {
        const auto j = json::parse(line);
        EXPECT_EQ(j.at("outcome"), "transport_error");
        attempts.push_back(j.at("attempt").get<int>());
    }
    EXPECT_EQ(attempts, (std::vector<int>{1, 2, 3}));
}

TEST(HttpTransport, BoundsRequestsInFlight)
{
    PlaybackServer server;
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
    server.post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int now = ++active;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        --active;
        res.set_content(fixture("chat_completion.json"), "application/json");
    });
    auto config = http_config(server.url());
    config.max_in_flight = 2;
    HttpLlmProvider llm(config);
    std::vector<std::jthread> workers;
    for (int i = 0; i < 6; ++i) {
        workers.emplace_back([&] { llm.complete("s", "b"); });
    }
    workers.clear();
    EXPECT_EQ(server.requests().size(), 6u);
    EXPECT_LE(peak.load(), 2);
}
