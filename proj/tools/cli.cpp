#include "asdcap/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "asdcap/anomaly.hpp"
#include "asdcap/captioning.hpp"
#include "asdcap/dcase.hpp"
#include "asdcap/embedding_store.hpp"
#include "asdcap/error.hpp"
#include "asdcap/evaluation.hpp"
#include "asdcap/io.hpp"
#include "asdcap/parallel.hpp"
#include "asdcap/providers.hpp"
#include "asdcap/zero_shot.hpp"

namespace asdcap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Settings merged from the optional config file and flags (flags win).
struct RunConfig {
    std::string train;
    std::string test;
    std::string input;
    std::string out;
    std::string method = "decoder";
    std::string texts;
    bool only_anomalous = false;

    ScoringConfig scoring;

    std::string provider = "http";
    std::string base_url;
    std::string provider_store;
    std::size_t mock_dim = 64;
    std::string decoder_provider;
    std::string llm_provider;
    std::string llm_base_url;
    std::string llm_model = "gpt-4";
    std::string api_key_env = "OPENAI_API_KEY";
    double timeout_s = 60.0;
    int max_retries = 2;
    std::size_t max_in_flight = 4;
    std::string audit_log;

    /// Echoed into every artifact. Output paths are left out so that two
    /// runs writing to different places produce identical files.
    json echo(std::string_view command) const
    {
        json j = {{"command", command},
                  {"k", scoring.k},
                  {"threshold_percentile", scoring.threshold_percentile},
                  {"normalize_embeddings", scoring.normalize_embeddings},
                  {"provider", provider}};
        if (!base_url.empty()) j["base_url"] = base_url;
        if (!provider_store.empty()) j["provider_store"] = provider_store;
        if (provider == "mock") j["mock_dim"] = mock_dim;
        if (!train.empty()) j["train"] = train;
        if (!test.empty()) j["test"] = test;
        if (!input.empty()) j["input"] = input;
        if (command == "caption") {
            j["method"] = std::string(to_string(parse_caption_method(method)));
            j["texts"] = texts.empty() ? "default" : texts;
            j["only_anomalous"] = only_anomalous;
            j["decoder_provider"] = decoder_kind();
            j["llm_provider"] = llm_kind();
            j["llm_model"] = llm_model;
            if (!llm_base_url.empty()) j["llm_base_url"] = llm_base_url;
            j["system_prefix"] = std::string(kSystemPrefix);
            j["caption_prefix"] = std::string(kCaptionPrefix);
        }
        return j;
    }

    std::string decoder_kind() const
    {
        if (!decoder_provider.empty()) return decoder_provider;
        return provider == "mock" ? "mock" : "http";
    }

    std::string llm_kind() const
    {
        if (!llm_provider.empty()) return llm_provider;
        return provider == "mock" ? "mock" : "http";
    }

    ProviderConfig base_provider(std::string_view kind) const
    {
        ProviderConfig c;
        c.kind = parse_provider_kind(kind);
        if (!base_url.empty()) c.base_url = base_url;
        if (!provider_store.empty()) c.store_path = provider_store;
        c.mock_dim = mock_dim;
        c.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
        c.max_retries = max_retries;
        c.max_in_flight = max_in_flight;
        return c;
    }

    ProviderConfig embedding_config() const { return base_provider(provider); }
    ProviderConfig decoder_config() const { return base_provider(decoder_kind()); }

    ProviderConfig llm_config() const
    {
        ProviderConfig c = base_provider(llm_kind());
        c.base_url.reset();
        if (!llm_base_url.empty()) c.base_url = llm_base_url;
        if (!api_key_env.empty()) c.api_key_env = api_key_env;
        c.model_name = llm_model;
        return c;
    }
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ProviderError:
    case ErrorCode::AuthError: return kProvider;
    default: return kData;
    }
}

void emit(const RunConfig& cfg, const std::string& text, std::ostream& out)
{
    if (cfg.out.empty()) {
        out << text;
    } else {
        write_file_atomic(cfg.out, text);
    }
}

// ---------------------------------------------------------------------------
// Reference selection shared by score and caption.

struct ReferenceKey {
    std::optional<std::string> machine_type;
    std::optional<std::string> machine_id;
    auto operator<=>(const ReferenceKey&) const = default;
};

ReferenceKey key_for(const SampleRecord& query)
{
    ReferenceKey key;
    if (!query.machine_type.empty()) key.machine_type = query.machine_type;
    if (!query.machine_id.empty()) key.machine_id = query.machine_id;
    return key;
}

struct ReferenceSet {
    AnomalyScorer scorer;
    std::optional<double> threshold;
};

/// One scorer (and calibrated threshold, when the set allows it) per
/// machine type / ID that appears among the queries.
std::map<ReferenceKey, ReferenceSet> build_reference_sets(const EmbeddingStore& train,
                                                          std::span<const SampleRecord> queries,
                                                          const ScoringConfig& config)
{
    std::map<ReferenceKey, ReferenceSet> sets;
    for (const auto& q : queries) {
        const ReferenceKey key = key_for(q);
        if (sets.contains(key)) {
            continue;
        }
        EmbeddingStore refs = train.filter({.machine_type = key.machine_type,
                                            .machine_id = key.machine_id,
                                            .split = Split::Train,
                                            .label = Label::Normal});
        if (refs.size() < config.k) {
            throw Error(ErrorCode::InsufficientReferences,
                        "k=" + std::to_string(config.k) + " but only " + std::to_string(refs.size()) +
                            " normal training records match '" + q.sample_id + "'");
        }
        AnomalyScorer scorer(std::move(refs), config);
        std::optional<double> threshold;
        if (scorer.references().size() >= config.k + 1) {
            threshold = scorer.calibrate();
        }
        sets.emplace(key, ReferenceSet{std::move(scorer), threshold});
    }
    return sets;
}

/// Embedding provider created on first use; commands that read everything
/// from manifests never contact it.
class LazyEmbedder {
public:
    explicit LazyEmbedder(const RunConfig& cfg) : cfg_(cfg) {}

    EmbeddingProvider& get()
    {
        if (!provider_) {
            provider_ = make_embedding_provider(cfg_.embedding_config());
        }
        return *provider_;
    }

private:
    const RunConfig& cfg_;
    std::unique_ptr<EmbeddingProvider> provider_;
};

/// Queries named by --input (a sample id of --test, or an audio path) or, with
/// no --input, every test-split record of --test.
std::vector<SampleRecord> resolve_queries(const RunConfig& cfg, std::size_t train_dim,
                                          LazyEmbedder& embedder)
{
    std::optional<EmbeddingStore> test;
    if (!cfg.test.empty()) {
        test = load_store(cfg.test);
    }
    std::vector<SampleRecord> queries;
    if (cfg.input.empty()) {
        if (!test) {
            throw UsageError("either --input or --test is required");
        }
        for (const auto& r : test->records()) {
            if (r.split == Split::Test) queries.push_back(r);
        }
    } else if (test && test->find(cfg.input) != nullptr) {
        queries.push_back(test->at(cfg.input));
    } else {
        SampleRecord r;
        const fs::path path(cfg.input);
        fs::path tail;
        std::vector<fs::path> parts(path.begin(), path.end());
        if (parts.size() >= 3) {
            tail = parts[parts.size() - 3] / parts[parts.size() - 2] / parts.back();
        }
        if (auto parsed = dcase_record_for(tail)) {
            r = std::move(*parsed);
        } else {
            r.sample_id = cfg.input;
            r.split = Split::Test;
        }
        r.source_path = cfg.input;
        r.embedding = embedder.get().embed_audio(cfg.input);
        queries.push_back(std::move(r));
    }
    for (const auto& q : queries) {
        require_same_dim(q.embedding.dim(), train_dim, "query vs training store");
    }
    return queries;
}

json result_json(const SampleRecord& q, const AnomalyResult& r)
{
    json distances = json::array();
    for (const auto& n : r.neighbors) distances.push_back(n.distance);
    return {{"sample_id", q.sample_id},
            {"machine_type", q.machine_type},
            {"machine_id", q.machine_id},
            {"label", to_string(q.label)},
            {"score", r.score},
            {"neighbor_ids", r.neighbor_ids()},
            {"neighbor_distances", distances},
            {"threshold", r.threshold ? json(*r.threshold) : json(nullptr)},
            {"decision", to_string(r.decision)}};
}

// ---------------------------------------------------------------------------

int cmd_index(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    if (cfg.input.empty() || cfg.out.empty()) {
        throw UsageError("index needs --input <dataset dir> and --out <manifest>");
    }
    const fs::path root(cfg.input);
    if (!fs::is_directory(root)) {
        throw Error(ErrorCode::NotFound, "input directory " + root.string() + " does not exist");
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".wav") files.push_back(fs::relative(entry.path(), root));
    }
    std::sort(files.begin(), files.end());

    LazyEmbedder embedder(cfg);
    EmbeddingProvider& provider = embedder.get();
    struct Slot {
        std::optional<SampleRecord> record;
        std::string skip_reason;
        bool provider_failure = false;
    };
    std::vector<Slot> slots(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        auto record = dcase_record_for(files[i]);
        if (!record) {
            slots[i].skip_reason = "file name does not follow <type>/<train|test>/<normal|anomaly>_id_NN_NNNNNNNN.wav";
            return;
        }
        try {
            record->embedding = provider.embed_audio((root / files[i]).string());
            slots[i].record = std::move(record);
        } catch (const Error& e) {
            slots[i].skip_reason = e.what();
            slots[i].provider_failure = true;
        }
    }, cfg.max_in_flight);

    std::vector<SampleRecord> records;
    json skipped = json::array();
    bool data_failure = false;
    bool provider_failure = false;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (slots[i].record) {
            records.push_back(std::move(*slots[i].record));
        } else {
            skipped.push_back({{"path", files[i].generic_string()}, {"reason", slots[i].skip_reason}});
            (slots[i].provider_failure ? provider_failure : data_failure) = true;
            err << "skipped " << files[i].generic_string() << ": " << slots[i].skip_reason << '\n';
        }
    }
    if (files.empty()) {
        err << "warning: no .wav files under " << root.string() << '\n';
    }

    const std::size_t dim = records.empty() ? provider.dimension() : records.front().embedding.dim();
    const EmbeddingStore store(dim, std::move(records));
    json provenance = cfg.echo("index");
    provenance["embedding_provider"] = provider.name();
    const StoreManifest manifest = save_store(store, cfg.out, provenance.dump());

    const json summary = {{"manifest", fs::path(cfg.out).filename().string()},
                          {"count", manifest.count},
                          {"dim", manifest.dim},
                          {"skipped", skipped}};
    out << summary.dump(2) << '\n';
    if (provider_failure) return kProvider;
    if (data_failure) return kData;
    return kOk;
}

int cmd_score(const RunConfig& cfg, std::ostream& out, std::ostream&)
{
    if (cfg.train.empty()) {
        throw UsageError("score needs --train <manifest>");
    }
    const EmbeddingStore train = load_store(cfg.train);
    LazyEmbedder embedder(cfg);
    const auto queries = resolve_queries(cfg, train.dim(), embedder);
    const auto sets = build_reference_sets(train, queries, cfg.scoring);

    std::vector<json> results(queries.size());
    parallel_for(queries.size(), [&](std::size_t i) {
        const auto& set = sets.at(key_for(queries[i]));
        AnomalyResult r = set.scorer.score(queries[i].embedding, queries[i].sample_id);
        if (set.threshold) r = classify(std::move(r), *set.threshold);
        results[i] = result_json(queries[i], r);
    });

    const json doc = {{"config", cfg.echo("score")}, {"results", results}};
    emit(cfg, doc.dump(2) + "\n", out);
    return kOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream&)
{
    if (cfg.train.empty() || cfg.test.empty()) {
        throw UsageError("evaluate needs --train and --test manifests");
    }
    const EmbeddingStore train = load_store(cfg.train);
    const EmbeddingStore test = load_store(cfg.test);
    EvaluationReport report = evaluate_machine(train, test, cfg.scoring);

    std::string provider = "unknown";
    if (const json m = json::parse(read_file(cfg.train)); m.contains("provenance")) {
        provider = m["provenance"].value("embedding_provider", provider);
    }
    report.provider = provider;

    std::ostringstream csv;
    write_report_csv(report, csv);
    emit(cfg, csv.str(), out);
    return kOk;
}

int cmd_caption(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    if (cfg.train.empty()) {
        throw UsageError("caption needs --train <manifest>");
    }
    const CaptionMethod method = parse_caption_method(cfg.method);
    if (cfg.llm_kind() == "http" && cfg.llm_base_url.empty()) {
        throw UsageError("an http LLM provider needs --llm-base-url");
    }
    const EmbeddingStore train = load_store(cfg.train);
    LazyEmbedder embedder(cfg);
    const auto queries = resolve_queries(cfg, train.dim(), embedder);
    const auto sets = build_reference_sets(train, queries, cfg.scoring);

    std::ofstream audit_file;
    std::optional<AuditTrail> audit;
    if (!cfg.audit_log.empty()) {
        audit_file.open(cfg.audit_log, std::ios::app);
        if (!audit_file) throw Error(ErrorCode::StorageError, "cannot open audit log " + cfg.audit_log);
        audit.emplace(audit_file);
    }

    std::unique_ptr<DecoderProvider> decoder;
    if (method != CaptionMethod::ZeroShot) {
        decoder = make_decoder_provider(cfg.decoder_config());
    }
    const auto llm = make_llm_provider(cfg.llm_config(), audit ? &*audit : nullptr);

    std::optional<ReferenceTextSet> texts;
    if (method != CaptionMethod::TextDecoder) {
        std::vector<std::string> lines =
            cfg.texts.empty() ? default_reference_texts() : load_reference_texts(cfg.texts);
        texts = embed_reference_texts(std::move(lines), embedder.get());
        require_same_dim(texts->dim(), train.dim(), "reference text embeddings vs store");
    }
    const CaptionProviders providers{decoder.get(), llm.get(), texts ? &*texts : nullptr};

    std::vector<std::optional<json>> records(queries.size());
    std::vector<int> failed(queries.size(), 0);
    parallel_for(queries.size(), [&](std::size_t i) {
        const auto& q = queries[i];
        const auto& set = sets.at(key_for(q));
        if (cfg.only_anomalous) {
            AnomalyResult pre = set.scorer.score(q.embedding, q.sample_id);
            if (!set.threshold || classify(pre, *set.threshold).decision != Decision::Anomalous) {
                return;
            }
        }
        const std::string machine = q.machine_type.empty() ? "machine" : q.machine_type;
        const CaptionOutcome o = explain_sample(q, machine, set.scorer, set.threshold, method, providers);

        json captions = json::array();
        for (const auto& c : o.sample_captions) {
            captions.push_back({{"sample_id", c.sample_id}, {"caption", c.caption}});
        }
        json rec = {{"sample_id", o.sample_id},
                    {"method", to_string(o.method)},
                    {"machine_type", q.machine_type},
                    {"machine_id", q.machine_id},
                    {"anomaly_score", o.anomaly.score},
                    {"threshold", o.anomaly.threshold ? json(*o.anomaly.threshold) : json(nullptr)},
                    {"decision", to_string(o.anomaly.decision)},
                    {"neighbor_ids", o.anomaly.neighbor_ids()},
                    {"sample_captions", captions},
                    {"system_prefix", o.prompt ? json(o.prompt->system_prefix) : json(nullptr)},
                    {"prompt_body", o.prompt ? json(o.prompt->body) : json(nullptr)},
                    {"llm_response", o.llm_response ? json(*o.llm_response) : json(nullptr)},
                    {"validation_flags", o.validation_flags}};
        if (o.error) {
            rec["error"] = *o.error;
            failed[i] = 1;
        }
        records[i] = std::move(rec);
    }, cfg.max_in_flight);

    json list = json::array();
    for (auto& r : records) {
        if (r) list.push_back(std::move(*r));
    }
    json echo = cfg.echo("caption");
    if (texts) echo["reference_texts"] = texts->texts();
    echo["llm_provider_name"] = llm->name();
    const json doc = {{"config", echo}, {"records", list}};
    emit(cfg, doc.dump(2) + "\n", out);

    const auto n_failed = std::count(failed.begin(), failed.end(), 1);
    if (n_failed > 0) {
        err << n_failed << " sample(s) failed at a provider; see the \"error\" fields\n";
        return kProvider;
    }
    return kOk;
}

void add_options(CLI::App& app, RunConfig& cfg)
{
    app.add_option("--train", cfg.train, "Training-split store manifest");
    app.add_option("--test", cfg.test, "Test-split store manifest");
    app.add_option("--input", cfg.input,
                   "index: dataset root; score/caption: sample id in --test or an audio path");
    app.add_option("--out", cfg.out, "Output file (stdout when omitted, except for index)");
    app.add_option("--k", cfg.scoring.k, "Number of nearest neighbors")->capture_default_str();
    app.add_option("--threshold-percentile", cfg.scoring.threshold_percentile,
                   "Leave-one-out percentile used as the decision threshold")
        ->capture_default_str();
    app.add_flag("--normalize-embeddings", cfg.scoring.normalize_embeddings,
                 "L2-normalize embeddings before the k-NN search");
    app.add_option("--method", cfg.method, "decoder | zeroshot | hybrid")->capture_default_str();
    app.add_option("--texts", cfg.texts, "Reference texts, one per line (default: built-in 8)");
    app.add_flag("--only-anomalous", cfg.only_anomalous,
                 "caption: skip samples not classified anomalous");
    app.add_option("--provider", cfg.provider, "Embedding provider: file | http | mock")
        ->check(CLI::IsMember({"file", "http", "mock"}))
        ->capture_default_str();
    app.add_option("--base-url", cfg.base_url, "Sidecar base URL");
    app.add_option("--provider-store", cfg.provider_store, "Manifest backing --provider file");
    app.add_option("--mock-dim", cfg.mock_dim, "Embedding dimension of the mock provider")
        ->capture_default_str();
    app.add_option("--decoder-provider", cfg.decoder_provider, "Caption decoder: http | mock")
        ->check(CLI::IsMember({"http", "mock"}));
    app.add_option("--llm-provider", cfg.llm_provider, "LLM: http | mock")
        ->check(CLI::IsMember({"http", "mock"}));
    app.add_option("--llm-base-url", cfg.llm_base_url, "Chat-completions base URL");
    app.add_option("--llm-model", cfg.llm_model, "Chat model name")->capture_default_str();
    app.add_option("--api-key-env", cfg.api_key_env, "Environment variable holding the LLM API key")
        ->capture_default_str();
    app.add_option("--timeout", cfg.timeout_s, "Provider timeout in seconds")->capture_default_str();
    app.add_option("--max-retries", cfg.max_retries, "Retries on transport failure")->capture_default_str();
    app.add_option("--max-in-flight", cfg.max_in_flight, "Concurrent provider requests")
        ->capture_default_str();
    app.add_option("--audit-log", cfg.audit_log, "Append LLM requests/responses as JSON lines");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Training-free anomalous sound detection and difference captioning", "asdcap"};
    app.set_config("--config", "", "TOML/INI file with option defaults; flags override it");
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig cfg;
    add_options(app, cfg);
    auto* index = app.add_subcommand("index", "Embed a DCASE-style dataset into a store");
    auto* score = app.add_subcommand("score", "Anomaly score of test samples");
    auto* evaluate = app.add_subcommand("evaluate", "Per machine ID ROC-AUC report");
    auto* caption = app.add_subcommand("caption", "Difference caption for test samples");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        cfg.scoring.validate();
        if (caption->parsed()) parse_caption_method(cfg.method);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (index->parsed()) return cmd_index(cfg, out, err);
        if (score->parsed()) return cmd_score(cfg, out, err);
        if (evaluate->parsed()) return cmd_evaluate(cfg, out, err);
        if (caption->parsed()) return cmd_caption(cfg, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}

}  // namespace asdcap::cli
