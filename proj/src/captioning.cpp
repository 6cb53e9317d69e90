#include "asdcap/captioning.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

#include "asdcap/error.hpp"

namespace asdcap {

std::string_view to_string(CaptionMethod m)
{
    switch (m) {
    case CaptionMethod::TextDecoder: return "text_decoder";
    case CaptionMethod::ZeroShot: return "zero_shot";
    case CaptionMethod::Hybrid: return "hybrid";
    }
    return "text_decoder";
}

CaptionMethod parse_caption_method(std::string_view text)
{
    if (text == "decoder" || text == "text_decoder") return CaptionMethod::TextDecoder;
    if (text == "zeroshot" || text == "zero_shot") return CaptionMethod::ZeroShot;
    if (text == "hybrid") return CaptionMethod::Hybrid;
    throw Error(ErrorCode::InvalidInput, "unknown caption method '" + std::string(text) + "'");
}

std::vector<CaptionRecord> fetch_sample_captions(std::span<const std::string> ids,
                                                 const EmbeddingStore& store,
                                                 DecoderProvider& decoder, std::string_view prefix)
{
    std::vector<CaptionRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const auto& record = store.at(id);
        try {
            out.push_back({id, decoder.decode_caption(record.embedding, std::string(prefix))});
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ProviderError || e.code() == ErrorCode::AuthError) {
                throw Error(e.code(), "caption for '" + id + "': " + e.what());
            }
            throw;
        } catch (const std::exception& e) {
            throw Error(ErrorCode::ProviderError, "caption for '" + id + "': " + e.what());
        }
    }
    return out;
}

namespace {

std::string join(std::span<const std::string> parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

std::string csv_quoted(std::string_view field)
{
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string header_cell(std::string_view text)
{
    if (text.find_first_of(",\"\r\n") != std::string_view::npos) {
        return csv_quoted(text);
    }
    return std::string(text);
}

std::string fixed4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s = buf;
    if (s == "-0.0000") {
        s = "0.0000";
    }
    return s;
}

void check_rows(const ScoredSound& anomaly, std::span<const ScoredSound> normals,
                std::span<const std::string> texts, bool need_captions)
{
    if (texts.empty()) {
        throw Error(ErrorCode::InvalidInput, "no reference texts");
    }
    if (normals.empty()) {
        throw Error(ErrorCode::InvalidInput, "at least one normal reference sound is required");
    }
    const auto check = [&](const ScoredSound& s) {
        if (s.similarities.size() != texts.size()) {
            throw Error(ErrorCode::InvalidInput,
                        "sound '" + s.sample_id + "' has " + std::to_string(s.similarities.size()) +
                            " similarities for " + std::to_string(texts.size()) + " texts");
        }
        for (double v : s.similarities) {
            if (!(v >= -1.0 && v <= 1.0)) {
                throw Error(ErrorCode::InvalidInput,
                            "similarity outside [-1, 1] for sound '" + s.sample_id + "'");
            }
        }
        if (need_captions && (!s.caption || s.caption->empty())) {
            throw Error(ErrorCode::InvalidInput, "sound '" + s.sample_id + "' has no caption");
        }
    };
    check(anomaly);
    for (const auto& n : normals) {
        check(n);
    }
}

PromptBundle scores_prompt(CaptionMethod method, std::string_view machine_name,
                           const ScoredSound& anomaly, std::span<const ScoredSound> normals,
                           std::span<const std::string> texts)
{
    const bool with_captions = method == CaptionMethod::Hybrid;
    check_rows(anomaly, normals, texts, with_captions);

    const auto row_of = [&](const ScoredSound& s) {
        return CsvRow{with_captions ? s.caption : std::nullopt, s.similarities};
    };
    const std::vector<CsvRow> anomaly_rows{row_of(anomaly)};
    std::vector<CsvRow> normal_rows;
    normal_rows.reserve(normals.size());
    for (const auto& n : normals) {
        normal_rows.push_back(row_of(n));
    }

    PromptBundle bundle;
    bundle.method = method;
    bundle.system_prefix = std::string(kSystemPrefix);
    bundle.machine_name = std::string(machine_name);
    bundle.anomaly_sample_id = anomaly.sample_id;
    for (const auto& n : normals) {
        bundle.neighbor_ids.push_back(n.sample_id);
    }

    const std::string machine(machine_name);
    bundle.body = "The acoustic features of the anomalous sound of " + machine + " are given as " +
                  format_scores_csv(texts, anomaly_rows) +
                  ". On the other hand, the acoustic features of the " +
                  std::to_string(normals.size()) + " normal sounds of " + machine +
                  " are given as " + format_scores_csv(texts, normal_rows);
    return bundle;
}

}  // namespace

PromptBundle build_text_decoder_prompt(std::string_view machine_name, const CaptionRecord& anomaly,
                                       std::span<const CaptionRecord> normals)
{
    if (normals.empty()) {
        throw Error(ErrorCode::InvalidInput, "at least one normal caption is required");
    }
    if (anomaly.caption.empty()) {
        throw Error(ErrorCode::InvalidInput, "anomalous sound caption is empty");
    }
    std::vector<std::string> captions;
    captions.reserve(normals.size());
    for (const auto& n : normals) {
        if (n.caption.empty()) {
            throw Error(ErrorCode::InvalidInput, "caption of '" + n.sample_id + "' is empty");
        }
        captions.push_back(n.caption);
    }

    PromptBundle bundle;
    bundle.method = CaptionMethod::TextDecoder;
    bundle.system_prefix = std::string(kSystemPrefix);
    bundle.machine_name = std::string(machine_name);
    bundle.anomaly_sample_id = anomaly.sample_id;
    for (const auto& n : normals) {
        bundle.neighbor_ids.push_back(n.sample_id);
    }

    const std::string machine(machine_name);
    bundle.body = "The caption of the anomalous sound of " + machine + " is given as: " +
                  anomaly.caption + ". On the other hand, the captions of the normal sounds of " +
                  machine + " are given as: " + join(captions, ", ") +
                  ". Please describe in broad strokes how this anomalous sound differs compared "
                  "to the normal sounds.";
    return bundle;
}

std::string format_scores_csv(std::span<const std::string> col_texts, std::span<const CsvRow> rows)
{
    const bool with_captions = !rows.empty() && rows.front().caption.has_value();
    std::string out;
    if (with_captions) {
        out += "caption,";
    }
    for (std::size_t l = 0; l < col_texts.size(); ++l) {
        if (l > 0) {
            out += ',';
        }
        out += header_cell(col_texts[l]);
    }
    for (const auto& row : rows) {
        if (row.caption.has_value() != with_captions) {
            throw Error(ErrorCode::InvalidInput, "caption column must be present in all rows or none");
        }
        if (row.values.size() != col_texts.size()) {
            throw Error(ErrorCode::InvalidInput, "row has " + std::to_string(row.values.size()) +
                                                     " values for " +
                                                     std::to_string(col_texts.size()) + " columns");
        }
        out += '\n';
        if (with_captions) {
            out += csv_quoted(*row.caption);
            out += ',';
        }
        for (std::size_t l = 0; l < row.values.size(); ++l) {
            if (!std::isfinite(row.values[l])) {
                throw Error(ErrorCode::InvalidInput, "non-finite similarity value");
            }
            if (l > 0) {
                out += ',';
            }
            out += fixed4(row.values[l]);
        }
    }
    return out;
}

PromptBundle build_zero_shot_prompt(std::string_view machine_name, const ScoredSound& anomaly,
                                    std::span<const ScoredSound> normals,
                                    std::span<const std::string> texts)
{
    return scores_prompt(CaptionMethod::ZeroShot, machine_name, anomaly, normals, texts);
}

PromptBundle build_hybrid_prompt(std::string_view machine_name, const ScoredSound& anomaly,
                                 std::span<const ScoredSound> normals,
                                 std::span<const std::string> texts)
{
    return scores_prompt(CaptionMethod::Hybrid, machine_name, anomaly, normals, texts);
}

std::size_t count_words(std::string_view text)
{
    std::size_t words = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return words;
}

std::vector<std::string> validate_response(std::string_view text)
{
    std::vector<std::string> flags;
    const auto first = text.find_first_not_of(" \t\r\n");
    const std::string_view trimmed = first == std::string_view::npos ? std::string_view{} : text.substr(first);
    if (!trimmed.starts_with(kResponsePrefix)) {
        flags.emplace_back("missing_prefix");
    }
    if (count_words(text) > kResponseWordLimit) {
        flags.emplace_back("over_word_limit");
    }
    return flags;
}

DifferenceCaption generate_difference_caption(const PromptBundle& bundle, LlmProvider& llm)
{
    DifferenceCaption out;
    try {
        out.text = llm.complete(bundle.system_prefix, bundle.body);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ProviderError, std::string("llm: ") + e.what());
    }
    out.validation_flags = validate_response(out.text);
    return out;
}

CaptionOutcome explain_sample(const SampleRecord& query, std::string_view machine_name,
                              const AnomalyScorer& scorer, std::optional<double> threshold,
                              CaptionMethod method, const CaptionProviders& providers)
{
    CaptionOutcome outcome;
    outcome.sample_id = query.sample_id;
    outcome.method = method;
    outcome.anomaly = scorer.score(query.embedding, query.sample_id);
    if (threshold) {
        outcome.anomaly = classify(std::move(outcome.anomaly), *threshold);
    }

    const bool use_captions = method != CaptionMethod::ZeroShot;
    const bool use_scores = method != CaptionMethod::TextDecoder;
    if (use_captions && providers.decoder == nullptr) {
        throw Error(ErrorCode::InvalidInput, "caption method needs a decoder provider");
    }
    if (use_scores && providers.texts == nullptr) {
        throw Error(ErrorCode::InvalidInput, "caption method needs reference texts");
    }
    if (providers.llm == nullptr) {
        throw Error(ErrorCode::InvalidInput, "caption method needs an LLM provider");
    }

    const std::vector<std::string> neighbor_ids = outcome.anomaly.neighbor_ids();
    const EmbeddingStore& refs = scorer.raw_references();

    try {
        std::optional<CaptionRecord> anomaly_caption;
        std::vector<CaptionRecord> normal_captions;
        if (use_captions) {
            anomaly_caption = CaptionRecord{
                query.sample_id,
                providers.decoder->decode_caption(query.embedding, std::string(kCaptionPrefix))};
            outcome.sample_captions.push_back(*anomaly_caption);
            normal_captions = fetch_sample_captions(neighbor_ids, refs, *providers.decoder);
            outcome.sample_captions.insert(outcome.sample_captions.end(), normal_captions.begin(),
                                           normal_captions.end());
            for (const auto& c : outcome.sample_captions) {
                if (!c.caption.starts_with(kCaptionPrefix)) {
                    outcome.validation_flags.push_back("caption_prefix:" + c.sample_id);
                }
            }
        }

        if (method == CaptionMethod::TextDecoder) {
            outcome.prompt = build_text_decoder_prompt(machine_name, *anomaly_caption, normal_captions);
        } else {
            std::vector<LabeledEmbedding> sounds;
            sounds.emplace_back(query.sample_id, query.embedding);
            for (const auto& id : neighbor_ids) {
                sounds.emplace_back(id, refs.at(id).embedding);
            }
            const SimilarityMatrix sims = similarity_matrix(sounds, *providers.texts);
            const auto sound_at = [&](std::size_t row) {
                ScoredSound s;
                s.sample_id = sims.row_ids[row];
                if (use_captions) {
                    s.caption = outcome.sample_captions[row].caption;
                }
                const auto r = sims.row(row);
                s.similarities.assign(r.begin(), r.end());
                return s;
            };
            const ScoredSound anomaly = sound_at(0);
            std::vector<ScoredSound> normals;
            for (std::size_t row = 1; row < sims.rows(); ++row) {
                normals.push_back(sound_at(row));
            }
            outcome.prompt = method == CaptionMethod::Hybrid
                                 ? build_hybrid_prompt(machine_name, anomaly, normals, sims.col_texts)
                                 : build_zero_shot_prompt(machine_name, anomaly, normals, sims.col_texts);
        }

        const DifferenceCaption caption = generate_difference_caption(*outcome.prompt, *providers.llm);
        outcome.llm_response = caption.text;
        outcome.validation_flags.insert(outcome.validation_flags.end(),
                                        caption.validation_flags.begin(),
                                        caption.validation_flags.end());
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ProviderError && e.code() != ErrorCode::AuthError) {
            throw;
        }
        outcome.error = e.what();
    }
    return outcome;
}

}  // namespace asdcap
