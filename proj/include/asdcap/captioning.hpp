#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asdcap/anomaly.hpp"
#include "asdcap/embedding_store.hpp"
#include "asdcap/providers.hpp"
#include "asdcap/zero_shot.hpp"

namespace asdcap {

/// Instruction prepended to every difference-caption request.
inline constexpr std::string_view kSystemPrefix =
    "You are comparing machine sounds. Begin your output sentence with \"This sound is\" "
    "and finish it within 40 words.";

inline constexpr std::string_view kResponsePrefix = "This sound is";
inline constexpr std::size_t kResponseWordLimit = 40;

/// Forced prefix for per-sample decoder captions.
inline constexpr std::string_view kCaptionPrefix = "Sounds like";

enum class CaptionMethod { TextDecoder, ZeroShot, Hybrid };

std::string_view to_string(CaptionMethod m);
/// Accepts "decoder"/"text_decoder", "zeroshot"/"zero_shot", "hybrid".
CaptionMethod parse_caption_method(std::string_view text);

struct PromptBundle {
    CaptionMethod method = CaptionMethod::TextDecoder;
    std::string system_prefix;
    std::string body;
    std::string machine_name;
    std::string anomaly_sample_id;
    std::vector<std::string> neighbor_ids;
};

struct CaptionRecord {
    std::string sample_id;
    std::string caption;
};

/// One sound in a zero-shot or hybrid prompt: its similarity row and, for the
/// hybrid layout, its decoder caption.
struct ScoredSound {
    std::string sample_id;
    std::optional<std::string> caption;
    std::vector<double> similarities;
};

struct CsvRow {
    std::optional<std::string> caption;
    std::vector<double> values;
};

/// Captions for stored embeddings, in id order. Throws NotFound for an id
/// missing from the store and ProviderError (naming the id) on decoder failure.
std::vector<CaptionRecord> fetch_sample_captions(std::span<const std::string> ids,
                                                 const EmbeddingStore& store,
                                                 DecoderProvider& decoder,
                                                 std::string_view prefix = kCaptionPrefix);

PromptBundle build_text_decoder_prompt(std::string_view machine_name,
                                       const CaptionRecord& anomaly,
                                       std::span<const CaptionRecord> normals);

/// Header of column texts (preceded by "caption" when rows carry captions),
/// then one line per row with values at four decimals. Captions are always
/// double-quoted; header cells are quoted only when they need it. No trailing
/// newline.
std::string format_scores_csv(std::span<const std::string> col_texts, std::span<const CsvRow> rows);

PromptBundle build_zero_shot_prompt(std::string_view machine_name, const ScoredSound& anomaly,
                                    std::span<const ScoredSound> normals,
                                    std::span<const std::string> texts);

PromptBundle build_hybrid_prompt(std::string_view machine_name, const ScoredSound& anomaly,
                                 std::span<const ScoredSound> normals,
                                 std::span<const std::string> texts);

struct DifferenceCaption {
    std::string text;
    std::vector<std::string> validation_flags;
};

std::size_t count_words(std::string_view text);

/// Flags "missing_prefix" and "over_word_limit"; never alters the text.
std::vector<std::string> validate_response(std::string_view text);

DifferenceCaption generate_difference_caption(const PromptBundle& bundle, LlmProvider& llm);

/// Everything produced while explaining one test sample.
struct CaptionOutcome {
    std::string sample_id;
    CaptionMethod method = CaptionMethod::TextDecoder;
    AnomalyResult anomaly;
    std::optional<PromptBundle> prompt;
    std::vector<CaptionRecord> sample_captions;
    std::optional<std::string> llm_response;
    std::vector<std::string> validation_flags;
    std::optional<std::string> error;
};

struct CaptionProviders {
    DecoderProvider* decoder = nullptr;
    LlmProvider* llm = nullptr;
    /// Required for zero-shot and hybrid.
    const ReferenceTextSet* texts = nullptr;
};

/// Scores `query` against the scorer's references and builds the difference
/// caption from the very same neighbors. Provider failures are captured in
/// CaptionOutcome::error; data errors propagate.
CaptionOutcome explain_sample(const SampleRecord& query, std::string_view machine_name,
                              const AnomalyScorer& scorer, std::optional<double> threshold,
                              CaptionMethod method, const CaptionProviders& providers);

}  // namespace asdcap
