#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "asdcap/embedding.hpp"

namespace asdcap {

enum class Label { Normal, Anomalous, Unknown };
enum class Split { Train, Test };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);
Split parse_split(std::string_view text);

struct SampleRecord {
    std::string sample_id;
    std::string machine_type;
    std::string machine_id;
    Label label = Label::Unknown;
    Split split = Split::Train;
    std::string source_path;
    Embedding embedding;
};

/// Any unset field matches everything.
struct RecordFilter {
    std::optional<std::string> machine_type;
    std::optional<std::string> machine_id;
    std::optional<Split> split;
    std::optional<Label> label;

    bool matches(const SampleRecord& r) const;
};

/// Immutable collection of equal-dimension embeddings with unique sample ids.
class EmbeddingStore {
public:
    EmbeddingStore() = default;

    /// Throws DimensionMismatch if any record's embedding differs from `dim`,
    /// DuplicateId on a repeated sample_id, InvalidInput if dim == 0.
    EmbeddingStore(std::size_t dim, std::vector<SampleRecord> records);

    /// Dimension taken from the first record. Requires at least one record.
    static EmbeddingStore from_records(std::vector<SampleRecord> records);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    const std::vector<SampleRecord>& records() const noexcept { return records_; }
    const SampleRecord& operator[](std::size_t i) const { return records_[i]; }

    const SampleRecord* find(std::string_view sample_id) const;
    /// Throws NotFound.
    const SampleRecord& at(std::string_view sample_id) const;

    EmbeddingStore filter(const RecordFilter& f) const;

    /// Copy with every embedding scaled to unit length.
    EmbeddingStore l2_normalized() const;

private:
    std::size_t dim_ = 0;
    std::vector<SampleRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::string_view kStoreDtype = "f32-le";

struct ManifestEntry {
    std::string sample_id;
    std::string machine_type;
    std::string machine_id;
    Label label = Label::Unknown;
    Split split = Split::Train;
    std::string source_path;
    std::uint64_t offset = 0;
};

struct StoreManifest {
    std::size_t dim = 0;
    std::size_t count = 0;
    std::string dtype{kStoreDtype};
    std::string blob_file;
    std::vector<ManifestEntry> records;
};

/// Writes `manifest_path` (JSON) and a companion blob of raw little-endian
/// float32 vectors next to it. Both files are replaced atomically.
/// `provenance`, when non-empty, is a JSON object stored verbatim under
/// "provenance" in the manifest.
StoreManifest save_store(const EmbeddingStore& store, const std::filesystem::path& manifest_path,
                         std::string_view provenance = {});

/// Throws CorruptStore when the blob size disagrees with the manifest and
/// UnsupportedFormat for any dtype other than "f32-le".
EmbeddingStore load_store(const std::filesystem::path& manifest_path);

StoreManifest read_manifest(const std::filesystem::path& manifest_path);

/// Blob file name derived from the manifest name ("train.json" -> "train.f32").
std::string blob_file_for(const std::filesystem::path& manifest_path);

}  // namespace asdcap
