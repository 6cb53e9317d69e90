#include "asdcap/embedding_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "asdcap/error.hpp"
#include "asdcap/io.hpp"

namespace asdcap {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Label label)
{
    switch (label) {
    case Label::Normal: return "normal";
    case Label::Anomalous: return "anomalous";
    case Label::Unknown: return "unknown";
    }
    return "unknown";
}

std::string_view to_string(Split split)
{
    return split == Split::Train ? "train" : "test";
}

Label parse_label(std::string_view text)
{
    if (text == "normal") return Label::Normal;
    if (text == "anomalous") return Label::Anomalous;
    if (text == "unknown") return Label::Unknown;
    throw Error(ErrorCode::InvalidInput, "unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text)
{
    if (text == "train") return Split::Train;
    if (text == "test") return Split::Test;
    throw Error(ErrorCode::InvalidInput, "unknown split '" + std::string(text) + "'");
}

bool RecordFilter::matches(const SampleRecord& r) const
{
    return (!machine_type || r.machine_type == *machine_type) &&
           (!machine_id || r.machine_id == *machine_id) && (!split || r.split == *split) &&
           (!label || r.label == *label);
}

EmbeddingStore::EmbeddingStore(std::size_t dim, std::vector<SampleRecord> records)
    : dim_(dim),
      records_(std::move(records))
{
    if (dim_ == 0) {
        throw Error(ErrorCode::InvalidInput, "store dimension must be positive");
    }
    index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.sample_id.empty()) {
            throw Error(ErrorCode::InvalidInput, "record " + std::to_string(i) + " has an empty sample_id");
        }
        if (r.embedding.dim() != dim_) {
            throw Error(ErrorCode::DimensionMismatch,
                        "record '" + r.sample_id + "' has dimension " +
                            std::to_string(r.embedding.dim()) + ", store has " +
                            std::to_string(dim_));
        }
        if (!index_.emplace(r.sample_id, i).second) {
            throw Error(ErrorCode::DuplicateId, "sample_id '" + r.sample_id + "' appears twice");
        }
    }
}

EmbeddingStore EmbeddingStore::from_records(std::vector<SampleRecord> records)
{
    if (records.empty()) {
        throw Error(ErrorCode::InvalidInput, "cannot infer a dimension from zero records");
    }
    const std::size_t dim = records.front().embedding.dim();
    return EmbeddingStore(dim, std::move(records));
}

const SampleRecord* EmbeddingStore::find(std::string_view sample_id) const
{
    const auto it = index_.find(std::string(sample_id));
    return it == index_.end() ? nullptr : &records_[it->second];
}

const SampleRecord& EmbeddingStore::at(std::string_view sample_id) const
{
    const auto* r = find(sample_id);
    if (r == nullptr) {
        throw Error(ErrorCode::NotFound, "sample_id '" + std::string(sample_id) + "' not in store");
    }
    return *r;
}

EmbeddingStore EmbeddingStore::filter(const RecordFilter& f) const
{
    std::vector<SampleRecord> out;
    for (const auto& r : records_) {
        if (f.matches(r)) {
            out.push_back(r);
        }
    }
    return EmbeddingStore(dim_, std::move(out));
}

EmbeddingStore EmbeddingStore::l2_normalized() const
{
    std::vector<SampleRecord> out = records_;
    for (auto& r : out) {
        r.embedding = asdcap::l2_normalized(r.embedding);
    }
    return EmbeddingStore(dim_, std::move(out));
}

namespace {

std::uint32_t to_little_endian(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

void append_f32_le(std::string& blob, float value)
{
    const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(value));
    char bytes[4];
    std::memcpy(bytes, &bits, 4);
    blob.append(bytes, 4);
}

float read_f32_le(const char* p)
{
    std::uint32_t bits = 0;
    std::memcpy(&bits, p, 4);
    return std::bit_cast<float>(to_little_endian(bits));
}

template <typename T>
T required(const json& j, const char* key)
{
    if (!j.contains(key)) {
        throw Error(ErrorCode::CorruptStore, std::string("manifest is missing '") + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptStore, std::string("manifest field '") + key + "': " + e.what());
    }
}

}  // namespace

std::string blob_file_for(const fs::path& manifest_path)
{
    return manifest_path.stem().string() + ".f32";
}

StoreManifest save_store(const EmbeddingStore& store, const fs::path& manifest_path,
                         std::string_view provenance)
{
    StoreManifest manifest;
    manifest.dim = store.dim();
    manifest.count = store.size();
    manifest.blob_file = blob_file_for(manifest_path);

    std::string blob;
    blob.reserve(store.size() * store.dim() * 4);
    json records = json::array();
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& r = store[i];
        ManifestEntry entry{r.sample_id, r.machine_type, r.machine_id, r.label,
                            r.split,     r.source_path,  static_cast<std::uint64_t>(i) * store.dim() * 4};
        for (float v : r.embedding.values()) {
            append_f32_le(blob, v);
        }
        records.push_back({{"sample_id", entry.sample_id},
                           {"machine_type", entry.machine_type},
                           {"machine_id", entry.machine_id},
                           {"label", to_string(entry.label)},
                           {"split", to_string(entry.split)},
                           {"source_path", entry.source_path},
                           {"offset", entry.offset}});
        manifest.records.push_back(std::move(entry));
    }

    json doc = {{"dim", manifest.dim},
                {"count", manifest.count},
                {"dtype", manifest.dtype},
                {"blob_file", manifest.blob_file},
                {"records", std::move(records)}};
    if (!provenance.empty()) {
        try {
            doc["provenance"] = json::parse(provenance);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidInput, std::string("provenance is not JSON: ") + e.what());
        }
    }

    const fs::path blob_path = manifest_path.parent_path() / manifest.blob_file;
    write_file_atomic(blob_path, blob);
    write_file_atomic(manifest_path, doc.dump(2) + "\n");
    return manifest;
}

StoreManifest read_manifest(const fs::path& manifest_path)
{
    json doc;
    try {
        doc = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptStore, manifest_path.string() + ": " + e.what());
    }

    StoreManifest m;
    m.dtype = required<std::string>(doc, "dtype");
    if (m.dtype != kStoreDtype) {
        throw Error(ErrorCode::UnsupportedFormat, "dtype '" + m.dtype + "' is not supported");
    }
    m.dim = required<std::size_t>(doc, "dim");
    m.count = required<std::size_t>(doc, "count");
    m.blob_file = required<std::string>(doc, "blob_file");
    const auto records = required<json>(doc, "records");
    if (!records.is_array()) {
        throw Error(ErrorCode::CorruptStore, "manifest 'records' is not an array");
    }
    try {
        for (const auto& r : records) {
            ManifestEntry e;
            e.sample_id = required<std::string>(r, "sample_id");
            e.machine_type = required<std::string>(r, "machine_type");
            e.machine_id = required<std::string>(r, "machine_id");
            e.label = parse_label(required<std::string>(r, "label"));
            e.split = parse_split(required<std::string>(r, "split"));
            e.source_path = required<std::string>(r, "source_path");
            e.offset = required<std::uint64_t>(r, "offset");
            m.records.push_back(std::move(e));
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidInput) {
            throw Error(ErrorCode::CorruptStore, e.what());
        }
        throw;
    }
    return m;
}

EmbeddingStore load_store(const fs::path& manifest_path)
{
    const StoreManifest m = read_manifest(manifest_path);
    if (m.dim == 0) {
        throw Error(ErrorCode::CorruptStore, "manifest dim is 0");
    }
    if (m.count != m.records.size()) {
        throw Error(ErrorCode::CorruptStore, "manifest count " + std::to_string(m.count) +
                                                 " but " + std::to_string(m.records.size()) +
                                                 " records");
    }

    const std::string blob = read_file(manifest_path.parent_path() / m.blob_file);
    const std::size_t stride = m.dim * 4;
    if (blob.size() != m.count * stride) {
        throw Error(ErrorCode::CorruptStore, "blob is " + std::to_string(blob.size()) +
                                                 " bytes, expected " +
                                                 std::to_string(m.count * stride));
    }

    std::vector<SampleRecord> records;
    records.reserve(m.count);
    for (std::size_t i = 0; i < m.count; ++i) {
        const auto& e = m.records[i];
        if (e.offset != i * stride) {
            throw Error(ErrorCode::CorruptStore, "record '" + e.sample_id + "' has offset " +
                                                     std::to_string(e.offset) + ", expected " +
                                                     std::to_string(i * stride));
        }
        std::vector<float> values(m.dim);
        const char* base = blob.data() + e.offset;
        for (std::size_t d = 0; d < m.dim; ++d) {
            values[d] = read_f32_le(base + d * 4);
        }
        Embedding emb;
        try {
            emb = Embedding(std::move(values));
        } catch (const Error& err) {
            throw Error(ErrorCode::CorruptStore, "record '" + e.sample_id + "': " + err.what());
        }
        records.push_back(SampleRecord{e.sample_id, e.machine_type, e.machine_id, e.label,
                                       e.split, e.source_path, std::move(emb)});
    }
    return EmbeddingStore(m.dim, std::move(records));
}

}  // namespace asdcap
