#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "asdcap/embedding_store.hpp"

namespace asdcap {

struct DcaseFileInfo {
    Label label = Label::Unknown;
    std::string machine_id;  // "id_02"
    std::string index;       // "00000001"
};

/// "anomaly_id_01_00000005.wav" -> {anomalous, "id_01", "00000005"}.
std::optional<DcaseFileInfo> parse_dcase_filename(std::string_view file_name);

/// Metadata for a file laid out as <machine_type>/<split>/<file> relative to
/// the dataset root. sample_id is the relative path without extension.
std::optional<SampleRecord> dcase_record_for(const std::filesystem::path& relative_path);

}  // namespace asdcap
