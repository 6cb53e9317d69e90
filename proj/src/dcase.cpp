#include "asdcap/dcase.hpp"

#include <regex>
#include <tuple>
#include <vector>

namespace asdcap {

std::optional<DcaseFileInfo> parse_dcase_filename(std::string_view file_name)
{
    static const std::regex pattern(R"(^(normal|anomaly)_(id_[0-9]+)_([0-9]+)\.wav$)",
                                    std::regex::icase);
    std::cmatch m;
    if (!std::regex_match(file_name.data(), file_name.data() + file_name.size(), m, pattern)) {
        return std::nullopt;
    }
    DcaseFileInfo info;
    const char first = m[1].str().front();
    info.label = (first == 'n' || first == 'N') ? Label::Normal : Label::Anomalous;
    info.machine_id = m[2].str();
    info.index = m[3].str();
    return info;
}

std::optional<SampleRecord> dcase_record_for(const std::filesystem::path& relative_path)
{
    std::vector<std::string> parts;
    for (const auto& p : relative_path) {
        parts.push_back(p.string());
    }
    if (parts.size() != 3) {
        return std::nullopt;
    }
    const auto& [type, split, file] = std::tie(parts[0], parts[1], parts[2]);
    if (split != "train" && split != "test") {
        return std::nullopt;
    }
    const auto info = parse_dcase_filename(file);
    if (!info) {
        return std::nullopt;
    }

    SampleRecord r;
    r.sample_id = type + "/" + split + "/" + relative_path.stem().string();
    r.machine_type = type;
    r.machine_id = info->machine_id;
    r.label = info->label;
    r.split = parse_split(split);
    r.source_path = relative_path.generic_string();
    return r;
}

}  // namespace asdcap
