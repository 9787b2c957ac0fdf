#ifndef SEGCERT_REPORT_JSON_HPP
#define SEGCERT_REPORT_JSON_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "segcert/cert.hpp"

namespace segcert {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a 64-bit digest of raw file bytes as 16 hex characters.
std::string file_digest(const std::string& path);  // throws TensorIoError

struct RunManifest {
    std::string command;
    std::string tool_version = kToolVersion;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
    std::map<std::string, double> timings_ms;
    int threads = 1;
    std::uint64_t seed = 0;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);

// Key under which the certified value appears in per-epsilon records:
// crpa | fnr_bound | crs | worst_class_iou.
const char* metric_value_key(Metric metric);

nlohmann::json config_to_json(const CertConfig& cfg, Metric metric,
                              std::int32_t ignore_label);

nlohmann::json report_to_json(const CertificateReport& report);

void write_json_file(const nlohmann::json& doc, const std::string& path);

}  // namespace segcert

#endif
