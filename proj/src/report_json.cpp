#include "segcert/report_json.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <vector>

#include "segcert/tensor_io.hpp"

namespace segcert {

using nlohmann::json;

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TensorIoError(TensorIoCode::IoFailure, "cannot open " + path);
    }
    std::uint64_t hash = 14695981039346656037ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ull;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

json manifest_to_json(const RunManifest& manifest) {
    json inputs = json::array();
    for (const auto& [path, digest] : manifest.inputs) {
        inputs.push_back({{"path", path}, {"digest", digest}});
    }
    return json{{"command", manifest.command},
                {"tool_version", manifest.tool_version},
                {"inputs", std::move(inputs)},
                {"timings_ms", manifest.timings_ms},
                {"threads", manifest.threads},
                {"seed", manifest.seed}};
}

const char* metric_value_key(Metric metric) {
    switch (metric) {
        case Metric::PixelAccuracy: return "crpa";
        case Metric::FalseNegativeRate: return "fnr_bound";
        case Metric::Stability: return "crs";
        case Metric::ClassIou: return "worst_class_iou";
    }
    return "value";
}

json config_to_json(const CertConfig& cfg, Metric metric, std::int32_t ignore_label) {
    return json{{"metric", metric_name(metric)},
                {"lipschitz", cfg.lipschitz},
                {"p", cfg.norm_order},
                {"epsilons", cfg.epsilons},
                {"gammas", cfg.gammas},
                {"class_index", cfg.class_index},
                {"ignore_label", ignore_label}};
}

json report_to_json(const CertificateReport& report) {
    const char* value_key = metric_value_key(report.metric);
    json per_eps = json::array();
    for (const EpsilonRecord& rec : report.per_epsilon) {
        per_eps.push_back({{"epsilon", rec.epsilon},
                           {"n_flippable", rec.n_flippable},
                           {value_key, rec.value}});
    }
    json per_gamma = json::array();
    for (const GammaRecord& rec : report.per_gamma) {
        per_gamma.push_back(
            {{"gamma", rec.gamma}, {"radius_lower_bound", rec.radius_lower_bound}});
    }
    return json{{"metric", metric_name(report.metric)},
                {"lipschitz", report.lipschitz},
                {"p", report.norm_order},
                {"set_size", report.set_size},
                {"clean", report.clean_value},
                {"per_epsilon", std::move(per_eps)},
                {"per_gamma", std::move(per_gamma)},
                {"certify_ms", report.certify_ms}};
}

void write_json_file(const json& doc, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw TensorIoError(TensorIoCode::IoFailure, "cannot open " + path + " for writing");
    }
    out << doc.dump(2) << "\n";
    if (!out) {
        throw TensorIoError(TensorIoCode::IoFailure, "write failed on " + path);
    }
}

}  // namespace segcert
