#include "segcert/model_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

#include "json.hpp"
#include "segcert/errors.hpp"
#include "segcert/tensor_io.hpp"

namespace segcert {

namespace {

using nlohmann::json;

std::string layer_file(std::size_t index, const char* what) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "layer_%02zu_%s.segt", index, what);
    return buf;
}

std::vector<float> quantized(const std::vector<double>& values) {
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = static_cast<float>(values[i]);
    }
    return out;
}

std::vector<double> widened(const std::vector<float>& values) {
    return std::vector<double>(values.begin(), values.end());
}

void write_vector(const std::string& dir, const std::string& name,
                  const std::vector<uint32_t>& shape, const std::vector<double>& values) {
    write_tensor(make_real32(shape, quantized(values)), dir + "/" + name);
}

std::vector<double> read_vector(const std::string& dir, const std::string& name,
                                std::size_t expected_size) {
    const Tensor t = read_tensor(dir + "/" + name);
    if (t.dtype != DType::Real32 || t.element_count() != expected_size) {
        throw ShapeError("weight tensor " + name + " has unexpected shape");
    }
    return widened(t.real32());
}

}  // namespace

void save_model(const ToyModel& model, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw TensorIoError(TensorIoCode::IoFailure,
                            "cannot create model directory " + dir + ": " + ec.message());
    }

    // Quantize first so the stored bounds certify the bytes on disk.
    ToyModel snapshot = model;
    for (LayerSpec& layer : snapshot.layers) {
        layer.weights = widened(quantized(layer.weights));
        layer.bias = widened(quantized(layer.bias));
        layer.running_mean = widened(quantized(layer.running_mean));
        if (layer.kind == LayerKind::Dense1x1 || layer.kind == LayerKind::Conv3x3) {
            layer.lip_bound = layer_lip_bound(layer);
        }
    }

    json manifest;
    manifest["format_version"] = 1;
    manifest["input_channels"] = snapshot.input_channels;
    manifest["classes"] = snapshot.classes;
    manifest["height"] = snapshot.height;
    manifest["width"] = snapshot.width;
    json layers = json::array();
    for (std::size_t li = 0; li < snapshot.layers.size(); ++li) {
        const LayerSpec& layer = snapshot.layers[li];
        json entry;
        entry["kind"] = layer_kind_name(layer.kind);
        entry["in_channels"] = layer.in_channels;
        entry["out_channels"] = layer.out_channels;
        entry["lip_bound"] = layer.lip_bound;
        switch (layer.kind) {
            case LayerKind::Dense1x1: {
                const std::string wf = layer_file(li, "weights");
                write_vector(dir, wf,
                             {static_cast<uint32_t>(layer.out_channels),
                              static_cast<uint32_t>(layer.in_channels)},
                             layer.weights);
                entry["weights"] = wf;
                break;
            }
            case LayerKind::Conv3x3: {
                const std::string wf = layer_file(li, "weights");
                write_vector(dir, wf,
                             {static_cast<uint32_t>(layer.out_channels),
                              static_cast<uint32_t>(layer.in_channels), 3, 3},
                             layer.weights);
                entry["weights"] = wf;
                break;
            }
            case LayerKind::BatchCenter: {
                const std::string mf = layer_file(li, "mean");
                write_vector(dir, mf, {static_cast<uint32_t>(layer.out_channels)},
                             layer.running_mean);
                entry["running_mean"] = mf;
                break;
            }
            default:
                break;
        }
        if (!layer.bias.empty()) {
            const std::string bf = layer_file(li, "bias");
            write_vector(dir, bf, {static_cast<uint32_t>(layer.out_channels)}, layer.bias);
            entry["bias"] = bf;
        }
        layers.push_back(std::move(entry));
    }
    manifest["layers"] = std::move(layers);

    std::ofstream out(dir + "/model.json", std::ios::binary);
    if (!out) {
        throw TensorIoError(TensorIoCode::IoFailure,
                            "cannot open " + dir + "/model.json for writing");
    }
    out << manifest.dump(2) << "\n";
    if (!out) {
        throw TensorIoError(TensorIoCode::IoFailure, "write failed on " + dir + "/model.json");
    }
}

ToyModel load_model(const std::string& dir) {
    std::ifstream in(dir + "/model.json", std::ios::binary);
    if (!in) {
        throw TensorIoError(TensorIoCode::IoFailure,
                            "cannot open model manifest " + dir + "/model.json");
    }
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw TensorIoError(TensorIoCode::IoFailure,
                            "model manifest " + dir + "/model.json is not valid JSON: " +
                                e.what());
    }

    try {
        if (manifest.at("format_version").get<int>() != 1) {
            throw TensorIoError(TensorIoCode::UnsupportedVersion,
                                "unsupported model format version");
        }
        ToyModel model;
        model.input_channels = manifest.at("input_channels").get<int>();
        model.classes = manifest.at("classes").get<int>();
        model.height = manifest.at("height").get<int>();
        model.width = manifest.at("width").get<int>();
        for (const json& entry : manifest.at("layers")) {
            LayerSpec layer;
            layer.kind = layer_kind_from_name(entry.at("kind").get<std::string>());
            layer.in_channels = entry.at("in_channels").get<int>();
            layer.out_channels = entry.at("out_channels").get<int>();
            layer.lip_bound = entry.at("lip_bound").get<double>();
            if (entry.contains("weights")) {
                const std::size_t count =
                    static_cast<std::size_t>(layer.out_channels) * layer.in_channels *
                    (layer.kind == LayerKind::Conv3x3 ? 9 : 1);
                layer.weights =
                    read_vector(dir, entry.at("weights").get<std::string>(), count);
            }
            if (entry.contains("bias")) {
                layer.bias = read_vector(dir, entry.at("bias").get<std::string>(),
                                         static_cast<std::size_t>(layer.out_channels));
            }
            if (entry.contains("running_mean")) {
                layer.running_mean =
                    read_vector(dir, entry.at("running_mean").get<std::string>(),
                                static_cast<std::size_t>(layer.out_channels));
            }
            model.layers.push_back(std::move(layer));
        }
        return model;
    } catch (const json::exception& e) {
        throw TensorIoError(TensorIoCode::IoFailure,
                            "model manifest " + dir + "/model.json is malformed: " +
                                e.what());
    }
}

}  // namespace segcert
