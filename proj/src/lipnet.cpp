#include "segcert/lipnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "segcert/errors.hpp"
#include "segcert/rng.hpp"

namespace segcert {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense1x1: return "dense_1x1";
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::GroupSort2: return "groupsort2";
        case LayerKind::BatchCenter: return "batch_center";
        case LayerKind::ResidualAdd: return "residual_add";
    }
    return "unknown";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "dense_1x1") return LayerKind::Dense1x1;
    if (name == "conv3x3") return LayerKind::Conv3x3;
    if (name == "groupsort2") return LayerKind::GroupSort2;
    if (name == "batch_center") return LayerKind::BatchCenter;
    if (name == "residual_add") return LayerKind::ResidualAdd;
    throw ConfigError("unknown layer kind '" + name + "'");
}

FeatureMap feature_from_tensor(const Tensor& t) {
    if (t.dtype != DType::Real32 || t.shape.size() != 3) {
        throw ShapeError("feature maps must be rank-3 real32 tensors");
    }
    FeatureMap f;
    f.channels = static_cast<int>(t.shape[0]);
    f.height = static_cast<int>(t.shape[1]);
    f.width = static_cast<int>(t.shape[2]);
    const auto& src = t.real32();
    f.values.assign(src.begin(), src.end());
    return f;
}

Tensor feature_to_tensor(const FeatureMap& f) {
    std::vector<float> data(f.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(f.values[i]);
    }
    return make_real32({static_cast<uint32_t>(f.channels), static_cast<uint32_t>(f.height),
                        static_cast<uint32_t>(f.width)},
                       std::move(data));
}

LogitTensor feature_to_logits(const FeatureMap& f) {
    LogitTensor out;
    out.classes = f.channels;
    out.height = f.height;
    out.width = f.width;
    out.values = f.values;
    return out;
}

double ToyModel::global_lip() const {
    double prod = 1.0;
    for (const LayerSpec& layer : layers) prod *= layer.lip_bound;
    return prod;
}

double layer_lip_bound(const LayerSpec& layer) {
    switch (layer.kind) {
        case LayerKind::Dense1x1: {
            const int out_c = layer.out_channels;
            const int in_c = layer.in_channels;
            double frob2 = 0.0;
            std::vector<double> col_sum(in_c, 0.0);
            double max_row = 0.0;
            for (int o = 0; o < out_c; ++o) {
                double row = 0.0;
                for (int i = 0; i < in_c; ++i) {
                    const double w = layer.weights[static_cast<std::size_t>(o) * in_c + i];
                    frob2 += w * w;
                    row += std::abs(w);
                    col_sum[i] += std::abs(w);
                }
                max_row = std::max(max_row, row);
            }
            const double max_col = *std::max_element(col_sum.begin(), col_sum.end());
            return std::min(std::sqrt(frob2), std::sqrt(max_col * max_row));
        }
        case LayerKind::Conv3x3: {
            const int out_c = layer.out_channels;
            const int in_c = layer.in_channels;
            double total = 0.0;
            for (int t = 0; t < 9; ++t) {
                double frob2 = 0.0;
                for (int o = 0; o < out_c; ++o) {
                    for (int i = 0; i < in_c; ++i) {
                        const double w =
                            layer.weights[(static_cast<std::size_t>(o) * in_c + i) * 9 + t];
                        frob2 += w * w;
                    }
                }
                total += std::sqrt(frob2);
            }
            return total;
        }
        case LayerKind::GroupSort2:
        case LayerKind::BatchCenter:
        case LayerKind::ResidualAdd:
            return 1.0;
    }
    return 1.0;
}

double lipschitz_upper_bound(const ToyModel& model) {
    double prod = 1.0;
    for (const LayerSpec& layer : model.layers) prod *= layer_lip_bound(layer);
    return prod;
}

void renormalize_layers(ToyModel& model) {
    for (LayerSpec& layer : model.layers) {
        if (layer.kind != LayerKind::Dense1x1 && layer.kind != LayerKind::Conv3x3) {
            continue;
        }
        const double bound = layer_lip_bound(layer);
        if (bound > 0.0) {
            for (double& w : layer.weights) w /= bound;
        }
        layer.lip_bound = 1.0;
    }
}

namespace {

void apply_dense(const LayerSpec& layer, const FeatureMap& in, FeatureMap& out) {
    const int in_c = layer.in_channels;
    const int out_c = layer.out_channels;
    const std::size_t plane = in.plane();
    for (int o = 0; o < out_c; ++o) {
        const double b = layer.bias.empty() ? 0.0 : layer.bias[o];
        double* dst = out.values.data() + static_cast<std::size_t>(o) * plane;
        for (std::size_t pix = 0; pix < plane; ++pix) dst[pix] = b;
        for (int i = 0; i < in_c; ++i) {
            const double w = layer.weights[static_cast<std::size_t>(o) * in_c + i];
            if (w == 0.0) continue;
            const double* src = in.values.data() + static_cast<std::size_t>(i) * plane;
            for (std::size_t pix = 0; pix < plane; ++pix) dst[pix] += w * src[pix];
        }
    }
}

void apply_conv(const LayerSpec& layer, const FeatureMap& in, FeatureMap& out) {
    const int in_c = layer.in_channels;
    const int out_c = layer.out_channels;
    const int h = in.height;
    const int w = in.width;
    for (int o = 0; o < out_c; ++o) {
        const double b = layer.bias.empty() ? 0.0 : layer.bias[o];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = b;
                for (int i = 0; i < in_c; ++i) {
                    const double* tap =
                        layer.weights.data() + (static_cast<std::size_t>(o) * in_c + i) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int yy = y + ky - 1;
                        if (yy < 0 || yy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int xx = x + kx - 1;
                            if (xx < 0 || xx >= w) continue;
                            acc += tap[ky * 3 + kx] * in.at(i, yy, xx);
                        }
                    }
                }
                out.at(o, y, x) = acc;
            }
        }
    }
}

void apply_groupsort(const FeatureMap& in, FeatureMap& out) {
    const std::size_t plane = in.plane();
    for (int c = 0; c + 1 < in.channels; c += 2) {
        const double* a = in.values.data() + static_cast<std::size_t>(c) * plane;
        const double* b = in.values.data() + static_cast<std::size_t>(c + 1) * plane;
        double* lo = out.values.data() + static_cast<std::size_t>(c) * plane;
        double* hi = out.values.data() + static_cast<std::size_t>(c + 1) * plane;
        for (std::size_t pix = 0; pix < plane; ++pix) {
            if (a[pix] <= b[pix]) {
                lo[pix] = a[pix];
                hi[pix] = b[pix];
            } else {
                lo[pix] = b[pix];
                hi[pix] = a[pix];
            }
        }
    }
}

struct Trace {
    std::vector<FeatureMap> inputs;                // inputs[i] feeds layer i
    FeatureMap output;
    std::vector<int> skip_src;                     // residual layers: skip position
    std::vector<std::vector<double>> bc_means;     // train-mode means per layer
};

// Residual blocks: the skip feature resets at the network input, after any
// channel-changing layer, and after each residual_add.
Trace forward_trace(const ToyModel& model, const FeatureMap& image, bool training) {
    if (image.channels != model.input_channels || image.height != model.height ||
        image.width != model.width) {
        throw ShapeError("image shape does not match the model");
    }
    Trace trace;
    trace.skip_src.assign(model.layers.size(), -1);
    trace.bc_means.resize(model.layers.size());
    trace.inputs.reserve(model.layers.size());

    FeatureMap x = image;
    int skip_pos = 0;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const LayerSpec& layer = model.layers[li];
        trace.inputs.push_back(x);
        FeatureMap out;
        out.height = x.height;
        out.width = x.width;
        switch (layer.kind) {
            case LayerKind::Dense1x1: {
                if (x.channels != layer.in_channels) {
                    throw ShapeError("dense layer expects " +
                                     std::to_string(layer.in_channels) + " channels, got " +
                                     std::to_string(x.channels));
                }
                out.channels = layer.out_channels;
                out.values.resize(static_cast<std::size_t>(out.channels) * out.height *
                                  out.width);
                apply_dense(layer, x, out);
                break;
            }
            case LayerKind::Conv3x3: {
                if (x.channels != layer.in_channels) {
                    throw ShapeError("conv layer expects " +
                                     std::to_string(layer.in_channels) + " channels, got " +
                                     std::to_string(x.channels));
                }
                out.channels = layer.out_channels;
                out.values.resize(static_cast<std::size_t>(out.channels) * out.height *
                                  out.width);
                apply_conv(layer, x, out);
                break;
            }
            case LayerKind::GroupSort2: {
                if (x.channels % 2 != 0) {
                    throw ShapeError("groupsort2 requires an even channel count, got " +
                                     std::to_string(x.channels));
                }
                out.channels = x.channels;
                out.values.resize(x.values.size());
                apply_groupsort(x, out);
                break;
            }
            case LayerKind::BatchCenter: {
                out = x;
                const std::size_t plane = x.plane();
                if (training) {
                    std::vector<double> means(x.channels, 0.0);
                    for (int c = 0; c < x.channels; ++c) {
                        const double* src =
                            x.values.data() + static_cast<std::size_t>(c) * plane;
                        double sum = 0.0;
                        for (std::size_t pix = 0; pix < plane; ++pix) sum += src[pix];
                        means[c] = sum / static_cast<double>(plane);
                        double* dst =
                            out.values.data() + static_cast<std::size_t>(c) * plane;
                        for (std::size_t pix = 0; pix < plane; ++pix) dst[pix] -= means[c];
                    }
                    trace.bc_means[li] = std::move(means);
                } else {
                    for (int c = 0; c < x.channels; ++c) {
                        const double m =
                            layer.running_mean.empty() ? 0.0 : layer.running_mean[c];
                        if (m == 0.0) continue;
                        double* dst =
                            out.values.data() + static_cast<std::size_t>(c) * plane;
                        for (std::size_t pix = 0; pix < plane; ++pix) dst[pix] -= m;
                    }
                }
                break;
            }
            case LayerKind::ResidualAdd: {
                const FeatureMap& skip = trace.inputs[skip_pos];
                if (skip.channels != x.channels) {
                    throw ShapeError("residual_add channel mismatch: skip has " +
                                     std::to_string(skip.channels) + ", branch has " +
                                     std::to_string(x.channels));
                }
                out.channels = x.channels;
                out.values.resize(x.values.size());
                for (std::size_t i = 0; i < x.values.size(); ++i) {
                    out.values[i] = 0.5 * (skip.values[i] + x.values[i]);
                }
                trace.skip_src[li] = skip_pos;
                break;
            }
        }
        const int out_channels = out.channels;
        const bool channels_changed = out_channels != x.channels;
        x = std::move(out);
        if (channels_changed || layer.kind == LayerKind::ResidualAdd) {
            skip_pos = static_cast<int>(li) + 1;
        }
    }
    trace.output = std::move(x);
    return trace;
}

struct LayerGrads {
    std::vector<double> weights;
    std::vector<double> bias;
};

void backward_dense(const LayerSpec& layer, const FeatureMap& in, const FeatureMap& gout,
                    FeatureMap& gin, LayerGrads* grads) {
    const int in_c = layer.in_channels;
    const int out_c = layer.out_channels;
    const std::size_t plane = in.plane();
    gin.channels = in_c;
    gin.height = in.height;
    gin.width = in.width;
    gin.values.assign(in.values.size(), 0.0);
    for (int o = 0; o < out_c; ++o) {
        const double* g = gout.values.data() + static_cast<std::size_t>(o) * plane;
        for (int i = 0; i < in_c; ++i) {
            const double w = layer.weights[static_cast<std::size_t>(o) * in_c + i];
            double* dst = gin.values.data() + static_cast<std::size_t>(i) * plane;
            for (std::size_t pix = 0; pix < plane; ++pix) dst[pix] += w * g[pix];
        }
        if (grads != nullptr) {
            for (int i = 0; i < in_c; ++i) {
                const double* src = in.values.data() + static_cast<std::size_t>(i) * plane;
                double acc = 0.0;
                for (std::size_t pix = 0; pix < plane; ++pix) acc += g[pix] * src[pix];
                grads->weights[static_cast<std::size_t>(o) * in_c + i] += acc;
            }
            double bacc = 0.0;
            for (std::size_t pix = 0; pix < plane; ++pix) bacc += g[pix];
            grads->bias[o] += bacc;
        }
    }
}

void backward_conv(const LayerSpec& layer, const FeatureMap& in, const FeatureMap& gout,
                   FeatureMap& gin, LayerGrads* grads) {
    const int in_c = layer.in_channels;
    const int out_c = layer.out_channels;
    const int h = in.height;
    const int w = in.width;
    gin.channels = in_c;
    gin.height = h;
    gin.width = w;
    gin.values.assign(in.values.size(), 0.0);
    for (int o = 0; o < out_c; ++o) {
        for (int i = 0; i < in_c; ++i) {
            const std::size_t wbase = (static_cast<std::size_t>(o) * in_c + i) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = layer.weights[wbase + ky * 3 + kx];
                    double wg = 0.0;
                    for (int y = 0; y < h; ++y) {
                        const int yy = y + ky - 1;
                        if (yy < 0 || yy >= h) continue;
                        for (int x = 0; x < w; ++x) {
                            const int xx = x + kx - 1;
                            if (xx < 0 || xx >= w) continue;
                            const double g = gout.at(o, y, x);
                            gin.at(i, yy, xx) += wv * g;
                            wg += g * in.at(i, yy, xx);
                        }
                    }
                    if (grads != nullptr) grads->weights[wbase + ky * 3 + kx] += wg;
                }
            }
        }
        if (grads != nullptr) {
            const std::size_t plane = static_cast<std::size_t>(h) * w;
            const double* g = gout.values.data() + static_cast<std::size_t>(o) * plane;
            double bacc = 0.0;
            for (std::size_t pix = 0; pix < plane; ++pix) bacc += g[pix];
            grads->bias[o] += bacc;
        }
    }
}

void backward_groupsort(const FeatureMap& in, const FeatureMap& gout, FeatureMap& gin) {
    const std::size_t plane = in.plane();
    gin.channels = in.channels;
    gin.height = in.height;
    gin.width = in.width;
    gin.values.resize(in.values.size());
    for (int c = 0; c + 1 < in.channels; c += 2) {
        const double* a = in.values.data() + static_cast<std::size_t>(c) * plane;
        const double* b = in.values.data() + static_cast<std::size_t>(c + 1) * plane;
        const double* glo = gout.values.data() + static_cast<std::size_t>(c) * plane;
        const double* ghi = gout.values.data() + static_cast<std::size_t>(c + 1) * plane;
        double* ga = gin.values.data() + static_cast<std::size_t>(c) * plane;
        double* gb = gin.values.data() + static_cast<std::size_t>(c + 1) * plane;
        for (std::size_t pix = 0; pix < plane; ++pix) {
            if (a[pix] <= b[pix]) {
                ga[pix] = glo[pix];
                gb[pix] = ghi[pix];
            } else {
                ga[pix] = ghi[pix];
                gb[pix] = glo[pix];
            }
        }
    }
}

// Returns the gradient with respect to the traced input. `grads`, when
// non-null, must hold one pre-sized entry per layer and accumulates
// weight/bias gradients.
FeatureMap backward_trace(const ToyModel& model, const Trace& trace,
                          const FeatureMap& output_grad, bool training,
                          std::vector<LayerGrads>* grads) {
    FeatureMap g = output_grad;
    std::map<int, FeatureMap> pending;  // position -> extra gradient via skips
    for (int li = static_cast<int>(model.layers.size()) - 1; li >= 0; --li) {
        const LayerSpec& layer = model.layers[li];
        const FeatureMap& in = trace.inputs[li];
        FeatureMap gin;
        switch (layer.kind) {
            case LayerKind::Dense1x1:
                backward_dense(layer, in, g, gin,
                               grads != nullptr ? &(*grads)[li] : nullptr);
                break;
            case LayerKind::Conv3x3:
                backward_conv(layer, in, g, gin,
                              grads != nullptr ? &(*grads)[li] : nullptr);
                break;
            case LayerKind::GroupSort2:
                backward_groupsort(in, g, gin);
                break;
            case LayerKind::BatchCenter: {
                gin = g;
                if (training) {
                    const std::size_t plane = in.plane();
                    for (int c = 0; c < in.channels; ++c) {
                        double* gc = gin.values.data() + static_cast<std::size_t>(c) * plane;
                        double mean = 0.0;
                        for (std::size_t pix = 0; pix < plane; ++pix) mean += gc[pix];
                        mean /= static_cast<double>(plane);
                        for (std::size_t pix = 0; pix < plane; ++pix) gc[pix] -= mean;
                    }
                }
                break;
            }
            case LayerKind::ResidualAdd: {
                gin = g;
                for (double& v : gin.values) v *= 0.5;
                auto [it, inserted] = pending.try_emplace(trace.skip_src[li], gin);
                if (!inserted) {
                    for (std::size_t i = 0; i < gin.values.size(); ++i) {
                        it->second.values[i] += gin.values[i];
                    }
                }
                break;
            }
        }
        g = std::move(gin);
        const auto it = pending.find(li);
        if (it != pending.end()) {
            for (std::size_t i = 0; i < g.values.size(); ++i) {
                g.values[i] += it->second.values[i];
            }
            pending.erase(it);
        }
    }
    return g;
}

// Objective value plus gradient with respect to the logits, masked to
// non-ignored pixels.
std::pair<double, FeatureMap> logit_objective(const LogitTensor& logits,
                                              const Objective& objective,
                                              const LabelMask& reference) {
    if (reference.height != logits.height || reference.width != logits.width) {
        throw ShapeError("reference mask shape does not match the logits");
    }
    const int K = logits.classes;
    const std::size_t plane = logits.pixel_count();
    FeatureMap grad;
    grad.channels = K;
    grad.height = logits.height;
    grad.width = logits.width;
    grad.values.assign(logits.values.size(), 0.0);

    std::size_t selected = 0;
    for (std::size_t pix = 0; pix < plane; ++pix) {
        const std::int32_t y = reference.labels[pix];
        if (y != reference.ignore_value) ++selected;
    }
    if (selected == 0) {
        throw UndefinedMetricError("objective has no unmasked pixels");
    }

    double value = 0.0;
    if (objective.kind == Objective::Kind::SumMargin) {
        for (std::size_t pix = 0; pix < plane; ++pix) {
            const std::int32_t y = reference.labels[pix];
            if (y == reference.ignore_value) continue;
            const double fy = logits.values[static_cast<std::size_t>(y) * plane + pix];
            double best_other = -std::numeric_limits<double>::infinity();
            int arg_other = -1;
            for (int c = 0; c < K; ++c) {
                if (c == y) continue;
                const double v = logits.values[static_cast<std::size_t>(c) * plane + pix];
                if (v > best_other) {
                    best_other = v;
                    arg_other = c;
                }
            }
            value += fy - best_other;
            grad.values[static_cast<std::size_t>(y) * plane + pix] += 1.0;
            grad.values[static_cast<std::size_t>(arg_other) * plane + pix] -= 1.0;
        }
    } else {
        const double tau = objective.temperature;
        const double inv = 1.0 / static_cast<double>(selected);
        std::vector<double> probs(K);
        for (std::size_t pix = 0; pix < plane; ++pix) {
            const std::int32_t y = reference.labels[pix];
            if (y == reference.ignore_value) continue;
            double zmax = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < K; ++c) {
                zmax = std::max(zmax,
                                tau * logits.values[static_cast<std::size_t>(c) * plane + pix]);
            }
            double denom = 0.0;
            for (int c = 0; c < K; ++c) {
                probs[c] = std::exp(
                    tau * logits.values[static_cast<std::size_t>(c) * plane + pix] - zmax);
                denom += probs[c];
            }
            const double log_denom = std::log(denom);
            const double zy =
                tau * logits.values[static_cast<std::size_t>(y) * plane + pix] - zmax;
            value += (log_denom - zy) * inv;
            for (int c = 0; c < K; ++c) {
                const double p = probs[c] / denom;
                grad.values[static_cast<std::size_t>(c) * plane + pix] +=
                    tau * inv * (p - (c == y ? 1.0 : 0.0));
            }
        }
    }
    return {value, std::move(grad)};
}

}  // namespace

LogitTensor forward(const ToyModel& model, const FeatureMap& image) {
    Trace trace = forward_trace(model, image, false);
    if (trace.output.channels != model.classes) {
        throw ShapeError("model emits " + std::to_string(trace.output.channels) +
                         " channels, expected " + std::to_string(model.classes) +
                         " classes");
    }
    return feature_to_logits(trace.output);
}

ObjectiveEval objective_with_gradient(const ToyModel& model, const FeatureMap& image,
                                      const Objective& objective,
                                      const LabelMask& reference) {
    Trace trace = forward_trace(model, image, false);
    LogitTensor logits = feature_to_logits(trace.output);
    auto [value, logit_grad] = logit_objective(logits, objective, reference);
    ObjectiveEval eval;
    eval.value = value;
    eval.gradient = backward_trace(model, trace, logit_grad, false, nullptr);
    eval.logits = std::move(logits);
    return eval;
}

double objective_value(const ToyModel& model, const FeatureMap& image,
                       const Objective& objective, const LabelMask& reference) {
    Trace trace = forward_trace(model, image, false);
    return logit_objective(feature_to_logits(trace.output), objective, reference).first;
}

FeatureMap input_gradient(const ToyModel& model, const FeatureMap& image,
                          const Objective& objective, const LabelMask& reference) {
    return objective_with_gradient(model, image, objective, reference).gradient;
}

std::vector<SyntheticSample> generate_synthetic_dataset(std::uint64_t seed, int count,
                                                        int size, int classes) {
    if (size < 8) throw ConfigError("synthetic dataset size must be >= 8");
    if (classes != 2 && classes != 3) {
        throw ConfigError("synthetic dataset supports 2 or 3 classes");
    }
    Rng rng(seed);
    std::vector<SyntheticSample> out;
    out.reserve(count);
    const double s = static_cast<double>(size);
    for (int n = 0; n < count; ++n) {
        SyntheticSample sample;
        sample.image.channels = 1;
        sample.image.height = size;
        sample.image.width = size;
        sample.image.values.resize(static_cast<std::size_t>(size) * size);
        sample.mask.height = size;
        sample.mask.width = size;
        sample.mask.labels.assign(static_cast<std::size_t>(size) * size, 0);

        const bool disk = rng.uniform() < 0.5;
        const int label = (classes == 3 && !disk) ? 2 : 1;
        const double cx = rng.uniform(0.3, 0.7) * s;
        const double cy = rng.uniform(0.3, 0.7) * s;
        const double extent = rng.uniform(0.18, 0.34) * s;
        const double extent2 = rng.uniform(0.18, 0.34) * s;
        const double fg = disk ? rng.uniform(0.62, 0.88) : rng.uniform(0.42, 0.6);
        const double soft = 0.75;

        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double bg = 0.15 + 0.12 * rng.uniform();
                const double dx = x + 0.5 - cx;
                const double dy = y + 0.5 - cy;
                double signed_dist;
                if (disk) {
                    signed_dist = extent - std::sqrt(dx * dx + dy * dy);
                } else {
                    signed_dist = std::min(extent - std::abs(dx), extent2 - std::abs(dy));
                }
                const double alpha = 1.0 / (1.0 + std::exp(-signed_dist / soft));
                double v = bg * (1.0 - alpha) + fg * alpha;
                v = std::min(1.0, std::max(0.0, v));
                const std::size_t pix = static_cast<std::size_t>(y) * size + x;
                sample.image.values[pix] = v;
                if (signed_dist > 0.0) sample.mask.labels[pix] = label;
            }
        }
        out.push_back(std::move(sample));
    }
    return out;
}

namespace {

// Random signed permutation plus Gaussian noise: starts the layer at a
// certified bound barely above 1, so renormalization keeps the gain close
// to the identity while SGD grows mixing where it pays.
std::vector<double> signed_permutation_init(Rng& rng, int out_c, int in_c,
                                            double noise) {
    std::vector<double> w(static_cast<std::size_t>(out_c) * in_c, 0.0);
    std::vector<int> cols(in_c);
    for (int i = 0; i < in_c; ++i) cols[i] = i;
    for (int i = in_c - 1; i > 0; --i) {
        std::swap(cols[i], cols[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
    }
    for (int o = 0; o < out_c; ++o) {
        const int col = cols[o % in_c];
        w[static_cast<std::size_t>(o) * in_c + col] = rng.uniform() < 0.5 ? 1.0 : -1.0;
    }
    for (double& v : w) v += noise * rng.normal();
    return w;
}

LayerSpec make_dense(Rng& rng, int in_c, int out_c) {
    LayerSpec layer;
    layer.kind = LayerKind::Dense1x1;
    layer.in_channels = in_c;
    layer.out_channels = out_c;
    layer.weights = signed_permutation_init(rng, out_c, in_c, 0.02);
    layer.bias.assign(out_c, 0.0);
    layer.lip_bound = layer_lip_bound(layer);
    return layer;
}

LayerSpec make_stem_conv(Rng& rng, int in_c, int out_c) {
    LayerSpec layer;
    layer.kind = LayerKind::Conv3x3;
    layer.in_channels = in_c;
    layer.out_channels = out_c;
    layer.weights.assign(static_cast<std::size_t>(out_c) * in_c * 9, 0.0);
    // Unit-norm center tap; faint off-center taps that training can grow.
    std::vector<double> center(static_cast<std::size_t>(out_c) * in_c);
    double norm2 = 0.0;
    for (double& v : center) {
        v = rng.normal();
        norm2 += v * v;
    }
    const double inv_norm = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    for (int o = 0; o < out_c; ++o) {
        for (int i = 0; i < in_c; ++i) {
            const std::size_t base = (static_cast<std::size_t>(o) * in_c + i) * 9;
            for (int t = 0; t < 9; ++t) {
                layer.weights[base + t] =
                    (t == 4) ? center[static_cast<std::size_t>(o) * in_c + i] * inv_norm
                             : 0.003 * rng.normal();
            }
        }
    }
    layer.bias.assign(out_c, 0.0);
    layer.lip_bound = layer_lip_bound(layer);
    return layer;
}

LayerSpec make_plain(LayerKind kind, int channels) {
    LayerSpec layer;
    layer.kind = kind;
    layer.in_channels = channels;
    layer.out_channels = channels;
    if (kind == LayerKind::BatchCenter) layer.running_mean.assign(channels, 0.0);
    layer.lip_bound = 1.0;
    return layer;
}

}  // namespace

ToyModel build_toy_model(std::uint64_t seed, int input_channels, int classes,
                         int hidden, int blocks, int height, int width) {
    if (hidden % 2 != 0 || hidden < 2) {
        throw ConfigError("hidden channel count must be even and >= 2");
    }
    if (classes > hidden) {
        throw ConfigError("hidden channel count must be >= the class count");
    }
    Rng rng(seed);
    ToyModel model;
    model.input_channels = input_channels;
    model.classes = classes;
    model.height = height;
    model.width = width;

    model.layers.push_back(make_stem_conv(rng, input_channels, hidden));
    model.layers.push_back(make_plain(LayerKind::GroupSort2, hidden));
    model.layers.push_back(make_plain(LayerKind::BatchCenter, hidden));
    for (int b = 0; b < blocks; ++b) {
        model.layers.push_back(make_dense(rng, hidden, hidden));
        model.layers.push_back(make_plain(LayerKind::GroupSort2, hidden));
        model.layers.push_back(make_plain(LayerKind::BatchCenter, hidden));
        model.layers.push_back(make_plain(LayerKind::ResidualAdd, hidden));
    }
    model.layers.push_back(make_dense(rng, hidden, classes));

    renormalize_layers(model);
    return model;
}

ToyModel train_toy(ToyModel model, const std::vector<SyntheticSample>& dataset,
                   int steps, double lr, double temperature) {
    if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    if (steps <= 0) return model;
    if (dataset.empty()) throw ConfigError("training dataset is empty");

    const std::size_t batch =
        std::min<std::size_t>(16, dataset.size());
    const Objective objective = Objective::masked_ce(temperature);
    const double momentum = 0.1;

    std::vector<LayerGrads> grads(model.layers.size());
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        grads[li].weights.assign(model.layers[li].weights.size(), 0.0);
        grads[li].bias.assign(model.layers[li].bias.size(), 0.0);
    }

    for (int step = 0; step < steps; ++step) {
        for (LayerGrads& g : grads) {
            std::fill(g.weights.begin(), g.weights.end(), 0.0);
            std::fill(g.bias.begin(), g.bias.end(), 0.0);
        }
        double loss = 0.0;
        for (std::size_t j = 0; j < batch; ++j) {
            const SyntheticSample& sample =
                dataset[(static_cast<std::size_t>(step) * batch + j) % dataset.size()];
            Trace trace = forward_trace(model, sample.image, true);
            auto [sample_loss, logit_grad] =
                logit_objective(feature_to_logits(trace.output), objective, sample.mask);
            loss += sample_loss;
            backward_trace(model, trace, logit_grad, true, &grads);
            for (std::size_t li = 0; li < model.layers.size(); ++li) {
                if (model.layers[li].kind != LayerKind::BatchCenter) continue;
                const std::vector<double>& m = trace.bc_means[li];
                std::vector<double>& running = model.layers[li].running_mean;
                for (std::size_t c = 0; c < running.size(); ++c) {
                    running[c] = (1.0 - momentum) * running[c] + momentum * m[c];
                }
            }
        }
        if (!std::isfinite(loss)) {
            throw DivergenceError("training loss became non-finite", step);
        }
        const double scale = lr / static_cast<double>(batch);
        for (std::size_t li = 0; li < model.layers.size(); ++li) {
            LayerSpec& layer = model.layers[li];
            for (std::size_t i = 0; i < layer.weights.size(); ++i) {
                layer.weights[i] -= scale * grads[li].weights[i];
            }
            for (std::size_t i = 0; i < layer.bias.size(); ++i) {
                layer.bias[i] -= scale * grads[li].bias[i];
            }
        }
        renormalize_layers(model);
    }
    return model;
}

double pixel_accuracy(const ToyModel& model, const std::vector<SyntheticSample>& data) {
    if (data.empty()) throw ConfigError("empty evaluation dataset");
    double acc_sum = 0.0;
    for (const SyntheticSample& sample : data) {
        const LogitTensor logits = forward(model, sample.image);
        const PredictionMask preds = argmax_predictions(logits);
        std::int64_t correct = 0;
        std::int64_t total = 0;
        for (std::size_t i = 0; i < preds.labels.size(); ++i) {
            if (sample.mask.labels[i] == sample.mask.ignore_value) continue;
            ++total;
            correct += (preds.labels[i] == sample.mask.labels[i]) ? 1 : 0;
        }
        acc_sum += static_cast<double>(correct) / static_cast<double>(total);
    }
    return acc_sum / static_cast<double>(data.size());
}

}  // namespace segcert
