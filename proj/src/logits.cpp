#include "segcert/logits.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "segcert/parallel.hpp"

namespace segcert {

LogitTensor logits_from_tensor(const Tensor& t) {
    if (t.dtype != DType::Real32) {
        throw ShapeError("logits must be real32, got " + std::string(dtype_name(t.dtype)));
    }
    if (t.shape.size() != 3) {
        throw ShapeError("logits must have rank 3 (classes, height, width), got rank " +
                         std::to_string(t.shape.size()));
    }
    LogitTensor out;
    out.classes = static_cast<int>(t.shape[0]);
    out.height = static_cast<int>(t.shape[1]);
    out.width = static_cast<int>(t.shape[2]);
    const auto& src = t.real32();
    out.values.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        const float v = src[i];
        if (!std::isfinite(v)) {
            throw NonFiniteError("logits contain a non-finite value at flat index " +
                                 std::to_string(i));
        }
        out.values[i] = static_cast<double>(v);
    }
    return out;
}

Tensor logits_to_tensor(const LogitTensor& logits) {
    std::vector<float> data(logits.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(logits.values[i]);
    }
    return make_real32({static_cast<uint32_t>(logits.classes),
                        static_cast<uint32_t>(logits.height),
                        static_cast<uint32_t>(logits.width)},
                       std::move(data));
}

LabelMask labels_from_tensor(const Tensor& t, std::int32_t ignore_value) {
    if (t.shape.size() != 2) {
        throw ShapeError("labels must have rank 2 (height, width), got rank " +
                         std::to_string(t.shape.size()));
    }
    LabelMask out;
    out.height = static_cast<int>(t.shape[0]);
    out.width = static_cast<int>(t.shape[1]);
    out.ignore_value = ignore_value;
    const std::size_t n = t.element_count();
    out.labels.resize(n);
    if (t.dtype == DType::Index8) {
        const auto& src = t.index8();
        for (std::size_t i = 0; i < n; ++i) out.labels[i] = src[i];
    } else if (t.dtype == DType::Index32) {
        const auto& src = t.index32();
        for (std::size_t i = 0; i < n; ++i) {
            if (src[i] < 0) {
                throw ShapeError("labels contain a negative value at flat index " +
                                 std::to_string(i));
            }
            out.labels[i] = src[i];
        }
    } else {
        throw ShapeError("labels must be index8 or index32, got " +
                         std::string(dtype_name(t.dtype)));
    }
    return out;
}

Tensor labels_to_tensor(const LabelMask& mask) {
    std::int32_t max_label = 0;
    for (std::int32_t v : mask.labels) max_label = std::max(max_label, v);
    const std::vector<uint32_t> shape{static_cast<uint32_t>(mask.height),
                                      static_cast<uint32_t>(mask.width)};
    if (max_label <= 255) {
        std::vector<uint8_t> data(mask.labels.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = static_cast<uint8_t>(mask.labels[i]);
        }
        return make_index8(shape, std::move(data));
    }
    return make_index32(shape, std::vector<std::int32_t>(mask.labels));
}

Tensor predictions_to_tensor(const PredictionMask& mask) {
    LabelMask tmp;
    tmp.height = mask.height;
    tmp.width = mask.width;
    tmp.labels = mask.labels;
    return labels_to_tensor(tmp);
}

namespace {

// Pixel-outer, class-inner top-2 scan over class-major planes. One stream
// per class plane keeps the 19x1024x1024 benchmark inside the time budget
// on a single core.
void top2_scan(const LogitTensor& logits, std::size_t begin, std::size_t end,
               double* margin_out, std::int32_t* pred_out) {
    const int K = logits.classes;
    const std::size_t plane = logits.pixel_count();
    const double* base = logits.values.data();
    for (std::size_t i = begin; i < end; ++i) {
        const double* p = base + i;
        double best = p[0];
        double second = -std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int k = 1; k < K; ++k) {
            const double v = p[static_cast<std::size_t>(k) * plane];
            if (v > best) {
                second = best;
                best = v;
                arg = k;
            } else if (v > second) {
                second = v;
            }
        }
        margin_out[i] = (K > 1) ? best - second : std::numeric_limits<double>::infinity();
        pred_out[i] = arg;
    }
}

}  // namespace

std::pair<MarginMap, PredictionMask> margins_and_predictions(const LogitTensor& logits,
                                                             int threads) {
    if (logits.classes < 1) {
        throw ShapeError("logits must have at least one class");
    }
    MarginMap m;
    m.height = logits.height;
    m.width = logits.width;
    m.margin.resize(logits.pixel_count());
    PredictionMask pred;
    pred.height = logits.height;
    pred.width = logits.width;
    pred.labels.resize(logits.pixel_count());

    parallel_for(logits.pixel_count(), threads, [&](std::size_t begin, std::size_t end) {
        top2_scan(logits, begin, end, m.margin.data(), pred.labels.data());
    });
    return {std::move(m), std::move(pred)};
}

PredictionMask argmax_predictions(const LogitTensor& logits) {
    return margins_and_predictions(logits).second;
}

MarginMap margins(const LogitTensor& logits) {
    return margins_and_predictions(logits).first;
}

std::pair<MarginMap, MarginMap> class_margins(const LogitTensor& logits, int k) {
    if (k < 0 || k >= logits.classes) {
        throw ConfigError("class index " + std::to_string(k) + " out of range for " +
                          std::to_string(logits.classes) + " classes");
    }
    if (logits.classes < 2) {
        throw ConfigError("class margins need at least two classes");
    }
    const int K = logits.classes;
    const std::size_t plane = logits.pixel_count();
    MarginMap tp;
    tp.height = logits.height;
    tp.width = logits.width;
    tp.margin.resize(plane);
    MarginMap tn = tp;

    const double* base = logits.values.data();
    for (std::size_t i = 0; i < plane; ++i) {
        const double* p = base + i;
        const double fk = p[static_cast<std::size_t>(k) * plane];
        double best = -std::numeric_limits<double>::infinity();
        double best_other = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < K; ++c) {
            const double v = p[static_cast<std::size_t>(c) * plane];
            best = std::max(best, v);
            if (c != k) best_other = std::max(best_other, v);
        }
        tp.margin[i] = fk - best_other;
        tn.margin[i] = best - fk;
    }
    return {std::move(tp), std::move(tn)};
}

}  // namespace segcert
