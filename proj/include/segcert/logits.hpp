#ifndef SEGCERT_LOGITS_HPP
#define SEGCERT_LOGITS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "segcert/errors.hpp"
#include "segcert/tensor.hpp"

namespace segcert {

// Model output f(X), classes x height x width, class-major planes.
// Reductions run in double regardless of the file dtype.
struct LogitTensor {
    int classes = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    double at(int k, int y, int x) const {
        return values[(static_cast<std::size_t>(k) * height + y) * width + x];
    }
};

// Ground truth Y. Pixels equal to ignore_value are removed from the
// evaluation set before any certificate.
struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;
    std::int32_t ignore_value = 255;
};

// Argmax decisions.
struct PredictionMask {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;
};

// Top-1 minus top-2 logit per pixel, always >= 0.
struct MarginMap {
    int height = 0;
    int width = 0;
    std::vector<double> margin;
};

LogitTensor logits_from_tensor(const Tensor& t);
Tensor logits_to_tensor(const LogitTensor& logits);
LabelMask labels_from_tensor(const Tensor& t, std::int32_t ignore_value);
Tensor labels_to_tensor(const LabelMask& mask);
Tensor predictions_to_tensor(const PredictionMask& mask);

PredictionMask argmax_predictions(const LogitTensor& logits);
MarginMap margins(const LogitTensor& logits);

// One fused top-2 scan; the two ops above are thin wrappers.
std::pair<MarginMap, PredictionMask> margins_and_predictions(
    const LogitTensor& logits, int threads = 1);

// Per-class raw margins for the worst-case IoU certificate:
//   tp_raw = logit_k - max over other classes (negative where k loses)
//   tn_raw = top1 - logit_k               (zero where k is predicted)
std::pair<MarginMap, MarginMap> class_margins(const LogitTensor& logits, int k);

}  // namespace segcert

#endif
