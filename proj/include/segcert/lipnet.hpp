#ifndef SEGCERT_LIPNET_HPP
#define SEGCERT_LIPNET_HPP

#include <cstdint>
#include <vector>

#include "segcert/logits.hpp"
#include "segcert/tensor.hpp"

namespace segcert {

// channels x height x width feature activations, double precision.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    std::size_t plane() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

FeatureMap feature_from_tensor(const Tensor& t);  // real32, rank 3
Tensor feature_to_tensor(const FeatureMap& f);
LogitTensor feature_to_logits(const FeatureMap& f);

enum class LayerKind : std::uint8_t {
    Dense1x1,     // pointwise channel mixing, weights C_out x C_in
    Conv3x3,      // zero-padded 3x3, weights C_out x C_in x 3 x 3
    GroupSort2,   // ascending sort of channel pairs per pixel; even channels
    BatchCenter,  // per-channel mean subtraction; running stats frozen at eval
    ResidualAdd,  // (block input + x) / 2; closes the current residual block
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::Dense1x1;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<double> weights;       // dense / conv only
    std::vector<double> bias;          // dense / conv, may be empty
    std::vector<double> running_mean;  // batch_center only, size = channels
    double lip_bound = 1.0;            // certified upper bound of this layer
};

struct ToyModel {
    int input_channels = 1;
    int classes = 2;
    int height = 16;
    int width = 16;
    std::vector<LayerSpec> layers;

    double global_lip() const;  // product of stored per-layer bounds
};

// Certified operator-norm upper bound recomputed from the current weights:
// dense = min(Frobenius, sqrt(max-abs-col-sum * max-abs-row-sum)); conv3x3 =
// sum over the 9 taps of each slice's Frobenius norm; other kinds = 1.
double layer_lip_bound(const LayerSpec& layer);

// Product of freshly computed per-layer bounds.
double lipschitz_upper_bound(const ToyModel& model);

// Divides each dense/conv weight by its bound and stores lip_bound = 1.
void renormalize_layers(ToyModel& model);

// Evaluation-mode forward pass (frozen batch statistics).
LogitTensor forward(const ToyModel& model, const FeatureMap& image);

struct Objective {
    enum class Kind { SumMargin, MaskedCrossEntropy };
    Kind kind = Kind::MaskedCrossEntropy;
    double temperature = 1.0;

    static Objective sum_margin() { return {Kind::SumMargin, 1.0}; }
    static Objective masked_ce(double temperature) {
        return {Kind::MaskedCrossEntropy, temperature};
    }
};

struct ObjectiveEval {
    double value = 0.0;
    FeatureMap gradient;  // with respect to the input image
    LogitTensor logits;
};

// Scalar objective over non-ignored pixels plus its input gradient
// (evaluation-mode backpropagation).
ObjectiveEval objective_with_gradient(const ToyModel& model, const FeatureMap& image,
                                      const Objective& objective,
                                      const LabelMask& reference);

double objective_value(const ToyModel& model, const FeatureMap& image,
                       const Objective& objective, const LabelMask& reference);

FeatureMap input_gradient(const ToyModel& model, const FeatureMap& image,
                          const Objective& objective, const LabelMask& reference);

struct SyntheticSample {
    FeatureMap image;  // 1 x size x size, values in [0, 1]
    LabelMask mask;
};

// Soft-edged disks and rectangles on a noise background; deterministic per
// seed. classes must be 2 or 3; size >= 8.
std::vector<SyntheticSample> generate_synthetic_dataset(std::uint64_t seed, int count,
                                                        int size, int classes);

// Stem + residual blocks built from the layer kinds above, initialized near
// bound-1 so post-step renormalization keeps the signal alive.
ToyModel build_toy_model(std::uint64_t seed, int input_channels, int classes,
                         int hidden, int blocks, int height, int width);

// Mini-batch SGD on mean per-pixel cross-entropy of temperature-scaled
// logits; every dense/conv layer is renormalized after each step, so the
// returned model has global_lip() == 1. Throws DivergenceError on NaN loss.
ToyModel train_toy(ToyModel model, const std::vector<SyntheticSample>& dataset,
                   int steps, double lr, double temperature);

double pixel_accuracy(const ToyModel& model, const std::vector<SyntheticSample>& data);

}  // namespace segcert

#endif
