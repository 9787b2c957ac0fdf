#ifndef SEGCERT_CERT_HPP
#define SEGCERT_CERT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "segcert/logits.hpp"

namespace segcert {

// Certified metric selector.
enum class Metric { PixelAccuracy, FalseNegativeRate, Stability, ClassIou };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);  // throws ConfigError

struct CertConfig {
    double lipschitz = 1.0;        // global lp Lipschitz upper bound, > 0
    double norm_order = 2.0;       // p in [1, inf)
    std::vector<double> epsilons;  // attack budgets, each >= 0
    std::vector<double> gammas;    // degradation fractions, each in (0, 1]
    int class_index = -1;          // IoU class / FNR positive class; -1 = unset
};

void validate(const CertConfig& cfg);  // throws ConfigError

// 2^{(1-p)/p} / L: multiplies a logit margin into a certified input radius.
double margin_scale(const CertConfig& cfg);

// Flat row-major indices of the pixels a certificate ranges over.
struct PixelSet {
    std::vector<std::uint32_t> coords;
    std::size_t size() const { return coords.size(); }
};

PixelSet full_grid(int height, int width);
PixelSet evaluation_set(const LabelMask& labels);  // drops ignore_value pixels

enum class RadiusKind { Accuracy, Stability, TruePositive, TrueNegative };

// Certified per-pixel radii over a PixelSet, in the set's coord order.
struct RadiusMap {
    RadiusKind kind = RadiusKind::Accuracy;
    std::vector<double> radius;
};

// radius = 1{pred == label} * scale * margin, over `set` (which must not
// contain ignored pixels).
RadiusMap pixel_radii(const MarginMap& margins, const PredictionMask& preds,
                      const LabelMask& labels, const CertConfig& cfg,
                      const PixelSet& set);

// radius = scale * margin over `set`; ground truth never consulted.
RadiusMap stability_radii(const MarginMap& margins, const CertConfig& cfg,
                          const PixelSet& set);

// Radii sorted ascending plus prefix sums of radius^p; prefix[n] is the
// minimum total p-powered budget that flips some n pixels. prefix[0] = 0.
struct SortedRadii {
    std::vector<double> sorted;
    std::vector<double> prefix;
};

SortedRadii sort_radii(const RadiusMap& radii, double p);

// Largest n with prefix[n] <= eps^p (plus a 1e-12 relative slack that only
// loosens the certificate in the conservative direction).
std::int64_t n_sup(const SortedRadii& sorted, double epsilon, double p);

// prefix[n_gamma]^{1/p}: a budget below this cannot flip n_gamma pixels.
// Requires 1 <= n_gamma <= |sorted|.
double generalized_radius(const SortedRadii& sorted, std::int64_t n_gamma, double p);

std::int64_t gamma_count(double gamma, std::size_t set_size);  // ceil(gamma * |S|)

// Per-epsilon certified lower bounds on pixel accuracy over `set`.
std::vector<double> crpa(const LogitTensor& logits, const LabelMask& labels,
                         const CertConfig& cfg, const PixelSet& set);

// Per-epsilon certified upper bounds on the false negative rate over
// S_1 = {label == positive class}. Throws UndefinedMetricError when empty.
std::vector<double> fnr_certificate(const LogitTensor& logits, const LabelMask& labels,
                                    const CertConfig& cfg);

// Per-gamma minimum budgets that could push FNR to gamma.
std::vector<double> fnr_radius(const LogitTensor& logits, const LabelMask& labels,
                               const CertConfig& cfg);

struct StabilityCertificate {
    std::vector<double> crs;           // per epsilon
    std::vector<double> gamma_radius;  // per gamma
};

StabilityCertificate stability_certificate(const LogitTensor& logits,
                                           const CertConfig& cfg, const PixelSet& set);

// Per-epsilon certified lower bounds on the IoU of class k.
std::vector<double> class_iou_worst_case(const LogitTensor& logits,
                                         const LabelMask& labels, const CertConfig& cfg,
                                         int k);

struct EpsilonRecord {
    double epsilon = 0.0;
    std::int64_t n_flippable = 0;
    double value = 0.0;  // crpa | crs | fnr_bound | worst_class_iou
};

struct GammaRecord {
    double gamma = 0.0;
    double radius_lower_bound = 0.0;
};

struct CertificateReport {
    Metric metric = Metric::PixelAccuracy;
    double lipschitz = 1.0;
    double norm_order = 2.0;
    std::int64_t set_size = 0;   // |S| (|S_1| for FNR, |S_k| for IoU)
    double clean_value = 0.0;    // metric at epsilon = 0
    std::vector<EpsilonRecord> per_epsilon;  // input epsilon order
    std::vector<GammaRecord> per_gamma;      // input gamma order
    double certify_ms = 0.0;
};

// labels may be null only for Metric::Stability. threads parallelizes the
// top-2 scan; results are bit-identical for any thread count.
CertificateReport certify_report(const LogitTensor& logits, const LabelMask* labels,
                                 const CertConfig& cfg, Metric metric, int threads = 1);

}  // namespace segcert

#endif
