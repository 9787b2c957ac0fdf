#include "segcert/cert.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "segcert/errors.hpp"
#include "segcert/radix_sort.hpp"

namespace segcert {

namespace {

// x^p for x >= 0, with fast paths for the common norms.
double pow_p(double x, double p) {
    if (p == 1.0) return x;
    if (p == 2.0) return x * x;
    return std::pow(x, p);
}

double root_p(double x, double p) {
    if (p == 1.0) return x;
    if (p == 2.0) return std::sqrt(x);
    return std::pow(x, 1.0 / p);
}

// Budget comparisons carry a one-ULP-class relative slack. The slack only
// ever admits one more flip, which loosens the certificate conservatively.
double budget_threshold(double epsilon, double p) {
    const double b = pow_p(epsilon, p);
    return b + 1e-12 * std::max(1.0, b);
}

void require_labels_match(const LogitTensor& logits, const LabelMask& labels) {
    if (labels.height != logits.height || labels.width != logits.width) {
        throw ShapeError("labels " + std::to_string(labels.height) + "x" +
                         std::to_string(labels.width) + " do not match logits " +
                         std::to_string(logits.height) + "x" +
                         std::to_string(logits.width));
    }
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const std::int32_t v = labels.labels[i];
        if (v == labels.ignore_value) continue;
        if (v < 0 || v >= logits.classes) {
            throw ShapeError("label " + std::to_string(v) + " at flat index " +
                             std::to_string(i) + " outside the " +
                             std::to_string(logits.classes) + "-class range");
        }
    }
}

int positive_class(const CertConfig& cfg) {
    return cfg.class_index < 0 ? 1 : cfg.class_index;
}

}  // namespace

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::PixelAccuracy: return "pixel-acc";
        case Metric::FalseNegativeRate: return "fnr";
        case Metric::Stability: return "stability";
        case Metric::ClassIou: return "class-iou";
    }
    return "unknown";
}

Metric metric_from_name(const std::string& name) {
    if (name == "pixel-acc") return Metric::PixelAccuracy;
    if (name == "fnr") return Metric::FalseNegativeRate;
    if (name == "stability") return Metric::Stability;
    if (name == "class-iou") return Metric::ClassIou;
    throw ConfigError("unknown metric '" + name +
                      "' (expected pixel-acc, fnr, stability, or class-iou)");
}

void validate(const CertConfig& cfg) {
    if (!(cfg.lipschitz > 0.0) || !std::isfinite(cfg.lipschitz)) {
        throw ConfigError("lipschitz bound must be positive and finite, got " +
                          std::to_string(cfg.lipschitz));
    }
    if (std::isinf(cfg.norm_order)) {
        throw ConfigError(
            "p = inf is not supported: the disjoint-support budget decomposition "
            "degenerates at the max norm");
    }
    if (!(cfg.norm_order >= 1.0) || !std::isfinite(cfg.norm_order)) {
        throw ConfigError("norm order p must satisfy 1 <= p < inf, got " +
                          std::to_string(cfg.norm_order));
    }
    for (double eps : cfg.epsilons) {
        if (!(eps >= 0.0) || !std::isfinite(eps)) {
            throw ConfigError("epsilon must be finite and >= 0, got " +
                              std::to_string(eps));
        }
    }
    for (double gamma : cfg.gammas) {
        if (!(gamma > 0.0) || !(gamma <= 1.0)) {
            throw ConfigError("gamma must lie in (0, 1], got " + std::to_string(gamma));
        }
    }
}

double margin_scale(const CertConfig& cfg) {
    const double p = cfg.norm_order;
    return std::exp2((1.0 - p) / p) / cfg.lipschitz;
}

PixelSet full_grid(int height, int width) {
    PixelSet set;
    const std::size_t n = static_cast<std::size_t>(height) * width;
    set.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) set.coords[i] = static_cast<std::uint32_t>(i);
    return set;
}

PixelSet evaluation_set(const LabelMask& labels) {
    PixelSet set;
    set.coords.reserve(labels.labels.size());
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        if (labels.labels[i] != labels.ignore_value) {
            set.coords.push_back(static_cast<std::uint32_t>(i));
        }
    }
    return set;
}

RadiusMap pixel_radii(const MarginMap& margins, const PredictionMask& preds,
                      const LabelMask& labels, const CertConfig& cfg,
                      const PixelSet& set) {
    validate(cfg);
    if (margins.height != labels.height || margins.width != labels.width ||
        preds.height != labels.height || preds.width != labels.width) {
        throw ShapeError("margin / prediction / label shapes disagree");
    }
    const double scale = margin_scale(cfg);
    RadiusMap out;
    out.kind = RadiusKind::Accuracy;
    out.radius.resize(set.size());
    for (std::size_t i = 0; i < set.coords.size(); ++i) {
        const std::uint32_t w = set.coords[i];
        out.radius[i] =
            (preds.labels[w] == labels.labels[w]) ? scale * margins.margin[w] : 0.0;
    }
    return out;
}

RadiusMap stability_radii(const MarginMap& margins, const CertConfig& cfg,
                          const PixelSet& set) {
    validate(cfg);
    const double scale = margin_scale(cfg);
    RadiusMap out;
    out.kind = RadiusKind::Stability;
    out.radius.resize(set.size());
    for (std::size_t i = 0; i < set.coords.size(); ++i) {
        out.radius[i] = scale * margins.margin[set.coords[i]];
    }
    return out;
}

SortedRadii sort_radii(const RadiusMap& radii, double p) {
    SortedRadii out;
    out.sorted = radii.radius;
    sort_nonneg_doubles(out.sorted);
    out.prefix.resize(out.sorted.size() + 1);
    out.prefix[0] = 0.0;
    double acc = 0.0;  // sequential sum: bit-identical for any thread count
    for (std::size_t i = 0; i < out.sorted.size(); ++i) {
        acc += pow_p(out.sorted[i], p);
        out.prefix[i + 1] = acc;
    }
    return out;
}

std::int64_t n_sup(const SortedRadii& sorted, double epsilon, double p) {
    const double thresh = budget_threshold(epsilon, p);
    const auto it =
        std::upper_bound(sorted.prefix.begin(), sorted.prefix.end(), thresh);
    return static_cast<std::int64_t>(it - sorted.prefix.begin()) - 1;
}

double generalized_radius(const SortedRadii& sorted, std::int64_t n_gamma, double p) {
    const auto n = static_cast<std::int64_t>(sorted.sorted.size());
    if (n_gamma < 1 || n_gamma > n) {
        throw ConfigError("flip count " + std::to_string(n_gamma) +
                          " out of range [1, " + std::to_string(n) + "]");
    }
    return root_p(sorted.prefix[static_cast<std::size_t>(n_gamma)], p);
}

std::int64_t gamma_count(double gamma, std::size_t set_size) {
    const auto n = static_cast<std::int64_t>(
        std::ceil(gamma * static_cast<double>(set_size)));
    return std::min<std::int64_t>(std::max<std::int64_t>(n, 0),
                                  static_cast<std::int64_t>(set_size));
}

namespace {

// (|S| - n) / |S| rather than 1 - n/|S|: the integer numerator keeps the
// zero-budget certificate exactly equal to the clean fraction.
double surviving_fraction(std::int64_t flips, std::size_t set_size) {
    return static_cast<double>(static_cast<std::int64_t>(set_size) - flips) /
           static_cast<double>(set_size);
}

std::vector<double> certified_fractions(const SortedRadii& sorted,
                                        const CertConfig& cfg, std::size_t set_size) {
    std::vector<double> out;
    out.reserve(cfg.epsilons.size());
    for (double eps : cfg.epsilons) {
        out.push_back(surviving_fraction(n_sup(sorted, eps, cfg.norm_order), set_size));
    }
    return out;
}

PixelSet positive_set(const LabelMask& labels, int positive) {
    PixelSet set;
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        if (labels.labels[i] == positive && labels.labels[i] != labels.ignore_value) {
            set.coords.push_back(static_cast<std::uint32_t>(i));
        }
    }
    return set;
}

void require_nonempty(const PixelSet& set, const char* what) {
    if (set.coords.empty()) {
        throw UndefinedMetricError(std::string(what) + " is empty: metric undefined");
    }
}

// Everything class_iou_worst_case needs, built in one pass over the planes.
struct IouInstance {
    std::vector<double> tp_costs;  // clean-FN pixels contribute zero-cost entries
    std::vector<double> tn_costs;
    std::int64_t s_k = 0;
    std::int64_t clean_fp = 0;
    std::int64_t clean_fn = 0;
};

IouInstance build_iou_instance(const LogitTensor& logits, const LabelMask& labels,
                               const CertConfig& cfg, int k) {
    if (k < 0 || k >= logits.classes) {
        throw ConfigError("class index " + std::to_string(k) + " out of range for " +
                          std::to_string(logits.classes) + " classes");
    }
    const double scale = margin_scale(cfg);
    const double p = cfg.norm_order;
    const int K = logits.classes;
    const std::size_t plane = logits.pixel_count();
    const double* base = logits.values.data();

    IouInstance inst;
    for (std::size_t i = 0; i < plane; ++i) {
        const std::int32_t y = labels.labels[i];
        if (y == labels.ignore_value) continue;
        const double* px = base + i;
        const double fk = px[static_cast<std::size_t>(k) * plane];
        double best = px[0];
        int arg = 0;
        for (int c = 1; c < K; ++c) {
            const double v = px[static_cast<std::size_t>(c) * plane];
            if (v > best) {
                best = v;
                arg = c;
            }
        }
        if (y == k) {
            ++inst.s_k;
            if (arg == k) {
                // tp_raw = f_k minus the best other class; equals best minus
                // second-best here, recovered without a second scan below.
                double best_other = -std::numeric_limits<double>::infinity();
                for (int c = 0; c < K; ++c) {
                    if (c == k) continue;
                    best_other =
                        std::max(best_other, px[static_cast<std::size_t>(c) * plane]);
                }
                inst.tp_costs.push_back(pow_p(scale * (fk - best_other), p));
            } else {
                ++inst.clean_fn;
                inst.tp_costs.push_back(0.0);
            }
        } else {
            if (arg == k) {
                ++inst.clean_fp;
            } else {
                inst.tn_costs.push_back(pow_p(scale * (best - fk), p));
            }
        }
    }
    return inst;
}

std::vector<double> prefix_sums(std::vector<double> costs) {
    sort_nonneg_doubles(costs);
    std::vector<double> prefix(costs.size() + 1);
    prefix[0] = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        acc += costs[i];
        prefix[i + 1] = acc;
    }
    return prefix;
}

// Greedy minimum of (s_k - a) / (s_k + clean_fp + b) over feasible (a, b).
// The numerator depends only on a and the denominator only on b, so taking
// the cheapest a TP flips and filling the residual with the cheapest TN
// flips dominates every allocation with the same counts.
std::pair<double, std::int64_t> worst_iou_at(const std::vector<double>& tp_prefix,
                                             const std::vector<double>& tn_prefix,
                                             std::int64_t s_k, std::int64_t clean_fp,
                                             double thresh) {
    const std::size_t a_max = tp_prefix.size() - 1;
    std::size_t b = tn_prefix.size() - 1;
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_flips = 0;
    for (std::size_t a = 0; a <= a_max && tp_prefix[a] <= thresh; ++a) {
        const double residual = thresh - tp_prefix[a];
        while (b > 0 && tn_prefix[b] > residual) --b;
        const double iou = (static_cast<double>(s_k) - static_cast<double>(a)) /
                           static_cast<double>(s_k + clean_fp + static_cast<std::int64_t>(b));
        if (iou < best) {
            best = iou;
            best_flips = static_cast<std::int64_t>(a + b);
        }
    }
    return {best, best_flips};
}

}  // namespace

std::vector<double> crpa(const LogitTensor& logits, const LabelMask& labels,
                         const CertConfig& cfg, const PixelSet& set) {
    validate(cfg);
    require_nonempty(set, "pixel set");
    auto [m, preds] = margins_and_predictions(logits);
    const SortedRadii sorted =
        sort_radii(pixel_radii(m, preds, labels, cfg, set), cfg.norm_order);
    return certified_fractions(sorted, cfg, set.size());
}

std::vector<double> fnr_certificate(const LogitTensor& logits, const LabelMask& labels,
                                    const CertConfig& cfg) {
    validate(cfg);
    const PixelSet s1 = positive_set(labels, positive_class(cfg));
    require_nonempty(s1, "positive pixel set");
    auto [m, preds] = margins_and_predictions(logits);
    const SortedRadii sorted =
        sort_radii(pixel_radii(m, preds, labels, cfg, s1), cfg.norm_order);
    std::vector<double> out;
    out.reserve(cfg.epsilons.size());
    for (double eps : cfg.epsilons) {
        out.push_back(static_cast<double>(n_sup(sorted, eps, cfg.norm_order)) /
                      static_cast<double>(s1.size()));
    }
    return out;
}

std::vector<double> fnr_radius(const LogitTensor& logits, const LabelMask& labels,
                               const CertConfig& cfg) {
    validate(cfg);
    const PixelSet s1 = positive_set(labels, positive_class(cfg));
    require_nonempty(s1, "positive pixel set");
    auto [m, preds] = margins_and_predictions(logits);
    const SortedRadii sorted =
        sort_radii(pixel_radii(m, preds, labels, cfg, s1), cfg.norm_order);
    std::vector<double> out;
    out.reserve(cfg.gammas.size());
    for (double gamma : cfg.gammas) {
        out.push_back(generalized_radius(sorted, gamma_count(gamma, s1.size()),
                                         cfg.norm_order));
    }
    return out;
}

StabilityCertificate stability_certificate(const LogitTensor& logits,
                                           const CertConfig& cfg, const PixelSet& set) {
    validate(cfg);
    require_nonempty(set, "pixel set");
    const MarginMap m = margins(logits);
    const SortedRadii sorted = sort_radii(stability_radii(m, cfg, set), cfg.norm_order);
    StabilityCertificate out;
    out.crs = certified_fractions(sorted, cfg, set.size());
    out.gamma_radius.reserve(cfg.gammas.size());
    for (double gamma : cfg.gammas) {
        out.gamma_radius.push_back(
            generalized_radius(sorted, gamma_count(gamma, set.size()), cfg.norm_order));
    }
    return out;
}

std::vector<double> class_iou_worst_case(const LogitTensor& logits,
                                         const LabelMask& labels, const CertConfig& cfg,
                                         int k) {
    validate(cfg);
    require_labels_match(logits, labels);
    const IouInstance inst = build_iou_instance(logits, labels, cfg, k);
    if (inst.s_k == 0) {
        throw UndefinedMetricError("class " + std::to_string(k) +
                                   " has no ground-truth pixels: IoU undefined");
    }
    const std::vector<double> tp_prefix = prefix_sums(inst.tp_costs);
    const std::vector<double> tn_prefix = prefix_sums(inst.tn_costs);
    std::vector<double> out;
    out.reserve(cfg.epsilons.size());
    for (double eps : cfg.epsilons) {
        out.push_back(worst_iou_at(tp_prefix, tn_prefix, inst.s_k, inst.clean_fp,
                                   budget_threshold(eps, cfg.norm_order))
                          .first);
    }
    return out;
}

CertificateReport certify_report(const LogitTensor& logits, const LabelMask* labels,
                                 const CertConfig& cfg, Metric metric, int threads) {
    validate(cfg);
    if (metric != Metric::Stability && labels == nullptr) {
        throw MissingLabelsError(std::string(metric_name(metric)) +
                                 " requires ground-truth labels");
    }
    if (labels != nullptr) require_labels_match(logits, *labels);

    const auto t0 = std::chrono::steady_clock::now();
    CertificateReport report;
    report.metric = metric;
    report.lipschitz = cfg.lipschitz;
    report.norm_order = cfg.norm_order;

    switch (metric) {
        case Metric::PixelAccuracy: {
            const PixelSet set = evaluation_set(*labels);
            require_nonempty(set, "pixel set");
            auto [m, preds] = margins_and_predictions(logits, threads);
            std::int64_t correct = 0;
            for (std::uint32_t w : set.coords) {
                correct += (preds.labels[w] == labels->labels[w]) ? 1 : 0;
            }
            const SortedRadii sorted =
                sort_radii(pixel_radii(m, preds, *labels, cfg, set), cfg.norm_order);
            report.set_size = static_cast<std::int64_t>(set.size());
            report.clean_value =
                static_cast<double>(correct) / static_cast<double>(set.size());
            for (double eps : cfg.epsilons) {
                const std::int64_t n = n_sup(sorted, eps, cfg.norm_order);
                report.per_epsilon.push_back({eps, n, surviving_fraction(n, set.size())});
            }
            for (double gamma : cfg.gammas) {
                report.per_gamma.push_back(
                    {gamma, generalized_radius(sorted, gamma_count(gamma, set.size()),
                                               cfg.norm_order)});
            }
            break;
        }
        case Metric::FalseNegativeRate: {
            const int positive = positive_class(cfg);
            if (positive >= logits.classes) {
                throw ConfigError("positive class " + std::to_string(positive) +
                                  " out of range for " + std::to_string(logits.classes) +
                                  " classes");
            }
            const PixelSet s1 = positive_set(*labels, positive);
            require_nonempty(s1, "positive pixel set");
            auto [m, preds] = margins_and_predictions(logits, threads);
            std::int64_t missed = 0;
            for (std::uint32_t w : s1.coords) {
                missed += (preds.labels[w] != positive) ? 1 : 0;
            }
            const SortedRadii sorted =
                sort_radii(pixel_radii(m, preds, *labels, cfg, s1), cfg.norm_order);
            report.set_size = static_cast<std::int64_t>(s1.size());
            report.clean_value =
                static_cast<double>(missed) / static_cast<double>(s1.size());
            for (double eps : cfg.epsilons) {
                const std::int64_t n = n_sup(sorted, eps, cfg.norm_order);
                report.per_epsilon.push_back(
                    {eps, n, static_cast<double>(n) / static_cast<double>(s1.size())});
            }
            for (double gamma : cfg.gammas) {
                report.per_gamma.push_back(
                    {gamma, generalized_radius(sorted, gamma_count(gamma, s1.size()),
                                               cfg.norm_order)});
            }
            break;
        }
        case Metric::Stability: {
            const PixelSet set = (labels != nullptr)
                                     ? evaluation_set(*labels)
                                     : full_grid(logits.height, logits.width);
            require_nonempty(set, "pixel set");
            auto [m, preds] = margins_and_predictions(logits, threads);
            (void)preds;
            const SortedRadii sorted =
                sort_radii(stability_radii(m, cfg, set), cfg.norm_order);
            report.set_size = static_cast<std::int64_t>(set.size());
            const std::int64_t ties = n_sup(sorted, 0.0, cfg.norm_order);
            report.clean_value = surviving_fraction(ties, set.size());
            for (double eps : cfg.epsilons) {
                const std::int64_t n = n_sup(sorted, eps, cfg.norm_order);
                report.per_epsilon.push_back({eps, n, surviving_fraction(n, set.size())});
            }
            for (double gamma : cfg.gammas) {
                report.per_gamma.push_back(
                    {gamma, generalized_radius(sorted, gamma_count(gamma, set.size()),
                                               cfg.norm_order)});
            }
            break;
        }
        case Metric::ClassIou: {
            if (cfg.class_index < 0) {
                throw ConfigError("class-iou requires a class index");
            }
            const IouInstance inst =
                build_iou_instance(logits, *labels, cfg, cfg.class_index);
            if (inst.s_k == 0) {
                throw UndefinedMetricError("class " + std::to_string(cfg.class_index) +
                                           " has no ground-truth pixels: IoU undefined");
            }
            const std::vector<double> tp_prefix = prefix_sums(inst.tp_costs);
            const std::vector<double> tn_prefix = prefix_sums(inst.tn_costs);
            report.set_size = inst.s_k;
            const std::int64_t clean_tp = inst.s_k - inst.clean_fn;
            report.clean_value = static_cast<double>(clean_tp) /
                                 static_cast<double>(inst.s_k + inst.clean_fp);
            for (double eps : cfg.epsilons) {
                const auto [iou, flips] =
                    worst_iou_at(tp_prefix, tn_prefix, inst.s_k, inst.clean_fp,
                                 budget_threshold(eps, cfg.norm_order));
                report.per_epsilon.push_back({eps, flips, iou});
            }
            break;
        }
    }

    const auto t1 = std::chrono::steady_clock::now();
    report.certify_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    return report;
}

}  // namespace segcert
