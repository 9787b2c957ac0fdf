#include "segcert/attack.hpp"

#include <cmath>
#include <cstddef>
#include <utility>

#include "segcert/errors.hpp"
#include "segcert/rng.hpp"

namespace segcert {

namespace {

double l2_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double delta_norm(const FeatureMap& x, const FeatureMap& origin) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const double d = x.values[i] - origin.values[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

// Clip to the box, then pull back onto the ball; twice. The projection
// returns a convex combination of two box points, so the second round
// leaves a point that satisfies both constraints exactly.
void clip_then_project(FeatureMap& x, const FeatureMap& origin, double epsilon) {
    for (int round = 0; round < 2; ++round) {
        for (double& v : x.values) v = std::min(1.0, std::max(0.0, v));
        const double norm = delta_norm(x, origin);
        if (norm > epsilon) {
            const double shrink = epsilon / norm;
            for (std::size_t i = 0; i < x.values.size(); ++i) {
                x.values[i] =
                    origin.values[i] + shrink * (x.values[i] - origin.values[i]);
            }
        }
    }
}

double accuracy_of_logits(const LogitTensor& logits, const LabelMask& labels) {
    const PredictionMask preds = argmax_predictions(logits);
    std::int64_t correct = 0;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < preds.labels.size(); ++i) {
        if (labels.labels[i] == labels.ignore_value) continue;
        ++total;
        correct += (preds.labels[i] == labels.labels[i]) ? 1 : 0;
    }
    if (total == 0) {
        throw UndefinedMetricError("attack target has no unmasked pixels");
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

struct AttackRun {
    FeatureMap best;
    double best_accuracy = 0.0;
};

// One PGD descent from `start`, tracking the best iterate by accuracy.
void descend(const ToyModel& model, const FeatureMap& origin, const FeatureMap& start,
             const LabelMask& labels, const AttackConfig& cfg, const Objective& objective,
             double sign, AttackRun& run) {
    const double step =
        cfg.step_size > 0.0 ? cfg.step_size : 2.5 * cfg.epsilon / cfg.steps;
    FeatureMap x = start;
    clip_then_project(x, origin, cfg.epsilon);
    for (int t = 0; t <= cfg.steps; ++t) {
        ObjectiveEval eval = objective_with_gradient(model, x, objective, labels);
        const double acc = accuracy_of_logits(eval.logits, labels);
        if (acc < run.best_accuracy) {
            run.best_accuracy = acc;
            run.best = x;
        }
        if (t == cfg.steps) break;
        const double gnorm = l2_norm(eval.gradient.values);
        if (gnorm == 0.0) break;
        const double scale = sign * step / gnorm;
        for (std::size_t i = 0; i < x.values.size(); ++i) {
            x.values[i] += scale * eval.gradient.values[i];
        }
        clip_then_project(x, origin, cfg.epsilon);
    }
}

FeatureMap pgd_l2_impl(const ToyModel& model, const FeatureMap& image,
                       const LabelMask& labels, const AttackConfig& cfg,
                       const FeatureMap* warm_start) {
    if (cfg.epsilon < 0.0 || cfg.steps < 1 || cfg.restarts < 1) {
        throw ConfigError("attack requires epsilon >= 0, steps >= 1, restarts >= 1");
    }
    if (image.channels != model.input_channels || image.height != model.height ||
        image.width != model.width) {
        throw ShapeError("attack image shape does not match the model");
    }
    if (cfg.epsilon == 0.0) return image;

    const Objective objective =
        cfg.objective == AttackConfig::Objective::MaximizeMisclassified
            ? Objective::masked_ce(1.0)
            : Objective::sum_margin();
    const double sign =
        cfg.objective == AttackConfig::Objective::MaximizeMisclassified ? 1.0 : -1.0;

    AttackRun run;
    run.best = image;
    run.best_accuracy = attacked_accuracy(model, image, labels);

    Rng rng(cfg.seed);
    if (warm_start != nullptr) {
        descend(model, image, *warm_start, labels, cfg, objective, sign, run);
    }
    for (int r = 0; r < cfg.restarts; ++r) {
        FeatureMap start = image;
        if (r > 0) {
            // Random interior start: Gaussian direction, radius u * epsilon.
            std::vector<double> noise(image.values.size());
            for (double& v : noise) v = rng.normal();
            const double norm = l2_norm(noise);
            if (norm > 0.0) {
                const double radius = cfg.epsilon * rng.uniform();
                for (std::size_t i = 0; i < start.values.size(); ++i) {
                    start.values[i] += noise[i] * (radius / norm);
                }
            }
        }
        descend(model, image, start, labels, cfg, objective, sign, run);
    }
    return run.best;
}

}  // namespace

double attacked_accuracy(const ToyModel& model, const FeatureMap& image,
                         const LabelMask& labels) {
    return accuracy_of_logits(forward(model, image), labels);
}

FeatureMap pgd_l2(const ToyModel& model, const FeatureMap& image, const LabelMask& labels,
                  const AttackConfig& cfg) {
    return pgd_l2_impl(model, image, labels, cfg, nullptr);
}

AttackSweep empirical_accuracy_under_attack(const ToyModel& model,
                                            const std::vector<SyntheticSample>& dataset,
                                            const std::vector<double>& epsilons,
                                            const AttackConfig& base) {
    if (dataset.empty()) throw ConfigError("attack sweep needs a non-empty dataset");
    AttackSweep sweep;
    sweep.per_sample.assign(epsilons.size(),
                            std::vector<double>(dataset.size(), 0.0));
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const SyntheticSample& sample = dataset[s];
        FeatureMap warm;          // previous epsilon's adversarial example
        bool have_warm = false;
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
            AttackConfig cfg = base;
            cfg.epsilon = epsilons[e];
            cfg.seed = base.seed + 0x9E3779B97F4A7C15ull * (s + 1);
            const FeatureMap adv =
                pgd_l2_impl(model, sample.image, sample.mask, cfg,
                            have_warm ? &warm : nullptr);
            sweep.per_sample[e][s] = attacked_accuracy(model, adv, sample.mask);
            warm = adv;
            have_warm = true;
        }
    }
    sweep.mean_accuracy.resize(epsilons.size());
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        double acc = 0.0;
        for (double v : sweep.per_sample[e]) acc += v;
        sweep.mean_accuracy[e] = acc / static_cast<double>(dataset.size());
    }
    return sweep;
}

}  // namespace segcert
