#ifndef SEGCERT_ATTACK_HPP
#define SEGCERT_ATTACK_HPP

#include <cstdint>
#include <vector>

#include "segcert/lipnet.hpp"

namespace segcert {

struct AttackConfig {
    double epsilon = 0.0;  // l2 budget, >= 0
    int steps = 100;
    double step_size = 0.0;  // <= 0 selects 2.5 * epsilon / steps
    int restarts = 3;
    enum class Objective { MaximizeMisclassified, UntargetedMargin };
    Objective objective = Objective::MaximizeMisclassified;
    std::uint64_t seed = 0;
};

// Projected gradient attack in the l2 ball around `image`. The result
// satisfies ||result - image||_2 <= epsilon and stays inside [0,1]^n; the
// best iterate across restarts and steps by attacked pixel accuracy wins.
FeatureMap pgd_l2(const ToyModel& model, const FeatureMap& image,
                  const LabelMask& labels, const AttackConfig& cfg);

// Fraction of non-ignored pixels argmax-classified as their label.
double attacked_accuracy(const ToyModel& model, const FeatureMap& image,
                         const LabelMask& labels);

struct AttackSweep {
    std::vector<double> mean_accuracy;              // one entry per epsilon
    std::vector<std::vector<double>> per_sample;    // [epsilon][sample]
};

// Attacks every sample at every epsilon (in input order). Each sample's
// previous-epsilon solution, scaled into the new budget, seeds the next
// attack, which makes accuracy non-increasing over an ascending grid.
AttackSweep empirical_accuracy_under_attack(const ToyModel& model,
                                            const std::vector<SyntheticSample>& dataset,
                                            const std::vector<double>& epsilons,
                                            const AttackConfig& base);

}  // namespace segcert

#endif
