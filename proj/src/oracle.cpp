#include "segcert/oracle.hpp"

#include <bit>
#include <cstdint>
#include <limits>
#include <string>

#include "segcert/errors.hpp"

namespace segcert {

namespace {

constexpr int kMaxEnumeration = 20;
constexpr int kMaxIouItems = 16;

// sums[mask] = sum of costs over set bits, built bottom-up in O(2^n).
std::vector<double> subset_sums(const std::vector<double>& costs) {
    const int n = static_cast<int>(costs.size());
    std::vector<double> sums(std::size_t{1} << n, 0.0);
    for (std::uint32_t mask = 1; mask < sums.size(); ++mask) {
        const std::uint32_t low = mask & (~mask + 1);
        sums[mask] = sums[mask ^ low] + costs[std::countr_zero(low)];
    }
    return sums;
}

std::vector<int> mask_to_indices(std::uint32_t mask) {
    std::vector<int> out;
    while (mask != 0) {
        const std::uint32_t low = mask & (~mask + 1);
        out.push_back(std::countr_zero(low));
        mask ^= low;
    }
    return out;
}

void check_enumeration_size(std::size_t n, int cap, const char* what) {
    if (n > static_cast<std::size_t>(cap)) {
        throw ConfigError(std::string(what) + " instance too large for enumeration: " +
                          std::to_string(n) + " items exceeds cap " + std::to_string(cap));
    }
}

}  // namespace

AttackAllocation exact_max_flips_allocation(const std::vector<double>& costs,
                                            double budget) {
    check_enumeration_size(costs.size(), kMaxEnumeration, "max-flips");
    const std::vector<double> sums = subset_sums(costs);
    int best_count = -1;
    std::uint32_t best_mask = 0;
    for (std::uint32_t mask = 0; mask < sums.size(); ++mask) {
        if (sums[mask] <= budget) {
            const int count = std::popcount(mask);
            if (count > best_count) {
                best_count = count;
                best_mask = mask;
            }
        }
    }
    AttackAllocation alloc;
    alloc.flipped = mask_to_indices(best_mask);
    alloc.spend = sums[best_mask];
    return alloc;
}

int exact_max_flips(const std::vector<double>& costs, double budget) {
    return static_cast<int>(exact_max_flips_allocation(costs, budget).flipped.size());
}

double exact_min_budget(const std::vector<double>& costs, int n_target) {
    check_enumeration_size(costs.size(), kMaxEnumeration, "min-budget");
    if (n_target < 1 || n_target > static_cast<int>(costs.size())) {
        throw ConfigError("min-budget target " + std::to_string(n_target) +
                          " out of range for " + std::to_string(costs.size()) + " items");
    }
    const std::vector<double> sums = subset_sums(costs);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < sums.size(); ++mask) {
        if (std::popcount(mask) >= n_target && sums[mask] < best) {
            best = sums[mask];
        }
    }
    return best;
}

double exact_worst_iou(const std::vector<double>& tp_costs,
                       const std::vector<double>& tn_costs, int s_k_size,
                       int clean_fp, double budget) {
    check_enumeration_size(tp_costs.size() + tn_costs.size(), kMaxIouItems,
                           "worst-iou");
    if (s_k_size < static_cast<int>(tp_costs.size()) || s_k_size <= 0) {
        throw ConfigError("worst-iou requires 0 < |tp_costs| <= s_k_size");
    }
    if (clean_fp < 0) {
        throw ConfigError("worst-iou requires clean_fp >= 0");
    }
    const std::vector<double> tp_sums = subset_sums(tp_costs);
    const std::vector<double> tn_sums = subset_sums(tn_costs);
    double worst = std::numeric_limits<double>::infinity();
    for (std::uint32_t a_mask = 0; a_mask < tp_sums.size(); ++a_mask) {
        if (tp_sums[a_mask] > budget) continue;
        const double numerator = s_k_size - std::popcount(a_mask);
        for (std::uint32_t b_mask = 0; b_mask < tn_sums.size(); ++b_mask) {
            if (tp_sums[a_mask] + tn_sums[b_mask] > budget) continue;
            const double denominator = s_k_size + clean_fp + std::popcount(b_mask);
            worst = std::min(worst, numerator / denominator);
        }
    }
    return worst;
}

}  // namespace segcert
