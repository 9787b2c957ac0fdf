#ifndef SEGCERT_ORACLE_HPP
#define SEGCERT_ORACLE_HPP

#include <vector>

namespace segcert {

// Brute-force reference solvers. Exponential time by design; they exist to
// pin down the greedy engine exactly on small instances. Inputs are raw cost
// lists (already scaled and raised to the p-th power), so these test the
// combinatorial layer in isolation. No floating tolerance anywhere here.

// One selected attack: which pixels get flipped and what it costs.
struct AttackAllocation {
    std::vector<int> flipped;     // indices into the tp / primary cost list
    std::vector<int> tn_flipped;  // indices into the tn cost list (IoU only)
    double spend = 0.0;
};

// Maximum subset cardinality with cost sum <= budget, over all 2^n subsets.
// Requires |costs| <= 20.
int exact_max_flips(const std::vector<double>& costs, double budget);
AttackAllocation exact_max_flips_allocation(const std::vector<double>& costs,
                                            double budget);

// Minimum cost sum over subsets of size >= n_target.
// Requires |costs| <= 20 and 1 <= n_target <= |costs|.
double exact_min_budget(const std::vector<double>& costs, int n_target);

// Exact minimum of (s_k_size - |A|) / (s_k_size + clean_fp + |B|) over all
// pairs A subset of tp_costs, B subset of tn_costs with total cost <= budget.
// Requires |tp_costs| + |tn_costs| <= 16 and s_k_size >= |tp_costs| >= 0.
double exact_worst_iou(const std::vector<double>& tp_costs,
                       const std::vector<double>& tn_costs, int s_k_size,
                       int clean_fp, double budget);

}  // namespace segcert

#endif
