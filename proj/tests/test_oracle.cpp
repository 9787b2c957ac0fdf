#include <vector>

#include "doctest.h"
#include "segcert/errors.hpp"
#include "segcert/oracle.hpp"

using namespace segcert;

TEST_CASE("max flips picks the cheapest feasible subset") {
    const std::vector<double> costs{0.01, 0.04, 0.09, 0.16};
    CHECK(exact_max_flips(costs, 0.09) == 2);
    CHECK(exact_max_flips(costs, 0.05) == 2);
    CHECK(exact_max_flips(costs, 0.0499) == 1);
    CHECK(exact_max_flips(costs, 0.29) == 3);
    CHECK(exact_max_flips(costs, 0.005) == 0);
    CHECK(exact_max_flips(costs, 1.0) == 4);
}

TEST_CASE("max flips on an empty list is zero") {
    CHECK(exact_max_flips({}, 1.0) == 0);
}

TEST_CASE("zero-cost entries flip at zero budget") {
    CHECK(exact_max_flips({0.0, 0.0, 0.5}, 0.0) == 2);
}

TEST_CASE("the feasibility test carries no tolerance") {
    // 0.01 + 0.04 rounds to exactly 0.05 in binary64, so equality passes,
    // while any smaller budget fails even by one ulp.
    CHECK(exact_max_flips({0.01, 0.04}, 0.05) == 2);
    CHECK(exact_max_flips({0.01, 0.04}, 0.049999999999999996) == 1);
}

TEST_CASE("allocation reports the chosen indices and spend") {
    const AttackAllocation a =
        exact_max_flips_allocation({0.04, 0.01, 0.16}, 0.05);
    CHECK(a.flipped == std::vector<int>{0, 1});
    CHECK(a.spend == 0.01 + 0.04);
}

TEST_CASE("min budget over subsets of at least the target size") {
    CHECK(exact_min_budget({0.0, 0.01, 0.04}, 2) == 0.01);
    CHECK(exact_min_budget({0.0, 0.01, 0.04}, 1) == 0.0);
    CHECK(exact_min_budget({0.0, 0.01, 0.04}, 3) == 0.05);
    CHECK(exact_min_budget({0.3}, 1) == 0.3);
}

TEST_CASE("min budget and max flips are dual") {
    const std::vector<double> costs{0.02, 0.11, 0.05, 0.07, 0.0, 0.29};
    for (int n = 1; n <= 6; ++n) {
        const double b = exact_min_budget(costs, n);
        CHECK(exact_max_flips(costs, b) >= n);
    }
}

TEST_CASE("worst iou frozen instance collapses to zero") {
    CHECK(exact_worst_iou({0.01, 0.04}, {0.02, 0.09}, 2, 0, 0.05) == 0.0);
}

TEST_CASE("worst iou with no budget is the clean iou") {
    // s_k = 3, one clean FN baked in as a zero-cost tp entry, one clean FP.
    const double v = exact_worst_iou({0.25, 0.16, 0.0}, {0.09}, 3, 1, 0.0);
    // Zero-cost entries still flip: the clean FN entry costs nothing.
    CHECK(v == doctest::Approx(2.0 / 4.0).epsilon(1e-15));
}

TEST_CASE("worst iou spends leftover budget on false positives") {
    // Budget kills one TP (0.01) and one TN (0.02): (2-1)/(2+0+1) = 1/3.
    const double v = exact_worst_iou({0.01, 0.5}, {0.02, 0.9}, 2, 0, 0.031);
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("worst iou prefers the numerator when both moves fit") {
    // One unit of budget can either flip the TP (iou (1-1)/(1+0) = 0) or a
    // TN (iou 1/2); flipping the TP is strictly worse for the defender.
    const double v = exact_worst_iou({1.0}, {1.0}, 1, 0, 1.0);
    CHECK(v == 0.0);
}

TEST_CASE("oracles reject instances past the enumeration caps") {
    CHECK_THROWS_AS(exact_max_flips(std::vector<double>(21, 0.1), 1.0), ConfigError);
    CHECK_THROWS_AS(exact_min_budget(std::vector<double>(21, 0.1), 2), ConfigError);
    CHECK_THROWS_AS(exact_worst_iou(std::vector<double>(9, 0.1),
                                    std::vector<double>(8, 0.1), 9, 0, 1.0),
                    ConfigError);
    CHECK_THROWS_AS(exact_min_budget({0.1}, 2), ConfigError);
    CHECK_THROWS_AS(exact_min_budget({0.1}, 0), ConfigError);
}
