#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "doctest.h"
#include "segcert/cert.hpp"
#include "segcert/errors.hpp"
#include "segcert/oracle.hpp"

using namespace segcert;

namespace {

LogitTensor grid(int classes, int height, int width, std::vector<double> values) {
    LogitTensor t;
    t.classes = classes;
    t.height = height;
    t.width = width;
    t.values = std::move(values);
    return t;
}

LabelMask mask_of(int height, int width, std::vector<std::int32_t> labels) {
    LabelMask m;
    m.height = height;
    m.width = width;
    m.labels = std::move(labels);
    return m;
}

RadiusMap radii_of(std::vector<double> values) {
    RadiusMap r;
    r.radius = std::move(values);
    return r;
}

// Deterministic uniform doubles for property sweeps.
struct Lcg {
    std::uint64_t state;
    explicit Lcg(std::uint64_t seed) : state(seed) {}
    double next() {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        return static_cast<double>(state >> 11) * 0x1.0p-53;
    }
};

}  // namespace

TEST_CASE("metric names round-trip and unknown names are rejected") {
    for (Metric m : {Metric::PixelAccuracy, Metric::FalseNegativeRate,
                     Metric::Stability, Metric::ClassIou}) {
        CHECK(metric_from_name(metric_name(m)) == m);
    }
    CHECK_THROWS_AS(metric_from_name("miou"), ConfigError);
}

TEST_CASE("config validation rejects each bad field") {
    CertConfig cfg;
    cfg.epsilons = {0.0, 0.1};
    cfg.gammas = {1.0, 0.5};
    CHECK_NOTHROW(validate(cfg));

    CertConfig bad = cfg;
    bad.lipschitz = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad.lipschitz = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate(bad), ConfigError);

    bad = cfg;
    bad.norm_order = 0.5;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad.norm_order = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate(bad), ConfigError);

    bad = cfg;
    bad.epsilons = {-0.1};
    CHECK_THROWS_AS(validate(bad), ConfigError);

    bad = cfg;
    bad.gammas = {0.0};
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad.gammas = {1.5};
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("margin scale matches the closed form") {
    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 2.0;
    CHECK(margin_scale(cfg) == doctest::Approx(0.7071067811865476).epsilon(1e-14));
    cfg.lipschitz = 3.0;
    cfg.norm_order = 1.0;
    CHECK(margin_scale(cfg) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("pixel radii gate on correctness and scale the margin") {
    // Margins 1.0 and 0.6; second pixel mispredicted.
    const LogitTensor t = grid(2, 1, 2, {1.0, 0.0, 0.0, 0.6});
    const LabelMask labels = mask_of(1, 2, {0, 0});
    const auto [m, preds] = margins_and_predictions(t);
    const PixelSet set = evaluation_set(labels);

    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 2.0;
    RadiusMap r = pixel_radii(m, preds, labels, cfg, set);
    CHECK(r.radius[0] == doctest::Approx(0.7071067811865476).epsilon(1e-12));
    CHECK(r.radius[1] == 0.0);

    cfg.lipschitz = 3.0;
    cfg.norm_order = 1.0;
    const LogitTensor t2 = grid(2, 1, 1, {0.6, 0.0});
    const LabelMask l2 = mask_of(1, 1, {0});
    const auto [m2, p2] = margins_and_predictions(t2);
    RadiusMap r2 = pixel_radii(m2, p2, l2, cfg, evaluation_set(l2));
    CHECK(r2.radius[0] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("stability radii ignore correctness") {
    const LogitTensor t = grid(2, 1, 2, {1.0, 0.0, 0.0, 0.6});
    const LabelMask labels = mask_of(1, 2, {1, 1});  // both mispredicted
    CertConfig cfg;
    cfg.norm_order = 1.0;
    const MarginMap m = margins(t);
    const RadiusMap r = stability_radii(m, cfg, full_grid(1, 2));
    CHECK(r.radius[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.radius[1] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("n_sup counts the cheapest flips inside the budget") {
    const SortedRadii s = sort_radii(radii_of({0.4, 0.1, 0.3, 0.2}), 2.0);
    CHECK(s.sorted == std::vector<double>{0.1, 0.2, 0.3, 0.4});
    CHECK(n_sup(s, 0.3, 2.0) == 2);
    CHECK(n_sup(s, 0.0, 2.0) == 0);
    CHECK(n_sup(s, 10.0, 2.0) == 4);
}

TEST_CASE("the budget slack absorbs prefix-sum rounding at exact equality") {
    // 0.1 + 0.2 lands one ulp above 0.3; the relative slack still admits both.
    const SortedRadii s = sort_radii(radii_of({0.1, 0.2}), 1.0);
    CHECK(n_sup(s, 0.3, 1.0) == 2);
    CHECK(n_sup(s, 0.1, 1.0) == 1);
}

TEST_CASE("zero radii flip at zero budget") {
    const SortedRadii s = sort_radii(radii_of({0.0, 0.0, 0.5}), 2.0);
    CHECK(n_sup(s, 0.0, 2.0) == 2);
}

TEST_CASE("generalized radius is the prefix root and validates its range") {
    const SortedRadii s = sort_radii(radii_of({0.2, 0.0, 0.1}), 2.0);
    CHECK(generalized_radius(s, 1, 2.0) == 0.0);
    CHECK(generalized_radius(s, 2, 2.0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(generalized_radius(s, 3, 2.0) ==
          doctest::Approx(std::sqrt(0.05)).epsilon(1e-12));
    CHECK_THROWS_AS(generalized_radius(s, 0, 2.0), ConfigError);
    CHECK_THROWS_AS(generalized_radius(s, 4, 2.0), ConfigError);
}

TEST_CASE("generalized radius and n_sup are dual") {
    Lcg rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + trial % 9;
        RadiusMap r;
        for (int i = 0; i < n; ++i) r.radius.push_back(rng.next());
        const double p = (trial % 2 == 0) ? 2.0 : 1.0;
        const SortedRadii s = sort_radii(r, p);
        for (int k = 1; k <= n; ++k) {
            const double rad = generalized_radius(s, k, p);
            // Spending exactly the radius flips at least k pixels...
            CHECK(n_sup(s, rad, p) >= k);
            // ...and a budget clearly below the radius flips fewer than k.
            // The margin stays above the engine's conservative budget slack.
            if (rad > 1e-3) CHECK(n_sup(s, rad * (1.0 - 1e-4), p) < k);
        }
    }
}

TEST_CASE("gamma count is the ceiling clamped to the set") {
    CHECK(gamma_count(1.0, 5) == 5);
    CHECK(gamma_count(0.5, 4) == 2);
    CHECK(gamma_count(0.25, 8) == 2);
    CHECK(gamma_count(1e-9, 1000) == 1);
    CHECK(gamma_count(2.0 / 3.0, 3) == 2);
}

TEST_CASE("certified pixel accuracy on a frozen four-pixel instance") {
    // Margins 0.1, 0.2, 0.3 on correct pixels; the fourth is mispredicted.
    const LogitTensor t = grid(2, 2, 2,
                               {1.0, 1.0, 1.0, 1.0,
                                0.9, 0.8, 0.7, 1.5});
    const LabelMask labels = mask_of(2, 2, {0, 0, 0, 0});
    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 1.0;
    cfg.epsilons = {0.3, 0.0, 0.05};
    const std::vector<double> v = crpa(t, labels, cfg, evaluation_set(labels));
    CHECK(v[0] == 0.25);   // the free flip plus margins 0.1 and 0.2
    CHECK(v[1] == 0.75);   // only the mispredicted pixel
    CHECK(v[2] == 0.75);
}

TEST_CASE("certify_report carries clean value, flip counts, and input order") {
    const LogitTensor t = grid(2, 2, 2,
                               {1.0, 1.0, 1.0, 1.0,
                                0.9, 0.8, 0.7, 1.5});
    const LabelMask labels = mask_of(2, 2, {0, 0, 0, 0});
    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 1.0;
    cfg.epsilons = {0.3, 0.0};
    cfg.gammas = {0.5, 1.0};
    const CertificateReport rep =
        certify_report(t, &labels, cfg, Metric::PixelAccuracy);
    CHECK(rep.set_size == 4);
    CHECK(rep.clean_value == 0.75);
    REQUIRE(rep.per_epsilon.size() == 2);
    CHECK(rep.per_epsilon[0].epsilon == 0.3);
    CHECK(rep.per_epsilon[0].n_flippable == 3);
    CHECK(rep.per_epsilon[0].value == 0.25);
    CHECK(rep.per_epsilon[1].epsilon == 0.0);
    CHECK(rep.per_epsilon[1].n_flippable == 1);
    CHECK(rep.per_epsilon[1].value == 0.75);
    REQUIRE(rep.per_gamma.size() == 2);
    // n_gamma = 2: cheapest two flips cost 0 + 0.1.
    CHECK(rep.per_gamma[0].radius_lower_bound == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rep.per_gamma[1].radius_lower_bound == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("certified accuracy at zero budget equals clean accuracy") {
    Lcg rng(4242);
    for (int trial = 0; trial < 20; ++trial) {
        const int K = 3;
        LogitTensor t = grid(K, 4, 4, std::vector<double>(K * 16, 0.0));
        for (double& v : t.values) v = rng.next() * 2.0 - 1.0;
        LabelMask labels = mask_of(4, 4, std::vector<std::int32_t>(16, 0));
        for (auto& l : labels.labels) {
            l = static_cast<std::int32_t>(rng.next() * K);
        }
        CertConfig cfg;
        cfg.epsilons = {0.0};
        const CertificateReport rep =
            certify_report(t, &labels, cfg, Metric::PixelAccuracy);
        // Random continuous logits have no ties, so nothing flips for free
        // beyond the pixels that are already wrong.
        CHECK(rep.per_epsilon[0].value == rep.clean_value);
    }
}

TEST_CASE("ignored pixels never enter the evaluation set") {
    const LogitTensor t = grid(2, 1, 3, {1.0, 1.0, 0.0, 0.0, 0.0, 1.0});
    const LabelMask labels = mask_of(1, 3, {0, 255, 1});
    CertConfig cfg;
    cfg.epsilons = {0.0};
    const CertificateReport rep =
        certify_report(t, &labels, cfg, Metric::PixelAccuracy);
    CHECK(rep.set_size == 2);
    CHECK(rep.clean_value == 1.0);
}

TEST_CASE("crpa is monotone non-increasing in the budget") {
    Lcg rng(7);
    RadiusMap r;
    for (int i = 0; i < 400; ++i) r.radius.push_back(rng.next());
    const SortedRadii s = sort_radii(r, 2.0);
    std::int64_t prev = -1;
    for (double eps = 0.0; eps <= 2.0; eps += 0.05) {
        const std::int64_t n = n_sup(s, eps, 2.0);
        CHECK(n >= prev);
        prev = n;
    }
}

TEST_CASE("scaling logits and the bound together leaves certificates fixed") {
    Lcg rng(31);
    LogitTensor t = grid(3, 6, 6, std::vector<double>(3 * 36, 0.0));
    for (double& v : t.values) v = rng.next() * 4.0 - 2.0;
    LabelMask labels = mask_of(6, 6, std::vector<std::int32_t>(36, 0));
    for (auto& l : labels.labels) l = static_cast<std::int32_t>(rng.next() * 3);

    CertConfig cfg;
    cfg.lipschitz = 1.3;
    cfg.norm_order = 2.0;
    cfg.epsilons = {0.05, 0.2, 0.7};
    const std::vector<double> base = crpa(t, labels, cfg, evaluation_set(labels));

    const double c = 7.5;
    LogitTensor scaled = t;
    for (double& v : scaled.values) v *= c;
    CertConfig scaled_cfg = cfg;
    scaled_cfg.lipschitz = cfg.lipschitz * c;
    const std::vector<double> same =
        crpa(scaled, labels, scaled_cfg, evaluation_set(labels));
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i] == doctest::Approx(same[i]).epsilon(1e-12));
    }
}

TEST_CASE("fnr certificate bounds missed positives") {
    // Two positive pixels with margins 0.1 and 0.5, both currently found.
    const LogitTensor t = grid(2, 1, 3,
                               {0.0, 0.0, 1.0,
                                0.1, 0.5, 0.0});
    const LabelMask labels = mask_of(1, 3, {1, 1, 0});
    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 1.0;
    cfg.epsilons = {0.2, 0.0, 5.0};
    const std::vector<double> bound = fnr_certificate(t, labels, cfg);
    CHECK(bound[0] == 0.5);
    CHECK(bound[1] == 0.0);
    CHECK(bound[2] == 1.0);

    const CertificateReport rep =
        certify_report(t, &labels, cfg, Metric::FalseNegativeRate);
    CHECK(rep.set_size == 2);
    CHECK(rep.clean_value == 0.0);
    CHECK(rep.per_epsilon[0].value == 0.5);
}

TEST_CASE("fnr is undefined without positive pixels") {
    const LogitTensor t = grid(2, 1, 2, {1.0, 1.0, 0.0, 0.0});
    const LabelMask labels = mask_of(1, 2, {0, 0});
    CertConfig cfg;
    cfg.epsilons = {0.1};
    CHECK_THROWS_AS(fnr_certificate(t, labels, cfg), UndefinedMetricError);
}

TEST_CASE("fnr gamma radius is the cheapest budget reaching the fraction") {
    // Positive margins 0.1, 0.2, 0.3 with a near-unit scale.
    const LogitTensor t = grid(2, 1, 3,
                               {0.0, 0.0, 0.0,
                                0.1, 0.2, 0.3});
    const LabelMask labels = mask_of(1, 3, {1, 1, 1});
    CertConfig cfg;
    cfg.lipschitz = 0.7071067811865476;  // cancels the p = 2 factor
    cfg.norm_order = 2.0;
    cfg.gammas = {2.0 / 3.0};
    const std::vector<double> r = fnr_radius(t, labels, cfg);
    REQUIRE(r.size() == 1);
    CHECK(r[0] == doctest::Approx(std::sqrt(0.05)).epsilon(1e-9));
}

TEST_CASE("stability certificate works with and without labels") {
    // Margins 0.1 and 0.9.
    const LogitTensor t = grid(2, 1, 2, {1.0, 0.0, 0.9, 0.9});
    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 1.0;
    cfg.epsilons = {0.5};
    cfg.gammas = {1.0};
    const StabilityCertificate cert =
        stability_certificate(t, cfg, full_grid(1, 2));
    CHECK(cert.crs[0] == 0.5);
    CHECK(cert.gamma_radius[0] == doctest::Approx(1.0).epsilon(1e-12));

    const CertificateReport rep = certify_report(t, nullptr, cfg, Metric::Stability);
    CHECK(rep.set_size == 2);
    CHECK(rep.clean_value == 1.0);  // no exact ties
    CHECK(rep.per_epsilon[0].value == 0.5);

    CHECK_THROWS_AS(certify_report(t, nullptr, cfg, Metric::PixelAccuracy),
                    MissingLabelsError);
}

TEST_CASE("worst-case class iou matches the enumeration oracle") {
    const LogitTensor t = grid(2, 2, 2,
                               {0.0, 0.0, 1.0, 1.0,
                                0.1, 0.4, 0.0, 0.9});
    const LabelMask labels = mask_of(2, 2, {1, 1, 0, 0});
    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 1.0;
    cfg.epsilons = {0.0, 0.2, 10.0};
    const std::vector<double> v = class_iou_worst_case(t, labels, cfg, 1);
    CHECK(v[0] == 1.0);  // clean: both positives found, no false positives
    CHECK(v[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(v[2] == 0.0);

    // Same instance through the oracle, costs read off the logit planes.
    const double tn1 = 1.0 - 0.0;
    const double tn2 = 1.0 - 0.9;
    CHECK(v[1] ==
          doctest::Approx(exact_worst_iou({0.1, 0.4}, {tn1, tn2}, 2, 0, 0.2))
              .epsilon(1e-12));
}

TEST_CASE("class iou reports flip counts through certify_report") {
    const LogitTensor t = grid(2, 2, 2,
                               {0.0, 0.0, 1.0, 1.0,
                                0.1, 0.4, 0.0, 0.9});
    const LabelMask labels = mask_of(2, 2, {1, 1, 0, 0});
    CertConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.norm_order = 1.0;
    cfg.epsilons = {0.2};
    cfg.class_index = 1;
    const CertificateReport rep = certify_report(t, &labels, cfg, Metric::ClassIou);
    CHECK(rep.set_size == 2);
    CHECK(rep.clean_value == 1.0);
    CHECK(rep.per_epsilon[0].value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(rep.per_epsilon[0].n_flippable == 2);

    CertConfig unset = cfg;
    unset.class_index = -1;
    CHECK_THROWS_AS(certify_report(t, &labels, unset, Metric::ClassIou), ConfigError);
}

TEST_CASE("class iou is undefined for an absent class") {
    const LogitTensor t = grid(2, 1, 2, {1.0, 1.0, 0.0, 0.0});
    const LabelMask labels = mask_of(1, 2, {0, 0});
    CertConfig cfg;
    cfg.epsilons = {0.1};
    CHECK_THROWS_AS(class_iou_worst_case(t, labels, cfg, 1), UndefinedMetricError);
    CHECK_THROWS_AS(class_iou_worst_case(t, labels, cfg, 5), ConfigError);
}

TEST_CASE("clean iou accounts for clean false negatives and positives") {
    // k = 1: pixel0 true positive, pixel1 missed (predicted 0), pixel2 is a
    // false positive, pixel3 true negative.
    const LogitTensor t = grid(2, 2, 2,
                               {0.0, 1.0, 0.0, 1.0,
                                0.5, 0.0, 0.5, 0.0});
    const LabelMask labels = mask_of(2, 2, {1, 1, 0, 0});
    CertConfig cfg;
    cfg.epsilons = {0.0};
    cfg.class_index = 1;
    const CertificateReport rep = certify_report(t, &labels, cfg, Metric::ClassIou);
    CHECK(rep.clean_value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // The budget-zero certificate can only confirm the clean value here.
    CHECK(rep.per_epsilon[0].value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("the max norm is rejected with a reasoned message") {
    CertConfig cfg;
    cfg.norm_order = std::numeric_limits<double>::infinity();
    try {
        validate(cfg);
        FAIL("validate accepted p = inf");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("degenerates") != std::string::npos);
    }
}

TEST_CASE("multi-threaded reports are bit-identical to serial ones") {
    Lcg rng(606);
    const int K = 5;
    LogitTensor t = grid(K, 32, 32, std::vector<double>(K * 32 * 32, 0.0));
    for (double& v : t.values) v = rng.next() * 2.0 - 1.0;
    LabelMask labels = mask_of(32, 32, std::vector<std::int32_t>(32 * 32, 0));
    for (auto& l : labels.labels) l = static_cast<std::int32_t>(rng.next() * K);
    CertConfig cfg;
    cfg.epsilons = {0.01, 0.1, 0.5};
    cfg.gammas = {0.25, 1.0};
    const CertificateReport serial =
        certify_report(t, &labels, cfg, Metric::PixelAccuracy, 1);
    const CertificateReport threaded =
        certify_report(t, &labels, cfg, Metric::PixelAccuracy, 4);
    CHECK(serial.clean_value == threaded.clean_value);
    for (std::size_t i = 0; i < serial.per_epsilon.size(); ++i) {
        CHECK(serial.per_epsilon[i].value == threaded.per_epsilon[i].value);
        CHECK(serial.per_epsilon[i].n_flippable == threaded.per_epsilon[i].n_flippable);
    }
    for (std::size_t i = 0; i < serial.per_gamma.size(); ++i) {
        CHECK(serial.per_gamma[i].radius_lower_bound ==
              threaded.per_gamma[i].radius_lower_bound);
    }
}

TEST_CASE("knapsack certificates agree with the enumeration oracle") {
    Lcg rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 12;
        RadiusMap r;
        std::vector<double> costs;
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = rng.next();
            r.radius.push_back(x);
            costs.push_back(x * x);
            total += x * x;
        }
        const SortedRadii s = sort_radii(r, 2.0);
        const double eps = std::sqrt(total * rng.next());
        CHECK(n_sup(s, eps, 2.0) == exact_max_flips(costs, eps * eps));
        const int target = 1 + static_cast<int>(rng.next() * n);
        const double rad = generalized_radius(s, target, 2.0);
        CHECK(rad * rad ==
              doctest::Approx(exact_min_budget(costs, target)).epsilon(1e-9));
    }
}
