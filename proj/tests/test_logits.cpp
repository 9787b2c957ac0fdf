#include <limits>
#include <vector>

#include "doctest.h"
#include "segcert/logits.hpp"

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

}  // namespace

TEST_CASE("margin is top1 minus top2") {
    // Single pixel, logits (1, 3, 2): winner class 1, runner-up class 2.
    const LogitTensor t = grid(3, 1, 1, {1.0, 3.0, 2.0});
    const auto [m, preds] = margins_and_predictions(t);
    CHECK(preds.labels[0] == 1);
    CHECK(m.margin[0] == 1.0);
}

TEST_CASE("argmax ties break toward the lowest class index") {
    const LogitTensor t = grid(3, 1, 1, {2.0, 2.0, 1.0});
    const auto [m, preds] = margins_and_predictions(t);
    CHECK(preds.labels[0] == 0);
    CHECK(m.margin[0] == 0.0);
}

TEST_CASE("margins are invariant to a constant logit shift") {
    const LogitTensor a = grid(3, 2, 2,
                               {0.3, -1.0, 2.0, 0.5,
                                1.1, 0.7, -0.2, 0.5,
                                0.9, 0.7, 1.5, -2.0});
    LogitTensor b = a;
    for (double& v : b.values) v += 17.25;
    const MarginMap ma = margins(a);
    const MarginMap mb = margins(b);
    for (std::size_t i = 0; i < ma.margin.size(); ++i) {
        CHECK(ma.margin[i] == doctest::Approx(mb.margin[i]).epsilon(1e-12));
    }
    const PredictionMask pa = argmax_predictions(a);
    const PredictionMask pb = argmax_predictions(b);
    CHECK(pa.labels == pb.labels);
}

TEST_CASE("class margins match their definitions") {
    // Pixel logits (0.1, 0.7, 0.4), k = 2: tp_raw = 0.4 - 0.7, tn_raw = 0.7 - 0.4.
    const LogitTensor t = grid(3, 1, 1, {0.1, 0.7, 0.4});
    const auto [tp, tn] = class_margins(t, 2);
    CHECK(tp.margin[0] == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(tn.margin[0] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("class margins at the predicted class mirror the accuracy margin") {
    const LogitTensor t = grid(4, 2, 3,
                               {0.3, -1.0, 2.0, 0.5, 0.1, 0.0,
                                1.1, 0.7, -0.2, 0.5, 0.2, 0.9,
                                0.9, 0.7, 1.5, -2.0, 0.0, 0.8,
                                0.4, 0.1, 0.3, 0.2, 0.1, 0.7});
    const auto [m, preds] = margins_and_predictions(t);
    for (int k = 0; k < 4; ++k) {
        const auto [tp, tn] = class_margins(t, k);
        for (std::size_t pix = 0; pix < m.margin.size(); ++pix) {
            if (preds.labels[pix] == k) {
                CHECK(tp.margin[pix] == doctest::Approx(m.margin[pix]).epsilon(1e-12));
                CHECK(tn.margin[pix] == 0.0);
            } else {
                CHECK(tp.margin[pix] <= 0.0);
                CHECK(tn.margin[pix] >= 0.0);
            }
        }
    }
}

TEST_CASE("threaded top-2 scan is bit-identical to the serial one") {
    LogitTensor t;
    t.classes = 5;
    t.height = 17;
    t.width = 13;
    t.values.resize(5u * 17u * 13u);
    std::uint64_t state = 12345;
    for (double& v : t.values) {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        v = static_cast<double>(state >> 11) * 0x1.0p-53 - 0.5;
    }
    const auto [m1, p1] = margins_and_predictions(t, 1);
    const auto [m4, p4] = margins_and_predictions(t, 4);
    CHECK(m1.margin == m4.margin);
    CHECK(p1.labels == p4.labels);
}

TEST_CASE("logit ingestion rejects non-finite values") {
    const Tensor t = make_real32({1, 1, 2}, {1.0f, std::numeric_limits<float>::infinity()});
    CHECK_THROWS_AS(logits_from_tensor(t), NonFiniteError);
}

TEST_CASE("logit ingestion demands rank 3 real32") {
    CHECK_THROWS_AS(logits_from_tensor(make_real32({4}, {1, 2, 3, 4})), ShapeError);
    CHECK_THROWS_AS(logits_from_tensor(make_index8({1, 1, 2}, {1, 2})), ShapeError);
}

TEST_CASE("label ingestion accepts index8 and index32, rejects negatives") {
    const LabelMask a = labels_from_tensor(make_index8({2, 2}, {0, 1, 255, 2}), 255);
    CHECK(a.labels == std::vector<std::int32_t>{0, 1, 255, 2});
    CHECK(a.ignore_value == 255);
    const LabelMask b =
        labels_from_tensor(make_index32({2, 2}, {0, 1, 300, 2}), 255);
    CHECK(b.labels[2] == 300);
    CHECK_THROWS_AS(labels_from_tensor(make_index32({1, 2}, {0, -1}), 255), ShapeError);
    CHECK_THROWS_AS(labels_from_tensor(make_real32({1, 2}, {0.f, 1.f}), 255), ShapeError);
}

TEST_CASE("label masks round-trip through tensors") {
    LabelMask mask;
    mask.height = 2;
    mask.width = 3;
    mask.labels = {0, 1, 2, 255, 4, 1};
    const Tensor t8 = labels_to_tensor(mask);
    CHECK(t8.dtype == DType::Index8);
    const LabelMask back = labels_from_tensor(t8, 255);
    CHECK(back.labels == mask.labels);

    mask.labels[0] = 70000;  // forces the wide dtype
    const Tensor t32 = labels_to_tensor(mask);
    CHECK(t32.dtype == DType::Index32);
    CHECK(labels_from_tensor(t32, 255).labels == mask.labels);
}
