#include "scribble/losses.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <cmath>
#include <functional>

#include <doctest.h>

using namespace scribble;

namespace {

Field random_logits(SeededRng& rng, std::size_t h, std::size_t w, std::size_t m)
{
    Field z(h, w, m);
    for (double& v : z.data()) {
        v = 1.5 * rng.normal();
    }
    return z;
}

Field from_flat(const Field& like, const std::vector<double>& flat)
{
    Field z(like.height(), like.width(), like.depth());
    std::copy(flat.begin(), flat.end(), z.data().begin());
    return z;
}

// Worst |analytic - numeric| / max(1e-6, |a|, |n|) over every logit.
double gradient_error(const Field& logits, const std::function<LossValue(const ProbMap&)>& loss)
{
    const LossValue at = loss(ProbMap::from_logits(logits));
    const std::vector<double> x(logits.data().begin(), logits.data().end());
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& v) { return loss(ProbMap::from_logits(from_flat(logits, v))).value; }, x, 1e-5);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = at.gradient.data()[i];
        worst = std::max(worst, std::abs(a - numeric[i]) / std::max({1e-6, std::abs(a), std::abs(numeric[i])}));
    }
    return worst;
}

LabelMap random_scribbles(SeededRng& rng, std::size_t h, std::size_t w, std::size_t m, double p)
{
    LabelMap s(h, w);
    for (std::size_t i = 0; i < s.pixels(); ++i) {
        if (rng.bernoulli(p)) {
            s[i] = static_cast<Label>(rng.uniform_int(m));
        }
    }
    s[0] = 0;
    return s;
}

ClassSplit random_split(SeededRng& rng, std::size_t pixels, std::size_t m)
{
    ClassSplit split(m);
    for (std::size_t k = 0; k < m; ++k) {
        split.active[k] = k != 1;
        for (std::size_t i = 0; i < pixels; ++i) {
            (rng.bernoulli(0.3) ? split.sets[k].positive : split.sets[k].negative).push_back(i);
        }
    }
    return split;
}

}  // namespace

TEST_CASE("partial cross entropy")
{
    SUBCASE("uniform prediction, one labeled pixel")
    {
        LabelMap s(2, 2);
        s[3] = 2;
        const LossValue l = pce_loss(ProbMap::uniform(2, 2, 4), s);
        CHECK(l.value == doctest::Approx(std::log(4.0)).epsilon(1e-15));
        CHECK(l.active == 1);
        CHECK(l.gradient(3, 2) == doctest::Approx(0.25 - 1.0));
        CHECK(l.gradient(0, 0) == 0.0);
    }
    SUBCASE("perfect prediction")
    {
        const ProbMap p(1, 2, 2, {1.0, 0.0, 0.0, 1.0});
        const LossValue l = pce_loss(p, LabelMap(1, 2, std::vector<Label>{0, 1}));
        CHECK(l.value == 0.0);
        CHECK(l.saturated == 0);
        const LossValue wrong = pce_loss(p, LabelMap(1, 2, std::vector<Label>{1, kUnlabeled}));
        CHECK(wrong.value == doctest::Approx(-std::log(kLogClamp)));
        CHECK(wrong.saturated == 1);
    }
    SUBCASE("no supervision")
    {
        CHECK(code_of([] { pce_loss(ProbMap::uniform(2, 2, 2), LabelMap(2, 2)); }) == ErrorCode::NoSupervision);
    }
    SUBCASE("gradient")
    {
        SeededRng rng(1);
        for (int trial = 0; trial < 5; ++trial) {
            const Field z = random_logits(rng, 8, 8, 3);
            const LabelMap s = random_scribbles(rng, 8, 8, 3, 0.3);
            CHECK(gradient_error(z, [&](const ProbMap& p) { return pce_loss(p, s); }) < 1e-5);
        }
    }
    SUBCASE("soft weights gradient")
    {
        SeededRng rng(2);
        const Field z = random_logits(rng, 6, 6, 3);
        Field w(6, 6, 3);
        for (std::size_t i = 0; i < 36; ++i) {
            const double a = rng.uniform();
            w(i, rng.uniform_int(3)) += a;
            w(i, rng.uniform_int(3)) += (1.0 - a) * rng.uniform();
        }
        CHECK(gradient_error(z, [&](const ProbMap& p) { return pce_loss(p, w); }) < 1e-5);
    }
}

TEST_CASE("global consistency")
{
    SeededRng rng(3);
    const ProbMap v12 = ProbMap::from_logits(random_logits(rng, 6, 6, 3));
    const ProbMap v21 = ProbMap::from_logits(random_logits(rng, 6, 6, 3));
    SUBCASE("identical operands")
    {
        const ConsistencyLoss l = global_consistency_loss(v12.as_field(), v12, v21.as_field(), v21);
        CHECK(l.value == doctest::Approx(-1.0).epsilon(1e-14));
    }
    SUBCASE("orthogonal operands")
    {
        const ProbMap a(1, 2, 2, {1.0, 0.0, 1.0, 0.0});
        Field b(1, 2, 2);
        b(0, 1) = 1.0;
        b(1, 1) = 2.0;
        CHECK(negative_cosine(b, a).value == doctest::Approx(0.0));
    }
    SUBCASE("zero norm")
    {
        CHECK(code_of([&] { negative_cosine(Field(6, 6, 3), v12); }) == ErrorCode::DegenerateConsistency);
    }
    SUBCASE("gradient")
    {
        for (int trial = 0; trial < 5; ++trial) {
            const Field z = random_logits(rng, 8, 8, 3);
            Field u(8, 8, 3);
            for (double& x : u.data()) {
                x = rng.uniform();
            }
            CHECK(gradient_error(z, [&](const ProbMap& p) { return negative_cosine(u, p); }) < 1e-5);
        }
    }
    SUBCASE("pair average")
    {
        Field u12(6, 6, 3), u21(6, 6, 3);
        for (double& x : u12.data()) x = rng.uniform();
        for (double& x : u21.data()) x = rng.uniform();
        const ConsistencyLoss l = global_consistency_loss(u12, v12, u21, v21);
        const LossValue a = negative_cosine(u12, v12), b = negative_cosine(u21, v21);
        CHECK(l.value == doctest::Approx(0.5 * (a.value + b.value)).epsilon(1e-15));
        for (std::size_t n = 0; n < a.gradient.data().size(); ++n) {
            CHECK(l.gradient12.data()[n] == doctest::Approx(0.5 * a.gradient.data()[n]).epsilon(1e-15));
            CHECK(l.gradient21.data()[n] == doctest::Approx(0.5 * b.gradient.data()[n]).epsilon(1e-15));
        }
        CHECK(l.value >= -1.0);
        CHECK(l.value <= 1.0);
    }
}

TEST_CASE("spatial prior loss")
{
    SUBCASE("uniform prediction, one negative pixel")
    {
        ClassSplit split(3);
        split.active[1] = true;
        split.sets[1].negative = {2};
        const LossValue l = spatial_prior_loss(ProbMap::uniform(2, 2, 3), split);
        CHECK(l.value == doctest::Approx(-std::log(2.0 / 3.0)).epsilon(1e-15));
        CHECK(l.active == 1);
    }
    SUBCASE("zero class probability on negatives")
    {
        ClassSplit split(2);
        split.active[0] = true;
        split.sets[0].negative = {0, 1};
        const LossValue l = spatial_prior_loss(ProbMap(1, 2, 2, {0.0, 1.0, 0.0, 1.0}), split);
        CHECK(l.value == 0.0);
    }
    SUBCASE("saturation is counted")
    {
        ClassSplit split(2);
        split.active[0] = true;
        split.sets[0].negative = {0};
        const LossValue l = spatial_prior_loss(ProbMap(1, 1, 2, {1.0, 0.0}), split);
        CHECK(l.saturated == 1);
        CHECK(l.value == doctest::Approx(-std::log(kLogClamp)));
    }
    SUBCASE("inactive classes contribute nothing")
    {
        ClassSplit split(2);
        split.sets[0].negative = {0};
        const LossValue l = spatial_prior_loss(ProbMap::uniform(1, 1, 2), split);
        CHECK(l.value == 0.0);
        CHECK(l.active == 0);
    }
    SUBCASE("gradient")
    {
        SeededRng rng(5);
        for (int trial = 0; trial < 5; ++trial) {
            const Field z = random_logits(rng, 8, 8, 3);
            const ClassSplit split = random_split(rng, 64, 3);
            CHECK(gradient_error(z, [&](const ProbMap& p) { return spatial_prior_loss(p, split); }) < 1e-5);
        }
    }
    SUBCASE("relabelling invariance")
    {
        SeededRng rng(6);
        const Field z = random_logits(rng, 5, 5, 3);
        const ClassSplit split = random_split(rng, 25, 3);
        const std::size_t perm[3] = {2, 0, 1};
        Field pz(5, 5, 3);
        ClassSplit psplit(3);
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t i = 0; i < 25; ++i) {
                pz(i, perm[k]) = z(i, k);
            }
            psplit.sets[perm[k]] = split.sets[k];
            psplit.active[perm[k]] = split.active[k];
        }
        CHECK(spatial_prior_loss(ProbMap::from_logits(pz), psplit).value ==
              doctest::Approx(spatial_prior_loss(ProbMap::from_logits(z), split).value).epsilon(1e-14));
    }
}

TEST_CASE("shape loss")
{
    SUBCASE("empty class set")
    {
        SeededRng rng(7);
        const ProbMap p = ProbMap::from_logits(random_logits(rng, 4, 4, 3));
        const LossValue l = shape_loss(p, ClassSet(3, {}));
        CHECK(l.value == 0.0);
        for (double g : l.gradient.data()) {
            CHECK(g == 0.0);
        }
    }
    SUBCASE("single components reduce to self cross entropy")
    {
        SeededRng rng(8);
        // Left half class 1, right half class 2, each one component.
        Field z(4, 6, 3);
        for (std::size_t i = 0; i < 24; ++i) {
            z(i, i % 6 < 3 ? 1 : 2) = 2.0 + rng.uniform();
            z(i, 0) = rng.uniform();
        }
        const ProbMap p = ProbMap::from_logits(z);
        const LossValue l = shape_loss(p, ClassSet(3, {1, 2}));
        double want = 0.0;
        for (std::size_t i = 0; i < 24; ++i) {
            want -= std::log(p(i, i % 6 < 3 ? 1 : 2));
        }
        CHECK(l.value == doctest::Approx(want / 24.0).epsilon(1e-14));
        CHECK(l.active == 24);
    }
    SUBCASE("stray component gets no target")
    {
        // Class 1 argmax: a 3x3 block (9 pixels) and one isolated pixel.
        Field z(6, 6, 2);
        for (std::size_t i = 0; i < 36; ++i) {
            z(i, 0) = 1.0;
        }
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                z(r * 6 + c, 1) = 3.0;
            }
        }
        z(5 * 6 + 5, 1) = 3.0;
        const ProbMap p = ProbMap::from_logits(z);
        const ShapeTarget t = shape_target(p, ClassSet(2, {1}));
        REQUIRE(t.masks.size() == 1);
        CHECK(t.masks[0].popcount() == 9);
        CHECK_FALSE(t.masks[0][35]);
        CHECK(oracle::count_components(t.masks[0], false) == 1);
        const LossValue l = shape_loss(p, t);
        CHECK(l.gradient(35, 0) == 0.0);
        CHECK(l.gradient(35, 1) == 0.0);
        CHECK(l.value >= 0.0);
    }
    SUBCASE("gradient with a frozen target")
    {
        SeededRng rng(9);
        for (int trial = 0; trial < 5; ++trial) {
            const Field z = random_logits(rng, 8, 8, 3);
            const ShapeTarget t = shape_target(ProbMap::from_logits(z), ClassSet(3, {1, 2}));
            CHECK(gradient_error(z, [&](const ProbMap& p) { return shape_loss(p, t); }) < 1e-5);
        }
    }
}

TEST_CASE("total loss")
{
    SeededRng rng(10);
    auto part = [&](double value) {
        LossValue l;
        l.value = value;
        l.gradient = random_logits(rng, 3, 3, 2);
        return l;
    };
    const LossParts parts{part(1.5), part(-0.7), part(0.4), part(2.0)};
    LossWeights w;
    w.global = 0.3;
    w.spatial = 0.6;
    w.shape = 0.9;
    w.warmup_epochs = 100;
    SUBCASE("warm-up holds the spatial term")
    {
        const LossValue t = total_loss(parts, w, 0);
        CHECK(t.value == doctest::Approx(1.5 + 0.3 * -0.7 + 0.9 * 2.0));
        for (std::size_t n = 0; n < 18; ++n) {
            const double want = parts.pce.gradient.data()[n] + 0.3 * parts.global.gradient.data()[n] +
                                0.9 * parts.shape.gradient.data()[n];
            CHECK(std::abs(t.gradient.data()[n] - want) <= 1e-12);
        }
    }
    SUBCASE("after warm-up everything is linear")
    {
        const LossValue t = total_loss(parts, w, 100);
        CHECK(t.value == doctest::Approx(1.5 + 0.3 * -0.7 + 0.6 * 0.4 + 0.9 * 2.0));
        for (std::size_t n = 0; n < 18; ++n) {
            const double want = parts.pce.gradient.data()[n] + 0.3 * parts.global.gradient.data()[n] +
                                0.6 * parts.spatial.gradient.data()[n] + 0.9 * parts.shape.gradient.data()[n];
            CHECK(std::abs(t.gradient.data()[n] - want) <= 1e-12);
        }
    }
    SUBCASE("zero weights give pce")
    {
        const LossValue t = total_loss(parts, LossWeights{0.0, 0.0, 0.0, 0, false}, 5);
        CHECK(t.value == 1.5);
        CHECK(t.gradient == parts.pce.gradient);
    }
    SUBCASE("gated shape")
    {
        w.gate_shape = true;
        CHECK(effective_weights(w, 10).shape == 0.0);
        CHECK(effective_weights(w, 100).shape == 0.9);
    }
}

TEST_CASE("softmax backward matches the Jacobian")
{
    const std::vector<double> z{0.3, -1.2, 2.0, 0.1};
    const std::vector<double> a{0.5, -2.0, 1.0, 3.0};
    const auto p = softmax(z);
    std::vector<double> got(4);
    softmax_backward(p, a, got);
    for (std::size_t j = 0; j < 4; ++j) {
        double want = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            want += a[k] * p[k] * ((j == k ? 1.0 : 0.0) - p[j]);
        }
        CHECK(got[j] == doctest::Approx(want).epsilon(1e-14));
    }
}
