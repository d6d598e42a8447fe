#include "scribble/energy.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <cmath>

#include <doctest.h>

using namespace scribble;

namespace {

Image random_image(SeededRng& rng, std::size_t h, std::size_t w, std::size_t ch = 1)
{
    std::vector<double> data(h * w * ch);
    for (double& v : data) {
        v = rng.uniform();
    }
    return Image(h, w, ch, std::move(data));
}

ProbMap random_probs(SeededRng& rng, std::size_t h, std::size_t w, std::size_t m)
{
    Field logits(h, w, m);
    for (double& v : logits.data()) {
        v = 2.0 * rng.normal();
    }
    return ProbMap::from_logits(logits);
}

}  // namespace

TEST_CASE("gaussian kernel")
{
    const Image x(1, 3, 1, {0.2, 0.2, 5.0});
    EnergyConfig cfg;
    CHECK(gaussian_kernel(x, 1, 1, cfg) == 1.0);
    CHECK(gaussian_kernel(x, 0, 1, cfg) == doctest::Approx(std::exp(-1.0 / 72.0)).epsilon(1e-15));
    CHECK(gaussian_kernel(x, 1, 2, cfg) < 1e-300);
    CHECK(gaussian_kernel(x, 0, 1, cfg) == gaussian_kernel(x, 1, 0, cfg));
}

TEST_CASE("kernel depends on intensity only through the ratio to sigma")
{
    SeededRng rng(2);
    const Image x = random_image(rng, 4, 4, 3);
    std::vector<double> scaled(x.data().begin(), x.data().end());
    for (double& v : scaled) {
        v *= 7.0;
    }
    const Image y(4, 4, 3, scaled);
    EnergyConfig a, b;
    a.sigma_intensity = 0.3;
    b.sigma_intensity = 2.1;
    for (std::size_t i = 0; i < 16; ++i) {
        for (std::size_t j = 0; j < 16; ++j) {
            CHECK(gaussian_kernel(x, i, j, a) == doctest::Approx(gaussian_kernel(y, i, j, b)).epsilon(1e-12));
        }
    }
}

TEST_CASE("spatial energy by hand")
{
    SUBCASE("zero prediction")
    {
        std::vector<double> probs;
        for (int i = 0; i < 16; ++i) {
            probs.push_back(1.0);
            probs.push_back(0.0);
        }
        const auto phi = spatial_energy(ProbMap(4, 4, 2, probs), Image::zeros(4, 4), 1, EnergyConfig{});
        for (double v : phi) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("3x3 uniform image, certain prediction, r = 1")
    {
        EnergyConfig cfg;
        cfg.radius = 1;
        const std::vector<double> ones(9, 1.0);
        const auto phi = spatial_energy(ProbMap(3, 3, 1, ones), Image(3, 3, 1, std::vector<double>(9, 0.5)), 0, cfg);
        const double edge = std::exp(-1.0 / 72.0), diag = std::exp(-2.0 / 72.0);
        CHECK(phi[4] == doctest::Approx(4.0 * edge + 4.0 * diag).epsilon(1e-15));
        CHECK(phi[0] == doctest::Approx(2.0 * edge + diag).epsilon(1e-15));
        CHECK(phi[1] == doctest::Approx(3.0 * edge + 2.0 * diag).epsilon(1e-15));
    }
    SUBCASE("self term")
    {
        EnergyConfig with, without;
        with.include_self = true;
        SeededRng rng(4);
        const Image x = random_image(rng, 5, 5);
        const ProbMap p = random_probs(rng, 5, 5, 3);
        const auto a = spatial_energy(p, x, 2, with), b = spatial_energy(p, x, 2, without);
        for (std::size_t i = 0; i < 25; ++i) {
            CHECK(a[i] - b[i] == doctest::Approx(p(i, 2) * p(i, 2)).epsilon(1e-12));
        }
    }
}

TEST_CASE("spatial energy agrees with the all-pairs sum")
{
    SeededRng rng(40);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t ch = 1 + rng.uniform_int(3);
        const Image x = random_image(rng, 16, 16, ch);
        const ProbMap p = random_probs(rng, 16, 16, 3);
        EnergyConfig cfg;
        cfg.radius = 1 + rng.uniform_int(5);
        cfg.sigma_position = rng.uniform(1.0, 8.0);
        cfg.sigma_intensity = rng.uniform(0.05, 1.0);
        cfg.include_self = rng.bernoulli(0.5);
        const std::size_t k = rng.uniform_int(3);
        const auto fast = spatial_energy(p, x, k, cfg);
        const auto slow = oracle::brute_energy(p, x, k, cfg.sigma_position, cfg.sigma_intensity,
                                               static_cast<long>(cfg.radius), cfg.include_self);
        for (std::size_t i = 0; i < fast.size(); ++i) {
            CHECK(std::abs(fast[i] - slow[i]) <= 1e-9);
        }
    }
}

TEST_CASE("affinity window is symmetric")
{
    SeededRng rng(5);
    const Image x = random_image(rng, 7, 6, 2);
    EnergyConfig cfg;
    cfg.radius = 2;
    const AffinityWindow w(x, cfg);
    const long r = 2, side = 5, width = 6;
    for (long i = 0; i < 42; ++i) {
        for (long t = 0; t < side * side; ++t) {
            const long dr = t / side - r, dc = t % side - r;
            const long row = i / width + dr, col = i % width + dc;
            const double g = w.weights(static_cast<std::size_t>(i))[static_cast<std::size_t>(t)];
            if (row < 0 || col < 0 || row >= 7 || col >= width) {
                CHECK(g == 0.0);
                continue;
            }
            const long j = row * width + col;
            const long back = (-dr + r) * side + (-dc + r);
            CHECK(g == w.weights(static_cast<std::size_t>(j))[static_cast<std::size_t>(back)]);
        }
    }
}

TEST_CASE("rank selection")
{
    const std::vector<double> energy{3, 1, 4, 1, 5};
    const BinaryMask all(1, 5, true);
    SUBCASE("pi zero and one")
    {
        CHECK(rank_select(energy, all, 0.0).positive.empty());
        CHECK(rank_select(energy, all, 0.0).negative.size() == 5);
        CHECK(rank_select(energy, all, 1.0).positive.size() == 5);
    }
    SUBCASE("top two")
    {
        const SplitSets s = rank_select(energy, all, 0.4);
        CHECK(s.positive == std::vector<std::size_t>{2, 4});
        CHECK(s.negative == std::vector<std::size_t>{0, 1, 3});
    }
    SUBCASE("ties go to the earlier pixel")
    {
        const SplitSets s = rank_select(energy, all, 0.8);
        CHECK(s.positive == std::vector<std::size_t>{0, 1, 2, 4});
        CHECK(s.negative == std::vector<std::size_t>{3});
    }
    SUBCASE("only unlabeled pixels take part")
    {
        BinaryMask some(1, 5, true);
        some.set(4, false);
        const SplitSets s = rank_select(energy, some, 0.5);
        CHECK(s.positive == std::vector<std::size_t>{0, 2});
        CHECK(s.negative == std::vector<std::size_t>{1, 3});
    }
    SUBCASE("monotone transforms do not change the split")
    {
        SeededRng rng(6);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> e(30), t(30);
            for (std::size_t i = 0; i < 30; ++i) {
                e[i] = static_cast<double>(rng.uniform_int(8));
                t[i] = std::exp(2.0 * e[i]) - 3.0;
            }
            const BinaryMask mask(5, 6, true);
            const double pi = rng.uniform();
            CHECK(rank_select(e, mask, pi).positive == rank_select(t, mask, pi).positive);
        }
    }
    SUBCASE("half-up rounding")
    {
        CHECK(positive_count(0.25, 10) == 3);
        CHECK(positive_count(0.24, 10) == 2);
        CHECK(positive_count(1.0, 7) == 7);
        CHECK(code_of([] { positive_count(1.5, 7); }) == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("energy config validation")
{
    EnergyConfig cfg;
    cfg.sigma_position = 0.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
    cfg = EnergyConfig{};
    cfg.radius = 0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
}
