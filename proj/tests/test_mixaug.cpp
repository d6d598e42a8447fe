#include "scribble/mixaug.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numeric>

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

BetaProblem random_problem(SeededRng& rng, std::size_t grid)
{
    BetaProblem p;
    p.grid = grid;
    p.channels = 1;
    for (std::size_t b = 0; b < grid * grid; ++b) {
        p.saliency1.push_back(rng.uniform(0.0, 2.0));
        p.saliency2.push_back(rng.uniform(0.0, 2.0));
        p.means1.push_back(rng.uniform());
        p.means2.push_back(rng.uniform());
    }
    return p;
}

// Objective written from the definition, term by term.
double direct_objective(const BetaProblem& p, const std::vector<std::size_t>& idx, const MixConfig& cfg)
{
    const std::size_t g = p.grid, n = g * g, trials = cfg.beta_levels.size() - 1;
    auto beta = [&](std::size_t b) { return cfg.beta_levels[idx[b]]; };
    double e = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        e -= (1.0 - beta(b)) * p.saliency1[b] + beta(b) * p.saliency2[b];
        const double l = static_cast<double>(idx[b]);
        double choose = 1.0;
        for (std::size_t t = 0; t < idx[b]; ++t) {
            choose *= static_cast<double>(trials - t) / static_cast<double>(t + 1);
        }
        const double prob =
            choose * std::pow(cfg.prior_p, l) * std::pow(1.0 - cfg.prior_p, static_cast<double>(trials) - l);
        e -= cfg.prior_weight * std::log(prob);
    }
    auto colour = [&](std::size_t b) { return (1.0 - beta(b)) * p.means1[b] + beta(b) * p.means2[b]; };
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const bool adjacent = (b == a + 1 && a % g + 1 < g) || b == a + g;
            if (!adjacent) {
                continue;
            }
            const double d = beta(a) - beta(b);
            e += cfg.label_smoothness * d * d;
            if (idx[a] != idx[b]) {
                e += cfg.image_smoothness * std::abs(colour(a) - colour(b));
            }
        }
    }
    return e;
}

}  // namespace

TEST_CASE("image saliency")
{
    SUBCASE("constant image")
    {
        const SaliencyMap s = image_saliency(Image(5, 5, 1, std::vector<double>(25, 0.7)));
        for (double v : s.values) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("vertical step edge on 4x4")
    {
        std::vector<double> data(16);
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                data[r * 4 + c] = c >= 2 ? 1.0 : 0.0;
            }
        }
        const SaliencyMap s = image_saliency(Image(4, 4, 1, data));
        // Central difference (x[c+1] - x[c-1]) / 2 with replicated edges: 0, 0.5, 0.5, 0.
        for (std::size_t r = 0; r < 4; ++r) {
            CHECK(s.values[r * 4 + 0] == 0.0);
            CHECK(s.values[r * 4 + 1] == 0.5);
            CHECK(s.values[r * 4 + 2] == 0.5);
            CHECK(s.values[r * 4 + 3] == 0.0);
        }
    }
    SUBCASE("single bright pixel")
    {
        std::vector<double> data(25, 0.0);
        data[12] = 1.0;
        const SaliencyMap s = image_saliency(Image(5, 5, 1, data));
        for (std::size_t i = 0; i < 25; ++i) {
            const long r = static_cast<long>(i) / 5 - 2, c = static_cast<long>(i) % 5 - 2;
            const double want = std::labs(r) + std::labs(c) == 1 ? 0.5 : 0.0;
            CHECK(s.values[i] == want);
        }
    }
    SUBCASE("channels add")
    {
        SeededRng rng(3);
        const Image grey = random_image(rng, 6, 6);
        std::vector<double> twice;
        for (double v : grey.data()) {
            twice.push_back(v);
            twice.push_back(-2.0 * v);
        }
        const SaliencyMap one = image_saliency(grey);
        const SaliencyMap two = image_saliency(Image(6, 6, 2, twice));
        for (std::size_t i = 0; i < 36; ++i) {
            CHECK(two.values[i] == doctest::Approx(3.0 * one.values[i]));
        }
    }
}

TEST_CASE("loss saliency is non-negative and needs scribbles")
{
    SeededRng rng(5);
    const Image x = random_image(rng, 8, 8);
    PixelModel model = PixelModel::zeros(feature_dim(1), 3);
    for (std::size_t i = 0; i < model.parameter_count(); ++i) {
        model.parameter(i) = rng.normal();
    }
    CHECK(code_of([&] { loss_saliency(x, model, LabelMap(8, 8)); }) == ErrorCode::NoSupervision);
    LabelMap scribbles(8, 8);
    scribbles[10] = 1;
    scribbles[40] = 2;
    const SaliencyMap s = loss_saliency(x, model, scribbles);
    double total = 0.0;
    for (double v : s.values) {
        CHECK(v >= 0.0);
        CHECK(std::isfinite(v));
        total += v;
    }
    CHECK(total > 0.0);
}

TEST_CASE("block saliency")
{
    SUBCASE("uniform")
    {
        const SaliencyMap s{{8, 8}, std::vector<double>(64, 2.5)};
        for (double v : block_saliency(s, 4)) {
            CHECK(v == 2.5);
        }
    }
    SUBCASE("one hot block")
    {
        SaliencyMap s{{8, 8}, std::vector<double>(64, 0.0)};
        s.values[2 * 8 + 6] = 4.0;
        s.values[3 * 8 + 7] = 4.0;
        const auto b = block_saliency(s, 4);
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(b[i] == (i == 7 ? 2.0 : 0.0));
        }
    }
    SUBCASE("naive averaging and mass conservation")
    {
        SeededRng rng(8);
        for (int trial = 0; trial < 20; ++trial) {
            SaliencyMap s{{8, 8}, std::vector<double>(64)};
            for (double& v : s.values) {
                v = rng.uniform();
            }
            const auto b = block_saliency(s, 4);
            for (std::size_t br = 0; br < 4; ++br) {
                for (std::size_t bc = 0; bc < 4; ++bc) {
                    const double mean = (s.values[(2 * br) * 8 + 2 * bc] + s.values[(2 * br) * 8 + 2 * bc + 1] +
                                         s.values[(2 * br + 1) * 8 + 2 * bc] + s.values[(2 * br + 1) * 8 + 2 * bc + 1]) /
                                        4.0;
                    CHECK(b[br * 4 + bc] == doctest::Approx(mean).epsilon(1e-14));
                }
            }
            CHECK(std::accumulate(b.begin(), b.end(), 0.0) * 4.0 ==
                  doctest::Approx(std::accumulate(s.values.begin(), s.values.end(), 0.0)));
        }
    }
    SUBCASE("grid must divide")
    {
        const SaliencyMap s{{9, 8}, std::vector<double>(72, 0.0)};
        CHECK(code_of([&] { block_saliency(s, 4); }) == ErrorCode::GridMismatch);
    }
}

TEST_CASE("beta objective matches the direct sum")
{
    SeededRng rng(12);
    MixConfig cfg;
    cfg.grid = 3;
    for (int trial = 0; trial < 100; ++trial) {
        cfg.prior_p = rng.uniform(0.1, 0.9);
        const BetaProblem p = random_problem(rng, 3);
        std::vector<std::size_t> idx(9);
        for (auto& v : idx) {
            v = rng.uniform_int(3);
        }
        CHECK(beta_objective(p, idx, cfg) == doctest::Approx(direct_objective(p, idx, cfg)).epsilon(1e-12));
    }
}

TEST_CASE("beta optimisation degenerate cases")
{
    SUBCASE("empty second saliency keeps image one")
    {
        MixConfig cfg;
        cfg.grid = 3;
        cfg.prior_weight = 0.0;
        SeededRng rng(1);
        BetaProblem p = random_problem(rng, 3);
        std::fill(p.saliency2.begin(), p.saliency2.end(), 0.0);
        for (std::size_t l : optimize_beta(p, cfg).levels) {
            CHECK(l == 0);
        }
    }
    SUBCASE("swapping the sources mirrors the objective")
    {
        MixConfig cfg;
        cfg.grid = 3;
        cfg.prior_p = 0.5;
        SeededRng rng(2);
        BetaProblem p = random_problem(rng, 3);
        p.saliency2 = p.saliency1;
        p.means2 = p.means1;
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<std::size_t> idx(9), flipped(9);
            for (std::size_t b = 0; b < 9; ++b) {
                idx[b] = rng.uniform_int(3);
                flipped[b] = 2 - idx[b];
            }
            CHECK(beta_objective(p, idx, cfg) == doctest::Approx(beta_objective(p, flipped, cfg)).epsilon(1e-12));
        }
    }
}

TEST_CASE("ICM against enumeration")
{
    MixConfig cfg;
    cfg.grid = 3;
    SeededRng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        cfg.prior_p = rng.uniform(0.05, 0.95);
        const BetaProblem p = random_problem(rng, 3);
        const BetaSolution icm = optimize_beta(p, cfg);
        const BetaSolution exact = optimize_beta_exhaustive(p, cfg);
        CHECK(exact.objective <= icm.objective + 1e-12);
        CHECK(icm.objective == doctest::Approx(beta_objective(p, icm.levels, cfg)));
        // The enumeration optimum is the oracle's minimum too.
        double best = std::numeric_limits<double>::infinity();
        std::vector<std::size_t> idx(9, 0);
        for (std::size_t code = 0; code < 19683; ++code) {
            std::size_t c = code;
            for (auto& v : idx) {
                v = c % 3;
                c /= 3;
            }
            best = std::min(best, direct_objective(p, idx, cfg));
        }
        CHECK(exact.objective == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("hungarian")
{
    SUBCASE("diagonal zeros")
    {
        CostMatrix c(4, 4, 5.0);
        for (std::size_t i = 0; i < 4; ++i) {
            c(i, i) = 0.0;
        }
        const Assignment a = hungarian(c);
        CHECK(a.cost == 0.0);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(a.column_of_row[i] == i);
        }
    }
    SUBCASE("1x1")
    {
        CostMatrix c(1, 1, -3.0);
        const Assignment a = hungarian(c);
        CHECK(a.column_of_row[0] == 0);
        CHECK(a.cost == -3.0);
    }
    SUBCASE("brute force")
    {
        SeededRng rng(31);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng.uniform_int(6);
            CostMatrix c(n, n);
            for (double& v : c.data) {
                v = static_cast<double>(rng.uniform_int(41)) - 20.0;
            }
            const Assignment a = hungarian(c);
            CHECK(a.cost == oracle::brute_assignment(c.data, n));
            CHECK(assignment_cost(c, a.column_of_row) == a.cost);
            // Row and column shifts leave the optimal permutation optimal.
            CostMatrix shifted = c;
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t col = 0; col < n; ++col) {
                    shifted(r, col) += 3.0 * static_cast<double>(r) - 2.0 * static_cast<double>(col);
                }
            }
            CHECK(assignment_cost(shifted, a.column_of_row) == oracle::brute_assignment(shifted.data, n));
        }
    }
    SUBCASE("bad input")
    {
        CHECK(code_of([] { hungarian(CostMatrix(2, 3)); }) == ErrorCode::BadCostMatrix);
        CHECK(code_of([] { hungarian(CostMatrix()); }) == ErrorCode::BadCostMatrix);
        CostMatrix c(2, 2);
        c(0, 1) = std::numeric_limits<double>::infinity();
        CHECK(code_of([&] { hungarian(c); }) == ErrorCode::BadCostMatrix);
    }
}

TEST_CASE("block transport")
{
    MixConfig cfg;
    SUBCASE("huge displacement cost keeps blocks in place")
    {
        cfg.transport_weight = 1e6;
        SeededRng rng(4);
        std::vector<double> s(16), beta(16);
        for (std::size_t i = 0; i < 16; ++i) {
            s[i] = rng.uniform();
            beta[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        }
        for (int which : {1, 2}) {
            const BlockPermutation p = optimize_transport(s, beta, cfg, which);
            for (std::size_t i = 0; i < 16; ++i) {
                CHECK(p[i] == i);
            }
        }
    }
    SUBCASE("no gain means identity")
    {
        const std::vector<double> s{3.0, 1.0, 0.5, 2.0};
        const BlockPermutation p = optimize_transport(s, std::vector<double>(4, 1.0), cfg, 1);
        CHECK(p == BlockPermutation{0, 1, 2, 3});
        const BlockPermutation zero = optimize_transport(std::vector<double>(4, 0.0), {0.0, 1.0, 0.0, 1.0}, cfg, 2);
        CHECK(zero == BlockPermutation{0, 1, 2, 3});
    }
    SUBCASE("2x2 hand case")
    {
        // Only destination 3 keeps image one; the salient block 0 should move there.
        const std::vector<double> s{4.0, 0.0, 0.0, 0.0};
        const std::vector<double> beta{1.0, 1.0, 1.0, 0.0};
        cfg.transport_weight = 0.5;
        const BlockPermutation p = optimize_transport(s, beta, cfg, 1);
        CHECK(p[3] == 0);
        // Enumerate all 24 permutations for the best score.
        std::vector<std::size_t> perm{0, 1, 2, 3};
        double best = -1e300;
        std::vector<std::size_t> best_perm;
        do {
            double score = 0.0;
            for (std::size_t dest = 0; dest < 4; ++dest) {
                const std::size_t src = perm[dest];
                score += (1.0 - beta[dest]) * s[src] - 0.5 * block_distance(2, src, dest);
            }
            if (score > best + 1e-12) {
                best = score;
                best_perm = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        double got = 0.0;
        for (std::size_t dest = 0; dest < 4; ++dest) {
            got += (1.0 - beta[dest]) * s[p[dest]] - 0.5 * block_distance(2, p[dest], dest);
        }
        CHECK(got == doctest::Approx(best));
        // Moving is not worth it once the distance cost exceeds the gain.
        cfg.transport_weight = 3.0;
        CHECK(optimize_transport(s, beta, cfg, 1)[3] == 3);
    }
    SUBCASE("block distances")
    {
        CHECK(block_distance(4, 0, 15) == 18.0);
        CHECK(block_distance(4, 5, 6) == 1.0);
        CHECK(block_distance(3, 2, 2) == 0.0);
    }
}

TEST_CASE("mix application")
{
    SeededRng rng(6);
    const Image x1 = random_image(rng, 8, 8), x2 = random_image(rng, 8, 8);
    LabelMap y1(8, 8), y2(8, 8);
    for (std::size_t i = 0; i < 64; ++i) {
        if (rng.bernoulli(0.4)) y1[i] = static_cast<Label>(rng.uniform_int(3));
        if (rng.bernoulli(0.4)) y2[i] = static_cast<Label>(rng.uniform_int(3));
    }
    SUBCASE("beta zero returns the first source")
    {
        const MixedPair m = apply_mix(x1, y1, x2, y2, 3, MixPlan::identity(4, 0.0));
        CHECK(m.image == x1);
        CHECK(m.labels == label_weights(y1, 3));
    }
    SUBCASE("beta one returns the second source")
    {
        const MixedPair m = apply_mix(x1, y1, x2, y2, 3, MixPlan::identity(4, 1.0));
        CHECK(m.image == x2);
        CHECK(m.labels == label_weights(y2, 3));
    }
    SUBCASE("checkerboard interleaves blocks")
    {
        MixPlan plan = MixPlan::identity(4, 0.0);
        for (std::size_t b = 0; b < 16; ++b) {
            plan.beta[b] = ((b / 4 + b % 4) % 2) ? 1.0 : 0.0;
        }
        const MixedPair m = apply_mix(x1, y1, x2, y2, 3, plan);
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                const bool second = ((r / 2 + c / 2) % 2) == 1;
                CHECK(m.image.at(r, c) == (second ? x2 : x1).at(r, c));
            }
        }
    }
    SUBCASE("permutation moves whole blocks")
    {
        MixPlan plan = MixPlan::identity(2, 0.0);
        plan.perm1 = {3, 2, 1, 0};
        const Image out = mix_images(x1, x2, plan);
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                const std::size_t sr = (3 - (r / 4) * 2 - c / 4) / 2 * 4 + r % 4;
                const std::size_t sc = (3 - (r / 4) * 2 - c / 4) % 2 * 4 + c % 4;
                CHECK(out.at(r, c) == x1.at(sr, sc));
            }
        }
    }
    SUBCASE("label mass is conserved")
    {
        MixPlan plan = MixPlan::identity(4, 0.0);
        for (double& b : plan.beta) {
            b = rng.uniform();
        }
        std::iota(plan.perm2.rbegin(), plan.perm2.rend(), 0);
        const MixedPair m = apply_mix(x1, y1, x2, y2, 3, plan);
        const std::size_t bw = 2;
        for (std::size_t i = 0; i < 64; ++i) {
            double mass = 0.0;
            for (double w : m.labels.pixel(i)) {
                CHECK(w >= 0.0);
                mass += w;
            }
            const std::size_t r = i / 8, c = i % 8, b = (r / bw) * 4 + c / bw;
            const std::size_t s2 = plan.perm2[b];
            const std::size_t p2 = ((s2 / 4) * bw + r % bw) * 8 + (s2 % 4) * bw + c % bw;
            const double want = (y1[i] != kUnlabeled ? 1.0 - plan.beta[b] : 0.0) +
                                (y2[p2] != kUnlabeled ? plan.beta[b] : 0.0);
            CHECK(mass == doctest::Approx(want));
            CHECK(mass <= 1.0 + 1e-12);
        }
    }
    SUBCASE("shape mismatch")
    {
        const Image small = random_image(rng, 4, 4);
        CHECK(code_of([&] { mix_images(x1, small, MixPlan::identity(2, 0.5)); }) == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("occlusion")
{
    SeededRng rng(10);
    const Image x = random_image(rng, 8, 8);
    LabelMap y(8, 8);
    for (std::size_t i = 0; i < 64; ++i) {
        y[i] = i % 3 == 0 ? kUnlabeled : 1;
    }
    const MixedPair pair{x, label_weights(y, 3)};
    SUBCASE("full image")
    {
        const MixedPair o = apply_occlusion(pair, Occlusion{3.5, 3.5, 8.0, 0.0});
        for (std::size_t i = 0; i < 64; ++i) {
            CHECK(o.image.pixel(i)[0] == 0.0);
            CHECK(o.labels(i, 0) == 1.0);
            CHECK(o.labels(i, 1) == 0.0);
        }
    }
    SUBCASE("unit square touches exactly the rasterised pixel")
    {
        const Occlusion occ{2.0, 5.0, 1.0, 0.0};
        const BinaryMask mask = occlusion_mask({8, 8}, occ);
        CHECK(mask.popcount() == 1);
        CHECK(mask.at(2, 5));
        const MixedPair o = apply_occlusion(pair, occ);
        for (std::size_t i = 0; i < 64; ++i) {
            if (i == 2 * 8 + 5) {
                CHECK(o.image.pixel(i)[0] == 0.0);
            } else {
                CHECK(o.image.pixel(i)[0] == x.pixel(i)[0]);
                CHECK(o.labels.pixel(i)[1] == pair.labels.pixel(i)[1]);
            }
        }
    }
    SUBCASE("rotated square matches point-in-polygon")
    {
        for (int trial = 0; trial < 50; ++trial) {
            const Occlusion occ = random_occlusion({16, 16}, 5.0, rng);
            const BinaryMask mask = occlusion_mask({16, 16}, occ);
            const double cs = std::cos(occ.angle), sn = std::sin(occ.angle);
            // Corners of the square in (col, row), counter-clockwise in the rotated frame.
            const double u[4] = {-2.5, 2.5, 2.5, -2.5}, v[4] = {-2.5, -2.5, 2.5, 2.5};
            double px[4], py[4];
            for (int k = 0; k < 4; ++k) {
                px[k] = occ.center_col + u[k] * cs - v[k] * sn;
                py[k] = occ.center_row + u[k] * sn + v[k] * cs;
            }
            std::size_t inside = 0;
            for (std::size_t r = 0; r < 16; ++r) {
                for (std::size_t c = 0; c < 16; ++c) {
                    double margin = 1e300;
                    for (int k = 0; k < 4; ++k) {
                        const int n = (k + 1) % 4;
                        const double cross = (px[n] - px[k]) * (static_cast<double>(r) - py[k]) -
                                             (py[n] - py[k]) * (static_cast<double>(c) - px[k]);
                        margin = std::min(margin, cross / 5.0);
                    }
                    if (margin > 1e-9) {
                        CHECK(mask.at(r, c));
                    } else if (margin < -1e-9) {
                        CHECK_FALSE(mask.at(r, c));
                    }
                    inside += mask.at(r, c);
                }
            }
            CHECK(inside <= 36);
        }
    }
    SUBCASE("background labels never decrease")
    {
        for (int trial = 0; trial < 20; ++trial) {
            const MixedPair o = occlude(pair, 3.0, rng);
            double before = 0.0, after = 0.0;
            for (std::size_t i = 0; i < 64; ++i) {
                before += pair.labels(i, 0);
                after += o.labels(i, 0);
            }
            CHECK(after >= before);
        }
    }
    SUBCASE("too large")
    {
        CHECK(code_of([&] { occlude(pair, 9.0, rng); }) == ErrorCode::OcclusionTooLarge);
    }
    SUBCASE("default side")
    {
        CHECK(default_occlusion_side(192) == 32);
        CHECK(default_occlusion_side(48) == 8);
        CHECK(default_occlusion_side(2) == 1);
    }
}

TEST_CASE("mix plans are valid and reproducible")
{
    SeededRng rng(14);
    const Image x1 = random_image(rng, 16, 16), x2 = random_image(rng, 16, 16);
    MixConfig cfg;
    SeededRng a(3), b(3);
    const MixPlan p = plan_mix(x1, x2, image_saliency(x1), image_saliency(x2), cfg, 4.0, a);
    const MixPlan q = plan_mix(x1, x2, image_saliency(x1), image_saliency(x2), cfg, 4.0, b);
    CHECK_NOTHROW(p.validate());
    CHECK(p.beta == q.beta);
    CHECK(p.perm1 == q.perm1);
    CHECK(p.perm2 == q.perm2);
    REQUIRE(p.occlusion.has_value());
    CHECK(p.occlusion->side == 4.0);
    for (double v : p.beta) {
        CHECK(std::find(cfg.beta_levels.begin(), cfg.beta_levels.end(), v) != cfg.beta_levels.end());
    }
}

TEST_CASE("mix config validation")
{
    MixConfig cfg;
    cfg.beta_levels = {0.0, 0.5};
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
    cfg.beta_levels = {0.0, 1.0};
    cfg.label_smoothness = -1.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
}
