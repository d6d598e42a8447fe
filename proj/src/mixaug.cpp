#include "scribble/mixaug.hpp"

#include "scribble/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace scribble {

SaliencyMap image_saliency(const Image& image)
{
    const std::size_t h = image.height(), w = image.width();
    SaliencyMap s{image.shape(), std::vector<double>(image.pixels(), 0.0)};
    auto clamp_row = [h](long r) { return static_cast<std::size_t>(std::clamp(r, 0L, static_cast<long>(h) - 1)); };
    auto clamp_col = [w](long c) { return static_cast<std::size_t>(std::clamp(c, 0L, static_cast<long>(w) - 1)); };
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const long rl = static_cast<long>(r), cl = static_cast<long>(c);
            double total = 0.0;
            for (std::size_t ch = 0; ch < image.channels(); ++ch) {
                const double gx = 0.5 * (image.at(r, clamp_col(cl + 1), ch) - image.at(r, clamp_col(cl - 1), ch));
                const double gy = 0.5 * (image.at(clamp_row(rl + 1), c, ch) - image.at(clamp_row(rl - 1), c, ch));
                total += std::sqrt(gx * gx + gy * gy);
            }
            s.values[r * w + c] = total;
        }
    }
    return s;
}

SaliencyMap loss_saliency(const Image& image, const PixelModel& model, const LabelMap& scribbles)
{
    const ProbMap pred = predict(model, image);
    const LossValue pce = pce_loss(pred, scribbles);
    const Image grad = input_gradient(model, image, pce.gradient);
    SaliencyMap s{image.shape(), std::vector<double>(image.pixels(), 0.0)};
    for (std::size_t i = 0; i < image.pixels(); ++i) {
        double sq = 0.0;
        for (double g : grad.pixel(i)) {
            sq += g * g;
        }
        s.values[i] = std::sqrt(sq);
    }
    return s;
}

namespace {

void check_grid(Shape shape, std::size_t grid)
{
    if (grid == 0 || shape.height % grid != 0 || shape.width % grid != 0) {
        throw Error(ErrorCode::GridMismatch, "grid " + std::to_string(grid) + " does not divide " +
                                                 std::to_string(shape.height) + "x" + std::to_string(shape.width));
    }
}

}  // namespace

std::vector<double> block_saliency(const SaliencyMap& saliency, std::size_t grid)
{
    check_grid(saliency.shape, grid);
    const std::size_t bh = saliency.shape.height / grid, bw = saliency.shape.width / grid;
    std::vector<double> out(grid * grid, 0.0);
    for (std::size_t r = 0; r < saliency.shape.height; ++r) {
        for (std::size_t c = 0; c < saliency.shape.width; ++c) {
            out[(r / bh) * grid + c / bw] += saliency.values[r * saliency.shape.width + c];
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(bh * bw);
    }
    return out;
}

std::vector<double> block_means(const Image& image, std::size_t grid)
{
    check_grid(image.shape(), grid);
    const std::size_t ch_count = image.channels();
    const std::size_t bh = image.height() / grid, bw = image.width() / grid;
    std::vector<double> out(grid * grid * ch_count, 0.0);
    for (std::size_t r = 0; r < image.height(); ++r) {
        for (std::size_t c = 0; c < image.width(); ++c) {
            const std::size_t b = (r / bh) * grid + c / bw;
            for (std::size_t ch = 0; ch < ch_count; ++ch) {
                out[b * ch_count + ch] += image.at(r, c, ch);
            }
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(bh * bw);
    }
    return out;
}

void MixConfig::validate() const
{
    if (grid == 0) {
        throw Error(ErrorCode::InvalidArgument, "mix grid must be positive");
    }
    if (beta_levels.size() < 2 || !std::is_sorted(beta_levels.begin(), beta_levels.end()) ||
        beta_levels.front() != 0.0 || beta_levels.back() != 1.0) {
        throw Error(ErrorCode::InvalidArgument, "beta levels must be sorted within [0, 1] and contain 0 and 1");
    }
    if (std::adjacent_find(beta_levels.begin(), beta_levels.end()) != beta_levels.end()) {
        throw Error(ErrorCode::InvalidArgument, "beta levels must be distinct");
    }
    if (label_smoothness < 0.0 || image_smoothness < 0.0 || prior_weight < 0.0 || transport_weight < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "mix weights must be non-negative");
    }
    if (!(prior_p > 0.0 && prior_p < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "binomial prior parameter must lie in (0, 1)");
    }
}

namespace {

std::vector<double> level_prior_costs(const MixConfig& cfg)
{
    const std::size_t trials = cfg.beta_levels.size() - 1;
    std::vector<double> cost(cfg.beta_levels.size());
    for (std::size_t l = 0; l <= trials; ++l) {
        const double log_binom = std::lgamma(static_cast<double>(trials) + 1.0) - std::lgamma(static_cast<double>(l) + 1.0) -
                                 std::lgamma(static_cast<double>(trials - l) + 1.0);
        const double log_p = log_binom + static_cast<double>(l) * std::log(cfg.prior_p) +
                             static_cast<double>(trials - l) * std::log1p(-cfg.prior_p);
        cost[l] = -cfg.prior_weight * log_p;
    }
    return cost;
}

// Block-level energy terms, precomputed once per problem.
class BetaEnergy {
public:
    BetaEnergy(const BetaProblem& problem, const MixConfig& cfg) : p_(problem), cfg_(cfg), n_(problem.grid * problem.grid)
    {
        cfg.validate();
        if (problem.saliency1.size() != n_ || problem.saliency2.size() != n_ ||
            problem.means1.size() != n_ * problem.channels || problem.means2.size() != n_ * problem.channels) {
            throw Error(ErrorCode::GridMismatch, "beta problem arrays do not match the grid");
        }
        const std::vector<double> prior = level_prior_costs(cfg);
        unary_.assign(n_ * levels(), 0.0);
        for (std::size_t b = 0; b < n_; ++b) {
            for (std::size_t l = 0; l < levels(); ++l) {
                const double beta = cfg.beta_levels[l];
                unary_[b * levels() + l] = -((1.0 - beta) * p_.saliency1[b] + beta * p_.saliency2[b]) + prior[l];
            }
        }
    }

    std::size_t blocks() const { return n_; }
    std::size_t levels() const { return cfg_.beta_levels.size(); }
    double unary(std::size_t b, std::size_t l) const { return unary_[b * levels() + l]; }

    double pairwise(std::size_t a, std::size_t la, std::size_t b, std::size_t lb) const
    {
        if (la == lb) {
            return 0.0;
        }
        const double ba = cfg_.beta_levels[la], bb = cfg_.beta_levels[lb];
        double seam = 0.0;
        for (std::size_t ch = 0; ch < p_.channels; ++ch) {
            const double ca = (1.0 - ba) * p_.means1[a * p_.channels + ch] + ba * p_.means2[a * p_.channels + ch];
            const double cb = (1.0 - bb) * p_.means1[b * p_.channels + ch] + bb * p_.means2[b * p_.channels + ch];
            seam += (ca - cb) * (ca - cb);
        }
        return cfg_.label_smoothness * (ba - bb) * (ba - bb) + cfg_.image_smoothness * std::sqrt(seam);
    }

    template <typename Fn>
    void for_each_neighbour(std::size_t b, Fn&& fn) const
    {
        const std::size_t g = p_.grid, r = b / g, c = b % g;
        if (r > 0) fn(b - g);
        if (r + 1 < g) fn(b + g);
        if (c > 0) fn(b - 1);
        if (c + 1 < g) fn(b + 1);
    }

    double total(const std::vector<std::size_t>& beta) const
    {
        double e = 0.0;
        for (std::size_t b = 0; b < n_; ++b) {
            e += unary(b, beta[b]);
            const std::size_t g = p_.grid;
            if ((b % g) + 1 < g) e += pairwise(b, beta[b], b + 1, beta[b + 1]);
            if (b + g < n_) e += pairwise(b, beta[b], b + g, beta[b + g]);
        }
        return e;
    }

    double local(const std::vector<std::size_t>& beta, std::size_t b, std::size_t l) const
    {
        double e = unary(b, l);
        for_each_neighbour(b, [&](std::size_t nb) { e += pairwise(b, l, nb, beta[nb]); });
        return e;
    }

private:
    const BetaProblem& p_;
    const MixConfig& cfg_;
    std::size_t n_;
    std::vector<double> unary_;
};

void icm(const BetaEnergy& energy, std::vector<std::size_t>& beta, std::size_t max_sweeps)
{
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        bool changed = false;
        for (std::size_t b = 0; b < energy.blocks(); ++b) {
            std::size_t best = beta[b];
            double best_e = energy.local(beta, b, best);
            for (std::size_t l = 0; l < energy.levels(); ++l) {
                const double e = energy.local(beta, b, l);
                if (e < best_e - 1e-15) {
                    best_e = e;
                    best = l;
                }
            }
            if (best != beta[b]) {
                beta[b] = best;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }
}

}  // namespace

double beta_objective(const BetaProblem& problem, const std::vector<std::size_t>& beta, const MixConfig& cfg)
{
    const BetaEnergy energy(problem, cfg);
    if (beta.size() != energy.blocks()) {
        throw Error(ErrorCode::GridMismatch, "beta has the wrong number of blocks");
    }
    return energy.total(beta);
}

std::vector<double> BetaSolution::values(const MixConfig& cfg) const
{
    std::vector<double> out(levels.size());
    for (std::size_t b = 0; b < levels.size(); ++b) {
        out[b] = cfg.beta_levels[levels[b]];
    }
    return out;
}

BetaSolution optimize_beta(const BetaProblem& problem, const MixConfig& cfg)
{
    const BetaEnergy energy(problem, cfg);
    const std::size_t n = energy.blocks();
    const std::size_t top = energy.levels() - 1;
    SeededRng rng(cfg.icm_seed);

    BetaSolution best;
    best.objective = std::numeric_limits<double>::infinity();
    const std::size_t starts = std::max<std::size_t>(cfg.icm_restarts, 3);
    for (std::size_t start = 0; start < starts; ++start) {
        std::vector<std::size_t> beta(n, 0);
        if (start == 0) {
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t l = 1; l <= top; ++l) {
                    if (energy.unary(b, l) < energy.unary(b, beta[b])) {
                        beta[b] = l;
                    }
                }
            }
        } else if (start == 2) {
            std::fill(beta.begin(), beta.end(), top);
        } else if (start > 2) {
            for (auto& l : beta) {
                l = rng.uniform_int(energy.levels());
            }
        }
        icm(energy, beta, cfg.icm_max_sweeps);
        const double e = energy.total(beta);
        if (e < best.objective) {
            best.objective = e;
            best.levels = std::move(beta);
        }
    }
    return best;
}

BetaSolution optimize_beta_exhaustive(const BetaProblem& problem, const MixConfig& cfg)
{
    const BetaEnergy energy(problem, cfg);
    const std::size_t n = energy.blocks(), levels = energy.levels();
    if (std::pow(static_cast<double>(levels), static_cast<double>(n)) > static_cast<double>(1 << 20)) {
        throw Error(ErrorCode::InvalidArgument, "problem too large for enumeration");
    }
    std::vector<std::size_t> beta(n, 0);
    BetaSolution best{beta, energy.total(beta)};
    while (true) {
        std::size_t b = 0;
        while (b < n && ++beta[b] == levels) {
            beta[b++] = 0;
        }
        if (b == n) {
            break;
        }
        const double e = energy.total(beta);
        if (e < best.objective) {
            best = {beta, e};
        }
    }
    return best;
}

double block_distance(std::size_t grid, std::size_t a, std::size_t b)
{
    const double dr = static_cast<double>(a / grid) - static_cast<double>(b / grid);
    const double dc = static_cast<double>(a % grid) - static_cast<double>(b % grid);
    return dr * dr + dc * dc;
}

BlockPermutation optimize_transport(const std::vector<double>& saliency, const std::vector<double>& beta,
                                    const MixConfig& cfg, int which)
{
    const std::size_t n = saliency.size();
    const auto grid = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    if (beta.size() != n || grid * grid != n) {
        throw Error(ErrorCode::GridMismatch, "transport inputs do not describe a square block grid");
    }
    if (which != 1 && which != 2) {
        throw Error(ErrorCode::InvalidArgument, "transport index must be 1 or 2");
    }
    // Rows are source blocks, columns destinations.
    CostMatrix cost(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double keep = which == 1 ? 1.0 - beta[j] : beta[j];
            cost(i, j) = cfg.transport_weight * block_distance(grid, i, j) - keep * saliency[i];
        }
    }
    const Assignment a = hungarian(cost);
    BlockPermutation source_of_dest(n);
    for (std::size_t i = 0; i < n; ++i) {
        source_of_dest[a.column_of_row[i]] = i;
    }
    return source_of_dest;
}

MixPlan MixPlan::identity(std::size_t grid, double beta)
{
    MixPlan plan;
    plan.grid = grid;
    plan.beta.assign(grid * grid, beta);
    plan.perm1.resize(grid * grid);
    std::iota(plan.perm1.begin(), plan.perm1.end(), 0);
    plan.perm2 = plan.perm1;
    return plan;
}

void MixPlan::validate() const
{
    const std::size_t n = grid * grid;
    auto is_perm = [n](const BlockPermutation& p) {
        if (p.size() != n) {
            return false;
        }
        std::vector<char> seen(n, 0);
        for (std::size_t v : p) {
            if (v >= n || seen[v]) {
                return false;
            }
            seen[v] = 1;
        }
        return true;
    };
    if (grid == 0 || beta.size() != n || !is_perm(perm1) || !is_perm(perm2)) {
        throw Error(ErrorCode::InvalidArgument, "mix plan is not a valid block recipe");
    }
    for (double b : beta) {
        if (!(b >= 0.0 && b <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "mix plan beta outside [0, 1]");
        }
    }
}

namespace {

// Calls fn(dest_pixel, src1_pixel, src2_pixel, beta) for every pixel.
template <typename Fn>
void for_each_mixed_pixel(Shape shape, const MixPlan& plan, Fn&& fn)
{
    plan.validate();
    check_grid(shape, plan.grid);
    const std::size_t bh = shape.height / plan.grid, bw = shape.width / plan.grid;
    for (std::size_t r = 0; r < shape.height; ++r) {
        for (std::size_t c = 0; c < shape.width; ++c) {
            const std::size_t b = (r / bh) * plan.grid + c / bw;
            const std::size_t dr = r % bh, dc = c % bw;
            const std::size_t s1 = plan.perm1[b], s2 = plan.perm2[b];
            const std::size_t p1 = ((s1 / plan.grid) * bh + dr) * shape.width + (s1 % plan.grid) * bw + dc;
            const std::size_t p2 = ((s2 / plan.grid) * bh + dr) * shape.width + (s2 % plan.grid) * bw + dc;
            fn(r * shape.width + c, p1, p2, plan.beta[b]);
        }
    }
}

}  // namespace

Image mix_images(const Image& x1, const Image& x2, const MixPlan& plan)
{
    require_same_shape(x1.shape(), x2.shape(), "mix_images");
    if (x1.channels() != x2.channels()) {
        throw Error(ErrorCode::ShapeMismatch, "mix_images: channel counts differ");
    }
    const std::size_t ch_count = x1.channels();
    std::vector<double> out(x1.data().size());
    for_each_mixed_pixel(x1.shape(), plan, [&](std::size_t d, std::size_t p1, std::size_t p2, double beta) {
        auto a = x1.pixel(p1);
        auto b = x2.pixel(p2);
        for (std::size_t ch = 0; ch < ch_count; ++ch) {
            out[d * ch_count + ch] = (1.0 - beta) * a[ch] + beta * b[ch];
        }
    });
    return Image(x1.height(), x1.width(), ch_count, std::move(out));
}

Field mix_fields(const Field& y1, const Field& y2, const MixPlan& plan)
{
    require_same_shape(y1.shape(), y2.shape(), "mix_fields");
    if (y1.depth() != y2.depth()) {
        throw Error(ErrorCode::ShapeMismatch, "mix_fields: depths differ");
    }
    Field out(y1.height(), y1.width(), y1.depth());
    for_each_mixed_pixel(y1.shape(), plan, [&](std::size_t d, std::size_t p1, std::size_t p2, double beta) {
        auto a = y1.pixel(p1);
        auto b = y2.pixel(p2);
        auto o = out.pixel(d);
        for (std::size_t k = 0; k < o.size(); ++k) {
            o[k] = (1.0 - beta) * a[k] + beta * b[k];
        }
    });
    return out;
}

MixedPair apply_mix(const Image& x1, const Field& y1, const Image& x2, const Field& y2, const MixPlan& plan)
{
    require_same_shape(x1.shape(), y1.shape(), "apply_mix image/label 1");
    require_same_shape(x2.shape(), y2.shape(), "apply_mix image/label 2");
    MixedPair out;
    out.image = mix_images(x1, x2, plan);
    out.labels = mix_fields(y1, y2, plan);
    if (plan.occlusion) {
        out = apply_occlusion(out, *plan.occlusion);
    }
    return out;
}

MixedPair apply_mix(const Image& x1, const LabelMap& y1, const Image& x2, const LabelMap& y2,
                    std::size_t classes, const MixPlan& plan)
{
    return apply_mix(x1, label_weights(y1, classes), x2, label_weights(y2, classes), plan);
}

BinaryMask occlusion_mask(Shape shape, const Occlusion& occlusion)
{
    BinaryMask mask(shape.height, shape.width);
    const double half = occlusion.side / 2.0;
    const double cs = std::cos(occlusion.angle), sn = std::sin(occlusion.angle);
    for (std::size_t r = 0; r < shape.height; ++r) {
        for (std::size_t c = 0; c < shape.width; ++c) {
            const double dy = static_cast<double>(r) - occlusion.center_row;
            const double dx = static_cast<double>(c) - occlusion.center_col;
            const double u = dx * cs + dy * sn;
            const double v = -dx * sn + dy * cs;
            if (u >= -half && u < half && v >= -half && v < half) {
                mask.set(r, c, true);
            }
        }
    }
    return mask;
}

Occlusion random_occlusion(Shape shape, double side, SeededRng& rng)
{
    if (!(side >= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "occlusion side must be at least 1");
    }
    if (side > static_cast<double>(std::min(shape.height, shape.width))) {
        throw Error(ErrorCode::OcclusionTooLarge, "side " + std::to_string(side) + " exceeds image");
    }
    Occlusion o;
    o.side = side;
    o.center_row = rng.uniform(0.0, static_cast<double>(shape.height - 1));
    o.center_col = rng.uniform(0.0, static_cast<double>(shape.width - 1));
    o.angle = rng.uniform(0.0, M_PI / 2.0);
    return o;
}

MixedPair apply_occlusion(const MixedPair& pair, const Occlusion& occlusion)
{
    if (occlusion.side > static_cast<double>(std::min(pair.image.height(), pair.image.width()))) {
        throw Error(ErrorCode::OcclusionTooLarge, "side " + std::to_string(occlusion.side) + " exceeds image");
    }
    require_same_shape(pair.image.shape(), pair.labels.shape(), "apply_occlusion");
    const BinaryMask mask = occlusion_mask(pair.image.shape(), occlusion);
    const std::size_t ch_count = pair.image.channels();
    std::vector<double> data(pair.image.data().begin(), pair.image.data().end());
    MixedPair out{Image(), pair.labels};
    for (std::size_t i = 0; i < mask.pixels(); ++i) {
        if (!mask[i]) {
            continue;
        }
        std::fill_n(data.begin() + static_cast<long>(i * ch_count), ch_count, 0.0);
        auto w = out.labels.pixel(i);
        std::fill(w.begin(), w.end(), 0.0);
        w[kBackground] = 1.0;
    }
    out.image = Image(pair.image.height(), pair.image.width(), ch_count, std::move(data));
    return out;
}

MixedPair occlude(const MixedPair& pair, double side, SeededRng& rng)
{
    return apply_occlusion(pair, random_occlusion(pair.image.shape(), side, rng));
}

Field mask_outside(const Field& field, const Occlusion& occlusion)
{
    const BinaryMask mask = occlusion_mask(field.shape(), occlusion);
    Field out = field;
    for (std::size_t i = 0; i < mask.pixels(); ++i) {
        if (mask[i]) {
            auto p = out.pixel(i);
            std::fill(p.begin(), p.end(), 0.0);
        }
    }
    return out;
}

std::size_t default_occlusion_side(std::size_t image_side)
{
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(32.0 / 192.0 * static_cast<double>(image_side))));
}

namespace {

void normalise_mean_one(std::vector<double>& v)
{
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (mean > 0.0) {
        for (double& x : v) {
            x /= mean;
        }
    }
}

}  // namespace

MixPlan plan_mix(const Image& x1, const Image& x2, const SaliencyMap& s1, const SaliencyMap& s2,
                 const MixConfig& cfg, double occlusion_side, SeededRng& rng)
{
    BetaProblem problem;
    problem.grid = cfg.grid;
    problem.channels = x1.channels();
    problem.saliency1 = block_saliency(s1, cfg.grid);
    problem.saliency2 = block_saliency(s2, cfg.grid);
    normalise_mean_one(problem.saliency1);
    normalise_mean_one(problem.saliency2);
    problem.means1 = block_means(x1, cfg.grid);
    problem.means2 = block_means(x2, cfg.grid);

    MixConfig local = cfg;
    if (cfg.sample_prior) {
        local.prior_p = rng.uniform(0.05, 0.95);
    }
    MixPlan plan;
    plan.grid = cfg.grid;
    plan.beta = optimize_beta(problem, local).values(cfg);
    plan.perm1 = optimize_transport(problem.saliency1, plan.beta, cfg, 1);
    plan.perm2 = optimize_transport(problem.saliency2, plan.beta, cfg, 2);
    if (occlusion_side > 0.0) {
        plan.occlusion = random_occlusion(x1.shape(), occlusion_side, rng);
    }
    return plan;
}

}  // namespace scribble
