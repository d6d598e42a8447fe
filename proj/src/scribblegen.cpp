#include "scribble/scribblegen.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace scribble {

std::string_view form_name(ScribbleForm form)
{
    switch (form) {
    case ScribbleForm::Points: return "points";
    case ScribbleForm::RandomWalk: return "random_walk";
    case ScribbleForm::DirRandomWalk: return "dir_random_walk";
    case ScribbleForm::Skeleton: return "skeleton";
    }
    return "unknown";
}

std::optional<ScribbleForm> parse_form(std::string_view name)
{
    for (auto form : {ScribbleForm::Points, ScribbleForm::RandomWalk, ScribbleForm::DirRandomWalk, ScribbleForm::Skeleton}) {
        if (form_name(form) == name) {
            return form;
        }
    }
    return std::nullopt;
}

ScribbleBudget ScribbleBudget::pixels(std::size_t classes, std::size_t per_class)
{
    return {Mode::Pixels, std::vector<std::size_t>(classes, per_class)};
}

ScribbleBudget ScribbleBudget::draws(std::size_t classes, std::size_t per_class)
{
    return {Mode::Draws, std::vector<std::size_t>(classes, per_class)};
}

namespace {

// Lattice directions in counter-clockwise angular order, 45 degrees apart.
constexpr std::array<std::array<long, 2>, 8> kDirections{
    {{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}}};

// Rotation offsets tried when the preferred direction leaves the mask.
constexpr std::array<int, 8> kRotationOrder{0, 1, -1, 2, -2, 3, -3, 4};

std::vector<std::size_t> class_pixels(const LabelMap& gt, Label k)
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
        if (gt[i] == k) {
            out.push_back(i);
        }
    }
    return out;
}

class WalkState {
public:
    WalkState(const LabelMap& gt, Label k, std::size_t n_pix) : gt_(gt), k_(k), target_(n_pix), seen_(gt.pixels(), 0) {}

    bool inside(long r, long c) const
    {
        return gt_.shape().contains(r, c) && gt_[static_cast<std::size_t>(r) * gt_.width() + static_cast<std::size_t>(c)] == k_;
    }
    bool done() const { return result.pixels.size() >= target_; }
    void visit(long r, long c)
    {
        const std::size_t i = static_cast<std::size_t>(r) * gt_.width() + static_cast<std::size_t>(c);
        if (!seen_[i] && !done()) {
            seen_[i] = 1;
            result.pixels.push_back(i);
        }
    }

    WalkResult result;

private:
    const LabelMap& gt_;
    Label k_;
    std::size_t target_;
    std::vector<std::uint8_t> seen_;
};

void check_walk_inputs(const std::vector<std::size_t>& mask, std::size_t n_pix)
{
    if (mask.empty()) {
        throw Error(ErrorCode::InvalidArgument, "random walk needs a non-empty class mask");
    }
    if (n_pix == 0) {
        throw Error(ErrorCode::InvalidArgument, "pixel budget must be at least 1");
    }
}

}  // namespace

LabelMap gen_points(const LabelMap& gt, std::span<const std::size_t> budget, SeededRng& rng)
{
    LabelMap out(gt.height(), gt.width(), kUnlabeled);
    for (std::size_t k = 0; k < budget.size() && k < kMaxClasses; ++k) {
        std::vector<std::size_t> mask = class_pixels(gt, static_cast<Label>(k));
        if (mask.empty()) {
            continue;
        }
        const std::size_t n = budget[k];
        if (n == 0) {
            throw Error(ErrorCode::InvalidArgument, "pixel budget must be at least 1 for class " + std::to_string(k));
        }
        if (n > mask.size()) {
            throw Error(ErrorCode::BudgetExceedsMask, "class " + std::to_string(k) + " has " +
                                                          std::to_string(mask.size()) + " pixels, budget " +
                                                          std::to_string(n));
        }
        // Partial Fisher-Yates: the first n slots become a uniform sample.
        for (std::size_t i = 0; i < n; ++i) {
            std::swap(mask[i], mask[i + rng.uniform_int(mask.size() - i)]);
            out[mask[i]] = static_cast<Label>(k);
        }
    }
    return out;
}

WalkResult gen_random_walk(const LabelMap& gt, Label k, std::size_t n_pix, std::size_t step, SeededRng& rng,
                           const ScribbleOptions& opts)
{
    const std::vector<std::size_t> mask = class_pixels(gt, k);
    check_walk_inputs(mask, n_pix);
    if (step == 0) {
        throw Error(ErrorCode::InvalidArgument, "step length must be at least 1");
    }
    WalkState state(gt, k, n_pix);
    const long w = static_cast<long>(gt.width());
    const std::size_t max_attempts = 1000 + opts.attempt_factor * n_pix;

    long r = 0, c = 0;
    auto restart = [&] {
        const std::size_t start = mask[rng.uniform_int(mask.size())];
        r = static_cast<long>(start) / w;
        c = static_cast<long>(start) % w;
        ++state.result.draws;
        state.visit(r, c);
    };
    restart();

    std::size_t rejected = 0;
    for (std::size_t attempt = 0; !state.done(); ++attempt) {
        if (attempt >= max_attempts) {
            state.result.complete = false;
            break;
        }
        const auto& d = kDirections[rng.uniform_int(kDirections.size())];
        bool ok = true;
        for (std::size_t t = 1; t <= step && ok; ++t) {
            ok = state.inside(r + d[0] * static_cast<long>(t), c + d[1] * static_cast<long>(t));
        }
        if (!ok) {
            if (++rejected >= opts.max_retries) {
                rejected = 0;
                restart();
            }
            continue;
        }
        rejected = 0;
        for (std::size_t t = 1; t <= step; ++t) {
            state.visit(r + d[0] * static_cast<long>(t), c + d[1] * static_cast<long>(t));
        }
        r += d[0] * static_cast<long>(step);
        c += d[1] * static_cast<long>(step);
    }
    return std::move(state.result);
}

WalkResult gen_dir_random_walk(const LabelMap& gt, Label k, std::size_t n_pix, SeededRng& rng,
                               const ScribbleOptions& opts)
{
    const std::vector<std::size_t> mask = class_pixels(gt, k);
    check_walk_inputs(mask, n_pix);
    WalkState state(gt, k, n_pix);
    const long w = static_cast<long>(gt.width());
    const std::size_t max_attempts = 1000 + opts.attempt_factor * n_pix;

    long r = 0, c = 0;
    int heading = 0;
    auto restart = [&] {
        const std::size_t start = mask[rng.uniform_int(mask.size())];
        r = static_cast<long>(start) / w;
        c = static_cast<long>(start) % w;
        heading = static_cast<int>(rng.uniform_int(kDirections.size()));
        ++state.result.draws;
        state.visit(r, c);
    };
    restart();

    for (std::size_t attempt = 0; !state.done(); ++attempt) {
        if (attempt >= max_attempts) {
            state.result.complete = false;
            break;
        }
        const int preferred = rng.bernoulli(opts.momentum) ? heading : static_cast<int>(rng.uniform_int(kDirections.size()));
        int chosen = -1;
        for (int turn : kRotationOrder) {
            const int dir = ((preferred + turn) % 8 + 8) % 8;
            const auto& d = kDirections[static_cast<std::size_t>(dir)];
            if (state.inside(r + d[0], c + d[1])) {
                chosen = dir;
                break;
            }
        }
        if (chosen < 0) {
            restart();
            continue;
        }
        heading = chosen;
        r += kDirections[static_cast<std::size_t>(chosen)][0];
        c += kDirections[static_cast<std::size_t>(chosen)][1];
        state.visit(r, c);
    }
    return std::move(state.result);
}

ScribbleResult gen_skeleton(const LabelMap& gt, std::size_t classes)
{
    ScribbleResult out{LabelMap(gt.height(), gt.width(), kUnlabeled), std::vector<std::size_t>(classes, 0), true};
    for (std::size_t k = 0; k < classes; ++k) {
        const BinaryMask mask = BinaryMask::of_class(gt, static_cast<Label>(k));
        if (mask.popcount() == 0) {
            continue;
        }
        const BinaryMask skeleton = skeletonize(mask);
        out.draws[k] = connected_components(skeleton, Connectivity::Eight).count();
        for (std::size_t i = 0; i < skeleton.pixels(); ++i) {
            if (skeleton[i]) {
                out.scribbles[i] = static_cast<Label>(k);
            }
        }
    }
    return out;
}

namespace {

void paint(LabelMap& out, const std::vector<std::size_t>& pixels, Label k)
{
    for (std::size_t i : pixels) {
        out[i] = k;
    }
}

WalkResult walk(const LabelMap& gt, Label k, ScribbleForm form, std::size_t n_pix, SeededRng& rng,
                const ScribbleOptions& opts)
{
    return form == ScribbleForm::RandomWalk ? gen_random_walk(gt, k, n_pix, opts.step, rng, opts)
                                            : gen_dir_random_walk(gt, k, n_pix, rng, opts);
}

}  // namespace

ScribbleResult generate_scribbles(const LabelMap& gt, std::size_t classes, ScribbleForm form,
                                  const ScribbleBudget& budget, SeededRng& rng, const ScribbleOptions& opts)
{
    if (budget.values.size() != classes) {
        throw Error(ErrorCode::InvalidArgument, "budget needs one value per class");
    }
    if (form == ScribbleForm::Skeleton) {
        ScribbleResult full = gen_skeleton(gt, classes);
        if (budget.mode == ScribbleBudget::Mode::Pixels) {
            return full;
        }
        // Keep the d_k largest skeleton strokes per class.
        ScribbleResult out{LabelMap(gt.height(), gt.width(), kUnlabeled), std::vector<std::size_t>(classes, 0), true};
        for (std::size_t k = 0; k < classes; ++k) {
            const BinaryMask strokes = BinaryMask::of_class(full.scribbles, static_cast<Label>(k));
            const Components cc = connected_components(strokes, Connectivity::Eight);
            std::vector<std::size_t> order(cc.count());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cc.sizes[a] > cc.sizes[b]; });
            order.resize(std::min(order.size(), budget.values[k]));
            for (std::size_t i = 0; i < strokes.pixels(); ++i) {
                if (cc.ids[i] >= 0 && std::find(order.begin(), order.end(), static_cast<std::size_t>(cc.ids[i])) != order.end()) {
                    out.scribbles[i] = static_cast<Label>(k);
                }
            }
            out.draws[k] = order.size();
        }
        return out;
    }

    if (form == ScribbleForm::Points) {
        ScribbleResult out{gen_points(gt, budget.values, rng), std::vector<std::size_t>(classes, 0), true};
        for (std::size_t k = 0; k < classes; ++k) {
            out.draws[k] = out.scribbles.count(static_cast<Label>(k));
        }
        return out;
    }

    ScribbleResult out{LabelMap(gt.height(), gt.width(), kUnlabeled), std::vector<std::size_t>(classes, 0), true};
    for (std::size_t k = 0; k < classes; ++k) {
        const Label label = static_cast<Label>(k);
        if (gt.count(label) == 0) {
            continue;
        }
        if (budget.values[k] == 0) {
            throw Error(ErrorCode::InvalidArgument, "budget must be at least 1 for class " + std::to_string(k));
        }
        if (budget.mode == ScribbleBudget::Mode::Pixels) {
            WalkResult w = walk(gt, label, form, budget.values[k], rng, opts);
            paint(out.scribbles, w.pixels, label);
            out.draws[k] = w.draws;
            out.complete = out.complete && w.complete;
        } else {
            for (std::size_t d = 0; d < budget.values[k]; ++d) {
                WalkResult w = walk(gt, label, form, opts.stroke_length, rng, opts);
                paint(out.scribbles, w.pixels, label);
                out.draws[k] += w.draws;
            }
        }
    }
    return out;
}

ScribbleStats compute_stats(const LabelMap& scribbles, const LabelMap& gt, std::size_t classes)
{
    require_same_shape(scribbles.shape(), gt.shape(), "compute_stats");
    ScribbleStats s;
    s.labeled.assign(classes, 0);
    s.total.assign(classes, 0);
    s.ratio.assign(classes, 0.0);
    s.frequency.assign(classes, 0.0);
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
        const Label truth = gt[i];
        if (truth >= classes) {
            throw Error(ErrorCode::ClassOutOfRange, "ground truth label " + std::to_string(truth));
        }
        ++s.total[truth];
        const Label mark = scribbles[i];
        if (mark == kUnlabeled) {
            ++s.unlabeled_total;
            continue;
        }
        if (mark != truth) {
            throw Error(ErrorCode::InconsistentScribble, "scribble " + std::to_string(mark) + " over class " +
                                                             std::to_string(truth) + " at pixel " + std::to_string(i));
        }
        ++s.labeled[mark];
        ++s.labeled_total;
    }
    for (std::size_t k = 0; k < classes; ++k) {
        if (s.total[k] > 0) {
            s.ratio[k] = static_cast<double>(s.labeled[k]) / static_cast<double>(s.total[k]);
        }
        if (s.labeled_total > 0) {
            s.frequency[k] = static_cast<double>(s.labeled[k]) / static_cast<double>(s.labeled_total);
        }
    }
    return s;
}

}  // namespace scribble
