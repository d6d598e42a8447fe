#include "scribble/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scribble {

void TrainConfig::validate() const
{
    if (epochs == 0 || batch_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "epochs and batch size must be positive");
    }
    if (!(learning_rate > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    }
    if (budget.values.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "budget needs one entry per class (at least 2)");
    }
    if (em.max_iterations == 0 || !(em.tolerance > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "EM needs a positive tolerance and iteration cap");
    }
    losses.validate();
    energy.validate();
    mix.validate();
    for (Label k : connected) {
        if (k == kBackground || k >= budget.values.size()) {
            throw Error(ErrorCode::ClassOutOfRange, "connected class " + std::to_string(k));
        }
    }
}

TrainConfig pce_only(TrainConfig cfg)
{
    cfg.losses.global = 0.0;
    cfg.losses.spatial = 0.0;
    cfg.losses.shape = 0.0;
    cfg.augment = Augment::None;
    return cfg;
}

TrainConfig pce_mix_global(TrainConfig cfg)
{
    cfg.losses.spatial = 0.0;
    cfg.losses.shape = 0.0;
    cfg.augment = Augment::Mix;
    return cfg;
}

std::vector<LabelMap> make_scribbles(const std::vector<Sample>& samples, const TrainConfig& cfg)
{
    const SeededRng root = SeededRng(cfg.seed).fork(0x5c81);
    std::vector<LabelMap> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        SeededRng rng = root.fork(i);
        out.push_back(
            generate_scribbles(samples[i].truth, cfg.budget.values.size(), cfg.form, cfg.budget, rng, cfg.scribble)
                .scribbles);
    }
    return out;
}

MetricReport evaluate_model(const PixelModel& model, const std::vector<Sample>& samples, std::size_t classes)
{
    std::vector<MetricReport> reports;
    reports.reserve(samples.size());
    for (const auto& s : samples) {
        reports.push_back(evaluate(predict(model, s.image).argmax(), s.truth, classes));
    }
    return average(reports);
}

namespace {

ClassSet connected_classes(const TrainConfig& cfg, std::size_t classes)
{
    if (!cfg.connected.empty()) {
        return ClassSet(classes, cfg.connected);
    }
    std::vector<Label> all;
    for (std::size_t k = 1; k < classes; ++k) {
        all.push_back(static_cast<Label>(k));
    }
    return ClassSet(classes, all);
}

double occlusion_side(const TrainConfig& cfg, Shape shape)
{
    if (cfg.occlusion_side >= 0.0) {
        return cfg.occlusion_side;
    }
    return static_cast<double>(default_occlusion_side(std::min(shape.height, shape.width)));
}

void add_through(const Features& features, const Field& logit_grad, PixelModel& grad, double scale)
{
    if (scale != 0.0) {
        accumulate_gradient(features, logit_grad, grad, scale);
    }
}

ClassSplit split_for(const ProbMap& pred, const AffinityWindow& window, const LabelMap& scribbles,
                     std::span<const double> pi, bool include_background)
{
    const std::size_t m = pred.classes();
    BinaryMask unlabeled(scribbles.height(), scribbles.width());
    for (std::size_t i = 0; i < scribbles.pixels(); ++i) {
        unlabeled.set(i, scribbles[i] == kUnlabeled);
    }
    ClassSplit split(m);
    for (std::size_t k = include_background ? 0 : 1; k < m; ++k) {
        split.sets[k] = rank_select(spatial_energy(pred, window, k), unlabeled, pi[k]);
        split.active[k] = true;
    }
    return split;
}

struct Adam {
    PixelModel m, v;
    std::size_t t = 0;

    explicit Adam(const PixelModel& like) : m(like.zeros_like()), v(like.zeros_like()) {}

    void step(PixelModel& model, const PixelModel& grad, double lr)
    {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < model.parameter_count(); ++i) {
            const double g = grad.parameter(i);
            m.parameter(i) = b1 * m.parameter(i) + (1.0 - b1) * g;
            v.parameter(i) = b2 * v.parameter(i) + (1.0 - b2) * g * g;
            model.parameter(i) -= lr * (m.parameter(i) / c1) / (std::sqrt(v.parameter(i) / c2) + eps);
        }
    }
};

// Everything the batch loop needs per training image, fixed for the run.
struct Prepared {
    const Image* image;
    const LabelMap* scribbles;
    Features features;
    SaliencyMap saliency;
    std::optional<AffinityWindow> window;
};

struct MixContext {
    const MixConfig* mix;
    double occlusion;
    std::size_t classes;
    SaliencyMode mode;
};

SaliencyMap saliency_of(const Prepared& p, const PixelModel& model, SaliencyMode mode)
{
    return mode == SaliencyMode::LossGradient ? loss_saliency(*p.image, model, *p.scribbles) : p.saliency;
}

// Mixed images, soft labels and (when `global` is set) the consistency targets.
void freeze_mix(FrozenItem& item, const Prepared& a, const Prepared& b, const PixelModel& model, const ProbMap& pa,
                const MixContext& ctx, bool global, SeededRng& rng)
{
    const SaliencyMap sa = saliency_of(a, model, ctx.mode);
    const SaliencyMap sb = saliency_of(b, model, ctx.mode);
    const MixPlan plan12 = plan_mix(*a.image, *b.image, sa, sb, *ctx.mix, ctx.occlusion, rng);
    const MixPlan plan21 = plan_mix(*b.image, *a.image, sb, sa, *ctx.mix, ctx.occlusion, rng);
    MixedPair m12 = apply_mix(*a.image, *a.scribbles, *b.image, *b.scribbles, ctx.classes, plan12);
    MixedPair m21 = apply_mix(*b.image, *b.scribbles, *a.image, *a.scribbles, ctx.classes, plan21);
    item.mixed = true;
    item.features12 = featurize(m12.image);
    item.features21 = featurize(m21.image);
    item.weights12 = std::move(m12.labels);
    item.weights21 = std::move(m21.labels);
    if (global) {
        const Field fa = pa.as_field();
        const Field fb = predict(model, b.features).as_field();
        item.target12 = mix_fields(fa, fb, plan12);
        item.target21 = mix_fields(fb, fa, plan21);
        if (plan12.occlusion) {
            item.target12 = mask_outside(item.target12, *plan12.occlusion);
        }
        if (plan21.occlusion) {
            item.target21 = mask_outside(item.target21, *plan21.occlusion);
        }
    }
}

bool has_mass(const Field& weights)
{
    return std::any_of(weights.data().begin(), weights.data().end(), [](double w) { return w > 0.0; });
}

}  // namespace

ItemLoss item_loss(const PixelModel& model, const FrozenItem& item, const EffectiveWeights& weights)
{
    ItemLoss out;
    out.grad_pce = model.zeros_like();
    out.grad_global = model.zeros_like();
    out.grad_spatial = model.zeros_like();
    out.grad_shape = model.zeros_like();

    const ProbMap pred = predict(model, item.features);
    std::optional<ProbMap> v12, v21;
    if (item.mixed) {
        v12 = predict(model, item.features12);
        v21 = predict(model, item.features21);
    }

    // PCE: mean over the unmixed image and whichever mixed images carry labels.
    struct Term {
        LossValue loss;
        const Features* features;
    };
    std::vector<Term> pce_terms;
    pce_terms.push_back({pce_loss(pred, *item.scribbles), &item.features});
    if (item.mixed) {
        if (has_mass(item.weights12)) {
            pce_terms.push_back({pce_loss(*v12, item.weights12), &item.features12});
        }
        if (has_mass(item.weights21)) {
            pce_terms.push_back({pce_loss(*v21, item.weights21), &item.features21});
        }
    }
    const double share = 1.0 / static_cast<double>(pce_terms.size());
    for (const auto& t : pce_terms) {
        out.pce += share * t.loss.value;
        add_through(*t.features, t.loss.gradient, out.grad_pce, share);
    }

    if (weights.global != 0.0 && item.mixed && !item.target12.data().empty()) {
        const ConsistencyLoss c = global_consistency_loss(item.target12, *v12, item.target21, *v21);
        out.global = c.value;
        add_through(item.features12, c.gradient12, out.grad_global, 1.0);
        add_through(item.features21, c.gradient21, out.grad_global, 1.0);
    }
    if (weights.spatial != 0.0 && item.split) {
        const LossValue s = spatial_prior_loss(pred, *item.split);
        out.spatial = s.value;
        add_through(item.features, s.gradient, out.grad_spatial, 1.0);
    }
    if (weights.shape != 0.0 && item.shape) {
        const LossValue s = shape_loss(pred, *item.shape);
        out.shape = s.value;
        add_through(item.features, s.gradient, out.grad_shape, 1.0);
    }

    out.total = weights.pce * out.pce + weights.global * out.global + weights.spatial * out.spatial +
                weights.shape * out.shape;
    out.grad_total = model.zeros_like();
    out.grad_total.add_scaled(out.grad_pce, weights.pce);
    if (weights.global != 0.0) {
        out.grad_total.add_scaled(out.grad_global, weights.global);
    }
    if (weights.spatial != 0.0) {
        out.grad_total.add_scaled(out.grad_spatial, weights.spatial);
    }
    if (weights.shape != 0.0) {
        out.grad_total.add_scaled(out.grad_shape, weights.shape);
    }
    return out;
}

TrainResult train(const std::vector<Sample>& train_set, const std::vector<LabelMap>& scribbles,
                  const std::vector<Sample>& test_set, const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    cfg.validate();
    if (train_set.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty training set");
    }
    if (scribbles.size() != train_set.size()) {
        throw Error(ErrorCode::ShapeMismatch, "one scribble map per training image required");
    }
    const std::size_t m = cfg.budget.values.size();
    const std::size_t channels = train_set.front().image.channels();
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        require_same_shape(train_set[i].image.shape(), scribbles[i].shape(), "train scribbles");
        if (train_set[i].image.channels() != channels) {
            throw Error(ErrorCode::ShapeMismatch, "training images differ in channel count");
        }
        for (Label k : scribbles[i].labels()) {
            if (k == kUnlabeled) {
                continue;
            }
            if (k >= m) {
                throw Error(ErrorCode::ClassOutOfRange, "scribble label " + std::to_string(k));
            }
            ++counts[k];
        }
    }
    const std::vector<double> pi0 = init_pi(counts);  // throws ClassUnobserved

    const bool augment = cfg.augment == Augment::Mix;
    const bool spatial_on = cfg.losses.spatial > 0.0;
    std::vector<Prepared> prepared;
    prepared.reserve(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        Prepared p{&train_set[i].image, &scribbles[i], featurize(train_set[i].image), {}, std::nullopt};
        if (augment && cfg.saliency == SaliencyMode::ImageGradient) {
            p.saliency = image_saliency(train_set[i].image);
        }
        if (spatial_on) {
            p.window.emplace(train_set[i].image, cfg.energy);
        }
        prepared.push_back(std::move(p));
    }
    const ClassSet shape_classes = connected_classes(cfg, m);
    const MixContext ctx{&cfg.mix, occlusion_side(cfg, train_set.front().image.shape()), m, cfg.saliency};

    TrainResult result;
    result.model = PixelModel::zeros(feature_dim(channels), m);
    PixelModel& model = result.model;
    Adam adam(model);
    SeededRng rng(cfg.seed);
    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            const EffectiveWeights eff = effective_weights(cfg.losses, epoch);
            EpochLog log;
            log.epoch = epoch;

            std::vector<std::optional<ClassSplit>> splits(n);
            if (eff.spatial != 0.0) {
                std::vector<ProbMap> preds;
                std::vector<double> rows;
                for (std::size_t i = 0; i < n; ++i) {
                    preds.push_back(predict(model, prepared[i].features));
                    for (std::size_t px = 0; px < scribbles[i].pixels(); ++px) {
                        if (scribbles[i][px] == kUnlabeled) {
                            auto p = preds.back().pixel(px);
                            rows.insert(rows.end(), p.begin(), p.end());
                        }
                    }
                }
                const PosteriorBatch batch(m, std::move(rows), pi0);
                log.pi = estimate_pi(batch, pi0, cfg.em).pi;
                for (std::size_t i = 0; i < n; ++i) {
                    splits[i] = split_for(preds[i], *prepared[i].window, scribbles[i], log.pi, cfg.spatial_background);
                }
            }

            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order);
            std::size_t items = 0;
            for (std::size_t start = 0; start < n; start += cfg.batch_size) {
                const std::size_t stop = std::min(n, start + cfg.batch_size);
                PixelModel grad = model.zeros_like();
                for (std::size_t b = start; b < stop; ++b) {
                    const std::size_t i = order[b];
                    FrozenItem item;
                    item.features = prepared[i].features;
                    item.scribbles = &scribbles[i];
                    const ProbMap pred = predict(model, item.features);
                    if (augment) {
                        std::size_t j = i;
                        if (n > 1) {
                            j = rng.uniform_int(n - 1);
                            j += j >= i ? 1 : 0;
                        }
                        freeze_mix(item, prepared[i], prepared[j], model, pred, ctx, eff.global != 0.0, rng);
                    }
                    item.split = splits[i];
                    if (eff.shape != 0.0) {
                        item.shape = shape_target(pred, shape_classes);
                    }
                    const ItemLoss loss = item_loss(model, item, eff);
                    grad.add_scaled(loss.grad_total, 1.0 / static_cast<double>(stop - start));
                    log.pce += loss.pce;
                    log.global += loss.global;
                    log.spatial += loss.spatial;
                    log.shape += loss.shape;
                    log.total += loss.total;
                    ++items;
                }
                adam.step(model, grad, cfg.learning_rate);
                if (!model.finite() || !std::isfinite(log.total)) {
                    throw Error(ErrorCode::TrainingDiverged, "epoch " + std::to_string(epoch));
                }
            }
            const double inv = 1.0 / static_cast<double>(items);
            log.pce *= inv;
            log.global *= inv;
            log.spatial *= inv;
            log.shape *= inv;
            log.total *= inv;
            if (!test_set.empty()) {
                log.mean_dice = evaluate_model(model, test_set, m).mean_dice;
            }
            if (on_epoch) {
                on_epoch(log);
            }
            result.log.push_back(std::move(log));
        } catch (const Error& e) {
            // Exploding weights surface first as non-finite logits.
            if (e.code() != ErrorCode::NonFiniteLogits) {
                throw;
            }
            throw Error(ErrorCode::TrainingDiverged, "epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }
    if (!test_set.empty()) {
        result.report = evaluate_model(model, test_set, m);
    }
    return result;
}

double relative_error(double analytic, double numeric)
{
    return std::abs(analytic - numeric) / std::max({1e-6, std::abs(analytic), std::abs(numeric)});
}

GradientAudit finite_diff_audit(const PixelModel& model, const AuditInput& input, const TrainConfig& cfg, double step)
{
    cfg.validate();
    const std::size_t m = model.classes;
    EffectiveWeights w;
    w.global = cfg.losses.global;
    w.spatial = cfg.losses.spatial;
    w.shape = cfg.losses.shape;

    Prepared a{&input.image, &input.scribbles, featurize(input.image), image_saliency(input.image), std::nullopt};
    Prepared b{&input.partner, &input.partner_scribbles, featurize(input.partner), image_saliency(input.partner),
               std::nullopt};
    FrozenItem item;
    item.features = a.features;
    item.scribbles = &input.scribbles;
    const ProbMap pred = predict(model, item.features);
    SeededRng rng(cfg.seed);
    if (cfg.augment == Augment::Mix) {
        const MixContext ctx{&cfg.mix, occlusion_side(cfg, input.image.shape()), m, cfg.saliency};
        freeze_mix(item, a, b, model, pred, ctx, w.global != 0.0, rng);
    }
    if (w.spatial != 0.0) {
        if (input.pi.size() != m) {
            throw Error(ErrorCode::ShapeMismatch, "audit pi needs one entry per class");
        }
        item.split = split_for(pred, AffinityWindow(input.image, cfg.energy), input.scribbles, input.pi,
                               cfg.spatial_background);
    }
    if (w.shape != 0.0) {
        item.shape = shape_target(pred, connected_classes(cfg, m));
    }

    const ItemLoss analytic = item_loss(model, item, w);
    GradientAudit audit;
    PixelModel probe = model;
    for (std::size_t p = 0; p < model.parameter_count(); ++p) {
        const double origin = probe.parameter(p);
        probe.parameter(p) = origin + step;
        const ItemLoss plus = item_loss(probe, item, w);
        probe.parameter(p) = origin - step;
        const ItemLoss minus = item_loss(probe, item, w);
        probe.parameter(p) = origin;
        auto check = [&](double& worst, double up, double down, const PixelModel& grad) {
            worst = std::max(worst, relative_error(grad.parameter(p), (up - down) / (2.0 * step)));
        };
        check(audit.pce, plus.pce, minus.pce, analytic.grad_pce);
        check(audit.global, plus.global, minus.global, analytic.grad_global);
        check(audit.spatial, plus.spatial, minus.spatial, analytic.grad_spatial);
        check(audit.shape, plus.shape, minus.shape, analytic.grad_shape);
        check(audit.total, plus.total, minus.total, analytic.grad_total);
    }
    return audit;
}

}  // namespace scribble
