#include "scribble/commands.hpp"

#include "scribble/io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

namespace scribble {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Error schema_error(const std::string& what)
{
    return Error(ErrorCode::Schema, what);
}

// Reads named members of a JSON object and remembers which ones were used so
// that leftovers can be reported as unknown keys.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) {
            throw schema_error(where_ + ": expected an object");
        }
    }

    bool has(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const std::string& key)
    {
        if (!has(key)) {
            throw schema_error(where_ + ": missing \"" + key + "\"");
        }
        return j_.at(key);
    }

    template <typename T>
    void read(const std::string& key, T& out)
    {
        if (has(key)) {
            out = convert<T>(j_.at(key), where_ + "." + key);
        }
    }

    template <typename T>
    T require(const std::string& key)
    {
        return convert<T>(at(key), where_ + "." + key);
    }

    std::string path(const std::string& key) const { return where_ + "." + key; }

    void finish() const
    {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) {
                throw schema_error(where_ + ": unknown key \"" + item.key() + "\"");
            }
        }
    }

    template <typename T>
    static T convert(const json& v, const std::string& where)
    {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) {
                throw schema_error(where + ": expected a boolean");
            }
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) {
                throw schema_error(where + ": expected a string");
            }
            return v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) {
                throw schema_error(where + ": expected a number");
            }
            return v.get<T>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
                throw schema_error(where + ": expected a non-negative integer");
            }
            return static_cast<T>(v.get<std::uint64_t>());
        } else {
            if (!v.is_array()) {
                throw schema_error(where + ": expected an array");
            }
            T out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
            }
            return out;
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

ScribbleForm form_from(const std::string& name, const std::string& where)
{
    const auto form = parse_form(name);
    if (!form) {
        throw schema_error(where + ": unknown scribble form \"" + name + "\"");
    }
    return *form;
}

// {"mode": "pixels" | "draws", "values": n | [n_0, ..., n_{m-1}]}
ScribbleBudget parse_budget(const json& j, std::size_t classes, const std::string& where)
{
    Fields f(j, where);
    ScribbleBudget budget;
    std::string mode = "pixels";
    f.read("mode", mode);
    if (mode == "pixels") {
        budget.mode = ScribbleBudget::Mode::Pixels;
    } else if (mode == "draws") {
        budget.mode = ScribbleBudget::Mode::Draws;
    } else {
        throw schema_error(where + ".mode: expected \"pixels\" or \"draws\"");
    }
    const json& values = f.at("values");
    if (values.is_array()) {
        budget.values = Fields::convert<std::vector<std::size_t>>(values, f.path("values"));
        if (budget.values.size() != classes) {
            throw schema_error(f.path("values") + ": expected one entry per class");
        }
    } else {
        budget.values.assign(classes, Fields::convert<std::size_t>(values, f.path("values")));
    }
    f.finish();
    return budget;
}

json budget_to_json(const ScribbleBudget& budget)
{
    return {{"mode", budget.mode == ScribbleBudget::Mode::Pixels ? "pixels" : "draws"}, {"values", budget.values}};
}

ScribbleOptions parse_scribble_options(const json& j, const std::string& where)
{
    Fields f(j, where);
    ScribbleOptions o;
    f.read("step", o.step);
    f.read("momentum", o.momentum);
    f.read("stroke_length", o.stroke_length);
    f.read("max_retries", o.max_retries);
    f.read("attempt_factor", o.attempt_factor);
    f.finish();
    return o;
}

json scribble_options_to_json(const ScribbleOptions& o)
{
    return {{"step", o.step},
            {"momentum", o.momentum},
            {"stroke_length", o.stroke_length},
            {"max_retries", o.max_retries},
            {"attempt_factor", o.attempt_factor}};
}

EmConfig parse_em(const json& j, const std::string& where)
{
    Fields f(j, where);
    EmConfig em;
    f.read("tolerance", em.tolerance);
    f.read("max_iterations", em.max_iterations);
    f.finish();
    return em;
}

// JSON has no infinity; unbounded distances are written as null.
json finite_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

json report_to_json(const MetricReport& r)
{
    json hd = json::array();
    for (double h : r.hausdorff) {
        hd.push_back(finite_or_null(h));
    }
    return {{"dice", r.dice},
            {"hausdorff", hd},
            {"mean_dice", r.mean_dice},
            {"mean_hausdorff", finite_or_null(r.mean_hausdorff)}};
}

std::string csv_number(double v)
{
    return format_double(v);
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void DatasetSpec::validate() const
{
    if (train == 0 || test == 0) {
        throw Error(ErrorCode::InvalidArgument, "dataset needs at least one train and one test image");
    }
    SynthSpec s = synth;
    s.count = train + test;
    s.validate();
}

DataSplit make_split(const DatasetSpec& spec, std::uint64_t seed)
{
    spec.validate();
    SynthSpec s = spec.synth;
    s.count = spec.train + spec.test;
    s.seed = seed;
    std::vector<Sample> all = synth_dataset(s);
    DataSplit split;
    split.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + spec.train));
    split.test.assign(std::make_move_iterator(all.begin() + spec.train), std::make_move_iterator(all.end()));
    return split;
}

DatasetSpec parse_dataset(const json& j)
{
    Fields f(j, "dataset");
    DatasetSpec d;
    SynthSpec& s = d.synth;
    f.read("side", s.side);
    f.read("classes", s.classes);
    f.read("noise", s.noise);
    f.read("bias", s.bias);
    f.read("clutter", s.clutter);
    f.read("jitter", s.jitter);
    f.read("intensity", s.intensity);
    f.read("disk_min", s.disk_min);
    f.read("disk_max", s.disk_max);
    f.read("ring_min", s.ring_min);
    f.read("ring_max", s.ring_max);
    f.read("blob_min", s.blob_min);
    f.read("blob_max", s.blob_max);
    f.read("train", d.train);
    f.read("test", d.test);
    f.finish();
    d.validate();
    return d;
}

json dataset_to_json(const DatasetSpec& d)
{
    const SynthSpec& s = d.synth;
    return {{"side", s.side},         {"classes", s.classes},   {"noise", s.noise},
            {"bias", s.bias},         {"clutter", s.clutter},   {"jitter", s.jitter}, {"intensity", s.intensity},
            {"disk_min", s.disk_min}, {"disk_max", s.disk_max}, {"ring_min", s.ring_min},
            {"ring_max", s.ring_max}, {"blob_min", s.blob_min}, {"blob_max", s.blob_max},
            {"train", d.train},       {"test", d.test}};
}

TrainConfig parse_train_config(const json& j, std::size_t classes)
{
    Fields f(j, "config");
    TrainConfig cfg;
    cfg.budget = ScribbleBudget::pixels(classes, cfg.budget.values.empty() ? 40 : cfg.budget.values.front());
    f.read("epochs", cfg.epochs);
    f.read("learning_rate", cfg.learning_rate);
    f.read("batch_size", cfg.batch_size);
    if (f.has("augment")) {
        const auto a = f.require<std::string>("augment");
        if (a == "mix") {
            cfg.augment = Augment::Mix;
        } else if (a == "none") {
            cfg.augment = Augment::None;
        } else {
            throw schema_error("config.augment: expected \"mix\" or \"none\"");
        }
    }
    f.read("occlusion_side", cfg.occlusion_side);
    if (f.has("saliency")) {
        const auto s = f.require<std::string>("saliency");
        if (s == "image") {
            cfg.saliency = SaliencyMode::ImageGradient;
        } else if (s == "loss") {
            cfg.saliency = SaliencyMode::LossGradient;
        } else {
            throw schema_error("config.saliency: expected \"image\" or \"loss\"");
        }
    }
    f.read("spatial_background", cfg.spatial_background);
    if (f.has("connected")) {
        for (std::size_t k : f.require<std::vector<std::size_t>>("connected")) {
            if (k == 0 || k >= classes) {
                throw schema_error("config.connected: class " + std::to_string(k) + " out of range");
            }
            cfg.connected.push_back(static_cast<Label>(k));
        }
    }
    if (f.has("form")) {
        cfg.form = form_from(f.require<std::string>("form"), "config.form");
    }
    if (f.has("budget")) {
        cfg.budget = parse_budget(f.at("budget"), classes, "config.budget");
    }
    if (f.has("scribble")) {
        cfg.scribble = parse_scribble_options(f.at("scribble"), "config.scribble");
    }
    if (f.has("losses")) {
        Fields l(f.at("losses"), "config.losses");
        l.read("global", cfg.losses.global);
        l.read("spatial", cfg.losses.spatial);
        l.read("shape", cfg.losses.shape);
        l.read("warmup_epochs", cfg.losses.warmup_epochs);
        l.read("gate_shape", cfg.losses.gate_shape);
        l.finish();
    }
    if (f.has("energy")) {
        Fields e(f.at("energy"), "config.energy");
        e.read("sigma_position", cfg.energy.sigma_position);
        e.read("sigma_intensity", cfg.energy.sigma_intensity);
        e.read("radius", cfg.energy.radius);
        e.read("include_self", cfg.energy.include_self);
        e.finish();
    }
    if (f.has("mix")) {
        Fields m(f.at("mix"), "config.mix");
        m.read("grid", cfg.mix.grid);
        m.read("beta_levels", cfg.mix.beta_levels);
        m.read("label_smoothness", cfg.mix.label_smoothness);
        m.read("image_smoothness", cfg.mix.image_smoothness);
        m.read("prior_weight", cfg.mix.prior_weight);
        m.read("transport_weight", cfg.mix.transport_weight);
        m.read("prior_p", cfg.mix.prior_p);
        m.read("sample_prior", cfg.mix.sample_prior);
        m.finish();
    }
    if (f.has("em")) {
        cfg.em = parse_em(f.at("em"), "config.em");
    }
    f.finish();
    cfg.validate();
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg)
{
    json connected = json::array();
    for (Label k : cfg.connected) {
        connected.push_back(k);
    }
    return {{"epochs", cfg.epochs},
            {"learning_rate", cfg.learning_rate},
            {"batch_size", cfg.batch_size},
            {"augment", cfg.augment == Augment::Mix ? "mix" : "none"},
            {"occlusion_side", cfg.occlusion_side},
            {"saliency", cfg.saliency == SaliencyMode::ImageGradient ? "image" : "loss"},
            {"spatial_background", cfg.spatial_background},
            {"connected", connected},
            {"form", std::string(form_name(cfg.form))},
            {"budget", budget_to_json(cfg.budget)},
            {"scribble", scribble_options_to_json(cfg.scribble)},
            {"losses",
             {{"global", cfg.losses.global},
              {"spatial", cfg.losses.spatial},
              {"shape", cfg.losses.shape},
              {"warmup_epochs", cfg.losses.warmup_epochs},
              {"gate_shape", cfg.losses.gate_shape}}},
            {"energy",
             {{"sigma_position", cfg.energy.sigma_position},
              {"sigma_intensity", cfg.energy.sigma_intensity},
              {"radius", cfg.energy.radius},
              {"include_self", cfg.energy.include_self}}},
            {"mix",
             {{"grid", cfg.mix.grid},
              {"beta_levels", cfg.mix.beta_levels},
              {"label_smoothness", cfg.mix.label_smoothness},
              {"image_smoothness", cfg.mix.image_smoothness},
              {"prior_weight", cfg.mix.prior_weight},
              {"transport_weight", cfg.mix.transport_weight},
              {"prior_p", cfg.mix.prior_p},
              {"sample_prior", cfg.mix.sample_prior}}},
            {"em", {{"tolerance", cfg.em.tolerance}, {"max_iterations", cfg.em.max_iterations}}}};
}

// ---------------------------------------------------------------------------
// Experiments

std::string_view arm_name(Arm arm)
{
    switch (arm) {
    case Arm::PceOnly: return "pce";
    case Arm::PceMixGlobal: return "pce_mix_global";
    case Arm::Full: return "full";
    }
    return "?";
}

std::optional<Arm> parse_arm(std::string_view name)
{
    for (Arm a : {Arm::PceOnly, Arm::PceMixGlobal, Arm::Full}) {
        if (arm_name(a) == name) {
            return a;
        }
    }
    return std::nullopt;
}

TrainConfig arm_config(const TrainConfig& full, Arm arm)
{
    switch (arm) {
    case Arm::PceOnly: return pce_only(full);
    case Arm::PceMixGlobal: return pce_mix_global(full);
    case Arm::Full: return full;
    }
    return full;
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job)
{
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            job(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex lock;
    std::size_t failed_at = count;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    // Report the lowest failing job so the error is independent of timing.
                    std::lock_guard<std::mutex> g(lock);
                    if (i < failed_at) {
                        failed_at = i;
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

AblationResult run_ablation(const AblationSpec& spec)
{
    if (spec.arms.empty() || spec.seeds == 0) {
        throw Error(ErrorCode::InvalidArgument, "ablation needs at least one arm and one seed");
    }
    spec.dataset.validate();
    spec.config.validate();
    AblationResult result;
    result.cells.resize(spec.arms.size() * spec.seeds);
    parallel_for(result.cells.size(), spec.workers, [&](std::size_t idx) {
        const Arm arm = spec.arms[idx / spec.seeds];
        const std::uint64_t seed = spec.seed + idx % spec.seeds;
        const DataSplit data = make_split(spec.dataset, seed);
        TrainConfig cfg = arm_config(spec.config, arm);
        cfg.seed = seed;
        const auto scribbles = make_scribbles(data.train, cfg);
        const TrainResult r = train(data.train, scribbles, data.test, cfg);
        result.cells[idx] = {arm, seed, r.report};
    });
    for (std::size_t a = 0; a < spec.arms.size(); ++a) {
        double sum = 0.0;
        for (std::size_t s = 0; s < spec.seeds; ++s) {
            sum += result.cells[a * spec.seeds + s].report.mean_dice;
        }
        result.mean_dice.push_back(sum / static_cast<double>(spec.seeds));
    }
    return result;
}

double StudyResult::mean(std::size_t form, std::size_t budget) const
{
    return mean_dice.at(form * budgets + budget);
}

StudyResult run_study(const StudySpec& spec)
{
    if (spec.forms.empty() || spec.budgets.empty() || spec.seeds == 0) {
        throw Error(ErrorCode::InvalidArgument, "study needs forms, budgets and seeds");
    }
    spec.dataset.validate();
    spec.config.validate();
    const std::size_t classes = spec.dataset.synth.classes;
    const std::size_t nb = spec.budgets.size();
    StudyResult result;
    result.cells.resize(spec.forms.size() * nb * spec.seeds);
    parallel_for(result.cells.size(), spec.workers, [&](std::size_t idx) {
        const std::size_t f = idx / (nb * spec.seeds);
        const std::size_t b = idx / spec.seeds % nb;
        const std::uint64_t seed = spec.seed + idx % spec.seeds;
        const DataSplit data = make_split(spec.dataset, seed);
        TrainConfig cfg = pce_only(spec.config);
        cfg.form = spec.forms[f];
        cfg.budget = ScribbleBudget::pixels(classes, spec.budgets[b]);
        cfg.seed = seed;
        const auto scribbles = make_scribbles(data.train, cfg);
        const TrainResult r = train(data.train, scribbles, data.test, cfg);
        result.cells[idx] = {spec.forms[f], spec.budgets[b], seed, r.report.mean_dice};
    });
    result.budgets = nb;
    for (std::size_t f = 0; f < spec.forms.size(); ++f) {
        for (std::size_t b = 0; b < nb; ++b) {
            double sum = 0.0;
            for (std::size_t s = 0; s < spec.seeds; ++s) {
                sum += result.cells[(f * nb + b) * spec.seeds + s].mean_dice;
            }
            result.mean_dice.push_back(sum / static_cast<double>(spec.seeds));
        }
    }
    return result;
}

std::string study_svg(const StudySpec& spec, const StudyResult& result)
{
    constexpr double width = 520, height = 340, left = 60, right = 140, top = 30, bottom = 50;
    const std::size_t nb = spec.budgets.size();
    double lo = 1.0, hi = 0.0;
    for (double v : result.mean_dice) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    lo = std::floor(lo * 20.0) / 20.0;
    hi = std::ceil(hi * 20.0) / 20.0;
    if (hi - lo < 0.05) {
        hi = lo + 0.05;
    }
    const double pw = width - left - right, ph = height - top - bottom;
    auto x_at = [&](std::size_t b) { return left + (nb == 1 ? pw / 2.0 : pw * static_cast<double>(b) / static_cast<double>(nb - 1)); };
    auto y_at = [&](double v) { return top + ph * (hi - v) / (hi - lo); };
    static const char* colors[] = {"#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#66456f", "#555555"};

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n";
    for (double v = lo; v <= hi + 1e-9; v += 0.05) {
        svg << "<text x=\"" << left - 8 << "\" y=\"" << fixed(y_at(v) + 4, 2) << "\" text-anchor=\"end\">" << fixed(v, 2)
            << "</text>\n";
    }
    for (std::size_t b = 0; b < nb; ++b) {
        svg << "<text x=\"" << fixed(x_at(b), 2) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
            << spec.budgets[b] << "</text>\n";
    }
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\">labeled pixels per class</text>\n"
        << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << top + ph / 2 << ")\">mean Dice</text>\n";
    for (std::size_t f = 0; f < spec.forms.size(); ++f) {
        const char* color = colors[f % std::size(colors)];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t b = 0; b < nb; ++b) {
            svg << (b ? " " : "") << fixed(x_at(b), 2) << "," << fixed(y_at(result.mean(f, b)), 2);
        }
        svg << "\"/>\n";
        for (std::size_t b = 0; b < nb; ++b) {
            svg << "<circle cx=\"" << fixed(x_at(b), 2) << "\" cy=\"" << fixed(y_at(result.mean(f, b)), 2)
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        const double ly = top + 10 + 18.0 * static_cast<double>(f);
        svg << "<line x1=\"" << left + pw + 16 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 36 << "\" y2=\"" << ly
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << form_name(spec.forms[f])
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

int exit_code(ErrorCode code)
{
    switch (code) {
    case ErrorCode::Schema:
    case ErrorCode::InvalidArgument: return 1;
    case ErrorCode::Io: return 2;
    case ErrorCode::TrainingDiverged: return 3;
    case ErrorCode::ClassUnobserved:
    case ErrorCode::DegeneratePosterior: return 4;
    default: return 5;
    }
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct Invocation {
    fs::path manifest;
    std::optional<std::uint64_t> seed;  // --seed
    std::string out;                    // --out
};

struct Context {
    json manifest;
    fs::path base;  // directory of the manifest, for relative paths
    fs::path out;
    std::uint64_t seed = 0;
};

std::optional<std::uint64_t> env_seed()
{
    const char* v = std::getenv("SCRIBBLELAB_SEED");
    if (v == nullptr || *v == '\0') {
        return std::nullopt;
    }
    std::uint64_t seed = 0;
    const char* end = v + std::char_traits<char>::length(v);
    const auto [ptr, ec] = std::from_chars(v, end, seed);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::InvalidArgument, "SCRIBBLELAB_SEED is not an unsigned integer");
    }
    return seed;
}

// Loads the manifest, checks kind and version, and settles seed and output
// directory. Keys consumed here are marked on `f`.
Context open_manifest(const Invocation& inv, const std::string& kind, Fields*& fields, std::optional<Fields>& storage)
{
    Context ctx;
    ctx.manifest = read_json(inv.manifest);
    check_schema(ctx.manifest, kind);
    ctx.base = inv.manifest.parent_path();
    storage.emplace(ctx.manifest, "manifest");
    fields = &*storage;
    fields->has("schema_version");
    fields->has("kind");
    std::uint64_t seed = 0;
    fields->read("seed", seed);
    if (const auto e = env_seed()) {
        seed = *e;
    }
    if (inv.seed) {
        seed = *inv.seed;
    }
    ctx.seed = seed;
    std::string out;
    fields->read("out", out);
    if (!inv.out.empty()) {
        ctx.out = inv.out;
    } else if (!out.empty()) {
        ctx.out = resolve(ctx.base, out);
    } else {
        throw Error(ErrorCode::InvalidArgument, "no output directory: pass --out or set \"out\" in the manifest");
    }
    return ctx;
}

json header(const std::string& kind)
{
    return {{"schema_version", kSchemaVersion}, {"kind", kind}};
}

DatasetSpec dataset_of(Fields& f)
{
    return f.has("dataset") ? parse_dataset(f.at("dataset")) : DatasetSpec{};
}

TrainConfig config_of(Fields& f, std::size_t classes)
{
    if (f.has("config")) {
        return parse_train_config(f.at("config"), classes);
    }
    TrainConfig cfg;
    cfg.budget = ScribbleBudget::pixels(classes, cfg.budget.values.front());
    return cfg;
}

int cmd_synth(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "synth", f, storage);
    const DatasetSpec spec = dataset_of(*f);
    f->finish();
    const DataSplit data = make_split(spec, ctx.seed);
    json index = header("dataset");
    index["classes"] = spec.synth.classes;
    index["seed"] = ctx.seed;
    json samples = json::array();
    auto emit = [&](const Sample& s, std::size_t i, const char* split) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%03zu", i);
        write_image(ctx.out / (std::string(stem) + ".pgm"), s.image);
        write_label_pgm(ctx.out / (std::string(stem) + ".truth.pgm"), s.truth);
        samples.push_back({{"image", std::string(stem) + ".pgm"},
                           {"truth", std::string(stem) + ".truth.pgm"},
                           {"split", split}});
    };
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        emit(data.train[i], i, "train");
    }
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        emit(data.test[i], data.train.size() + i, "test");
    }
    index["samples"] = samples;
    write_json(ctx.out / "dataset.json", index);
    return 0;
}

int cmd_scribble(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "scribble", f, storage);
    const auto classes = f->require<std::size_t>("classes");
    if (classes < 2 || classes > 254) {
        throw schema_error("manifest.classes: expected 2..254");
    }
    const auto truths = f->require<std::vector<std::string>>("truth");
    const ScribbleForm form = form_from(f->require<std::string>("form"), "manifest.form");
    ScribbleBudget budget = ScribbleBudget::pixels(classes, 40);
    if (f->has("budget")) {
        budget = parse_budget(f->at("budget"), classes, "manifest.budget");
    }
    ScribbleOptions opts;
    if (f->has("options")) {
        opts = parse_scribble_options(f->at("options"), "manifest.options");
    }
    f->finish();

    const SeededRng root(ctx.seed);
    json report = header("scribble-stats");
    report["form"] = std::string(form_name(form));
    report["seed"] = ctx.seed;
    json files = json::array();
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const fs::path in = resolve(ctx.base, truths[i]);
        const LabelMap gt = read_label_pgm(in);
        for (Label v : gt.labels()) {
            if (v >= classes) {
                throw Error(ErrorCode::ClassOutOfRange, in.string() + ": label " + std::to_string(v));
            }
        }
        SeededRng rng = root.fork(i);
        const ScribbleResult r = generate_scribbles(gt, classes, form, budget, rng, opts);
        const std::string name = in.stem().string() + ".scribble.pgm";
        write_label_pgm(ctx.out / name, r.scribbles);
        const ScribbleStats st = compute_stats(r.scribbles, gt, classes);
        files.push_back({{"truth", truths[i]},
                         {"scribbles", name},
                         {"labeled", st.labeled},
                         {"total", st.total},
                         {"ratio", st.ratio},
                         {"frequency", st.frequency},
                         {"draws", r.draws},
                         {"complete", r.complete}});
    }
    report["files"] = files;
    write_json(ctx.out / "scribble_stats.json", report);
    return 0;
}

std::string epoch_csv(const std::vector<EpochLog>& log, std::size_t classes)
{
    std::ostringstream csv;
    csv << "epoch,pce,global,spatial,shape,total,mean_dice";
    for (std::size_t k = 0; k < classes; ++k) {
        csv << ",pi_" << k;
    }
    csv << "\n";
    for (const EpochLog& e : log) {
        csv << e.epoch << "," << csv_number(e.pce) << "," << csv_number(e.global) << "," << csv_number(e.spatial) << ","
            << csv_number(e.shape) << "," << csv_number(e.total) << "," << csv_number(e.mean_dice);
        for (std::size_t k = 0; k < classes; ++k) {
            csv << ",";
            if (k < e.pi.size()) {
                csv << csv_number(e.pi[k]);
            }
        }
        csv << "\n";
    }
    return csv.str();
}

int cmd_train(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "train", f, storage);
    const DatasetSpec spec = dataset_of(*f);
    TrainConfig cfg = config_of(*f, spec.synth.classes);
    f->finish();
    cfg.seed = ctx.seed;
    const DataSplit data = make_split(spec, ctx.seed);
    const auto scribbles = make_scribbles(data.train, cfg);
    const TrainResult r = train(data.train, scribbles, data.test, cfg);

    write_json(ctx.out / "model.json", model_to_json(r.model));
    write_text(ctx.out / "epochs.csv", epoch_csv(r.log, spec.synth.classes));
    json report = header("report");
    report["seed"] = ctx.seed;
    report["config"] = train_config_to_json(cfg);
    report["dataset"] = dataset_to_json(spec);
    report["test"] = report_to_json(r.report);
    write_json(ctx.out / "report.json", report);
    return 0;
}

int cmd_ablation(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "ablation", f, storage);
    AblationSpec spec;
    spec.dataset = dataset_of(*f);
    spec.config = config_of(*f, spec.dataset.synth.classes);
    if (f->has("arms")) {
        spec.arms.clear();
        for (const auto& name : f->require<std::vector<std::string>>("arms")) {
            const auto arm = parse_arm(name);
            if (!arm) {
                throw schema_error("manifest.arms: unknown arm \"" + name + "\"");
            }
            spec.arms.push_back(*arm);
        }
    }
    f->read("seeds", spec.seeds);
    f->read("workers", spec.workers);
    f->finish();
    spec.seed = ctx.seed;
    const AblationResult r = run_ablation(spec);

    const std::size_t m = spec.dataset.synth.classes;
    std::ostringstream csv;
    csv << "arm,seed,mean_dice,mean_hausdorff";
    for (std::size_t k = 1; k < m; ++k) {
        csv << ",dice_" << k;
    }
    csv << "\n";
    for (const AblationCell& c : r.cells) {
        csv << arm_name(c.arm) << "," << c.seed << "," << csv_number(c.report.mean_dice) << ","
            << csv_number(c.report.mean_hausdorff);
        for (std::size_t k = 1; k < m; ++k) {
            csv << "," << csv_number(c.report.dice[k]);
        }
        csv << "\n";
    }
    write_text(ctx.out / "ablation.csv", csv.str());

    json summary = header("ablation");
    summary["seed"] = ctx.seed;
    summary["seeds"] = spec.seeds;
    summary["config"] = train_config_to_json(spec.config);
    summary["dataset"] = dataset_to_json(spec.dataset);
    json arms = json::array();
    for (std::size_t a = 0; a < spec.arms.size(); ++a) {
        arms.push_back({{"arm", std::string(arm_name(spec.arms[a]))}, {"mean_dice", r.mean_dice[a]}});
    }
    summary["arms"] = arms;
    write_json(ctx.out / "ablation.json", summary);
    return 0;
}

int cmd_study(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "study", f, storage);
    StudySpec spec;
    spec.dataset = dataset_of(*f);
    spec.config = config_of(*f, spec.dataset.synth.classes);
    if (f->has("forms")) {
        spec.forms.clear();
        for (const auto& name : f->require<std::vector<std::string>>("forms")) {
            spec.forms.push_back(form_from(name, "manifest.forms"));
        }
    }
    f->read("budgets", spec.budgets);
    f->read("seeds", spec.seeds);
    f->read("workers", spec.workers);
    f->finish();
    spec.seed = ctx.seed;
    const StudyResult r = run_study(spec);

    std::ostringstream cells;
    cells << "form,budget,seed,mean_dice\n";
    for (const StudyCell& c : r.cells) {
        cells << form_name(c.form) << "," << c.budget << "," << c.seed << "," << csv_number(c.mean_dice) << "\n";
    }
    write_text(ctx.out / "study_cells.csv", cells.str());

    std::ostringstream means;
    means << "form,budget,mean_dice\n";
    json table = json::array();
    json trends = json::array();
    for (std::size_t fi = 0; fi < spec.forms.size(); ++fi) {
        bool monotone = true;
        json row = json::array();
        for (std::size_t b = 0; b < spec.budgets.size(); ++b) {
            means << form_name(spec.forms[fi]) << "," << spec.budgets[b] << "," << csv_number(r.mean(fi, b)) << "\n";
            row.push_back(r.mean(fi, b));
            if (b > 0 && r.mean(fi, b) < r.mean(fi, b - 1) - 0.01) {
                monotone = false;
            }
        }
        table.push_back({{"form", std::string(form_name(spec.forms[fi]))}, {"mean_dice", row}});
        trends.push_back({{"form", std::string(form_name(spec.forms[fi]))}, {"non_decreasing", monotone}});
    }
    write_text(ctx.out / "study.csv", means.str());
    write_text(ctx.out / "study.svg", study_svg(spec, r));

    // Forms are expected in decreasing order of quality; each neighbour pair
    // may be inverted by at most 0.01 at every budget.
    json ordering = json::array();
    for (std::size_t b = 0; b < spec.budgets.size(); ++b) {
        bool ordered = true;
        for (std::size_t fi = 1; fi < spec.forms.size(); ++fi) {
            if (r.mean(fi - 1, b) < r.mean(fi, b) - 0.01) {
                ordered = false;
            }
        }
        ordering.push_back({{"budget", spec.budgets[b]}, {"ordered", ordered}});
    }
    json summary = header("study");
    summary["seed"] = ctx.seed;
    summary["seeds"] = spec.seeds;
    summary["budgets"] = spec.budgets;
    summary["table"] = table;
    summary["trend"] = trends;
    summary["ordering"] = ordering;
    write_json(ctx.out / "study.json", summary);
    return 0;
}

int cmd_estimate_pi(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "estimate-pi", f, storage);
    const fs::path probs_path = resolve(ctx.base, f->require<std::string>("probmap"));
    const fs::path scribble_path = resolve(ctx.base, f->require<std::string>("scribbles"));
    EmConfig em;
    if (f->has("em")) {
        em = parse_em(f->at("em"), "manifest.em");
    }
    f->finish();
    const ProbMapFile pm = read_probmap(probs_path);
    const LabelMap scribbles = read_label_pgm(scribble_path);
    const PosteriorBatch batch = posterior_batch(pm.probs, scribbles);
    const PiEstimate est = estimate_pi(batch, batch.labeled_frequency, em);

    json out = header("pi");
    out["pi"] = est.pi;
    out["initial_pi"] = batch.labeled_frequency;
    out["iterations"] = est.iterations;
    out["converged"] = est.converged;
    out["unlabeled"] = batch.count();
    if (pm.true_pi) {
        if (pm.true_pi->size() != est.pi.size()) {
            throw schema_error("probmap true_pi has the wrong length");
        }
        double l1 = 0.0;
        for (std::size_t k = 0; k < est.pi.size(); ++k) {
            l1 += std::abs(est.pi[k] - (*pm.true_pi)[k]);
        }
        out["true_pi"] = *pm.true_pi;
        out["l1_error"] = l1;
    }
    write_json(ctx.out / "pi.json", out);
    std::ostringstream trace;
    trace << "iteration,log_likelihood\n";
    for (std::size_t t = 0; t < est.trace.size(); ++t) {
        trace << t << "," << csv_number(est.trace[t]) << "\n";
    }
    write_text(ctx.out / "trace.csv", trace.str());
    return 0;
}

json plan_to_json(const MixPlan& plan)
{
    json j = {{"grid", plan.grid}, {"beta", plan.beta}, {"perm1", plan.perm1}, {"perm2", plan.perm2}};
    if (plan.occlusion) {
        const Occlusion& o = *plan.occlusion;
        j["occlusion"] = {{"center_row", o.center_row}, {"center_col", o.center_col}, {"side", o.side}, {"angle", o.angle}};
    } else {
        j["occlusion"] = nullptr;
    }
    return j;
}

// Argmax of the soft labels; pixels without label mass stay unlabeled.
LabelMap hard_labels(const Field& weights)
{
    LabelMap out(weights.height(), weights.width());
    for (std::size_t i = 0; i < weights.pixels(); ++i) {
        auto w = weights.pixel(i);
        const auto best = std::max_element(w.begin(), w.end());
        if (*best > 0.0) {
            out[i] = static_cast<Label>(best - w.begin());
        }
    }
    return out;
}

int cmd_mix_preview(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "mix-preview", f, storage);
    const DatasetSpec spec = dataset_of(*f);
    TrainConfig cfg = config_of(*f, spec.synth.classes);
    std::vector<std::size_t> pair{0, 1};
    f->read("pair", pair);
    f->finish();
    const std::size_t count = spec.train + spec.test;
    if (pair.size() != 2 || pair[0] >= count || pair[1] >= count) {
        throw schema_error("manifest.pair: expected two sample indices below " + std::to_string(count));
    }
    SynthSpec s = spec.synth;
    s.count = count;
    s.seed = ctx.seed;
    const std::vector<Sample> data = synth_dataset(s);
    const Sample& a = data[pair[0]];
    const Sample& b = data[pair[1]];
    const std::size_t m = spec.synth.classes;
    const double occ = cfg.occlusion_side >= 0.0 ? cfg.occlusion_side
                                                 : static_cast<double>(default_occlusion_side(spec.synth.side));
    SeededRng rng(ctx.seed);
    const SaliencyMap sa = image_saliency(a.image);
    const SaliencyMap sb = image_saliency(b.image);
    const MixPlan p12 = plan_mix(a.image, b.image, sa, sb, cfg.mix, occ, rng);
    const MixPlan p21 = plan_mix(b.image, a.image, sb, sa, cfg.mix, occ, rng);
    const MixedPair m12 = apply_mix(a.image, a.truth, b.image, b.truth, m, p12);
    const MixedPair m21 = apply_mix(b.image, b.truth, a.image, a.truth, m, p21);
    write_image(ctx.out / "source1.pgm", a.image);
    write_image(ctx.out / "source2.pgm", b.image);
    write_image(ctx.out / "mixed12.pgm", m12.image);
    write_image(ctx.out / "mixed21.pgm", m21.image);
    write_label_pgm(ctx.out / "labels12.pgm", hard_labels(m12.labels));
    write_label_pgm(ctx.out / "labels21.pgm", hard_labels(m21.labels));
    json out = header("mix-plan");
    out["pair"] = pair;
    out["plan12"] = plan_to_json(p12);
    out["plan21"] = plan_to_json(p21);
    write_json(ctx.out / "plan.json", out);
    return 0;
}

int cmd_metrics(const Invocation& inv)
{
    std::optional<Fields> storage;
    Fields* f = nullptr;
    Context ctx = open_manifest(inv, "metrics", f, storage);
    const auto classes = f->require<std::size_t>("classes");
    const json& pairs = f->at("pairs");
    f->finish();
    if (!pairs.is_array() || pairs.empty()) {
        throw schema_error("manifest.pairs: expected a non-empty array");
    }
    std::vector<MetricReport> reports;
    json rows = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Fields p(pairs[i], "manifest.pairs[" + std::to_string(i) + "]");
        const auto pred_path = p.require<std::string>("prediction");
        const auto truth_path = p.require<std::string>("truth");
        p.finish();
        const LabelMap pred = read_label_pgm(resolve(ctx.base, pred_path));
        const LabelMap truth = read_label_pgm(resolve(ctx.base, truth_path));
        reports.push_back(evaluate(pred, truth, classes));
        json row = report_to_json(reports.back());
        row["prediction"] = pred_path;
        row["truth"] = truth_path;
        rows.push_back(row);
    }
    json out = header("metrics");
    out["pairs"] = rows;
    out["mean"] = report_to_json(average(reports));
    write_json(ctx.out / "metrics.json", out);
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv)
{
    CLI::App app{"Scribble-supervised segmentation lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "scribblelab 1.0");

    struct Entry {
        const char* name;
        const char* help;
        int (*run)(const Invocation&);
    };
    static const Entry entries[] = {
        {"synth", "write a synthetic dataset as PGM files", cmd_synth},
        {"scribble", "generate scribbles for ground-truth label maps", cmd_scribble},
        {"train", "train one model and write its report", cmd_train},
        {"ablation", "compare PCE-only, PCE+mix+global and the full objective", cmd_ablation},
        {"study", "PCE-only sweep over scribble forms and budgets", cmd_study},
        {"estimate-pi", "EM estimate of class mixture ratios", cmd_estimate_pi},
        {"mix-preview", "write a mixed and occluded image pair", cmd_mix_preview},
        {"metrics", "Dice and Hausdorff distance of label maps", cmd_metrics},
    };

    Invocation inv;
    std::string manifest;
    std::uint64_t seed = 0;
    const Entry* chosen = nullptr;
    std::vector<std::pair<CLI::App*, const Entry*>> subs;
    for (const Entry& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        sub->add_option("--manifest", manifest, "manifest JSON")->required();
        sub->add_option("--seed", seed, "overrides SCRIBBLELAB_SEED and the manifest seed");
        sub->add_option("--out", inv.out, "output directory (overrides the manifest)");
        subs.emplace_back(sub, &e);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    for (const auto& [sub, entry] : subs) {
        if (sub->parsed()) {
            chosen = entry;
            if (sub->count("--seed") > 0) {
                inv.seed = seed;
            }
        }
    }
    inv.manifest = manifest;
    try {
        return chosen->run(inv);
    } catch (const Error& e) {
        std::cerr << "scribblelab " << chosen->name << ": " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "scribblelab " << chosen->name << ": " << e.what() << "\n";
        return 5;
    }
}

}  // namespace scribble
