#include "config.hpp"

#include "error.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

namespace repsample {

namespace {

using json = nlohmann::json;

// Reads one JSON object, recording consumed keys so leftovers can be rejected.
class Section {
  public:
    Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "must be an object");
    }

    std::string field(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] void fail(const std::string &key, const std::string &msg) const {
        const std::string name = key.empty() ? (path_.empty() ? std::string("config") : path_) : field(key);
        throw ConfigError(name + ": " + msg);
    }

    bool has(const std::string &key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json *get(const std::string &key) {
        allowed_.push_back(key);
        if (!has(key)) return nullptr;
        return &j_.at(key);
    }

    void allow(std::initializer_list<const char *> keys) {
        for (const char *k : keys) allowed_.emplace_back(k);
    }

    double number(const std::string &key, double def) {
        const json *v = get(key);
        if (!v) return def;
        if (!v->is_number()) fail(key, "must be a number");
        const double x = v->get<double>();
        if (!std::isfinite(x)) fail(key, "must be finite");
        return x;
    }

    double positive(const std::string &key, double def) {
        const double x = number(key, def);
        if (!(x > 0.0)) fail(key, "must be > 0");
        return x;
    }

    double nonnegative(const std::string &key, double def) {
        const double x = number(key, def);
        if (!(x >= 0.0)) fail(key, "must be >= 0");
        return x;
    }

    std::optional<double> optional_positive(const std::string &key) {
        if (!has(key)) {
            get(key);
            return std::nullopt;
        }
        return positive(key, 1.0);
    }

    std::uint64_t uint(const std::string &key, std::uint64_t def) {
        const json *v = get(key);
        if (!v) return def;
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer()) fail(key, "must be >= 0");
        fail(key, "must be a nonnegative integer");
    }

    std::size_t count(const std::string &key, std::size_t def) {
        const std::uint64_t x = uint(key, def);
        if (x == 0) fail(key, "must be a positive integer");
        return static_cast<std::size_t>(x);
    }

    bool boolean(const std::string &key, bool def) {
        const json *v = get(key);
        if (!v) return def;
        if (!v->is_boolean()) fail(key, "must be true or false");
        return v->get<bool>();
    }

    std::string string(const std::string &key, const std::string &def) {
        const json *v = get(key);
        if (!v) return def;
        if (!v->is_string()) fail(key, "must be a string");
        return v->get<std::string>();
    }

    std::vector<double> numbers(const std::string &key) {
        const json *v = get(key);
        if (!v) fail(key, "is required");
        if (!v->is_array()) fail(key, "must be an array of numbers");
        std::vector<double> out;
        for (const auto &e : *v) {
            if (!e.is_number() || !std::isfinite(e.get<double>())) fail(key, "must be an array of finite numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::array<double, 2> pair(const std::string &key) {
        const auto v = numbers(key);
        if (v.size() != 2) fail(key, "must have exactly two entries");
        return {v[0], v[1]};
    }

    Section child(const std::string &key) {
        const json *v = get(key);
        static const json empty = json::object();
        return Section(v ? *v : empty, field(key));
    }

    // Rejects keys that were never requested.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool known = false;
            for (const auto &a : allowed_) known = known || a == it.key();
            if (!known) throw ConfigError(field(it.key()) + ": unknown key");
        }
    }

    const json &raw() const { return j_; }

  private:
    const json &j_;
    std::string path_;
    std::vector<std::string> allowed_;
};

std::string resolve(const std::string &base, const std::string &p) {
    std::filesystem::path path(p);
    if (path.is_relative()) path = std::filesystem::path(base) / path;
    return path.string();
}

// Runs a module constructor and reports its complaint against a config field.
template <class F> auto checked(const Section &s, const std::string &key, F &&f) {
    try {
        return f();
    } catch (const InvalidArgument &e) {
        s.fail(key, e.what());
    }
}

TargetDensity parse_target(Section s, const std::string &base) {
    const std::string kind = s.string("kind", "");
    if (kind.empty()) s.fail("kind", "is required");
    if (kind == "gauss_mix") {
        GaussMixParams p{s.numbers("weights"), s.numbers("means"), s.numbers("stds")};
        const double eps = s.nonnegative("floor_eps", 1e-7);
        s.finish();
        return checked(s, "", [&] { return TargetDensity::gauss_mix(p, eps); });
    }
    if (kind == "ggx") {
        GgxParams p;
        p.roughness = s.positive("roughness", p.roughness);
        p.f0 = s.number("f0", p.f0);
        if (!(p.f0 >= 0.0 && p.f0 <= 1.0)) s.fail("f0", "must lie in [0, 1]");
        if (s.has("omega_o")) {
            const auto o = s.pair("omega_o");
            if (!(o[0] * o[0] + o[1] * o[1] <= 1.0)) s.fail("omega_o", "must lie in the unit disk");
            p.fixed_omega_o = o;
        } else {
            s.get("omega_o");
        }
        const double eps = s.nonnegative("floor_eps", 1e-7);
        s.finish();
        return checked(s, "", [&] { return TargetDensity::ggx(p, eps); });
    }
    if (kind == "grid") {
        GridField g;
        if (s.has("path")) {
            const std::string path = resolve(base, s.string("path", ""));
            s.allow({"rows", "cols", "values"});
            if (s.has("values")) s.fail("values", "cannot be combined with path");
            g = load_grid(path);
        } else {
            s.get("path");
            g.rows = s.count("rows", 0);
            g.cols = s.count("cols", 0);
            g.values = s.numbers("values");
            g = checked(s, "values", [&] {
                std::ostringstream text;
                text.precision(17);
                text << g.rows << ' ' << g.cols;
                for (double v : g.values) text << ' ' << v;
                return parse_grid(text.str());
            });
        }
        const double eps = s.nonnegative("floor_eps", 1e-7);
        s.finish();
        return checked(s, "", [&] { return TargetDensity::grid(std::move(g), eps); });
    }
    if (kind == "bimodal") {
        BimodalParams p;
        p.gap = s.positive("gap", p.gap);
        p.mode_center = s.positive("mode_center", p.mode_center);
        p.mode_std = s.positive("mode_std", p.mode_std);
        const double eps = s.nonnegative("floor_eps", 0.0);
        s.finish();
        return checked(s, "", [&] { return TargetDensity::bimodal(p, eps); });
    }
    s.fail("kind", "unknown target kind '" + kind + "' (gauss_mix, ggx, grid, bimodal)");
}

Prior parse_prior(Section s, std::size_t dim) {
    Prior p;
    p.dim = dim;
    const std::string kind = s.string("kind", "std_normal");
    if (kind == "std_normal") {
        p.kind = PriorKind::StdNormal;
        s.allow({"lo", "hi"});
        if (s.has("lo") || s.has("hi")) s.fail("kind", "lo/hi only apply to a uniform prior");
    } else if (kind == "uniform") {
        p.kind = PriorKind::Uniform;
        p.lo = s.number("lo", p.lo);
        p.hi = s.number("hi", p.hi);
        if (!(p.hi > p.lo)) s.fail("hi", "must be greater than lo");
    } else {
        s.fail("kind", "unknown prior kind '" + kind + "' (std_normal, uniform)");
    }
    s.finish();
    return p;
}

void parse_sampler(Section s, const TargetDensity &target, SamplerOptions &o, TrainConfig &t) {
    o.domain = target.dim() == 1 ? Domain::Line1D : Domain::Disk2D;
    o.conditional = target.conditional();
    o.hidden_layers = s.count("hidden_layers", o.hidden_layers);
    o.hidden_features = s.count("hidden_features", o.hidden_features);
    const std::string init = s.string("init", o.domain == Domain::Line1D ? "identity" : "standard");
    if (init == "standard") o.init = InitKind::Standard;
    else if (init == "identity") o.init = InitKind::Identity;
    else s.fail("init", "must be 'standard' or 'identity'");
    o.cond_freqs = static_cast<int>(s.count("cond_freqs", static_cast<std::size_t>(o.cond_freqs)));
    if (o.cond_freqs > 16) s.fail("cond_freqs", "must be <= 16");
    if (s.has("alpha")) {
        const double a = s.number("alpha", 0.0);
        if (!(a >= 0.0 && a < 1.0)) s.fail("alpha", "must lie in [0, 1)");
        o.alpha = a;
    } else {
        s.get("alpha");
    }
    if (s.has("skip_identity")) o.skip_identity = s.boolean("skip_identity", true);
    else s.get("skip_identity");
    const bool skip = o.skip_identity.value_or(o.domain == Domain::Line1D);
    if (o.init == InitKind::Identity && !skip)
        s.fail("init", "identity init needs skip_identity (the default only for 1D targets)");

    t.steps = s.count("steps", t.steps);
    t.batch_conditions = s.count("batch_conditions", t.batch_conditions);
    t.batch_z = s.count("batch_z", t.batch_z);
    t.learning_rate = s.positive("learning_rate", t.learning_rate);
    t.max_grad_norm = s.optional_positive("max_grad_norm");
    const std::string loss = s.string("loss", "rep_prime");
    if (loss == "rep_prime") t.loss = LossForm::RepPrime;
    else if (loss == "rep") t.loss = LossForm::Rep;
    else if (loss == "nll") t.loss = LossForm::Nll;
    else s.fail("loss", "must be 'rep_prime', 'rep' or 'nll'");
    s.finish();
}

void parse_pdf(Section s, PdfOptions &o, PdfTrainConfig &t) {
    o.hidden_layers = s.count("hidden_layers", o.hidden_layers);
    o.hidden_features = s.count("hidden_features", o.hidden_features);
    t.steps = s.count("steps", t.steps);
    t.batch_conditions = s.count("batch_conditions", t.batch_conditions);
    t.batch_z = s.count("batch_z", t.batch_z);
    t.learning_rate = s.positive("learning_rate", t.learning_rate);
    t.max_grad_norm = s.optional_positive("max_grad_norm");
    s.finish();
}

SceneSpec parse_scene(Section s, const std::string &base) {
    SceneSpec out;
    out.field.constant = s.nonnegative("field", 0.0);
    if (s.has("field_grid")) {
        const std::string path = resolve(base, s.string("field_grid", ""));
        out.field.grid = load_grid(path);
    } else {
        s.get("field_grid");
    }
    Section e = s.child("emitter");
    const std::string kind = e.string("kind", "none");
    if (kind == "none") {
        e.allow({"radiance", "center", "sigma"});
    } else if (kind == "uniform_disk") {
        const double r = e.positive("radiance", 1.0);
        out.emitter = Emitter::uniform_disk(r);
        e.allow({"center", "sigma"});
    } else if (kind == "spot") {
        const double r = e.positive("radiance", 1.0);
        const auto c = e.has("center") ? e.pair("center") : std::array<double, 2>{0.0, 0.0};
        e.allow({"center"});
        if (!(c[0] * c[0] + c[1] * c[1] < 1.0)) e.fail("center", "must lie inside the unit disk");
        const double sigma = e.positive("sigma", 0.1);
        out.emitter = checked(e, "", [&] { return Emitter::spot(c, sigma, r); });
    } else {
        e.fail("kind", "unknown emitter kind '" + kind + "' (none, uniform_disk, spot)");
    }
    e.finish();
    s.finish();
    return out;
}

EvaluationSpec parse_evaluation(Section s, const TargetDensity &target) {
    EvaluationSpec ev;
    ev.samples = s.count("samples", ev.samples);
    ev.bins = static_cast<std::size_t>(s.uint("bins", 0));
    if (s.has("range")) {
        if (target.dim() != 1) s.fail("range", "only applies to 1D targets");
        const auto r = s.pair("range");
        if (!(r[1] > r[0])) s.fail("range", "must be increasing");
        ev.range = r;
    } else {
        s.get("range");
    }
    if (const json *c = s.get("conditions")) {
        if (!c->is_array()) s.fail("conditions", "must be an array of [x, y] pairs");
        for (const auto &e : *c) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
                s.fail("conditions", "must be an array of [x, y] pairs");
            const double x = e[0].get<double>(), y = e[1].get<double>();
            if (!(x * x + y * y <= 1.0)) s.fail("conditions", "every condition must lie in the unit disk");
            ev.conditions.push_back(Condition::at(x, y));
        }
        if (!target.conditional() && !ev.conditions.empty())
            s.fail("conditions", "the target is not conditional");
    }
    ev.num_conditions = s.count("num_conditions", ev.num_conditions);
    ev.coverage_threshold = s.positive("coverage_threshold", ev.coverage_threshold);
    if (ev.coverage_threshold > 1.0) s.fail("coverage_threshold", "must be <= 1");
    ev.injectivity_grid = static_cast<std::size_t>(s.uint("injectivity_grid", 0));
    ev.estimator_samples = s.count("estimator_samples", ev.estimator_samples);
    if (const json *spp = s.get("spp")) {
        if (!spp->is_array()) s.fail("spp", "must be an array of positive integers");
        ev.spp.clear();
        for (const auto &e : *spp) {
            if (!e.is_number_unsigned() || e.get<std::uint64_t>() == 0) s.fail("spp", "must be an array of positive integers");
            ev.spp.push_back(e.get<std::size_t>());
        }
        if (ev.spp.empty()) s.fail("spp", "must not be empty");
        for (std::size_t i = 1; i < ev.spp.size(); ++i)
            if (ev.spp[i] <= ev.spp[i - 1]) s.fail("spp", "must be strictly increasing");
    }
    ev.trials = s.count("trials", ev.trials);
    if (ev.trials < 2) s.fail("trials", "must be >= 2");
    if (const json *m = s.get("modes")) {
        if (!m->is_array() || m->empty()) s.fail("modes", "must be a nonempty array of estimator names");
        ev.modes.clear();
        for (const auto &e : *m) {
            if (!e.is_string()) s.fail("modes", "must be a nonempty array of estimator names");
            try {
                ev.modes.push_back(estimator_mode_from_string(e.get<std::string>()));
            } catch (const InvalidArgument &err) {
                s.fail("modes", err.what());
            }
        }
    }
    ev.quadrature_resolution = s.count("quadrature_resolution", ev.quadrature_resolution);
    if (ev.quadrature_resolution < 64) s.fail("quadrature_resolution", "must be >= 64");
    ev.timing = s.boolean("timing", false);
    s.finish();
    return ev;
}

} // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
    seed = s;
    sampler_train.seed = s;
    pdf_train.seed = s;
}

ToyScene ExperimentConfig::scene_for_estimators() const {
    return ToyScene{target, prior, scene.field, scene.emitter};
}

std::vector<Condition> ExperimentConfig::evaluation_conditions() const {
    if (!target.conditional()) return {Condition::none()};
    if (!evaluation.conditions.empty()) return evaluation.conditions;
    std::vector<Condition> out;
    for (std::size_t i = 0; i < evaluation.num_conditions; ++i)
        out.push_back(sample_condition(derive_seed(seed, stream::Eval, i)));
    return out;
}

HistogramSpec ExperimentConfig::histogram_spec() const {
    HistogramSpec h;
    if (target.dim() == 1) {
        h.domain = Domain::Line1D;
        h.bins = evaluation.bins ? evaluation.bins : 200;
        const double b = target.quadrature_bound();
        h.lo = evaluation.range ? (*evaluation.range)[0] : -b;
        h.hi = evaluation.range ? (*evaluation.range)[1] : b;
    } else {
        h.domain = Domain::Disk2D;
        h.bins = evaluation.bins ? evaluation.bins : 64;
    }
    return h;
}

std::size_t ExperimentConfig::injectivity_resolution() const {
    if (evaluation.injectivity_grid) return evaluation.injectivity_grid;
    return target.dim() == 1 ? 4001 : 201;
}

ExperimentConfig parse_config(const std::string &json_text, const std::string &base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Section root(doc, "");
    ExperimentConfig cfg;
    const std::uint64_t seed = root.uint("seed", 0);
    if (!root.has("target")) root.fail("target", "is required");
    cfg.target = parse_target(root.child("target"), base_dir);
    cfg.prior = parse_prior(root.child("prior"), cfg.target.dim());
    parse_sampler(root.child("sampler"), cfg.target, cfg.sampler, cfg.sampler_train);
    parse_pdf(root.child("pdf"), cfg.pdf, cfg.pdf_train);
    cfg.scene = parse_scene(root.child("scene"), base_dir);
    cfg.evaluation = parse_evaluation(root.child("evaluation"), cfg.target);
    Section out = root.child("output");
    cfg.output_dir = out.string("dir", ".");
    if (cfg.output_dir.empty()) out.fail("dir", "must not be empty");
    out.finish();
    root.finish();
    if (cfg.target.dim() == 1 && cfg.scene.emitter.kind() != EmitterKind::None)
        throw ConfigError("scene.emitter: emitters live on the unit disk and need a 2D target");
    cfg.set_seed(seed);
    return cfg;
}

ExperimentConfig load_config(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    const auto parent = std::filesystem::path(path).parent_path();
    return parse_config(ss.str(), parent.empty() ? "." : parent.string());
}

} // namespace repsample
