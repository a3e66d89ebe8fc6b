#include "app/config.hpp"

#include <fstream>
#include <set>

namespace xfer::app {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Typed access to one JSON object; every key must be consumed or finish() throws.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const json* get(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }
    std::string at(const std::string& key) const { return join(path_, key); }

    double number(const std::string& key, double fallback) {
        const json* v = get(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(at(key), "expected a number");
        return v->get<double>();
    }
    std::uint64_t uint(const std::string& key, std::uint64_t fallback) {
        const json* v = get(key);
        return v ? as_uint(*v, at(key)) : fallback;
    }
    bool boolean(const std::string& key, bool fallback) {
        const json* v = get(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
        return v->get<bool>();
    }
    std::string string(const std::string& key, const std::string& fallback) {
        const json* v = get(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(at(key), "expected a string");
        return v->get<std::string>();
    }
    const json* array(const std::string& key) {
        const json* v = get(key);
        if (v && !v->is_array()) throw ConfigError(at(key), "expected an array");
        return v;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError(at(key), "unknown field");
    }

    static std::uint64_t as_uint(const json& v, const std::string& path) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        throw ConfigError(path, "expected a non-negative integer");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    return fs::weakly_canonical(fs::path(p).is_absolute() ? fs::path(p) : base / p);
}

// Wraps library validation so the error names the section.
template <class F>
void checked(const std::string& path, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

DatasetConfig parse_dataset(const json& j, const fs::path& base) {
    Obj o(j, "dataset");
    DatasetConfig d;
    d.kind = o.string("kind", d.kind);
    if (d.kind == "mnist") {
        const json* p = o.get("path");
        if (!p || !p->is_string()) throw ConfigError(o.at("path"), "required string for kind mnist");
        d.path = resolve(base, p->get<std::string>());
        if (const json* v = o.get("train_subset")) d.train_subset = Obj::as_uint(*v, o.at("train_subset"));
        if (const json* v = o.get("test_subset")) d.test_subset = Obj::as_uint(*v, o.at("test_subset"));
        d.subset_seed = o.uint("subset_seed", d.subset_seed);
    } else if (d.kind == "blobs") {
        d.train_per_class = o.uint("train_per_class", d.train_per_class);
        d.test_per_class = o.uint("test_per_class", d.test_per_class);
        d.classes = o.uint("classes", d.classes);
        d.dim = o.uint("dim", d.dim);
        d.seed = o.uint("seed", d.seed);
        d.spread = o.number("spread", d.spread);
        if (d.classes < 2) throw ConfigError(o.at("classes"), "need at least 2 classes");
        if (d.dim == 0) throw ConfigError(o.at("dim"), "must be >= 1");
        if (d.train_per_class == 0 || d.test_per_class == 0) throw ConfigError(o.at("train_per_class"), "must be >= 1");
        if (!(d.spread >= 0.0)) throw ConfigError(o.at("spread"), "must be >= 0");
    } else {
        throw ConfigError(o.at("kind"), "expected \"mnist\" or \"blobs\", got \"" + d.kind + "\"");
    }
    o.finish();
    return d;
}

ModelSpec parse_model(const json& j, const DatasetConfig& data) {
    Obj o(j, "model");
    ModelSpec spec;
    const std::string kind = o.string("kind", "");
    const ag::Shape input = data.kind == "mnist" ? ag::Shape{1, 28, 28} : ag::Shape{data.dim};
    const std::size_t classes = data.kind == "mnist" ? 10 : data.classes;
    if (kind == "lenet") {
        if (input != ag::Shape{1, 28, 28}) throw ConfigError(o.at("kind"), "lenet needs 1x28x28 inputs");
        spec = ModelSpec::lenet();
    } else if (kind == "mlp") {
        std::vector<std::size_t> hidden;
        if (const json* h = o.array("hidden"))
            for (std::size_t i = 0; i < h->size(); ++i) {
                hidden.push_back(Obj::as_uint((*h)[i], index(o.at("hidden"), i)));
                if (hidden.back() == 0) throw ConfigError(index(o.at("hidden"), i), "must be >= 1");
            }
        spec = ModelSpec::mlp(input, std::move(hidden), classes);
    } else {
        throw ConfigError(o.at("kind"), "expected \"lenet\" or \"mlp\", got \"" + kind + "\"");
    }
    o.finish();
    return spec;
}

PairTrainConfig parse_train(const json& j) {
    Obj o(j, "train");
    PairTrainConfig c;
    checked(o.at("goal"), [&] { c.goal = goal_from_string(o.string("goal", to_string(c.goal))); });
    checked(o.at("update_mode"),
            [&] { c.update_mode = update_mode_from_string(o.string("update_mode", to_string(c.update_mode))); });
    c.lambda_cos = o.number("lambda_cos", c.lambda_cos);
    c.lambda_mag = o.number("lambda_mag", c.lambda_mag);
    if (const json* m = o.array("magnitude_targets")) {
        if (m->size() != 2 || !(*m)[0].is_number() || !(*m)[1].is_number())
            throw ConfigError(o.at("magnitude_targets"), "expected [m1, m2]");
        c.magnitude_targets = std::pair{(*m)[0].get<double>(), (*m)[1].get<double>()};
    }
    c.adam.lr = o.number("lr", c.adam.lr);
    c.adam.beta1 = o.number("beta1", c.adam.beta1);
    c.adam.beta2 = o.number("beta2", c.adam.beta2);
    c.adam.eps = o.number("eps", c.adam.eps);
    c.separate_penalty_optimizer = o.boolean("separate_penalty_optimizer", c.separate_penalty_optimizer);
    c.batch_size = o.uint("batch_size", c.batch_size);
    c.epochs = o.uint("epochs", c.epochs);
    o.finish();
    checked("train", [&] { c.validate(); });
    return c;
}

AttackSpec parse_attack(const json& j, const std::string& path) {
    Obj o(j, path);
    AttackSpec a;
    checked(o.at("kind"), [&] { a.kind = attack_kind_from_string(o.string("kind", "")); });
    a.epsilon = o.number("epsilon", a.epsilon);
    a.iterations = o.uint("iterations", a.kind == AttackKind::cw ? a.cw.iterations : a.iterations);
    if (a.kind == AttackKind::cw) {
        a.cw.iterations = a.iterations;
        a.iterations = 1;
    }
    a.cw.confidence = o.number("confidence", a.cw.confidence);
    a.cw.search_steps = o.uint("search_steps", a.cw.search_steps);
    a.cw.learning_rate = o.number("learning_rate", a.cw.learning_rate);
    a.cw.c_init = o.number("c_init", a.cw.c_init);
    if (const json* c = o.array("clamp")) {
        if (c->size() != 2 || !(*c)[0].is_number() || !(*c)[1].is_number())
            throw ConfigError(o.at("clamp"), "expected [lo, hi]");
        a.clamp_lo = (*c)[0].get<double>();
        a.clamp_hi = (*c)[1].get<double>();
    }
    o.finish();
    checked(path, [&] { a.validate(); });
    return a;
}

json attack_json(const AttackSpec& a) {
    json j{{"kind", to_string(a.kind)}, {"clamp", {a.clamp_lo, a.clamp_hi}}};
    if (a.kind == AttackKind::cw) {
        j["confidence"] = a.cw.confidence;
        j["search_steps"] = a.cw.search_steps;
        j["iterations"] = a.cw.iterations;
        j["learning_rate"] = a.cw.learning_rate;
        j["c_init"] = a.cw.c_init;
    } else {
        j["epsilon"] = a.epsilon;
        j["iterations"] = a.iterations;
    }
    return j;
}

}  // namespace

std::vector<std::uint64_t> ExperimentConfig::replicate_seeds() const {
    std::vector<std::uint64_t> out;
    for (auto s : seeds) out.push_back(s + seed_offset);
    return out;
}

ExperimentConfig parse_config(const json& root, const fs::path& base_dir) {
    if (root.is_object() && root.contains("manifest_version")) {
        if (!root.contains("config")) throw ConfigError("config", "manifest without a config section");
        return parse_config(root.at("config"), base_dir);
    }
    Obj o(root, "");
    ExperimentConfig c;
    o.string("description", "");
    if (const json* d = o.get("dataset")) c.dataset = parse_dataset(*d, base_dir);
    const json default_model = c.dataset.kind == "mnist" ? json{{"kind", "lenet"}} : json{{"kind", "mlp"}, {"hidden", {64}}};
    c.model = parse_model(o.get("model") ? *o.get("model") : default_model, c.dataset);
    if (const json* t = o.get("train")) c.train = parse_train(*t);
    c.magnitude = o.get("magnitude") ? std::optional<double>(o.number("magnitude", 0.0)) : std::nullopt;
    if (c.magnitude && !(*c.magnitude > 0.0)) throw ConfigError("magnitude", "must be > 0");
    if (const json* s = o.array("seeds")) {
        c.seeds.clear();
        for (std::size_t i = 0; i < s->size(); ++i) c.seeds.push_back(Obj::as_uint((*s)[i], index("seeds", i)));
        if (c.seeds.empty()) throw ConfigError("seeds", "need at least one seed");
    }
    c.seed_offset = o.uint("seed_offset", 0);
    if (const json* a = o.array("attacks"))
        for (std::size_t i = 0; i < a->size(); ++i) c.attacks.push_back(parse_attack((*a)[i], index("attacks", i)));
    if (const json* s = o.array("scenarios"))
        for (std::size_t i = 0; i < s->size(); ++i) {
            Obj so((*s)[i], index("scenarios", i));
            Scenario sc;
            sc.name = so.string("name", "");
            if (sc.name.empty()) throw ConfigError(so.at("name"), "required");
            const std::string dir = so.string("dir", "");
            if (dir.empty()) throw ConfigError(so.at("dir"), "required");
            sc.dir = resolve(base_dir, dir);
            so.finish();
            c.scenarios.push_back(std::move(sc));
        }
    if (const json* a = o.get("asymmetry")) {
        Obj ao(*a, "asymmetry");
        c.asymmetry.base = ao.number("base", c.asymmetry.base);
        if (!(c.asymmetry.base > 0.0)) throw ConfigError(ao.at("base"), "must be > 0");
        if (const json* t = ao.array("targets"))
            for (std::size_t i = 0; i < t->size(); ++i) {
                if (!(*t)[i].is_number() || !((*t)[i].get<double>() > 0.0))
                    throw ConfigError(index(ao.at("targets"), i), "expected a positive number");
                c.asymmetry.targets.push_back((*t)[i].get<double>());
            }
        ao.finish();
    }
    if (const json* e = o.get("eval")) {
        Obj eo(*e, "eval");
        c.eval.attack_samples = eo.uint("attack_samples", c.eval.attack_samples);
        c.eval.grad_batch = eo.uint("grad_batch", c.eval.grad_batch);
        c.eval.detector_max_fpr = eo.number("detector_max_fpr", c.eval.detector_max_fpr);
        if (c.eval.attack_samples == 0) throw ConfigError(eo.at("attack_samples"), "must be >= 1");
        if (c.eval.grad_batch == 0) throw ConfigError(eo.at("grad_batch"), "must be >= 1");
        if (!(c.eval.detector_max_fpr >= 0.0 && c.eval.detector_max_fpr <= 1.0))
            throw ConfigError(eo.at("detector_max_fpr"), "must lie in [0,1]");
        eo.finish();
    }
    if (const json* r = o.get("report")) {
        Obj ro(*r, "report");
        if (const json* in = ro.array("inputs"))
            for (std::size_t i = 0; i < in->size(); ++i) {
                if (!(*in)[i].is_string()) throw ConfigError(index(ro.at("inputs"), i), "expected a path string");
                c.report_inputs.push_back(resolve(base_dir, (*in)[i].get<std::string>()));
            }
        ro.finish();
    }
    o.finish();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

json to_json(const ExperimentConfig& c) {
    json d{{"kind", c.dataset.kind}};
    if (c.dataset.kind == "mnist") {
        d["path"] = c.dataset.path.string();
        d["train_subset"] = c.dataset.train_subset ? json(*c.dataset.train_subset) : json(nullptr);
        d["test_subset"] = c.dataset.test_subset ? json(*c.dataset.test_subset) : json(nullptr);
        d["subset_seed"] = c.dataset.subset_seed;
    } else {
        d["train_per_class"] = c.dataset.train_per_class;
        d["test_per_class"] = c.dataset.test_per_class;
        d["classes"] = c.dataset.classes;
        d["dim"] = c.dataset.dim;
        d["seed"] = c.dataset.seed;
        d["spread"] = c.dataset.spread;
    }
    json model{{"kind", to_string(c.model.kind)}};
    if (c.model.kind == ModelKind::mlp) model["hidden"] = c.model.hidden;
    const PairTrainConfig& t = c.train;
    json train{{"goal", to_string(t.goal)},
               {"update_mode", to_string(t.update_mode)},
               {"lambda_cos", t.lambda_cos},
               {"lambda_mag", t.lambda_mag},
               {"magnitude_targets", t.magnitude_targets ? json{t.magnitude_targets->first, t.magnitude_targets->second}
                                                         : json(nullptr)},
               {"lr", t.adam.lr},
               {"beta1", t.adam.beta1},
               {"beta2", t.adam.beta2},
               {"eps", t.adam.eps},
               {"separate_penalty_optimizer", t.separate_penalty_optimizer},
               {"batch_size", t.batch_size},
               {"epochs", t.epochs}};
    json attacks = json::array();
    for (const auto& a : c.attacks) attacks.push_back(attack_json(a));
    json scenarios = json::array();
    for (const auto& s : c.scenarios) scenarios.push_back({{"name", s.name}, {"dir", s.dir.string()}});
    json inputs = json::array();
    for (const auto& p : c.report_inputs) inputs.push_back(p.string());
    return json{{"dataset", d},
                {"model", model},
                {"train", train},
                {"magnitude", c.magnitude ? json(*c.magnitude) : json(nullptr)},
                {"seeds", c.seeds},
                {"seed_offset", c.seed_offset},
                {"attacks", attacks},
                {"scenarios", scenarios},
                {"asymmetry", {{"base", c.asymmetry.base}, {"targets", c.asymmetry.targets}}},
                {"eval",
                 {{"attack_samples", c.eval.attack_samples},
                  {"grad_batch", c.eval.grad_batch},
                  {"detector_max_fpr", c.eval.detector_max_fpr}}},
                {"report", {{"inputs", inputs}}}};
}

std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg) {
    if (cfg.kind == "blobs")
        return synth_blobs_split(cfg.train_per_class, cfg.test_per_class, cfg.classes, cfg.dim, cfg.seed, cfg.spread);
    Dataset train = load_mnist_dir(cfg.path, "train");
    Dataset test = load_mnist_dir(cfg.path, "test");
    if (cfg.train_subset) train = subset(train, *cfg.train_subset, cfg.subset_seed);
    if (cfg.test_subset) test = head(test, *cfg.test_subset);
    return {std::move(train), std::move(test)};
}

}  // namespace xfer::app
