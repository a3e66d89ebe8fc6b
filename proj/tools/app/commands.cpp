#include "app/commands.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "xfer/checkpoint.hpp"
#include "xfer/csv.hpp"
#include "xfer/eval.hpp"

namespace xfer::app {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::mutex g_log_mutex;

class Logger {
public:
    explicit Logger(bool quiet) : quiet_(quiet) {}
    void operator()(const std::string& line) const {
        if (quiet_) return;
        std::lock_guard lock(g_log_mutex);
        std::cerr << line << '\n';
    }

private:
    bool quiet_;
};

// Runs job(i) for i in [0, n) on up to `workers` threads; rethrows the first failure by index.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t count = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (count == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Collects artifact names so the manifest can list them.
class Artifacts {
public:
    explicit Artifacts(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }
    fs::path add(const std::string& rel) {
        std::lock_guard lock(mutex_);
        names_.push_back(rel);
        return root_ / rel;
    }
    const fs::path& root() const { return root_; }
    std::vector<std::string> sorted() const {
        std::vector<std::string> out = names_;
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    fs::path root_;
    std::vector<std::string> names_;
    std::mutex mutex_;
};

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string seed_tag(std::uint64_t seed) { return "s" + std::to_string(seed); }

std::string pair_ckpt(std::uint64_t seed, int k) { return "pair_" + seed_tag(seed) + "_m" + std::to_string(k) + ".ckpt"; }
std::string single_ckpt(std::uint64_t seed) { return "model_" + seed_tag(seed) + ".ckpt"; }
std::string magnitude_ckpt(double m, std::uint64_t seed) {
    return "models/mag_" + format_double(m) + "_" + seed_tag(seed) + ".ckpt";
}

EpochCallback epoch_logger(const Logger& log, std::string tag, std::size_t epochs) {
    return [&log, tag = std::move(tag), epochs](const EpochRecord& e) {
        std::ostringstream line;
        line << tag << " epoch " << e.epoch << "/" << epochs << " loss";
        for (double l : e.class_loss) line << ' ' << format_double(l);
        line << " cos " << format_double(e.cos_mean);
        log(line.str());
    };
}

// Models of one replicate loaded from a scenario directory.
struct Replicate {
    std::uint64_t seed = 0;
    std::vector<Model> models;
};

struct LoadedScenario {
    std::string command;
    std::vector<Replicate> replicates;
};

void require_spec(const Model& m, const ExperimentConfig& cfg, const fs::path& file) {
    if (!(m.spec() == cfg.model))
        throw std::runtime_error("checkpoint/spec mismatch: " + file.string() + " does not match the configured model");
}

LoadedScenario load_scenario(const Scenario& sc, const ExperimentConfig& cfg) {
    const fs::path manifest_path = sc.dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("scenario " + sc.name + ": no manifest at " + manifest_path.string());
    const json manifest = json::parse(in);
    LoadedScenario out;
    out.command = manifest.at("command").get<std::string>();
    const ExperimentConfig produced = parse_config(manifest, sc.dir);
    for (auto seed : produced.replicate_seeds()) {
        Replicate r{seed, {}};
        std::vector<fs::path> files;
        if (out.command == "train-pair") files = {sc.dir / pair_ckpt(seed, 1), sc.dir / pair_ckpt(seed, 2)};
        else if (out.command == "train") files = {sc.dir / single_ckpt(seed)};
        else throw std::runtime_error("scenario " + sc.name + ": " + out.command + " output holds no models");
        for (const auto& f : files) {
            r.models.push_back(load_checkpoint(f));
            require_spec(r.models.back(), cfg, f);
        }
        out.replicates.push_back(std::move(r));
    }
    return out;
}

std::vector<LoadedScenario> load_pair_scenarios(const ExperimentConfig& cfg) {
    if (cfg.scenarios.empty()) throw ConfigError("scenarios", "at least one scenario is required");
    std::vector<LoadedScenario> out;
    for (const auto& sc : cfg.scenarios) {
        out.push_back(load_scenario(sc, cfg));
        if (out.back().command != "train-pair")
            throw ConfigError("scenarios", sc.name + " is not a train-pair output");
    }
    return out;
}

void require_attacks(const ExperimentConfig& cfg) {
    if (cfg.attacks.empty()) throw ConfigError("attacks", "at least one attack is required");
}

Dataset attack_set(const Dataset& test, const ExperimentConfig& cfg) {
    return head(test, std::min(cfg.eval.attack_samples, test.size()));
}

std::string str(std::size_t v) { return std::to_string(v); }

// ---- commands ----

void cmd_train(const ExperimentConfig& cfg, const RunOptions& opts, Artifacts& art, const Logger& log) {
    const auto [train, test] = load_datasets(cfg.dataset);
    const auto seeds = cfg.replicate_seeds();
    parallel_for(seeds.size(), opts.workers, [&](std::size_t i) {
        const std::string tag = "train " + seed_tag(seeds[i]);
        SingleResult r = train_single(Model::initialize(cfg.model, seeds[i]), train, cfg.train, cfg.magnitude,
                                      epoch_logger(log, tag, cfg.train.epochs));
        r.model.metadata()["test_accuracy"] = format_double(accuracy(r.model, test.all_images(), test.labels));
        save_checkpoint(r.model, art.add(single_ckpt(seeds[i])));
        r.record.write_csv(art.add("train_" + seed_tag(seeds[i]) + ".csv"));
    });
}

void cmd_train_pair(const ExperimentConfig& cfg, const RunOptions& opts, Artifacts& art, const Logger& log) {
    const auto [train, test] = load_datasets(cfg.dataset);
    const auto seeds = cfg.replicate_seeds();
    parallel_for(seeds.size(), opts.workers, [&](std::size_t i) {
        auto [a, b] = Model::initialize_pair(cfg.model, seeds[i]);
        const std::string tag = "train-pair " + seed_tag(seeds[i]);
        PairResult r = train_pair(std::move(a), std::move(b), train, cfg.train, epoch_logger(log, tag, cfg.train.epochs));
        for (Model* m : {&r.m1, &r.m2})
            m->metadata()["test_accuracy"] = format_double(accuracy(*m, test.all_images(), test.labels));
        save_checkpoint(r.m1, art.add(pair_ckpt(seeds[i], 1)));
        save_checkpoint(r.m2, art.add(pair_ckpt(seeds[i], 2)));
        r.record.write_csv(art.add("train_" + seed_tag(seeds[i]) + ".csv"));
    });
}

void cmd_attack(const ExperimentConfig& cfg, const RunOptions& opts, Artifacts& art, const Logger& log) {
    require_attacks(cfg);
    if (cfg.scenarios.empty()) throw ConfigError("scenarios", "at least one scenario is required");
    const Dataset data = attack_set(load_datasets(cfg.dataset).second, cfg);
    const ag::Tensor x = data.all_images();

    struct Job {
        const Scenario* scenario;
        std::uint64_t seed;
        std::size_t model_index;
        const Model* model;
        const AttackSpec* attack;
        std::vector<std::string> summary;
    };
    std::vector<LoadedScenario> loaded;
    for (const auto& sc : cfg.scenarios) loaded.push_back(load_scenario(sc, cfg));
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < loaded.size(); ++s)
        for (const auto& rep : loaded[s].replicates)
            for (std::size_t k = 0; k < rep.models.size(); ++k)
                for (const auto& a : cfg.attacks) jobs.push_back({&cfg.scenarios[s], rep.seed, k + 1, &rep.models[k], &a, {}});

    parallel_for(jobs.size(), opts.workers, [&](std::size_t i) {
        Job& j = jobs[i];
        const AdversarialBatch b = run_attack(*j.model, x, data.labels, *j.attack);
        const std::string model_tag = "m" + str(j.model_index);
        write_attack_csv(b, art.add("attack_" + j.scenario->name + "_" + seed_tag(j.seed) + "_" + model_tag + "_" +
                                    j.attack->label() + ".csv"));
        double l2 = 0.0, linf = 0.0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < b.size(); ++s)
            if (b.adversarial[s]) {
                l2 += b.l2[s];
                linf += b.linf[s];
                ++n;
            }
        j.summary = {j.scenario->name,
                     str(j.seed),
                     model_tag,
                     j.attack->label(),
                     str(b.size()),
                     str(b.correct_count()),
                     str(b.adversarial_count()),
                     format_double(b.success_rate()),
                     n ? format_double(l2 / static_cast<double>(n)) : "",
                     n ? format_double(linf / static_cast<double>(n)) : ""};
        log("attack " + j.scenario->name + " " + seed_tag(j.seed) + " " + model_tag + " " + j.attack->label() +
            " success " + format_double(b.success_rate()));
    });
    std::vector<std::vector<std::string>> rows;
    for (const auto& j : jobs) rows.push_back(j.summary);
    write_csv(art.add("attack_summary.csv"),
              {"scenario", "seed", "model", "attack", "samples", "correct", "adversarial", "success_rate",
               "mean_l2_adversarial", "mean_linf_adversarial"},
              rows);
}

void cmd_transfer(const ExperimentConfig& cfg, const RunOptions& opts, Artifacts& art, const Logger& log) {
    require_attacks(cfg);
    const auto loaded = load_pair_scenarios(cfg);
    const Dataset data = attack_set(load_datasets(cfg.dataset).second, cfg);
    const ag::Tensor x = data.all_images();

    struct Job {
        std::size_t scenario, replicate, attack;
        double success1 = 0, success2 = 0;
        TransferResult t12, t21;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < loaded.size(); ++s)
        for (std::size_t a = 0; a < cfg.attacks.size(); ++a)
            for (std::size_t r = 0; r < loaded[s].replicates.size(); ++r) jobs.push_back({s, r, a, 0.0, 0.0, {}, {}});

    parallel_for(jobs.size(), opts.workers, [&](std::size_t i) {
        Job& j = jobs[i];
        const Replicate& rep = loaded[j.scenario].replicates[j.replicate];
        const AttackSpec& spec = cfg.attacks[j.attack];
        const AdversarialBatch b1 = run_attack(rep.models[0], x, data.labels, spec);
        const AdversarialBatch b2 = run_attack(rep.models[1], x, data.labels, spec);
        j.success1 = b1.success_rate();
        j.success2 = b2.success_rate();
        j.t12 = transferability(b1, rep.models[1]);
        j.t21 = transferability(b2, rep.models[0]);
        log("transfer " + cfg.scenarios[j.scenario].name + " " + spec.label() + " " + seed_tag(rep.seed) + " " +
            format_optional(j.t12.rate) + " " + format_optional(j.t21.rate));
    });

    TransferReport report;
    std::vector<std::vector<std::string>> per_rep;
    for (const auto& j : jobs) {
        const std::string name = cfg.scenarios[j.scenario].name, label = cfg.attacks[j.attack].label();
        if (report.rows.empty() || report.rows.back().scenario != name || report.rows.back().attack != label)
            report.rows.push_back({name, label, {}, {}, {}, {}, {}, {}});
        TransferRow& row = report.rows.back();
        row.success1.push_back(j.success1);
        row.success2.push_back(j.success2);
        row.transfer_12.push_back(j.t12.rate);
        row.transfer_21.push_back(j.t21.rate);
        row.eligible_12.push_back(j.t12.eligible);
        row.eligible_21.push_back(j.t21.eligible);
        per_rep.push_back({name, label, str(loaded[j.scenario].replicates[j.replicate].seed), format_double(j.success1),
                           format_double(j.success2), format_optional(j.t12.rate), format_optional(j.t21.rate),
                           str(j.t12.eligible), str(j.t21.eligible)});
    }
    report.write_csv(art.add("transfer.csv"));
    write_text(art.add("transfer.md"), report.markdown());
    write_csv(art.add("transfer_replicates.csv"),
              {"scenario", "attack", "seed", "M1", "M2", "M1_to_M2", "M2_to_M1", "eligible_M1_to_M2",
               "eligible_M2_to_M1"},
              per_rep);
}

void cmd_grad_stats(const ExperimentConfig& cfg, const RunOptions& opts, Artifacts& art, const Logger& log) {
    const auto loaded = load_pair_scenarios(cfg);
    const auto [train, test] = load_datasets(cfg.dataset);
    const Dataset* splits[2] = {&train, &test};

    struct Job {
        std::size_t scenario, replicate, split;
        GradStats stats;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < loaded.size(); ++s)
        for (std::size_t sp = 0; sp < 2; ++sp)
            for (std::size_t r = 0; r < loaded[s].replicates.size(); ++r) jobs.push_back({s, r, sp, {}});
    parallel_for(jobs.size(), opts.workers, [&](std::size_t i) {
        Job& j = jobs[i];
        const Replicate& rep = loaded[j.scenario].replicates[j.replicate];
        j.stats = grad_stats(rep.models[0], rep.models[1], *splits[j.split], cfg.eval.grad_batch);
        j.stats.split = j.split == 0 ? "train" : "test";
        log("grad-stats " + cfg.scenarios[j.scenario].name + " " + j.stats.split + " " + seed_tag(rep.seed) + " cos " +
            format_double(j.stats.mean_cos));
    });

    std::vector<std::vector<std::string>> rows, per_rep;
    for (std::size_t start = 0; start < jobs.size();) {
        std::size_t end = start;
        std::vector<double> cos, abs_cos, diff, n1, n2;
        while (end < jobs.size() && jobs[end].scenario == jobs[start].scenario && jobs[end].split == jobs[start].split) {
            const GradStats& g = jobs[end].stats;
            cos.push_back(g.mean_cos);
            abs_cos.push_back(g.mean_abs_cos);
            diff.push_back(g.mean_norm_diff);
            n1.push_back(g.mean_norm1);
            n2.push_back(g.mean_norm2);
            per_rep.push_back({cfg.scenarios[jobs[end].scenario].name, g.split,
                               str(loaded[jobs[end].scenario].replicates[jobs[end].replicate].seed),
                               format_double(g.mean_cos), format_double(g.std_cos), format_double(g.mean_abs_cos),
                               format_double(g.mean_norm_diff), format_double(g.mean_norm1),
                               format_double(g.mean_norm2), str(g.count), str(g.skipped)});
            ++end;
        }
        std::vector<std::string> row{cfg.scenarios[jobs[start].scenario].name, jobs[start].stats.split};
        for (const auto* v : {&cos, &abs_cos, &diff, &n1, &n2}) {
            const MeanStd m = mean_std(std::span<const double>(*v));
            row.push_back(format_optional(m.mean));
            row.push_back(format_optional(m.std));
        }
        row.push_back(str(cos.size()));
        rows.push_back(std::move(row));
        start = end;
    }
    write_csv(art.add("grad_stats.csv"),
              {"scenario", "split", "mean_cos", "mean_cos_std", "mean_abs_cos", "mean_abs_cos_std", "norm_diff",
               "norm_diff_std", "norm1", "norm1_std", "norm2", "norm2_std", "replicates"},
              rows);
    write_csv(art.add("grad_stats_replicates.csv"),
              {"scenario", "split", "seed", "mean_cos", "std_cos", "mean_abs_cos", "norm_diff", "norm1", "norm2",
               "counted", "skipped"},
              per_rep);
}

void cmd_asymmetry(const ExperimentConfig& cfg, const RunOptions& opts, Artifacts& art, const Logger& log) {
    require_attacks(cfg);
    std::set<double> distinct(cfg.asymmetry.targets.begin(), cfg.asymmetry.targets.end());
    distinct.erase(cfg.asymmetry.base);
    if (distinct.size() < 3)
        throw ConfigError("asymmetry.targets", "need at least 3 magnitudes other than the base for the quadratic fit");
    const auto [train, test] = load_datasets(cfg.dataset);
    const Dataset data = attack_set(test, cfg);
    const auto seeds = cfg.replicate_seeds();

    std::vector<double> magnitudes{cfg.asymmetry.base};
    magnitudes.insert(magnitudes.end(), distinct.begin(), distinct.end());
    // Shared initialization per replicate: every magnitude starts from the same draw.
    std::map<std::pair<double, std::size_t>, Model> models;
    std::vector<std::pair<double, std::size_t>> keys;
    for (double m : magnitudes)
        for (std::size_t r = 0; r < seeds.size(); ++r) keys.emplace_back(m, r);
    std::vector<std::optional<Model>> trained(keys.size());
    parallel_for(keys.size(), opts.workers, [&](std::size_t i) {
        const auto [m, r] = keys[i];
        const std::string tag = "asymmetry m=" + format_double(m) + " " + seed_tag(seeds[r]);
        SingleResult res = train_single_magnitude(Model::initialize(cfg.model, seeds[r]), train, m, cfg.train,
                                                  epoch_logger(log, tag, cfg.train.epochs));
        save_checkpoint(res.model, art.add(magnitude_ckpt(m, seeds[r])));
        trained[i] = std::move(res.model);
    });
    for (std::size_t i = 0; i < keys.size(); ++i) models.emplace(keys[i], std::move(*trained[i]));

    std::vector<std::pair<double, double>> pairs;
    for (double m : distinct) pairs.emplace_back(cfg.asymmetry.base, m);
    const AsymmetryResult res = asymmetry_experiment(
        pairs, [&](double m, std::size_t r) -> const Model& { return models.at({m, r}); }, cfg.attacks.front(), data,
        seeds.size());

    std::vector<std::vector<std::string>> rows;
    std::ostringstream md;
    md << "| Magnitudes | M1 | M2 | M1 to M2 | M2 to M1 |\n|---|---|---|---|---|\n";
    for (const auto& r : res.rows) {
        const MeanStd s1 = mean_std(std::span<const double>(r.success1)), s2 = mean_std(std::span<const double>(r.success2));
        const MeanStd t12 = mean_std(std::span<const std::optional<double>>(r.transfer_12));
        const MeanStd t21 = mean_std(std::span<const std::optional<double>>(r.transfer_21));
        rows.push_back({format_double(r.m1), format_double(r.m2), format_optional(s1.mean), format_optional(s1.std),
                        format_optional(s2.mean), format_optional(s2.std), format_optional(t12.mean),
                        format_optional(t12.std), format_optional(t21.mean), format_optional(t21.std),
                        str(r.success1.size())});
        md << "| " << format_double(r.m1) << " & " << format_double(r.m2) << " | " << format_mean_std(s1) << " | "
           << format_mean_std(s2) << " | " << format_mean_std(t12) << " | " << format_mean_std(t21) << " |\n";
    }
    write_csv(art.add("asymmetry.csv"),
              {"m1", "m2", "M1", "M1_std", "M2", "M2_std", "M1_to_M2", "M1_to_M2_std", "M2_to_M1", "M2_to_M1_std",
               "replicates"},
              rows);
    std::vector<std::vector<std::string>> fit_rows;
    if (res.fit) {
        const QuadraticFit& f = *res.fit;
        fit_rows.push_back({format_double(f.a), format_double(f.b), format_double(f.c), format_double(f.r_squared),
                            format_double(f.adjusted_r_squared), str(f.n), ""});
        md << "\nQuadratic fit of M2 to M1 transfer against m2: R^2 = " << format_double(f.r_squared) << " (n = " << f.n
           << ")\n";
    } else {
        fit_rows.push_back({"", "", "", "", "", "0", res.fit_error});
        md << "\nQuadratic fit unavailable: " << res.fit_error << "\n";
    }
    write_csv(art.add("asymmetry_fit.csv"), {"a", "b", "c", "r_squared", "adjusted_r_squared", "n", "error"}, fit_rows);
    write_text(art.add("asymmetry.md"), md.str());
}

void cmd_detect(const ExperimentConfig& cfg, const RunOptions& opts, Artifacts& art, const Logger& log) {
    require_attacks(cfg);
    const auto loaded = load_pair_scenarios(cfg);
    const Dataset data = attack_set(load_datasets(cfg.dataset).second, cfg);
    const ag::Tensor x = data.all_images();

    struct Job {
        std::size_t scenario, replicate, attack;
        std::vector<double> clean, adversarial;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < loaded.size(); ++s)
        for (std::size_t a = 0; a < cfg.attacks.size(); ++a)
            for (std::size_t r = 0; r < loaded[s].replicates.size(); ++r) jobs.push_back({s, r, a, {}, {}});
    parallel_for(jobs.size(), opts.workers, [&](std::size_t i) {
        Job& j = jobs[i];
        const Replicate& rep = loaded[j.scenario].replicates[j.replicate];
        const Model &m1 = rep.models[0], &m2 = rep.models[1];
        j.clean = detect(m1, m2, x, DetectorConfig{}).score;
        // Adversarials crafted on either model, pooled.
        for (const Model* src : {&m1, &m2}) {
            const AdversarialBatch b = run_attack(*src, x, data.labels, cfg.attacks[j.attack]);
            const Detection d = detect(m1, m2, b.perturbed, DetectorConfig{});
            for (std::size_t s = 0; s < b.size(); ++s)
                if (b.adversarial[s]) j.adversarial.push_back(d.score[s]);
        }
        log("detect " + cfg.scenarios[j.scenario].name + " " + cfg.attacks[j.attack].label() + " " + seed_tag(rep.seed) +
            " adversarial " + str(j.adversarial.size()));
    });

    std::vector<std::vector<std::string>> roc_rows, summary;
    for (std::size_t start = 0; start < jobs.size();) {
        std::size_t end = start;
        std::vector<double> clean, adv;
        while (end < jobs.size() && jobs[end].scenario == jobs[start].scenario && jobs[end].attack == jobs[start].attack) {
            clean.insert(clean.end(), jobs[end].clean.begin(), jobs[end].clean.end());
            adv.insert(adv.end(), jobs[end].adversarial.begin(), jobs[end].adversarial.end());
            ++end;
        }
        const std::string name = cfg.scenarios[jobs[start].scenario].name;
        const std::string label = cfg.attacks[jobs[start].attack].label();
        if (adv.empty()) {
            summary.push_back({name, label, str(clean.size()), "0", format_double(cfg.eval.detector_max_fpr), "", "", ""});
        } else {
            for (const RocPoint& p : roc_curve(clean, adv))
                roc_rows.push_back({name, label, format_double(p.threshold), format_double(p.fpr), format_double(p.tpr)});
            const RocPoint best = tpr_at_fpr(clean, adv, cfg.eval.detector_max_fpr);
            summary.push_back({name, label, str(clean.size()), str(adv.size()), format_double(cfg.eval.detector_max_fpr),
                               format_double(best.threshold), format_double(best.fpr), format_double(best.tpr)});
        }
        start = end;
    }
    write_csv(art.add("detect_roc.csv"), {"scenario", "attack", "threshold", "fpr", "tpr"}, roc_rows);
    write_csv(art.add("detect_summary.csv"),
              {"scenario", "attack", "clean", "adversarial", "max_fpr", "threshold", "fpr", "tpr"}, summary);
}

// RFC-4180 reader for the tables this tool writes.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(cell));
            cell.clear();
            rows.push_back(std::move(row));
            row.clear();
        } else {
            cell += c;
        }
    }
    if (!cell.empty() || !row.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) return "(empty)\n";
    std::ostringstream md;
    const auto line = [&](const std::vector<std::string>& r) {
        md << '|';
        for (const auto& c : r) md << ' ' << c << " |";
        md << '\n';
    };
    line(rows[0]);
    md << '|';
    for (std::size_t i = 0; i < rows[0].size(); ++i) md << "---|";
    md << '\n';
    for (std::size_t i = 1; i < rows.size(); ++i) line(rows[i]);
    return md.str();
}

void cmd_report(const ExperimentConfig& cfg, const RunOptions&, Artifacts& art, const Logger&) {
    if (cfg.report_inputs.empty()) throw ConfigError("report.inputs", "at least one input directory is required");
    static const std::vector<std::string> tables{"grad_stats.csv",    "transfer.csv",   "asymmetry.csv",
                                                 "asymmetry_fit.csv", "attack_summary.csv", "detect_summary.csv"};
    std::ostringstream md;
    md << "# Experiment report\n";
    for (const auto& dir : cfg.report_inputs) {
        std::ifstream in(dir / "manifest.json");
        if (!in) throw std::runtime_error("report input " + dir.string() + " has no manifest");
        const json manifest = json::parse(in);
        md << "\n## " << manifest.at("command").get<std::string>() << ": " << dir.filename().string() << "\n";
        bool any = false;
        for (const auto& t : tables)
            if (fs::exists(dir / t)) {
                md << "\n### " << t << "\n\n" << markdown_table(read_csv(dir / t));
                any = true;
            }
        if (!any) md << "\nNo tables; artifacts: " << manifest.at("outputs").size() << " files.\n";
    }
    write_text(art.add("report.md"), md.str());
}

using Command = void (*)(const ExperimentConfig&, const RunOptions&, Artifacts&, const Logger&);

const std::vector<std::pair<std::string, Command>>& commands() {
    static const std::vector<std::pair<std::string, Command>> table{
        {"train", cmd_train},         {"train-pair", cmd_train_pair}, {"attack", cmd_attack},
        {"transfer", cmd_transfer},   {"grad-stats", cmd_grad_stats}, {"asymmetry", cmd_asymmetry},
        {"detect", cmd_detect},       {"report", cmd_report}};
    return table;
}

}  // namespace

const char* version() { return XFER_VERSION; }

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& [name, fn] : commands()) n.push_back(name);
        return n;
    }();
    return names;
}

std::vector<std::string> run_command(const std::string& command, const ExperimentConfig& cfg, const RunOptions& opts) {
    const auto it = std::find_if(commands().begin(), commands().end(), [&](const auto& c) { return c.first == command; });
    if (it == commands().end()) throw std::invalid_argument("unknown command " + command);
    Artifacts art(opts.out);
    it->second(cfg, opts, art, Logger(opts.quiet));

    std::vector<std::string> outputs = art.sorted();
    const json manifest{{"manifest_version", 1},
                        {"tool", "xfer"},
                        {"version", version()},
                        {"command", command},
                        {"config", to_json(cfg)},
                        {"outputs", outputs}};
    write_text(art.root() / "manifest.json", manifest.dump(2) + "\n");
    outputs.push_back("manifest.json");
    return outputs;
}

int main_entry(int argc, char** argv) {
    CLI::App cli{"Adversarial transferability lab: train gradient-regularized model pairs and measure transfer."};
    cli.set_version_flag("--version", version());
    cli.require_subcommand(1);
    std::string config_path, out_dir;
    std::size_t workers = 1;
    std::optional<std::uint64_t> seed_offset;
    bool quiet = false;
    static const std::map<std::string, std::string> about{
        {"train", "train single models, optionally toward an input-gradient magnitude"},
        {"train-pair", "train model pairs with a gradient-angle penalty"},
        {"attack", "run the configured attacks on every model of the scenarios"},
        {"transfer", "transfer rates between the members of each pair"},
        {"grad-stats", "cosine and norm statistics of the pairs' input gradients"},
        {"asymmetry", "transfer asymmetry across input-gradient magnitudes"},
        {"detect", "ROC of the pair-agreement detector"},
        {"report", "collect result tables into one markdown report"}};
    for (const auto& name : command_names()) {
        CLI::App* sub = cli.add_subcommand(name, about.at(name));
        sub->add_option("--config", config_path, "experiment config JSON or a manifest.json to rerun")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--workers", workers, "worker threads for replicate runs")->check(CLI::PositiveNumber);
        sub->add_option("--seed-offset", seed_offset, "added to every replicate seed");
        sub->add_flag("--quiet", quiet, "suppress progress lines");
    }
    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return cli.exit(e);
    }
    const std::string command = cli.get_subcommands().front()->get_name();
    try {
        ExperimentConfig cfg = load_config(config_path);
        if (seed_offset) cfg.seed_offset = *seed_offset;
        const auto outputs = run_command(command, cfg, RunOptions{out_dir, workers, quiet});
        if (!quiet) std::cerr << command << ": wrote " << outputs.size() << " files to " << out_dir << '\n';
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace xfer::app
