#include "seqmeta/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "seqmeta/eval.hpp"
#include "seqmeta/parallel.hpp"
#include "seqmeta/serialization.hpp"
#include "seqmeta/svg_plot.hpp"
#include "seqmeta/text_io.hpp"

namespace seqmeta {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

Error config_error(const std::string& what) { return Error(ErrorKind::parse, "config: " + what); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw config_error(where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw config_error(where + ": unknown key \"" + key + "\"");
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(where + ": bad \"" + key + "\": " + e.what());
    }
}

std::pair<double, double> get_range(const json& j, const char* key, std::pair<double, double> fallback,
                                    const std::string& where) {
    const auto v = get_or<std::vector<double>>(j, key, {fallback.first, fallback.second}, where);
    if (v.size() != 2 || !(v[0] <= v[1])) throw config_error(where + ": \"" + key + "\" must be [min, max]");
    return {v[0], v[1]};
}

DecayModel parse_decay_model(const std::string& name) {
    if (name == "aggregate_F") return DecayModel::aggregate_F;
    if (name == "single_task_f") return DecayModel::single_task_f;
    throw config_error("unknown fit model \"" + name + "\"");
}

using PoolCache = std::map<std::pair<std::string, std::size_t>, std::shared_ptr<const ClassPool>>;

TaskDistribution build_distribution(const json& spec, const fs::path& base_dir, PoolCache* cache) {
    const std::string where = "data";
    if (!spec.is_object() || !spec.contains("kind")) throw config_error(where + ": distribution needs a \"kind\"");
    const auto kind = spec.at("kind").get<std::string>();
    if (kind == "synthetic_glyphs") {
        check_keys(spec,
                   {"kind", "classes", "image_side", "samples_per_class", "strokes", "jitter", "seed", "class_begin",
                    "class_end", "ways", "train_per_class", "test_per_class"},
                   where);
        SyntheticConfig c;
        c.glyphs.class_count = get_or<std::size_t>(spec, "classes", c.glyphs.class_count, where);
        c.glyphs.image_side = get_or<std::size_t>(spec, "image_side", c.glyphs.image_side, where);
        c.glyphs.samples_per_class = get_or<std::size_t>(spec, "samples_per_class", c.glyphs.samples_per_class, where);
        c.glyphs.strokes = get_or<std::size_t>(spec, "strokes", c.glyphs.strokes, where);
        c.glyphs.jitter = get_or<double>(spec, "jitter", c.glyphs.jitter, where);
        c.glyphs.seed = get_or<std::uint64_t>(spec, "seed", c.glyphs.seed, where);
        c.class_begin = get_or<std::size_t>(spec, "class_begin", 0, where);
        c.class_end = get_or<std::size_t>(spec, "class_end", 0, where);
        c.ways = get_or<std::size_t>(spec, "ways", c.ways, where);
        c.train_per_class = get_or<std::size_t>(spec, "train_per_class", c.train_per_class, where);
        c.test_per_class = get_or<std::size_t>(spec, "test_per_class", c.test_per_class, where);
        return make_synthetic_distribution(c);
    }
    if (kind == "image_classes") {
        check_keys(spec,
                   {"kind", "root", "image_side", "class_begin", "class_end", "ways", "train_per_class",
                    "test_per_class"},
                   where);
        if (!spec.contains("root")) throw config_error(where + ": image_classes needs \"root\"");
        fs::path root = spec.at("root").get<std::string>();
        if (root.is_relative()) root = base_dir / root;
        const auto side = get_or<std::size_t>(spec, "image_side", 28, where);
        std::shared_ptr<const ClassPool> pool;
        const auto key = std::make_pair(fs::weakly_canonical(root).string(), side);
        if (cache && cache->count(key)) {
            pool = cache->at(key);
        } else {
            pool = load_image_classes(root, side);
            if (cache) (*cache)[key] = pool;
        }
        const auto begin = get_or<std::size_t>(spec, "class_begin", 0, where);
        const auto end = get_or<std::size_t>(spec, "class_end", pool->class_count(), where);
        return make_pool_distribution(TaskKind::image_classes, pool, begin, end,
                                      get_or<std::size_t>(spec, "ways", 5, where),
                                      get_or<std::size_t>(spec, "train_per_class", 1, where),
                                      get_or<std::size_t>(spec, "test_per_class", 1, where));
    }
    if (kind == "sine_regression") {
        check_keys(spec, {"kind", "amplitude", "phase", "x", "train_per_class", "test_per_class"}, where);
        SyntheticConfig c;
        c.kind = TaskKind::sine_regression;
        std::tie(c.sine.amplitude_min, c.sine.amplitude_max) =
            get_range(spec, "amplitude", {c.sine.amplitude_min, c.sine.amplitude_max}, where);
        std::tie(c.sine.phase_min, c.sine.phase_max) =
            get_range(spec, "phase", {c.sine.phase_min, c.sine.phase_max}, where);
        std::tie(c.sine.x_min, c.sine.x_max) = get_range(spec, "x", {c.sine.x_min, c.sine.x_max}, where);
        c.train_per_class = get_or<std::size_t>(spec, "train_per_class", c.train_per_class, where);
        c.test_per_class = get_or<std::size_t>(spec, "test_per_class", c.test_per_class, where);
        return make_synthetic_distribution(c);
    }
    throw config_error(where + ": unknown distribution kind \"" + kind + "\"");
}

void check_paths(const json& spec, const fs::path& base_dir) {
    if (spec.value("kind", "") != "image_classes" || !spec.contains("root")) return;
    fs::path root = spec.at("root").get<std::string>();
    if (root.is_relative()) root = base_dir / root;
    if (!fs::is_directory(root)) throw Error(ErrorKind::io, "config: image root " + root.string() + " does not exist");
}

void check_compatible(const Network& net, const TaskDistribution& dist, const std::string& which) {
    if (net.input_size() != dist.input_size())
        throw ShapeError("network input size for " + which + " data", dist.input_size(), net.input_size());
    if (net.output_size() != dist.output_size())
        throw ShapeError("network output size for " + which + " data", dist.output_size(), net.output_size());
    if (net.spec().loss != dist.loss_kind())
        throw invalid_argument("network loss " + to_string(net.spec().loss) + " does not match " + which +
                               " data (" + to_string(dist.loss_kind()) + ")");
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

void write_log_csv(const fs::path& path, const std::vector<double>& log) {
    std::string text = "iteration,objective\n";
    for (std::size_t k = 0; k < log.size(); ++k) text += std::to_string(k + 1) + "," + format_double(log[k]) + "\n";
    write_text_file(path, text);
}

std::vector<double> range_1_to(std::size_t n) {
    std::vector<double> xs(n);
    for (std::size_t k = 0; k < n; ++k) xs[k] = static_cast<double>(k + 1);
    return xs;
}

std::string curves_svg(const std::vector<double>& mean_prev, const std::vector<double>& first, const std::string& title) {
    PlotSpec p;
    p.title = title;
    p.x_label = "tasks trained (t)";
    p.y_label = "accuracy";
    p.y_range = std::make_pair(0.0, 1.0);
    p.x_range = std::make_pair(0.5, static_cast<double>(mean_prev.size()) + 0.5);
    p.series.push_back({"mean previous", range_1_to(mean_prev.size()), mean_prev, true, true});
    p.series.push_back({"first task", range_1_to(first.size()), first, true, false});
    return render_svg(p);
}

void write_curves(const fs::path& dir, const AccuracyMatrix& mean, const std::string& title) {
    const auto mp = mean_prev_accuracy(mean);
    const auto first = first_task_curve(mean);
    std::string csv = "t,mean_prev,first_task\n";
    for (std::size_t t = 0; t < mp.size(); ++t)
        csv += std::to_string(t + 1) + "," + format_double(mp[t]) + "," + format_double(first[t]) + "\n";
    write_text_file(dir / "curves.csv", csv);
    write_text_file(dir / "curves.svg", curves_svg(mp, first, title));
}

FitProblem problem_for(const AccuracyMatrix& m, DecayModel model, double chance) {
    if (model == DecayModel::aggregate_F) return curve_problem(mean_prev_accuracy(m), chance);
    FitProblem p;
    p.model = DecayModel::single_task_f;
    p.task_index = 1;
    p.chance = chance;
    const auto first = first_task_curve(m);
    for (std::size_t t = 0; t < first.size(); ++t) p.observations.push_back({t + 1, first[t]});
    return p;
}

std::string fit_name(const FitInput& in, std::optional<std::size_t> L, std::size_t index,
                     std::set<std::string>& used) {
    std::string base;
    if (L) {
        base = "L" + std::to_string(*L);
    } else {
        base = in.csv.parent_path().filename().string();
        if (base.empty() || base == "." || base == "eval") base = in.csv.stem().string();
        for (char& c : base)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    std::string name = base;
    if (used.count(name)) name = base + "_" + std::to_string(index + 1);
    used.insert(name);
    return name;
}

std::string fixed(double v, int digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream o;
    o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return o.str();
}

}  // namespace

TaskDistribution make_distribution(const json& spec, const fs::path& base_dir) {
    return build_distribution(spec, base_dir, nullptr);
}

TaskSequence evaluation_sequence(const TaskDistribution& dist, std::size_t T, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x65766131));
    return sample_sequence(dist, T, rng);
}

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base_dir) {
    check_keys(doc, {"network", "data", "meta", "eval", "fit", "output", "seed"}, "top level");
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    if (!doc.contains("network")) throw config_error("missing \"network\"");
    cfg.network = network_spec_from_json(doc.at("network"));
    Network{cfg.network};  // shape validation

    if (!doc.contains("data")) throw config_error("missing \"data\"");
    const auto& data = doc.at("data");
    check_keys(data, {"meta_train", "meta_test"}, "data");
    if (!data.contains("meta_train") || !data.contains("meta_test"))
        throw config_error("data needs both \"meta_train\" and \"meta_test\"");
    cfg.meta_train_data = data.at("meta_train");
    cfg.meta_test_data = data.at("meta_test");
    check_paths(cfg.meta_train_data, base_dir);
    check_paths(cfg.meta_test_data, base_dir);

    if (doc.contains("meta")) cfg.meta = meta_config_from_json(doc.at("meta"));
    cfg.meta.validate();

    const json ev = doc.value("eval", json::object());
    check_keys(ev, {"T", "runs", "seeds", "head_mode", "inner_lr", "inner_iterations"}, "eval");
    cfg.eval_tasks = get_or<std::size_t>(ev, "T", cfg.eval_tasks, "eval");
    if (cfg.eval_tasks == 0) throw config_error("eval.T must be positive");
    cfg.eval_seeds = get_or<std::vector<std::uint64_t>>(ev, "seeds", {}, "eval");
    if (ev.contains("runs")) {
        const auto runs = get_or<std::size_t>(ev, "runs", 0, "eval");
        if (cfg.eval_seeds.empty())
            for (std::size_t s = 1; s <= runs; ++s) cfg.eval_seeds.push_back(s);
        else if (runs != cfg.eval_seeds.size())
            throw config_error("eval.runs disagrees with the length of eval.seeds");
    }
    if (cfg.eval_seeds.empty()) throw config_error("eval needs a non-empty \"seeds\" list or positive \"runs\"");
    cfg.eval_head_mode = parse_head_mode(get_or<std::string>(ev, "head_mode", "single", "eval"));
    if (ev.contains("inner_lr")) cfg.eval_inner_lr = get_or<double>(ev, "inner_lr", 0.0, "eval");
    if (ev.contains("inner_iterations"))
        cfg.eval_inner_iterations = get_or<std::size_t>(ev, "inner_iterations", 0, "eval");
    if (cfg.eval_inner_lr && !(*cfg.eval_inner_lr >= 0.0)) throw config_error("eval.inner_lr must be >= 0");

    const json fit = doc.value("fit", json::object());
    check_keys(fit, {"model", "chance"}, "fit");
    cfg.fit_model = parse_decay_model(get_or<std::string>(fit, "model", "aggregate_F", "fit"));
    if (fit.contains("chance")) {
        cfg.fit_chance = get_or<double>(fit, "chance", 0.0, "fit");
        if (!(*cfg.fit_chance >= 0.0 && *cfg.fit_chance < 1.0)) throw config_error("fit.chance must lie in [0, 1)");
    }

    const json out = doc.value("output", json::object());
    check_keys(out, {"directory"}, "output");
    fs::path dir = get_or<std::string>(out, "directory", "runs", "output");
    cfg.output_dir = dir.is_relative() ? base_dir / dir : dir;
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0, "top level");
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    const std::string text = read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
    return parse_experiment_config(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

ordered_json canonical_config(const ExperimentConfig& cfg) {
    ordered_json j;
    j["network"] = network_spec_to_json(cfg.network);
    j["data"]["meta_train"] = ordered_json::parse(cfg.meta_train_data.dump());
    j["data"]["meta_test"] = ordered_json::parse(cfg.meta_test_data.dump());
    j["meta"] = meta_config_to_json(cfg.meta);
    ordered_json ev;
    ev["T"] = cfg.eval_tasks;
    ev["seeds"] = cfg.eval_seeds;
    ev["head_mode"] = to_string(cfg.eval_head_mode);
    if (cfg.eval_inner_lr) ev["inner_lr"] = *cfg.eval_inner_lr;
    if (cfg.eval_inner_iterations) ev["inner_iterations"] = *cfg.eval_inner_iterations;
    j["eval"] = ev;
    ordered_json fit;
    fit["model"] = to_string(cfg.fit_model);
    if (cfg.fit_chance) fit["chance"] = *cfg.fit_chance;
    j["fit"] = fit;
    j["seed"] = cfg.seed;
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(canonical_config(cfg).dump()); }

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
    if (o.out) cfg.output_dir = *o.out;
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.eval_seeds = {*o.seed};
    }
    if (o.sequence_length) {
        if (*o.sequence_length == 0) throw invalid_argument("sequence length must be positive");
        cfg.meta.sequence_length = *o.sequence_length;
    }
    if (o.head_mode) {
        cfg.meta.head_mode = *o.head_mode;
        cfg.eval_head_mode = *o.head_mode;
    }
    if (o.objective) cfg.meta.objective = *o.objective;
}

int cmd_meta_train(const ExperimentConfig& cfg, std::size_t workers, StageStreams io) {
    const fs::path dir = cfg.output_dir / "init";
    std::vector<double> log;
    try {
        const Network net(cfg.network);
        PoolCache cache;
        const auto dist = build_distribution(cfg.meta_train_data, cfg.base_dir, &cache);
        check_compatible(net, dist, "meta_train");
        fs::create_directories(dir);

        MetaTrainOptions opts;
        opts.workers = std::max<std::size_t>(1, workers);
        const std::size_t every = std::max<std::size_t>(1, cfg.meta.meta_iterations / 20);
        opts.on_iteration = [&](std::size_t index, double obj) {
            log.push_back(obj);
            const std::size_t it = index + 1;
            if (it % every == 0 || it == cfg.meta.meta_iterations)
                io.out << "iteration " << it << "/" << cfg.meta.meta_iterations << " objective " << obj << "\n";
        };
        const auto result = meta_train(net, dist, cfg.meta, cfg.seed, opts);

        save_params(dir / "init.bin", result.params);
        ordered_json meta;
        meta["network"] = network_spec_to_json(cfg.network);
        meta["meta"] = meta_config_to_json(cfg.meta);
        meta["seed"] = cfg.seed;
        meta["param_count"] = net.param_count();
        meta["config_hash"] = config_hash(cfg);
        write_text_file(dir / "init.json", dump(meta));
        write_log_csv(dir / "log.csv", result.objective_log);
        io.out << "wrote " << (dir / "init.bin").string() << "\n";
        return 0;
    } catch (const MetaTrainError& e) {
        fs::create_directories(dir);
        write_log_csv(dir / "log.csv", e.partial_log());
        io.err << "meta-train failed: " << e.what() << "\npartial log: " << (dir / "log.csv").string() << "\n";
        return 1;
    } catch (const Error& e) {
        io.err << "meta-train failed (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return 1;
    }
}

int cmd_evaluate(const ExperimentConfig& cfg, const fs::path& init_path, std::size_t workers, StageStreams io) {
    if (!fs::exists(init_path)) {
        io.err << "evaluate: initialization file " << init_path.string() << " does not exist\n";
        return 1;
    }
    try {
        const Network net(cfg.network);
        const auto init = load_params(init_path);
        if (init.size() != net.param_count())
            throw ShapeError("parameter count of " + init_path.string(), net.param_count(), init.size());
        PoolCache cache;
        const auto dist = build_distribution(cfg.meta_test_data, cfg.base_dir, &cache);
        check_compatible(net, dist, "meta_test");
        if (dist.loss_kind() != LossKind::cross_entropy)
            throw invalid_argument("sequential evaluation needs a classification distribution");

        // The L label comes from the run that produced the init when known.
        std::size_t L = cfg.meta.sequence_length;
        const auto init_json = init_path.parent_path() / "init.json";
        if (fs::exists(init_json)) {
            const auto j = json::parse(read_text_file(init_json), nullptr, false);
            if (j.is_object() && j.contains("meta")) L = j["meta"].value("sequence_length", L);
        }
        const std::string hash = config_hash(cfg);
        const std::size_t k = cfg.eval_inner_iterations.value_or(cfg.meta.inner_iterations);
        const double lr = cfg.eval_inner_lr.value_or(cfg.meta.inner_lr);
        const fs::path dir = cfg.output_dir / "eval";

        std::vector<EvalResult> results(cfg.eval_seeds.size());
        parallel_for(results.size(), std::max<std::size_t>(1, workers), [&](std::size_t r) {
            const auto seed = cfg.eval_seeds[r];
            const auto seq = evaluation_sequence(dist, cfg.eval_tasks, seed);
            results[r] = sequential_evaluate(net, init, seq, k, lr, cfg.eval_head_mode);
            const auto seed_dir = dir / std::to_string(seed);
            fs::create_directories(seed_dir);
            write_matrix_csv(seed_dir / "matrix.csv", results[r].matrix);
            write_matrix_sidecar(seed_dir / "matrix.json",
                                 MatrixSidecar{cfg.eval_tasks, dist.ways, seed, hash, L, to_string(cfg.eval_head_mode)});
        });

        std::vector<AccuracyMatrix> matrices;
        std::size_t failures = 0;
        for (std::size_t r = 0; r < results.size(); ++r) {
            for (const auto& f : results[r].failures) {
                io.err << "seed " << cfg.eval_seeds[r] << ": cell (" << f.t << "," << f.i << ") failed: " << f.message
                       << "\n";
                ++failures;
            }
            matrices.push_back(results[r].matrix);
        }
        const auto mean = average_matrices(matrices);
        write_matrix_csv(dir / "mean_matrix.csv", mean);
        write_matrix_sidecar(dir / "mean_matrix.json",
                             MatrixSidecar{cfg.eval_tasks, dist.ways, std::nullopt, hash, L,
                                           to_string(cfg.eval_head_mode)});
        if (failures > 0) {
            io.err << "evaluate: " << failures << " cells failed; curves not written\n";
            return 1;
        }
        write_curves(dir, mean,
                     "L=" + std::to_string(L) + ", " + to_string(cfg.eval_head_mode) + " head, " +
                         std::to_string(matrices.size()) + " seeds");
        io.out << "wrote " << dir.string() << " (" << matrices.size() << " seeds)\n";
        return 0;
    } catch (const Error& e) {
        io.err << "evaluate failed (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return 1;
    }
}

FitInput parse_fit_input(const std::string& arg) {
    // "<L>=<path>"; anything else is a plain path.
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0) return {arg, std::nullopt};
    const std::string_view head(arg.data(), eq);
    if (!std::all_of(head.begin(), head.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return {arg, std::nullopt};
    const auto L = parse_int(head);
    if (!L || *L <= 0) throw invalid_argument("bad sequence-length label in \"" + arg + "\"");
    return {arg.substr(eq + 1), static_cast<std::size_t>(*L)};
}

int cmd_fit_decay(const std::vector<FitInput>& inputs, std::optional<double> chance, DecayModel model,
                  const fs::path& out_dir, StageStreams io) {
    if (inputs.empty()) {
        io.err << "fit-decay: no input matrices\n";
        return 2;
    }
    try {
        const fs::path dir = out_dir / "fits";
        std::set<std::string> used;
        std::vector<double> Ls, taus;
        for (std::size_t n = 0; n < inputs.size(); ++n) {
            const auto& in = inputs[n];
            if (!fs::exists(in.csv)) throw Error(ErrorKind::io, in.csv.string() + ": no such file");
            const auto m = read_matrix_csv(in.csv);
            const auto side = read_matrix_sidecar(in.csv);
            const auto L = in.sequence_length ? in.sequence_length : (side ? side->sequence_length : std::nullopt);
            double c = 0.0;
            if (chance) {
                c = *chance;
            } else if (m.ways() > 0) {
                c = m.chance();
            } else {
                throw invalid_argument(in.csv.string() + ": chance level unknown (no sidecar); pass --chance");
            }
            const auto fit = nls_fit(problem_for(m, model, c));
            ordered_json j = fit_to_json(fit);
            j["tau_identifiable"] = fit.tau_identifiable;
            j["model"] = to_string(model);
            j["source"] = in.csv.string();
            if (L) j["L"] = *L;
            j["tasks"] = m.tasks();
            const auto name = fit_name(in, L, n, used);
            fs::create_directories(dir);
            write_text_file(dir / (name + ".json"), dump(j));
            io.out << name << ": a=" << fit.a << " tau=" << fit.tau << " sse=" << fit.residual_sse
                   << (fit.converged ? "" : " (not converged)") << "\n";
            if (L) {
                Ls.push_back(static_cast<double>(*L));
                taus.push_back(fit.tau);
            }
        }
        if (Ls.size() >= 3) {
            const auto c = pearson_r(Ls, taus);
            ordered_json j = correlation_to_json(c);
            j["L"] = Ls;
            j["tau"] = taus;
            write_text_file(dir / "correlation.json", dump(j));
            io.out << "pearson r=" << c.r << " p=" << c.p << " n=" << c.n << "\n";
        } else if (Ls.size() == 2) {
            io.out << "two labelled inputs; correlation needs at least three\n";
        }
        return 0;
    } catch (const Error& e) {
        io.err << "fit-decay failed (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return 1;
    }
}

int cmd_report(const fs::path& dir, StageStreams io) {
    if (!fs::is_directory(dir)) {
        io.err << "report: " << dir.string() << " is not a directory\n";
        return 1;
    }
    struct Run {
        std::string name;
        fs::path csv;
        AccuracyMatrix mean;
        std::optional<MatrixSidecar> side;
        std::size_t seeds = 0;
    };
    std::vector<Run> runs;
    std::vector<std::string> missing;
    // A run directory holds init/ and/or eval/; both are produced by earlier stages.
    std::set<fs::path> run_dirs;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        const auto name = entry.path().filename();
        if ((name == "init" && fs::exists(entry.path() / "init.bin")) ||
            (name == "eval" && fs::exists(entry.path().parent_path() / "init")) ||
            (name == "eval" && fs::exists(entry.path() / "mean_matrix.csv")))
            run_dirs.insert(entry.path().parent_path());
    }
    for (const auto& run_dir : run_dirs) {
        Run r;
        r.name = fs::relative(run_dir, dir).string();
        if (r.name.empty()) r.name = ".";
        r.csv = run_dir / "eval" / "mean_matrix.csv";
        if (!fs::exists(r.csv)) {
            missing.push_back(r.name + ": " + fs::relative(r.csv, dir).string() + " not found");
            continue;
        }
        try {
            r.mean = read_matrix_csv(r.csv);
            r.side = read_matrix_sidecar(r.csv);
        } catch (const Error& e) {
            missing.push_back(r.name + ": " + e.what());
            continue;
        }
        for (const auto& e : fs::directory_iterator(r.csv.parent_path()))
            if (e.is_directory() && fs::exists(e.path() / "matrix.csv")) ++r.seeds;
        runs.push_back(std::move(r));
    }

    std::ostringstream md;
    md << "# Forgetting report\n\nGenerated " << utc_timestamp() << " from `" << dir.string() << "`.\n\n";
    const auto list_missing = [&] {
        if (missing.empty()) return;
        md << "## Missing artifacts\n\n";
        for (const auto& m : missing) {
            md << "- " << m << "\n";
            io.err << "report: " << m << "\n";
        }
        md << "\n";
    };
    if (runs.empty()) {
        if (missing.empty()) {
            md << "no runs found\n";
            io.out << "no runs found\n";
        } else {
            md << "No complete runs.\n\n";
            list_missing();
        }
        write_text_file(dir / "report.md", md.str());
        return missing.empty() ? 0 : 1;
    }

    const fs::path assets = dir / "report";
    fs::create_directories(assets);
    struct Row {
        std::string name;
        std::optional<std::size_t> L;
        std::string head_mode;
        std::optional<DecayFit> fit;
    };
    std::vector<Row> rows;
    md << "## Runs\n\n";
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& r = runs[k];
        Row row{r.name, r.side ? r.side->sequence_length : std::nullopt, r.side ? r.side->head_mode : "", {}};
        md << "### " << r.name << "\n\n";
        md << "- tasks per sequence: " << r.mean.tasks() << "\n- seeds: " << r.seeds << "\n";
        if (row.L) md << "- meta-training sequence length: " << *row.L << "\n";
        if (!row.head_mode.empty()) md << "- head mode: " << row.head_mode << "\n";
        if (!r.mean.absent_cells().empty()) {
            md << "- " << r.mean.absent_cells().size() << " absent cells; no curves or fit\n\n";
            rows.push_back(row);
            continue;
        }
        const auto mp = mean_prev_accuracy(r.mean);
        const auto first = first_task_curve(r.mean);
        const std::string svg = "run_" + std::to_string(k + 1) + "_curves.svg";
        write_text_file(assets / svg, curves_svg(mp, first, r.name));
        const double chance = r.mean.ways() > 0 ? r.mean.chance() : 0.0;
        try {
            row.fit = nls_fit(curve_problem(mp, chance));
            md << "- fit: a = " << fixed(row.fit->a, 4) << ", tau = " << fixed(row.fit->tau, 3)
               << ", residual SSE = " << row.fit->residual_sse << "\n";
        } catch (const Error& e) {
            md << "- fit failed: " << e.what() << "\n";
        }
        md << "\n![curves for " << r.name << "](report/" << svg << ")\n\n";
        rows.push_back(row);
    }

    md << "## Time constants\n\n| run | L | head mode | a | tau | residual SSE |\n|---|---|---|---|---|---|\n";
    std::vector<double> Ls, taus;
    for (const auto& row : rows) {
        md << "| " << row.name << " | " << (row.L ? std::to_string(*row.L) : "-") << " | "
           << (row.head_mode.empty() ? "-" : row.head_mode) << " | ";
        if (row.fit) {
            md << fixed(row.fit->a, 4) << " | " << fixed(row.fit->tau, 3) << " | " << row.fit->residual_sse << " |\n";
            if (row.L) {
                Ls.push_back(static_cast<double>(*row.L));
                taus.push_back(row.fit->tau);
            }
        } else {
            md << "- | - | - |\n";
        }
    }
    md << "\n";
    if (Ls.size() >= 2) {
        PlotSpec p;
        p.title = "fitted time constant vs training sequence length";
        p.x_label = "L";
        p.y_label = "tau";
        p.series.push_back({"runs", Ls, taus, false, true});
        write_text_file(assets / "tau_vs_L.svg", render_svg(p));
        md << "![tau vs L](report/tau_vs_L.svg)\n\n";
        if (Ls.size() >= 3) {
            try {
                const auto c = pearson_r(Ls, taus);
                md << "Pearson r = " << fixed(c.r, 4) << ", p = " << c.p << ", n = " << c.n << "\n";
            } catch (const Error& e) {
                md << "Correlation undefined: " << e.what() << "\n";
            }
        }
    }
    list_missing();
    write_text_file(dir / "report.md", md.str());
    io.out << "wrote " << (dir / "report.md").string() << " (" << runs.size() << " runs)\n";
    return missing.empty() ? 0 : 1;
}

}  // namespace seqmeta
