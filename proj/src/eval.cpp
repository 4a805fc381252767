#include "seqmeta/eval.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "seqmeta/errors.hpp"
#include "seqmeta/text_io.hpp"

namespace seqmeta {

namespace {

std::string cell_list(const std::vector<std::pair<std::size_t, std::size_t>>& cells) {
    std::string out;
    for (std::size_t k = 0; k < cells.size() && k < 20; ++k) {
        if (!out.empty()) out += ", ";
        out += "(" + std::to_string(cells[k].first) + "," + std::to_string(cells[k].second) + ")";
    }
    if (cells.size() > 20) out += ", ... (" + std::to_string(cells.size()) + " total)";
    return out;
}

void require_complete(const AccuracyMatrix& m) {
    const auto absent = m.absent_cells();
    if (!absent.empty()) throw invalid_argument("accuracy matrix has absent cells: " + cell_list(absent));
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    auto p = csv_path;
    p.replace_extension(".json");
    return p;
}

}  // namespace

AccuracyMatrix::AccuracyMatrix(std::size_t tasks, std::size_t ways)
    : tasks_(tasks), ways_(ways), cells_(tasks * (tasks + 1) / 2) {
    if (tasks == 0) throw invalid_argument("accuracy matrix needs at least one task");
}

std::size_t AccuracyMatrix::index(std::size_t t, std::size_t i) const {
    if (t < 1 || t > tasks_ || i < 1 || i > t)
        throw invalid_argument("accuracy cell (" + std::to_string(t) + "," + std::to_string(i) +
                               ") outside the lower triangle of a " + std::to_string(tasks_) + "-task matrix");
    return (t - 1) * t / 2 + (i - 1);
}

std::optional<double> AccuracyMatrix::get(std::size_t t, std::size_t i) const { return cells_[index(t, i)]; }

double AccuracyMatrix::at(std::size_t t, std::size_t i) const {
    const auto v = get(t, i);
    if (!v) throw invalid_argument("accuracy cell (" + std::to_string(t) + "," + std::to_string(i) + ") is absent");
    return *v;
}

void AccuracyMatrix::set(std::size_t t, std::size_t i, double accuracy) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw invalid_argument("accuracy must lie in [0, 1]");
    cells_[index(t, i)] = accuracy;
}

std::vector<std::pair<std::size_t, std::size_t>> AccuracyMatrix::absent_cells() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t t = 1; t <= tasks_; ++t)
        for (std::size_t i = 1; i <= t; ++i)
            if (!cells_[index(t, i)]) out.emplace_back(t, i);
    return out;
}

std::size_t AccuracyMatrix::occupied() const {
    return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); }));
}

double accuracy_probe(const Network& net, const ParamVector& params, const Batch& batch) {
    return net.accuracy(params, batch);
}

EvalResult sequential_evaluate(const Network& net, const ParamVector& init, const TaskSequence& sequence,
                               std::size_t k, double lr, HeadMode mode) {
    const std::size_t T = sequence.size();
    if (T == 0) throw invalid_argument("empty evaluation sequence");
    if (init.size() != net.param_count()) throw ShapeError("initial parameter count", net.param_count(), init.size());
    if (net.spec().loss != LossKind::cross_entropy)
        throw invalid_argument("sequential evaluation requires a classification network");
    const std::size_t ways = sequence.tasks.front().ways;

    EvalResult result{AccuracyMatrix(T, ways), {}};
    const bool multi = mode == HeadMode::multi;
    const std::size_t head_size = multi ? net.head_param_count() : 0;
    if (multi && head_size == 0) throw SpecError(0, 0, "multi-head evaluation requires a separable output head");
    const std::size_t trunk_size = init.size() - head_size;
    const ParamVector head_init = multi ? slice(init, trunk_size, head_size) : ParamVector{};
    HeadBank bank{multi ? slice(init, 0, trunk_size) : ParamVector{}, head_size, {}};

    ParamVector params = init;
    for (std::size_t t = 1; t <= T; ++t) {
        const Task& task = sequence.tasks[t - 1];
        try {
            if (multi) {
                bank = add_head(std::move(bank), head_init);
                params = inner_train(net, bank.assemble(t - 1), task, k, lr);
                bank.trunk = slice(params, 0, trunk_size);
                bank.heads.back() = slice(params, trunk_size, head_size);
            } else {
                params = inner_train(net, params, task, k, lr);
            }
        } catch (const Error& e) {
            result.failures.push_back({t, t, std::string("training on task ") + std::to_string(t) + ": " + e.what()});
            return result;
        }
        for (std::size_t i = 1; i <= t; ++i) {
            try {
                const Batch& test = sequence.tasks[i - 1].test;
                const double acc =
                    multi ? accuracy_probe(net, bank.assemble(i - 1), test) : accuracy_probe(net, params, test);
                result.matrix.set(t, i, acc);
            } catch (const Error& e) {
                result.failures.push_back({t, i, e.what()});
            }
        }
    }
    return result;
}

std::vector<double> mean_prev_accuracy(const AccuracyMatrix& m) {
    require_complete(m);
    std::vector<double> curve(m.tasks());
    for (std::size_t t = 1; t <= m.tasks(); ++t) {
        double sum = 0.0;
        for (std::size_t i = 1; i <= t; ++i) sum += m.at(t, i);
        curve[t - 1] = sum / static_cast<double>(t);
    }
    return curve;
}

std::vector<double> first_task_curve(const AccuracyMatrix& m) {
    std::vector<std::pair<std::size_t, std::size_t>> absent;
    std::vector<double> curve(m.tasks());
    for (std::size_t t = 1; t <= m.tasks(); ++t) {
        const auto v = m.get(t, 1);
        if (!v) absent.emplace_back(t, 1);
        curve[t - 1] = v.value_or(0.0);
    }
    if (!absent.empty()) throw invalid_argument("accuracy matrix has absent cells: " + cell_list(absent));
    return curve;
}

std::vector<double> diagonal_curve(const AccuracyMatrix& m) {
    std::vector<std::pair<std::size_t, std::size_t>> absent;
    std::vector<double> curve(m.tasks());
    for (std::size_t t = 1; t <= m.tasks(); ++t) {
        const auto v = m.get(t, t);
        if (!v) absent.emplace_back(t, t);
        curve[t - 1] = v.value_or(0.0);
    }
    if (!absent.empty()) throw invalid_argument("accuracy matrix has absent cells: " + cell_list(absent));
    return curve;
}

AccuracyMatrix average_matrices(const std::vector<AccuracyMatrix>& matrices) {
    if (matrices.empty()) throw invalid_argument("no matrices to average");
    const auto& first = matrices.front();
    for (const auto& m : matrices) {
        if (m.tasks() != first.tasks()) throw ShapeError("matrix task count", first.tasks(), m.tasks());
        if (m.ways() != first.ways()) throw ShapeError("matrix ways", first.ways(), m.ways());
    }
    AccuracyMatrix out(first.tasks(), first.ways());
    for (std::size_t t = 1; t <= first.tasks(); ++t)
        for (std::size_t i = 1; i <= t; ++i) {
            double sum = 0.0;
            bool complete = true;
            for (const auto& m : matrices) {
                const auto v = m.get(t, i);
                if (!v) {
                    complete = false;
                    break;
                }
                sum += *v;
            }
            if (complete) out.set(t, i, std::clamp(sum / static_cast<double>(matrices.size()), 0.0, 1.0));
        }
    return out;
}

void write_matrix_csv(const std::filesystem::path& path, const AccuracyMatrix& m) {
    std::ostringstream out;
    out << "t,i,accuracy\n";
    for (std::size_t t = 1; t <= m.tasks(); ++t)
        for (std::size_t i = 1; i <= t; ++i)
            if (const auto v = m.get(t, i)) out << t << ',' << i << ',' << format_double(*v) << '\n';
    write_text_file(path, out.str());
}

AccuracyMatrix read_matrix_csv(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    struct Row {
        std::size_t t, i;
        double acc;
    };
    std::vector<Row> rows;
    const auto fail = [&](const std::string& why) {
        return Error(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (split_csv_line(line) != std::vector<std::string>{"t", "i", "accuracy"})
                throw fail("expected header t,i,accuracy");
            continue;
        }
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) throw fail("expected 3 fields, got " + std::to_string(fields.size()));
        const auto t = parse_int(fields[0]);
        const auto i = parse_int(fields[1]);
        const auto acc = parse_double(fields[2]);
        if (!t || !i || !acc) throw fail("unparseable value");
        if (*t < 1 || *i < 1 || *i > *t) throw fail("cell outside the lower triangle");
        if (!(*acc >= 0.0 && *acc <= 1.0)) throw fail("accuracy outside [0, 1]");
        rows.push_back({static_cast<std::size_t>(*t), static_cast<std::size_t>(*i), *acc});
    }
    if (line_no == 0) throw fail("empty file");
    std::size_t tasks = 0;
    for (const auto& r : rows) tasks = std::max(tasks, r.t);
    std::size_t ways = 0;
    if (const auto side = read_matrix_sidecar(path)) {
        tasks = std::max(tasks, side->tasks);
        ways = side->ways;
    }
    if (tasks == 0) throw fail("no cells");
    AccuracyMatrix m(tasks, ways);
    for (const auto& r : rows) m.set(r.t, r.i, r.acc);
    return m;
}

void write_matrix_sidecar(const std::filesystem::path& path, const MatrixSidecar& s) {
    nlohmann::ordered_json j;
    j["T"] = s.tasks;
    j["ways"] = s.ways;
    if (s.seed) j["seed"] = *s.seed;
    j["config_hash"] = s.config_hash;
    if (s.sequence_length) j["L"] = *s.sequence_length;
    j["head_mode"] = s.head_mode;
    write_text_file(path, j.dump(2) + "\n");
}

std::optional<MatrixSidecar> read_matrix_sidecar(const std::filesystem::path& csv_path) {
    const auto path = sidecar_path(csv_path);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        MatrixSidecar s;
        s.tasks = j.at("T").get<std::size_t>();
        s.ways = j.at("ways").get<std::size_t>();
        if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
        s.config_hash = j.value("config_hash", "");
        if (j.contains("L")) s.sequence_length = j["L"].get<std::size_t>();
        s.head_mode = j.value("head_mode", "single");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

}  // namespace seqmeta
