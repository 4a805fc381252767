#include "seqmeta/meta.hpp"

#include <cmath>

#include "seqmeta/parallel.hpp"

namespace seqmeta {

namespace {

struct Sweep {
    double objective = 0.0;
    ParamVector grad;
    AdaptationTrace trace;
    HeadBank bank;
};

// Sequential adaptation through `sequence` plus the test-loss terms of the
// sequence objective. In multi-head mode each task trains trunk + a fresh
// clone of the trailing head of `params`; since that head occupies the same
// slot in every working vector, summing full gradients accumulates every
// clone's head gradient into the single meta-head.
Sweep run_sweep(const Model& model, const ParamVector& params, const TaskSequence& sequence, const MetaConfig& cfg,
                HeadMode mode, bool want_grad) {
    const std::size_t n = sequence.size();
    if (n == 0) throw invalid_argument("empty task sequence");
    if (n != cfg.sequence_length) throw ShapeError("task sequence length", cfg.sequence_length, n);
    if (params.size() != model.param_count()) throw ShapeError("parameter count", model.param_count(), params.size());

    const bool both = cfg.objective == ObjectiveVariant::both_ends;
    const bool multi = mode == HeadMode::multi;
    const std::size_t head_size = multi ? model.head_param_count() : 0;
    if (multi && head_size == 0) throw SpecError(0, 0, "multi-head adaptation requires a separable output head");
    const std::size_t trunk_size = params.size() - head_size;

    Sweep s;
    s.grad = ParamVector(params.size(), 0.0);
    const ParamVector head_init = multi ? slice(params, trunk_size, head_size) : ParamVector{};
    if (multi) s.bank = HeadBank{slice(params, 0, trunk_size), head_size, {}};

    ParamVector current = params;
    ParamVector last_after_grad;
    double after_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Task& task = sequence.tasks[i];
        if (multi) write_slice(current, trunk_size, head_init.span());
        current = inner_train(model, current, task, cfg.inner_iterations, cfg.inner_lr);
        s.trace.snapshots.push_back(current);
        if (multi) s.bank.heads.push_back(slice(current, trunk_size, head_size));

        double loss = 0.0;
        if (both && want_grad) {
            LossGrad lg = model.loss_and_grad(current, task.test);
            loss = lg.loss;
            if (i + 1 == n) last_after_grad = lg.grad;
            s.grad += lg.grad;
        } else {
            loss = model.loss(current, task.test);
        }
        s.trace.test_losses_after_task.push_back(loss);
        after_sum += loss;
    }

    const ParamVector& final_params = s.trace.snapshots.back();
    double end_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Task& task = sequence.tasks[i];
        // In single-head mode the last task's end term is its after-task term.
        if (i + 1 == n) {
            const double loss = s.trace.test_losses_after_task.back();
            s.trace.test_losses_at_end.push_back(loss);
            end_sum += loss;
            if (want_grad) {
                if (both)
                    s.grad += last_after_grad;
                else
                    s.grad += model.loss_and_grad(final_params, task.test).grad;
            }
            continue;
        }
        ParamVector at_end = final_params;
        if (multi) write_slice(at_end, trunk_size, s.bank.heads[i].span());
        double loss = 0.0;
        if (want_grad) {
            LossGrad lg = model.loss_and_grad(at_end, task.test);
            loss = lg.loss;
            s.grad += lg.grad;
        } else {
            loss = model.loss(at_end, task.test);
        }
        s.trace.test_losses_at_end.push_back(loss);
        end_sum += loss;
    }
    if (multi) s.bank.trunk = slice(final_params, 0, trunk_size);

    const double inv_n = 1.0 / static_cast<double>(n);
    s.grad *= inv_n;
    s.objective = inv_n * (both ? end_sum + after_sum : end_sum);
    return s;
}

}  // namespace

std::string to_string(ObjectiveVariant v) { return v == ObjectiveVariant::both_ends ? "both_ends" : "end_only"; }
std::string to_string(HeadMode m) { return m == HeadMode::single ? "single" : "multi"; }

void MetaConfig::validate() const {
    if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) throw invalid_argument("inner_lr must be finite and >= 0");
    if (!(meta_lr >= 0.0) || !std::isfinite(meta_lr)) throw invalid_argument("meta_lr must be finite and >= 0");
    if (inner_iterations == 0) throw invalid_argument("inner_iterations must be >= 1");
    if (sequence_length == 0) throw invalid_argument("sequence_length must be >= 1");
    if (meta_batch_size == 0) throw invalid_argument("meta_batch_size must be >= 1");
}

ParamVector HeadBank::assemble(std::size_t i) const { return concat(trunk, heads.at(i)); }

HeadBank add_head(HeadBank bank, const ParamVector& head_init) {
    if (head_init.size() != bank.head_size) throw ShapeError("head parameter count", bank.head_size, head_init.size());
    bank.heads.push_back(head_init);
    return bank;
}

ParamVector inner_train(const Model& model, const ParamVector& params, const Task& task, std::size_t k, double lr) {
    ParamVector current = params;
    for (std::size_t step = 0; step < k; ++step)
        current = sgd_step(current, model.loss_and_grad(current, task.train).grad, lr);
    return current;
}

ParamVector fomaml_meta_gradient(const Model& model, const ParamVector& params, const Task& task,
                                 const MetaConfig& cfg) {
    const ParamVector adapted = inner_train(model, params, task, cfg.inner_iterations, cfg.inner_lr);
    return model.loss_and_grad(adapted, task.test).grad;
}

SeqGradient seqfomaml_meta_gradient(const Model& model, const ParamVector& params, const TaskSequence& sequence,
                                    const MetaConfig& cfg) {
    Sweep s = run_sweep(model, params, sequence, cfg, cfg.head_mode, true);
    return {std::move(s.grad), std::move(s.trace), s.objective};
}

double seq_objective_value(const Model& model, const ParamVector& params, const TaskSequence& sequence,
                           const MetaConfig& cfg) {
    return run_sweep(model, params, sequence, cfg, cfg.head_mode, false).objective;
}

ParamVector exact_seq_gradient_fd(const Model& model, const ParamVector& params, const TaskSequence& sequence,
                                  const MetaConfig& cfg, double step) {
    if (!(step > 0.0)) throw invalid_argument("finite-difference step must be positive");
    const double first = seq_objective_value(model, params, sequence, cfg);
    const double second = seq_objective_value(model, params, sequence, cfg);
    if (first != second)
        throw Error(ErrorKind::non_deterministic,
                    "sequence objective differs across evaluations at identical parameters");
    ParamVector grad(params.size(), 0.0);
    ParamVector probe = params;
    for (std::size_t j = 0; j < params.size(); ++j) {
        probe[j] = params[j] + step;
        const double up = seq_objective_value(model, probe, sequence, cfg);
        probe[j] = params[j] - step;
        const double down = seq_objective_value(model, probe, sequence, cfg);
        probe[j] = params[j];
        grad[j] = (up - down) / (2.0 * step);
    }
    return grad;
}

MultiHeadResult multi_head_adapt(const Model& model, const ParamVector& trunk_params, const ParamVector& head_init,
                                 const TaskSequence& sequence, const MetaConfig& cfg) {
    if (model.head_param_count() == 0) throw SpecError(0, 0, "multi-head adaptation requires a separable output head");
    if (head_init.size() != model.head_param_count())
        throw ShapeError("head parameter count", model.head_param_count(), head_init.size());
    Sweep s = run_sweep(model, concat(trunk_params, head_init), sequence, cfg, HeadMode::multi, false);
    return {std::move(s.trace), std::move(s.bank)};
}

MetaTrainError::MetaTrainError(std::size_t iteration, std::vector<double> partial_log, const Error& cause)
    : Error(cause.kind(), "meta-training failed at iteration " + std::to_string(iteration) + ": " + cause.what()),
      iteration_(iteration),
      log_(std::move(partial_log)),
      cause_(cause.kind()) {}

MetaTrainResult meta_train(const Model& model, const TaskDistribution& dist, const MetaConfig& cfg,
                           std::uint64_t seed, ParamVector init, const MetaTrainOptions& options) {
    cfg.validate();
    if (init.size() != model.param_count()) throw ShapeError("initial parameter count", model.param_count(), init.size());
    if (cfg.head_mode == HeadMode::multi && model.head_param_count() == 0)
        throw SpecError(0, 0, "multi-head meta-training requires a separable output head");

    MetaTrainResult result;
    result.params = std::move(init);
    result.adam = AdamState::zeros(result.params.size());
    const std::size_t batch = cfg.meta_batch_size;
    std::vector<ParamVector> grads(batch);
    std::vector<double> objectives(batch);

    for (std::size_t it = 0; it < cfg.meta_iterations; ++it) {
        try {
            parallel_for(batch, options.workers, [&](std::size_t b) {
                Rng rng(derive_seed(seed, it + 1, b + 1));
                const TaskSequence seq = sample_sequence(dist, cfg.sequence_length, rng);
                SeqGradient g = seqfomaml_meta_gradient(model, result.params, seq, cfg);
                grads[b] = std::move(g.grad);
                objectives[b] = g.objective;
            });
        } catch (const Error& e) {
            throw MetaTrainError(it, result.objective_log, e);
        }
        ParamVector mean_grad(result.params.size(), 0.0);
        double mean_objective = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            mean_grad += grads[b];
            mean_objective += objectives[b];
        }
        mean_grad *= 1.0 / static_cast<double>(batch);
        mean_objective /= static_cast<double>(batch);
        result.objective_log.push_back(mean_objective);

        AdamResult step = adam_step(result.adam, result.params, mean_grad, cfg.meta_lr);
        result.adam = std::move(step.state);
        result.params = std::move(step.params);
        if (options.on_iteration) options.on_iteration(it, mean_objective);
    }
    return result;
}

MetaTrainResult meta_train(const Network& net, const TaskDistribution& dist, const MetaConfig& cfg,
                           std::uint64_t seed, const MetaTrainOptions& options) {
    return meta_train(static_cast<const Model&>(net), dist, cfg, seed, init_params(net, seed), options);
}

}  // namespace seqmeta
