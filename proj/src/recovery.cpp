#include "ganinv/recovery.hpp"

#include <cassert>
#include <cmath>
#include <thread>

namespace ganinv {

void RecoveryConfig::validate() const {
    if (alpha <= 0.0 || beta <= 0.0) throw ConfigError("recovery config: alpha, beta must be > 0");
    if (lambda && *lambda < 0.0) throw ConfigError("recovery config: lambda must be >= 0");
    if (max_iterations < 1) throw ConfigError("recovery config: max_iterations must be >= 1");
    if (schedule < 1) throw ConfigError("recovery config: schedule must be >= 1");
    if (plateau_window < 1) throw ConfigError("recovery config: plateau_window must be >= 1");
    if (trace_stride < 1) throw ConfigError("recovery config: trace_stride must be >= 1");
}

std::tuple<double, double, double> objective(const Tensor& target, const GeneratorCheckpoint& ckpt,
                                             const Tensor& z_p, const Tensor& y_p, double lambda) {
    target.require_shape(ckpt.spec.image_shape, "objective target");
    Tensor out = generate(ckpt, z_p, y_p);
    double recon = (out.data - target.data).squaredNorm();
    double reg = lambda * std::abs(y_p.data.lpNorm<1>() - 1.0);
    return {recon + reg, recon, reg};
}

std::pair<Tensor, Tensor> objective_gradients(const Tensor& target, const GeneratorCheckpoint& ckpt,
                                              const Tensor& z_p, const Tensor& y_p, double lambda) {
    target.require_shape(ckpt.spec.image_shape, "objective target");
    Tensor out = generate(ckpt, z_p, y_p);
    Tensor upstream(out.shape, 2.0 * (out.data - target.data));
    auto [g_z, g_y] = input_gradients(ckpt, z_p, y_p, upstream);
    if (lambda != 0.0) {
        // On the feasible box y_p >= 0, ||y_p||_1 = sum(y_p); the penalty
        // subgradient at the kink is chosen as zero.
        double excess = y_p.data.sum() - 1.0;
        if (excess != 0.0) {
            double s = lambda * (excess > 0.0 ? 1.0 : -1.0);
            g_y.data.array() += s;
        }
    }
    return {std::move(g_z), std::move(g_y)};
}

Tensor stochastic_clip(const Tensor& z_p, Rng& rng) {
    Tensor out = z_p;
    for (int i = 0; i < out.size(); ++i)
        if (out.data[i] < -1.0 || out.data[i] > 1.0) out.data[i] = rng.uniform(-1.0, 1.0);
    return out;
}

Tensor project_unit_box(const Tensor& y_p) {
    Tensor out = y_p;
    out.data = out.data.cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

std::pair<int, bool> argmax_label(const Tensor& y_p) {
    int best = 0;
    bool tie = false;
    for (int i = 1; i < y_p.size(); ++i) {
        if (y_p.data[i] > y_p.data[best]) {
            best = i;
            tie = false;
        } else if (y_p.data[i] == y_p.data[best]) {
            tie = true;
        }
    }
    return {best, tie};
}

namespace {

TracePoint make_point(int iteration, double recon, double reg, int d_I, const Tensor& z_p,
                      const Tensor& y_p, const GroundTruth* truth) {
    TracePoint p;
    p.iteration = iteration;
    p.recon_sum = recon;
    p.recon_mse = recon / static_cast<double>(d_I);
    p.reg_term = reg;
    if (truth) {
        p.z_error = (z_p.data - truth->z.data).norm();
        p.label_correct = argmax_label(y_p).first == truth->label;
    }
    return p;
}

} // namespace

RecoveryResult recover(const Tensor& target, const GeneratorCheckpoint& ckpt,
                       const RecoveryConfig& config, const GroundTruth* truth,
                       const IterObserver* observer) {
    config.validate();
    target.require_shape(ckpt.spec.image_shape, "recover target");
    if (target.data.minCoeff() < -1.0 - 1e-9 || target.data.maxCoeff() > 1.0 + 1e-9)
        throw ContractError("recover: target pixels outside [-1,1]");

    const int d_z = ckpt.spec.d_z;
    const int d_y = ckpt.spec.d_y;
    const int d_I = target.size();
    const double lambda = config.use_regularizer ? config.resolved_lambda(d_y) : 0.0;

    Rng rng(config.rng_seed);
    Tensor z_p = Tensor::zeros(Shape{d_z});
    for (int i = 0; i < d_z; ++i) z_p.data[i] = rng.uniform(-1.0, 1.0);
    Tensor y_p = Tensor::zeros(Shape{d_y});

    RecoveryResult res;
    double best_total = std::numeric_limits<double>::infinity();
    int best_update = 0;
    double last_recon = 0.0, last_reg = 0.0;
    int state = 0; // completed updates

    try {
        for (int u = 1; u <= config.max_iterations; ++u) {
            // Loss and gradients of the current state (state index u-1).
            Tape tape;
            Tensor out = forward(ckpt.net, ckpt.params, z_p, &y_p, &tape);
            double recon = (out.data - target.data).squaredNorm();
            double reg = lambda * std::abs(y_p.data.sum() - 1.0);
            double total = recon + reg;
            if (!std::isfinite(total))
                throw NumericError("recover: non-finite loss at iteration " + std::to_string(u - 1));
            last_recon = recon;
            last_reg = reg;
            if (u == 1) res.initial_mse = recon / static_cast<double>(d_I);

            if ((u - 1) % config.trace_stride == 0)
                res.trace.points.push_back(make_point(u - 1, recon, reg, d_I, z_p, y_p, truth));

            // Plateau rule on the best total loss seen so far.
            if (total < best_total * (1.0 - config.plateau_rel_eps) ||
                !std::isfinite(best_total)) {
                best_total = total;
                best_update = u;
            } else if (u - best_update >= config.plateau_window) {
                res.termination = Termination::Converged;
                break;
            }

            Tensor upstream(out.shape, 2.0 * (out.data - target.data));
            BackwardResult back = backward_input_only(ckpt.params, tape, upstream);
            Tensor g_z = std::move(back.input_grad);
            Tensor g_y = std::move(*back.aux_grad);
            if (lambda != 0.0) {
                double excess = y_p.data.sum() - 1.0;
                if (excess != 0.0) g_y.data.array() += lambda * (excess > 0.0 ? 1.0 : -1.0);
            }

            double scale = (u <= config.schedule) ? 1.0 : 0.5;
            z_p.data -= scale * config.alpha * g_z.data;
            y_p.data -= scale * config.beta * g_y.data;
            z_p = stochastic_clip(z_p, rng);
            y_p = project_unit_box(y_p);
            state = u;
            assert(z_p.data.minCoeff() >= -1.0 && z_p.data.maxCoeff() <= 1.0);
            assert(y_p.data.minCoeff() >= 0.0 && y_p.data.maxCoeff() <= 1.0);
            if (observer) (*observer)(u, z_p, y_p, scale);
        }
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (recovery aborted after " +
                           std::to_string(state) + " updates)");
    }

    // Final loss decomposition at the terminal state.
    auto [total, recon, reg] = objective(target, ckpt, z_p, y_p, lambda);
    (void)total;
    last_recon = recon;
    last_reg = reg;
    if (res.trace.points.empty() || res.trace.points.back().iteration < state)
        res.trace.points.push_back(make_point(state, last_recon, last_reg, d_I, z_p, y_p, truth));

    auto [label, tie] = argmax_label(y_p);
    res.z_p = std::move(z_p);
    res.y_p = std::move(y_p);
    res.decoded_label = label;
    res.argmax_tie = tie;
    res.recon_sum = last_recon;
    res.recon_mse = last_recon / static_cast<double>(d_I);
    res.reg_term = last_reg;
    res.iterations = state;
    return res;
}

std::vector<RecoveryResult> recover_batch(const std::vector<BatchTarget>& targets,
                                          const GeneratorCheckpoint& ckpt,
                                          const RecoveryConfig& config, int jobs) {
    if (targets.empty()) throw ContractError("recover_batch: empty target list");
    if (jobs < 1) jobs = 1;
    std::vector<RecoveryResult> results(targets.size());

    auto worker = [&](std::size_t start, std::size_t step) {
        for (std::size_t i = start; i < targets.size(); i += step) {
            RecoveryConfig per = config;
            per.rng_seed = config.rng_seed + static_cast<std::uint64_t>(i);
            try {
                const GroundTruth* truth =
                    targets[i].truth ? &*targets[i].truth : nullptr;
                results[i] = recover(targets[i].image, ckpt, per, truth);
            } catch (const std::exception& e) {
                results[i].failed = true;
                results[i].error = e.what();
            }
        }
    };

    if (jobs == 1 || targets.size() == 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back(worker, static_cast<std::size_t>(t), static_cast<std::size_t>(jobs));
        for (auto& th : pool) th.join();
    }
    return results;
}

} // namespace ganinv
