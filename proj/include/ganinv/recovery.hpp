#pragma once

#include <functional>
#include <optional>
#include <tuple>
#include <vector>

#include "ganinv/generator.hpp"

namespace ganinv {

// All knobs of the joint (z_p, y_p) recovery loop. lambda defaults to 1/d_y
// when unset. Step sizes halve once after `schedule` updates.
struct RecoveryConfig {
    std::optional<double> lambda;  // resolved to 1/d_y if absent
    double alpha = 1.0;
    double beta = 1.0;
    int schedule = 50000;
    int max_iterations = 100000;
    int plateau_window = 5000;
    double plateau_rel_eps = 1e-6;
    bool use_regularizer = true;
    std::uint64_t rng_seed = 0;
    int trace_stride = 100;

    double resolved_lambda(int d_y) const {
        return lambda ? *lambda : 1.0 / static_cast<double>(d_y);
    }
    void validate() const;
};

struct TracePoint {
    int iteration = 0;
    double recon_mse = 0.0;
    double recon_sum = 0.0;
    double reg_term = 0.0;
    std::optional<double> z_error;
    std::optional<bool> label_correct;
};

struct RecoveryTrace {
    std::vector<TracePoint> points;
};

enum class Termination { Converged, BudgetExhausted, Aborted };

struct RecoveryResult {
    Tensor z_p;
    Tensor y_p;
    int decoded_label = -1;
    bool argmax_tie = false;
    double recon_sum = 0.0;
    double recon_mse = 0.0;
    double reg_term = 0.0;
    double initial_mse = 0.0;
    int iterations = 0;
    Termination termination = Termination::BudgetExhausted;
    RecoveryTrace trace;
    bool failed = false;
    std::string error;
};

// Known (z, label) of a generated target; lets the trace carry z-error and
// label-correct columns.
struct GroundTruth {
    Tensor z;
    int label = -1;
};

// Eq-style objective: raw sum-of-squares reconstruction plus
// lambda * | ||y_p||_1 - 1 |. Returns (total, recon, reg).
std::tuple<double, double, double> objective(const Tensor& target, const GeneratorCheckpoint& ckpt,
                                             const Tensor& z_p, const Tensor& y_p, double lambda);

// Gradients of the total objective. On the feasible box y_p >= 0 the L1 norm
// is a plain sum, so the penalty gradient is sign(sum(y_p) - 1) * lambda in
// every coordinate (zero at the kink).
std::pair<Tensor, Tensor> objective_gradients(const Tensor& target, const GeneratorCheckpoint& ckpt,
                                              const Tensor& z_p, const Tensor& y_p, double lambda);

// Coordinates outside [-1,1] are resampled i.i.d. uniform on (-1,1);
// in-range coordinates pass through untouched.
Tensor stochastic_clip(const Tensor& z_p, Rng& rng);

// Elementwise clamp to [0,1].
Tensor project_unit_box(const Tensor& y_p);

// argmax with lowest-index tie break; reports whether a tie occurred.
std::pair<int, bool> argmax_label(const Tensor& y_p);

// Per-iteration hook for instrumented runs: (iteration, z_p, y_p,
// step_scale) after the projection steps of that iteration.
using IterObserver = std::function<void(int, const Tensor&, const Tensor&, double)>;

RecoveryResult recover(const Tensor& target, const GeneratorCheckpoint& ckpt,
                       const RecoveryConfig& config, const GroundTruth* truth = nullptr,
                       const IterObserver* observer = nullptr);

struct BatchTarget {
    Tensor image;
    std::optional<GroundTruth> truth;
};

// Independent per-target recoveries with derived seeds (base + index).
// Per-target failures are flagged on the result, not thrown.
std::vector<RecoveryResult> recover_batch(const std::vector<BatchTarget>& targets,
                                          const GeneratorCheckpoint& ckpt,
                                          const RecoveryConfig& config, int jobs = 1);

} // namespace ganinv
