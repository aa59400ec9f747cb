#include <doctest.h>

#include <Eigen/QR>

#include "ganinv/recovery.hpp"
#include "oracles.hpp"

using namespace ganinv;
using namespace ganinv::testing;

namespace {

GeneratorSpec tiny_spec(int d_z = 4, int d_y = 3) {
    GeneratorSpec spec;
    spec.d_z = d_z;
    spec.d_y = d_y;
    spec.image_shape = Shape{1, 4, 4};
    spec.layers = {
        LayerSpec::concat_channels(Shape{d_y}),
        LayerSpec::dense(d_z + d_y, 16),
        LayerSpec::reshape(Shape{1, 4, 4}),
        LayerSpec::tanh(),
    };
    return spec;
}

GeneratorCheckpoint tiny_ckpt(std::uint64_t seed = 7) {
    GeneratorCheckpoint ckpt = build_generator(tiny_spec(), seed);
    Rng rng(seed + 1);
    for (Tensor& t : ckpt.params.tensors)
        for (int i = 0; i < t.size(); ++i) t.data[i] += rng.uniform(-0.3, 0.3);
    return ckpt;
}

} // namespace

TEST_CASE("objective values on hand cases") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(1);
    Tensor z = random_tensor(Shape{4}, rng);

    SUBCASE("one-hot y gives zero regularizer") {
        Tensor y = one_hot(1, 3);
        Tensor target = generate(ckpt, z, y);
        auto [total, recon, reg] = objective(target, ckpt, z, y, 0.5);
        CHECK(reg == 0.0);
        CHECK(recon == doctest::Approx(0.0));
        CHECK(total == doctest::Approx(0.0));
    }
    SUBCASE("zero y with lambda 0.1 gives regularizer 0.1") {
        Tensor y = Tensor::zeros(Shape{3});
        Tensor target = generate(ckpt, z, y);
        auto [total, recon, reg] = objective(target, ckpt, z, y, 0.1);
        CHECK(reg == doctest::Approx(0.1));
        CHECK(total == doctest::Approx(recon + 0.1));
    }
    SUBCASE("half vector with lambda 0.25") {
        // d_y = 4 here: |0.5*4 - 1| * 0.25 = 0.25
        GeneratorCheckpoint c4 = build_generator(tiny_spec(4, 4), 3);
        Tensor y = Tensor::vector(Vec::Constant(4, 0.5));
        Tensor target = generate(c4, z, y);
        auto [total, recon, reg] = objective(target, c4, z, y, 0.25);
        CHECK(reg == doctest::Approx(0.25));
    }
}

TEST_CASE("objective gradients match finite differences away from kinks") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(2);
    const double lambda = 0.3;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor z = random_tensor(Shape{4}, rng);
        Tensor y = random_tensor(Shape{3}, rng, 0.05, 0.95);
        if (std::abs(y.data.sum() - 1.0) < 1e-3) continue; // keep clear of the kink
        Tensor target = generate(ckpt, random_tensor(Shape{4}, rng), one_hot(0, 3));

        auto [g_z, g_y] = objective_gradients(target, ckpt, z, y, lambda);
        Tensor fd_z = finite_difference_gradient(
            [&](const Tensor& t) {
                return std::get<0>(objective(target, ckpt, t, y, lambda));
            },
            z, 1e-5);
        Tensor fd_y = finite_difference_gradient(
            [&](const Tensor& t) {
                return std::get<0>(objective(target, ckpt, z, t, lambda));
            },
            y, 1e-5);
        CHECK(max_rel_err(g_z.data, fd_z.data) < 1e-6);
        CHECK(max_rel_err(g_y.data, fd_y.data) < 1e-6);
    }
}

TEST_CASE("gradients vanish at a reconstruction minimum with one-hot y") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(3);
    Tensor z = random_tensor(Shape{4}, rng);
    Tensor y = one_hot(2, 3);
    Tensor target = generate(ckpt, z, y);
    auto [g_z, g_y] = objective_gradients(target, ckpt, z, y, 0.4);
    CHECK(g_z.data.lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(g_y.data.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("lambda zero reduces to the pure reconstruction gradient") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(4);
    Tensor z = random_tensor(Shape{4}, rng);
    Tensor y = random_tensor(Shape{3}, rng, 0.0, 1.0);
    Tensor target = generate(ckpt, random_tensor(Shape{4}, rng), one_hot(1, 3));

    auto [gz0, gy0] = objective_gradients(target, ckpt, z, y, 0.0);
    Tensor up(target.shape, 2.0 * (generate(ckpt, z, y).data - target.data));
    auto [dz, dy] = input_gradients(ckpt, z, y, up);
    CHECK(gz0.data == dz.data);
    CHECK(gy0.data == dy.data);
}

TEST_CASE("stochastic clipping") {
    SUBCASE("in-range coordinates pass through") {
        Rng rng(5);
        Tensor z = Tensor::vector((Vec(2) << 0.3, -0.9).finished());
        CHECK(stochastic_clip(z, rng).data == z.data);
    }
    SUBCASE("out-of-range coordinates land strictly inside") {
        Rng rng(6);
        Tensor z = Tensor::vector((Vec(3) << 1.5, -2.0, 0.1).finished());
        Tensor c = stochastic_clip(z, rng);
        CHECK(c.data[0] > -1.0);
        CHECK(c.data[0] < 1.0);
        CHECK(c.data[1] > -1.0);
        CHECK(c.data[1] < 1.0);
        CHECK(c.data[2] == 0.1);
    }
    SUBCASE("resampling follows the uniform law") {
        Rng rng(7);
        const int n = 100000;
        double sum = 0.0, sumsq = 0.0;
        Tensor z = Tensor::vector(Vec::Constant(1, 2.0));
        for (int i = 0; i < n; ++i) {
            double v = stochastic_clip(z, rng).data[0];
            sum += v;
            sumsq += v * v;
        }
        double mean = sum / n;
        double var = sumsq / n - mean * mean;
        // uniform(-1,1): mean 0, variance 1/3
        double sigma_mean = std::sqrt(1.0 / 3.0 / n);
        CHECK(std::abs(mean) < 3.0 * sigma_mean);
        CHECK(var == doctest::Approx(1.0 / 3.0).epsilon(0.05));
    }
}

TEST_CASE("unit box projection") {
    Tensor y = Tensor::vector((Vec(3) << -0.3, 0.4, 1.2).finished());
    Tensor p = project_unit_box(y);
    CHECK(p.data[0] == 0.0);
    CHECK(p.data[1] == 0.4);
    CHECK(p.data[2] == 1.0);

    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        Tensor x = random_tensor(Shape{5}, rng, -3.0, 3.0);
        Tensor once = project_unit_box(x);
        CHECK(project_unit_box(once).data == once.data);
    }
    Tensor inside = Tensor::vector((Vec(2) << 0.2, 0.9).finished());
    CHECK(project_unit_box(inside).data == inside.data);
}

TEST_CASE("argmax decode breaks ties toward the lowest index") {
    auto [l1, t1] = argmax_label(Tensor::vector((Vec(3) << 0.1, 0.5, 0.5).finished()));
    CHECK(l1 == 1);
    CHECK(t1);
    auto [l2, t2] = argmax_label(Tensor::zeros(Shape{4}));
    CHECK(l2 == 0);
    CHECK(t2);
    auto [l3, t3] = argmax_label(Tensor::vector((Vec(3) << 0.1, 0.9, 0.5).finished()));
    CHECK(l3 == 1);
    CHECK_FALSE(t3);
}

TEST_CASE("linear generator recovery matches the least-squares solution") {
    // G(x) = A x + b with orthonormal-column A (scaled), Tanh removed.
    const int d_z = 3, d_y = 3, d = d_z + d_y, m = 12;
    GeneratorSpec spec;
    spec.d_z = d_z;
    spec.d_y = d_y;
    spec.image_shape = Shape{1, 1, m};
    spec.linear_output = true;
    spec.layers = {
        LayerSpec::concat_channels(Shape{d_y}),
        LayerSpec::dense(d, m),
        LayerSpec::reshape(Shape{1, 1, m}),
    };
    GeneratorCheckpoint ckpt = build_generator(spec, 0);

    Rng rng(9);
    Mat raw(m, d);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) raw(i, j) = rng.uniform(-1.0, 1.0);
    Mat Q = Eigen::HouseholderQR<Mat>(raw).householderQ() * Mat::Identity(m, d);
    Mat A = 0.4 * Q;
    Tensor w = Tensor::zeros(Shape{m, d});
    Eigen::Map<RowMat>(w.data.data(), m, d) = A;
    ckpt.params.get("layer1.weight") = w;
    Tensor b = Tensor::zeros(Shape{m});
    for (int i = 0; i < m; ++i) b.data[i] = rng.uniform(-0.01, 0.01);
    ckpt.params.get("layer1.bias") = b;

    Tensor z_true = random_tensor(Shape{d_z}, rng, -0.8, 0.8);
    Tensor y_true = one_hot(1, d_y);
    Tensor target = generate(ckpt, z_true, y_true);

    // independent closed-form oracle
    Vec x_ls = A.colPivHouseholderQr().solve(target.data - b.data);

    RecoveryConfig cfg;
    cfg.lambda = 0.0;
    cfg.alpha = 1.0;
    cfg.beta = 1.0;
    cfg.max_iterations = 5000;
    cfg.plateau_window = 5000;
    cfg.plateau_rel_eps = 0.0;
    cfg.rng_seed = 11;
    RecoveryResult res = recover(target, ckpt, cfg);

    Vec x_rec(d);
    x_rec << res.z_p.data, res.y_p.data;
    CHECK((x_rec - x_ls).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((x_ls - (Vec(d) << z_true.data, y_true.data).finished()).norm() < 1e-9);
}

TEST_CASE("recover is deterministic and respects the loop contract") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(10);
    Tensor z_true = random_tensor(Shape{4}, rng);
    Tensor target = generate(ckpt, z_true, one_hot(2, 3));

    RecoveryConfig cfg;
    cfg.alpha = 0.05;
    cfg.beta = 0.05;
    cfg.max_iterations = 500;
    cfg.plateau_window = 500;
    cfg.trace_stride = 50;
    cfg.rng_seed = 77;

    // observer checks feasibility after every update
    bool y_started_at_zero = true;
    int violations = 0;
    int first_iter_seen = 0;
    IterObserver obs = [&](int iter, const Tensor& z_p, const Tensor& y_p, double scale) {
        if (first_iter_seen == 0) first_iter_seen = iter;
        if (z_p.data.minCoeff() < -1.0 || z_p.data.maxCoeff() > 1.0) ++violations;
        if (y_p.data.minCoeff() < 0.0 || y_p.data.maxCoeff() > 1.0) ++violations;
        if (scale != 1.0) ++violations; // schedule threshold not reached here
    };

    GroundTruth truth{z_true, 2};
    RecoveryResult a = recover(target, ckpt, cfg, &truth, &obs);
    RecoveryResult b = recover(target, ckpt, cfg, &truth);

    CHECK(violations == 0);
    CHECK(first_iter_seen == 1);
    CHECK(y_started_at_zero);
    CHECK(a.z_p.data == b.z_p.data);
    CHECK(a.y_p.data == b.y_p.data);
    CHECK(a.recon_sum == b.recon_sum);
    CHECK(a.iterations == b.iterations);

    // trace iterations strictly increasing; iteration 0 present
    REQUIRE(!a.trace.points.empty());
    CHECK(a.trace.points.front().iteration == 0);
    for (std::size_t i = 1; i < a.trace.points.size(); ++i)
        CHECK(a.trace.points[i].iteration > a.trace.points[i - 1].iteration);
    // ground-truth columns present
    CHECK(a.trace.points.front().z_error.has_value());
    CHECK(a.trace.points.front().label_correct.has_value());
    // loss decreased from the start
    CHECK(a.recon_sum < a.trace.points.front().recon_sum);
}

TEST_CASE("step sizes halve exactly once at the schedule threshold") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(11);
    Tensor target = generate(ckpt, random_tensor(Shape{4}, rng), one_hot(0, 3));

    RecoveryConfig cfg;
    cfg.alpha = 0.05;
    cfg.beta = 0.05;
    cfg.schedule = 40;
    cfg.max_iterations = 100;
    cfg.plateau_window = 100;
    cfg.plateau_rel_eps = 0.0;

    std::vector<double> scales;
    IterObserver obs = [&](int, const Tensor&, const Tensor&, double s) { scales.push_back(s); };
    recover(target, ckpt, cfg, nullptr, &obs);
    REQUIRE(scales.size() == 100);
    for (int i = 0; i < 40; ++i) CHECK(scales[i] == 1.0);
    for (int i = 40; i < 100; ++i) CHECK(scales[i] == 0.5);
}

TEST_CASE("regularizer off means the penalty term is identically zero") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(12);
    Tensor target = generate(ckpt, random_tensor(Shape{4}, rng), one_hot(1, 3));
    RecoveryConfig cfg;
    cfg.alpha = 0.05;
    cfg.beta = 0.05;
    cfg.max_iterations = 200;
    cfg.plateau_window = 200;
    cfg.use_regularizer = false;
    cfg.trace_stride = 10;
    RecoveryResult res = recover(target, ckpt, cfg);
    for (const TracePoint& p : res.trace.points) CHECK(p.reg_term == 0.0);
}

TEST_CASE("recover_batch derives per-target seeds and flags failures") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(13);
    RecoveryConfig cfg;
    cfg.alpha = 0.05;
    cfg.beta = 0.05;
    cfg.max_iterations = 100;
    cfg.plateau_window = 100;
    cfg.rng_seed = 500;

    std::vector<BatchTarget> targets;
    for (int i = 0; i < 3; ++i) {
        BatchTarget t;
        t.image = generate(ckpt, random_tensor(Shape{4}, rng), one_hot(i, 3));
        targets.push_back(std::move(t));
    }
    auto results = recover_batch(targets, ckpt, cfg);
    REQUIRE(results.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        RecoveryConfig single = cfg;
        single.rng_seed = cfg.rng_seed + i;
        RecoveryResult ref = recover(targets[i].image, ckpt, single);
        CHECK_FALSE(results[i].failed);
        CHECK(results[i].z_p.data == ref.z_p.data);
    }

    // a bad target is flagged, not fatal
    targets.push_back(BatchTarget{Tensor::zeros(Shape{1, 2, 2}), std::nullopt});
    auto mixed = recover_batch(targets, ckpt, cfg);
    CHECK_FALSE(mixed[0].failed);
    CHECK(mixed[3].failed);
    CHECK(!mixed[3].error.empty());

    CHECK_THROWS_AS(recover_batch({}, ckpt, cfg), ContractError);
}

TEST_CASE("parallel batch equals sequential batch") {
    GeneratorCheckpoint ckpt = tiny_ckpt();
    Rng rng(14);
    RecoveryConfig cfg;
    cfg.alpha = 0.05;
    cfg.beta = 0.05;
    cfg.max_iterations = 60;
    cfg.plateau_window = 60;
    std::vector<BatchTarget> targets;
    for (int i = 0; i < 4; ++i)
        targets.push_back(
            BatchTarget{generate(ckpt, random_tensor(Shape{4}, rng), one_hot(i % 3, 3)), {}});
    auto seq = recover_batch(targets, ckpt, cfg, 1);
    auto par = recover_batch(targets, ckpt, cfg, 3);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        CHECK(seq[i].z_p.data == par[i].z_p.data);
        CHECK(seq[i].recon_sum == par[i].recon_sum);
    }
}

TEST_CASE("config validation rejects bad knobs") {
    RecoveryConfig cfg;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RecoveryConfig{};
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RecoveryConfig{};
    cfg.max_iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
