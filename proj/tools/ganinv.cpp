// ganinv: conditional-GAN inversion toolkit.
//
// Pipeline: synth-data -> train -> generate -> recover -> eval, plus
// make-generator for randomly initialized checkpoints. Every command writes
// its outputs plus a manifest.json into a single run directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "ganinv/dataset.hpp"
#include "ganinv/generator.hpp"
#include "ganinv/io.hpp"
#include "ganinv/metrics.hpp"
#include "ganinv/recovery.hpp"
#include "ganinv/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ganinv;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Exit codes, one per error category.
enum ExitCode {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kMissingFile = 3,
    kFormat = 4,
    kNumeric = 5,
    kConfig = 6,
};

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path + ": invalid JSON (" + std::string(e.what()) + ")");
    }
}

void write_manifest(const fs::path& run_dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_seconds) {
    json m;
    m["tool_version"] = kToolVersion;
    m["command"] = command;
    m["config"] = config;
    m["config_digest"] = digest_string(config.dump());
    m["seed"] = seed;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["wall_clock_seconds"] = wall_seconds;
    std::ofstream out(run_dir / "manifest.json");
    if (!out) throw IoError("cannot open for write: " + (run_dir / "manifest.json").string());
    out << m.dump(2) << "\n";
}

fs::path prepare_run_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory: " + out);
    return dir;
}

GeneratorSpec gen_spec_from_config(const json& j) {
    if (j.contains("layers")) return generator_spec_from_json(j.dump());
    return GeneratorSpec::desk_scale(j.value("d_z", 100), j.value("d_y", 10),
                                     j.value("channels", 1), j.value("base", 16));
}

GlyphConfig glyph_config_from_json(const json& j) {
    GlyphConfig cfg;
    cfg.classes = j.value("classes", cfg.classes);
    cfg.height = j.value("height", cfg.height);
    cfg.width = j.value("width", cfg.width);
    cfg.channels = j.value("channels", cfg.channels);
    cfg.position_jitter = j.value("position_jitter", cfg.position_jitter);
    cfg.radius_jitter = j.value("radius_jitter", cfg.radius_jitter);
    cfg.thickness_jitter = j.value("thickness_jitter", cfg.thickness_jitter);
    cfg.rotation_jitter = j.value("rotation_jitter", cfg.rotation_jitter);
    return cfg;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.checkpoint_stride = j.value("checkpoint_stride", cfg.checkpoint_stride);
    cfg.report_stride = j.value("report_stride", cfg.report_stride);
    return cfg;
}

RecoveryConfig recovery_config_from_json(const json& j) {
    RecoveryConfig cfg;
    if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.schedule = j.value("schedule", cfg.schedule);
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.plateau_window = j.value("plateau_window", cfg.plateau_window);
    cfg.plateau_rel_eps = j.value("plateau_rel_eps", cfg.plateau_rel_eps);
    cfg.use_regularizer = j.value("use_regularizer", cfg.use_regularizer);
    cfg.rng_seed = j.value("seed", cfg.rng_seed);
    cfg.trace_stride = j.value("trace_stride", cfg.trace_stride);
    return cfg;
}

json recovery_config_to_json(const RecoveryConfig& cfg) {
    json j;
    if (cfg.lambda) j["lambda"] = *cfg.lambda;
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["schedule"] = cfg.schedule;
    j["max_iterations"] = cfg.max_iterations;
    j["plateau_window"] = cfg.plateau_window;
    j["plateau_rel_eps"] = cfg.plateau_rel_eps;
    j["use_regularizer"] = cfg.use_regularizer;
    j["seed"] = cfg.rng_seed;
    j["trace_stride"] = cfg.trace_stride;
    return j;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// ---------------------------------------------------------------- commands

int cmd_make_generator(const std::string& spec_path, std::uint64_t seed, const std::string& out) {
    Timer timer;
    fs::path dir = prepare_run_dir(out);
    json spec_json = spec_path.empty() ? json::object() : parse_json_file(spec_path);
    GeneratorSpec spec = gen_spec_from_config(spec_json);
    GeneratorCheckpoint ckpt = build_generator(spec, seed);
    std::string ckpt_path = (dir / "generator.ckpt").string();
    save_checkpoint(ckpt, ckpt_path);
    write_manifest(dir, "make-generator", spec_json, seed,
                   spec_path.empty() ? std::vector<std::string>{} : std::vector{spec_path},
                   {ckpt_path}, timer.seconds());
    std::cout << "wrote " << ckpt_path << "\n";
    return kOk;
}

int cmd_synth_data(const std::string& config_path, int per_class, int holdout_per_class,
                   std::uint64_t seed, const std::string& out) {
    Timer timer;
    fs::path dir = prepare_run_dir(out);
    json cfg_json = config_path.empty() ? json::object() : parse_json_file(config_path);
    GlyphConfig cfg = glyph_config_from_json(cfg_json);

    auto train_set = synth_glyphs(cfg, per_class, seed);
    auto holdout = synth_glyphs(cfg, holdout_per_class, seed + 1);
    for (auto& img : holdout) img.id = "holdout-" + img.id;

    std::string train_path = (dir / "train.gdata").string();
    std::string holdout_path = (dir / "holdout.gdata").string();
    save_dataset(train_set, train_path);
    save_dataset(holdout, holdout_path);

    // one preview row per class
    std::vector<Tensor> tiles;
    for (int k = 0; k < cfg.classes; ++k)
        for (int c = 0; c < 8; ++c) tiles.push_back(train_set[c * cfg.classes + k].pixels);
    std::string preview_path = (dir / "preview.pgm").string();
    write_image_auto(make_grid(tiles, cfg.classes, 8), preview_path);

    cfg_json["per_class"] = per_class;
    cfg_json["holdout_per_class"] = holdout_per_class;
    write_manifest(dir, "synth-data", cfg_json, seed, {},
                   {train_path, holdout_path, preview_path}, timer.seconds());
    std::cout << "wrote " << train_path << " (" << train_set.size() << " images), " << holdout_path
              << " (" << holdout.size() << " images)\n";
    return kOk;
}

int cmd_train(const std::string& data_path, const std::string& gen_spec_path,
              const std::string& config_path, const std::string& out) {
    Timer timer;
    fs::path dir = prepare_run_dir(out);
    auto data = load_dataset(data_path);

    int d_y = 0;
    for (const auto& img : data) d_y = std::max(d_y, img.label + 1);
    json spec_json = gen_spec_path.empty() ? json::object() : parse_json_file(gen_spec_path);
    if (!spec_json.contains("d_y")) spec_json["d_y"] = d_y;
    if (!spec_json.contains("channels") && !data.empty())
        spec_json["channels"] = data[0].pixels.shape[0];
    GeneratorSpec gen_spec = gen_spec_from_config(spec_json);
    DiscriminatorSpec disc_spec = DiscriminatorSpec::desk_scale(gen_spec.image_shape, gen_spec.d_y);

    json cfg_json = config_path.empty() ? json::object() : parse_json_file(config_path);
    TrainConfig cfg = train_config_from_json(cfg_json);

    TrainResult result = train(gen_spec, disc_spec, data, cfg);
    std::string ckpt_path = (dir / "generator.ckpt").string();
    save_checkpoint(result.ckpt, ckpt_path);

    std::string curve_path = (dir / "training.csv").string();
    {
        std::ofstream curves(curve_path);
        curves << "step,d_loss,g_loss,d_accuracy\n";
        for (const TrainSample& s : result.report.samples)
            curves << s.step << ',' << s.d_loss << ',' << s.g_loss << ',' << s.d_accuracy << "\n";
    }
    std::string grid_path = (dir / "samples.pgm").string();
    sample_grid(result.ckpt, result.ckpt.spec.d_y, 8, cfg.seed, grid_path);

    json manifest_cfg;
    manifest_cfg["train"] = cfg_json;
    manifest_cfg["generator_spec"] = json::parse(generator_spec_to_json(gen_spec));
    write_manifest(dir, "train", manifest_cfg, cfg.seed, {data_path},
                   {ckpt_path, curve_path, grid_path}, timer.seconds());
    std::cout << "trained " << result.report.steps << " steps"
              << (result.report.diverged ? " (diverged, last snapshot kept)" : "") << ", wrote "
              << ckpt_path << "\n";
    return kOk;
}

int cmd_generate(const std::string& ckpt_path, int n, std::uint64_t seed, const std::string& out) {
    Timer timer;
    fs::path dir = prepare_run_dir(out);
    GeneratorCheckpoint ckpt = load_checkpoint(ckpt_path);

    Rng rng(seed);
    std::vector<LabeledImage> targets;
    for (int i = 0; i < n; ++i) {
        int label = i % ckpt.spec.d_y;
        Tensor z = Tensor::zeros(Shape{ckpt.spec.d_z});
        for (int j = 0; j < z.size(); ++j) z.data[j] = rng.uniform(-1.0, 1.0);
        LabeledImage img;
        img.pixels = generate(ckpt, z, one_hot(label, ckpt.spec.d_y));
        img.label = label;
        img.provenance = Provenance::Generated;
        img.id = "gen-" + std::to_string(i);
        img.true_z = std::move(z);
        targets.push_back(std::move(img));
    }
    std::string data_path = (dir / "targets.gdata").string();
    save_dataset(targets, data_path);

    json cfg;
    cfg["n"] = n;
    write_manifest(dir, "generate", cfg, seed, {ckpt_path}, {data_path}, timer.seconds());
    std::cout << "wrote " << data_path << " (" << n << " targets)\n";
    return kOk;
}

int cmd_recover(const std::string& ckpt_path, const std::string& targets_path,
                const RecoveryConfig& cfg, const std::string& out, int jobs) {
    Timer timer;
    fs::path dir = prepare_run_dir(out);
    GeneratorCheckpoint ckpt = load_checkpoint(ckpt_path);
    auto dataset = load_dataset(targets_path);

    cfg.validate(); // reject bad knobs up front instead of per target

    std::vector<BatchTarget> batch;
    for (const LabeledImage& img : dataset) {
        BatchTarget t;
        t.image = img.pixels;
        if (img.true_z) t.truth = GroundTruth{*img.true_z, img.label};
        batch.push_back(std::move(t));
    }
    auto results = recover_batch(batch, ckpt, cfg, jobs);

    fs::create_directories(dir / "traces");
    std::vector<EvalRecord> records;
    int failures = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const RecoveryResult& r = results[i];
        const LabeledImage& img = dataset[i];
        if (r.failed) {
            ++failures;
            std::cerr << "target " << img.id << " failed: " << r.error << "\n";
            continue;
        }
        EvalRecord rec;
        rec.id = img.id;
        rec.provenance = img.provenance;
        rec.recon_mse = r.recon_mse;
        rec.initial_mse = r.initial_mse;
        if (img.true_z) rec.z_error = z_recovery_error(*img.true_z, r.z_p);
        rec.label_true = img.label;
        rec.label_decoded = r.decoded_label;
        rec.regularizer_enabled = cfg.use_regularizer;
        rec.iterations = r.iterations;
        records.push_back(std::move(rec));
        write_trace_csv(r.trace, (dir / "traces" / (img.id + ".csv")).string());
    }
    if (records.empty()) throw NumericError("recover: every target failed");
    std::string records_path = (dir / "records.csv").string();
    write_records_csv(records, records_path);

    write_manifest(dir, "recover", recovery_config_to_json(cfg), cfg.rng_seed,
                   {ckpt_path, targets_path}, {records_path}, timer.seconds());
    std::cout << "recovered " << records.size() << "/" << results.size() << " targets ("
              << failures << " failures)\n";
    return kOk;
}

int cmd_eval(const std::vector<std::string>& run_dirs, const std::string& out) {
    Timer timer;
    fs::path dir = prepare_run_dir(out);

    // Group records by (provenance, regularizer) across all runs.
    std::map<std::pair<std::string, bool>, std::vector<EvalRecord>> groups;
    std::vector<CurveSeries> curves;
    std::vector<std::string> inputs;
    const char* colors[] = {"#cc0000", "#0044cc", "#00aa44", "#aa7700"};
    int series_idx = 0;

    for (const std::string& run : run_dirs) {
        std::string records_path = (fs::path(run) / "records.csv").string();
        inputs.push_back(records_path);
        auto records = read_records_csv(records_path);
        for (const EvalRecord& r : records)
            groups[{provenance_name(r.provenance), r.regularizer_enabled}].push_back(r);

        // Mean recon MSE vs iteration over all traces of the run.
        std::map<int, std::pair<double, int>> sums;
        fs::path traces = fs::path(run) / "traces";
        if (fs::exists(traces)) {
            for (const auto& entry : fs::directory_iterator(traces)) {
                RecoveryTrace t = read_trace_csv(entry.path().string());
                for (const TracePoint& p : t.points) {
                    sums[p.iteration].first += p.recon_mse;
                    sums[p.iteration].second += 1;
                }
            }
        }
        if (!sums.empty()) {
            CurveSeries s;
            bool reg = !records.empty() && records[0].regularizer_enabled;
            s.name = fs::path(run).filename().string() + (reg ? " (reg)" : " (no reg)");
            s.color = colors[series_idx % 4];
            s.dashed = !reg;
            // only iterations all traces reached, so means stay comparable
            int full = 0;
            for (const auto& [it, sc] : sums) full = std::max(full, sc.second);
            for (const auto& [it, sc] : sums)
                if (sc.second == full) s.points.emplace_back(it, sc.first / sc.second);
            curves.push_back(std::move(s));
            ++series_idx;
        }
    }
    if (groups.empty()) throw ConfigError("eval: no records found in the given run directories");

    json report;
    std::ostringstream table;
    table << "Recovered From | Regularizer | Reconstruction Loss | Recovery Accuracy of y | n\n";
    for (const auto& [key, records] : groups) {
        AggregateReport agg = aggregate(records);
        json g;
        g["provenance"] = key.first;
        g["regularizer"] = key.second;
        g["mean_recon_mse"] = agg.mean_recon_mse;
        g["mean_initial_mse"] = agg.mean_initial_mse;
        g["accuracy"] = agg.accuracy;
        if (agg.mean_z_error) g["mean_z_error"] = *agg.mean_z_error;
        g["count"] = agg.count;
        report["groups"].push_back(g);
        char line[256];
        std::snprintf(line, sizeof(line), "%-14s | %-11s | %.4f (%.4f) | %.4f | %d\n",
                      key.first.c_str(), key.second ? "on" : "off", agg.mean_recon_mse,
                      agg.mean_initial_mse, agg.accuracy, agg.count);
        table << line;
    }

    std::string report_json_path = (dir / "report.json").string();
    std::ofstream(report_json_path) << report.dump(2) << "\n";
    std::string report_txt_path = (dir / "report.txt").string();
    std::ofstream(report_txt_path) << table.str();
    std::cout << table.str();

    std::vector<std::string> outputs{report_json_path, report_txt_path};
    if (!curves.empty()) {
        std::string svg_path = (dir / "curves.svg").string();
        write_svg_curves(curves, "reconstruction loss (per-pixel MSE)", svg_path);
        outputs.push_back(svg_path);
    }
    json cfg;
    cfg["runs"] = run_dirs;
    write_manifest(dir, "eval", cfg, 0, inputs, outputs, timer.seconds());
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional-GAN inversion toolkit"};
    app.require_subcommand(1);

    std::string spec_path, config_path, out_dir, ckpt_path, data_path, targets_path, gen_spec_path;
    std::uint64_t seed = 0;
    int per_class = 32, holdout_per_class = 32, n = 64, jobs = 1;
    std::vector<std::string> run_dirs;

    auto* mk = app.add_subcommand("make-generator", "build and save a random checkpoint");
    mk->add_option("--spec", spec_path, "generator spec JSON");
    mk->add_option("--seed", seed, "init seed");
    mk->add_option("--out", out_dir, "run directory")->required();

    auto* sd = app.add_subcommand("synth-data", "emit a glyph dataset plus preview grid");
    sd->add_option("--config", config_path, "glyph config JSON");
    sd->add_option("--per-class", per_class, "training images per class");
    sd->add_option("--holdout-per-class", holdout_per_class, "holdout images per class");
    sd->add_option("--seed", seed, "dataset seed");
    sd->add_option("--out", out_dir, "run directory")->required();

    auto* tr = app.add_subcommand("train", "train a conditional GAN on a dataset");
    tr->add_option("--data", data_path, "training dataset (.gdata)")->required();
    tr->add_option("--gen-spec", gen_spec_path, "generator spec JSON");
    tr->add_option("--config", config_path, "train config JSON");
    tr->add_option("--out", out_dir, "run directory")->required();

    auto* ge = app.add_subcommand("generate", "sample (z, y, G(z,y)) triples with ground truth");
    ge->add_option("--ckpt", ckpt_path, "generator checkpoint")->required();
    ge->add_option("--n", n, "number of samples");
    ge->add_option("--seed", seed, "sampling seed");
    ge->add_option("--out", out_dir, "run directory")->required();

    RecoveryConfig rc;
    double lambda_flag = -1.0;
    bool no_reg = false;
    auto* re = app.add_subcommand("recover", "batch latent/conditional recovery");
    re->add_option("--ckpt", ckpt_path, "generator checkpoint")->required();
    re->add_option("--targets", targets_path, "target dataset (.gdata)")->required();
    re->add_option("--config", config_path, "recovery config JSON");
    re->add_flag("--no-reg", no_reg, "disable the one-hot regularizer");
    re->add_option("--lambda", lambda_flag, "regularizer weight (default 1/d_y)");
    re->add_option("--alpha", rc.alpha, "z step size");
    re->add_option("--beta", rc.beta, "y step size");
    re->add_option("--schedule", rc.schedule, "updates before the one-time step halving");
    re->add_option("--max-iters", rc.max_iterations, "iteration budget");
    re->add_option("--plateau-window", rc.plateau_window, "plateau window");
    re->add_option("--plateau-eps", rc.plateau_rel_eps, "plateau relative improvement");
    re->add_option("--seed", rc.rng_seed, "base recovery seed");
    re->add_option("--trace-stride", rc.trace_stride, "iterations between trace samples");
    re->add_option("--jobs", jobs, "worker count");
    re->add_option("--out", out_dir, "run directory")->required();

    auto* ev = app.add_subcommand("eval", "aggregate recover runs into a report");
    ev->add_option("--run", run_dirs, "recover run directory (repeatable)")->required();
    ev->add_option("--out", out_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc_code = app.exit(e);
        if (rc_code == 0) return kOk;
        std::cerr << "error: category=usage msg=\"" << e.get_name() << "\"\n";
        return kUsage;
    }

    try {
        if (mk->parsed()) return cmd_make_generator(spec_path, seed, out_dir);
        if (sd->parsed())
            return cmd_synth_data(config_path, per_class, holdout_per_class, seed, out_dir);
        if (tr->parsed()) return cmd_train(data_path, gen_spec_path, config_path, out_dir);
        if (ge->parsed()) return cmd_generate(ckpt_path, n, seed, out_dir);
        if (re->parsed()) {
            RecoveryConfig cfg = rc;
            if (!config_path.empty()) {
                cfg = recovery_config_from_json(parse_json_file(config_path));
                // flags override file values
                for (const auto* opt : re->get_options()) {
                    if (opt->count() == 0) continue;
                    std::string name = opt->get_name();
                    if (name == "--alpha") cfg.alpha = rc.alpha;
                    else if (name == "--beta") cfg.beta = rc.beta;
                    else if (name == "--schedule") cfg.schedule = rc.schedule;
                    else if (name == "--max-iters") cfg.max_iterations = rc.max_iterations;
                    else if (name == "--plateau-window") cfg.plateau_window = rc.plateau_window;
                    else if (name == "--plateau-eps") cfg.plateau_rel_eps = rc.plateau_rel_eps;
                    else if (name == "--seed") cfg.rng_seed = rc.rng_seed;
                    else if (name == "--trace-stride") cfg.trace_stride = rc.trace_stride;
                }
            }
            if (lambda_flag >= 0.0) cfg.lambda = lambda_flag;
            if (no_reg) cfg.use_regularizer = false;
            return cmd_recover(ckpt_path, targets_path, cfg, out_dir, jobs);
        }
        if (ev->parsed()) return cmd_eval(run_dirs, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: category=config msg=\"" << e.what() << "\"\n";
        return kConfig;
    } catch (const VersionError& e) {
        std::cerr << "error: category=version msg=\"" << e.what() << "\"\n";
        return kFormat;
    } catch (const FormatError& e) {
        std::cerr << "error: category=format msg=\"" << e.what() << "\"\n";
        return kFormat;
    } catch (const NumericError& e) {
        std::cerr << "error: category=numeric msg=\"" << e.what() << "\"\n";
        return kNumeric;
    } catch (const IoError& e) {
        std::cerr << "error: category=missing_file msg=\"" << e.what() << "\"\n";
        return kMissingFile;
    } catch (const std::exception& e) {
        std::cerr << "error: category=internal msg=\"" << e.what() << "\"\n";
        return kInternal;
    }
    return kUsage;
}
