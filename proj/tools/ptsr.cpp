// Command-line front end: train, infer, eval, saliency, selftest.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ptsr/image_io.hpp"
#include "ptsr/kernels.hpp"
#include "ptsr/selftest.hpp"
#include "ptsr/training.hpp"

namespace fs = std::filesystem;
using namespace ptsr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

constexpr const char* kDataRootEnv = "PTSR_DATA_ROOT";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", c.overrides, "override, e.g. --set model.depth=7 (repeatable)");
    sub->add_option("--seed", c.seed, "seed for training, model and discriminator init");
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw UsageError(fmt::format("cannot read '{}'", p.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Layers config file, named flags, then --set overrides on `base`, echoing
/// every override to the log.
ExperimentConfig build_config(ExperimentConfig base, const Common& c, const KeyValues& flags,
                              bool seed_models) {
    if (!c.config_path.empty()) base = apply_key_values(base, parse_config_text(read_text(c.config_path)));
    KeyValues kv = flags;
    if (c.seed) {
        kv["train.seed"] = std::to_string(*c.seed);
        if (seed_models) {
            kv["model.seed"] = std::to_string(*c.seed);
            kv["disc.seed"] = std::to_string(*c.seed + 1);
        }
    }
    for (const auto& o : c.overrides)
        for (const auto& [k, v] : parse_override(o)) kv[k] = v;
    for (const auto& [k, v] : kv) std::cerr << fmt::format("# override {}={}\n", k, v);
    return apply_key_values(base, kv);
}

void print_header(const std::string& cmd, const ExperimentConfig& cfg) {
    std::cerr << fmt::format("# ptsr {} effective config\n", cmd);
    std::istringstream in(config_text(cfg));
    for (std::string line; std::getline(in, line);) std::cerr << "#   " << line << '\n';
}

fs::path data_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
    throw UsageError(fmt::format("no data root: pass --data-root or set {}", kDataRootEnv));
}

void require_dir(const fs::path& p) {
    if (!fs::is_directory(p)) throw CorpusError(fmt::format("data root '{}' does not exist", p.string()));
}

// ---- train ----

struct TrainArgs {
    Common common;
    std::string data_root, out_dir, resume, loss_variant;
    std::optional<int> scale;
    std::optional<std::size_t> depth, max_steps, epochs;
};

int run_train(const TrainArgs& a) {
    KeyValues flags;
    if (a.scale) flags["model.scale"] = std::to_string(*a.scale);
    if (a.depth) flags["model.depth"] = std::to_string(*a.depth);
    if (!a.loss_variant.empty()) flags["loss.variant"] = a.loss_variant;
    if (a.max_steps) flags["train.max_steps"] = std::to_string(*a.max_steps);
    if (a.epochs) flags["train.max_epochs"] = std::to_string(*a.epochs);

    TrainState st;
    if (!a.resume.empty()) {
        const TrainState stored = load_checkpoint(a.resume);
        const ExperimentConfig cfg = build_config(stored.config, a.common, flags, false);
        cfg.validate();
        st = load_checkpoint(a.resume, &cfg);
        std::cerr << fmt::format("# resuming from '{}' at step {} (epoch {})\n", a.resume, st.step, st.epoch);
    } else {
        const ExperimentConfig cfg = build_config(ExperimentConfig{}, a.common, flags, true);
        cfg.validate();
        st = TrainState::create(cfg);
    }
    const ExperimentConfig& cfg = st.config;
    print_header("train", cfg);
    if (cfg.generator.lr_height != cfg.generator.lr_width)
        throw UsageError("training crops are square: model.lr_height must equal model.lr_width");

    const fs::path root = data_root(a.data_root);
    require_dir(root);
    auto train_images = load_corpus(root, cfg.data.train_split);
    std::vector<PairedSample> val;
    if (cfg.data.val_split.empty()) {
        val = validation_pairs(train_images, cfg);
    } else {
        val = validation_pairs(load_corpus(root, cfg.data.val_split), cfg);
    }
    const std::size_t n_train = train_images.size();
    const PairSampler sampler(std::move(train_images), cfg.training_scale(), cfg.generator.lr_height,
                              cfg.data.pair_mode, cfg.data.augment);
    std::cerr << fmt::format("# {} training images ({} usable), {} validation crops\n", n_train,
                             sampler.size(), val.size());
    if (sampler.size() == 0) throw CorpusError("no training image is large enough for one crop");

    const fs::path out(a.out_dir);
    fs::create_directories(out);
    std::ofstream(out / "config.txt") << config_text(cfg);
    const bool fresh = st.step == 0;
    const auto mode = fresh ? std::ios::trunc : std::ios::app;
    std::ofstream step_log(out / "train_log.csv", mode), epoch_log(out / "epoch_log.csv", mode);
    if (fresh) {
        write_step_log_header(step_log);
        write_epoch_log_header(epoch_log);
    }
    bool have_best = fs::exists(out / "best.ckpt") && !fresh;
    TrainLoopHooks hooks{&step_log, &epoch_log, [&](const TrainState& s, bool is_best) {
                             if (is_best) {
                                 save_checkpoint(s, out / "best.ckpt");
                                 have_best = true;
                             } else {
                                 save_checkpoint(s, out / fmt::format("epoch_{:04}.ckpt", s.epoch));
                             }
                         }};
    run_training(st, sampler, val, hooks);
    save_checkpoint(st, out / "last.ckpt");
    if (!have_best) fs::copy_file(out / "last.ckpt", out / "best.ckpt", fs::copy_options::overwrite_existing);
    std::cout << fmt::format("trained {} step(s), {} epoch(s), lr {:.3g}, best val L_R {:.6g}; wrote {}\n",
                             st.step, st.epoch, st.lr, st.best_val, (out / "best.ckpt").string());
    return kExitOk;
}

// ---- infer ----

struct InferArgs {
    Common common;
    std::string checkpoint, input, output;
    std::optional<int> scale;
    int bit_depth = 8;
};

int run_infer(const InferArgs& a) {
    TrainState st = load_checkpoint(a.checkpoint);
    KeyValues flags;
    if (a.scale) flags["model.scale"] = std::to_string(*a.scale);
    st.config = build_config(st.config, a.common, flags, false);
    print_header("infer", st.config);
    const Image lr = load_image(a.input);
    Image sr;
    if (st.config.scale == 4 && st.config.compose == ComposeMode::frozen) {
        // two chained 2x runs, with the intermediate stored at the output bit depth
        sr = super_resolve(st.gen, quantize(super_resolve(st.gen, lr, 2), a.bit_depth), 2);
    } else {
        sr = super_resolve(st.gen, lr, st.config.scale);
    }
    save_png(a.output, sr, a.bit_depth);
    std::cout << fmt::format("wrote {} ({}x{})\n", a.output, sr.dim(1), sr.dim(0));
    return kExitOk;
}

// ---- eval ----

struct EvalArgs {
    Common common;
    std::string checkpoint, data_root, dataset, output, method = "model", metric_space;
    std::optional<int> scale;
    std::optional<std::size_t> shave;
};

int run_eval(const EvalArgs& a) {
    std::optional<TrainState> st;
    ExperimentConfig base;
    if (a.method == "model") {
        if (a.checkpoint.empty()) throw UsageError("--method model needs --checkpoint");
        st = load_checkpoint(a.checkpoint);
        base = st->config;
    }
    KeyValues flags;
    if (a.scale) flags["model.scale"] = std::to_string(*a.scale);
    if (!a.metric_space.empty()) flags["metrics.space"] = a.metric_space;
    if (a.shave) flags["metrics.shave"] = std::to_string(*a.shave);
    const ExperimentConfig cfg = build_config(base, a.common, flags, false);
    cfg.validate();
    print_header("eval", cfg);

    const fs::path root = data_root(a.data_root);
    require_dir(root);
    const auto images = load_corpus(root, a.dataset);
    std::vector<MetricRow> rows;
    for (const auto& img : images) {
        const PairedSample p = make_eval_pair(img, cfg.scale);
        Image sr;
        if (a.method == "model") sr = super_resolve(st->gen, p.lr, cfg.scale);
        else if (a.method == "bicubic") sr = bicubic_upscale(p.lr, cfg.scale);
        else sr = p.hr;
        const PairMetrics m = evaluate_pair(sr, p.hr, cfg.metrics);
        rows.push_back({img.id, cfg.scale, m.psnr_db, m.ssim, cfg.metrics.space, cfg.metrics.shave});
        std::cerr << fmt::format("# {}: {:.4f} dB, SSIM {:.4f}\n", img.id, m.psnr_db, m.ssim);
    }
    if (a.output.empty()) {
        write_metric_csv(std::cout, rows);
    } else {
        std::ofstream out(a.output);
        if (!out) throw ImageIoError(fmt::format("cannot write '{}'", a.output));
        write_metric_csv(out, rows);
        const MetricRow mean = mean_row(rows);
        std::cout << fmt::format("{} images: mean {:.4f} dB, SSIM {:.4f}; wrote {}\n", rows.size(),
                                 mean.psnr_db, mean.ssim, a.output);
    }
    return kExitOk;
}

// ---- saliency ----

struct SaliencyArgs {
    Common common;
    std::string checkpoint, lr, hr, output, color;
    std::optional<int> scale;
};

// Piecewise-linear "jet" ramp.
Image jet(const Tensor& v) {
    Image out({v.dim(0), v.dim(1), 3});
    for (std::size_t y = 0; y < v.dim(0); ++y)
        for (std::size_t x = 0; x < v.dim(1); ++x) {
            const double t = v.at(y, x, 0);
            auto ramp = [&](double c) { return std::clamp(1.5 - std::abs(4.0 * t - c), 0.0, 1.0); };
            out.at(y, x, 0) = ramp(3.0);
            out.at(y, x, 1) = ramp(2.0);
            out.at(y, x, 2) = ramp(1.0);
        }
    return out;
}

int run_saliency(const SaliencyArgs& a) {
    TrainState st = load_checkpoint(a.checkpoint);
    KeyValues flags;
    if (a.scale) flags["model.scale"] = std::to_string(*a.scale);
    st.config = build_config(st.config, a.common, flags, false);
    print_header("saliency", st.config);
    const Image lr = load_image(a.lr), hr = load_image(a.hr);
    const Tensor vmap = visual_activation_map(st.gen, lr, hr, st.config.scale, st.config.loss);
    save_png(a.output, vmap, 8);
    if (!a.color.empty()) save_png(a.color, jet(vmap), 8);
    std::cout << fmt::format("wrote {} ({}x{})\n", a.output, vmap.dim(1), vmap.dim(0));
    return kExitOk;
}

// ---- selftest ----

int run_selftest(const std::string& scratch_flag) {
    const fs::path scratch = scratch_flag.empty()
                                 ? fs::temp_directory_path() / fmt::format("ptsr_selftest_{}", ::getpid())
                                 : fs::path(scratch_flag);
    bool ok = true;
    double total = 0;
    selftest::run_all(scratch, [&](const selftest::CheckResult& r) {
        ok = ok && r.passed;
        total += r.seconds;
        std::cout << fmt::format("{} {} ({:.2f}s): {}\n", r.passed ? "PASS" : "FAIL", r.name,
                                 r.seconds, r.detail)
                  << std::flush;
    });
    if (scratch_flag.empty()) fs::remove_all(scratch);
    std::cout << fmt::format("{} in {:.1f}s\n", ok ? "all checks passed" : "CHECKS FAILED", total);
    return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convolution-free transformer GAN for single-image super-resolution"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a generator/discriminator pair");
    add_common(train, ta.common);
    train->add_option("--data-root", ta.data_root, fmt::format("dataset root (default ${})", kDataRootEnv));
    train->add_option("--out", ta.out_dir, "output directory for checkpoints and logs")->required();
    train->add_option("--scale", ta.scale, "2 or 4")->check(CLI::IsMember({2, 4}));
    train->add_option("--depth", ta.depth, "transformer blocks per translator");
    train->add_option("--loss-variant", ta.loss_variant, "R, R1 or R2")->check(CLI::IsMember({"R", "R1", "R2"}));
    train->add_option("--resume", ta.resume, "continue from a checkpoint");
    train->add_option("--max-steps", ta.max_steps, "stop after this many optimizer steps");
    train->add_option("--epochs", ta.epochs, "maximum epochs");

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "super-resolve one image");
    add_common(infer, ia.common);
    infer->add_option("--checkpoint", ia.checkpoint)->required();
    infer->add_option("--input", ia.input)->required();
    infer->add_option("--output", ia.output, "PNG path")->required();
    infer->add_option("--scale", ia.scale, "2 or 4")->check(CLI::IsMember({2, 4}));
    infer->add_option("--bit-depth", ia.bit_depth, "8 or 16")->check(CLI::IsMember({8, 16}));

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM report over a dataset");
    add_common(eval, ea.common);
    eval->add_option("--checkpoint", ea.checkpoint);
    eval->add_option("--data-root", ea.data_root, fmt::format("dataset root (default ${})", kDataRootEnv));
    eval->add_option("--dataset", ea.dataset, "dataset directory under the root, e.g. Set5")->required();
    eval->add_option("--scale", ea.scale, "2 or 4")->check(CLI::IsMember({2, 4}));
    eval->add_option("--metric-space", ea.metric_space, "rgb or y")->check(CLI::IsMember({"rgb", "y"}));
    eval->add_option("--shave", ea.shave, "border pixels excluded from metrics");
    eval->add_option("--method", ea.method, "model, bicubic or identity")
        ->check(CLI::IsMember({"model", "bicubic", "identity"}));
    eval->add_option("--output", ea.output, "CSV path (default stdout)");

    SaliencyArgs sa;
    auto* sal = app.add_subcommand("saliency", "input-gradient activation map");
    add_common(sal, sa.common);
    sal->add_option("--checkpoint", sa.checkpoint)->required();
    sal->add_option("--lr", sa.lr, "low-resolution input")->required();
    sal->add_option("--hr", sa.hr, "matching high-resolution target")->required();
    sal->add_option("--output", sa.output, "grayscale PNG path")->required();
    sal->add_option("--color", sa.color, "optional color-mapped PNG path");
    sal->add_option("--scale", sa.scale, "2 or 4")->check(CLI::IsMember({2, 4}));

    std::string scratch;
    auto* self = app.add_subcommand("selftest", "gradient checks and invariants");
    self->add_option("--scratch", scratch, "directory for temporary files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    kernels::set_num_threads(threads);

    try {
        if (*train) return run_train(ta);
        if (*infer) return run_infer(ia);
        if (*eval) return run_eval(ea);
        if (*sal) return run_saliency(sa);
        if (*self) return run_selftest(scratch);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const CorpusError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const ImageIoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {  // ConfigError, UsageError, bad values
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
