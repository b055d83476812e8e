// Command-line entry point: theory-oracle verification, gradient audits,
// training, evaluation, and diversified inference over the synthetic tasks.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bcgn/checkpoint.hpp"
#include "bcgn/gradcheck.hpp"
#include "bcgn/metrics.hpp"
#include "bcgn/oracle.hpp"
#include "bcgn/run_config.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw bcgn::IoError("cannot open '" + path + "' for writing");
    f << content;
    if (!f) throw bcgn::IoError("write failed for '" + path + "'");
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw bcgn::IoError("cannot open '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw bcgn::ConfigError("config: " + std::string(e.what()));
    }
    return j;
}

int threads_from_env() {
    const char* v = std::getenv("BCGN_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return n >= 1 ? n : 1;
}

// ---------------------------------------------------------------------------
// shared config handling: JSON file + flag overrides
// ---------------------------------------------------------------------------

struct ConfigFlags {
    std::string config_path;
    std::map<std::string, double> nums;
    std::map<std::string, std::string> strs;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        auto num = [&](const char* flag, const char* key, const char* help) {
            cmd->add_option_function<double>(
                flag, [this, key](double v) { nums[key] = v; }, help);
        };
        auto str = [&](const char* flag, const char* key, const char* help) {
            cmd->add_option_function<std::string>(
                flag, [this, key](const std::string& v) { strs[key] = v; }, help);
        };
        num("--gamma", "gamma", "balance factor for reconstructed-end fakes");
        num("--lambda", "lambda", "cycle-consistency weight");
        num("--lambda-kl", "lambda_kl", "encoder KL weight");
        num("--alpha", "alpha", "weight-decay prior strength");
        num("--m", "m", "latent draws per direction");
        num("--lr", "lr", "learning rate");
        num("--beta1", "beta1", "ADAM beta1");
        num("--beta2", "beta2", "ADAM beta2");
        num("--epochs", "epochs", "total epochs");
        num("--epochs-constant", "epochs_constant", "epochs before lr decay");
        num("--batch", "batch", "batch size");
        num("--seed", "seed", "run seed");
        num("--warmup-pairs", "warmup_pairs", "paired warm-up items per epoch");
        num("--image-size", "image_size", "image height/width");
        num("--filters", "filters", "base filter count");
        num("--res-blocks", "res_blocks", "residual blocks");
        num("--max-iters", "max_iters", "hard iteration cap (0 = none)");
        num("--dataset-size", "dataset_size", "items per domain");
        num("--checkpoint-every", "checkpoint_every", "checkpoint interval in iterations");
        str("--task", "task", "shift | mixture");
        str("--objective", "objective", "lsgan | standard");
        str("--prior", "prior", "l2 | l1sq");
        str("--latent", "latent", "sfm | noise");
        str("--lr-decay", "lr_decay", "linear | cosine");
        str("--out-dir", "out_dir", "output directory");
    }

    bcgn::RunConfig resolve() const {
        json j = config_path.empty() ? json::object() : read_json_file(config_path);
        for (const auto& [k, v] : nums) j[k] = v;
        for (const auto& [k, v] : strs) j[k] = v;
        return bcgn::parse_run_config(j);
    }
};

void write_manifest(const bcgn::RunConfig& cfg, const std::string& command,
                    const std::string& extra_key = "", const json& extra = {}) {
    json m;
    m["command"] = command;
    m["config"] = bcgn::run_config_to_json(cfg);
    if (!extra_key.empty()) m[extra_key] = extra;
    write_text(cfg.out_dir + "/manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

int cmd_oracle(const std::vector<double>& gammas, int trials, uint64_t seed, int support,
               const std::string& out, bool inject_bug) {
    bcgn::oracle::OracleOptions opt;
    if (!gammas.empty()) opt.gammas = gammas;
    opt.trials = trials;
    opt.seed = seed;
    opt.support = support;
    opt.inject_sign_bug = inject_bug;
    auto checks = bcgn::oracle::run_oracle_suite(opt);

    json report;
    report["options"] = {{"gammas", opt.gammas},
                         {"trials", opt.trials},
                         {"support", opt.support},
                         {"seed", opt.seed}};
    bool all_pass = true;
    for (const auto& c : checks) {
        std::printf("[%s] %s: observed %.12g, bound %.12g%s%s\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.observed, c.bound, c.note.empty() ? "" : " -- ",
                    c.note.c_str());
        report["checks"].push_back({{"name", c.name},
                                    {"pass", c.pass},
                                    {"observed", c.observed},
                                    {"bound", c.bound},
                                    {"note", c.note}});
        all_pass &= c.pass;
    }
    std::printf("%s: %zu checks\n", all_pass ? "OK" : "FAILURES", checks.size());
    report["pass"] = all_pass;
    if (!out.empty()) write_text(out, report.dump(2) + "\n");
    return all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(uint64_t seed, int seeds, bool f64, const std::string& out) {
    std::vector<bcgn::GradCheckEntry> report;
    if (f64) {
        bcgn::GradCheckSettings<double> s;
        s.seeds = seeds;
        report = bcgn::run_gradcheck_suite<double>(seed, s);
    } else {
        bcgn::GradCheckSettings<float> s;
        s.seeds = seeds;
        report = bcgn::run_gradcheck_suite<float>(seed, s);
    }
    json j;
    j["precision"] = f64 ? "f64" : "f32";
    j["seeds"] = seeds;
    bool all_pass = true;
    for (const auto& e : report) {
        std::printf("[%s] %-28s max rel err %.3e (tol %.1e)\n", e.pass ? "PASS" : "FAIL",
                    e.name.c_str(), e.max_rel_err, e.tolerance);
        j["checks"].push_back({{"name", e.name},
                               {"max_rel_err", e.max_rel_err},
                               {"tolerance", e.tolerance},
                               {"pass", e.pass}});
        all_pass &= e.pass;
    }
    std::printf("%s: %zu gradient checks\n", all_pass ? "OK" : "FAILURES", report.size());
    j["pass"] = all_pass;
    if (!out.empty()) write_text(out, j.dump(2) + "\n");
    return all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void append_metrics_line(std::FILE* f, const bcgn::IterationMetrics& m) {
    std::fprintf(f,
                 "{\"iter\":%" PRId64
                 ",\"epoch\":%d,\"g_loss\":%.17g,\"dA_loss\":%.17g,\"dB_loss\":%.17g,"
                 "\"recon_l1\":%.17g,\"kl\":%.17g,\"lr\":%.17g}\n",
                 m.iter, m.epoch, m.g_loss, m.da_loss, m.db_loss, m.recon_l1, m.kl, m.lr);
}

int cmd_train(const ConfigFlags& flags, const std::string& resume_path) {
    bcgn::RunConfig cfg = flags.resolve();
    cfg.train.threads = threads_from_env();
    fs::create_directories(cfg.out_dir);
    write_manifest(cfg, "train", "resume", resume_path.empty() ? json() : json(resume_path));

    auto [a, b] = bcgn::make_task_datasets(cfg);
    std::optional<bcgn::TrainState> resume;
    if (!resume_path.empty()) resume = bcgn::load_checkpoint(resume_path);

    std::FILE* metrics = std::fopen((cfg.out_dir + "/metrics.jsonl").c_str(), "w");
    if (!metrics) throw bcgn::IoError("cannot open metrics file in " + cfg.out_dir);

    bcgn::TrainHooks hooks;
    hooks.on_iteration = [&](bcgn::TrainState& state, const bcgn::IterationMetrics& m) {
        append_metrics_line(metrics, m);
        if (cfg.checkpoint_every > 0 && m.iter % cfg.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "/checkpoint_%08" PRId64 ".bcgn", m.iter);
            bcgn::save_checkpoint(cfg.out_dir + name, state, cfg.train);
        }
    };
    auto state = bcgn::train_loop(a, b, cfg.train, hooks, std::move(resume));
    std::fclose(metrics);

    bcgn::save_checkpoint(cfg.out_dir + "/final.bcgn", state, cfg.train);
    auto ev = bcgn::evaluate_pairs(state.models, cfg.train, a, b);
    char final_buf[256];
    std::snprintf(final_buf, sizeof final_buf,
                  "{\"iters\":%" PRId64 ",\"recon_l1\":%.17g,\"translate_l1\":%.17g}\n",
                  state.global_iter, ev.recon_l1, ev.translate_l1);
    write_text(cfg.out_dir + "/final.json", final_buf);
    std::printf("trained %" PRId64 " iterations; recon_l1 %.6f; outputs in %s\n",
                state.global_iter, ev.recon_l1, cfg.out_dir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const ConfigFlags& flags, const std::string& run_dir, std::string checkpoint,
             std::vector<std::string> metrics, const std::string& out) {
    bcgn::RunConfig cfg;
    if (!run_dir.empty()) {
        json manifest = read_json_file(run_dir + "/manifest.json");
        cfg = bcgn::parse_run_config(manifest.at("config"));
        if (checkpoint.empty()) checkpoint = run_dir + "/final.bcgn";
    } else {
        cfg = flags.resolve();
    }
    if (checkpoint.empty())
        throw bcgn::ConfigError("eval: need --run <dir> or --checkpoint <file>");

    static const std::vector<std::string> valid{"recon_l1", "translate_l1", "gdl", "hist",
                                                "mmd", "coverage"};
    if (metrics.empty()) metrics = {"recon_l1", "translate_l1", "gdl", "hist", "mmd"};
    for (const auto& m : metrics) {
        if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
            std::string names;
            for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
            throw bcgn::ConfigError("eval: unknown metric '" + m + "' (valid: " + names + ")");
        }
    }

    auto state = bcgn::load_checkpoint(checkpoint);
    auto [a, b] = bcgn::make_task_datasets(cfg);

    json report;
    report["command"] = "eval";
    report["checkpoint"] = checkpoint;
    report["config"] = bcgn::run_config_to_json(cfg);

    std::optional<bcgn::PairEval> pair_eval;
    auto need_pairs = [&]() -> bcgn::PairEval& {
        if (!pair_eval) pair_eval = bcgn::evaluate_pairs(state.models, cfg.train, a, b);
        return *pair_eval;
    };

    for (const auto& m : metrics) {
        if (m == "recon_l1") {
            report["metrics"]["recon_l1"] = need_pairs().recon_l1;
        } else if (m == "translate_l1") {
            report["metrics"]["translate_l1"] = need_pairs().translate_l1;
        } else if (m == "gdl") {
            auto [rx, ry] = bcgn::reconstruct_items(state.models, cfg.train, a, b);
            double acc = 0;
            for (size_t i = 0; i < rx.size(); ++i) {
                acc += bcgn::metric_gdl(rx[i], a.items[i]);
                acc += bcgn::metric_gdl(ry[i], b.items[i]);
            }
            report["metrics"]["gdl"] = acc / double(2 * rx.size());
        } else if (m == "hist") {
            auto translated = bcgn::translate_items(state.models, cfg.train, a, b);
            report["metrics"]["hist"] = bcgn::metric_hist_intersection(translated, b.items);
        } else if (m == "mmd") {
            auto [rx, ry] = bcgn::reconstruct_items(state.models, cfg.train, a, b);
            std::vector<bcgn::Tensor<float>> src_a(a.items.begin(),
                                                   a.items.begin() + long(rx.size()));
            std::vector<bcgn::Tensor<float>> src_b(b.items.begin(),
                                                   b.items.begin() + long(ry.size()));
            report["metrics"]["mmd"] =
                bcgn::metric_mmd_rbf(rx, src_a) + bcgn::metric_mmd_rbf(ry, src_b);
        } else if (m == "coverage") {
            if (cfg.task != bcgn::TaskKind::Mixture)
                throw bcgn::ConfigError("eval: coverage requires the mixture task");
            auto translated = bcgn::translate_items(state.models, cfg.train, a, b);
            auto cov = bcgn::metric_mode_coverage(
                translated, bcgn::MixtureSpec::defaults(cfg.train.net.image_size));
            report["metrics"]["coverage"] = {{"modes_hit", cov.modes_hit},
                                             {"quality_ratio", cov.quality_ratio}};
        }
    }
    const std::string text = report.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    if (!out.empty()) write_text(out, text);
    return 0;
}

// ---------------------------------------------------------------------------
// diversify
// ---------------------------------------------------------------------------

int cmd_diversify(const ConfigFlags& flags, const std::string& run_dir, std::string checkpoint,
                  int index, int k, uint64_t latent_seed, const std::string& out) {
    if (k < 2) throw bcgn::ConfigError("diversify: k must be >= 2");
    bcgn::RunConfig cfg;
    if (!run_dir.empty()) {
        json manifest = read_json_file(run_dir + "/manifest.json");
        cfg = bcgn::parse_run_config(manifest.at("config"));
        if (checkpoint.empty()) checkpoint = run_dir + "/final.bcgn";
    } else {
        cfg = flags.resolve();
    }
    if (checkpoint.empty())
        throw bcgn::ConfigError("diversify: need --run <dir> or --checkpoint <file>");

    auto state = bcgn::load_checkpoint(checkpoint);
    auto [a, b] = bcgn::make_task_datasets(cfg);
    if (index < 0 || size_t(index) >= a.size())
        throw bcgn::ConfigError("diversify: --index out of range");
    auto x = bcgn::stack_items(a, {index});

    // latent 0 is the deterministic SFM of the reference item; the rest are
    // fresh noise maps replacing it
    std::vector<bcgn::Tensor<float>> latents;
    const int hw = cfg.train.net.image_size;
    if (cfg.train.latent == bcgn::LatentKind::Sfm) {
        auto yref = bcgn::stack_items(b, {0});
        latents.push_back(
            bcgn::encoder_forward(state.models.eb, cfg.train.net, yref, nullptr).sfm.detached());
    } else {
        latents.push_back(bcgn::Tensor<float>::zeros({1, 1, hw, hw}));
    }
    bcgn::Rng rng(bcgn::Rng::stream(latent_seed, 0xD1F));
    auto bank = bcgn::make_noise_bank(k - 1, 1, hw, hw, rng);
    for (auto& f : bank.maps) latents.push_back(f);

    auto outputs = bcgn::infer_diversify(state.models, x, latents, bcgn::Direction::AtoB);

    json report;
    report["command"] = "diversify";
    report["k"] = k;
    report["index"] = index;
    report["latent_seed"] = latent_seed;
    json matrix = json::array();
    for (size_t i = 0; i < outputs.size(); ++i) {
        json row = json::array();
        for (size_t j = 0; j < outputs.size(); ++j) {
            double mad = 0;
            for (size_t p = 0; p < outputs[i].data().size(); ++p)
                mad += std::abs(double(outputs[i].data()[p]) - double(outputs[j].data()[p]));
            row.push_back(mad / double(outputs[i].numel()));
        }
        matrix.push_back(row);
    }
    report["pairwise_mean_abs_diff"] = matrix;

    if (!out.empty()) {
        std::vector<bcgn::NamedTensor> entries;
        for (size_t i = 0; i < outputs.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "output/%04zu", i);
            bcgn::NamedTensor e{name, {}, {outputs[i].data().begin(), outputs[i].data().end()}};
            for (int d : outputs[i].shape) e.dims.push_back(uint32_t(d));
            entries.push_back(std::move(e));
            std::snprintf(name, sizeof name, "latent/%04zu", i);
            bcgn::NamedTensor l{name, {}, {latents[i].data().begin(), latents[i].data().end()}};
            for (int d : latents[i].shape) l.dims.push_back(uint32_t(d));
            entries.push_back(std::move(l));
        }
        bcgn::write_container(out, entries);
        report["output"] = out;
    }
    std::fputs((report.dump(2) + "\n").c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cycle-consistent adversarial training with MAP optimization, latent-sampling"
                 " marginalization, and an exact equilibrium oracle"};
    app.require_subcommand(1);

    // oracle
    auto* oracle = app.add_subcommand("oracle", "verify the equilibrium theory numerically");
    std::vector<double> gammas;
    int trials = 10000, support = 8;
    uint64_t oracle_seed = 1;
    std::string oracle_out;
    bool inject_bug = false;
    oracle->add_option("--gamma", gammas, "balance factors to check");
    oracle->add_option("--trials", trials, "random triples per bound");
    oracle->add_option("--seed", oracle_seed, "rng seed");
    oracle->add_option("--support", support, "distribution support size");
    oracle->add_option("--out", oracle_out, "write a JSON report here");
    oracle->add_flag("--inject-bug", inject_bug, "test hook: flip a sign to force failures")
        ->group("");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of all ops");
    uint64_t gc_seed = 1;
    int gc_seeds = 5;
    bool gc_f64 = false;
    std::string gc_out;
    gradcheck->add_option("--seed", gc_seed, "rng seed");
    gradcheck->add_option("--seeds", gc_seeds, "random restarts per op");
    gradcheck->add_flag("--f64", gc_f64, "check at double precision (tol 1e-6)");
    gradcheck->add_option("--out", gc_out, "write a JSON report here");

    // train
    auto* train = app.add_subcommand("train", "train on a synthetic two-domain task");
    ConfigFlags train_flags;
    train_flags.add_to(train);
    std::string resume_path;
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    // eval
    auto* eval = app.add_subcommand("eval", "compute metrics for a checkpoint");
    ConfigFlags eval_flags;
    eval_flags.add_to(eval);
    std::string eval_run, eval_ckpt, eval_out;
    std::vector<std::string> eval_metrics;
    eval->add_option("--run", eval_run, "run directory (manifest.json + final.bcgn)");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
    eval->add_option("--metrics", eval_metrics, "metric names")->delimiter(',');
    eval->add_option("--out", eval_out, "write the JSON report here");

    // diversify
    auto* div = app.add_subcommand("diversify", "k translations under replaced latents");
    ConfigFlags div_flags;
    div_flags.add_to(div);
    std::string div_run, div_ckpt, div_out;
    int div_index = 0, div_k = 4;
    uint64_t div_seed = 7;
    div->add_option("--run", div_run, "run directory");
    div->add_option("--checkpoint", div_ckpt, "checkpoint file");
    div->add_option("--index", div_index, "source item index");
    div->add_option("-k,--count", div_k, "number of latents");
    div->add_option("--latent-seed", div_seed, "seed for replacement latents");
    div->add_option("--out", div_out, "container file for the outputs");

    try {
        app.parse(argc, argv);
        if (*oracle)
            return cmd_oracle(gammas, trials, oracle_seed, support, oracle_out, inject_bug);
        if (*gradcheck) return cmd_gradcheck(gc_seed, gc_seeds, gc_f64, gc_out);
        if (*train) return cmd_train(train_flags, resume_path);
        if (*eval) return cmd_eval(eval_flags, eval_run, eval_ckpt, eval_metrics, eval_out);
        if (*div)
            return cmd_diversify(div_flags, div_run, div_ckpt, div_index, div_k, div_seed,
                                 div_out);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const bcgn::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const bcgn::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 2;
    } catch (const bcgn::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
