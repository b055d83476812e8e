#pragma once

// JSON run configuration mirroring the training hyperparameters. Unknown
// keys are rejected; defaults follow the reference values (lambda=10,
// lambda_kl=0.1, m=3, lr=2e-4, betas 0.5/0.999).

#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "bcgn/trainer.hpp"

namespace bcgn {

enum class TaskKind { Shift, Mixture };

struct RunConfig {
    TrainConfig train;
    TaskKind task = TaskKind::Shift;
    int dataset_size = 200;
    int64_t checkpoint_every = 0;  // 0 = only the final checkpoint
    std::string out_dir = "runs/out";

    void validate() const {
        train.validate();
        if (dataset_size < 1) throw ConfigError("config: dataset_size must be >= 1");
        if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be >= 0");
        if (task == TaskKind::Mixture && train.net.channels != 1)
            throw ConfigError("config: mixture task uses 1-channel images");
        if (task == TaskKind::Shift && train.net.channels != 3)
            throw ConfigError("config: shift task uses 3-channel images");
    }
};

inline const std::set<std::string>& run_config_keys() {
    static const std::set<std::string> keys{
        "objective", "gamma",     "lambda",   "lambda_kl",       "m",
        "alpha",     "prior",     "lr",       "beta1",           "beta2",
        "epochs",    "epochs_constant", "lr_decay", "batch",     "seed",
        "task",      "warmup_pairs",    "out_dir",  "dataset_size",
        "image_size", "filters",  "res_blocks", "latent", "max_iters",
        "checkpoint_every"};
    return keys;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!run_config_keys().count(it.key())) {
            std::string valid;
            for (const auto& k : run_config_keys()) valid += (valid.empty() ? "" : ", ") + k;
            throw ConfigError("config: unknown key '" + it.key() + "' (valid keys: " + valid +
                              ")");
        }
    }
    auto num = [&](const char* key, double fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number()) throw ConfigError(std::string("config: '") + key +
                                                   "' must be a number");
        return j[key].get<double>();
    };
    auto str = [&](const char* key, const std::string& fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_string()) throw ConfigError(std::string("config: '") + key +
                                                   "' must be a string");
        return j[key].get<std::string>();
    };

    RunConfig cfg;
    const std::string task = str("task", "shift");
    if (task == "shift") {
        cfg.task = TaskKind::Shift;
        cfg.train.net.channels = 3;
    } else if (task == "mixture") {
        cfg.task = TaskKind::Mixture;
        cfg.train.net.channels = 1;
        cfg.dataset_size = 256;
    } else {
        throw ConfigError("config: task must be 'shift' or 'mixture'");
    }

    const std::string objective = str("objective", "lsgan");
    if (objective == "lsgan") cfg.train.objective.variant = GanObjective::LeastSquares;
    else if (objective == "standard") cfg.train.objective.variant = GanObjective::StandardGAN;
    else throw ConfigError("config: objective must be 'lsgan' or 'standard'");

    const std::string prior = str("prior", "l2");
    if (prior == "l2") cfg.train.objective.prior = PriorKind::SquaredL2;
    else if (prior == "l1sq") cfg.train.objective.prior = PriorKind::SquaredL1;
    else throw ConfigError("config: prior must be 'l2' or 'l1sq'");

    const std::string latent = str("latent", "sfm");
    if (latent == "sfm") cfg.train.latent = LatentKind::Sfm;
    else if (latent == "noise") cfg.train.latent = LatentKind::Noise;
    else throw ConfigError("config: latent must be 'sfm' or 'noise'");

    const std::string decay = str("lr_decay", "linear");
    if (decay == "linear") cfg.train.decay = LrDecay::Linear;
    else if (decay == "cosine") cfg.train.decay = LrDecay::Cosine;
    else throw ConfigError("config: lr_decay must be 'linear' or 'cosine'");

    cfg.train.objective.gamma = num("gamma", 0.0);
    cfg.train.objective.lambda_cyc = num("lambda", 10.0);
    cfg.train.objective.lambda_kl = num("lambda_kl", 0.1);
    cfg.train.objective.weight_decay = num("alpha", 1e-4);
    cfg.train.m_x = cfg.train.m_y = int(num("m", 3));
    cfg.train.lr = num("lr", 2e-4);
    cfg.train.beta1 = num("beta1", 0.5);
    cfg.train.beta2 = num("beta2", 0.999);
    cfg.train.epochs_total = int(num("epochs", 100));
    cfg.train.epochs_constant = int(num("epochs_constant",
                                        std::min(50, cfg.train.epochs_total)));
    cfg.train.batch = int(num("batch", 1));
    cfg.train.seed = uint64_t(num("seed", 1));
    cfg.train.warmup_pairs = int(num("warmup_pairs", 0));
    cfg.train.net.image_size = int(num("image_size", 16));
    cfg.train.net.base_filters = int(num("filters", 16));
    cfg.train.net.res_blocks = int(num("res_blocks", 2));
    cfg.train.max_iters = int64_t(num("max_iters", 0));
    cfg.dataset_size = int(num("dataset_size", double(cfg.dataset_size)));
    cfg.checkpoint_every = int64_t(num("checkpoint_every", 0));
    cfg.out_dir = str("out_dir", cfg.out_dir);

    cfg.validate();
    return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["task"] = cfg.task == TaskKind::Shift ? "shift" : "mixture";
    j["objective"] =
        cfg.train.objective.variant == GanObjective::LeastSquares ? "lsgan" : "standard";
    j["prior"] = cfg.train.objective.prior == PriorKind::SquaredL2 ? "l2" : "l1sq";
    j["latent"] = cfg.train.latent == LatentKind::Sfm ? "sfm" : "noise";
    j["lr_decay"] = cfg.train.decay == LrDecay::Linear ? "linear" : "cosine";
    j["gamma"] = cfg.train.objective.gamma;
    j["lambda"] = cfg.train.objective.lambda_cyc;
    j["lambda_kl"] = cfg.train.objective.lambda_kl;
    j["alpha"] = cfg.train.objective.weight_decay;
    j["m"] = cfg.train.m_x;
    j["lr"] = cfg.train.lr;
    j["beta1"] = cfg.train.beta1;
    j["beta2"] = cfg.train.beta2;
    j["epochs"] = cfg.train.epochs_total;
    j["epochs_constant"] = cfg.train.epochs_constant;
    j["batch"] = cfg.train.batch;
    j["seed"] = cfg.train.seed;
    j["warmup_pairs"] = cfg.train.warmup_pairs;
    j["image_size"] = cfg.train.net.image_size;
    j["filters"] = cfg.train.net.base_filters;
    j["res_blocks"] = cfg.train.net.res_blocks;
    j["max_iters"] = cfg.train.max_iters;
    j["dataset_size"] = cfg.dataset_size;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["out_dir"] = cfg.out_dir;
    return j;
}

// Generated datasets for the configured task (deterministic per seed).
inline std::pair<Dataset, Dataset> make_task_datasets(const RunConfig& cfg) {
    if (cfg.task == TaskKind::Shift) {
        auto task = gen_shift_task(cfg.train.seed, cfg.dataset_size, cfg.train.net.image_size,
                                   cfg.train.net.image_size);
        return {std::move(task.a), std::move(task.b)};
    }
    auto task = gen_mixture_task(MixtureSpec::defaults(cfg.train.net.image_size), cfg.train.seed,
                                 cfg.dataset_size);
    return {std::move(task.a), std::move(task.b)};
}

}  // namespace bcgn
