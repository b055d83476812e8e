#include <catch2/catch_amalgamated.hpp>

#include "bcgn/run_config.hpp"

using namespace bcgn;
using nlohmann::json;

TEST_CASE("defaults follow the reference hyperparameters") {
    auto cfg = parse_run_config(json::object());
    REQUIRE(cfg.train.objective.lambda_cyc == 10.0);
    REQUIRE(cfg.train.objective.lambda_kl == 0.1);
    REQUIRE(cfg.train.m_x == 3);
    REQUIRE(cfg.train.m_y == 3);
    REQUIRE(cfg.train.lr == 2e-4);
    REQUIRE(cfg.train.beta1 == 0.5);
    REQUIRE(cfg.train.beta2 == 0.999);
    REQUIRE(cfg.train.objective.variant == GanObjective::LeastSquares);
    REQUIRE(cfg.train.objective.gamma == 0.0);
    REQUIRE(cfg.train.epochs_total == 100);
    REQUIRE(cfg.train.epochs_constant == 50);
    REQUIRE(cfg.task == TaskKind::Shift);
    REQUIRE(cfg.train.net.channels == 3);
}

TEST_CASE("unknown keys are rejected with the valid key list") {
    json j{{"gamma", 0.5}, {"lamda", 5.0}};  // typo
    try {
        parse_run_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("lamda") != std::string::npos);
        REQUIRE(msg.find("lambda") != std::string::npos);  // valid keys are listed
    }
}

TEST_CASE("field parsing and validation") {
    json j{{"task", "mixture"}, {"gamma", 0.5}, {"m", 1},
           {"objective", "standard"}, {"latent", "noise"}, {"seed", 42}};
    auto cfg = parse_run_config(j);
    REQUIRE(cfg.task == TaskKind::Mixture);
    REQUIRE(cfg.train.net.channels == 1);
    REQUIRE(cfg.train.objective.variant == GanObjective::StandardGAN);
    REQUIRE(cfg.train.objective.gamma == 0.5);
    REQUIRE(cfg.train.m_x == 1);
    REQUIRE(cfg.train.latent == LatentKind::Noise);
    REQUIRE(cfg.train.seed == 42);

    REQUIRE_THROWS_AS(parse_run_config(json{{"task", "faces"}}), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config(json{{"objective", "wgan"}}), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config(json{{"gamma", -0.5}}), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config(json{{"lambda", 0.0}}), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config(json{{"image_size", 15}}), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config(json{{"gamma", "half"}}), ConfigError);
}

TEST_CASE("round trip through json preserves the config") {
    json j{{"task", "mixture"}, {"gamma", 0.25}, {"epochs", 12}, {"seed", 9},
           {"filters", 8}, {"latent", "noise"}, {"out_dir", "runs/x"}};
    auto cfg = parse_run_config(j);
    auto cfg2 = parse_run_config(run_config_to_json(cfg));
    REQUIRE(run_config_to_json(cfg) == run_config_to_json(cfg2));
}

TEST_CASE("task datasets are generated deterministically") {
    json j{{"dataset_size", 12}, {"image_size", 8}, {"seed", 5}};
    auto cfg = parse_run_config(j);
    auto [a1, b1] = make_task_datasets(cfg);
    auto [a2, b2] = make_task_datasets(cfg);
    REQUIRE(a1.size() == 12);
    REQUIRE(std::equal(a1.items[3].data().begin(), a1.items[3].data().end(),
                       a2.items[3].data().begin()));
    REQUIRE(std::equal(b1.items[7].data().begin(), b1.items[7].data().end(),
                       b2.items[7].data().begin()));
}
