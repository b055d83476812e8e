#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bcgn/nets.hpp"

using namespace bcgn;
using Catch::Matchers::WithinAbs;

namespace {

template <typename T, class Params>
std::vector<T> flatten_params(Params& p) {
    std::vector<T> all;
    p.visit([&](const char*, Tensor<T>& t) {
        all.insert(all.end(), t.data().begin(), t.data().end());
    });
    return all;
}

NetConfig tiny_cfg() {
    NetConfig cfg;
    cfg.channels = 2;
    cfg.image_size = 8;
    cfg.base_filters = 4;
    cfg.res_blocks = 1;
    return cfg;
}

}  // namespace

TEST_CASE("init statistics match the target distribution") {
    NetConfig cfg;  // defaults: C=3, 16x16, F=16, R=2
    Rng rng(42);
    auto g = init_generator<float>(cfg, rng);
    std::vector<float> weights;
    g.visit([&](const char* name, Tensor<float>& t) {
        if (std::string(name).ends_with(".w"))
            weights.insert(weights.end(), t.data().begin(), t.data().end());
        else
            for (float b : t.data()) REQUIRE(b == 0.f);
    });
    REQUIRE(weights.size() > 10000);
    double mean = 0;
    for (float w : weights) mean += w;
    mean /= double(weights.size());
    double var = 0;
    for (float w : weights) var += (w - mean) * (w - mean);
    var /= double(weights.size());
    REQUIRE(std::abs(mean) < 0.002);
    REQUIRE(std::abs(std::sqrt(var) - 0.02) < 0.002);
}

TEST_CASE("same seed gives identical initialization") {
    NetConfig cfg = tiny_cfg();
    Rng r1(7), r2(7), r3(8);
    auto m1 = init_models<float>(cfg, r1);
    auto m2 = init_models<float>(cfg, r2);
    auto m3 = init_models<float>(cfg, r3);
    REQUIRE(flatten_params<float>(m1.ga) == flatten_params<float>(m2.ga));
    REQUIRE(flatten_params<float>(m1.eb) == flatten_params<float>(m2.eb));
    REQUIRE(flatten_params<float>(m1.ga) != flatten_params<float>(m3.ga));
}

TEST_CASE("parameter count is a function of the config only") {
    Rng rng(1);
    auto count = [&](NetConfig cfg) {
        auto m = init_models<float>(cfg, rng);
        size_t n = 0;
        m.visit_all([&](const char*, Tensor<float>& t) { n += size_t(t.numel()); });
        return n;
    };
    NetConfig a = tiny_cfg(), b = tiny_cfg();
    REQUIRE(count(a) == count(b));
    b.image_size = 16;  // spatial size does not change conv parameter counts
    REQUIRE(count(a) == count(b));
    b.base_filters = 8;
    REQUIRE(count(a) != count(b));
}

TEST_CASE("generator output shape and range") {
    NetConfig cfg = tiny_cfg();
    Rng rng(3);
    auto g = init_generator<float>(cfg, rng);
    Tensor<float> x = Tensor<float>::zeros({2, cfg.channels + 1, 8, 8});
    rng.fill_uniform<float>(x.data(), -1, 1);
    auto y = generator_forward(g, x);
    REQUIRE(y.shape == std::vector<int>{2, cfg.channels, 8, 8});
    for (float v : y.data()) {
        REQUIRE(v > -1.f);
        REQUIRE(v < 1.f);
    }
    REQUIRE_THROWS_AS(generator_forward(g, Tensor<float>::zeros({1, cfg.channels, 8, 8})),
                      ShapeError);
}

TEST_CASE("shape closure holds for any valid image size") {
    for (int hw : {8, 16, 24}) {
        NetConfig cfg = tiny_cfg();
        cfg.image_size = hw;
        Rng rng(4);
        auto ga = init_generator<float>(cfg, rng);
        auto gb = init_generator<float>(cfg, rng);
        Tensor<float> x = Tensor<float>::zeros({1, cfg.channels, hw, hw});
        Tensor<float> f = Tensor<float>::zeros({1, 1, hw, hw});
        rng.fill_uniform<float>(x.data(), -1, 1);
        rng.fill_uniform<float>(f.data(), -1, 1);
        auto fake = generator_forward(ga, concat_channels(x, f));
        auto rec = generator_forward(gb, concat_channels(fake, f));
        REQUIRE(rec.shape == x.shape);
    }
}

TEST_CASE("discriminator patch map shapes and standard head range") {
    NetConfig cfg = tiny_cfg();
    Rng rng(5);
    auto d = init_discriminator<float>(cfg, rng);
    Tensor<float> img8 = Tensor<float>::zeros({3, cfg.channels, 8, 8});
    rng.fill_uniform<float>(img8.data(), -1, 1);
    auto patch = discriminator_forward(d, img8, true);
    REQUIRE(patch.shape == std::vector<int>{3, 1, 1, 1});
    for (float v : patch.data()) {
        REQUIRE(v > 0.f);
        REQUIRE(v < 1.f);
    }

    NetConfig big = tiny_cfg();
    big.image_size = 16;
    auto d16 = init_discriminator<float>(big, rng);
    Tensor<float> img16 = Tensor<float>::zeros({1, big.channels, 16, 16});
    auto patch16 = discriminator_forward(d16, img16, false);
    REQUIRE(patch16.shape == std::vector<int>{1, 1, 2, 2});
}

TEST_CASE("discriminator gradient w.r.t. input passes finite differences") {
    NetConfig cfg = tiny_cfg();
    Rng rng(6);
    auto d = init_discriminator<double>(cfg, rng);
    Tensor<double> img = Tensor<double>::zeros({1, cfg.channels, 8, 8});
    rng.fill_uniform<double>(img.data(), -1, 1);
    auto f = [&](const Tensor<double>& x) {
        return mean(square(discriminator_forward(d, x, true)));
    };
    REQUIRE(finite_diff_check<double>(f, img, 1e-5) < 1e-6);
}

TEST_CASE("encoder draws") {
    NetConfig cfg = tiny_cfg();
    Rng rng(8);
    auto e = init_encoder<float>(cfg, rng);
    Tensor<float> img = Tensor<float>::zeros({2, cfg.channels, 8, 8});
    rng.fill_uniform<float>(img.data(), -1, 1);

    auto det = encoder_forward(e, cfg, img, nullptr);
    REQUIRE(det.sfm.shape == std::vector<int>{2, 1, 8, 8});
    REQUIRE(det.mu.shape == std::vector<int>{2, 2 * cfg.base_filters, 2, 2});

    // eps forced to zero is deterministic
    auto det2 = encoder_forward(e, cfg, img, nullptr);
    REQUIRE(std::equal(det.sfm.data().begin(), det.sfm.data().end(), det2.sfm.data().begin()));

    // two rng draws differ
    Rng noise(9);
    auto s1 = encoder_forward(e, cfg, img, &noise);
    auto s2 = encoder_forward(e, cfg, img, &noise);
    float max_delta = 0;
    for (size_t i = 0; i < s1.sfm.data().size(); ++i)
        max_delta = std::max(max_delta, std::abs(s1.sfm.data()[i] - s2.sfm.data()[i]));
    REQUIRE(max_delta > 0.f);

    // shared down-stack variant computes one set of moments for m draws
    Rng noise2(10);
    auto eps = draw_encoder_eps<float>(cfg, 2, 3, &noise2);
    auto draws = encoder_sfm_from_eps(e, img, eps);
    REQUIRE(draws.sfms.size() == 3);
}

TEST_CASE("kl_loss examples") {
    auto z = Tensor<float>::zeros({1, 1, 1, 1});
    REQUIRE_THAT(kl_loss(z, z).scalar(), WithinAbs(0.0, 1e-7));

    Tensor<float> mu({1, 1, 1, 1}, {1.f});
    REQUIRE_THAT(kl_loss(mu, z).scalar(), WithinAbs(0.5, 1e-6));

    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        Tensor<float> m = Tensor<float>::zeros({2, 3, 2, 2});
        Tensor<float> lv = Tensor<float>::zeros({2, 3, 2, 2});
        rng.fill_uniform<float>(m.data(), -2, 2);
        rng.fill_uniform<float>(lv.data(), -2, 2);
        REQUIRE(kl_loss(m, lv).scalar() >= -1e-6f);
    }
}

TEST_CASE("kl_loss gradient passes finite differences") {
    Rng rng(12);
    Tensor<double> mu = Tensor<double>::zeros({1, 2, 2, 2});
    Tensor<double> lv = Tensor<double>::zeros({1, 2, 2, 2});
    rng.fill_uniform<double>(mu.data(), -1, 1);
    rng.fill_uniform<double>(lv.data(), -1, 1);
    auto f_mu = [&](const Tensor<double>& t) { return kl_loss(t, lv); };
    REQUIRE(finite_diff_check<double>(f_mu, mu, 1e-5) < 1e-6);
    auto f_lv = [&](const Tensor<double>& t) { return kl_loss(mu, t); };
    REQUIRE(finite_diff_check<double>(f_lv, lv, 1e-5) < 1e-6);
}

TEST_CASE("full generator pass is differentiable end to end") {
    NetConfig cfg = tiny_cfg();
    Rng rng(13);
    auto g = init_generator<double>(cfg, rng);
    Tensor<double> x = Tensor<double>::zeros({1, cfg.channels + 1, 8, 8});
    rng.fill_uniform<double>(x.data(), -1, 1);

    // gradient w.r.t. a mid-stack weight tensor, via rebuilt params
    auto f = [&](const Tensor<double>& w) {
        GeneratorParams<double> gp = g;
        gp.blocks[0].c1.w = w;
        return mean(square(generator_forward(gp, x)));
    };
    REQUIRE(finite_diff_check<double>(f, g.blocks[0].c1.w, 1e-5,
                                      {0, 17, 101, 333, 575}) < 1e-6);

    // and w.r.t. the input
    auto fx = [&](const Tensor<double>& t) { return mean(square(generator_forward(g, t))); };
    REQUIRE(finite_diff_check<double>(fx, x, 1e-5, {0, 5, 63, 118, 191}) < 1e-6);
}

TEST_CASE("encoder pass is differentiable end to end") {
    NetConfig cfg = tiny_cfg();
    Rng rng(14);
    auto e = init_encoder<double>(cfg, rng);
    Tensor<double> img = Tensor<double>::zeros({1, cfg.channels, 8, 8});
    rng.fill_uniform<double>(img.data(), -1, 1);
    auto eps = draw_encoder_eps<double>(cfg, 1, 1, nullptr);
    auto f = [&](const Tensor<double>& w) {
        EncoderParams<double> ep = e;
        ep.q1.w = w;
        auto draws = encoder_sfm_from_eps(ep, img, eps);
        return add(mean(square(draws.sfms[0])), kl_loss(draws.mu, draws.logvar));
    };
    REQUIRE(finite_diff_check<double>(f, e.q1.w, 1e-5, {0, 31, 64, 99, 127}) < 1e-6);
}
