#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bcgn/losses.hpp"

using namespace bcgn;
using Catch::Matchers::WithinAbs;

namespace {

NetConfig tiny_cfg() {
    NetConfig cfg;
    cfg.channels = 2;
    cfg.image_size = 8;
    cfg.base_filters = 4;
    cfg.res_blocks = 1;
    return cfg;
}

template <typename T>
Tensor<T> rand_img(int n, int c, int hw, Rng& rng) {
    Tensor<T> t = Tensor<T>::zeros({n, c, hw, hw});
    rng.fill_uniform<T>(t.data(), -1, 1);
    return t;
}

template <typename T>
std::vector<Tensor<T>> rand_imgs(int m, int n, int c, int hw, Rng& rng) {
    std::vector<Tensor<T>> out;
    for (int k = 0; k < m; ++k) out.push_back(rand_img<T>(n, c, hw, rng));
    return out;
}

// All-zero parameters: every forward produces exactly zero.
template <typename T>
GeneratorParams<T> zero_generator(const NetConfig& cfg) {
    Rng rng(1);
    auto g = init_generator<T>(cfg, rng);
    g.visit([](const char*, Tensor<T>& t) { std::fill(t.data().begin(), t.data().end(), T(0)); });
    return g;
}

// Discriminator with nonnegative weights and zero biases: positive inputs map
// through the leaky-relu identity branch, so D(c * ones) = c * D(ones).
template <typename T>
DiscriminatorParams<T> positive_discriminator(const NetConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    auto d = init_discriminator<T>(cfg, rng);
    d.visit([](const char* name, Tensor<T>& t) {
        if (std::string(name).ends_with(".w"))
            for (T& v : t.data()) v = v < T(0) ? -v : v;
    });
    return d;
}

}  // namespace

TEST_CASE("make_variant_inputs") {
    Rng rng(2);
    auto x = rand_img<float>(2, 3, 8, rng);
    auto lats = rand_imgs<float>(3, 2, 1, 8, rng);
    auto inputs = make_variant_inputs(x, lats);
    REQUIRE(inputs.size() == 3);
    for (const auto& in : inputs) REQUIRE(in.shape == std::vector<int>{2, 4, 8, 8});

    // variants differ only in the extra channel
    for (int i = 0; i < 2; ++i)
        for (int p = 0; p < 3 * 64; ++p)
            REQUIRE(inputs[0].data()[size_t(i * 4 * 64 + p)] ==
                    inputs[2].data()[size_t(i * 4 * 64 + p)]);
    bool latent_differs = false;
    for (int p = 0; p < 64; ++p)
        latent_differs |= inputs[0].data()[size_t(3 * 64 + p)] !=
                          inputs[2].data()[size_t(3 * 64 + p)];
    REQUIRE(latent_differs);

    auto single = make_variant_inputs(x, {lats[0]});
    REQUIRE(single.size() == 1);
    REQUIRE_THROWS_AS(make_variant_inputs<float>(x, {}), ShapeError);
}

TEST_CASE("d_loss: least squares hits zero under perfect discrimination") {
    NetConfig cfg = tiny_cfg();
    auto d = positive_discriminator<float>(cfg, 3);
    // scale a ones-image so the patch-mean response is exactly 1
    auto ones = Tensor<float>::full({2, cfg.channels, 8, 8}, 1.f);
    float s = discriminator_forward(d, ones, false).data()[0];
    REQUIRE(s > 0.f);
    auto real = Tensor<float>::full({2, cfg.channels, 8, 8}, 1.f / s);
    std::vector<Tensor<float>> zeros_list(2, Tensor<float>::zeros({2, cfg.channels, 8, 8}));

    Objective obj;
    obj.variant = GanObjective::LeastSquares;
    obj.gamma = 0.5;
    obj.weight_decay = 0;
    auto loss = d_loss(obj, d, real, zeros_list, zeros_list);
    REQUIRE_THAT(double(loss.scalar()), WithinAbs(0.0, 1e-9));
}

TEST_CASE("d_loss: standard objective at D == 1/2 gives 2 log 2") {
    NetConfig cfg = tiny_cfg();
    Rng rng(5);
    auto d = init_discriminator<float>(cfg, rng);
    d.visit([](const char*, Tensor<float>& t) {
        std::fill(t.data().begin(), t.data().end(), 0.f);
    });  // zero weights: sigmoid(0) = 1/2 everywhere
    auto real = rand_img<float>(1, cfg.channels, 8, rng);
    auto fake = rand_imgs<float>(1, 1, cfg.channels, 8, rng);

    Objective obj;
    obj.variant = GanObjective::StandardGAN;
    obj.gamma = 0;
    obj.weight_decay = 0;
    auto loss = d_loss(obj, d, real, fake, {});
    REQUIRE_THAT(double(loss.scalar()), WithinAbs(2 * 0.6931471805599453, 1e-6));
}

TEST_CASE("d_loss: gamma=0 makes the loss independent of reconstructions") {
    NetConfig cfg = tiny_cfg();
    Rng rng(6);
    auto d = init_discriminator<float>(cfg, rng);
    auto real = rand_img<float>(2, cfg.channels, 8, rng);
    auto fakes = rand_imgs<float>(2, 2, cfg.channels, 8, rng);
    auto recons_a = rand_imgs<float>(2, 2, cfg.channels, 8, rng);
    auto recons_b = rand_imgs<float>(2, 2, cfg.channels, 8, rng);

    Objective obj;
    obj.gamma = 0;
    auto la = d_loss(obj, d, real, fakes, recons_a);
    auto lb = d_loss(obj, d, real, fakes, recons_b);
    REQUIRE(la.scalar() == lb.scalar());
}

TEST_CASE("d_loss: least-squares loss is non-decreasing in gamma") {
    NetConfig cfg = tiny_cfg();
    Rng rng(7);
    auto d = init_discriminator<float>(cfg, rng);
    auto real = rand_img<float>(2, cfg.channels, 8, rng);
    auto fakes = rand_imgs<float>(3, 2, cfg.channels, 8, rng);
    auto recons = rand_imgs<float>(3, 2, cfg.channels, 8, rng);

    double prev = -1;
    for (double g : {0.0, 0.1, 0.25, 0.5, 1.0, 2.0}) {
        Objective obj;
        obj.variant = GanObjective::LeastSquares;
        obj.gamma = g;
        obj.weight_decay = 1e-4;
        double v = double(d_loss(obj, d, real, fakes, recons).scalar());
        REQUIRE(v >= prev - 1e-9);
        prev = v;
    }
}

TEST_CASE("d_loss: empty fakes list is an error") {
    NetConfig cfg = tiny_cfg();
    Rng rng(8);
    auto d = init_discriminator<float>(cfg, rng);
    auto real = rand_img<float>(1, cfg.channels, 8, rng);
    Objective obj;
    REQUIRE_THROWS_AS(d_loss(obj, d, real, {}, {}), ShapeError);
}

TEST_CASE("prior_penalty examples") {
    Tensor<float> w({1}, {2.f});
    REQUIRE(prior_penalty<float>({w}, 0.0).scalar() == 0.f);
    REQUIRE_THAT(double(prior_penalty<float>({w}, 0.1).scalar()), WithinAbs(0.4, 1e-7));

    // squared-L1 variant: alpha * (sum |theta|)^2
    Tensor<float> v({2}, {1.f, -2.f});
    REQUIRE_THAT(double(prior_penalty<float>({v}, 0.5, PriorKind::SquaredL1).scalar()),
                 WithinAbs(4.5, 1e-6));

    // gradient of the squared-L2 form is 2 * alpha * theta
    Tensor<double> theta({3}, {1.0, -0.5, 2.0});
    auto f = [](const Tensor<double>& t) { return prior_penalty<double>({t}, 0.1); };
    REQUIRE(finite_diff_check<double>(f, theta, 1e-6) < 1e-9);
    Tape<double> tape;
    auto wt = tape.watch(theta);
    tape.backward(prior_penalty<double>({wt}, 0.1));
    auto g = tape.grad(wt);
    REQUIRE_THAT(g.data()[0], WithinAbs(0.2, 1e-12));
}

TEST_CASE("g_loss: zero at the perfect point") {
    NetConfig cfg = tiny_cfg();
    auto ga = zero_generator<float>(cfg);
    auto gb = zero_generator<float>(cfg);
    Rng rng(9);
    auto da = init_discriminator<float>(cfg, rng);
    auto db = init_discriminator<float>(cfg, rng);
    // zero weights, head bias 1: D(anything) = 1 under the linear LS head
    auto rig = [](DiscriminatorParams<float>& d) {
        d.visit([](const char* name, Tensor<float>& t) {
            std::fill(t.data().begin(), t.data().end(),
                      std::string(name) == "head.b" ? 1.f : 0.f);
        });
    };
    rig(da);
    rig(db);

    CycleBatch<float> batch;
    batch.real_x = Tensor<float>::zeros({1, cfg.channels, 8, 8});
    batch.real_y = Tensor<float>::zeros({1, cfg.channels, 8, 8});
    batch.lat_xy = {Tensor<float>::zeros({1, 1, 8, 8})};
    batch.lat_yx = {Tensor<float>::zeros({1, 1, 8, 8})};

    Objective obj;
    obj.variant = GanObjective::LeastSquares;
    obj.gamma = 0.5;
    obj.weight_decay = 0;
    obj.lambda_kl = 0;
    auto fwd = g_loss(obj, ga, gb, da, db, batch);
    REQUIRE_THAT(double(fwd.loss.scalar()), WithinAbs(0.0, 1e-9));
    REQUIRE(fwd.fake_y.size() == 1);
    REQUIRE(fwd.rec_y.size() == 1);
}

TEST_CASE("g_loss: a larger lambda strictly increases an imperfect loss") {
    NetConfig cfg = tiny_cfg();
    Rng rng(10);
    auto models = init_models<float>(cfg, rng);
    CycleBatch<float> batch;
    batch.real_x = rand_img<float>(1, cfg.channels, 8, rng);
    batch.real_y = rand_img<float>(1, cfg.channels, 8, rng);
    batch.lat_xy = rand_imgs<float>(2, 1, 1, 8, rng);
    batch.lat_yx = rand_imgs<float>(2, 1, 1, 8, rng);

    Objective lo, hi;
    lo.lambda_cyc = 5;
    hi.lambda_cyc = 10;
    auto l1 = g_loss(lo, models.ga, models.gb, models.da, models.db, batch);
    auto l2 = g_loss(hi, models.ga, models.gb, models.da, models.db, batch);
    REQUIRE(l2.loss.scalar() > l1.loss.scalar());
    REQUIRE(l1.cyc_value > 0);
}

TEST_CASE("losses reduce exactly to the classic cyclic objective") {
    // m=1, gamma=0, alpha=0, lambda_kl=0 against an independent double-math
    // transcription of the marginal-matching + cycle losses.
    NetConfig cfg = tiny_cfg();
    Rng rng(11);
    auto models = init_models<double>(cfg, rng);
    const int n = 2;
    auto x = rand_img<double>(n, cfg.channels, 8, rng);
    auto y = rand_img<double>(n, cfg.channels, 8, rng);
    auto fx = rand_img<double>(n, 1, 8, rng);
    auto fy = rand_img<double>(n, 1, 8, rng);

    CycleBatch<double> batch;
    batch.real_x = x;
    batch.real_y = y;
    batch.lat_xy = {fy};
    batch.lat_yx = {fx};

    for (auto variant : {GanObjective::StandardGAN, GanObjective::LeastSquares}) {
        Objective obj;
        obj.variant = variant;
        obj.gamma = 0;
        obj.weight_decay = 0;
        obj.lambda_kl = 0;
        obj.lambda_cyc = 10;

        const bool sig = obj.sigmoid_head();
        auto fake_y = generator_forward(models.ga, concat_channels(x, fy));
        auto rec_x = generator_forward(models.gb, concat_channels(fake_y, fx));
        auto fake_x = generator_forward(models.gb, concat_channels(y, fx));
        auto rec_y = generator_forward(models.ga, concat_channels(fake_x, fy));

        // reference: plain double arithmetic on patch means
        auto score = [&](DiscriminatorParams<double>& d, const Tensor<double>& img) {
            auto patch = discriminator_forward(d, img, sig);
            std::vector<double> per_item(size_t(n), 0.0);
            const int64_t per = patch.numel() / n;
            for (int i = 0; i < n; ++i) {
                double s = 0;
                for (int64_t p = 0; p < per; ++p) s += patch.data()[size_t(i * per + p)];
                per_item[size_t(i)] = s / double(per);
            }
            return per_item;
        };
        auto l1_ref = [&](const Tensor<double>& a, const Tensor<double>& b) {
            double s = 0;
            for (size_t i = 0; i < a.data().size(); ++i)
                s += std::abs(a.data()[i] - b.data()[i]);
            return s / double(n);
        };

        double ref_da, ref_db, ref_g;
        {
            auto dy_real = score(models.da, y);
            auto dy_fake = score(models.da, fake_y);
            auto dx_real = score(models.db, x);
            auto dx_fake = score(models.db, fake_x);
            if (variant == GanObjective::StandardGAN) {
                double t1 = 0, t2 = 0;
                for (int i = 0; i < n; ++i) {
                    t1 += std::log(dy_real[size_t(i)]);
                    t2 += std::log(1 - dy_fake[size_t(i)]);
                }
                ref_da = -(t1 + t2) / n;
                t1 = t2 = 0;
                for (int i = 0; i < n; ++i) {
                    t1 += std::log(dx_real[size_t(i)]);
                    t2 += std::log(1 - dx_fake[size_t(i)]);
                }
                ref_db = -(t1 + t2) / n;
                double adv = 0;
                for (int i = 0; i < n; ++i)
                    adv -= std::log(dy_fake[size_t(i)]) + std::log(dx_fake[size_t(i)]);
                ref_g = adv / n + obj.lambda_cyc * (l1_ref(rec_x, x) + l1_ref(rec_y, y));
            } else {
                double t = 0;
                for (int i = 0; i < n; ++i)
                    t += (dy_real[size_t(i)] - 1) * (dy_real[size_t(i)] - 1) +
                         dy_fake[size_t(i)] * dy_fake[size_t(i)];
                ref_da = t / n;
                t = 0;
                for (int i = 0; i < n; ++i)
                    t += (dx_real[size_t(i)] - 1) * (dx_real[size_t(i)] - 1) +
                         dx_fake[size_t(i)] * dx_fake[size_t(i)];
                ref_db = t / n;
                double adv = 0;
                for (int i = 0; i < n; ++i)
                    adv += (dy_fake[size_t(i)] - 1) * (dy_fake[size_t(i)] - 1) +
                           (dx_fake[size_t(i)] - 1) * (dx_fake[size_t(i)] - 1);
                ref_g = adv / n + obj.lambda_cyc * (l1_ref(rec_x, x) + l1_ref(rec_y, y));
            }
        }

        auto da_val = d_loss(obj, models.da, y, {fake_y}, {});
        auto db_val = d_loss(obj, models.db, x, {fake_x}, {});
        auto g_val = g_loss(obj, models.ga, models.gb, models.da, models.db, batch);
        REQUIRE_THAT(double(da_val.scalar()), WithinAbs(ref_da, 1e-6));
        REQUIRE_THAT(double(db_val.scalar()), WithinAbs(ref_db, 1e-6));
        REQUIRE_THAT(double(g_val.loss.scalar()), WithinAbs(ref_g, 1e-6));
    }
}

TEST_CASE("one descent step on d_loss decreases it") {
    // Minimizing these losses is "ascending the posterior": a wrong
    // discriminator must improve under a small gradient-descent step.
    NetConfig cfg = tiny_cfg();
    Rng rng(12);
    auto models = init_models<float>(cfg, rng);
    // push the head bias down so D calls everything fake, loudly wrong on reals
    models.da.head.b.data()[0] = -2.0f;
    auto real = rand_img<float>(2, cfg.channels, 8, rng);
    auto fakes = rand_imgs<float>(2, 2, cfg.channels, 8, rng);
    auto recons = rand_imgs<float>(2, 2, cfg.channels, 8, rng);

    for (auto variant : {GanObjective::StandardGAN, GanObjective::LeastSquares}) {
        Objective obj;
        obj.variant = variant;
        obj.gamma = 0.5;
        auto eval = [&](DiscriminatorParams<float>& d) {
            return double(d_loss(obj, d, real, fakes, recons).scalar());
        };
        const double before = eval(models.da);

        Tape<float> tape;
        auto watched = watch_params(tape, models.da);
        tape.backward(d_loss(obj, watched, real, fakes, recons));
        std::vector<Tensor<float>> grads;
        watched.visit([&](const char*, Tensor<float>& t) { grads.push_back(tape.grad(t)); });

        auto stepped = models.da;
        size_t i = 0;
        stepped.visit([&](const char*, Tensor<float>& t) {
            Tensor<float> nt = t.clone();
            for (size_t p = 0; p < nt.data().size(); ++p)
                nt.data()[p] -= 1e-2f * grads[i].data()[p];
            t = nt;
            ++i;
        });
        REQUIRE(eval(stepped) < before);
    }
}

TEST_CASE("d_loss and g_loss gradients pass finite differences") {
    NetConfig cfg = tiny_cfg();
    Rng rng(13);
    auto models = init_models<double>(cfg, rng);
    auto real = rand_img<double>(1, cfg.channels, 8, rng);
    auto fakes = rand_imgs<double>(2, 1, cfg.channels, 8, rng);
    auto recons = rand_imgs<double>(2, 1, cfg.channels, 8, rng);

    Objective obj;
    obj.variant = GanObjective::LeastSquares;
    obj.gamma = 0.5;
    auto fd = [&](const Tensor<double>& w) {
        DiscriminatorParams<double> d = models.da;
        d.c2.w = w;
        return d_loss(obj, d, real, fakes, recons);
    };
    REQUIRE(finite_diff_check<double>(fd, models.da.c2.w, 1e-5, {0, 11, 77, 200, 511}) < 1e-6);

    CycleBatch<double> batch;
    batch.real_x = real;
    batch.real_y = rand_img<double>(1, cfg.channels, 8, rng);
    batch.lat_xy = rand_imgs<double>(2, 1, 1, 8, rng);
    batch.lat_yx = rand_imgs<double>(2, 1, 1, 8, rng);
    auto fg = [&](const Tensor<double>& w) {
        GeneratorParams<double> ga = models.ga;
        ga.down1.w = w;
        return g_loss(obj, ga, models.gb, models.da, models.db, batch).loss;
    };
    REQUIRE(finite_diff_check<double>(fg, models.ga.down1.w, 1e-5, {0, 63, 127, 255, 400}) <
            1e-6);
}

TEST_CASE("supervised_pair_loss") {
    NetConfig cfg = tiny_cfg();
    auto ga = zero_generator<float>(cfg);
    auto gb = zero_generator<float>(cfg);
    auto zero_img = Tensor<float>::zeros({1, cfg.channels, 8, 8});
    auto zero_lat = Tensor<float>::zeros({1, 1, 8, 8});
    // outputs equal targets -> 0
    REQUIRE(supervised_pair_loss(ga, gb, zero_img, zero_img, zero_lat, zero_lat).scalar() == 0.f);

    Rng rng(14);
    auto ra = init_generator<float>(cfg, rng);
    auto rb = init_generator<float>(cfg, rng);
    for (int t = 0; t < 10; ++t) {
        auto x = rand_img<float>(1, cfg.channels, 8, rng);
        auto y = rand_img<float>(1, cfg.channels, 8, rng);
        auto f = rand_img<float>(1, 1, 8, rng);
        REQUIRE(supervised_pair_loss(ra, rb, x, y, f, f).scalar() >= 0.f);
    }
}

TEST_CASE("all losses stay finite at extreme parameter settings") {
    NetConfig cfg = tiny_cfg();
    Rng rng(15);
    auto models = init_models<float>(cfg, rng);
    // blow up the discriminator so its sigmoid saturates to exactly 0/1
    models.da.visit([](const char*, Tensor<float>& t) {
        for (float& v : t.data()) v *= 1e6f;
    });
    auto real = rand_img<float>(1, cfg.channels, 8, rng);
    auto fakes = rand_imgs<float>(1, 1, cfg.channels, 8, rng);

    Objective obj;
    obj.variant = GanObjective::StandardGAN;
    obj.gamma = 0.5;
    auto loss = d_loss(obj, models.da, real, fakes, fakes);
    REQUIRE(std::isfinite(double(loss.scalar())));
}
