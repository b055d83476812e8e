#pragma once

// Finite-difference audit of every autodiff op and each assembled network
// loss, at f32 or f64 precision. Shared by the `gradcheck` CLI command and
// the acceptance suite.

#include <string>
#include <vector>

#include "bcgn/losses.hpp"

namespace bcgn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0;
    double tolerance = 0;
    bool pass = false;
};

template <typename T>
struct GradCheckSettings {
    int seeds = 20;
    double eps = std::is_same_v<T, double> ? 1e-5 : 1e-3;
    double tolerance = std::is_same_v<T, double> ? 1e-6 : 1e-3;
};

namespace detail {

template <typename T>
Tensor<T> gc_uniform(std::vector<int> shape, Rng& rng, double lo, double hi) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    rng.fill_uniform<T>(t.data(), lo, hi);
    return t;
}

// magnitudes in [0.2, 1.2]: keeps relu/abs kinks and log's clamp out of the
// finite-difference stencil
template <typename T>
Tensor<T> gc_signed(std::vector<int> shape, Rng& rng) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (T& v : t.data()) {
        const double mag = rng.uniform(0.2, 1.2);
        v = T(rng.uniform() < 0.5 ? -mag : mag);
    }
    return t;
}

inline std::vector<int64_t> gc_coords(int64_t numel, int count, Rng& rng) {
    std::vector<int64_t> out;
    for (int i = 0; i < count; ++i) out.push_back(int64_t(rng.below(uint64_t(numel))));
    return out;
}

}  // namespace detail

// zero latent map matching an image batch; helper for the warm-up check
template <typename T>
Tensor<T> batchless_latent(const Tensor<T>& img) {
    return Tensor<T>::zeros({img.dim(0), 1, img.dim(2), img.dim(3)});
}

namespace detail {

inline Tensor<double> lift_tensor(const Tensor<float>& t) {
    Tensor<double> out = Tensor<double>::zeros(t.shape);
    for (size_t i = 0; i < t.data().size(); ++i) out.data()[i] = double(t.data()[i]);
    return out;
}
inline Tensor<double> lift_tensor(const Tensor<double>& t) { return t.detached().clone(); }

template <class Src, class Dst>
void lift_group(Src src, Dst& dst) {  // src by value: visit is non-const
    std::vector<std::vector<double>> values;
    src.visit([&](const char*, auto& t) {
        values.emplace_back();
        for (auto v : t.data()) values.back().push_back(double(v));
    });
    size_t i = 0;
    dst.visit([&](const char*, Tensor<double>& t) {
        std::copy(values[i].begin(), values[i].end(), t.store->begin());
        ++i;
    });
}

// Exact double-precision copy of a model: the finite-difference oracle for
// f32 gradients is evaluated on the lifted values, so quotient noise comes
// only from f64 rounding.
template <typename T>
ModelParams<double> lift_models(const ModelParams<T>& m) {
    Rng dummy(0);
    ModelParams<double> out = init_models<double>(m.cfg, dummy);
    lift_group(m.ga, out.ga);
    lift_group(m.gb, out.gb);
    lift_group(m.da, out.da);
    lift_group(m.db, out.db);
    lift_group(m.ea, out.ea);
    lift_group(m.eb, out.eb);
    return out;
}

// Backward gradients of `analytic` (precision T) against central differences
// of `oracle_loss` (f64, same mathematical function). One-sided disagreement
// flags coordinates where the stencil is suspect; a second pass at eps/16
// separates curvature (disagreement shrinks with the step, oracle valid)
// from genuine kinks (disagreement persists, coordinate excluded).
template <typename T, class FA, class FO>
FiniteDiffResult cross_precision_check(FA analytic, FO oracle_loss, const Tensor<T>& x,
                                       const std::vector<int64_t>& coords, double eps,
                                       double skip_tol) {
    Tape<T> tape;
    Tensor<T> xt = tape.watch(x.detached());
    Tensor<T> loss = analytic(xt);
    tape.backward(loss);
    Tensor<T> g = tape.grad(xt);

    Tensor<double> x64 = lift_tensor(x);
    const double l0 = double(oracle_loss(x64).scalar());
    auto stencil = [&](int64_t c, double h, double& fd, double& disagree) {
        Tensor<double> xp = x64.clone();
        Tensor<double> xm = x64.clone();
        (*xp.store)[size_t(c)] += h;
        (*xm.store)[size_t(c)] -= h;
        const double lp = double(oracle_loss(xp).scalar());
        const double lm = double(oracle_loss(xm).scalar());
        fd = (lp - lm) / (2.0 * h);
        disagree = std::abs((lp - l0) / h - (l0 - lm) / h);
    };

    FiniteDiffResult res;
    for (int64_t c : coords) {
        double fd = 0, r = 0;
        stencil(c, eps, fd, r);
        const double an = double(g.data()[size_t(c)]);
        double norm = std::max({1.0, std::abs(fd), std::abs(an)});
        if (r > skip_tol * norm) {
            double fd2 = 0, r2 = 0;
            stencil(c, eps / 16.0, fd2, r2);
            if (r2 > std::max(skip_tol * norm, r / 4.0)) {
                ++res.skipped;
                continue;
            }
            fd = fd2;
            norm = std::max({1.0, std::abs(fd), std::abs(an)});
        }
        ++res.tested;
        res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / norm);
    }
    return res;
}

}  // namespace detail

template <typename T>
std::vector<GradCheckEntry> run_gradcheck_suite(uint64_t seed,
                                                const GradCheckSettings<T>& settings = {}) {
    std::vector<GradCheckEntry> report;
    auto record = [&](const std::string& name, double err) {
        auto it = std::find_if(report.begin(), report.end(),
                               [&](const GradCheckEntry& e) { return e.name == name; });
        if (it == report.end()) {
            report.push_back({name, err, settings.tolerance, err < settings.tolerance});
        } else {
            it->max_rel_err = std::max(it->max_rel_err, err);
            it->pass = it->max_rel_err < settings.tolerance;
        }
    };

    NetConfig net;
    net.channels = 2;
    net.image_size = 8;
    net.base_filters = 4;
    net.res_blocks = 1;

    for (int s = 0; s < settings.seeds; ++s) {
        Rng rng(Rng::stream(seed, 101 + uint64_t(s)));
        auto x = detail::gc_signed<T>({2, 3, 4, 4}, rng);
        auto other = detail::gc_signed<T>({2, 3, 4, 4}, rng);
        auto weigh = [&](Tensor<T> y) { return mean(mul(y, other.detached())); };
        const double eps = settings.eps;

        auto unary = [&](const char* name, auto op) {
            auto f = [&](const Tensor<T>& t) { return weigh(op(t)); };
            record(name, finite_diff_check<T>(f, x, eps));
        };
        unary("relu", [](const Tensor<T>& t) { return relu(t); });
        unary("leaky_relu", [](const Tensor<T>& t) { return leaky_relu(t); });
        unary("tanh", [](const Tensor<T>& t) { return tanh(t); });
        unary("sigmoid", [](const Tensor<T>& t) { return sigmoid(t); });
        unary("exp", [](const Tensor<T>& t) { return exp(t); });
        unary("square", [](const Tensor<T>& t) { return square(t); });
        unary("abs", [](const Tensor<T>& t) { return abs(t); });
        unary("scale", [](const Tensor<T>& t) { return scale(t, 1.7); });
        unary("add_const", [](const Tensor<T>& t) { return add_const(t, 0.3); });
        unary("instance_norm", [](const Tensor<T>& t) { return instance_norm(t); });

        auto pos = detail::gc_uniform<T>({2, 3, 4, 4}, rng, 0.5, 1.5);
        record("log", finite_diff_check<T>(
                          [&](const Tensor<T>& t) { return weigh(log(t)); }, pos, eps));

        record("add", finite_diff_check<T>(
                          [&](const Tensor<T>& t) { return weigh(add(t, other)); }, x, eps));
        record("sub", finite_diff_check<T>(
                          [&](const Tensor<T>& t) { return weigh(sub(other, t)); }, x, eps));
        record("mul", finite_diff_check<T>(
                          [&](const Tensor<T>& t) { return weigh(mul(t, other)); }, x, eps));

        auto bias = detail::gc_uniform<T>({3}, rng, -1, 1);
        record("bias_add",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) { return weigh(bias_add(x, t)); }, bias, eps));

        auto half = detail::gc_uniform<T>({2, 3, 4, 4}, rng, -1, 1);
        const auto cat_w = detail::gc_uniform<T>({2, 6, 4, 4}, rng, -1, 1);
        record("concat_channels",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) {
                       return mean(mul(concat_channels(t, half), cat_w.detached()));
                   },
                   x, eps));

        record("mean",
               finite_diff_check<T>([](const Tensor<T>& t) { return mean(t); }, x, eps));
        record("sum", finite_diff_check<T>(
                          [](const Tensor<T>& t) { return scale(sum(t), 0.01); }, x, eps));
        record("mean_per_item",
               finite_diff_check<T>(
                   [](const Tensor<T>& t) { return mean(square(mean_per_item(t))); }, x, eps));
        auto far = detail::gc_uniform<T>({2, 3, 4, 4}, rng, 2, 4);
        record("l1_distance",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) { return scale(l1_distance(t, far), 0.02); }, x,
                   eps));
        record("mse", finite_diff_check<T>(
                          [&](const Tensor<T>& t) { return mse(t, other); }, x, eps));
        record("marginal_reduce",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) {
                       return marginal_reduce<T>({mean(t), mean(square(t)), mean(mul(t, other))});
                   },
                   x, eps));

        auto a2 = detail::gc_uniform<T>({3, 4}, rng, -1, 1);
        auto b2 = detail::gc_uniform<T>({4, 2}, rng, -1, 1);
        record("matmul", finite_diff_check<T>(
                             [&](const Tensor<T>& t) { return mean(square(matmul(t, b2))); },
                             a2, eps));
        record("matmul",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) { return mean(square(matmul(a2, t))); }, b2, eps));

        auto ximg = detail::gc_uniform<T>({1, 2, 5, 5}, rng, -1, 1);
        auto kern = detail::gc_uniform<T>({3, 2, 3, 3}, rng, -0.5, 0.5);
        record("conv2d",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) { return mean(square(conv2d(t, kern, 2, 1))); },
                   ximg, eps));
        record("conv2d",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) { return mean(square(conv2d(ximg, t, 2, 1))); },
                   kern, eps));
        auto yimg = detail::gc_uniform<T>({1, 3, 3, 3}, rng, -1, 1);
        auto tkern = detail::gc_uniform<T>({3, 2, 4, 4}, rng, -0.5, 0.5);
        record("conv_transpose2d",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) {
                       return mean(square(conv_transpose2d(t, tkern, 2, 1)));
                   },
                   yimg, eps));
        record("conv_transpose2d",
               finite_diff_check<T>(
                   [&](const Tensor<T>& t) {
                       return mean(square(conv_transpose2d(yimg, t, 2, 1)));
                   },
                   tkern, eps));

        // ---- assembled losses, spot-checked parameter coordinates
        auto models = init_models<T>(net, rng);
        auto real_x = detail::gc_uniform<T>({1, 2, 8, 8}, rng, -1, 1);
        auto real_y = detail::gc_uniform<T>({1, 2, 8, 8}, rng, -1, 1);
        std::vector<Tensor<T>> fakes, recons;
        for (int k = 0; k < 2; ++k) {
            fakes.push_back(detail::gc_uniform<T>({1, 2, 8, 8}, rng, -1, 1));
            recons.push_back(detail::gc_uniform<T>({1, 2, 8, 8}, rng, -1, 1));
        }

        // Assembled losses, spot-checked at random parameter coordinates.
        // The nets are full of relu/|.| kinks where central differences are
        // not a valid derivative oracle, so stencil-straddling coordinates
        // are detected via one-sided disagreement and excluded; the oracle
        // quotient itself is always evaluated at f64 on an exact lift of the
        // parameters, keeping it clean of f32 evaluation noise. At least
        // half the candidate coordinates must survive the exclusion.
        const double eps_net = std::is_same_v<T, double> ? 1e-6 : 1e-5;
        int tested_total = 0, skipped_total = 0;
        auto record_ex = [&](const std::string& name, const FiniteDiffResult& r) {
            record(name, r.max_rel_err);
            tested_total += r.tested;
            skipped_total += r.skipped;
        };

        auto oracle_models = detail::lift_models(models);
        auto real_x64 = detail::lift_tensor(real_x);
        auto real_y64 = detail::lift_tensor(real_y);
        std::vector<Tensor<double>> fakes64, recons64;
        for (size_t i = 0; i < fakes.size(); ++i) {
            fakes64.push_back(detail::lift_tensor(fakes[i]));
            recons64.push_back(detail::lift_tensor(recons[i]));
        }

        for (double gamma : {0.0, 0.5}) {
            for (auto variant : {GanObjective::StandardGAN, GanObjective::LeastSquares}) {
                Objective obj;
                obj.variant = variant;
                obj.gamma = gamma;
                const std::string tag = std::string(variant == GanObjective::StandardGAN
                                                        ? "standard"
                                                        : "least_squares") +
                                        "/gamma=" + (gamma == 0 ? "0" : "0.5");

                auto dcoords = detail::gc_coords(models.da.c2.w.numel(), 8, rng);
                record_ex("d_loss/" + tag,
                          detail::cross_precision_check<T>(
                              [&](const Tensor<T>& w) {
                                  DiscriminatorParams<T> d = models.da;
                                  d.c2.w = w;
                                  return d_loss(obj, d, real_y, fakes, recons);
                              },
                              [&](const Tensor<double>& w) {
                                  DiscriminatorParams<double> d = oracle_models.da;
                                  d.c2.w = w;
                                  return d_loss(obj, d, real_y64, fakes64, recons64);
                              },
                              models.da.c2.w, dcoords, eps_net, settings.tolerance));

                CycleBatch<T> batch;
                batch.real_x = real_x;
                batch.real_y = real_y;
                batch.lat_xy = {detail::gc_uniform<T>({1, 1, 8, 8}, rng, -1, 1),
                                detail::gc_uniform<T>({1, 1, 8, 8}, rng, -1, 1)};
                batch.lat_yx = {detail::gc_uniform<T>({1, 1, 8, 8}, rng, -1, 1),
                                detail::gc_uniform<T>({1, 1, 8, 8}, rng, -1, 1)};
                CycleBatch<double> batch64;
                batch64.real_x = real_x64;
                batch64.real_y = real_y64;
                for (const auto& t : batch.lat_xy)
                    batch64.lat_xy.push_back(detail::lift_tensor(t));
                for (const auto& t : batch.lat_yx)
                    batch64.lat_yx.push_back(detail::lift_tensor(t));

                auto gcoords = detail::gc_coords(models.ga.down1.w.numel(), 8, rng);
                record_ex("g_loss/" + tag,
                          detail::cross_precision_check<T>(
                              [&](const Tensor<T>& w) {
                                  GeneratorParams<T> ga = models.ga;
                                  ga.down1.w = w;
                                  return scale(g_loss(obj, ga, models.gb, models.da,
                                                      models.db, batch)
                                                   .loss,
                                               1.0 / 64.0);
                              },
                              [&](const Tensor<double>& w) {
                                  GeneratorParams<double> ga = oracle_models.ga;
                                  ga.down1.w = w;
                                  return scale(g_loss(obj, ga, oracle_models.gb,
                                                      oracle_models.da, oracle_models.db,
                                                      batch64)
                                                   .loss,
                                               1.0 / 64.0);
                              },
                              models.ga.down1.w, gcoords, eps_net, settings.tolerance));
            }
        }

        // encoder path including KL and reparameterized draw
        auto eps0 = draw_encoder_eps<T>(net, 1, 1, &rng);
        std::vector<Tensor<double>> eps064{detail::lift_tensor(eps0[0])};
        auto ecoords = detail::gc_coords(models.ea.q1.w.numel(), 8, rng);
        record_ex("encoder_kl_path",
                  detail::cross_precision_check<T>(
                      [&](const Tensor<T>& w) {
                          EncoderParams<T> e = models.ea;
                          e.q1.w = w;
                          auto draws = encoder_sfm_from_eps(e, real_x, eps0);
                          return add(mean(square(draws.sfms[0])),
                                     kl_loss(draws.mu, draws.logvar));
                      },
                      [&](const Tensor<double>& w) {
                          EncoderParams<double> e = oracle_models.ea;
                          e.q1.w = w;
                          auto draws = encoder_sfm_from_eps(e, real_x64, eps064);
                          return add(mean(square(draws.sfms[0])),
                                     kl_loss(draws.mu, draws.logvar));
                      },
                      models.ea.q1.w, ecoords, eps_net, settings.tolerance));

        // supervised warm-up loss (pure L1 between net outputs and targets)
        auto scoords = detail::gc_coords(models.ga.conv_out.w.numel(), 8, rng);
        record_ex("supervised_pair_loss",
                  detail::cross_precision_check<T>(
                      [&](const Tensor<T>& w) {
                          GeneratorParams<T> ga = models.ga;
                          ga.conv_out.w = w;
                          return scale(supervised_pair_loss(ga, models.gb, real_x, real_y,
                                                            batchless_latent(real_x),
                                                            batchless_latent(real_y)),
                                       1.0 / 64.0);
                      },
                      [&](const Tensor<double>& w) {
                          GeneratorParams<double> ga = oracle_models.ga;
                          ga.conv_out.w = w;
                          return scale(supervised_pair_loss(ga, oracle_models.gb, real_x64,
                                                            real_y64,
                                                            batchless_latent(real_x64),
                                                            batchless_latent(real_y64)),
                                       1.0 / 64.0);
                      },
                      models.ga.conv_out.w, scoords, eps_net, settings.tolerance));

        if (tested_total < (tested_total + skipped_total) / 2)
            record("assembled_coordinate_coverage", 1.0);  // forces a visible failure

        // prior penalty (quadratic)
        record("prior_penalty",
               finite_diff_check<T>(
                   [](const Tensor<T>& t) { return prior_penalty<T>({t}, 0.1); },
                   detail::gc_signed<T>({16}, rng), eps));
    }
    return report;
}

}  // namespace bcgn
