#pragma once

// Iteration loop: sample SFMs from the current batch via the encoders, build
// variant-concatenated inputs, run both cycles over the m latent draws, then
// take one ADAM step per network group (generators+encoders jointly, then
// each discriminator) per iteration. Also: warm-up on paired data, inference
// helpers, and the deterministic evaluation probes shared with the CLI.

#include <functional>
#include <future>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bcgn/data.hpp"
#include "bcgn/losses.hpp"
#include "bcgn/nets.hpp"
#include "bcgn/optim.hpp"

namespace bcgn {

struct TrainConfig {
    NetConfig net;
    Objective objective;
    int epochs_total = 100;
    int epochs_constant = 50;
    double lr = 2e-4;
    double beta1 = 0.5, beta2 = 0.999;
    int batch = 1;
    int m_x = 3, m_y = 3;  // latent draws per direction
    uint64_t seed = 1;
    int warmup_pairs = 0;  // paired items per epoch start; 0 = unsupervised
    LatentKind latent = LatentKind::Sfm;
    LrDecay decay = LrDecay::Linear;
    int64_t max_iters = 0;  // optional hard cap across epochs, 0 = none
    int threads = 1;        // >1 evaluates latent draws on concurrent tapes

    LrSchedule schedule() const { return {lr, epochs_total, epochs_constant, decay}; }

    void validate() const {
        net.validate();
        objective.validate();
        if (epochs_total < 1 || epochs_constant > epochs_total || epochs_constant < 0)
            throw ConfigError("train: bad epoch counts");
        if (lr <= 0) throw ConfigError("train: lr must be > 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("train: betas must lie in [0,1)");
        if (batch < 1) throw ConfigError("train: batch must be >= 1");
        if (m_x < 1 || m_y < 1) throw ConfigError("train: latent counts must be >= 1");
        if (warmup_pairs < 0) throw ConfigError("train: warmup_pairs must be >= 0");
        if (max_iters < 0) throw ConfigError("train: max_iters must be >= 0");
        if (threads < 1) throw ConfigError("train: threads must be >= 1");
        if (threads > 1 && m_x != m_y)
            throw ConfigError("train: parallel latent mode requires m_x == m_y");
    }
};

struct IterationMetrics {
    int64_t iter = 0;
    int epoch = 0;
    double g_loss = 0, da_loss = 0, db_loss = 0;
    double recon_l1 = 0;  // cycle L1 term of this batch
    double kl = 0;
    double lr = 0;
};

struct TrainState {
    ModelParams<float> models;
    AdamState<float> opt_g, opt_da, opt_db;
    Rng latent_rng{0};
    int epoch = 0;
    int iter_in_epoch = 0;
    int64_t global_iter = 0;
};

struct TrainHooks {
    // Called after every completed iteration (counters already advanced, so
    // checkpointing the state here resumes at the next iteration).
    std::function<void(TrainState&, const IterationMetrics&)> on_iteration;
};

namespace detail {

struct LatentDraws {
    std::vector<Tensor<float>> eps_a, eps_b;      // encoder bottleneck noise (SFM mode)
    std::vector<Tensor<float>> noise_xy, noise_yx;  // plain latent maps (noise mode)
};

// All randomness of one iteration is drawn up front in a fixed order, so the
// serial and parallel paths consume the identical stream.
inline LatentDraws draw_iteration_latents(const TrainConfig& cfg, int n, Rng& rng) {
    LatentDraws d;
    if (cfg.latent == LatentKind::Sfm) {
        d.eps_a = draw_encoder_eps<float>(cfg.net, n, cfg.m_x, &rng);
        d.eps_b = draw_encoder_eps<float>(cfg.net, n, cfg.m_y, &rng);
    } else {
        const int hw = cfg.net.image_size;
        d.noise_xy = make_noise_bank(cfg.m_y, n, hw, hw, rng).maps;
        d.noise_yx = make_noise_bank(cfg.m_x, n, hw, hw, rng).maps;
    }
    return d;
}

template <class Group>
void append_named(NamedParams<float>& out, const std::string& prefix, Group& g) {
    auto part = named_params<float>(prefix, g);
    out.insert(out.end(), part.begin(), part.end());
}

inline std::vector<Tensor<float>> detach_all(const std::vector<Tensor<float>>& xs) {
    std::vector<Tensor<float>> out;
    out.reserve(xs.size());
    for (const auto& t : xs) out.push_back(t.detached());
    return out;
}

}  // namespace detail

// One iteration on the given batches; one optimizer step per network group
// in the order generators+encoders, D_A, D_B. Discriminator steps reuse the
// generated samples (detached) from the generator pass.
inline IterationMetrics train_iteration(TrainState& state, const TrainConfig& cfg,
                                        const Tensor<float>& batch_x,
                                        const Tensor<float>& batch_y) {
    const Objective& obj = cfg.objective;
    const double lr = lr_at(state.epoch, cfg.schedule());
    const int n = batch_x.dim(0);
    auto draws = detail::draw_iteration_latents(cfg, n, state.latent_rng);

    IterationMetrics metrics;
    metrics.epoch = state.epoch;
    metrics.lr = lr;

    std::vector<Tensor<float>> fake_y, rec_y, fake_x, rec_x;

    try {
        if (cfg.threads <= 1) {
            // ---- generators + encoders, single tape
            Tape<float> tape;
            auto ga_w = watch_params(tape, state.models.ga);
            auto gb_w = watch_params(tape, state.models.gb);
            CycleBatch<float> batch;
            batch.real_x = batch_x;
            batch.real_y = batch_y;
            EncoderParams<float> ea_w, eb_w;
            if (cfg.latent == LatentKind::Sfm) {
                ea_w = watch_params(tape, state.models.ea);
                eb_w = watch_params(tape, state.models.eb);
                auto da = encoder_sfm_from_eps(ea_w, batch_x, draws.eps_a);
                auto db = encoder_sfm_from_eps(eb_w, batch_y, draws.eps_b);
                batch.lat_yx = da.sfms;
                batch.lat_xy = db.sfms;
                batch.kl_mu_a = da.mu;
                batch.kl_logvar_a = da.logvar;
                batch.kl_mu_b = db.mu;
                batch.kl_logvar_b = db.logvar;
            } else {
                batch.lat_xy = draws.noise_xy;
                batch.lat_yx = draws.noise_yx;
            }
            auto cf = g_loss(obj, ga_w, gb_w, state.models.da, state.models.db, batch);
            tape.backward(cf.loss);

            GradMap<float> grads;
            collect_grads(tape, "theta_ga/", ga_w, grads);
            collect_grads(tape, "theta_gb/", gb_w, grads);
            if (cfg.latent == LatentKind::Sfm) {
                collect_grads(tape, "theta_ea/", ea_w, grads);
                collect_grads(tape, "theta_eb/", eb_w, grads);
            }
            NamedParams<float> group;
            detail::append_named(group, "theta_ga/", state.models.ga);
            detail::append_named(group, "theta_gb/", state.models.gb);
            if (cfg.latent == LatentKind::Sfm) {
                detail::append_named(group, "theta_ea/", state.models.ea);
                detail::append_named(group, "theta_eb/", state.models.eb);
            }
            state.opt_g.beta1 = cfg.beta1;
            state.opt_g.beta2 = cfg.beta2;
            adam_step(group, grads, state.opt_g, lr);

            metrics.g_loss = double(cf.loss.scalar());
            metrics.recon_l1 = cf.cyc_value;
            metrics.kl = cf.kl_value;
            fake_y = detail::detach_all(cf.fake_y);
            rec_y = detail::detach_all(cf.rec_y);
            fake_x = detail::detach_all(cf.fake_x);
            rec_x = detail::detach_all(cf.rec_x);
        } else {
            // ---- parallel latent mode: one tape per draw, fixed-order reduce
            const int m = cfg.m_y;
            struct TaskOut {
                GradMap<float> grads;
                double loss = 0, cyc = 0;
                Tensor<float> fy, ry, fx, rx;
            };
            auto run_draw = [&](int k) {
                TaskOut out;
                Tape<float> tape;
                auto ga_w = watch_params(tape, state.models.ga);
                auto gb_w = watch_params(tape, state.models.gb);
                CycleBatch<float> batch;
                batch.real_x = batch_x;
                batch.real_y = batch_y;
                EncoderParams<float> ea_w, eb_w;
                if (cfg.latent == LatentKind::Sfm) {
                    ea_w = watch_params(tape, state.models.ea);
                    eb_w = watch_params(tape, state.models.eb);
                    auto da = encoder_sfm_from_eps(ea_w, batch_x, {draws.eps_a[size_t(k)]});
                    auto db = encoder_sfm_from_eps(eb_w, batch_y, {draws.eps_b[size_t(k)]});
                    batch.lat_yx = da.sfms;
                    batch.lat_xy = db.sfms;
                    if (k == 0) {  // KL terms enter once, through draw 0's tape
                        batch.kl_mu_a = da.mu;
                        batch.kl_logvar_a = da.logvar;
                        batch.kl_mu_b = db.mu;
                        batch.kl_logvar_b = db.logvar;
                    }
                } else {
                    batch.lat_xy = {draws.noise_xy[size_t(k)]};
                    batch.lat_yx = {draws.noise_yx[size_t(k)]};
                }
                // KL and priors enter once overall. Draw 0 carries them
                // pre-scaled by m so the 1/m reduction below recovers the
                // joint loss and its gradients exactly.
                Objective per = obj;
                if (k == 0) {
                    per.lambda_kl = obj.lambda_kl * double(m);
                    per.weight_decay = obj.weight_decay * double(m);
                } else {
                    per.lambda_kl = 0;
                    per.weight_decay = 0;
                }
                auto cf = g_loss(per, ga_w, gb_w, state.models.da, state.models.db, batch);
                tape.backward(cf.loss);
                accumulate_grads(tape, "theta_ga/", ga_w, 1.0, out.grads);
                accumulate_grads(tape, "theta_gb/", gb_w, 1.0, out.grads);
                if (cfg.latent == LatentKind::Sfm) {
                    accumulate_grads(tape, "theta_ea/", ea_w, 1.0, out.grads);
                    accumulate_grads(tape, "theta_eb/", eb_w, 1.0, out.grads);
                }
                out.loss = double(cf.loss.scalar());
                out.cyc = cf.cyc_value;
                out.fy = cf.fake_y[0].detached();
                out.ry = cf.rec_y[0].detached();
                out.fx = cf.fake_x[0].detached();
                out.rx = cf.rec_x[0].detached();
                return out;
            };
            std::vector<std::future<TaskOut>> futures;
            for (int k = 0; k < m; ++k)
                futures.push_back(std::async(std::launch::async, run_draw, k));
            std::vector<TaskOut> outs;
            for (auto& f : futures) outs.push_back(f.get());

            GradMap<float> grads;
            double loss_acc = 0, cyc_acc = 0;
            for (int k = 0; k < m; ++k) {  // fixed index order
                for (auto& [name, g] : outs[size_t(k)].grads) {
                    auto& dst = grads[name];
                    if (dst.empty()) dst.assign(g.size(), 0.f);
                    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] / float(m);
                }
                loss_acc += outs[size_t(k)].loss / double(m);
                cyc_acc += outs[size_t(k)].cyc / double(m);
                fake_y.push_back(outs[size_t(k)].fy);
                rec_y.push_back(outs[size_t(k)].ry);
                fake_x.push_back(outs[size_t(k)].fx);
                rec_x.push_back(outs[size_t(k)].rx);
            }
            NamedParams<float> group;
            detail::append_named(group, "theta_ga/", state.models.ga);
            detail::append_named(group, "theta_gb/", state.models.gb);
            if (cfg.latent == LatentKind::Sfm) {
                detail::append_named(group, "theta_ea/", state.models.ea);
                detail::append_named(group, "theta_eb/", state.models.eb);
            }
            state.opt_g.beta1 = cfg.beta1;
            state.opt_g.beta2 = cfg.beta2;
            adam_step(group, grads, state.opt_g, lr);
            metrics.g_loss = loss_acc;
            metrics.recon_l1 = cyc_acc;
        }

        // ---- discriminators, one step each, on the pre-update samples
        auto d_step = [&](DiscriminatorParams<float>& d, AdamState<float>& opt,
                          const Tensor<float>& real, const std::vector<Tensor<float>>& fakes,
                          const std::vector<Tensor<float>>& recons, const char* prefix) {
            Tape<float> tape;
            auto d_w = watch_params(tape, d);
            auto loss = d_loss(obj, d_w, real, fakes, recons);
            tape.backward(loss);
            GradMap<float> grads;
            collect_grads(tape, prefix, d_w, grads);
            auto group = named_params<float>(prefix, d);
            opt.beta1 = cfg.beta1;
            opt.beta2 = cfg.beta2;
            adam_step(group, grads, opt, lr);
            return double(loss.scalar());
        };
        metrics.da_loss = d_step(state.models.da, state.opt_da, batch_y, fake_y, rec_y,
                                 "theta_da/");
        metrics.db_loss = d_step(state.models.db, state.opt_db, batch_x, fake_x, rec_x,
                                 "theta_db/");
    } catch (const NumericError& e) {
        throw NumericError("iteration " + std::to_string(state.global_iter) + ": " + e.what());
    }

    metrics.iter = state.global_iter;
    return metrics;
}

// Warm-up: one pass of single-pair supervised steps on the fixed warm-up
// subset (SFMs taken from the current encoders, eps = 0, detached).
inline void run_warmup(TrainState& state, const TrainConfig& cfg, const Dataset& a,
                       const Dataset& b, const std::vector<int>& pair_indices, double lr) {
    for (int idx : pair_indices) {
        auto x = stack_items(a, {idx});
        auto y = stack_items(b, {idx});
        Tensor<float> lat_xy, lat_yx;
        if (cfg.latent == LatentKind::Sfm) {
            lat_xy = encoder_forward(state.models.eb, cfg.net, y, nullptr).sfm.detached();
            lat_yx = encoder_forward(state.models.ea, cfg.net, x, nullptr).sfm.detached();
        } else {
            const int hw = cfg.net.image_size;
            lat_xy = make_noise_bank(1, 1, hw, hw, state.latent_rng).maps[0];
            lat_yx = make_noise_bank(1, 1, hw, hw, state.latent_rng).maps[0];
        }
        Tape<float> tape;
        auto ga_w = watch_params(tape, state.models.ga);
        auto gb_w = watch_params(tape, state.models.gb);
        tape.backward(supervised_pair_loss(ga_w, gb_w, x, y, lat_xy, lat_yx));
        GradMap<float> grads;
        collect_grads(tape, "theta_ga/", ga_w, grads);
        collect_grads(tape, "theta_gb/", gb_w, grads);
        NamedParams<float> group;
        detail::append_named(group, "theta_ga/", state.models.ga);
        detail::append_named(group, "theta_gb/", state.models.gb);
        adam_step(group, grads, state.opt_g, lr);
    }
}

inline std::vector<int> shuffled_indices(size_t n, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[size_t(rng.below(i))]);
    return idx;
}

// Deterministic per-run warm-up pair selection.
inline std::vector<int> warmup_pair_indices(const TrainConfig& cfg, size_t paired) {
    if (cfg.warmup_pairs == 0) return {};
    Rng rng(Rng::stream(cfg.seed, 0x3a9f));
    auto idx = shuffled_indices(paired, rng);
    idx.resize(std::min(size_t(cfg.warmup_pairs), paired));
    return idx;
}

// Full training run. Pass `resume` to continue from a checkpointed state;
// the datasets must be the ones the run started with (they are regenerated
// from the task seed by the caller).
inline TrainState train_loop(const Dataset& a, const Dataset& b, const TrainConfig& cfg,
                             const TrainHooks& hooks, std::optional<TrainState> resume = {}) {
    cfg.validate();
    if (a.items.empty() || b.items.empty()) throw ConfigError("train: empty dataset");
    const int iters_per_epoch = int(std::min(a.size(), b.size())) / cfg.batch;
    if (iters_per_epoch < 1) throw ConfigError("train: batch larger than dataset");

    TrainState state;
    if (resume) {
        state = std::move(*resume);
    } else {
        Rng init_rng(Rng::stream(cfg.seed, 0x1417));
        state.models = init_models<float>(cfg.net, init_rng);
        state.latent_rng.set_state(Rng::stream(cfg.seed, 0x7a7e));
        state.opt_g.beta1 = state.opt_da.beta1 = state.opt_db.beta1 = cfg.beta1;
        state.opt_g.beta2 = state.opt_da.beta2 = state.opt_db.beta2 = cfg.beta2;
    }
    const auto warmup = warmup_pair_indices(cfg, std::min(a.size(), b.size()));

    while (state.epoch < cfg.epochs_total) {
        Rng shuffle_rng(Rng::stream(cfg.seed, 0xe90c + uint64_t(state.epoch)));
        auto order_a = shuffled_indices(a.size(), shuffle_rng);
        auto order_b = shuffled_indices(b.size(), shuffle_rng);
        const double lr = lr_at(state.epoch, cfg.schedule());

        // epoch start only; a mid-epoch resume must not repeat the warm-up
        if (!warmup.empty() && state.iter_in_epoch == 0)
            run_warmup(state, cfg, a, b, warmup, lr);

        while (state.iter_in_epoch < iters_per_epoch) {
            const int pos = state.iter_in_epoch * cfg.batch;
            std::vector<int> ia(order_a.begin() + pos, order_a.begin() + pos + cfg.batch);
            std::vector<int> ib(order_b.begin() + pos, order_b.begin() + pos + cfg.batch);
            auto metrics = train_iteration(state, cfg, stack_items(a, ia), stack_items(b, ib));
            state.global_iter += 1;
            state.iter_in_epoch += 1;  // counters now point past this iteration
            metrics.iter = state.global_iter;
            if (hooks.on_iteration) hooks.on_iteration(state, metrics);
            if (cfg.max_iters > 0 && state.global_iter >= cfg.max_iters) return state;
        }
        state.iter_in_epoch = 0;
        state.epoch += 1;
    }
    return state;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

enum class Direction { AtoB, BtoA };

// Deterministic translation of a batch given an explicit latent map.
inline Tensor<float> infer_translate(const ModelParams<float>& models, const Tensor<float>& x,
                                     const Tensor<float>& latent, Direction dir) {
    if (latent.rank() != 4 || latent.dim(1) != 1)
        throw ShapeError("infer_translate: latent must be [n,1,H,W]");
    const auto& g = dir == Direction::AtoB ? models.ga : models.gb;
    return generator_forward(g, concat_channels(x, latent));
}

// One output per latent; identical latents give identical outputs.
inline std::vector<Tensor<float>> infer_diversify(const ModelParams<float>& models,
                                                  const Tensor<float>& x,
                                                  const std::vector<Tensor<float>>& latents,
                                                  Direction dir) {
    if (latents.size() < 2) throw ConfigError("infer_diversify: need at least two latents");
    std::vector<Tensor<float>> out;
    for (const auto& f : latents) out.push_back(infer_translate(models, x, f, dir));
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic evaluation probes (shared by training diagnostics and `eval`)
// ---------------------------------------------------------------------------

struct PairEval {
    double translate_l1 = -1;  // mean per-pixel |G_A(x) - y_pair|; -1 if unpaired
    double recon_l1 = 0;       // mean per-pixel |G_B(G_A(x)) - x|, plus the reverse cycle
};

// Reference latents for deterministic evaluation: eps=0 SFMs of the first
// items of each domain (or zero maps in noise mode).
inline std::pair<Tensor<float>, Tensor<float>> eval_latents(const ModelParams<float>& models,
                                                            const TrainConfig& cfg,
                                                            const Dataset& a, const Dataset& b,
                                                            int n) {
    Tensor<float> lat_xy, lat_yx;
    if (cfg.latent == LatentKind::Sfm) {
        auto xref = stack_items(a, {0});
        auto yref = stack_items(b, {0});
        auto fy = encoder_forward(models.eb, cfg.net, yref, nullptr).sfm.detached();
        auto fx = encoder_forward(models.ea, cfg.net, xref, nullptr).sfm.detached();
        // broadcast the single reference map over the batch
        lat_xy = Tensor<float>::zeros({n, 1, cfg.net.image_size, cfg.net.image_size});
        lat_yx = Tensor<float>::zeros({n, 1, cfg.net.image_size, cfg.net.image_size});
        for (int i = 0; i < n; ++i) {
            std::copy(fy.data().begin(), fy.data().end(),
                      lat_xy.store->begin() + int64_t(i) * fy.numel());
            std::copy(fx.data().begin(), fx.data().end(),
                      lat_yx.store->begin() + int64_t(i) * fx.numel());
        }
    } else {
        lat_xy = Tensor<float>::zeros({n, 1, cfg.net.image_size, cfg.net.image_size});
        lat_yx = Tensor<float>::zeros({n, 1, cfg.net.image_size, cfg.net.image_size});
    }
    return {lat_xy, lat_yx};
}

inline PairEval evaluate_pairs(const ModelParams<float>& models, const TrainConfig& cfg,
                               const Dataset& a, const Dataset& b, int max_items = 64) {
    const int n = int(std::min({size_t(max_items), a.size(), b.size()}));
    std::vector<int> idx(size_t(n), 0);
    std::iota(idx.begin(), idx.end(), 0);
    auto x = stack_items(a, idx);
    auto [lat_xy, lat_yx] = eval_latents(models, cfg, a, b, n);

    auto fake_y = infer_translate(models, x, lat_xy, Direction::AtoB);
    auto rec_x = infer_translate(models, fake_y, lat_yx, Direction::BtoA);

    PairEval out;
    const double px = double(x.numel());
    double acc = 0;
    for (size_t i = 0; i < x.data().size(); ++i)
        acc += std::abs(double(rec_x.data()[i]) - double(x.data()[i]));
    // reverse cycle
    auto y = stack_items(b, idx);
    auto fake_x = infer_translate(models, y, lat_yx, Direction::BtoA);
    auto rec_y = infer_translate(models, fake_x, lat_xy, Direction::AtoB);
    for (size_t i = 0; i < y.data().size(); ++i)
        acc += std::abs(double(rec_y.data()[i]) - double(y.data()[i]));
    out.recon_l1 = acc / (2.0 * px);

    if (!a.pairing.empty()) {
        std::vector<int> paired;
        for (int i : idx) paired.push_back(a.pairing[size_t(i)]);
        auto target = stack_items(b, paired);
        double tacc = 0;
        for (size_t i = 0; i < target.data().size(); ++i)
            tacc += std::abs(double(fake_y.data()[i]) - double(target.data()[i]));
        out.translate_l1 = tacc / px;
    }
    return out;
}

// Eval-mode reconstructions of up to `max_items` items from each domain;
// used by the reconstructed-distribution metrics.
inline std::pair<std::vector<Tensor<float>>, std::vector<Tensor<float>>> reconstruct_items(
    const ModelParams<float>& models, const TrainConfig& cfg, const Dataset& a, const Dataset& b,
    int max_items = 64) {
    const int n = int(std::min({size_t(max_items), a.size(), b.size()}));
    std::vector<int> idx(size_t(n), 0);
    std::iota(idx.begin(), idx.end(), 0);
    auto [lat_xy, lat_yx] = eval_latents(models, cfg, a, b, n);
    auto x = stack_items(a, idx);
    auto y = stack_items(b, idx);
    auto rec_x = infer_translate(models, infer_translate(models, x, lat_xy, Direction::AtoB),
                                 lat_yx, Direction::BtoA);
    auto rec_y = infer_translate(models, infer_translate(models, y, lat_yx, Direction::BtoA),
                                 lat_xy, Direction::AtoB);
    auto split = [](const Tensor<float>& batch) {
        std::vector<Tensor<float>> items;
        const int nb = batch.dim(0);
        const int64_t per = batch.numel() / nb;
        for (int i = 0; i < nb; ++i) {
            Tensor<float> item = Tensor<float>::zeros(
                {batch.dim(1), batch.dim(2), batch.dim(3)});
            std::copy_n(batch.data().begin() + int64_t(i) * per, per, item.store->begin());
            items.push_back(std::move(item));
        }
        return items;
    };
    return {split(rec_x), split(rec_y)};
}

// A -> B translations of up to `max_items` items, eval-mode latents.
inline std::vector<Tensor<float>> translate_items(const ModelParams<float>& models,
                                                  const TrainConfig& cfg, const Dataset& a,
                                                  const Dataset& b, int max_items = 256) {
    const int n = int(std::min(size_t(max_items), a.size()));
    std::vector<int> idx(size_t(n), 0);
    std::iota(idx.begin(), idx.end(), 0);
    auto [lat_xy, lat_yx] = eval_latents(models, cfg, a, b, n);
    (void)lat_yx;
    auto fake_y = infer_translate(models, stack_items(a, idx), lat_xy, Direction::AtoB);
    std::vector<Tensor<float>> items;
    const int64_t per = fake_y.numel() / n;
    for (int i = 0; i < n; ++i) {
        Tensor<float> item =
            Tensor<float>::zeros({fake_y.dim(1), fake_y.dim(2), fake_y.dim(3)});
        std::copy_n(fake_y.data().begin() + int64_t(i) * per, per, item.store->begin());
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace bcgn
