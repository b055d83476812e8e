#pragma once

// Training objectives for the integrated cyclic framework: discriminator and
// generator negative log posteriors under both adversarial objectives, with
// the balance factor gamma weighting reconstructed images as extra fake
// samples, Gaussian-prior weight penalties, and Monte-Carlo averaging over
// the latent draws. Every loss here is minimized; ascending the posterior is
// descending these values.

#include <string>
#include <vector>

#include "bcgn/nets.hpp"
#include "bcgn/tensor.hpp"

namespace bcgn {

enum class GanObjective { StandardGAN, LeastSquares };
enum class PriorKind { SquaredL2, SquaredL1 };

struct Objective {
    GanObjective variant = GanObjective::LeastSquares;
    double gamma = 0.0;        // reconstructed-end fake weight, (1+g):1:g sample ratio
    double lambda_cyc = 10.0;  // cycle-consistency weight
    double lambda_kl = 0.1;    // encoder bottleneck KL weight
    double weight_decay = 1e-4;  // prior precision alpha
    PriorKind prior = PriorKind::SquaredL2;

    bool sigmoid_head() const { return variant == GanObjective::StandardGAN; }

    void validate() const {
        if (gamma < 0) throw ConfigError("objective: gamma must be >= 0");
        if (lambda_cyc <= 0) throw ConfigError("objective: lambda must be > 0");
        if (lambda_kl < 0) throw ConfigError("objective: lambda_kl must be >= 0");
        if (weight_decay < 0) throw ConfigError("objective: alpha must be >= 0");
    }
};

// m variant inputs x (+) f_k, one per latent draw.
template <typename T>
std::vector<Tensor<T>> make_variant_inputs(const Tensor<T>& x,
                                           const std::vector<Tensor<T>>& latents) {
    if (latents.empty()) throw ShapeError("make_variant_inputs: need at least one latent");
    std::vector<Tensor<T>> out;
    out.reserve(latents.size());
    for (const Tensor<T>& f : latents) out.push_back(concat_channels(x, f));
    return out;
}

// Gaussian prior realized as alpha * sum(theta^2); the squared-L1 variant
// alpha * (sum|theta|)^2 is kept for comparison.
template <typename T>
Tensor<T> prior_penalty(const std::vector<Tensor<T>>& params, double alpha,
                        PriorKind kind = PriorKind::SquaredL2) {
    if (alpha < 0) throw ConfigError("prior_penalty: alpha must be >= 0");
    if (params.empty()) throw ShapeError("prior_penalty: empty parameter list");
    Tensor<T> acc;
    for (const Tensor<T>& p : params) {
        Tensor<T> term = kind == PriorKind::SquaredL2 ? sum(square(p)) : sum(abs(p));
        acc = acc.store ? add(acc, term) : term;
    }
    if (kind == PriorKind::SquaredL1) acc = square(acc);
    return scale(acc, alpha);
}

template <typename T, class Params>
std::vector<Tensor<T>> param_list(Params& params) {
    std::vector<Tensor<T>> out;
    params.visit([&](const char*, Tensor<T>& t) { out.push_back(t); });
    return out;
}

namespace detail {

// Patch maps are mean-reduced per item before entering any loss term.
template <typename T>
Tensor<T> patch_score(const DiscriminatorParams<T>& d, const Tensor<T>& img, bool sigmoid_head) {
    return mean_per_item(discriminator_forward(d, img, sigmoid_head));
}

// mean_j log D(img_j)
template <typename T>
Tensor<T> mean_log_d(const DiscriminatorParams<T>& d, const Tensor<T>& img, bool sig) {
    return mean(log(patch_score(d, img, sig)));
}

// mean_j log(1 - D(img_j))
template <typename T>
Tensor<T> mean_log_one_minus_d(const DiscriminatorParams<T>& d, const Tensor<T>& img, bool sig) {
    return mean(log(add_const(scale(patch_score(d, img, sig), -1.0), 1.0)));
}

// mean_j (D(img_j) - 1)^2
template <typename T>
Tensor<T> mean_sq_d_minus_one(const DiscriminatorParams<T>& d, const Tensor<T>& img, bool sig) {
    return mean(square(add_const(patch_score(d, img, sig), -1.0)));
}

// mean_j D(img_j)^2
template <typename T>
Tensor<T> mean_sq_d(const DiscriminatorParams<T>& d, const Tensor<T>& img, bool sig) {
    return mean(square(patch_score(d, img, sig)));
}

}  // namespace detail

// Discriminator loss. `fakes` holds one generated batch per latent draw,
// `recons` one reconstructed batch per draw (paired modulo its length when
// the counts differ). With m = |fakes| this evaluates
//   standard: -[(1+g) m sum_j log D(y) + sum_ik log(1-D(fake))
//              + g sum_jl log(1-D(recon))] / (n m) + prior,
//   least squares: [(1+g) m sum_j (D(y)-1)^2 + sum_ik D(fake)^2
//              + g sum_jl D(recon)^2] / (n m) + prior.
template <typename T>
Tensor<T> d_loss(const Objective& obj, DiscriminatorParams<T>& d, const Tensor<T>& real,
                 const std::vector<Tensor<T>>& fakes, const std::vector<Tensor<T>>& recons) {
    obj.validate();
    if (fakes.empty()) throw ShapeError("d_loss: empty fakes list");
    const bool sig = obj.sigmoid_head();
    const bool use_recons = obj.gamma > 0 && !recons.empty();

    Tensor<T> real_term = obj.variant == GanObjective::StandardGAN
                              ? detail::mean_log_d(d, real, sig)
                              : detail::mean_sq_d_minus_one(d, real, sig);
    std::vector<Tensor<T>> per_draw;
    for (size_t k = 0; k < fakes.size(); ++k) {
        Tensor<T> term;
        if (obj.variant == GanObjective::StandardGAN) {
            term = add(scale(real_term, 1.0 + obj.gamma),
                       detail::mean_log_one_minus_d(d, fakes[k], sig));
            if (use_recons)
                term = add(term, scale(detail::mean_log_one_minus_d(
                                           d, recons[k % recons.size()], sig),
                                       obj.gamma));
            term = scale(term, -1.0);
        } else {
            term = add(scale(real_term, 1.0 + obj.gamma), detail::mean_sq_d(d, fakes[k], sig));
            if (use_recons)
                term = add(term,
                           scale(detail::mean_sq_d(d, recons[k % recons.size()], sig), obj.gamma));
        }
        per_draw.push_back(term);
    }
    Tensor<T> loss = marginal_reduce(per_draw);
    if (obj.weight_decay > 0)
        loss = add(loss, prior_penalty(param_list<T>(d), obj.weight_decay, obj.prior));
    return loss;
}

// Inputs for one generator-loss evaluation. `lat_xy` are the latents
// concatenated to x-domain inputs (encoded from y), `lat_yx` the reverse.
// `kl_*` carry the encoder bottleneck moments when the latents came from the
// encoders; leave them without storage for plain noise latents.
template <typename T>
struct CycleBatch {
    Tensor<T> real_x, real_y;
    std::vector<Tensor<T>> lat_xy, lat_yx;
    Tensor<T> kl_mu_a, kl_logvar_a;  // from E_A(x)
    Tensor<T> kl_mu_b, kl_logvar_b;  // from E_B(y)

    bool has_kl() const { return kl_mu_a.store != nullptr; }
};

// One latent draw of one cycle direction.
template <typename T>
struct CycleTerm {
    Tensor<T> fake, rec;
    Tensor<T> adv;  // adversarial part, minimized
    Tensor<T> cyc;  // L1 cycle term
};

namespace detail {

// Builds src -> fake -> rec for latent draw k of one direction.
// d_fwd judges the fake's domain, d_back judges the source domain.
template <typename T>
CycleTerm<T> cycle_direction(const Objective& obj, const GeneratorParams<T>& g_fwd,
                             const GeneratorParams<T>& g_back,
                             const DiscriminatorParams<T>& d_fwd,
                             const DiscriminatorParams<T>& d_back, const Tensor<T>& src,
                             const std::vector<Tensor<T>>& lat_fwd,
                             const std::vector<Tensor<T>>& lat_back, size_t k) {
    const bool sig = obj.sigmoid_head();
    CycleTerm<T> out;
    out.fake = generator_forward(g_fwd, concat_channels(src, lat_fwd[k]));
    out.rec = generator_forward(g_back, concat_channels(out.fake, lat_back[k % lat_back.size()]));
    if (obj.variant == GanObjective::StandardGAN) {
        out.adv = scale(mean_log_d(d_fwd, out.fake, sig), -1.0);
        if (obj.gamma > 0)
            out.adv = add(out.adv, scale(mean_log_d(d_back, out.rec, sig), -obj.gamma));
    } else {
        out.adv = mean_sq_d_minus_one(d_fwd, out.fake, sig);
        if (obj.gamma > 0)
            out.adv = add(out.adv, scale(mean_sq_d_minus_one(d_back, out.rec, sig), obj.gamma));
    }
    out.cyc = l1_distance(out.rec, src);
    return out;
}

}  // namespace detail

template <typename T>
struct CycleForward {
    std::vector<Tensor<T>> fake_y, rec_x;  // x -> y~ -> x^ per lat_xy draw
    std::vector<Tensor<T>> fake_x, rec_y;  // y -> x~ -> y^ per lat_yx draw
    Tensor<T> loss;
    double cyc_value = 0, kl_value = 0;
};

// Generator (+ encoder) loss over the full cyclic graph:
//   mean over draws of [adversarial terms + lambda * cycle L1]
//   + lambda_kl * (KL_A + KL_B) + alpha (|theta_ga|^2 + |theta_gb|^2).
// Discriminator parameters enter as frozen constants.
template <typename T>
CycleForward<T> g_loss(const Objective& obj, GeneratorParams<T>& ga, GeneratorParams<T>& gb,
                       const DiscriminatorParams<T>& da, const DiscriminatorParams<T>& db,
                       const CycleBatch<T>& batch) {
    obj.validate();
    if (batch.lat_xy.empty() || batch.lat_yx.empty())
        throw ShapeError("g_loss: both directions need at least one latent");

    CycleForward<T> out;
    std::vector<Tensor<T>> parts_x, parts_y;
    double cyc_acc = 0;
    for (size_t k = 0; k < batch.lat_xy.size(); ++k) {
        auto term = detail::cycle_direction(obj, ga, gb, da, db, batch.real_x, batch.lat_xy,
                                            batch.lat_yx, k);
        parts_x.push_back(add(term.adv, scale(term.cyc, obj.lambda_cyc)));
        cyc_acc += double(term.cyc.scalar());
        out.fake_y.push_back(term.fake);
        out.rec_x.push_back(term.rec);
    }
    for (size_t l = 0; l < batch.lat_yx.size(); ++l) {
        auto term = detail::cycle_direction(obj, gb, ga, db, da, batch.real_y, batch.lat_yx,
                                            batch.lat_xy, l);
        parts_y.push_back(add(term.adv, scale(term.cyc, obj.lambda_cyc)));
        cyc_acc += double(term.cyc.scalar());
        out.fake_x.push_back(term.fake);
        out.rec_y.push_back(term.rec);
    }
    Tensor<T> loss = add(marginal_reduce(parts_x), marginal_reduce(parts_y));

    if (obj.lambda_kl > 0 && batch.has_kl()) {
        auto kl = add(kl_loss(batch.kl_mu_a, batch.kl_logvar_a),
                      kl_loss(batch.kl_mu_b, batch.kl_logvar_b));
        out.kl_value = double(kl.scalar());
        loss = add(loss, scale(kl, obj.lambda_kl));
    }
    if (obj.weight_decay > 0) {
        auto params = param_list<T>(ga);
        auto more = param_list<T>(gb);
        params.insert(params.end(), more.begin(), more.end());
        loss = add(loss, prior_penalty(params, obj.weight_decay, obj.prior));
    }
    out.cyc_value = cyc_acc / double(batch.lat_xy.size() + batch.lat_yx.size());
    out.loss = loss;
    return out;
}

// Warm-up objective on a paired batch: L1(G_A(x (+) f), y) + L1(G_B(y (+) f'), x).
template <typename T>
Tensor<T> supervised_pair_loss(const GeneratorParams<T>& ga, const GeneratorParams<T>& gb,
                               const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& lat_xy,
                               const Tensor<T>& lat_yx) {
    auto to_y = generator_forward(ga, concat_channels(x, lat_xy));
    auto to_x = generator_forward(gb, concat_channels(y, lat_yx));
    return add(l1_distance(to_y, y), l1_distance(to_x, x));
}

}  // namespace bcgn
