#pragma once

// Downscaled cycle-translation networks: residual generators, patch
// discriminators, and the VAE-like encoders that produce the statistic
// feature map (SFM) latent channel.

#include <string>
#include <vector>

#include "bcgn/rng.hpp"
#include "bcgn/tensor.hpp"

namespace bcgn {

struct NetConfig {
    int channels = 3;      // C: image channels
    int image_size = 16;   // H = W, must be divisible by 4
    int base_filters = 16; // F
    int res_blocks = 2;    // residual blocks at the bottleneck (paper-scale uses 6)

    void validate() const {
        if (channels < 1) throw ConfigError("net: channels must be >= 1");
        if (image_size < 4 || image_size % 4 != 0)
            throw ConfigError("net: image_size must be a positive multiple of 4");
        if (base_filters < 1) throw ConfigError("net: base_filters must be >= 1");
        if (res_blocks < 0 || res_blocks > 6)
            throw ConfigError("net: res_blocks must be in [0, 6]");
    }
};

template <typename T>
struct ConvParam {
    Tensor<T> w, b;
};

// conv-in, two stride-2 downsamples, res blocks, two stride-2 transposed
// upsamples, tanh head. Output shape equals the C-channel input shape.
template <typename T>
struct GeneratorParams {
    struct ResBlock {
        ConvParam<T> c1, c2;
    };
    ConvParam<T> conv_in, down1, down2, up1, up2, conv_out;
    std::vector<ResBlock> blocks;

    template <class Fn>
    void visit(Fn&& fn) {
        fn("conv_in.w", conv_in.w); fn("conv_in.b", conv_in.b);
        fn("down1.w", down1.w);     fn("down1.b", down1.b);
        fn("down2.w", down2.w);     fn("down2.b", down2.b);
        for (size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = "res" + std::to_string(i) + ".";
            fn((p + "c1.w").c_str(), blocks[i].c1.w); fn((p + "c1.b").c_str(), blocks[i].c1.b);
            fn((p + "c2.w").c_str(), blocks[i].c2.w); fn((p + "c2.b").c_str(), blocks[i].c2.b);
        }
        fn("up1.w", up1.w);         fn("up1.b", up1.b);
        fn("up2.w", up2.w);         fn("up2.b", up2.b);
        fn("conv_out.w", conv_out.w); fn("conv_out.b", conv_out.b);
    }
};

// Three stride-2 convs with leaky-relu followed by a 1x1 conv to a 1-channel
// patch map. Sigmoid is applied by the forward only under the standard
// adversarial objective; the least-squares head stays linear.
template <typename T>
struct DiscriminatorParams {
    ConvParam<T> c1, c2, c3, head;

    template <class Fn>
    void visit(Fn&& fn) {
        fn("c1.w", c1.w); fn("c1.b", c1.b);
        fn("c2.w", c2.w); fn("c2.b", c2.b);
        fn("c3.w", c3.w); fn("c3.b", c3.b);
        fn("head.w", head.w); fn("head.b", head.b);
    }
};

// Down-sample stack Q, bottleneck mu / logvar maps at (H/4, W/4, 2F), and
// up-sample stack P producing a 1xHxW statistic feature map.
template <typename T>
struct EncoderParams {
    ConvParam<T> q1, q2, mu, logvar, p1, p2;

    template <class Fn>
    void visit(Fn&& fn) {
        fn("q1.w", q1.w); fn("q1.b", q1.b);
        fn("q2.w", q2.w); fn("q2.b", q2.b);
        fn("mu.w", mu.w); fn("mu.b", mu.b);
        fn("logvar.w", logvar.w); fn("logvar.b", logvar.b);
        fn("p1.w", p1.w); fn("p1.b", p1.b);
        fn("p2.w", p2.w); fn("p2.b", p2.b);
    }
};

template <typename T>
struct ModelParams {
    NetConfig cfg;
    GeneratorParams<T> ga, gb;      // ga: X->Y, gb: Y->X
    DiscriminatorParams<T> da, db;  // da judges domain Y, db judges domain X
    EncoderParams<T> ea, eb;        // ea encodes X images, eb encodes Y images

    template <class Fn>
    void visit_all(Fn&& fn) {
        auto scoped = [&fn](const char* prefix, auto& group) {
            group.visit([&](const char* name, Tensor<T>& t) {
                fn((std::string(prefix) + name).c_str(), t);
            });
        };
        scoped("theta_ga/", ga);
        scoped("theta_gb/", gb);
        scoped("theta_da/", da);
        scoped("theta_db/", db);
        scoped("theta_ea/", ea);
        scoped("theta_eb/", eb);
    }
};

// ---------------------------------------------------------------------------
// Initialization: weights ~ N(0, 0.02^2), biases zero, in visit order.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
ConvParam<T> init_conv(int out_ch, int in_ch, int k, Rng& rng) {
    ConvParam<T> p;
    p.w = Tensor<T>::zeros({out_ch, in_ch, k, k});
    rng.fill_normal<T>(p.w.data(), 0.0, 0.02);
    p.b = Tensor<T>::zeros({out_ch});
    return p;
}

}  // namespace detail

template <typename T>
GeneratorParams<T> init_generator(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    const int f = cfg.base_filters;
    GeneratorParams<T> g;
    g.conv_in = detail::init_conv<T>(f, cfg.channels + 1, 3, rng);
    g.down1 = detail::init_conv<T>(2 * f, f, 4, rng);
    g.down2 = detail::init_conv<T>(4 * f, 2 * f, 4, rng);
    g.blocks.resize(size_t(cfg.res_blocks));
    for (auto& blk : g.blocks) {
        blk.c1 = detail::init_conv<T>(4 * f, 4 * f, 3, rng);
        blk.c2 = detail::init_conv<T>(4 * f, 4 * f, 3, rng);
    }
    // transposed kernels are [in_ch, out_ch, k, k]
    g.up1.w = Tensor<T>::zeros({4 * f, 2 * f, 4, 4});
    rng.fill_normal<T>(g.up1.w.data(), 0.0, 0.02);
    g.up1.b = Tensor<T>::zeros({2 * f});
    g.up2.w = Tensor<T>::zeros({2 * f, f, 4, 4});
    rng.fill_normal<T>(g.up2.w.data(), 0.0, 0.02);
    g.up2.b = Tensor<T>::zeros({f});
    g.conv_out = detail::init_conv<T>(cfg.channels, f, 3, rng);
    return g;
}

template <typename T>
DiscriminatorParams<T> init_discriminator(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    const int f = cfg.base_filters;
    DiscriminatorParams<T> d;
    d.c1 = detail::init_conv<T>(f, cfg.channels, 4, rng);
    d.c2 = detail::init_conv<T>(2 * f, f, 4, rng);
    d.c3 = detail::init_conv<T>(4 * f, 2 * f, 4, rng);
    d.head = detail::init_conv<T>(1, 4 * f, 1, rng);
    return d;
}

template <typename T>
EncoderParams<T> init_encoder(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    const int f = cfg.base_filters;
    EncoderParams<T> e;
    e.q1 = detail::init_conv<T>(f, cfg.channels, 4, rng);
    e.q2 = detail::init_conv<T>(2 * f, f, 4, rng);
    e.mu = detail::init_conv<T>(2 * f, 2 * f, 3, rng);
    e.logvar = detail::init_conv<T>(2 * f, 2 * f, 3, rng);
    e.p1.w = Tensor<T>::zeros({2 * f, f, 4, 4});
    rng.fill_normal<T>(e.p1.w.data(), 0.0, 0.02);
    e.p1.b = Tensor<T>::zeros({f});
    e.p2.w = Tensor<T>::zeros({f, 1, 4, 4});
    rng.fill_normal<T>(e.p2.w.data(), 0.0, 0.02);
    e.p2.b = Tensor<T>::zeros({1});
    return e;
}

template <typename T>
ModelParams<T> init_models(const NetConfig& cfg, Rng& rng) {
    ModelParams<T> m;
    m.cfg = cfg;
    m.ga = init_generator<T>(cfg, rng);
    m.gb = init_generator<T>(cfg, rng);
    m.da = init_discriminator<T>(cfg, rng);
    m.db = init_discriminator<T>(cfg, rng);
    m.ea = init_encoder<T>(cfg, rng);
    m.eb = init_encoder<T>(cfg, rng);
    return m;
}

// Copy of a parameter group with every tensor registered on the tape.
template <typename T, class Params>
Params watch_params(Tape<T>& tape, const Params& params) {
    Params out = params;
    out.visit([&](const char*, Tensor<T>& t) { t = tape.watch(t); });
    return out;
}

// ---------------------------------------------------------------------------
// Forwards
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> conv_in_relu(const Tensor<T>& x, const ConvParam<T>& p, int stride, int pad) {
    return relu(instance_norm(bias_add(conv2d(x, p.w, stride, pad), p.b)));
}

template <typename T>
Tensor<T> deconv_in_relu(const Tensor<T>& x, const ConvParam<T>& p, int stride, int pad) {
    return relu(instance_norm(bias_add(conv_transpose2d(x, p.w, stride, pad), p.b)));
}

}  // namespace detail

// x_lat: image with the latent concatenated, [N, C+1, H, W] -> [N, C, H, W].
template <typename T>
Tensor<T> generator_forward(const GeneratorParams<T>& g, const Tensor<T>& x_lat) {
    if (x_lat.rank() != 4 || x_lat.dim(1) != g.conv_in.w.dim(1))
        throw ShapeError("generator_forward: expected " + std::to_string(g.conv_in.w.dim(1)) +
                         " input channels, got " + shape_str(x_lat));
    auto h = detail::conv_in_relu(x_lat, g.conv_in, 1, 1);
    h = detail::conv_in_relu(h, g.down1, 2, 1);
    h = detail::conv_in_relu(h, g.down2, 2, 1);
    for (const auto& blk : g.blocks) {
        auto r = detail::conv_in_relu(h, blk.c1, 1, 1);
        r = instance_norm(bias_add(conv2d(r, blk.c2.w, 1, 1), blk.c2.b));
        h = add(h, r);
    }
    h = detail::deconv_in_relu(h, g.up1, 2, 1);
    h = detail::deconv_in_relu(h, g.up2, 2, 1);
    return tanh(bias_add(conv2d(h, g.conv_out.w, 1, 1), g.conv_out.b));
}

// Patch map [N, 1, h, w]; in (0,1) when `sigmoid_head` (standard objective),
// unbounded otherwise (least-squares objective).
template <typename T>
Tensor<T> discriminator_forward(const DiscriminatorParams<T>& d, const Tensor<T>& img,
                                bool sigmoid_head) {
    if (img.rank() != 4 || img.dim(1) != d.c1.w.dim(1))
        throw ShapeError("discriminator_forward: expected " + std::to_string(d.c1.w.dim(1)) +
                         " input channels, got " + shape_str(img));
    auto h = leaky_relu(bias_add(conv2d(img, d.c1.w, 2, 1), d.c1.b));
    h = leaky_relu(bias_add(conv2d(h, d.c2.w, 2, 1), d.c2.b));
    h = leaky_relu(bias_add(conv2d(h, d.c3.w, 2, 1), d.c3.b));
    auto out = bias_add(conv2d(h, d.head.w, 1, 0), d.head.b);
    return sigmoid_head ? sigmoid(out) : out;
}

template <typename T>
struct SfmDraws {
    std::vector<Tensor<T>> sfms;  // each [N, 1, H, W]
    Tensor<T> mu, logvar;         // bottleneck moments, [N, 2F, H/4, W/4]
};

// Reparameterized draws: sfm_k = P(mu + exp(logvar/2) * eps_k). The down
// stack and moments are computed once; each eps produces one feature map.
template <typename T>
SfmDraws<T> encoder_sfm_from_eps(const EncoderParams<T>& e, const Tensor<T>& img,
                                 const std::vector<Tensor<T>>& eps_draws) {
    if (img.rank() != 4 || img.dim(1) != e.q1.w.dim(1))
        throw ShapeError("encoder_forward: expected " + std::to_string(e.q1.w.dim(1)) +
                         " input channels, got " + shape_str(img));
    auto h = detail::conv_in_relu(img, e.q1, 2, 1);
    h = detail::conv_in_relu(h, e.q2, 2, 1);
    SfmDraws<T> out;
    out.mu = bias_add(conv2d(h, e.mu.w, 1, 1), e.mu.b);
    out.logvar = bias_add(conv2d(h, e.logvar.w, 1, 1), e.logvar.b);
    auto sigma = exp(scale(out.logvar, 0.5));
    for (const Tensor<T>& eps : eps_draws) {
        if (!eps.same_shape(out.mu))
            throw ShapeError("encoder_forward: eps shape must match the bottleneck");
        auto z = add(out.mu, mul(sigma, eps));
        auto up = detail::deconv_in_relu(z, e.p1, 2, 1);
        out.sfms.push_back(tanh(bias_add(conv_transpose2d(up, e.p2.w, 2, 1), e.p2.b)));
    }
    return out;
}

// Bottleneck eps tensors for m draws; null rng gives deterministic eps = 0.
template <typename T>
std::vector<Tensor<T>> draw_encoder_eps(const NetConfig& cfg, int batch, int m, Rng* rng) {
    std::vector<Tensor<T>> eps;
    const int s = cfg.image_size / 4;
    for (int k = 0; k < m; ++k) {
        Tensor<T> e = Tensor<T>::zeros({batch, 2 * cfg.base_filters, s, s});
        if (rng) rng->fill_normal<T>(e.data(), 0.0, 1.0);
        eps.push_back(std::move(e));
    }
    return eps;
}

template <typename T>
struct EncoderOut {
    Tensor<T> sfm, mu, logvar;
};

template <typename T>
EncoderOut<T> encoder_forward(const EncoderParams<T>& e, const NetConfig& cfg,
                              const Tensor<T>& img, Rng* rng) {
    auto eps = draw_encoder_eps<T>(cfg, img.dim(0), 1, rng);
    auto draws = encoder_sfm_from_eps(e, img, eps);
    return {draws.sfms[0], draws.mu, draws.logvar};
}

// Mean over the batch of 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1).
template <typename T>
Tensor<T> kl_loss(const Tensor<T>& mu, const Tensor<T>& logvar) {
    if (!mu.same_shape(logvar)) throw ShapeError("kl_loss: shape mismatch");
    const int batch = mu.rank() >= 2 ? mu.dim(0) : 1;
    auto terms = sub(add(square(mu), exp(logvar)), add_const(logvar, 1.0));
    return scale(sum(terms), 0.5 / double(batch));
}

}  // namespace bcgn
