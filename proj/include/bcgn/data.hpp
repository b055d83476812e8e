#pragma once

// Synthetic two-domain datasets, latent banks, and dataset container I/O.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "bcgn/container.hpp"
#include "bcgn/rng.hpp"
#include "bcgn/tensor.hpp"

namespace bcgn {

struct Dataset {
    std::vector<Tensor<float>> items;  // each [C, H, W], values in [-1, 1]
    char domain = 'A';
    std::vector<int> pairing;  // optional ground-truth pair index per item

    size_t size() const { return items.size(); }
    int channels() const { return items.empty() ? 0 : items[0].dim(0); }
    int height() const { return items.empty() ? 0 : items[0].dim(1); }
    int width() const { return items.empty() ? 0 : items[0].dim(2); }

    void validate() const {
        for (const auto& t : items) {
            if (t.rank() != 3 || t.shape != items[0].shape)
                throw ShapeError("dataset: items must share one [C,H,W] shape");
            for (float v : t.data())
                if (v < -1.f || v > 1.f) throw NumericError("dataset: value outside [-1,1]");
        }
        if (!pairing.empty() && pairing.size() != items.size())
            throw ShapeError("dataset: pairing length mismatch");
    }
};

// [n, C, H, W] batch from selected items.
inline Tensor<float> stack_items(const Dataset& d, const std::vector<int>& indices) {
    if (indices.empty()) throw ShapeError("stack_items: empty selection");
    const auto& first = d.items.at(size_t(indices[0]));
    Tensor<float> out = Tensor<float>::zeros(
        {int(indices.size()), first.dim(0), first.dim(1), first.dim(2)});
    const int64_t per = first.numel();
    for (size_t i = 0; i < indices.size(); ++i) {
        const auto& item = d.items.at(size_t(indices[size_t(i)]));
        std::copy(item.data().begin(), item.data().end(),
                  out.store->begin() + int64_t(i) * per);
    }
    return out;
}

enum class LatentKind { Sfm, Noise };

// The m latent maps marginalized over within one iteration (or supplied at
// inference time).
struct LatentBank {
    LatentKind kind = LatentKind::Noise;
    std::vector<Tensor<float>> maps;  // each [n, 1, H, W]
};

inline LatentBank make_noise_bank(int m, int n, int h, int w, Rng& rng) {
    if (m < 1) throw ConfigError("latent bank: m must be >= 1");
    LatentBank bank;
    bank.kind = LatentKind::Noise;
    for (int k = 0; k < m; ++k) {
        Tensor<float> t = Tensor<float>::zeros({n, 1, h, w});
        rng.fill_normal<float>(t.data(), 0.0, 1.0);
        bank.maps.push_back(std::move(t));
    }
    return bank;
}

// ---------------------------------------------------------------------------
// Shift task: two-color 4x4-block patterns; domain B applies a fixed
// channel-rotate/negate recolor followed by a circular (1,1) translation.
// The transform is invertible on the pixel lattice and pairing is by index.
// ---------------------------------------------------------------------------

struct ShiftTask {
    Dataset a, b;
    std::array<float, 3> color0{}, color1{};
    int shift_y = 1, shift_x = 1;

    // recolor: channel c of the output takes -input[(c+1) % C]
    Tensor<float> apply_transform(const Tensor<float>& img) const {
        const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
        Tensor<float> out = Tensor<float>::zeros(img.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int sy = (y + shift_y) % h, sx = (x + shift_x) % w;
                    out.raw()[(int64_t(ch) * h + sy) * w + sx] =
                        -img.raw()[(int64_t((ch + 1) % c) * h + y) * w + x];
                }
        return out;
    }

    Tensor<float> invert_transform(const Tensor<float>& img) const {
        const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
        Tensor<float> out = Tensor<float>::zeros(img.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int sy = (y + shift_y) % h, sx = (x + shift_x) % w;
                    out.raw()[(int64_t((ch + 1) % c) * h + y) * w + x] =
                        -img.raw()[(int64_t(ch) * h + sy) * w + sx];
                }
        return out;
    }
};

inline ShiftTask gen_shift_task(uint64_t seed, int n, int h, int w) {
    if (h % 4 != 0 || w % 4 != 0 || h < 4 || w < 4)
        throw ConfigError("shift task: H and W must be positive multiples of 4");
    if (n < 1) throw ConfigError("shift task: need at least one item");
    const int c = 3;
    Rng rng(Rng::stream(seed, 0x5317));
    ShiftTask task;
    // two distinct corner colors of the [-1,1]^3 cube
    uint64_t c0 = rng.below(8), c1 = rng.below(8);
    if (c1 == c0) c1 = (c0 + 1) % 8;
    for (int ch = 0; ch < c; ++ch) {
        task.color0[size_t(ch)] = (c0 >> ch) & 1 ? 1.f : -1.f;
        task.color1[size_t(ch)] = (c1 >> ch) & 1 ? 1.f : -1.f;
    }
    task.a.domain = 'A';
    task.b.domain = 'B';
    for (int i = 0; i < n; ++i) {
        Tensor<float> img = Tensor<float>::zeros({c, h, w});
        const int bh = h / 4, bw = w / 4;
        std::vector<uint8_t> blocks(size_t(bh * bw));
        for (auto& blk : blocks) blk = uint8_t(rng.below(2));
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const bool one = blocks[size_t((y / 4) * bw + (x / 4))] != 0;
                    img.raw()[(int64_t(ch) * h + y) * w + x] =
                        one ? task.color1[size_t(ch)] : task.color0[size_t(ch)];
                }
        task.b.items.push_back(task.apply_transform(img));
        task.a.items.push_back(std::move(img));
        task.a.pairing.push_back(i);
        task.b.pairing.push_back(i);
    }
    return task;
}

// ---------------------------------------------------------------------------
// Mixture task: single blobs sampled around k mode centers, rendered as
// 1-channel Gaussian bumps. Domain A centers sit on an inner ring, domain B
// on a rotated outer ring. Scatter is truncated at 2 sigma so every sample
// stays inside the 3-sigma membership radius used by the coverage metric.
// ---------------------------------------------------------------------------

struct MixtureSpec {
    int k = 8;
    int image_size = 16;
    double sigma = 0.3;         // per-mode sample scatter (pixels)
    double render_sigma = 1.0;  // blob rendering width (pixels)
    std::vector<std::array<double, 2>> centers_a, centers_b;

    void validate() const {
        if (k < 2) throw ConfigError("mixture: need k >= 2 modes");
        if (sigma <= 0 || render_sigma <= 0) throw ConfigError("mixture: sigmas must be > 0");
        if (int(centers_a.size()) != k || int(centers_b.size()) != k)
            throw ConfigError("mixture: center count must equal k");
        for (size_t i = 0; i < centers_b.size(); ++i)
            for (size_t j = i + 1; j < centers_b.size(); ++j) {
                const double dy = centers_b[i][0] - centers_b[j][0];
                const double dx = centers_b[i][1] - centers_b[j][1];
                if (dy * dy + dx * dx < 1e-12) throw ConfigError("mixture: duplicate centers");
            }
    }

    static MixtureSpec defaults(int image = 16) {
        MixtureSpec s;
        s.image_size = image;
        const double cy = (image - 1) / 2.0, cx = (image - 1) / 2.0;
        const double ra = image * 0.20, rb = image * 0.325;
        for (int i = 0; i < s.k; ++i) {
            const double ta = 2.0 * 3.14159265358979323846 * i / s.k;
            const double tb = ta + 3.14159265358979323846 / s.k;
            s.centers_a.push_back({cy + ra * std::sin(ta), cx + ra * std::cos(ta)});
            s.centers_b.push_back({cy + rb * std::sin(tb), cx + rb * std::cos(tb)});
        }
        return s;
    }
};

struct MixtureTask {
    Dataset a, b;
    MixtureSpec spec;
};

namespace detail {

inline Tensor<float> render_blob(int image, double py, double px, double rsigma) {
    Tensor<float> img = Tensor<float>::zeros({1, image, image});
    const double inv = 1.0 / (2.0 * rsigma * rsigma);
    for (int y = 0; y < image; ++y)
        for (int x = 0; x < image; ++x) {
            const double d2 = (y - py) * (y - py) + (x - px) * (x - px);
            img.raw()[int64_t(y) * image + x] = float(2.0 * std::exp(-d2 * inv) - 1.0);
        }
    return img;
}

// normal scatter truncated at 2 sigma by resampling
inline double truncated_scatter(Rng& rng, double sigma) {
    for (int tries = 0; tries < 64; ++tries) {
        const double v = rng.normal(0.0, sigma);
        if (std::abs(v) <= 2.0 * sigma) return v;
    }
    return 0.0;
}

}  // namespace detail

inline MixtureTask gen_mixture_task(const MixtureSpec& spec, uint64_t seed, int n) {
    spec.validate();
    if (n < 1) throw ConfigError("mixture task: need at least one item");
    MixtureTask task;
    task.spec = spec;
    task.a.domain = 'A';
    task.b.domain = 'B';
    Rng rng(Rng::stream(seed, 0xA11B));
    auto sample_domain = [&](const std::vector<std::array<double, 2>>& centers, Dataset& out) {
        for (int i = 0; i < n; ++i) {
            const auto& m = centers[size_t(rng.below(uint64_t(spec.k)))];
            const double py = m[0] + detail::truncated_scatter(rng, spec.sigma);
            const double px = m[1] + detail::truncated_scatter(rng, spec.sigma);
            out.items.push_back(detail::render_blob(spec.image_size, py, px, spec.render_sigma));
        }
    };
    sample_domain(spec.centers_a, task.a);
    sample_domain(spec.centers_b, task.b);
    return task;
}

// ---------------------------------------------------------------------------
// Dataset container I/O
// ---------------------------------------------------------------------------

inline void save_dataset(const std::string& path, const Dataset& d) {
    std::vector<NamedTensor> entries;
    entries.push_back({"domain", {1}, {float(d.domain)}});
    if (!d.pairing.empty()) {
        NamedTensor p{"pairing", {uint32_t(d.pairing.size())}, {}};
        for (int idx : d.pairing) p.data.push_back(float(idx));
        entries.push_back(std::move(p));
    }
    for (size_t i = 0; i < d.items.size(); ++i) {
        const auto& t = d.items[i];
        char name[32];
        std::snprintf(name, sizeof name, "item/%06zu", i);
        NamedTensor e{name, {}, {t.data().begin(), t.data().end()}};
        for (int dim : t.shape) e.dims.push_back(uint32_t(dim));
        entries.push_back(std::move(e));
    }
    write_container(path, entries);
}

inline Dataset load_dataset(const std::string& path) {
    Dataset d;
    for (auto& e : read_container(path)) {
        if (e.name == "domain") {
            d.domain = char(e.data.at(0));
        } else if (e.name == "pairing") {
            for (float v : e.data) d.pairing.push_back(int(v));
        } else if (e.name.starts_with("item/")) {
            if (e.dims.size() != 3) throw IoError("dataset: item '" + e.name + "' is not rank 3");
            std::vector<int> shape(e.dims.begin(), e.dims.end());
            d.items.emplace_back(shape, std::vector<float>(e.data.begin(), e.data.end()));
        } else {
            throw IoError("dataset: unexpected entry '" + e.name + "'");
        }
    }
    d.validate();
    return d;
}

}  // namespace bcgn
