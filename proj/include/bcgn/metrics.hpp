#pragma once

// Evaluation metrics: gradient-difference loss, per-channel histogram
// intersection, RBF-kernel MMD, and mixture mode coverage. All deterministic
// given their inputs.

#include <algorithm>
#include <cmath>
#include <vector>

#include "bcgn/data.hpp"
#include "bcgn/tensor.hpp"

namespace bcgn {

namespace detail {

struct Nchw {
    int n, c, h, w;
};

inline Nchw as_nchw(const Tensor<float>& t) {
    if (t.rank() == 2) return {1, 1, t.dim(0), t.dim(1)};
    if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
    if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
    throw ShapeError("metric: expected rank 2..4, got " + shape_str(t));
}

}  // namespace detail

// Gradient difference: sum over pixels of || |da| - |db| || for horizontal
// and vertical neighbor differences, summed over channels, mean over batch.
inline double metric_gdl(const Tensor<float>& a, const Tensor<float>& b) {
    if (!a.same_shape(b)) throw ShapeError("metric_gdl: shape mismatch");
    const auto d = detail::as_nchw(a);
    const float* pa = a.raw();
    const float* pb = b.raw();
    double total = 0;
    for (int i = 0; i < d.n; ++i)
        for (int c = 0; c < d.c; ++c) {
            const int64_t base = (int64_t(i) * d.c + c) * d.h * d.w;
            for (int y = 0; y < d.h; ++y)
                for (int x = 1; x < d.w; ++x) {
                    const int64_t p = base + int64_t(y) * d.w + x;
                    total += std::abs(std::abs(double(pa[p]) - double(pa[p - 1])) -
                                      std::abs(double(pb[p]) - double(pb[p - 1])));
                }
            for (int y = 1; y < d.h; ++y)
                for (int x = 0; x < d.w; ++x) {
                    const int64_t p = base + int64_t(y) * d.w + x;
                    total += std::abs(std::abs(double(pa[p]) - double(pa[p - d.w])) -
                                      std::abs(double(pb[p]) - double(pb[p - d.w])));
                }
        }
    return total / double(d.n);
}

// Sum of bin-wise minima of normalized per-channel histograms over [-1, 1],
// averaged over channels. 1 means identical marginal distributions.
inline double metric_hist_intersection(const std::vector<Tensor<float>>& a,
                                       const std::vector<Tensor<float>>& b, int bins = 64) {
    if (bins < 2) throw ConfigError("metric_hist_intersection: bins must be >= 2");
    if (a.empty() || b.empty()) throw ShapeError("metric_hist_intersection: empty dataset");
    const int channels = detail::as_nchw(a[0]).c;
    auto histogram = [&](const std::vector<Tensor<float>>& items, int channel) {
        std::vector<double> h(size_t(bins), 0.0);
        int64_t count = 0;
        for (const auto& t : items) {
            const auto d = detail::as_nchw(t);
            const int64_t hw = int64_t(d.h) * d.w;
            for (int i = 0; i < d.n; ++i) {
                const float* p = t.raw() + (int64_t(i) * d.c + channel) * hw;
                for (int64_t q = 0; q < hw; ++q) {
                    int bin = int((double(p[q]) + 1.0) * 0.5 * bins);
                    bin = std::clamp(bin, 0, bins - 1);
                    h[size_t(bin)] += 1.0;
                    ++count;
                }
            }
        }
        for (double& v : h) v /= double(count);
        return h;
    };
    double acc = 0;
    for (int c = 0; c < channels; ++c) {
        auto ha = histogram(a, c);
        auto hb = histogram(b, c);
        double inter = 0;
        for (int i = 0; i < bins; ++i) inter += std::min(ha[size_t(i)], hb[size_t(i)]);
        acc += inter;
    }
    return acc / double(channels);
}

// Unbiased squared-MMD estimate with an RBF kernel on flattened images,
// clipped at zero. bandwidth <= 0 selects the median pairwise distance
// heuristic over the pooled samples; `biased` keeps the diagonal terms.
inline double metric_mmd_rbf(const std::vector<Tensor<float>>& a,
                             const std::vector<Tensor<float>>& b, double bandwidth = 0,
                             bool biased = false) {
    if (a.empty() || b.empty()) throw ShapeError("metric_mmd_rbf: empty sample set");
    const size_t m = a.size(), n = b.size();
    if (!biased && (m < 2 || n < 2))
        throw ShapeError("metric_mmd_rbf: unbiased estimator needs >= 2 samples per set");
    const int64_t dim = a[0].numel();
    for (const auto& t : a)
        if (t.numel() != dim) throw ShapeError("metric_mmd_rbf: inconsistent item shapes");
    for (const auto& t : b)
        if (t.numel() != dim) throw ShapeError("metric_mmd_rbf: inconsistent item shapes");

    auto d2 = [&](const Tensor<float>& u, const Tensor<float>& v) {
        double acc = 0;
        for (int64_t i = 0; i < dim; ++i) {
            const double dv = double(u.raw()[i]) - double(v.raw()[i]);
            acc += dv * dv;
        }
        return acc;
    };

    double sigma = bandwidth;
    if (sigma <= 0) {
        std::vector<double> dists;
        std::vector<const Tensor<float>*> pool;
        for (const auto& t : a) pool.push_back(&t);
        for (const auto& t : b) pool.push_back(&t);
        for (size_t i = 0; i < pool.size(); ++i)
            for (size_t j = i + 1; j < pool.size(); ++j)
                dists.push_back(std::sqrt(d2(*pool[i], *pool[j])));
        std::nth_element(dists.begin(), dists.begin() + long(dists.size() / 2), dists.end());
        sigma = dists[dists.size() / 2];
        if (sigma <= 0) sigma = 1.0;
    }
    const double inv = 1.0 / (2.0 * sigma * sigma);
    auto kern = [&](const Tensor<float>& u, const Tensor<float>& v) {
        return std::exp(-d2(u, v) * inv);
    };

    double kaa = 0, kbb = 0, kab = 0;
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < m; ++j)
            if (biased || i != j) kaa += kern(a[i], a[j]);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (biased || i != j) kbb += kern(b[i], b[j]);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) kab += kern(a[i], b[j]);

    const double ta = biased ? kaa / double(m * m) : kaa / double(m * (m - 1));
    const double tb = biased ? kbb / double(n * n) : kbb / double(n * (n - 1));
    const double est = ta + tb - 2.0 * kab / double(m * n);
    return std::max(est, 0.0);
}

struct ModeCoverage {
    int modes_hit = 0;
    double quality_ratio = 0;  // fraction of samples within 3 sigma of any mode
};

// Peak location = intensity centroid of (img + 1) over the full image; a
// mode counts as hit when at least one sample lands within 3 sigma of it.
inline ModeCoverage metric_mode_coverage(const std::vector<Tensor<float>>& generated,
                                         const MixtureSpec& spec) {
    spec.validate();
    ModeCoverage out;
    if (generated.empty()) return out;
    std::vector<bool> hit(size_t(spec.k), false);
    int within = 0;
    const double r2 = 9.0 * spec.sigma * spec.sigma;
    for (const auto& img : generated) {
        const auto d = detail::as_nchw(img);
        double wsum = 0, ysum = 0, xsum = 0;
        for (int c = 0; c < d.c; ++c)
            for (int y = 0; y < d.h; ++y)
                for (int x = 0; x < d.w; ++x) {
                    const double w =
                        double(img.raw()[(int64_t(c) * d.h + y) * d.w + x]) + 1.0;
                    wsum += w;
                    ysum += w * y;
                    xsum += w * x;
                }
        if (wsum < 1e-9) continue;  // flat image: counts as a miss
        const double py = ysum / wsum, px = xsum / wsum;
        int nearest = -1;
        double best = 1e300;
        for (int k = 0; k < spec.k; ++k) {
            const double dy = py - spec.centers_b[size_t(k)][0];
            const double dx = px - spec.centers_b[size_t(k)][1];
            const double dist2 = dy * dy + dx * dx;
            if (dist2 < best) {
                best = dist2;
                nearest = k;
            }
        }
        if (best <= r2) {
            hit[size_t(nearest)] = true;
            ++within;
        }
    }
    for (bool h : hit) out.modes_hit += h ? 1 : 0;
    out.quality_ratio = double(within) / double(generated.size());
    return out;
}

}  // namespace bcgn
