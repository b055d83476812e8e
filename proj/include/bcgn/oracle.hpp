#pragma once

// Exact finite-distribution checks for the equilibrium theory of the
// integrated cyclic objective: closed-form optimal discriminators, training
// criterion minima under both adversarial objectives, and the divergence
// decompositions that re-derive them. Everything here is plain double math,
// independent of the autodiff engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bcgn/common.hpp"
#include "bcgn/rng.hpp"

namespace bcgn::oracle {

inline constexpr double kLog2 = 0.6931471805599453094172321214581766;

// Finite probability vector.
struct DiscreteDist {
    std::vector<double> p;

    void validate() const {
        double s = 0;
        for (double v : p) {
            if (!(v >= 0)) throw NumericError("DiscreteDist: negative entry");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) throw NumericError("DiscreteDist: mass is not 1");
    }

    static DiscreteDist random(int k, Rng& rng) {
        DiscreteDist d;
        d.p.resize(size_t(k));
        double s = 0;
        for (double& v : d.p) {
            v = rng.uniform() + 1e-9;
            s += v;
        }
        for (double& v : d.p) v /= s;
        return d;
    }
};

// One domain's three sample sources: real data p, generated p~, reconstructed
// p^, plus the balance factor weighting the reconstructed fakes.
struct DomainTriple {
    DiscreteDist real, gen, rec;
    double gamma = 0;

    int support() const { return int(real.p.size()); }

    void validate() const {
        real.validate();
        gen.validate();
        rec.validate();
        if (gamma < 0) throw NumericError("DomainTriple: gamma must be >= 0");
        if (gen.p.size() != real.p.size() || rec.p.size() != real.p.size())
            throw NumericError("DomainTriple: support size mismatch");
    }

    static DomainTriple random(int k, double gamma, Rng& rng) {
        return DomainTriple{DiscreteDist::random(k, rng), DiscreteDist::random(k, rng),
                            DiscreteDist::random(k, rng), gamma};
    }
};

// D*_k = (1+g) p_k / ((1+g) p_k + p~_k + g p^_k); 0/0 -> 0 by convention.
// The same expression is optimal for both adversarial objectives (the
// least-squares statement in the source analysis drops the gamma weight on
// p^, but its own optimization argument yields the weighted form; that form
// is used here and flagged in the report notes).
inline std::vector<double> optimal_discriminator(const DomainTriple& t) {
    t.validate();
    std::vector<double> d(size_t(t.support()));
    for (int k = 0; k < t.support(); ++k) {
        const double num = (1.0 + t.gamma) * t.real.p[size_t(k)];
        const double den = num + t.gen.p[size_t(k)] + t.gamma * t.rec.p[size_t(k)];
        d[size_t(k)] = den > 0 ? num / den : 0.0;
    }
    return d;
}

inline std::vector<double> opt_d_standard(const DomainTriple& t) {
    return optimal_discriminator(t);
}

inline std::vector<double> opt_d_ls(const DomainTriple& t) { return optimal_discriminator(t); }

// V(G_A,G_B,D) under the standard objective:
//   sum_k (1+g) p_k log d_k + (p~_k + g p^_k) log(1 - d_k),
// with 0*log 0 treated as 0.
inline double v_standard(const DomainTriple& t, std::span<const double> d) {
    t.validate();
    if (int(d.size()) != t.support()) throw NumericError("v_standard: size mismatch");
    double acc = 0;
    for (int k = 0; k < t.support(); ++k) {
        const double dv = d[size_t(k)];
        if (dv < 0 || dv > 1) throw NumericError("v_standard: d outside [0,1]");
        const double a = (1.0 + t.gamma) * t.real.p[size_t(k)];
        const double b = t.gen.p[size_t(k)] + t.gamma * t.rec.p[size_t(k)];
        if (a > 0) acc += a * std::log(dv);
        if (b > 0) acc += b * std::log(1.0 - dv);
    }
    return acc;
}

// V under the least-squares objective:
//   sum_k (1+g) p_k (d_k - 1)^2 + (p~_k + g p^_k) d_k^2.
inline double v_ls(const DomainTriple& t, std::span<const double> d) {
    t.validate();
    if (int(d.size()) != t.support()) throw NumericError("v_ls: size mismatch");
    double acc = 0;
    for (int k = 0; k < t.support(); ++k) {
        const double dv = d[size_t(k)];
        const double a = (1.0 + t.gamma) * t.real.p[size_t(k)];
        const double b = t.gen.p[size_t(k)] + t.gamma * t.rec.p[size_t(k)];
        acc += a * (dv - 1.0) * (dv - 1.0) + b * dv * dv;
    }
    return acc;
}

// Training criterion C(G) = max_D V(.,D_A) + max_D V(.,D_B), standard form.
inline double c_of_g_standard(const DomainTriple& ty, const DomainTriple& tx) {
    return v_standard(ty, opt_d_standard(ty)) + v_standard(tx, opt_d_standard(tx));
}

// Least-squares criterion at the optimal discriminator, in closed form:
//   sum over both domains of sum_k (1+g) p (p~ + g p^) / ((1+g) p + p~ + g p^).
inline double c_of_g_ls(const DomainTriple& ty, const DomainTriple& tx) {
    auto side = [](const DomainTriple& t) {
        t.validate();
        double acc = 0;
        for (int k = 0; k < t.support(); ++k) {
            const double a = (1.0 + t.gamma) * t.real.p[size_t(k)];
            const double b = t.gen.p[size_t(k)] + t.gamma * t.rec.p[size_t(k)];
            const double den = a + b;
            if (den > 0) acc += a * b / den;
        }
        return acc;
    };
    return side(ty) + side(tx);
}

// Generalized (unnormalized) KL over nonnegative vectors, 0*log 0 = 0.
// Requires v_k > 0 wherever u_k > 0.
inline double kl(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw NumericError("kl: size mismatch");
    double acc = 0;
    for (size_t k = 0; k < u.size(); ++k) {
        if (u[k] < 0 || v[k] < 0) throw NumericError("kl: negative entry");
        if (u[k] == 0) continue;
        if (v[k] == 0) throw NumericError("kl: absolute continuity violated");
        acc += u[k] * std::log(u[k] / v[k]);
    }
    return acc;
}

// Generalized JSD over equal-mass nonnegative vectors (mass need not be 1;
// the decomposition applies it to mass-(1+gamma) objects).
inline double jsd(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw NumericError("jsd: size mismatch");
    double mu = 0, mv = 0;
    for (size_t k = 0; k < u.size(); ++k) {
        mu += u[k];
        mv += v[k];
    }
    if (std::abs(mu - mv) > 1e-9) throw NumericError("jsd: mass mismatch");
    std::vector<double> mid(u.size());
    for (size_t k = 0; k < u.size(); ++k) mid[k] = 0.5 * (u[k] + v[k]);
    return 0.5 * kl(u, mid) + 0.5 * kl(v, mid);
}

// f-divergence with generator f(x) = 1/(x+1) - 1/2:
//   sum_k (1/(1 + u_k/v_k) - 1/2) u_k,  term -> -u_k/2 as v_k -> 0.
inline double f_div(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw NumericError("f_div: size mismatch");
    double mu = 0, mv = 0;
    for (size_t k = 0; k < u.size(); ++k) {
        mu += u[k];
        mv += v[k];
    }
    if (std::abs(mu - mv) > 1e-9) throw NumericError("f_div: mass mismatch");
    double acc = 0;
    for (size_t k = 0; k < u.size(); ++k) {
        if (u[k] == 0) continue;
        const double ratio_term = v[k] == 0 ? 0.0 : v[k] / (u[k] + v[k]);
        acc += (ratio_term - 0.5) * u[k];
    }
    return acc;
}

// Combined generated-plus-reconstructed mass vector p~ + gamma p^ for one
// domain; the object both decompositions compare against (1+gamma) p.
inline std::vector<double> mixed_fake_mass(const DomainTriple& t) {
    std::vector<double> m(size_t(t.support()));
    for (int k = 0; k < t.support(); ++k)
        m[size_t(k)] = t.gen.p[size_t(k)] + t.gamma * t.rec.p[size_t(k)];
    return m;
}

inline std::vector<double> scaled_real_mass(const DomainTriple& t) {
    std::vector<double> m(size_t(t.support()));
    for (int k = 0; k < t.support(); ++k) m[size_t(k)] = (1.0 + t.gamma) * t.real.p[size_t(k)];
    return m;
}

// Triple pair achieving the global minimum: p~ = p^ = p on both sides.
inline std::pair<DomainTriple, DomainTriple> equality_witness(double gamma, int k, Rng& rng) {
    if (k < 1) throw NumericError("equality_witness: support must be >= 1");
    DiscreteDist py = DiscreteDist::random(k, rng);
    DiscreteDist px = DiscreteDist::random(k, rng);
    return {DomainTriple{py, py, py, gamma}, DomainTriple{px, px, px, gamma}};
}

inline double standard_minimum(double gamma) { return -4.0 * (1.0 + gamma) * kLog2; }
inline double ls_minimum(double gamma) { return 1.0 + gamma; }

// ---------------------------------------------------------------------------
// Check suite (consumed by the CLI `oracle` command and the acceptance tests)
// ---------------------------------------------------------------------------

struct OracleCheck {
    std::string name;
    bool pass = false;
    double observed = 0;  // observed extremum / deviation
    double bound = 0;     // theoretical bound / tolerance it is compared with
    std::string note;
};

struct OracleOptions {
    std::vector<double> gammas{0.0, 0.25, 0.5, 1.0};
    int trials = 10000;
    int support = 8;
    uint64_t seed = 1;
    bool inject_sign_bug = false;  // test hook: flips a sign to prove failures propagate
};

inline std::vector<OracleCheck> run_oracle_suite(const OracleOptions& opt) {
    std::vector<OracleCheck> checks;
    const double bug = opt.inject_sign_bug ? -1.0 : 1.0;

    for (double g : opt.gammas) {
        Rng rng(Rng::stream(opt.seed, uint64_t(g * 1000) + 17));
        const std::string gs = " (gamma=" + std::to_string(g).substr(0, 4) + ")";

        // global extremum bounds over random triples. The standard criterion
        // is bounded below by -4(1+g)log2; the least-squares criterion is
        // bounded ABOVE by (1+g) (pointwise AB/(A+B) <= (A+B)/4), even though
        // the source analysis calls the balanced point a minimum.
        double min_std = 1e300, max_ls = -1e300;
        for (int t = 0; t < opt.trials; ++t) {
            auto ty = DomainTriple::random(opt.support, g, rng);
            auto tx = DomainTriple::random(opt.support, g, rng);
            min_std = std::min(min_std, c_of_g_standard(ty, tx));
            max_ls = std::max(max_ls, c_of_g_ls(ty, tx));
        }
        checks.push_back({"standard objective: criterion lower bound" + gs,
                          min_std >= bug * standard_minimum(g) - 1e-9, min_std,
                          standard_minimum(g), ""});
        checks.push_back(
            {"least-squares objective: criterion upper bound" + gs,
             max_ls <= bug * ls_minimum(g) + 1e-9, max_ls, ls_minimum(g),
             "direction corrected: the balanced point maximizes this quantity; the claimed"
             " lower-bound direction is refuted by e.g. p=[.9,.1], gen=[.1,.9] at gamma=0"});

        // equality witness reaches the minimum exactly
        auto [wy, wx] = equality_witness(g, opt.support, rng);
        const double wstd = c_of_g_standard(wy, wx);
        const double wls = c_of_g_ls(wy, wx);
        checks.push_back({"standard objective: equilibrium witness" + gs,
                          std::abs(wstd - standard_minimum(g)) < 1e-12, wstd,
                          standard_minimum(g), ""});
        checks.push_back({"least-squares objective: equilibrium witness" + gs,
                          std::abs(wls - ls_minimum(g)) < 1e-12, wls, ls_minimum(g), ""});

        // decomposition identities re-derive the criterion
        double worst_jsd = 0, worst_fdiv = 0;
        for (int t = 0; t < std::min(opt.trials, 1000); ++t) {
            auto ty = DomainTriple::random(opt.support, g, rng);
            auto tx = DomainTriple::random(opt.support, g, rng);
            const double via_jsd = standard_minimum(g) +
                                   2.0 * jsd(scaled_real_mass(ty), mixed_fake_mass(ty)) +
                                   2.0 * jsd(scaled_real_mass(tx), mixed_fake_mass(tx));
            worst_jsd = std::max(worst_jsd, std::abs(via_jsd - c_of_g_standard(ty, tx)));
            const double via_f = ls_minimum(g) +
                                 f_div(scaled_real_mass(ty), mixed_fake_mass(ty)) +
                                 f_div(scaled_real_mass(tx), mixed_fake_mass(tx));
            worst_fdiv = std::max(worst_fdiv, std::abs(via_f - c_of_g_ls(ty, tx)));
        }
        checks.push_back({"JSD decomposition identity" + gs, worst_jsd < 1e-9, worst_jsd, 1e-9,
                          ""});
        checks.push_back(
            {"f-divergence decomposition identity" + gs, worst_fdiv < 1e-9, worst_fdiv, 1e-9,
             "uses the gamma-weighted reconstructed mass; the unweighted variant printed in the"
             " source analysis does not reproduce the criterion numerically"});

        // closed-form discriminator vs brute-force grid arg-opt
        const int grid_n = 2000;
        auto grid_value = [&](int i) { return 0.0005 + (0.9995 - 0.0005) * double(i) / (grid_n - 1); };
        double worst_gap_std = 0, worst_gap_ls = 0;
        for (int t = 0; t < 200; ++t) {
            const double a = rng.uniform(0.05, 0.95);
            const double b = rng.uniform(0.05, 0.95);
            const double c = rng.uniform(0.05, 0.95);
            const double closed = (1 + g) * a / ((1 + g) * a + b + g * c);
            double best_std = -1e300, arg_std = 0, best_ls = 1e300, arg_ls = 0;
            for (int i = 0; i < grid_n; ++i) {
                const double d = grid_value(i);
                const double vs = a * (1 + g) * std::log(d) + (b + g * c) * std::log(1 - d);
                const double vl = a * (1 + g) * (d - 1) * (d - 1) + (b + g * c) * d * d;
                if (vs > best_std) { best_std = vs; arg_std = d; }
                if (vl < best_ls) { best_ls = vl; arg_ls = d; }
            }
            worst_gap_std = std::max(worst_gap_std, std::abs(bug * closed - arg_std));
            worst_gap_ls = std::max(worst_gap_ls, std::abs(bug * closed - arg_ls));
        }
        const double grid_step = (0.9995 - 0.0005) / (grid_n - 1);
        checks.push_back({"standard objective: optimal discriminator vs grid" + gs,
                          worst_gap_std <= grid_step, worst_gap_std, grid_step, ""});
        checks.push_back(
            {"least-squares objective: optimal discriminator vs grid" + gs,
             worst_gap_ls <= grid_step, worst_gap_ls, grid_step,
             "optimum matches the gamma-weighted denominator form derived in the optimization"
             " argument, not the unweighted one in the statement"});
    }
    return checks;
}

}  // namespace bcgn::oracle
