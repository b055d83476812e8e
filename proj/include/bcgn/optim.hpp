#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bcgn/tensor.hpp"

namespace bcgn {

enum class LrDecay { Linear, Cosine };

struct LrSchedule {
    double lr = 2e-4;
    int epochs_total = 100;
    int epochs_constant = 50;  // constant lr for this many epochs, then decay to zero
    LrDecay decay = LrDecay::Linear;
};

inline double lr_at(int epoch, const LrSchedule& s) {
    if (s.lr <= 0) throw ConfigError("lr_at: lr must be > 0");
    if (s.epochs_constant > s.epochs_total || s.epochs_total < 1)
        throw ConfigError("lr_at: bad epoch schedule");
    if (epoch < 0 || epoch > s.epochs_total) throw ConfigError("lr_at: epoch out of range");
    if (epoch < s.epochs_constant || s.epochs_constant == s.epochs_total) return s.lr;
    const double t =
        double(epoch - s.epochs_constant) / double(s.epochs_total - s.epochs_constant);
    if (s.decay == LrDecay::Linear) return s.lr * (1.0 - t);
    return s.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// ADAM with bias correction. One state per optimizer group; `step` counts
// optimizer steps, shared by every tensor in the group.
template <typename T>
struct AdamState {
    double beta1 = 0.5, beta2 = 0.999, eps = 1e-8;
    int64_t step = 0;
    struct Slot {
        std::vector<T> m, v;
    };
    std::map<std::string, Slot> slots;
};

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

template <typename T, class Params>
NamedParams<T> named_params(const std::string& prefix, Params& group) {
    NamedParams<T> out;
    group.visit([&](const char* name, Tensor<T>& t) { out.emplace_back(prefix + name, &t); });
    return out;
}

template <typename T>
using GradMap = std::map<std::string, std::vector<T>>;

// In-place ADAM update of a named parameter group. Missing gradients are
// treated as zero (the parameter is left untouched).
template <typename T>
void adam_step(NamedParams<T>& params, const GradMap<T>& grads, AdamState<T>& state, double lr) {
    if (lr < 0) throw ConfigError("adam_step: negative lr");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (auto& [name, param] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const std::vector<T>& g = git->second;
        if (int64_t(g.size()) != param->numel())
            throw ShapeError("adam_step: gradient shape mismatch for " + name);
        auto& slot = state.slots[name];
        if (slot.m.empty()) {
            slot.m.assign(g.size(), T(0));
            slot.v.assign(g.size(), T(0));
        }
        T* p = param->raw();
        for (size_t i = 0; i < g.size(); ++i) {
            slot.m[i] = T(state.beta1 * double(slot.m[i]) + (1.0 - state.beta1) * double(g[i]));
            slot.v[i] = T(state.beta2 * double(slot.v[i]) +
                          (1.0 - state.beta2) * double(g[i]) * double(g[i]));
            const double mhat = double(slot.m[i]) / bc1;
            const double vhat = double(slot.v[i]) / bc2;
            p[i] = T(double(p[i]) - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

// Gradients of a watched parameter group, keyed by prefixed name.
template <typename T, class Params>
void collect_grads(Tape<T>& tape, const std::string& prefix, Params& watched, GradMap<T>& out) {
    watched.visit([&](const char* name, Tensor<T>& t) {
        auto g = tape.grad_span(t);
        auto& dst = out[prefix + name];
        if (dst.empty()) dst.assign(size_t(t.numel()), T(0));
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
}

// out += scale * grads(watched); used by the fixed-order reduction of the
// parallel latent path.
template <typename T, class Params>
void accumulate_grads(Tape<T>& tape, const std::string& prefix, Params& watched, double scale_by,
                      GradMap<T>& out) {
    watched.visit([&](const char* name, Tensor<T>& t) {
        auto g = tape.grad_span(t);
        auto& dst = out[prefix + name];
        if (dst.empty()) dst.assign(size_t(t.numel()), T(0));
        for (size_t i = 0; i < g.size(); ++i) dst[i] += T(scale_by * double(g[i]));
    });
}

}  // namespace bcgn
