#pragma once

// Checkpoints reuse the dataset container with reserved names: parameter
// tensors under theta_*/..., ADAM moments under opt_m/ and opt_v/, step
// counters, loop position, and the latent RNG state. A resumed run is
// bit-equivalent to an uninterrupted one.

#include <string>
#include <vector>

#include "bcgn/container.hpp"
#include "bcgn/trainer.hpp"

namespace bcgn {

inline void save_checkpoint(const std::string& path, TrainState& state,
                            const TrainConfig& cfg) {
    std::vector<NamedTensor> entries;
    auto scalar = [&](const std::string& name, double v) {
        entries.push_back({name, {1}, {float(v)}});
    };
    scalar("net/channels", cfg.net.channels);
    scalar("net/image_size", cfg.net.image_size);
    scalar("net/base_filters", cfg.net.base_filters);
    scalar("net/res_blocks", cfg.net.res_blocks);
    scalar("step", double(state.global_iter));
    scalar("epoch", state.epoch);
    scalar("iter_in_epoch", state.iter_in_epoch);
    scalar("opt_step/g", double(state.opt_g.step));
    scalar("opt_step/da", double(state.opt_da.step));
    scalar("opt_step/db", double(state.opt_db.step));
    entries.push_back({"rng_state", {4}, encode_u64(state.latent_rng.state())});

    state.models.visit_all([&](const char* name, Tensor<float>& t) {
        NamedTensor e{name, {}, {t.data().begin(), t.data().end()}};
        for (int d : t.shape) e.dims.push_back(uint32_t(d));
        entries.push_back(std::move(e));
    });
    auto dump_opt = [&](const char* which, AdamState<float>& opt) {
        for (auto& [name, slot] : opt.slots) {
            entries.push_back(
                {std::string("opt_m/") + name, {uint32_t(slot.m.size())}, slot.m});
            entries.push_back(
                {std::string("opt_v/") + name, {uint32_t(slot.v.size())}, slot.v});
        }
        (void)which;
    };
    dump_opt("g", state.opt_g);
    dump_opt("da", state.opt_da);
    dump_opt("db", state.opt_db);
    write_container(path, entries);
}

inline TrainState load_checkpoint(const std::string& path) {
    auto entries = read_container(path);
    auto find = [&](const std::string& name) -> NamedTensor* {
        for (auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    };
    auto need_scalar = [&](const std::string& name) {
        NamedTensor* e = find(name);
        if (!e || e->data.size() != 1)
            throw IoError("checkpoint: missing entry '" + name + "'");
        return double(e->data[0]);
    };

    NetConfig net;
    net.channels = int(need_scalar("net/channels"));
    net.image_size = int(need_scalar("net/image_size"));
    net.base_filters = int(need_scalar("net/base_filters"));
    net.res_blocks = int(need_scalar("net/res_blocks"));
    net.validate();

    TrainState state;
    Rng zero(0);
    state.models = init_models<float>(net, zero);
    state.models.visit_all([&](const char* name, Tensor<float>& t) {
        NamedTensor* e = find(name);
        if (!e) throw IoError(std::string("checkpoint: missing parameter '") + name + "'");
        if (int64_t(e->data.size()) != t.numel())
            throw IoError(std::string("checkpoint: size mismatch for '") + name + "'");
        std::copy(e->data.begin(), e->data.end(), t.store->begin());
    });
    state.global_iter = int64_t(need_scalar("step"));
    state.epoch = int(need_scalar("epoch"));
    state.iter_in_epoch = int(need_scalar("iter_in_epoch"));
    state.opt_g.step = int64_t(need_scalar("opt_step/g"));
    state.opt_da.step = int64_t(need_scalar("opt_step/da"));
    state.opt_db.step = int64_t(need_scalar("opt_step/db"));
    NamedTensor* rng = find("rng_state");
    if (!rng) throw IoError("checkpoint: missing rng_state");
    state.latent_rng.set_state(decode_u64(rng->data));

    for (auto& e : entries) {
        AdamState<float>* opt = nullptr;
        std::string key;
        for (const char* prefix : {"opt_m/", "opt_v/"}) {
            if (!e.name.starts_with(prefix)) continue;
            key = e.name.substr(6);
            if (key.starts_with("theta_da/")) opt = &state.opt_da;
            else if (key.starts_with("theta_db/")) opt = &state.opt_db;
            else opt = &state.opt_g;
            auto& slot = opt->slots[key];
            auto& dst = e.name.starts_with("opt_m/") ? slot.m : slot.v;
            dst.assign(e.data.begin(), e.data.end());
        }
    }
    return state;
}

}  // namespace bcgn
