#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "bcgn/data.hpp"
#include "bcgn/metrics.hpp"

using namespace bcgn;
using Catch::Matchers::WithinAbs;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("shift task construction") {
    auto task = gen_shift_task(11, 20, 16, 16);
    REQUIRE(task.a.items.size() == 20);
    REQUIRE(task.b.items.size() == 20);
    task.a.validate();
    task.b.validate();

    // pixel values are exactly +-1
    for (float v : task.a.items[3].data()) REQUIRE(std::abs(v) == 1.f);
    for (float v : task.b.items[3].data()) REQUIRE(std::abs(v) == 1.f);

    // the known transform reproduces the paired item bit-exactly
    for (int i : {0, 7, 19}) {
        auto mapped = task.apply_transform(task.a.items[size_t(i)]);
        REQUIRE(std::equal(mapped.data().begin(), mapped.data().end(),
                           task.b.items[size_t(i)].data().begin()));
    }

    // forward-then-inverse is the identity on the pixel lattice
    auto round = task.invert_transform(task.apply_transform(task.a.items[0]));
    REQUIRE(std::equal(round.data().begin(), round.data().end(),
                       task.a.items[0].data().begin()));

    REQUIRE_THROWS_AS(gen_shift_task(1, 10, 15, 16), ConfigError);
}

TEST_CASE("mixture task construction") {
    auto spec = MixtureSpec::defaults();
    REQUIRE(spec.k == 8);
    spec.validate();

    auto task = gen_mixture_task(spec, 5, 64);
    REQUIRE(task.a.items.size() == 64);
    task.b.validate();

    // every domain-B training item registers on its own mode within 3 sigma
    auto cov = metric_mode_coverage(task.b.items, spec);
    REQUIRE(cov.modes_hit == spec.k);
    REQUIRE(cov.quality_ratio >= 0.99);

    // disjoint seeds give disjoint samples
    auto other = gen_mixture_task(spec, 6, 64);
    std::set<std::vector<float>> seen;
    for (const auto& t : task.b.items)
        seen.insert(std::vector<float>(t.data().begin(), t.data().end()));
    for (const auto& t : other.b.items)
        REQUIRE(!seen.count(std::vector<float>(t.data().begin(), t.data().end())));
}

TEST_CASE("mode coverage degenerate cases") {
    auto spec = MixtureSpec::defaults();

    // identical outputs hit at most one mode
    auto blob = detail::render_blob(spec.image_size, spec.centers_b[0][0],
                                    spec.centers_b[0][1], spec.render_sigma);
    std::vector<Tensor<float>> same(32, blob);
    auto cov = metric_mode_coverage(same, spec);
    REQUIRE(cov.modes_hit <= 1);

    // uniform noise images land nowhere near the ring
    Rng rng(3);
    std::vector<Tensor<float>> noise;
    for (int i = 0; i < 256; ++i) {
        Tensor<float> t = Tensor<float>::zeros({1, spec.image_size, spec.image_size});
        rng.fill_uniform<float>(t.data(), -1, 1);
        noise.push_back(std::move(t));
    }
    REQUIRE(metric_mode_coverage(noise, spec).quality_ratio < 0.1);
}

TEST_CASE("gdl examples") {
    Rng rng(4);
    Tensor<float> x = Tensor<float>::zeros({2, 3, 6, 6});
    rng.fill_uniform<float>(x.data(), -1, 1);
    REQUIRE(metric_gdl(x, x) == 0.0);

    Tensor<float> a({2, 2}, {0, 1, 0, 1});
    Tensor<float> b({2, 2}, {0, 0, 0, 0});
    REQUIRE_THAT(metric_gdl(a, b), WithinAbs(2.0, 1e-12));

    Tensor<float> y = Tensor<float>::zeros({2, 3, 6, 6});
    rng.fill_uniform<float>(y.data(), -1, 1);
    REQUIRE_THAT(metric_gdl(x, y), WithinAbs(metric_gdl(y, x), 1e-12));
}

TEST_CASE("histogram intersection examples") {
    auto task = gen_shift_task(7, 16, 8, 8);
    REQUIRE_THAT(metric_hist_intersection(task.a.items, task.a.items), WithinAbs(1.0, 1e-12));

    // disjoint supports
    std::vector<Tensor<float>> lo{Tensor<float>::full({1, 4, 4}, -0.9f)};
    std::vector<Tensor<float>> hi{Tensor<float>::full({1, 4, 4}, 0.9f)};
    REQUIRE(metric_hist_intersection(lo, hi) == 0.0);

    // h_a = [.5,.5], h_b = [.25,.75] with two bins -> 0.75
    std::vector<Tensor<float>> ha{Tensor<float>({1, 1, 4}, {-0.5f, -0.5f, 0.5f, 0.5f})};
    std::vector<Tensor<float>> hb{Tensor<float>({1, 1, 4}, {-0.5f, 0.5f, 0.5f, 0.5f})};
    REQUIRE_THAT(metric_hist_intersection(ha, hb, 2), WithinAbs(0.75, 1e-12));

    REQUIRE_THROWS_AS(metric_hist_intersection(ha, hb, 1), ConfigError);
}

TEST_CASE("mmd examples") {
    // identical sets: biased estimator exactly zero, unbiased clipped to ~0
    auto task = gen_shift_task(9, 8, 8, 8);
    REQUIRE(metric_mmd_rbf(task.a.items, task.a.items, 1.0, /*biased=*/true) == 0.0);
    REQUIRE(metric_mmd_rbf(task.a.items, task.a.items, 1.0) < 1e-6);

    // two far point masses match the closed form 2(1 - exp(-d^2 / 2 sigma^2))
    Tensor<float> u = Tensor<float>::full({1, 2, 2}, 1.f);
    Tensor<float> v = Tensor<float>::full({1, 2, 2}, -1.f);
    std::vector<Tensor<float>> us(4, u), vs(4, v);
    const double d2 = 4.0 * 4.0;  // four coords, squared diff 4 each
    const double sigma = 2.0;
    const double expect = 2.0 * (1.0 - std::exp(-d2 / (2 * sigma * sigma)));
    REQUIRE_THAT(metric_mmd_rbf(us, vs, sigma), WithinAbs(expect, 1e-9));

    // symmetric in its arguments
    auto t2 = gen_shift_task(10, 8, 8, 8);
    REQUIRE_THAT(metric_mmd_rbf(task.a.items, t2.b.items, 1.5),
                 WithinAbs(metric_mmd_rbf(t2.b.items, task.a.items, 1.5), 1e-12));

    // median-heuristic default bandwidth is deterministic and >= 0
    REQUIRE(metric_mmd_rbf(task.a.items, t2.b.items) >= 0.0);
}

TEST_CASE("dataset io round trip") {
    auto task = gen_shift_task(13, 6, 8, 8);
    const std::string path = temp_path("bcgn_ds_test.bcgn");
    save_dataset(path, task.a);
    auto loaded = load_dataset(path);
    REQUIRE(loaded.items.size() == task.a.items.size());
    REQUIRE(loaded.domain == 'A');
    REQUIRE(loaded.pairing == task.a.pairing);
    for (size_t i = 0; i < loaded.items.size(); ++i)
        REQUIRE(std::equal(loaded.items[i].data().begin(), loaded.items[i].data().end(),
                           task.a.items[i].data().begin()));

    // byte-identical rewrite
    save_dataset(path + ".2", loaded);
    std::ifstream f1(path, std::ios::binary), f2(path + ".2", std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);

    // empty dataset round-trips
    Dataset empty;
    empty.domain = 'B';
    save_dataset(temp_path("bcgn_empty.bcgn"), empty);
    auto eload = load_dataset(temp_path("bcgn_empty.bcgn"));
    REQUIRE(eload.items.empty());
    REQUIRE(eload.domain == 'B');
}

TEST_CASE("corrupted container errors name the offset") {
    const std::string path = temp_path("bcgn_corrupt.bcgn");
    auto task = gen_shift_task(14, 2, 8, 8);
    save_dataset(path, task.a);

    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    try {
        load_dataset(path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        REQUIRE(std::string(e.what()).find("bad magic") != std::string::npos);
        REQUIRE(std::string(e.what()).find("offset 0") != std::string::npos);
    }

    // truncation
    save_dataset(path, task.a);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
    out.close();
    REQUIRE_THROWS_AS(load_dataset(path), IoError);

    // version mismatch
    bytes[4] = 9;
    std::ofstream ov(path, std::ios::binary | std::ios::trunc);
    ov.write(bytes.data(), std::streamsize(bytes.size()));
    ov.close();
    REQUIRE_THROWS_AS(load_dataset(path), IoError);
}

TEST_CASE("u64 rng-state encoding is exact") {
    for (uint64_t v : {0ull, 1ull, 0xdeadbeefcafef00dull, ~0ull}) {
        REQUIRE(decode_u64(encode_u64(v)) == v);
    }
}

TEST_CASE("noise latent banks") {
    Rng rng(21);
    auto bank = make_noise_bank(3, 2, 8, 8, rng);
    REQUIRE(bank.maps.size() == 3);
    REQUIRE(bank.maps[0].shape == std::vector<int>{2, 1, 8, 8});
    REQUIRE_THROWS_AS(make_noise_bank(0, 1, 8, 8, rng), ConfigError);
}
