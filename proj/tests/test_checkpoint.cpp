#include "agx/checkpoint.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <random>

using namespace agx;

namespace {

NamedArrays random_arrays(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    NamedArrays a;
    Tensor t1({3, 4});
    for (auto& v : t1.raw()) v = dist(rng);
    Tensor t2({2, 2, 5});
    for (auto& v : t2.raw()) v = dist(rng);
    Tensor t3({7});
    for (auto& v : t3.raw()) v = dist(rng);
    a["alpha"] = t1;
    a["beta.weights"] = t2;
    a["gamma"] = t3;
    return a;
}

}  // namespace

TEST_CASE("serialize round-trip is bit-exact") {
    std::mt19937_64 rng(61);
    auto arrays = random_arrays(rng);
    // plant values with tricky bit patterns
    arrays["alpha"][0] = 0.1;            // not exactly representable
    arrays["alpha"][1] = -0.0;
    arrays["alpha"][2] = 1e-308;         // subnormal neighbourhood
    auto bytes = serialize_arrays(arrays);
    auto back = deserialize_arrays(bytes);
    REQUIRE(back.size() == arrays.size());
    for (const auto& [name, t] : arrays) {
        REQUIRE(back.count(name) == 1);
        CHECK(back.at(name) == t);
    }
    CHECK(serialize_arrays(back) == bytes);  // byte-stable
    CHECK(std::signbit(back.at("alpha")[1]));
}

TEST_CASE("serialized header carries the magic") {
    auto bytes = serialize_arrays({});
    REQUIRE(bytes.size() == 16);
    CHECK(bytes.substr(0, 8) == "AGXCKPT1");
}

TEST_CASE("corrupt inputs are rejected") {
    std::mt19937_64 rng(62);
    auto bytes = serialize_arrays(random_arrays(rng));
    REQUIRE_THROWS_AS(deserialize_arrays("BADMAGIC" + bytes.substr(8)), Error);
    REQUIRE_THROWS_AS(deserialize_arrays(bytes.substr(0, bytes.size() - 3)), Error);
    REQUIRE_THROWS_AS(deserialize_arrays(bytes + "x"), Error);
}

TEST_CASE("file round-trip") {
    std::mt19937_64 rng(63);
    auto arrays = random_arrays(rng);
    auto path = std::filesystem::temp_directory_path() / "agx_ckpt_test.agx";
    save_arrays(path.string(), arrays);
    auto back = load_arrays(path.string());
    CHECK(serialize_arrays(back) == serialize_arrays(arrays));
    std::filesystem::remove(path);
}

TEST_CASE("model round-trips through named arrays") {
    net::Arch arch;
    arch.conv_layers = 3;
    arch.channels = 8;
    arch.n_anatomy_labels = 9;
    arch.n_observation_labels = 4;
    auto model = net::init_params(arch, 2024);
    auto arrays = model_to_arrays(model);
    // 3 conv layers x 2 tensors x 2 encoders + 9 + 4 heads
    CHECK(arrays.size() == 12 + 13);
    auto back = model_from_arrays(arrays);
    CHECK(serialize_arrays(model_to_arrays(back)) == serialize_arrays(arrays));
    CHECK(back.anatomy_heads.size() == 9);
    CHECK(back.observation_heads.size() == 4);
    CHECK(back.channels() == 8);
}
