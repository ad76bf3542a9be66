#include "agx/aga.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <random>

#include "agx/pgm.hpp"

using namespace agx;
using namespace agx::report;

namespace {

std::shared_ptr<const Vocabulary> vocab3() {
    return std::make_shared<Vocabulary>(std::vector<std::string>{"a1", "a2", "a3"},
                                        std::vector<std::string>{"o1", "o2"});
}

Tensor random_cam(std::mt19937_64& rng, std::size_t s = 2) {
    Tensor t({s, s});
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (auto& v : t.raw()) v = dist(rng);
    return t;
}

}  // namespace

TEST_CASE("build_aga_map aggregates P rows and normalizes") {
    auto vocab = vocab3();
    AdjacencyMatrix A("d", vocab);
    A.set(0, 0, RelationState::P);
    A.set(1, 0, RelationState::P);
    std::map<std::string, Tensor> cams;
    cams["a1"] = Tensor({2, 2}, {1, 3, 2, 4});
    cams["a2"] = Tensor({2, 2}, {0, 1, 1, 0});
    auto h = aga::build_aga_map(A, 0, cams);
    // raw = [[1,4],[3,4]] -> normalized [[0,1],[2/3,1]]
    CHECK(h.map[0] == 0.0);
    CHECK(h.map[1] == 1.0);
    CHECK(h.map[2] == Catch::Approx(2.0 / 3.0));
    CHECK(h.map[3] == 1.0);
    REQUIRE(h.contributing_rows == std::vector<std::string>{"a1", "a2"});
}

TEST_CASE("build_aga_map with no P entries is identically zero") {
    auto vocab = vocab3();
    AdjacencyMatrix A("d", vocab);
    A.set(0, 0, RelationState::N);
    A.set(1, 0, RelationState::U);
    std::map<std::string, Tensor> cams;
    cams["a1"] = Tensor({2, 2}, {1, 2, 3, 4});
    auto h = aga::build_aga_map(A, 0, cams);
    CHECK(h.contributing_rows.empty());
    for (double v : h.map.raw()) CHECK(v == 0.0);
}

TEST_CASE("degenerate constant aggregate normalizes to zeros") {
    auto vocab = vocab3();
    AdjacencyMatrix A("d", vocab);
    A.set(0, 0, RelationState::P);
    std::map<std::string, Tensor> cams;
    cams["a1"] = Tensor({2, 2}, {5, 5, 5, 5});
    auto h = aga::build_aga_map(A, 0, cams);
    for (double v : h.map.raw()) CHECK(v == 0.0);
}

TEST_CASE("missing CAM for a contributing row names the row") {
    auto vocab = vocab3();
    AdjacencyMatrix A("d", vocab);
    A.set(2, 1, RelationState::P);
    std::map<std::string, Tensor> cams;  // empty
    REQUIRE_THROWS_WITH(aga::build_aga_map(A, 1, cams),
                        Catch::Matchers::ContainsSubstring("a3"));
}

TEST_CASE("reserved rows never contribute") {
    auto vocab = vocab3();
    AdjacencyMatrix A("d", vocab);
    A.set(vocab->unspecified_row(), 0, RelationState::P);
    auto h = aga::build_aga_map(A, 0, {});
    CHECK(h.contributing_rows.empty());
    for (double v : h.map.raw()) CHECK(v == 0.0);
}

TEST_CASE("aga map range and argmax preservation", "[property]") {
    auto vocab = vocab3();
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int iter = 0; iter < 200; ++iter) {
        AdjacencyMatrix A("d", vocab);
        std::map<std::string, Tensor> cams;
        Tensor raw({2, 2});
        bool any = false;
        for (std::size_t j = 0; j < 3; ++j) {
            cams[vocab->anatomy_tokens()[j]] = random_cam(rng);
            if (coin(rng)) {
                A.set(j, 0, RelationState::P);
                any = true;
                for (std::size_t i = 0; i < 4; ++i)
                    raw[i] += cams[vocab->anatomy_tokens()[j]][i];
            }
        }
        auto h = aga::build_aga_map(A, 0, cams);
        for (double v : h.map.raw()) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
        if (any && raw.max() > raw.min()) {
            std::size_t argmax_raw = 0, argmax_map = 0;
            for (std::size_t i = 1; i < 4; ++i) {
                if (raw[i] > raw[argmax_raw]) argmax_raw = i;
                if (h.map[i] > h.map[argmax_map]) argmax_map = i;
            }
            REQUIRE(argmax_raw == argmax_map);
        }
    }
}

TEST_CASE("raw aggregation is additive over rows", "[property]") {
    // Oracle: summing CAMs directly equals the pre-normalization aggregate.
    // Recover the raw aggregate by disabling normalization via linearity:
    // compare single-row maps against the multi-row map through the sum.
    auto vocab = vocab3();
    std::mt19937_64 rng(405);
    for (int iter = 0; iter < 100; ++iter) {
        AdjacencyMatrix A("d", vocab);
        A.set(0, 0, RelationState::P);
        A.set(1, 0, RelationState::P);
        std::map<std::string, Tensor> cams;
        cams["a1"] = random_cam(rng);
        cams["a2"] = random_cam(rng);
        Tensor expected({2, 2});
        for (std::size_t i = 0; i < 4; ++i) expected[i] = cams["a1"][i] + cams["a2"][i];
        // Normalize the oracle sum the same way and compare elementwise.
        double lo = expected.min(), hi = expected.max();
        auto h = aga::build_aga_map(A, 0, cams);
        if (hi > lo) {
            for (std::size_t i = 0; i < 4; ++i)
                REQUIRE(h.map[i] == Catch::Approx((expected[i] - lo) / (hi - lo)).margin(1e-12));
        } else {
            for (double v : h.map.raw()) REQUIRE(v == 0.0);
        }
    }
}

TEST_CASE("mutating a P to N removes that row's contribution") {
    auto vocab = vocab3();
    AdjacencyMatrix A("d", vocab);
    A.set(0, 0, RelationState::P);
    A.set(1, 0, RelationState::P);
    std::map<std::string, Tensor> cams;
    cams["a1"] = Tensor({2, 2}, {1, 0, 0, 0});
    cams["a2"] = Tensor({2, 2}, {0, 2, 0, 0});
    auto both = aga::build_aga_map(A, 0, cams);

    AdjacencyMatrix B("d", vocab);
    B.set(0, 0, RelationState::P);
    B.set(1, 0, RelationState::N);
    auto only_a1 = aga::build_aga_map(B, 0, cams);
    CHECK(only_a1.contributing_rows == std::vector<std::string>{"a1"});
    CHECK_FALSE(both.map == only_a1.map);
    // a1 alone: raw [[1,0],[0,0]] -> normalized [[1,0],[0,0]]
    CHECK(only_a1.map[0] == 1.0);
    CHECK(only_a1.map[1] == 0.0);
}

TEST_CASE("inference map is all zeros and inert under the residual gate") {
    auto h = aga::inference_map(4);
    REQUIRE(h.map.shape() == std::vector<std::size_t>{4, 4});
    for (double v : h.map.raw()) CHECK(v == 0.0);

    std::mt19937_64 rng(9);
    Tensor f({4, 4, 3});
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : f.raw()) v = dist(rng);
    for (double beta : {0.0, 0.1, 2.5}) {
        auto gated = ad::residual_gate(ad::constant(f), ad::constant(h.map), beta);
        CHECK(gated->val == f);
    }
}

TEST_CASE("pgm export encodes both formats") {
    Tensor m({2, 3}, {0.0, 0.5, 1.0, 1.0, 0.25, 0.0});
    auto ascii = to_pgm(m, PgmFormat::P2_ascii);
    CHECK(ascii.rfind("P2\n3 2\n255\n", 0) == 0);
    CHECK(ascii.find("255") != std::string::npos);
    auto binary = to_pgm(m, PgmFormat::P5_binary);
    CHECK(binary.rfind("P5\n3 2\n255\n", 0) == 0);
    CHECK(binary.size() == std::string("P5\n3 2\n255\n").size() + 6);
    // constant map -> all zero bytes
    auto flat = to_pgm(Tensor({2, 2}, {3, 3, 3, 3}), PgmFormat::P2_ascii);
    CHECK(flat.find("255\n0 0\n0 0\n") != std::string::npos);
}
