#include "agx/autodiff.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

using namespace agx;
using ad::Value;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.raw()) v = dist(rng);
    return t;
}

// Central finite differences vs reverse-mode gradients for a scalar graph
// built from a list of leaf tensors.
void check_gradients(const std::function<Value(const std::vector<Value>&)>& build,
                     std::vector<Tensor> leaves, double step = 1e-5, double tol = 1e-4) {
    std::vector<Value> params;
    for (const auto& t : leaves) params.push_back(ad::param(t));
    Value loss = build(params);
    ad::backward(loss);

    auto eval = [&](const std::vector<Tensor>& ts) {
        std::vector<Value> consts;
        for (const auto& t : ts) consts.push_back(ad::constant(t));
        return ad::scalar(build(consts));
    };

    for (std::size_t p = 0; p < leaves.size(); ++p) {
        for (std::size_t i = 0; i < leaves[p].size(); ++i) {
            std::vector<Tensor> bumped = leaves;
            bumped[p][i] += step;
            double up = eval(bumped);
            bumped[p][i] -= 2.0 * step;
            double down = eval(bumped);
            double fd = (up - down) / (2.0 * step);
            double got = params[p]->grad[i];
            INFO("leaf " << p << " component " << i << " fd=" << fd << " ad=" << got);
            REQUIRE(rel_err(got, fd) < tol);
        }
    }
}

}  // namespace

TEST_CASE("conv3x3s2 output geometry") {
    std::mt19937_64 rng(1);
    Value x = ad::constant(random_tensor({32, 32, 1}, rng));
    Value w = ad::constant(random_tensor({3, 3, 1, 8}, rng));
    Value b = ad::constant(random_tensor({8}, rng));
    auto y = ad::conv3x3s2(x, w, b);
    REQUIRE(y->val.shape() == std::vector<std::size_t>{16, 16, 8});
    auto y2 = ad::conv3x3s2(y, ad::constant(random_tensor({3, 3, 8, 8}, rng)),
                            ad::constant(random_tensor({8}, rng)));
    auto y3 = ad::conv3x3s2(y2, ad::constant(random_tensor({3, 3, 8, 8}, rng)),
                            ad::constant(random_tensor({8}, rng)));
    REQUIRE(y3->val.shape() == std::vector<std::size_t>{4, 4, 8});
}

TEST_CASE("conv3x3s2 matches a direct dense computation") {
    // 1x1 kernel footprint check: with only the center tap nonzero the conv
    // at stride 2 samples x at even coordinates.
    Tensor x({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
    Tensor w({3, 3, 1, 1});
    w[(1 * 3 + 1) * 1 + 0] = 2.0;  // center tap
    Tensor b({1});
    auto y = ad::conv3x3s2(ad::constant(x), ad::constant(w), ad::constant(b));
    REQUIRE(y->val.shape() == std::vector<std::size_t>{2, 2, 1});
    CHECK(y->val.at(0, 0, 0) == 0.0);
    CHECK(y->val.at(0, 1, 0) == 4.0);
    CHECK(y->val.at(1, 0, 0) == 16.0);
    CHECK(y->val.at(1, 1, 0) == 20.0);
}

TEST_CASE("cam hand cases") {
    SECTION("single channel scaling") {
        Tensor f({2, 2, 1}, {1, 3, 2, 4});
        Tensor w({1}, {2});
        auto m = ad::cam(ad::constant(f), ad::constant(w));
        CHECK(m->val.raw() == std::vector<double>{2, 6, 4, 8});
    }
    SECTION("zero weights") {
        std::mt19937_64 rng(3);
        auto m = ad::cam(ad::constant(random_tensor({3, 3, 4}, rng)), ad::constant(Tensor({4})));
        for (double v : m->val.raw()) CHECK(v == 0.0);
    }
    SECTION("two channels with signed weights") {
        // channels [[1,0],[0,1]] and [[0,1],[1,0]], w = [1,-1]
        Tensor f({2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
        Tensor w({2}, {1, -1});
        auto m = ad::cam(ad::constant(f), ad::constant(w));
        CHECK(m->val.raw() == std::vector<double>{1, -1, -1, 1});
    }
    SECTION("length mismatch is an error") {
        Tensor f({2, 2, 2});
        REQUIRE_THROWS_AS(ad::cam(ad::constant(f), ad::constant(Tensor({3}))), Error);
    }
}

TEST_CASE("minmax_norm values") {
    Tensor x({2, 2}, {1, 4, 3, 4});
    auto y = ad::minmax_norm(ad::constant(x));
    CHECK(y->val[0] == 0.0);
    CHECK(y->val[1] == 1.0);
    CHECK(y->val[2] == Catch::Approx(2.0 / 3.0));
    CHECK(y->val[3] == 1.0);

    auto flat = ad::minmax_norm(ad::constant(Tensor({3, 3}, std::vector<double>(9, 7.0))));
    for (double v : flat->val.raw()) CHECK(v == 0.0);
}

TEST_CASE("residual gate identity and scaling") {
    std::mt19937_64 rng(4);
    Tensor f = random_tensor({4, 4, 8}, rng);
    SECTION("H = 0 leaves the features bitwise unchanged") {
        auto out = ad::residual_gate(ad::constant(f), ad::constant(Tensor({4, 4})), 0.1);
        CHECK(out->val == f);
    }
    SECTION("H = 1 with beta scales by 1 + beta") {
        Tensor ones({4, 4}, std::vector<double>(16, 1.0));
        auto out = ad::residual_gate(ad::constant(f), ad::constant(ones), 0.1);
        for (std::size_t i = 0; i < f.size(); ++i)
            CHECK(out->val[i] == Catch::Approx(1.1 * f[i]).epsilon(1e-15));
    }
    SECTION("beta = 0 ignores H entirely") {
        std::mt19937_64 rng2(5);
        auto out = ad::residual_gate(ad::constant(f), ad::constant(random_tensor({4, 4}, rng2)), 0.0);
        CHECK(out->val == f);
    }
}

TEST_CASE("finite differences: elementary ops") {
    std::mt19937_64 rng(11);

    SECTION("dot + sigmoid + neg_log") {
        auto build = [](const std::vector<Value>& p) {
            auto prob = ad::sigmoid(ad::dot(p[0], p[1]));
            return ad::add(ad::neg_log(prob, 1e-12), ad::scale(ad::neg_log1m(prob, 1e-12), 0.5));
        };
        check_gradients(build, {random_tensor({6}, rng), random_tensor({6}, rng)});
    }

    SECTION("gap + relu") {
        auto build = [](const std::vector<Value>& p) {
            auto pooled = ad::gap(ad::relu(p[0]));
            return ad::dot(pooled, p[1]);
        };
        check_gradients(build, {random_tensor({3, 3, 2}, rng), random_tensor({2}, rng)});
    }

    SECTION("cam + minmax_norm") {
        auto build = [](const std::vector<Value>& p) {
            auto h = ad::minmax_norm(ad::add(ad::cam(p[0], p[1]), ad::cam(p[0], p[2])));
            return ad::dot(ad::gap(ad::residual_gate(p[3], h, 0.1)), p[4]);
        };
        check_gradients(build, {random_tensor({3, 3, 2}, rng), random_tensor({2}, rng),
                                random_tensor({2}, rng), random_tensor({3, 3, 2}, rng),
                                random_tensor({2}, rng)});
    }

    SECTION("conv3x3s2") {
        auto build = [](const std::vector<Value>& p) {
            auto f = ad::relu(ad::conv3x3s2(p[0], p[1], p[2]));
            return ad::dot(ad::gap(f), p[3]);
        };
        check_gradients(build, {random_tensor({6, 6, 2}, rng), random_tensor({3, 3, 2, 3}, rng),
                                random_tensor({3}, rng), random_tensor({3}, rng)});
    }
}

TEST_CASE("finite differences: composed two-branch miniature", "[gradcheck]") {
    // Mimics the real loss wiring: two conv branches, CAM aggregation through
    // min-max normalization, residual gating, BCE terms on both heads.
    std::mt19937_64 rng(21);
    auto build = [](const std::vector<Value>& p) {
        auto f_a = ad::relu(ad::conv3x3s2(p[0], p[1], p[2]));
        auto f_o = ad::relu(ad::conv3x3s2(p[0], p[3], p[4]));
        auto anat_prob = ad::sigmoid(ad::dot(ad::gap(f_a), p[5]));
        auto raw = ad::add(ad::cam(f_a, p[5]), ad::cam(f_a, p[6]));
        auto h = ad::minmax_norm(raw);
        auto obs_prob = ad::sigmoid(ad::dot(ad::gap(ad::residual_gate(f_o, h, 0.1)), p[7]));
        auto l_a = ad::neg_log(anat_prob, 1e-12);
        auto l_o = ad::neg_log1m(obs_prob, 1e-12);
        return ad::add(ad::scale(l_a, 0.7), ad::scale(l_o, 0.3));
    };
    std::vector<Tensor> leaves = {
        random_tensor({6, 6, 1}, rng),     // shared image (gradient probed too)
        random_tensor({3, 3, 1, 2}, rng),  // anatomy conv
        random_tensor({2}, rng),
        random_tensor({3, 3, 1, 2}, rng),  // observation conv
        random_tensor({2}, rng),
        random_tensor({2}, rng),           // anatomy heads
        random_tensor({2}, rng),
        random_tensor({2}, rng),           // observation head
    };
    check_gradients(build, std::move(leaves));
}

TEST_CASE("backward requires a scalar root") {
    std::mt19937_64 rng(31);
    auto v = ad::param(random_tensor({2, 2}, rng));
    REQUIRE_THROWS_AS(ad::backward(v), Error);
}

TEST_CASE("gradients accumulate across shared subgraphs") {
    // loss = dot(x, x) -> grad = 2x
    Tensor x({3}, {1.0, -2.0, 0.5});
    auto p = ad::param(x);
    auto loss = ad::dot(p, p);
    ad::backward(loss);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p->grad[i] == Catch::Approx(2.0 * x[i]));
}
