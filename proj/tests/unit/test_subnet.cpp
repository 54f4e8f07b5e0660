#include "oracles.hpp"

#include "supermask/ops.hpp"
#include "supermask/subnet.hpp"

#include <doctest.h>

#include <cmath>

using namespace supermask;

namespace {

std::vector<std::uint8_t> bits_of(const Mask& m) { return m.to_bits(); }

Tensor vec(std::vector<float> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

/// Random score vector; half of them draw from a tiny value set so that
/// equal |S| (including +s and -s) are common.
std::vector<float> random_scores(RngStream& rng, std::size_t j, bool duplicates) {
    std::vector<float> s(j);
    for (float& v : s) {
        if (duplicates) {
            v = static_cast<float>(static_cast<int>(rng.below(7)) - 3) * 0.25f;
        } else {
            v = static_cast<float>(rng.uniform() * 2 - 1);
        }
    }
    return s;
}

} // namespace

TEST_SUITE("subnet") {

TEST_CASE("compute_mask hand examples") {
    const std::vector<float> s{0.3f, -0.5f, 0.1f, 0.9f};
    // brute-force sort: |S| descending = 0.9 (3), 0.5 (1), 0.3 (0), 0.1 (2)
    CHECK(bits_of(compute_mask(s, 0.5)) == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK(bits_of(compute_mask(s, 0.75)) == std::vector<std::uint8_t>{0, 0, 0, 1});
    CHECK(bits_of(compute_mask(s, 0.0)) == std::vector<std::uint8_t>{1, 1, 1, 1});
    CHECK(compute_mask(s, 0.5).kept() == 2);
}

TEST_CASE("compute_mask errors") {
    const std::vector<float> one{0.4f};
    CHECK_THROWS_AS(compute_mask(one, 0.6), InvalidArgument); // round(0.4) = 0 kept
    CHECK_THROWS_AS(compute_mask(one, 1.0), InvalidArgument);
    CHECK_THROWS_AS(compute_mask(one, -0.1), InvalidArgument);
}

TEST_CASE("ties go to the lower flat index") {
    const std::vector<float> s{0.5f, -0.5f, 0.5f, 0.1f};
    CHECK(bits_of(compute_mask(s, 0.5)) == std::vector<std::uint8_t>{1, 1, 0, 0});
    CHECK(bits_of(compute_mask(s, 0.75)) == std::vector<std::uint8_t>{1, 0, 0, 0});
}

TEST_CASE("kept_count rounds half away from zero") {
    CHECK(kept_count(5, 0.5) == 3);
    CHECK(kept_count(10, 0.2) == 8);
    CHECK(kept_count(100, 0.99) == 1);
    CHECK(kept_count(7, 0.0) == 7);
}

TEST_CASE("compute_mask equals the full-sort oracle on 1000 random layers") {
    RngStream rng(42);
    const double rates[] = {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 0.95, 0.99};
    int checked = 0, with_ties = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t j = 1 + rng.below(300);
        const bool dup = trial % 2 == 0;
        const auto s = random_scores(rng, j, dup);
        const double p = rates[rng.below(std::size(rates))];
        if (oracle::kept(j, p) == 0) {
            CHECK_THROWS_AS(compute_mask(s, p), InvalidArgument);
            continue;
        }
        const auto want = oracle::mask(s, p);
        const Mask got = compute_mask(s, p);
        CHECK(bits_of(got) == want);
        CHECK(got.kept() == oracle::kept(j, p));
        ++checked;
        with_ties += dup;
    }
    CHECK(checked > 900);
    CHECK(with_ties > 450);
}

TEST_CASE("popcount is exact at every prune rate") {
    RngStream rng(7);
    for (double p : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99}) {
        for (std::size_t j : {100u, 577u, 1728u, 36864u}) {
            const auto s = random_scores(rng, j, false);
            const Mask m = compute_mask(s, p);
            std::size_t pop = 0;
            for (std::size_t i = 0; i < j; ++i) pop += m.test(i);
            CHECK(pop == oracle::kept(j, p));
            CHECK(m.kept() == pop);
        }
    }
}

TEST_CASE("mask is invariant to positive rescaling of scores") {
    RngStream rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_scores(rng, 64 + rng.below(64), trial % 2 == 0);
        const Mask before = compute_mask(s, 0.5);
        // powers of two keep the rescaled floats exact, so ties stay ties
        const float c = std::ldexp(1.0f, static_cast<int>(rng.below(20)) - 10);
        for (float& v : s) v *= c;
        CHECK(compute_mask(s, 0.5) == before);
    }
}

TEST_CASE("effective weights") {
    const Mask m = Mask::from_bits(std::vector<std::uint8_t>{1, 0, 1});
    CHECK(effective_weights(vec({1, 2, 3}), m, Algorithm::edge_popup).values() == std::vector<float>{1, 0, 3});

    const Tensor theta = vec({0.2f, -0.4f, 0.6f});
    const LayerAlpha alpha = compute_alpha(theta, m);
    CHECK(alpha.value == doctest::Approx(0.4f));
    CHECK(effective_weights(theta, m, Algorithm::biprop, alpha).values() ==
          std::vector<float>{alpha.value, 0.0f, alpha.value});

    const Mask all = Mask::from_bits(std::vector<std::uint8_t>{1, 1});
    const Tensor pm = vec({1, -1});
    CHECK(effective_weights(pm, all, Algorithm::biprop, compute_alpha(pm, all)).values() ==
          std::vector<float>{1, -1});

    // sign(0) = +1
    const Tensor zero = vec({0.0f, 2.0f});
    CHECK(effective_weights(zero, all, Algorithm::biprop, LayerAlpha{1.0f}).values() == std::vector<float>{1, 1});

    CHECK_THROWS_AS(effective_weights(theta, m, Algorithm::biprop), InvalidArgument);
}

TEST_CASE("compute_alpha") {
    const Mask m = Mask::from_bits(std::vector<std::uint8_t>{1, 0, 1});
    CHECK(compute_alpha(vec({0.2f, -0.4f, 0.6f}), m).value == doctest::Approx(0.4));
    CHECK(compute_alpha(vec({-0.7f, -0.7f, -0.7f}), m).value == doctest::Approx(0.7));
    CHECK(compute_alpha(vec({3, -4}), Mask::from_bits(std::vector<std::uint8_t>{1, 1})).value == 3.5f);
    CHECK_THROWS_AS(compute_alpha(vec({1, 2}), Mask::from_bits(std::vector<std::uint8_t>{0, 0})),
                    InvalidArgument);
}

TEST_CASE("biprop alpha times k equals the kept L1 norm") {
    RngStream rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t j = 10 + rng.below(500);
        Tensor theta({j});
        for (float& v : theta.data()) v = static_cast<float>(rng.normal());
        const auto s = random_scores(rng, j, false);
        const Mask m = compute_mask(s, 0.5);
        long double l1 = 0;
        for (std::size_t i = 0; i < j; ++i)
            if (m.test(i)) l1 += std::fabs(static_cast<long double>(theta[i]));
        const double ak = static_cast<double>(compute_alpha(theta, m).value) * static_cast<double>(m.kept());
        CHECK(oracle::rel_err(ak, static_cast<double>(l1)) < 1e-6);
    }
}

TEST_CASE("score_gradient examples") {
    ScoredTensor layer(vec({0.5f, -1.0f}), vec({0.1f, 0.2f}), 2, 0);
    CHECK(score_gradient(vec({1, 2}), layer, Algorithm::edge_popup).values() == std::vector<float>{0.5f, -2.0f});
    CHECK(score_gradient(vec({0, 0}), layer, Algorithm::edge_popup).values() == std::vector<float>{0, 0});
    CHECK(score_gradient(vec({1, 2}), layer, Algorithm::biprop, LayerAlpha{0.25f}).values() ==
          std::vector<float>{0.25f, -0.5f});
    CHECK_THROWS_AS(score_gradient(vec({1, 2, 3}), layer, Algorithm::edge_popup), ShapeError);
}

TEST_CASE("straight-through score gradient of a masked linear layer") {
    // y = W_eff x with loss sum(delta * y), so dL/dW_eff = delta x^T.
    const std::size_t out = 6, in = 9, batch = 3;
    for (Algorithm alg : {Algorithm::edge_popup, Algorithm::biprop}) {
        for (bool signed_scores : {false, true}) {
            CAPTURE(to_string(alg));
            CAPTURE(signed_scores);
            const auto theta = oracle::random_tensor<float>({out, in}, 31);
            auto scores = oracle::random_tensor<float>({out, in}, 32, signed_scores ? -1.0 : 0.05, 1.0);
            const auto x = oracle::random_tensor<float>({batch, in}, 33);
            const auto delta = oracle::random_tensor<float>({batch, out}, 34);
            const ScoredTensor layer(theta, scores, static_cast<std::int64_t>(in), 0);
            const Mask mask = compute_mask(scores, 0.5);
            std::optional<LayerAlpha> alpha;
            if (alg == Algorithm::biprop) alpha = compute_alpha(theta, mask);

            Tape<float> tape;
            const Var s = tape.leaf(scores, true);
            const Var w = scored_weight(tape, s, layer, mask, alg, alpha);
            const Var y = ops::linear(tape, tape.leaf(x), w);
            tape.backward(ops::sum(tape, ops::mul(tape, y, tape.leaf(delta))));
            const Tensor got = tape.grad(s);

            std::size_t pruned_nonzero = 0;
            for (std::size_t o = 0; o < out; ++o) {
                for (std::size_t i = 0; i < in; ++i) {
                    long double outer = 0;
                    for (std::size_t b = 0; b < batch; ++b)
                        outer += static_cast<long double>(delta[b * out + o]) * x[b * in + i];
                    const std::size_t idx = o * in + i;
                    const double v = alg == Algorithm::edge_popup
                                         ? theta[idx]
                                         : alpha->value * (theta[idx] >= 0 ? 1.0 : -1.0);
                    const double sgn = scores[idx] >= 0 ? 1.0 : -1.0;
                    const double want = static_cast<double>(outer) * v * sgn;
                    CHECK(oracle::rel_err(got[idx], want, 1e-6) < 1e-5);
                    if (!mask.test(idx) && got[idx] != 0.0f) ++pruned_nonzero;
                }
            }
            // pruned positions receive gradient too
            CHECK(pruned_nonzero > 0);
        }
    }
}

TEST_CASE("mask packing round-trips and rejects stray bits") {
    RngStream rng(13);
    for (std::size_t j : {1u, 7u, 8u, 9u, 63u, 64u, 65u, 1000u}) {
        std::vector<std::uint8_t> bits(j);
        for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(2));
        const Mask m = Mask::from_bits(bits, 0.5);
        const auto packed = m.packed_bytes();
        CHECK(packed.size() == (j + 7) / 8);
        const Mask back = Mask::from_packed(j, packed, 0.5);
        CHECK(back == m);
        CHECK(back.to_bits() == bits);
    }
    std::vector<std::uint8_t> stray{0xff};
    CHECK_THROWS_AS(Mask::from_packed(5, stray, 0.5), FormatError);
    CHECK_THROWS_AS(Mask::from_packed(9, stray, 0.5), FormatError);
}

TEST_CASE("algorithm names round-trip") {
    CHECK(parse_algorithm("edge_popup") == Algorithm::edge_popup);
    CHECK(parse_algorithm("biprop") == Algorithm::biprop);
    CHECK(to_string(Algorithm::biprop) == "biprop");
    CHECK_THROWS_AS(parse_algorithm("sgd"), InvalidArgument);
}

} // TEST_SUITE
