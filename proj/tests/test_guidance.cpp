#include <doctest.h>

#include <cmath>

#include "veil/errors.hpp"
#include "veil/guidance.hpp"
#include "veil/rng.hpp"

using namespace veil;

namespace {

Tensor scalar(double v) { return Tensor(1, 1, 1, v); }

}  // namespace

TEST_CASE("guidance weights: pinned triples at omega 7.5") {
    const auto w0 = compute_guidance_weights(0.0, 7.5);
    CHECK(w0.w0 == 1.0);
    CHECK(w0.w1 == 0.0);
    CHECK(w0.w2 == 0.0);

    const auto w1 = compute_guidance_weights(1.0, 7.5);
    CHECK(w1.w0 == 0.0);
    CHECK(w1.w1 == -6.5);
    CHECK(w1.w2 == 7.5);

    const auto w125 = compute_guidance_weights(1.25, 7.5);
    CHECK(w125.w0 == -0.25);
    CHECK(w125.w1 == -6.5);
    CHECK(w125.w2 == 7.75);
}

TEST_CASE("guidance weights: domain errors") {
    CHECK_THROWS_AS(compute_guidance_weights(-0.01, 7.5), DomainError);
    CHECK_THROWS_AS(compute_guidance_weights(1.0, 0.0), DomainError);
    CHECK_THROWS_AS(compute_guidance_weights(1.0, -3.0), DomainError);
}

TEST_CASE("guidance weights: sum identity over random draws") {
    Rng rng(20240517);
    for (int i = 0; i < 10000; ++i) {
        const double a_s = rng.uniform(0.0, 4.0);
        const double omega = rng.uniform_open() * 20.0;
        const auto w = compute_guidance_weights(a_s, omega);
        CHECK(std::fabs(w.w0 + w.w1 + w.w2 - 1.0) < 1e-12);
    }
}

TEST_CASE("guidance weights: w2 branches meet at a_s = 1") {
    const double omega = 7.5;
    const double left = 1.0 * omega;          // a_s * omega as a_s -> 1
    const double right = 1.0 - 1.0 + omega;   // a_s - 1 + omega at a_s = 1
    CHECK(left == omega);
    CHECK(right == omega);
    CHECK(compute_guidance_weights(1.0, omega).w2 == omega);
}

TEST_CASE("combine: pinned scalar examples") {
    const auto w = compute_guidance_weights(1.25, 7.5);
    const Tensor out = combine_noise_predictions(w, scalar(1.0), scalar(2.0), scalar(3.0));
    CHECK(out.at(0, 0, 0) == doctest::Approx(10.0).epsilon(1e-14));

    const auto id = compute_guidance_weights(0.0, 7.5);
    const Tensor pass = combine_noise_predictions(id, scalar(42.0), scalar(-5.0), scalar(9.0));
    CHECK(pass.at(0, 0, 0) == 42.0);

    const auto cfg1 = compute_guidance_weights(1.0, 1.0);
    CHECK(cfg1.w0 == 0.0);
    CHECK(cfg1.w1 == 0.0);
    CHECK(cfg1.w2 == 1.0);
    const Tensor pos = combine_noise_predictions(cfg1, scalar(5.0), scalar(9.0), scalar(9.0));
    CHECK(pos.at(0, 0, 0) == 9.0);
}

TEST_CASE("combine: shape mismatch is a contract violation") {
    const auto w = compute_guidance_weights(1.0, 7.5);
    CHECK_THROWS_AS(
        combine_noise_predictions(w, Tensor(1, 2, 2), Tensor(1, 2, 3), Tensor(1, 2, 2)),
        ContractViolation);
}

TEST_CASE("combine: linear in each slot argument") {
    Rng rng(99);
    const auto w = compute_guidance_weights(rng.uniform(0.0, 2.0), rng.uniform_open() * 10.0);
    auto rand_t = [&rng]() {
        Tensor t(4, 3, 5);
        for (double& v : t.data()) v = rng.uniform(-2.0, 2.0);
        return t;
    };
    const Tensor zero(4, 3, 5, 0.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a1 = rand_t(), a2 = rand_t(), n = rand_t(), p = rand_t();

        Tensor a_sum = a1;
        a_sum.axpy(1.0, a2);
        Tensor lhs = combine_noise_predictions(w, a_sum, n, p);
        Tensor rhs = combine_noise_predictions(w, a1, n, p);
        rhs.axpy(1.0, combine_noise_predictions(w, a2, zero, zero));
        CHECK(lhs.max_abs_diff(rhs) < 1e-10);

        Tensor n_sum = n;
        n_sum.axpy(1.0, a2);
        lhs = combine_noise_predictions(w, a1, n_sum, p);
        rhs = combine_noise_predictions(w, a1, n, p);
        rhs.axpy(1.0, combine_noise_predictions(w, zero, a2, zero));
        CHECK(lhs.max_abs_diff(rhs) < 1e-10);

        Tensor p_sum = p;
        p_sum.axpy(1.0, a2);
        lhs = combine_noise_predictions(w, a1, n, p_sum);
        rhs = combine_noise_predictions(w, a1, n, p);
        rhs.axpy(1.0, combine_noise_predictions(w, zero, zero, a2));
        CHECK(lhs.max_abs_diff(rhs) < 1e-10);
    }
}

TEST_CASE("combine: standard CFG reduction at a_s = 1") {
    Rng rng(7);
    const double omega = 7.5;
    const auto w = compute_guidance_weights(1.0, omega);
    CHECK(w.w0 == 0.0);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor id(2, 4, 4), neg(2, 4, 4), pos(2, 4, 4);
        for (double& v : id.data()) v = rng.uniform(-1.0, 1.0);
        for (double& v : neg.data()) v = rng.uniform(-1.0, 1.0);
        for (double& v : pos.data()) v = rng.uniform(-1.0, 1.0);
        const Tensor got = combine_noise_predictions(w, id, neg, pos);
        Tensor want = Tensor::zeros_like(id);
        want.axpy(1.0 - omega, neg);
        want.axpy(omega, pos);
        CHECK(got.max_abs_diff(want) < 1e-12);
    }
}

TEST_CASE("effective control weight: lineart cutoff at 16 steps") {
    const ControlSignal lineart(ControlKind::lineart, Tensor(1, 8, 8, 0.5), 0.5, 0.5);
    CHECK(effective_control_weight(lineart, 7, 16) == 0.5);
    CHECK(effective_control_weight(lineart, 8, 16) == 0.0);

    const ControlSignal depth(ControlKind::depth, Tensor(1, 8, 8, 0.5), 0.5, 1.0);
    CHECK(effective_control_weight(depth, 15, 16) == 0.5);
}

TEST_CASE("effective control weight: non-increasing in step index") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const double weight = rng.uniform();
        const double cutoff = rng.uniform_open();
        const int total = 1 + static_cast<int>(rng.below(64));
        const ControlSignal c(ControlKind::depth, Tensor(1, 2, 2, 1.0), weight, cutoff);
        double prev = effective_control_weight(c, 0, total);
        for (int step = 1; step < total; ++step) {
            const double cur = effective_control_weight(c, step, total);
            CHECK(cur <= prev);
            prev = cur;
        }
    }
}

TEST_CASE("effective control weight: bad step index is a contract violation") {
    const ControlSignal c(ControlKind::depth, Tensor(1, 2, 2, 1.0), 0.5, 1.0);
    CHECK_THROWS_AS(effective_control_weight(c, 16, 16), ContractViolation);
    CHECK_THROWS_AS(effective_control_weight(c, -1, 16), ContractViolation);
    CHECK_THROWS_AS(effective_control_weight(c, 0, 0), ContractViolation);
}

TEST_CASE("control signal: construction validates parameters") {
    CHECK_THROWS_AS(ControlSignal(ControlKind::depth, Tensor(1, 2, 2), 1.5, 1.0), DomainError);
    CHECK_THROWS_AS(ControlSignal(ControlKind::depth, Tensor(1, 2, 2), -0.1, 1.0), DomainError);
    CHECK_THROWS_AS(ControlSignal(ControlKind::depth, Tensor(1, 2, 2), 0.5, 0.0), DomainError);
    CHECK_THROWS_AS(ControlSignal(ControlKind::depth, Tensor(1, 2, 2), 0.5, 1.1), DomainError);
}

TEST_CASE("prompt embedding: tokens must share one dimension") {
    CHECK_THROWS_AS(PromptEmbedding({{1.0, 2.0}, {3.0}}, Polarity::positive), DomainError);
    const PromptEmbedding ok({{1.0, 2.0}, {3.0, 4.0}}, Polarity::negative);
    CHECK(ok.dim() == 2);
    CHECK(ok.polarity() == Polarity::negative);
}
