#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "veil/diffusion.hpp"
#include "veil/annotators.hpp"
#include "veil/errors.hpp"
#include "veil/schedule.hpp"
#include "veil/toy_backend.hpp"
#include "veil/wire.hpp"

using namespace veil;
using veil::test::random_tensor;

namespace {

// Counts slot queries and records which control kinds each call received.
class CountingDenoiser final : public DenoiserAdapter {
public:
    explicit CountingDenoiser(std::shared_ptr<DenoiserAdapter> inner)
        : inner_(std::move(inner)) {}

    Tensor denoise(const Tensor& x, double sigma, const std::vector<ControlRef>& controls,
                   const PromptEmbedding& prompt) const override {
        ++calls_;
        bool has_identity = false;
        for (const ControlRef& c : controls) {
            kinds_seen_.push_back(c.signal->kind());
            if (c.signal->kind() == ControlKind::identity_latent) has_identity = true;
        }
        if (has_identity) ++identity_slot_calls_;
        return inner_->denoise(x, sigma, controls, prompt);
    }

    mutable int calls_ = 0;
    mutable int identity_slot_calls_ = 0;
    mutable std::vector<ControlKind> kinds_seen_;

private:
    std::shared_ptr<DenoiserAdapter> inner_;
};

}  // namespace

TEST_CASE("karras schedule: endpoint and degenerate cases") {
    const auto s2 = karras_sigma_schedule(2, 0.1, 10.0, 7.0);
    REQUIRE(s2.sigmas().size() == 3);
    CHECK(s2.sigmas()[0] == 10.0);
    CHECK(s2.sigmas()[1] == 0.1);
    CHECK(s2.sigmas()[2] == 0.0);

    const auto s1 = karras_sigma_schedule(1, 0.1, 10.0, 7.0);
    REQUIRE(s1.sigmas().size() == 2);
    CHECK(s1.sigmas()[0] == 10.0);
    CHECK(s1.sigmas()[1] == 0.0);
}

TEST_CASE("karras schedule: pinned interior value for n = 3") {
    // Hand evaluation of the interpolation at i = 1:
    // ((10^(1/7) + 0.1^(1/7)) / 2)^7 = 1.4507321135661928
    const auto s = karras_sigma_schedule(3, 0.1, 10.0, 7.0);
    REQUIRE(s.sigmas().size() == 4);
    CHECK(s.sigmas()[1] == doctest::Approx(1.4507321135661928).epsilon(1e-12));
    CHECK(s.sigmas()[2] == 0.1);
}

TEST_CASE("karras schedule: rejects invalid parameters") {
    CHECK_THROWS_AS(karras_sigma_schedule(0, 0.1, 10.0, 7.0), DomainError);
    CHECK_THROWS_AS(karras_sigma_schedule(4, 0.0, 10.0, 7.0), DomainError);
    CHECK_THROWS_AS(karras_sigma_schedule(4, 0.5, 0.5, 7.0), DomainError);
    CHECK_THROWS_AS(karras_sigma_schedule(4, 0.1, 10.0, 0.0), DomainError);
}

TEST_CASE("karras schedule: strictly decreasing over random parameters") {
    Rng rng(555);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(40));
        const double smin = rng.uniform(1e-3, 1.0);
        const double smax = smin * rng.uniform(1.1, 200.0);
        const double rho = rng.uniform(0.5, 15.0);
        const auto s = karras_sigma_schedule(n, smin, smax, rho);
        for (std::size_t i = 0; i + 1 < s.sigmas().size(); ++i) {
            CHECK(s.sigmas()[i] > s.sigmas()[i + 1]);
        }
    }
}

TEST_CASE("img2img init: start step arithmetic") {
    Latent z(Tensor(4, 2, 2, 0.5));
    const auto s16 = karras_sigma_schedule(16, 0.0292, 14.6146, 7.0);
    CHECK(img2img_init(z, 1.0, s16, 1).start_step == 0);
    CHECK(img2img_init(z, 0.9, s16, 1).start_step == 2);
    const auto s30 = karras_sigma_schedule(30, 0.0292, 14.6146, 7.0);
    CHECK(img2img_init(z, 0.6, s30, 1).start_step == 12);
}

TEST_CASE("img2img init: deterministic, seed-dependent, strength-validated") {
    Latent z(Tensor(4, 3, 3, 1.0));
    const auto s = karras_sigma_schedule(8, 0.0292, 14.6146, 7.0);
    const auto a = img2img_init(z, 0.9, s, 42);
    const auto b = img2img_init(z, 0.9, s, 42);
    CHECK(a.x_start.tensor() == b.x_start.tensor());
    const auto c = img2img_init(z, 0.9, s, 43);
    CHECK(a.x_start.tensor().max_abs_diff(c.x_start.tensor()) > 0.0);

    CHECK_THROWS_AS(img2img_init(z, 0.0, s, 1), DomainError);
    CHECK_THROWS_AS(img2img_init(z, 1.01, s, 1), DomainError);

    // strength below 1/n starts past the last step with zero noise
    const auto d = img2img_init(z, 0.05, s, 7);
    CHECK(d.start_step == 8);
    CHECK(d.x_start.tensor() == z.tensor());
}

TEST_CASE("euler stepper: scalar step formula") {
    EulerStepper stepper;
    const Tensor x(1, 1, 1, 2.0);
    const Tensor eps(1, 1, 1, 3.0);
    const Tensor out = stepper.step(x, eps, 4.0, 1.0);
    // x + (sigma_next - sigma) * eps / sigma = 2 + (1-4)*3/4
    CHECK(out.at(0, 0, 0) == doctest::Approx(2.0 - 2.25).epsilon(1e-15));
}

TEST_CASE("sample: zero-step case returns the start latent") {
    const auto schedule = karras_sigma_schedule(4, 0.1, 10.0, 7.0);
    const auto denoiser = make_toy_denoiser(1);
    Rng rng(3);
    const Latent x(random_tensor(rng, 4, 2, 2));
    const Latent out = sample(*denoiser, x, schedule.steps(), schedule, {}, PromptPair{},
                              compute_guidance_weights(1.0, 7.5), EulerStepper{});
    CHECK(out.tensor() == x.tensor());
}

TEST_CASE("sample: start step out of range is a contract violation") {
    const auto schedule = karras_sigma_schedule(4, 0.1, 10.0, 7.0);
    const auto denoiser = make_toy_denoiser(1);
    const Latent x(Tensor(4, 2, 2, 0.0));
    CHECK_THROWS_AS(sample(*denoiser, x, 5, schedule, {}, PromptPair{},
                           compute_guidance_weights(1.0, 7.5), EulerStepper{}),
                    ContractViolation);
}

TEST_CASE("sample: identity control required when w0 != 0") {
    const auto schedule = karras_sigma_schedule(4, 0.1, 10.0, 7.0);
    const auto denoiser = make_toy_denoiser(1);
    const Latent x(Tensor(4, 2, 2, 0.0));
    CHECK_THROWS_AS(sample(*denoiser, x, 0, schedule, {}, PromptPair{},
                           compute_guidance_weights(0.5, 7.5), EulerStepper{}),
                    ContractViolation);

    std::vector<ControlSignal> two;
    two.push_back(ControlSignal(ControlKind::identity_latent, Tensor(4, 2, 2, 1.0), 1.0, 1.0));
    two.push_back(ControlSignal(ControlKind::identity_latent, Tensor(4, 2, 2, 2.0), 1.0, 1.0));
    CHECK_THROWS_AS(sample(*denoiser, x, 0, schedule, two, PromptPair{},
                           compute_guidance_weights(0.5, 7.5), EulerStepper{}),
                    ContractViolation);
}

namespace {

// Independent scalar-case oracle for the a_s = 0 loop: unrolls
// x' = x + (s' - s) * (x - z) / s over the schedule.
double scalar_reconstruction_oracle(double x, double z, const SigmaSchedule& schedule,
                                    int start_step) {
    for (int i = start_step; i < schedule.steps(); ++i) {
        const double s = schedule.sigmas()[i];
        const double s_next = schedule.sigmas()[i + 1];
        x = x + (s_next - s) * (x - z) / s;
    }
    return x;
}

}  // namespace

TEST_CASE("sample: a_s = 0 reproduces the identity latent (closed form)") {
    const auto schedule = karras_sigma_schedule(16, 0.0292, 14.6146, 7.0);
    const auto denoiser = make_toy_denoiser(11);
    const auto weights = compute_guidance_weights(0.0, 7.5);

    // scalar case against the independent oracle
    {
        const Latent z(Tensor(4, 1, 1, 0.75));
        const auto init = img2img_init(z, 1.0, schedule, 5);
        std::vector<ControlSignal> controls{identity_control(z)};
        const Latent out = sample(*denoiser, init.x_start, init.start_step, schedule, controls,
                                  PromptPair{}, weights, EulerStepper{});
        for (int c = 0; c < 4; ++c) {
            const double expect = scalar_reconstruction_oracle(init.x_start.tensor().at(c, 0, 0),
                                                               0.75, schedule, init.start_step);
            CHECK(out.tensor().at(c, 0, 0) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    // tensor case lands on the identity latent
    {
        Rng rng(8);
        const Latent z(random_tensor(rng, 4, 6, 6));
        const auto init = img2img_init(z, 1.0, schedule, 17);
        std::vector<ControlSignal> controls{identity_control(z)};
        const Latent out = sample(*denoiser, init.x_start, init.start_step, schedule, controls,
                                  PromptPair{}, weights, EulerStepper{});
        CHECK(out.tensor().max_abs_diff(z.tensor()) < 1e-8);
    }
}

TEST_CASE("sample: reconstruction error non-increasing with step count") {
    const auto denoiser = make_toy_denoiser(3);
    const auto weights = compute_guidance_weights(0.0, 7.5);
    Rng rng(911);
    for (int instance = 0; instance < 10; ++instance) {
        const Latent z(random_tensor(rng, 4, 3, 3));
        const std::uint64_t seed = rng.next_u64();
        double prev = std::numeric_limits<double>::infinity();
        for (int n : {2, 4, 8, 16, 32}) {
            const auto schedule = karras_sigma_schedule(n, 0.0292, 14.6146, 7.0);
            // fixed start deviation so only the schedule density varies
            Tensor start = z.tensor();
            Rng noise(seed);
            for (double& v : start.data()) v += schedule.sigmas()[0] / 14.6146 * noise.normal();
            std::vector<ControlSignal> controls{identity_control(z)};
            const Latent out = sample(*denoiser, Latent(start), 0, schedule, controls,
                                      PromptPair{}, weights, EulerStepper{});
            const double dist = out.tensor().max_abs_diff(z.tensor());
            CHECK(dist <= prev + 1e-12);
            prev = dist;
        }
    }
}

TEST_CASE("sample: deterministic for identical inputs") {
    const auto schedule = karras_sigma_schedule(16, 0.0292, 14.6146, 7.0);
    const auto denoiser = make_toy_denoiser(21);
    Rng rng(4);
    const Latent z(random_tensor(rng, 4, 4, 4));
    std::vector<ControlSignal> controls;
    controls.push_back(ControlSignal(ControlKind::depth, random_tensor(rng, 1, 32, 32), 0.5, 1.0));
    controls.push_back(identity_control(z));
    const PromptPair prompts{PromptEmbedding({{0.1, 0.2}}, Polarity::positive),
                             PromptEmbedding({{0.3, -0.2}}, Polarity::negative)};
    const auto weights = compute_guidance_weights(1.25, 7.5);
    const auto init = img2img_init(z, 0.9, schedule, 99);

    const Latent a = sample(*denoiser, init.x_start, init.start_step, schedule, controls, prompts,
                            weights, EulerStepper{});
    const Latent b = sample(*denoiser, init.x_start, init.start_step, schedule, controls, prompts,
                            weights, EulerStepper{});
    CHECK(a.tensor() == b.tensor());
}

TEST_CASE("sample: query-count contract") {
    const auto schedule = karras_sigma_schedule(16, 0.0292, 14.6146, 7.0);
    Rng rng(5);
    const Latent z(random_tensor(rng, 4, 4, 4));
    std::vector<ControlSignal> controls;
    controls.push_back(
        ControlSignal(ControlKind::lineart, random_tensor(rng, 1, 32, 32, 0.0, 1.0), 0.5, 0.5));
    controls.push_back(identity_control(z));
    const PromptPair prompts{PromptEmbedding({{0.5}}, Polarity::positive),
                             PromptEmbedding({{-0.5}}, Polarity::negative)};

    SUBCASE("w0 == 0 never queries the identity slot") {
        CountingDenoiser counting(make_toy_denoiser(2));
        const auto weights = compute_guidance_weights(1.0, 7.5);  // w0 = 0
        sample(counting, z, 0, schedule, controls, prompts, weights, EulerStepper{});
        CHECK(counting.identity_slot_calls_ == 0);
        CHECK(counting.calls_ == 32);  // negative + positive per step
    }

    SUBCASE("w1 == 0 skips the negative slot") {
        CountingDenoiser counting(make_toy_denoiser(2));
        const auto weights = compute_guidance_weights(1.0, 1.0);  // w = (0, 0, 1)
        sample(counting, z, 0, schedule, controls, prompts, weights, EulerStepper{});
        CHECK(counting.calls_ == 16);
    }

    SUBCASE("cut-off controls are not passed to the adapter") {
        CountingDenoiser counting(make_toy_denoiser(2));
        const auto weights = compute_guidance_weights(1.25, 7.5);
        StepTrace trace;
        sample(counting, z, 0, schedule, controls, prompts, weights, EulerStepper{}, &trace);
        REQUIRE(trace.steps.size() == 16);
        for (const StepRecord& step : trace.steps) {
            const bool lineart_active =
                std::any_of(step.active_controls.begin(), step.active_controls.end(),
                            [](const auto& kv) { return kv.first == ControlKind::lineart; });
            CHECK(lineart_active == (step.step_index < 8));
        }
        // adapter saw lineart only in the first half: 8 steps x 2 slots
        const auto lineart_seen =
            std::count(counting.kinds_seen_.begin(), counting.kinds_seen_.end(),
                       ControlKind::lineart);
        CHECK(lineart_seen == 16);
    }
}

TEST_CASE("sample: trace records the guidance weights") {
    const auto schedule = karras_sigma_schedule(4, 0.1, 10.0, 7.0);
    Rng rng(6);
    const Latent z(random_tensor(rng, 4, 2, 2));
    std::vector<ControlSignal> controls{identity_control(z)};
    const auto weights = compute_guidance_weights(1.25, 7.5);
    StepTrace trace;
    sample(*make_toy_denoiser(1), z, 0, schedule, controls, PromptPair{}, weights, EulerStepper{},
           &trace);
    REQUIRE(trace.steps.size() == 4);
    for (const StepRecord& s : trace.steps) {
        CHECK(s.weights.w0 == -0.25);
        CHECK(s.weights.w1 == -6.5);
        CHECK(s.weights.w2 == 7.75);
    }
}

TEST_CASE("toy denoiser: deterministic per seed, affine in x") {
    const ToyDenoiser d1(77);
    const ToyDenoiser d2(77);
    const ToyDenoiser d3(78);
    Rng rng(12);
    const Tensor probe = random_tensor(rng, 4, 3, 3);
    const PromptEmbedding prompt({{0.4, -0.2, 0.1}}, Polarity::positive);

    CHECK(d1.denoise(probe, 1.0, {}, prompt) == d2.denoise(probe, 1.0, {}, prompt));
    CHECK(d1.denoise(probe, 1.0, {}, prompt).max_abs_diff(d3.denoise(probe, 1.0, {}, prompt)) >
          0.0);

    // zero everything -> zero output
    const Tensor zero(4, 3, 3, 0.0);
    CHECK(d1.denoise(zero, 1.0, {}, PromptEmbedding{}).max_abs_diff(zero) == 0.0);

    // superposition: eps(x1 + x2) = eps(x1) + eps(x2) - eps(0)
    std::vector<ControlSignal> owned;
    owned.push_back(ControlSignal(ControlKind::depth, random_tensor(rng, 1, 24, 24, 0.0, 1.0),
                                  0.5, 1.0));
    std::vector<ControlRef> refs{{&owned[0], 0.5}};
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x1 = random_tensor(rng, 4, 3, 3);
        const Tensor x2 = random_tensor(rng, 4, 3, 3);
        Tensor x_sum = x1;
        x_sum.axpy(1.0, x2);
        Tensor rhs = d1.denoise(x1, 1.0, refs, prompt);
        rhs.axpy(1.0, d1.denoise(x2, 1.0, refs, prompt));
        rhs.axpy(-1.0, d1.denoise(zero, 1.0, refs, prompt));
        CHECK(d1.denoise(x_sum, 1.0, refs, prompt).max_abs_diff(rhs) < 1e-10);
    }
}

TEST_CASE("toy autoencoder: constant and round-trip behavior") {
    const ToyAutoencoder vae;

    const Image constant = veil::test::constant_image(55.0, 64, 64);
    const Latent z = vae.encode(constant);
    for (int c = 0; c < 4; ++c) {
        const double first = z.tensor().at(c, 0, 0);
        for (int y = 0; y < z.height(); ++y)
            for (int x = 0; x < z.width(); ++x) CHECK(z.tensor().at(c, y, x) == first);
    }
    const Image back = vae.decode(z);
    CHECK(back.channels() == 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) CHECK(back.at(c, y, x) == 55.0);

    // 8x downsampling contract
    const Image big(3, 768, 768, 1.0);
    const Latent zbig = vae.encode(big);
    CHECK(zbig.height() == 96);
    CHECK(zbig.width() == 96);

    CHECK_THROWS_AS(vae.encode(Image(3, 250, 250, 1.0)), DomainError);

    // decode(encode(x)) is exactly the blockwise-mean image
    const Image noisy = veil::test::noise_image(4242, 64, 64);
    const Image round = vae.decode(vae.encode(noisy));
    Image blockmean(3, 64, 64);
    for (int c = 0; c < 3; ++c) {
        for (int by = 0; by < 8; ++by) {
            for (int bx = 0; bx < 8; ++bx) {
                double s = 0.0;
                for (int dy = 0; dy < 8; ++dy)
                    for (int dx = 0; dx < 8; ++dx) s += noisy.at(c, by * 8 + dy, bx * 8 + dx);
                const double mean = s / 64.0;
                for (int dy = 0; dy < 8; ++dy)
                    for (int dx = 0; dx < 8; ++dx) blockmean.at(c, by * 8 + dy, bx * 8 + dx) = mean;
            }
        }
    }
    CHECK(round.max_abs_diff(blockmean) == 0.0);
}

TEST_CASE("wire: request and response round trip") {
    Rng rng(55);
    const Tensor latent = random_tensor(rng, 4, 2, 3);
    std::vector<ControlSignal> owned;
    owned.push_back(ControlSignal(ControlKind::depth, random_tensor(rng, 1, 16, 24, 0.0, 1.0),
                                  0.5, 1.0));
    owned.push_back(ControlSignal(ControlKind::lineart, random_tensor(rng, 1, 16, 24, 0.0, 1.0),
                                  0.5, 0.5));
    std::vector<ControlRef> refs{{&owned[0], 0.5}, {&owned[1], 0.25}};
    const PromptEmbedding prompt({{0.5, -0.25}, {0.125, 1.0}}, Polarity::negative);

    const std::string payload = encode_denoise_request(latent, 3.5, refs, prompt);
    const DenoiseRequest req = decode_denoise_request(payload);
    CHECK(req.sigma == 3.5);
    REQUIRE(req.controls.size() == 2);
    CHECK(req.controls[0].kind == ControlKind::depth);
    CHECK(req.controls[0].weight == 0.5);
    CHECK(req.controls[1].kind == ControlKind::lineart);
    CHECK(req.latent.max_abs_diff(latent) < 1e-6);  // float32 transport
    CHECK(req.prompt.polarity() == Polarity::negative);
    REQUIRE(req.prompt.tokens().size() == 2);
    CHECK(req.prompt.tokens()[1][1] == 1.0);  // exactly representable in f32

    const Tensor eps = random_tensor(rng, 4, 2, 3);
    CHECK(decode_denoise_response(encode_denoise_response(eps)).max_abs_diff(eps) < 1e-6);

    CHECK_THROWS_AS(decode_denoise_request("garbage"), IoError);
    CHECK_THROWS_AS(decode_denoise_response(payload), IoError);
}

TEST_CASE("wire: remote denoiser loopback matches the local backend") {
    const auto toy = make_toy_denoiser(13);
    const RemoteDenoiser remote([&toy](const std::string& request) {
        const DenoiseRequest req = decode_denoise_request(request);
        std::vector<ControlSignal> owned;
        std::vector<ControlRef> refs;
        owned.reserve(req.controls.size());
        for (const WireControl& c : req.controls) {
            owned.push_back(ControlSignal(c.kind, c.tensor, 1.0, 1.0));
        }
        for (std::size_t i = 0; i < owned.size(); ++i) {
            refs.push_back(ControlRef{&owned[i], req.controls[i].weight});
        }
        return encode_denoise_response(toy->denoise(req.latent, req.sigma, refs, req.prompt));
    });

    Rng rng(66);
    const Tensor latent = random_tensor(rng, 4, 2, 2);
    std::vector<ControlSignal> owned;
    owned.push_back(ControlSignal(ControlKind::depth, random_tensor(rng, 1, 16, 16, 0.0, 1.0),
                                  0.5, 1.0));
    std::vector<ControlRef> refs{{&owned[0], 0.5}};
    const PromptEmbedding prompt({{0.25, 0.5}}, Polarity::positive);

    const Tensor via_remote = remote.denoise(latent, 2.0, refs, prompt);
    const Tensor direct = toy->denoise(latent, 2.0, refs, prompt);
    // the only divergence allowed is float32 transport rounding
    CHECK(via_remote.max_abs_diff(direct) < 1e-5);
    CHECK_FALSE(remote.shareable());
}
