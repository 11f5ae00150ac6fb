#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "pagesum/ops.hpp"
#include "pagesum/optim.hpp"

using namespace pagesum;

TEST_CASE("learning rate schedule") {
    // knee: both branches coincide exactly
    CHECK(lr_at(10000, 10000, 2e-3) == 2e-5);
    CHECK(lr_at(0, 10000, 2e-3) == 0.0);
    // warmup side: base * s / w^1.5
    CHECK(lr_at(5000, 10000, 2e-3) == Catch::Approx(2e-3 * 5000.0 / (10000.0 * 100.0)).epsilon(1e-15));
    // decay side: base / sqrt(s)
    CHECK(lr_at(40000, 10000, 2e-3) == Catch::Approx(2e-3 / 200.0).epsilon(1e-15));
    // monotone up before the knee, down after
    CHECK(lr_at(9999, 10000, 2e-3) < lr_at(10000, 10000, 2e-3));
    CHECK(lr_at(10001, 10000, 2e-3) < lr_at(10000, 10000, 2e-3));
    CHECK_THROWS_AS(lr_at(1, 0, 2e-3), input_error);
}

TEST_CASE("zero_grads resets every parameter") {
    ParamMap<float> p;
    p["w"] = Tensor<float>::from_data({2}, {1, 2}, true);
    backward(sum_all(mul(p.at("w"), p.at("w"))));
    CHECK(p.at("w").grad()[0] != 0.0f);
    zero_grads(p);
    CHECK(p.at("w").grad() == std::vector<float>{0, 0});
}

TEST_CASE("gradient clipping rescales only above the bound") {
    ParamMap<float> p;
    p["w"] = Tensor<float>::from_data({2}, {0, 0}, true);
    p.at("w").node()->grad = {3.0f, 4.0f};  // norm 5
    const double pre = clip_gradients(p, 1.0);
    CHECK(pre == Catch::Approx(5.0).epsilon(1e-6));
    double post = 0;
    for (const float g : p.at("w").grad()) post += double(g) * g;
    CHECK(std::sqrt(post) == Catch::Approx(1.0).epsilon(1e-6));
    CHECK(p.at("w").grad()[0] == Catch::Approx(0.6).epsilon(1e-6));

    p.at("w").node()->grad = {0.3f, 0.4f};
    const double pre2 = clip_gradients(p, 1.0);
    CHECK(pre2 == Catch::Approx(0.5).epsilon(1e-6));
    CHECK(p.at("w").grad()[0] == 0.3f);  // untouched below the bound
}

TEST_CASE("adam steps match an independent scalar implementation") {
    ParamMap<float> p;
    p["w"] = Tensor<float>::from_data({1}, {1.0f}, true);
    Adam<float> opt;

    // scalar reference
    double w = 1.0, m = 0.0, v = 0.0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
    const double grads[3] = {0.5, -0.25, 0.1};
    for (int t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        w -= lr * mh / (std::sqrt(vh) + eps);

        p.at("w").node()->grad = {static_cast<float>(g)};
        opt.step(p, lr);
        CHECK(p.at("w").at(0) == Catch::Approx(w).epsilon(1e-6));
    }
    CHECK(opt.step_count() == 3);
}

TEST_CASE("adam state snapshot and restore resume identically") {
    auto run = [](int pre_steps, bool snapshot_resume) {
        ParamMap<float> p;
        p["w"] = Tensor<float>::from_data({2}, {1.0f, -2.0f}, true);
        Adam<float> opt;
        auto grad_at = [](int t) { return std::vector<float>{0.1f * t, -0.05f * t}; };
        int t = 1;
        for (; t <= pre_steps; ++t) {
            p.at("w").node()->grad = grad_at(t);
            opt.step(p, 0.01);
        }
        if (snapshot_resume) {
            Adam<float> fresh;
            fresh.restore(opt.step_count(), opt.state());
            for (; t <= 6; ++t) {
                p.at("w").node()->grad = grad_at(t);
                fresh.step(p, 0.01);
            }
        } else {
            for (; t <= 6; ++t) {
                p.at("w").node()->grad = grad_at(t);
                opt.step(p, 0.01);
            }
        }
        return p.at("w").data();
    };
    CHECK(run(3, true) == run(3, false));
}
