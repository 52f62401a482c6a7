#include <doctest.h>

#include <cmath>

#include "mpl/fitting.hpp"

using namespace mpl;

namespace {

Schedule make(ScheduleKind kind, std::int64_t T) {
    ScheduleSpec s;
    s.kind = kind;
    s.total_steps = T;
    s.warmup_steps = 200;
    s.peak_lr = 3e-4;
    s.decay_steps = T / 5;
    s.first_stage_steps = T / 2;
    return make_schedule(s);
}

FitCurve synth(const std::string& name, const LawVariant& v, const MplParams& p, const Schedule& s, std::int64_t every) {
    LossCurve c;
    for (std::int64_t t = every; t <= s.length(); t += every) c.steps.push_back(t);
    c.losses = predict(v, p, s, c.steps);
    return make_fit_curve(name, s, c, InputMode::exact);
}

}  // namespace

TEST_CASE("huber loss and derivative") {
    CHECK(huber(0.005, 0.01) == doctest::Approx(0.5 * 0.005 * 0.005));
    CHECK(huber(0.03, 0.01) == doctest::Approx(0.01 * (0.03 - 0.005)));
    CHECK(huber(-0.03, 0.01) == huber(0.03, 0.01));
    CHECK(huber_derivative(0.005, 0.01) == doctest::Approx(0.005));
    CHECK(huber_derivative(-0.5, 0.01) == doctest::Approx(-0.01));
    const double r = 0.0123, h = 1e-7;
    CHECK(huber_derivative(r, 0.01) == doctest::Approx((huber(r + h, 0.01) - huber(r - h, 0.01)) / (2 * h)));
}

TEST_CASE("metrics on perfect and imperfect predictions") {
    const std::vector<double> gt{3.0, 2.9, 2.8, 2.7};
    const Metrics perfect = evaluate_metrics(gt, gt);
    CHECK(perfect.r2 == 1.0);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.rmse == 0.0);
    CHECK(perfect.prede == 0.0);
    CHECK(perfect.worste == 0.0);

    const std::vector<double> pred{3.0, 2.9, 2.8, 2.754};
    const Metrics m = evaluate_metrics(pred, gt);
    CHECK(m.mae == doctest::Approx(0.054 / 4));
    CHECK(m.rmse == doctest::Approx(0.054 / 2));
    CHECK(m.worste == doctest::Approx(0.054 / 2.7));
    CHECK(m.prede == doctest::Approx(0.054 / 2.7 / 4));
    // SS_tot = 0.05, SS_res = 0.054^2
    CHECK(m.r2 == doctest::Approx(1.0 - 0.054 * 0.054 / 0.05));

    const Metrics flat = evaluate_metrics(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.0});
    CHECK_FALSE(flat.r2_defined);
    CHECK(std::isnan(flat.r2));
    CHECK_THROWS(evaluate_metrics(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}));
}

TEST_CASE("objective is zero at the generating parameters and rejects non-positive losses") {
    const MplParams p{2.5, 0.6, 500.0, 0.2, 0.45, 0.8, 0.5};
    const std::vector<FitCurve> data{synth("cos", LawVariant::mpl(), p, make(ScheduleKind::cosine, 2000), 50)};
    CHECK(fit_objective(LawVariant::mpl(), p, data, 1e-2) == doctest::Approx(0.0).scale(1e-20));
    MplParams q = p;
    q.L0 = 2.6;
    CHECK(fit_objective(LawVariant::mpl(), q, data, 1e-2) > 0.0);
    q.L0 = 0.0;
    q.A = 0.0;
    CHECK_THROWS_AS(fit_objective({VariantTag::opl, 0.99}, q, data, 1e-2), std::domain_error);
}

TEST_CASE("one-power law self-recovery from grid init") {
    const MplParams p{2.4, 0.8, 0.0, 1.0, 0.5, 0.5, 0.5};
    const LawVariant v{VariantTag::opl, 0.99};
    const std::vector<FitCurve> data{synth("const", v, p, make(ScheduleKind::constant, 3000), 50),
                                     synth("cos", v, p, make(ScheduleKind::cosine, 3000), 50)};
    FitConfig cfg;
    cfg.steps_per_phase = 4000;
    const FitReport r = fit_law(v, data, cfg);
    CHECK(r.objective < 1e-9);
    CHECK(r.pooled.r2 > 0.9999);
    CHECK(r.phase_best.size() == 2);
    CHECK(r.phase_best[1] <= r.phase_best[0]);
    CHECK(r.params.L0 == doctest::Approx(2.4).epsilon(0.02));
}

TEST_CASE("fit is deterministic for a fixed seed") {
    const MplParams p{2.4, 0.8, 300.0, 0.5, 0.5, 0.5, 0.5};
    const std::vector<FitCurve> data{synth("cos", LawVariant::mpl(), p, make(ScheduleKind::cosine, 2000), 100)};
    FitConfig cfg;
    cfg.steps_per_phase = 300;
    const FitReport a = fit_law(LawVariant::mpl(), data, cfg);
    const FitReport b = fit_law(LawVariant::mpl(), data, cfg);
    CHECK(a.params.to_array() == b.params.to_array());
    CHECK(a.objective == b.objective);
}

TEST_CASE("two-stage reduction fit recovers B, C and beta") {
    std::vector<double> x, ld;
    for (int i = 1; i <= 60; ++i) {
        x.push_back(2.0 * i * i);
        ld.push_back(0.05 * (1.0 - std::pow(0.003 * x.back() + 1.0, -0.6)));
    }
    const TwoStageFit f = fit_two_stage_reduction(x, ld);
    CHECK(f.B == doctest::Approx(0.05).epsilon(0.02));
    CHECK(f.C == doctest::Approx(0.003).epsilon(0.05));
    CHECK(f.beta == doctest::Approx(0.6).epsilon(0.05));
    const TwoStageFit fixed = fit_two_stage_reduction(x, ld, 1e-2, 0.6);
    CHECK(fixed.beta == 0.6);
    CHECK(fixed.C == doctest::Approx(0.003).epsilon(0.02));
}

TEST_CASE("fit config JSON rejects unknown keys and round-trips") {
    FitConfig c;
    c.steps_per_phase = 123;
    c.mtl_lambdas = {0.9};
    const FitConfig back = fit_config_from_json(fit_config_to_json(c));
    CHECK(back.steps_per_phase == 123);
    CHECK(back.mtl_lambdas == std::vector<double>{0.9});
    nlohmann::json j = fit_config_to_json(c);
    j["learning_rate"] = 1.0;
    CHECK_THROWS(fit_config_from_json(j));
}
