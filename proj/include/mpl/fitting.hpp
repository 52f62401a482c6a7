#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mpl/law.hpp"

namespace mpl {

enum class InitMode { default_init, grid, explicit_init };

struct FitConfig {
    double delta = 1e-2;
    double lr_index = 5e-3;  // alpha, beta, gamma (logit space)
    double lr_coeff = 5e-2;  // L0, A, B, C (log space)
    std::int64_t steps_per_phase = 50000;
    int phases = 2;
    double phase_lr_scale = 0.1;  // step sizes shrink by this factor per phase
    std::uint64_t seed = 0;
    InitMode init_mode = InitMode::grid;
    MplParams init;              // used by explicit_init
    int multi_start = 8;         // MTL and CDSL
    std::vector<double> mtl_lambdas{0.95, 0.99, 0.995, 0.999, 0.9995};
    std::int64_t trace_every = 100;

    void validate() const;
};

struct Metrics {
    double r2 = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    double prede = 0.0;
    double worste = 0.0;
    bool r2_defined = true;  // false when the ground truth has zero variance
};

/// One training curve together with its law input.
struct FitCurve {
    std::string name;
    LossCurve curve;
    LawInput input;
};

enum class InputMode { exact, compressed };

FitCurve make_fit_curve(std::string name, const Schedule& s, LossCurve curve,
                        InputMode mode = InputMode::compressed);

struct FitReport {
    LawVariant variant;
    MplParams params;
    double objective = 0.0;
    std::vector<std::pair<std::int64_t, double>> trace;  // (iteration, objective)
    std::vector<double> phase_best;                     // best objective after each phase
    std::vector<std::pair<std::string, Metrics>> curve_metrics;
    Metrics pooled;
};

double huber(double r, double delta);
double huber_derivative(double r, double delta);

/// Sum of Huber losses of log residuals over every curve point.
double fit_objective(const LawVariant& v, const MplParams& p, std::span<const FitCurve> data, double delta);

FitReport fit_law(const LawVariant& v, std::span<const FitCurve> data, const FitConfig& cfg);

struct TwoStageFit {
    double B = 0.0;
    double C = 0.0;
    double beta = 0.0;
    double objective = 0.0;
};

/// Fits LD(x) = B (1 - (C x + 1)^-beta) to positive samples in log space.
TwoStageFit fit_two_stage_reduction(std::span<const double> x, std::span<const double> ld, double delta = 1e-2,
                                    std::optional<double> beta_fixed = std::nullopt,
                                    std::int64_t steps = 20000);

Metrics evaluate_metrics(std::span<const double> pred, std::span<const double> gt);

/// Metrics of predictions against each curve and pooled over all points.
void score_curves(const LawVariant& v, const MplParams& p, std::span<const FitCurve> data,
                  std::vector<std::pair<std::string, Metrics>>& per_curve, Metrics& pooled);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json fit_report_to_json(const FitReport& r);
nlohmann::json fit_config_to_json(const FitConfig& c);
/// Unknown keys are errors.
FitConfig fit_config_from_json(const nlohmann::json& j);

}  // namespace mpl
