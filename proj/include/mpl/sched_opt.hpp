#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mpl/law.hpp"
#include "mpl/schedule.hpp"

namespace mpl {

struct OptConfig {
    std::int64_t T = 24000;
    std::int64_t warmup_steps = 2160;
    double eta0 = 3e-4;
    double step_size = 1e-8;
    std::int64_t iters = 50000;
    double eps_clamp = 1e-10;
    std::uint64_t seed = 0;  // the optimizer is deterministic; kept for run records
    std::int64_t trace_every = 1000;
    std::vector<double> step_size_grid{2e-8, 1e-8, 5e-9, 2e-9, 1e-9};

    void validate() const;
};

struct OptResult {
    Schedule schedule;
    double final_loss = 0.0;
    double step_size = 0.0;
    std::vector<std::pair<std::int64_t, double>> trace;  // (iteration, best loss so far)
};

struct PhaseReport {
    std::int64_t T_stable = 0;      // last step with eta_t >= (1 - tol) eta_0
    std::int64_t decay_start = 0;   // start of the fitted power decay
    bool has_decay = false;
    double decay_exponent = 0.0;    // NaN when there is no decay phase
    double final_lr_ratio = 1.0;
};

/// Final-step prediction together with its gradient with respect to
/// Delta_t = eta_{t-1} - eta_t. Supports MPL, NoGamma, OPL and MTL.
double final_loss_and_gradient(const LawVariant& v, const MplParams& p, double eta0, double warmup_sum,
                               std::span<const double> delta, std::vector<double>* grad);

/// Adam on Delta from zero initialization with projection after every step:
/// Delta clipped to [0, eta0], truncated so eta stays nonnegative, and once
/// eta_t <= eps the LR is set to zero from there on. Returns the best schedule seen.
OptResult optimize_schedule(const LawVariant& v, const MplParams& p, const OptConfig& cfg);

/// Runs optimize_schedule for every step size of the grid and keeps the best.
OptResult optimize_schedule_grid(const LawVariant& v, const MplParams& p, const OptConfig& cfg);

double predicted_final_loss(const LawVariant& v, const MplParams& p, const Schedule& s);

/// Flat phase by tolerance; decay exponent by least squares of log(eta/eta0)
/// against log(1 - tau) over points with eta >= floor_frac * eta0, with the
/// decay start chosen to minimize the residual.
PhaseReport detect_phases(const Schedule& s, double tol = 0.02, double floor_frac = 0.2);

nlohmann::json phase_report_to_json(const PhaseReport& r);
OptConfig opt_config_from_json(const nlohmann::json& j);

}  // namespace mpl
