#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mpl {

/// Post-warmup learning-rate schedule.
///
/// Step 0 is the last warmup step and carries the peak LR; steps 1..T are
/// the stored per-step values. Immutable after construction.
class Schedule {
public:
    Schedule() = default;
    Schedule(std::int64_t warmup_steps, double peak_lr, std::vector<double> post_lrs,
             std::string kind_tag = "explicit");

    std::int64_t warmup_steps() const { return warmup_steps_; }
    double peak_lr() const { return peak_lr_; }
    std::int64_t length() const { return static_cast<std::int64_t>(lrs_.size()); }
    const std::string& kind_tag() const { return kind_tag_; }
    std::span<const double> lrs() const { return lrs_; }

    /// LR at step t in [0, T]; step 0 returns the peak.
    double lr(std::int64_t t) const;

    /// LR sum of the linear warmup, 0.5 * peak * W.
    double warmup_sum() const { return 0.5 * peak_lr_ * static_cast<double>(warmup_steps_); }

    /// S_1(t), with S_1(0) = 0.
    double cumulative_sum(std::int64_t t) const;

    /// S_k(t) = sum of lr(k..t). Requires 1 <= k <= t <= T.
    double prefix_sum(std::int64_t k, std::int64_t t) const;

    /// Equal-LR-sum step of the k-th auxiliary process: k - 1 + S_k(t) / lr(k).
    /// k = 0 gives the constant process, S_1(t) / peak.
    double equivalent_step(std::int64_t k, std::int64_t t) const;

    /// Trapezoidal LR-sum surrogate evaluated at increasing validation steps.
    std::vector<double> lr_area_at(std::span<const std::int64_t> steps) const;

    bool is_monotone() const;

private:
    std::int64_t warmup_steps_ = 0;
    double peak_lr_ = 0.0;
    std::vector<double> lrs_;
    std::vector<double> cumsum_;  // cumsum_[t] = S_1(t), cumsum_[0] = 0
    std::string kind_tag_;
};

enum class ScheduleKind {
    constant,
    cosine,
    wsd_exp,
    wsd_linear,
    wsd_cosine,
    wsd_sqrt_cube,
    two_stage,
    multi_stage,
    cyclic,
    random_polyline,
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Stage layout for multi-stage schedules: stage i covers steps
/// (boundaries[i], boundaries[i+1]] at stage_lrs[i].
struct StageSpec {
    std::vector<std::int64_t> boundaries;
    std::vector<double> stage_lrs;

    void validate() const;
};

/// Kind-specific construction parameters. Fields unused by a kind are ignored.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::constant;
    std::int64_t total_steps = 1;  // T
    std::int64_t warmup_steps = 0; // W
    double peak_lr = 3e-4;

    double cosine_final_ratio = 0.1;  // alpha_end
    double end_lr = 3e-5;             // WSD family
    std::int64_t decay_steps = 0;     // WSD family: T - T_stable

    double second_lr = 9e-5;          // two-stage eta_B
    std::int64_t first_stage_steps = 0;  // two-stage T_A

    StageSpec stages;

    double low_lr = 3e-5;             // cyclic / random polyline
    double high_lr = 3e-4;
    std::int64_t cycle_steps = 1000;
    std::int64_t milestones = 8;
    std::uint64_t seed = 0;
};

Schedule make_schedule(const ScheduleSpec& spec);

nlohmann::json spec_to_json(const ScheduleSpec& spec);
ScheduleSpec spec_from_json(const nlohmann::json& j);

/// Structured record {kind, W, peak_lr, params?, post_lrs}. The explicit array
/// always round-trips bit-exactly.
nlohmann::json schedule_to_json(const Schedule& s, const nlohmann::json& params = nullptr);
Schedule schedule_from_json(const nlohmann::json& j);

}  // namespace mpl
