#include "mpl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "mpl/rng.hpp"

namespace mpl {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Schedule::Schedule(std::int64_t warmup_steps, double peak_lr, std::vector<double> post_lrs,
                   std::string kind_tag)
    : warmup_steps_(warmup_steps),
      peak_lr_(peak_lr),
      lrs_(std::move(post_lrs)),
      kind_tag_(std::move(kind_tag)) {
    require(warmup_steps_ >= 0, "warmup steps must be nonnegative");
    require(std::isfinite(peak_lr_) && peak_lr_ > 0.0, "peak LR must be positive");
    require(!lrs_.empty(), "schedule needs at least one post-warmup step");
    for (std::size_t i = 0; i < lrs_.size(); ++i) {
        if (!std::isfinite(lrs_[i]) || lrs_[i] < 0.0)
            throw std::invalid_argument(
                fmt::format("LR at step {} is negative or non-finite", i + 1));
    }

    // Neumaier-compensated running sum; keeps S_1(T) at T = 1e5 within a few ulps.
    cumsum_.resize(lrs_.size() + 1);
    cumsum_[0] = 0.0;
    double sum = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < lrs_.size(); ++i) {
        const double x = lrs_[i];
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
        cumsum_[i + 1] = sum + comp;
    }
}

double Schedule::lr(std::int64_t t) const {
    if (t < 0 || t > length())
        throw std::out_of_range(fmt::format("step {} outside [0, {}]", t, length()));
    return t == 0 ? peak_lr_ : lrs_[static_cast<std::size_t>(t - 1)];
}

double Schedule::cumulative_sum(std::int64_t t) const {
    if (t < 0 || t > length())
        throw std::out_of_range(fmt::format("step {} outside [0, {}]", t, length()));
    return cumsum_[static_cast<std::size_t>(t)];
}

double Schedule::prefix_sum(std::int64_t k, std::int64_t t) const {
    if (k < 1 || k > t || t > length())
        throw std::out_of_range(
            fmt::format("S_k(t) needs 1 <= k <= t <= T, got k={} t={} T={}", k, t, length()));
    if (k == t) return lrs_[static_cast<std::size_t>(t - 1)];
    return cumsum_[static_cast<std::size_t>(t)] - cumsum_[static_cast<std::size_t>(k - 1)];
}

double Schedule::equivalent_step(std::int64_t k, std::int64_t t) const {
    if (k == 0) return cumulative_sum(t) / peak_lr_;
    const double eta_k = lr(k);
    if (eta_k == 0.0)
        throw std::domain_error(fmt::format("equivalent step undefined: LR at step {} is zero", k));
    if (k == t) return static_cast<double>(t);
    return static_cast<double>(k - 1) + prefix_sum(k, t) / eta_k;
}

std::vector<double> Schedule::lr_area_at(std::span<const std::int64_t> steps) const {
    std::vector<double> out;
    out.reserve(steps.size());
    std::int64_t prev_step = 0;
    double prev_lr = peak_lr_;
    double area = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const std::int64_t s = steps[i];
        if (s < 1 || s > length())
            throw std::out_of_range(fmt::format("validation step {} outside [1, {}]", s, length()));
        if (s <= prev_step)
            throw std::invalid_argument(
                fmt::format("validation steps must be strictly increasing (index {})", i));
        const double cur_lr = lr(s);
        const auto gap = static_cast<double>(s - prev_step);
        // Discrete trapezoid: exact sum of a linear sequence over (prev_step, s].
        area += gap * 0.5 * (prev_lr + cur_lr) + 0.5 * (cur_lr - prev_lr);
        out.push_back(area);
        prev_step = s;
        prev_lr = cur_lr;
    }
    return out;
}

bool Schedule::is_monotone() const {
    double prev = peak_lr_;
    for (double x : lrs_) {
        if (x > prev) return false;
        prev = x;
    }
    return true;
}

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::cosine: return "cosine";
        case ScheduleKind::wsd_exp: return "wsd";
        case ScheduleKind::wsd_linear: return "wsdld";
        case ScheduleKind::wsd_cosine: return "wsd-cosine";
        case ScheduleKind::wsd_sqrt_cube: return "wsdsc";
        case ScheduleKind::two_stage: return "two-stage";
        case ScheduleKind::multi_stage: return "multi-stage";
        case ScheduleKind::cyclic: return "cyclic";
        case ScheduleKind::random_polyline: return "random-polyline";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    static const std::pair<const char*, ScheduleKind> table[] = {
        {"constant", ScheduleKind::constant},
        {"cosine", ScheduleKind::cosine},
        {"wsd", ScheduleKind::wsd_exp},
        {"wsdld", ScheduleKind::wsd_linear},
        {"wsd-cosine", ScheduleKind::wsd_cosine},
        {"wsdsc", ScheduleKind::wsd_sqrt_cube},
        {"two-stage", ScheduleKind::two_stage},
        {"multi-stage", ScheduleKind::multi_stage},
        {"cyclic", ScheduleKind::cyclic},
        {"random-polyline", ScheduleKind::random_polyline},
    };
    for (const auto& [key, kind] : table)
        if (name == key) return kind;
    throw std::invalid_argument(fmt::format("unknown schedule kind '{}'", name));
}

void StageSpec::validate() const {
    require(stage_lrs.size() >= 1, "multi-stage schedule needs at least one stage");
    require(boundaries.size() == stage_lrs.size() + 1,
            "multi-stage schedule needs n+1 boundaries for n stages");
    require(boundaries.front() >= 0, "stage boundaries must be nonnegative");
    for (std::size_t i = 1; i < boundaries.size(); ++i)
        require(boundaries[i] > boundaries[i - 1], "stage boundaries must be strictly increasing");
    for (std::size_t i = 0; i < stage_lrs.size(); ++i) {
        require(stage_lrs[i] > 0.0, "stage LRs must be positive");
        if (i > 0)
            require(stage_lrs[i] < stage_lrs[i - 1], "stage LRs must be strictly decreasing");
    }
}

namespace {

std::vector<double> wsd_decay(const ScheduleSpec& spec) {
    const std::int64_t T = spec.total_steps;
    const std::int64_t stable = T - spec.decay_steps;
    require(spec.decay_steps >= 1 && stable >= 0, "WSD needs 1 <= decay steps <= T");
    const double peak = spec.peak_lr;
    const double end = spec.end_lr;
    if (spec.kind != ScheduleKind::wsd_sqrt_cube) {
        require(end > 0.0, "WSD end LR must be positive");
        require(end <= peak, "WSD end LR must not exceed the peak");
    }
    std::vector<double> lrs(static_cast<std::size_t>(T));
    const auto span = static_cast<double>(spec.decay_steps);
    for (std::int64_t t = 1; t <= T; ++t) {
        double v = peak;
        if (t > stable) {
            const double tau = static_cast<double>(t - stable) / span;
            switch (spec.kind) {
                case ScheduleKind::wsd_linear: v = peak - (peak - end) * tau; break;
                case ScheduleKind::wsd_exp: v = peak * std::pow(end / peak, tau); break;
                case ScheduleKind::wsd_cosine:
                    v = end + (peak - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * tau));
                    break;
                case ScheduleKind::wsd_sqrt_cube: v = peak * std::pow(1.0 - tau, 1.5); break;
                default: break;
            }
        }
        lrs[static_cast<std::size_t>(t - 1)] = v;
    }
    if (spec.kind != ScheduleKind::wsd_sqrt_cube) lrs.back() = end;
    return lrs;
}

std::vector<double> polyline(const ScheduleSpec& spec) {
    const double lo = spec.low_lr, hi = spec.high_lr;
    require(lo >= 0.0 && lo <= hi, "milestone range must satisfy 0 <= lo <= hi");
    require(spec.peak_lr >= lo && spec.peak_lr <= hi, "peak LR must lie in the milestone range");
    require(spec.milestones >= 0, "milestone count must be nonnegative");
    const std::int64_t T = spec.total_steps;
    CounterRng rng(spec.seed);

    std::vector<std::int64_t> pos{0, T};
    for (std::int64_t i = 0; i < spec.milestones && T > 1; ++i)
        pos.push_back(1 + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(T - 1)));
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    std::vector<double> val(pos.size());
    val[0] = spec.peak_lr;
    for (std::size_t i = 1; i < pos.size(); ++i) val[i] = rng.uniform(lo, hi);

    std::vector<double> lrs(static_cast<std::size_t>(T));
    std::size_t seg = 0;
    for (std::int64_t t = 1; t <= T; ++t) {
        while (pos[seg + 1] < t) ++seg;
        const double w = static_cast<double>(t - pos[seg]) / static_cast<double>(pos[seg + 1] - pos[seg]);
        lrs[static_cast<std::size_t>(t - 1)] = std::clamp(val[seg] + w * (val[seg + 1] - val[seg]), lo, hi);
    }
    return lrs;
}

}  // namespace

Schedule make_schedule(const ScheduleSpec& spec) {
    require(spec.peak_lr > 0.0, "peak LR must be positive");
    std::int64_t T = spec.total_steps;
    std::vector<double> lrs;
    switch (spec.kind) {
        case ScheduleKind::constant:
            require(T >= 1, "T must be at least 1");
            lrs.assign(static_cast<std::size_t>(T), spec.peak_lr);
            break;
        case ScheduleKind::cosine: {
            require(T >= 1, "T must be at least 1");
            const double a = spec.cosine_final_ratio;
            require(a >= 0.0 && a <= 1.0, "cosine final ratio must lie in [0, 1]");
            lrs.resize(static_cast<std::size_t>(T));
            for (std::int64_t t = 1; t <= T; ++t) {
                const double c = std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(T));
                lrs[static_cast<std::size_t>(t - 1)] =
                    0.5 * (1.0 + a) * spec.peak_lr + 0.5 * (1.0 - a) * spec.peak_lr * c;
            }
            lrs.back() = a * spec.peak_lr;
            break;
        }
        case ScheduleKind::wsd_exp:
        case ScheduleKind::wsd_linear:
        case ScheduleKind::wsd_cosine:
        case ScheduleKind::wsd_sqrt_cube:
            require(T >= 1, "T must be at least 1");
            lrs = wsd_decay(spec);
            break;
        case ScheduleKind::two_stage: {
            require(spec.second_lr > 0.0, "second-stage LR must be positive");
            require(spec.second_lr <= spec.peak_lr, "two-stage requires eta_B <= eta_A");
            require(spec.first_stage_steps >= 1 && spec.first_stage_steps < T,
                    "two-stage requires 1 <= T_A < T");
            lrs.assign(static_cast<std::size_t>(T), spec.second_lr);
            std::fill_n(lrs.begin(), spec.first_stage_steps, spec.peak_lr);
            break;
        }
        case ScheduleKind::multi_stage: {
            spec.stages.validate();
            const auto& b = spec.stages.boundaries;
            T = b.back() - b.front();
            lrs.resize(static_cast<std::size_t>(T));
            for (std::size_t i = 0; i + 1 < b.size(); ++i)
                for (std::int64_t t = b[i] + 1; t <= b[i + 1]; ++t)
                    lrs[static_cast<std::size_t>(t - b.front() - 1)] = spec.stages.stage_lrs[i];
            return Schedule(spec.warmup_steps, spec.stages.stage_lrs.front(), std::move(lrs),
                            to_string(spec.kind));
        }
        case ScheduleKind::cyclic: {
            require(T >= 1, "T must be at least 1");
            require(spec.low_lr >= 0.0 && spec.low_lr <= spec.high_lr,
                    "cyclic range must satisfy 0 <= lo <= hi");
            require(spec.cycle_steps >= 2, "cycle length must be at least 2");
            lrs.resize(static_cast<std::size_t>(T));
            const double half = 0.5 * static_cast<double>(spec.cycle_steps);
            for (std::int64_t t = 1; t <= T; ++t) {
                const double phase = std::fmod(static_cast<double>(t), static_cast<double>(spec.cycle_steps));
                const double tri = phase <= half ? phase / half : (2.0 * half - phase) / half;
                lrs[static_cast<std::size_t>(t - 1)] = spec.high_lr - (spec.high_lr - spec.low_lr) * tri;
            }
            return Schedule(spec.warmup_steps, spec.high_lr, std::move(lrs), to_string(spec.kind));
        }
        case ScheduleKind::random_polyline:
            require(T >= 1, "T must be at least 1");
            lrs = polyline(spec);
            break;
    }
    return Schedule(spec.warmup_steps, spec.peak_lr, std::move(lrs), to_string(spec.kind));
}

nlohmann::json spec_to_json(const ScheduleSpec& spec) {
    nlohmann::json j;
    j["kind"] = to_string(spec.kind);
    j["W"] = spec.warmup_steps;
    j["peak_lr"] = spec.peak_lr;
    nlohmann::json p;
    switch (spec.kind) {
        case ScheduleKind::constant: p["T"] = spec.total_steps; break;
        case ScheduleKind::cosine:
            p["T"] = spec.total_steps;
            p["final_ratio"] = spec.cosine_final_ratio;
            break;
        case ScheduleKind::wsd_exp:
        case ScheduleKind::wsd_linear:
        case ScheduleKind::wsd_cosine:
        case ScheduleKind::wsd_sqrt_cube:
            p["T"] = spec.total_steps;
            p["decay_steps"] = spec.decay_steps;
            if (spec.kind != ScheduleKind::wsd_sqrt_cube) p["end_lr"] = spec.end_lr;
            break;
        case ScheduleKind::two_stage:
            p["T"] = spec.total_steps;
            p["first_stage_steps"] = spec.first_stage_steps;
            p["second_lr"] = spec.second_lr;
            break;
        case ScheduleKind::multi_stage:
            p["boundaries"] = spec.stages.boundaries;
            p["stage_lrs"] = spec.stages.stage_lrs;
            break;
        case ScheduleKind::cyclic:
            p["T"] = spec.total_steps;
            p["low_lr"] = spec.low_lr;
            p["high_lr"] = spec.high_lr;
            p["cycle_steps"] = spec.cycle_steps;
            break;
        case ScheduleKind::random_polyline:
            p["T"] = spec.total_steps;
            p["low_lr"] = spec.low_lr;
            p["high_lr"] = spec.high_lr;
            p["milestones"] = spec.milestones;
            p["seed"] = spec.seed;
            break;
    }
    j["params"] = p;
    return j;
}

ScheduleSpec spec_from_json(const nlohmann::json& j) {
    ScheduleSpec s;
    s.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
    s.warmup_steps = j.value("W", std::int64_t{0});
    s.peak_lr = j.value("peak_lr", s.peak_lr);
    const nlohmann::json p = j.contains("params") ? j.at("params") : nlohmann::json::object();
    static const char* known[] = {"T", "final_ratio", "decay_steps", "end_lr", "first_stage_steps",
                                  "second_lr", "boundaries", "stage_lrs", "low_lr", "high_lr",
                                  "cycle_steps", "milestones", "seed"};
    for (const auto& [key, _] : p.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
            std::end(known))
            throw std::invalid_argument(fmt::format("unknown schedule parameter '{}'", key));
    }
    s.total_steps = p.value("T", s.total_steps);
    s.cosine_final_ratio = p.value("final_ratio", s.cosine_final_ratio);
    s.decay_steps = p.value("decay_steps", s.decay_steps);
    s.end_lr = p.value("end_lr", s.end_lr);
    s.first_stage_steps = p.value("first_stage_steps", s.first_stage_steps);
    s.second_lr = p.value("second_lr", s.second_lr);
    if (p.contains("boundaries")) s.stages.boundaries = p.at("boundaries").get<std::vector<std::int64_t>>();
    if (p.contains("stage_lrs")) s.stages.stage_lrs = p.at("stage_lrs").get<std::vector<double>>();
    s.low_lr = p.value("low_lr", s.low_lr);
    s.high_lr = p.value("high_lr", s.high_lr);
    s.cycle_steps = p.value("cycle_steps", s.cycle_steps);
    s.milestones = p.value("milestones", s.milestones);
    s.seed = p.value("seed", s.seed);
    return s;
}

nlohmann::json schedule_to_json(const Schedule& s, const nlohmann::json& params) {
    nlohmann::json j;
    j["kind"] = s.kind_tag();
    j["W"] = s.warmup_steps();
    j["peak_lr"] = s.peak_lr();
    if (!params.is_null()) j["params"] = params;
    j["post_lrs"] = std::vector<double>(s.lrs().begin(), s.lrs().end());
    return j;
}

Schedule schedule_from_json(const nlohmann::json& j) {
    if (j.contains("post_lrs")) {
        return Schedule(j.value("W", std::int64_t{0}), j.at("peak_lr").get<double>(),
                        j.at("post_lrs").get<std::vector<double>>(), j.value("kind", std::string("explicit")));
    }
    return make_schedule(spec_from_json(j));
}

}  // namespace mpl
