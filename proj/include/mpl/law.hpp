#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpl/schedule.hpp"

namespace mpl {

/// Parameter order used by every 7-vector in this library.
enum ParamIndex : std::size_t { kL0 = 0, kA, kB, kC, kAlpha, kBeta, kGamma, kNumParams };

using ParamVec = std::array<double, kNumParams>;

struct MplParams {
    double L0 = 0.0;
    double A = 0.0;
    double B = 0.0;
    double C = 1.0;
    double alpha = 0.5;
    double beta = 0.5;
    double gamma = 0.5;

    ParamVec to_array() const { return {L0, A, B, C, alpha, beta, gamma}; }
    static MplParams from_array(const ParamVec& v) { return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]}; }
};

const char* param_name(std::size_t index);

enum class VariantTag { mpl, opl, lldl, no_gamma, spl, mel, mtl, cdsl };

struct LawVariant {
    VariantTag tag = VariantTag::mpl;
    double lambda = 0.99;  // MTL only

    static LawVariant mpl() { return {VariantTag::mpl, 0.99}; }
    static LawVariant mtl(double lambda) { return {VariantTag::mtl, lambda}; }
};

std::string to_string(VariantTag tag);
VariantTag variant_tag_from_string(const std::string& name);

/// Parameters that enter the variant's formula; the rest are ignored.
std::array<bool, kNumParams> active_params(VariantTag tag);

/// Parameters constrained to (0, 1) when fitted.
bool is_exponent(std::size_t index);

struct LossCurve {
    std::vector<std::int64_t> steps;
    std::vector<double> losses;

    void validate() const;
};

/// A schedule reduced to what the law needs at a set of evaluation steps.
///
/// Each change point carries an LR drop, the LR right after it, and S_1 just
/// before it, so S_k(t) = eval.s1 - change.s1_before. Change points are sorted
/// by step and n_changes[i] counts those at or before evals[i].
struct LawInput {
    struct ChangePoint {
        std::int64_t step;
        double drop;
        double eta;
        double s1_before;
    };
    struct EvalPoint {
        std::int64_t step;
        double eta;
        double s1;
    };

    double peak_lr = 0.0;
    double warmup_sum = 0.0;
    std::vector<ChangePoint> changes;
    std::vector<EvalPoint> evals;
    std::vector<std::size_t> n_changes;

    /// Every nonzero per-step drop becomes its own change point. Exact.
    static LawInput exact(const Schedule& s, std::span<const std::int64_t> steps);

    /// Drops between consecutive evaluation steps are lumped at their
    /// drop-weighted centroid step. Exact for step schedules, and for any
    /// schedule when evaluated at every step. Segments whose drops change sign
    /// keep per-step change points.
    static LawInput compressed(const Schedule& s, std::span<const std::int64_t> steps);
};

/// G(x) = 1 - (Cx + 1)^(-beta).
double g_saturation(double x, double C, double beta);

/// LD(t) = B * sum_k (eta_{k-1} - eta_k) G(eta_k^-gamma S_k(t)), by direct summation.
double loss_reduction(const MplParams& p, const Schedule& s, std::int64_t t);

std::vector<double> predict(const LawVariant& v, const MplParams& p, const LawInput& in);
std::vector<double> predict(const LawVariant& v, const MplParams& p, const Schedule& s,
                            std::span<const std::int64_t> steps);

/// Predictions plus per-evaluation partials with respect to all seven parameters.
/// Partials of inactive parameters are zero.
void predict_with_gradient(const LawVariant& v, const MplParams& p, const LawInput& in,
                           std::vector<double>& pred, std::vector<ParamVec>& grad);

std::vector<ParamVec> predict_gradient(const MplParams& p, const Schedule& s,
                                       std::span<const std::int64_t> steps);

/// S_2(t) = sum_{i<=t} sum_{k<=i} (eta_{k-1} - eta_k) lambda^(i-k), brute force O(t^2).
double mtl_double_sum(double lambda, const Schedule& s, std::int64_t t);

/// Closed form of the same quantity, sum_k (eta_{k-1} - eta_k)(1 - lambda^(t-k+1)) / (1 - lambda).
double mtl_closed_form(double lambda, const Schedule& s, std::int64_t t);

void validate_params(const LawVariant& v, const MplParams& p);

nlohmann::json params_to_json(const LawVariant& v, const MplParams& p);
MplParams params_from_json(const nlohmann::json& j, LawVariant* variant = nullptr);

}  // namespace mpl
