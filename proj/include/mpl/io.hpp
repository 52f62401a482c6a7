#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpl/law.hpp"
#include "mpl/schedule.hpp"

namespace mpl {

/// Parsing or validation failure; the message names the file and row.
class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A step,lr,loss table: validation-step LR samples plus the loss curve.
struct CurveFile {
    std::vector<std::int64_t> steps;
    std::vector<double> lrs;
    LossCurve curve;
};

/// Rows are numbered from 1 at the header line.
CurveFile ingest_curve(const std::filesystem::path& path);

void write_curve(const std::filesystem::path& path, std::span<const std::int64_t> steps, std::span<const double> lrs,
                 std::span<const double> losses);

/// Two-column table with a header.
void write_table(const std::filesystem::path& path, const std::string& header_a, const std::string& header_b,
                 std::span<const double> a, std::span<const double> b);

/// Piecewise-linear per-step schedule through (0, peak) and the LR samples.
Schedule polyline_schedule(double peak_lr, std::int64_t warmup_steps, std::span<const std::int64_t> steps,
                           std::span<const double> lrs);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Decimal text with 17 significant digits.
std::string format_double(double x);

}  // namespace mpl
