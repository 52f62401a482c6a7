#include "mpl/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace mpl {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

CurveFile ingest_curve(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError(fmt::format("{}: cannot open file", path.string()));
    std::string line;
    std::size_t row = 0;
    std::size_t col_step = 0, col_lr = 0, col_loss = 0;
    bool header = false;
    CurveFile cf;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (!header) {
            bool has_step = false, has_lr = false, has_loss = false;
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (cells[i] == "step") col_step = i, has_step = true;
                else if (cells[i] == "lr") col_lr = i, has_lr = true;
                else if (cells[i] == "loss") col_loss = i, has_loss = true;
            }
            if (!(has_step && has_lr && has_loss))
                throw IngestError(fmt::format("{}: missing header with columns step,lr,loss at row {}", path.string(), row));
            header = true;
            continue;
        }
        const std::size_t need = std::max({col_step, col_lr, col_loss}) + 1;
        if (cells.size() < need)
            throw IngestError(fmt::format("{}: expected {} columns at row {}, got {}", path.string(), need, row, cells.size()));
        std::int64_t step = 0;
        double lr = 0.0, loss = 0.0;
        if (!parse_number(cells[col_step], step))
            throw IngestError(fmt::format("{}: malformed step '{}' at row {}", path.string(), cells[col_step], row));
        if (!parse_number(cells[col_lr], lr) || !std::isfinite(lr))
            throw IngestError(fmt::format("{}: malformed lr '{}' at row {}", path.string(), cells[col_lr], row));
        if (!parse_number(cells[col_loss], loss) || !std::isfinite(loss))
            throw IngestError(fmt::format("{}: malformed loss '{}' at row {}", path.string(), cells[col_loss], row));
        if (step < 1) throw IngestError(fmt::format("{}: non-positive step at row {}", path.string(), row));
        if (!cf.steps.empty() && step == cf.steps.back())
            throw IngestError(fmt::format("{}: duplicate step {} at row {}", path.string(), step, row));
        if (!cf.steps.empty() && step < cf.steps.back())
            throw IngestError(fmt::format("{}: non-monotone step {} at row {}", path.string(), step, row));
        if (lr < 0.0) throw IngestError(fmt::format("{}: negative lr at row {}", path.string(), row));
        if (!(loss > 0.0)) throw IngestError(fmt::format("{}: non-positive loss at row {}", path.string(), row));
        cf.steps.push_back(step);
        cf.lrs.push_back(lr);
        cf.curve.steps.push_back(step);
        cf.curve.losses.push_back(loss);
    }
    if (!header) throw IngestError(fmt::format("{}: missing header with columns step,lr,loss", path.string()));
    if (cf.steps.empty()) throw IngestError(fmt::format("{}: no data rows", path.string()));
    return cf;
}

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

void write_curve(const std::filesystem::path& path, std::span<const std::int64_t> steps, std::span<const double> lrs,
                 std::span<const double> losses) {
    if (steps.size() != lrs.size() || steps.size() != losses.size())
        throw std::invalid_argument("curve columns must have equal length");
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("{}: cannot write file", path.string()));
    out << "step,lr,loss\n";
    for (std::size_t i = 0; i < steps.size(); ++i)
        out << steps[i] << ',' << format_double(lrs[i]) << ',' << format_double(losses[i]) << '\n';
}

void write_table(const std::filesystem::path& path, const std::string& header_a, const std::string& header_b,
                 std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("table columns must have equal length");
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("{}: cannot write file", path.string()));
    out << header_a << ',' << header_b << '\n';
    for (std::size_t i = 0; i < a.size(); ++i) out << format_double(a[i]) << ',' << format_double(b[i]) << '\n';
}

Schedule polyline_schedule(double peak_lr, std::int64_t warmup_steps, std::span<const std::int64_t> steps,
                           std::span<const double> lrs) {
    if (steps.empty() || steps.size() != lrs.size()) throw std::invalid_argument("LR samples must be nonempty and paired");
    std::vector<double> out(static_cast<std::size_t>(steps.back()));
    std::int64_t prev_step = 0;
    double prev_lr = peak_lr;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] <= prev_step) throw std::invalid_argument("LR sample steps must be strictly increasing");
        const auto gap = static_cast<double>(steps[i] - prev_step);
        for (std::int64_t t = prev_step + 1; t <= steps[i]; ++t)
            out[static_cast<std::size_t>(t - 1)] = prev_lr + (lrs[i] - prev_lr) * static_cast<double>(t - prev_step) / gap;
        out[static_cast<std::size_t>(steps[i] - 1)] = lrs[i];
        prev_step = steps[i];
        prev_lr = lrs[i];
    }
    return Schedule(warmup_steps, peak_lr, std::move(out), "polyline");
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("{}: cannot open file", path.string()));
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("{}: cannot write file", path.string()));
    out << j.dump(2) << '\n';
}

}  // namespace mpl
