#include "spinemorph/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "spinemorph/error.hpp"
#include "text_util.hpp"

namespace spinemorph {

namespace {

using Key = std::pair<std::string, std::string>;  // spine_id, label

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// RFC 4180-ish field split; quotes may wrap fields, "" escapes a quote.
std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back(trim(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.emplace_back(trim(field));
    return out;
}

std::optional<Dimension> parse_dimension(std::string_view text) {
    if (auto d = dimension_from_key(text)) return d;
    for (std::size_t i = 0; i < kDimensionCount; ++i)
        if (kDimensionNotation[i] == text) return static_cast<Dimension>(i);
    return std::nullopt;
}

nlohmann::ordered_json icc_json(const std::optional<IccResult>& r) {
    if (!r) return nullptr;
    return {{"value", r->value}, {"zero_variance", r->zero_variance}};
}

std::string icc_cell(const std::optional<IccResult>& r) {
    return r ? detail::format_double(r->value) : std::string{};
}

}  // namespace

double mae(std::span<const double> predicted, std::span<const double> truth) {
    if (predicted.size() != truth.size())
        throw Error(ErrorCode::kLengthMismatch, "mae: " + std::to_string(predicted.size()) + " predictions vs " +
                                                    std::to_string(truth.size()) + " references");
    if (predicted.empty()) throw Error(ErrorCode::kEmptyInput, "mae: no values");
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) sum += std::abs(predicted[i] - truth[i]);
    return sum / static_cast<double>(predicted.size());
}

IccResult icc(const Eigen::MatrixXd& x) {
    const auto n = x.rows();
    const auto k = x.cols();
    if (n < 2 || k < 2)
        throw Error(ErrorCode::kInsufficientData, "icc needs at least 2 targets and 2 raters, got " +
                                                      std::to_string(n) + "x" + std::to_string(k));
    if (!x.allFinite()) throw Error(ErrorCode::kInsufficientData, "icc: missing or non-finite cells");
    if (x.maxCoeff() == x.minCoeff()) return {1.0, true};

    const double nd = static_cast<double>(n), kd = static_cast<double>(k);
    const double grand = x.mean();
    const Eigen::VectorXd row_means = x.rowwise().mean();
    const Eigen::RowVectorXd col_means = x.colwise().mean();
    const double ss_total = (x.array() - grand).square().sum();
    const double ss_rows = kd * (row_means.array() - grand).square().sum();
    const double ss_cols = nd * (col_means.array() - grand).square().sum();
    const double ss_error = ss_total - ss_rows - ss_cols;

    const double ms_rows = ss_rows / (nd - 1.0);
    const double ms_cols = ss_cols / (kd - 1.0);
    const double ms_error = ss_error / ((nd - 1.0) * (kd - 1.0));
    const double denom = ms_rows + (kd - 1.0) * ms_error + kd * (ms_cols - ms_error) / nd;
    const double num = ms_rows - ms_error;
    // The denominator only vanishes for n = k = 2 with no row or column effect.
    if (!(denom > 0.0)) return {num >= 0.0 ? 1.0 : -1.0, false};
    return {std::clamp(num / denom, -1.0, 1.0), false};
}

std::vector<std::string> AnnotationTable::raters() const {
    std::set<std::string> ids;
    for (const auto& r : rows) ids.insert(r.rater_id);
    return {ids.begin(), ids.end()};
}

void AnnotationTable::validate() const {
    std::set<std::tuple<std::string, std::string, std::string, Dimension>> seen;
    for (const auto& r : rows) {
        if (!seen.insert({r.spine_id, r.label, r.rater_id, r.dimension}).second)
            throw Error(ErrorCode::kSchemaError, "duplicate annotation for " + r.spine_id + "/" + r.label +
                                                     " rater " + r.rater_id + " " +
                                                     std::string(kDimensionKeys[static_cast<std::size_t>(r.dimension)]));
        if (!(r.value_mm > 0.0) || !std::isfinite(r.value_mm))
            throw Error(ErrorCode::kSchemaError, "non-positive annotation value for " + r.spine_id + "/" + r.label);
    }
}

AnnotationTable parse_annotations(std::string_view csv, const std::string& source) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> lines;
    std::size_t line_no = 0;
    while (!csv.empty()) {
        const auto nl = csv.find('\n');
        const std::string_view line = csv.substr(0, nl);
        csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
        ++line_no;
        if (trim(line).empty()) continue;
        lines.emplace_back(line_no, split_csv(line));
    }
    if (lines.empty()) throw Error(ErrorCode::kSchemaError, source + ": empty annotation file");

    const auto& header = lines.front().second;
    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    auto require = [&](std::string_view name) {
        if (auto c = column(name)) return *c;
        throw Error(ErrorCode::kSchemaError, source + ": missing column '" + std::string(name) + "'");
    };
    auto cell = [&](const std::pair<std::size_t, std::vector<std::string>>& line, std::size_t col) {
        if (col >= line.second.size())
            throw Error(ErrorCode::kSchemaError,
                        source + ":" + std::to_string(line.first) + ": too few fields");
        return line.second[col];
    };
    auto number = [&](const std::pair<std::size_t, std::vector<std::string>>& line, std::size_t col) {
        double v = 0.0;
        const std::string text = cell(line, col);
        if (!detail::parse_double(text, v))
            throw Error(ErrorCode::kSchemaError,
                        source + ":" + std::to_string(line.first) + ": bad value '" + text + "'");
        return v;
    };

    AnnotationTable table;
    const std::size_t spine_col = require("spine_id");
    const std::size_t label_col = require("label");
    const bool long_format = column("dimension") || column("value_mm");
    if (long_format) {
        const std::size_t rater_col = require("rater_id");
        const std::size_t dim_col = require("dimension");
        const std::size_t value_col = require("value_mm");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto& line = lines[i];
            const std::string dim_text = cell(line, dim_col);
            const auto dim = parse_dimension(dim_text);
            if (!dim)
                throw Error(ErrorCode::kSchemaError,
                            source + ":" + std::to_string(line.first) + ": unknown dimension '" + dim_text + "'");
            table.rows.push_back(
                {cell(line, spine_col), cell(line, label_col), cell(line, rater_col), *dim, number(line, value_col)});
        }
    } else {
        const auto rater_col = column("rater_id");
        std::array<std::size_t, kDimensionCount> dim_cols{};
        for (std::size_t d = 0; d < kDimensionCount; ++d) dim_cols[d] = require(kDimensionKeys[d]);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto& line = lines[i];
            const std::string rater = rater_col ? cell(line, *rater_col) : std::string("ground_truth");
            for (std::size_t d = 0; d < kDimensionCount; ++d)
                table.rows.push_back({cell(line, spine_col), cell(line, label_col), rater,
                                      static_cast<Dimension>(d), number(line, dim_cols[d])});
        }
    }
    table.validate();
    return table;
}

AnnotationTable read_annotations(const std::filesystem::path& path) {
    return parse_annotations(detail::read_file(path), path.string());
}

std::vector<SpineReport> load_predictions(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec))
        throw Error(ErrorCode::kFileNotFound, path.string() + ": no such file or directory");
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
        for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
            const std::string name = entry.path().filename().string();
            if (entry.is_regular_file() && name.size() > 12 && name.ends_with(".report.json"))
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw Error(ErrorCode::kFileNotFound, path.string() + ": no *.report.json files");
    } else {
        files.push_back(path);
    }
    std::vector<SpineReport> reports;
    for (const auto& f : files) {
        try {
            reports.push_back(report_from_json(detail::read_file(f)));
        } catch (const Error& e) {
            throw Error(e.code(), f.string() + ": " + e.what());
        }
    }
    return reports;
}

EvaluationReport evaluate(const std::vector<SpineReport>& predictions, const AnnotationTable& annotations) {
    annotations.validate();
    EvaluationReport report;
    report.raters = annotations.raters();
    const std::size_t k = report.raters.size();
    std::map<std::string, std::size_t> rater_index;
    for (std::size_t i = 0; i < k; ++i) rater_index[report.raters[i]] = i;

    // (spine, label) -> dimension -> per-rater values (NaN when absent)
    std::map<Key, std::array<std::vector<double>, kDimensionCount>> refs;
    for (const auto& row : annotations.rows) {
        auto& slot = refs[{row.spine_id, row.label}][static_cast<std::size_t>(row.dimension)];
        if (slot.empty()) slot.assign(k, std::nan(""));
        slot[rater_index[row.rater_id]] = row.value_mm;
    }

    std::map<Key, Measurements> preds;
    for (const auto& spine : predictions)
        for (const auto& v : spine.vertebrae)
            if (v.ok()) preds[{spine.spine_id, v.label}] = *v.measurements;

    std::set<Key> evaluated;
    double overall_sum = 0.0;
    std::size_t overall_n = 0;
    for (std::size_t d = 0; d < kDimensionCount; ++d) {
        DimensionSummary& summary = report.dimensions[d];
        summary.dimension = static_cast<Dimension>(d);
        std::vector<double> predicted, reference;
        std::vector<const std::vector<double>*> rater_rows;
        for (const auto& [key, per_dim] : refs) {
            const auto p = preds.find(key);
            const auto& values = per_dim[d];
            if (p == preds.end() || values.empty()) continue;
            if (std::any_of(values.begin(), values.end(), [](double v) { return std::isnan(v); })) continue;
            double sum = 0.0;
            for (double v : values) sum += v;
            const double ref = sum / static_cast<double>(k);
            const double pred = p->second.values[d];
            predicted.push_back(pred);
            reference.push_back(ref);
            rater_rows.push_back(&values);
            report.residuals.push_back({key.first, key.second, summary.dimension, pred, ref, pred - ref});
            evaluated.insert(key);
        }
        summary.n = predicted.size();
        if (summary.n == 0) continue;
        summary.mae_mm = mae(predicted, reference);
        for (std::size_t i = 0; i < summary.n; ++i) overall_sum += std::abs(predicted[i] - reference[i]);
        overall_n += summary.n;

        if (summary.n >= 2) {
            Eigen::MatrixXd with_method(static_cast<Eigen::Index>(summary.n), static_cast<Eigen::Index>(k + 1));
            for (std::size_t i = 0; i < summary.n; ++i) {
                for (std::size_t r = 0; r < k; ++r)
                    with_method(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = (*rater_rows[i])[r];
                with_method(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = predicted[i];
            }
            if (k >= 2) summary.icc_raters = icc(with_method.leftCols(static_cast<Eigen::Index>(k)));
            summary.icc_with_method = icc(with_method);
        }
    }
    if (evaluated.empty())
        throw Error(ErrorCode::kNoOverlap, "no (spine_id, label) pair has both a successful prediction and annotations");
    report.vertebrae_evaluated = evaluated.size();
    report.overall_mae_mm = overall_sum / static_cast<double>(overall_n);
    return report;
}

std::string evaluation_to_json(const EvaluationReport& report) {
    nlohmann::ordered_json doc;
    doc["icc_form"] = report.icc_form;
    doc["raters"] = report.raters;
    doc["vertebrae_evaluated"] = report.vertebrae_evaluated;
    doc["overall_mae_mm"] = report.overall_mae_mm;
    nlohmann::ordered_json dims = nlohmann::ordered_json::object();
    for (const auto& s : report.dimensions) {
        dims[std::string(kDimensionKeys[static_cast<std::size_t>(s.dimension)])] = {
            {"n", s.n},
            {"mae_mm", s.mae_mm},
            {"icc_raters", icc_json(s.icc_raters)},
            {"icc_with_method", icc_json(s.icc_with_method)}};
    }
    doc["dimensions"] = std::move(dims);
    nlohmann::ordered_json residuals = nlohmann::ordered_json::array();
    for (const auto& r : report.residuals)
        residuals.push_back({{"spine_id", r.spine_id},
                             {"label", r.label},
                             {"dimension", std::string(kDimensionKeys[static_cast<std::size_t>(r.dimension)])},
                             {"predicted_mm", r.predicted},
                             {"reference_mm", r.reference},
                             {"residual_mm", r.residual}});
    doc["residuals"] = std::move(residuals);
    return doc.dump(2) + "\n";
}

std::string evaluation_to_csv(const EvaluationReport& report) {
    std::string out = "dimension,mae_mm,icc_raters,icc_with_method,n\n";
    for (const auto& s : report.dimensions) {
        out += std::string(kDimensionKeys[static_cast<std::size_t>(s.dimension)]) + ',' +
               detail::format_double(s.mae_mm) + ',' + icc_cell(s.icc_raters) + ',' + icc_cell(s.icc_with_method) +
               ',' + std::to_string(s.n) + '\n';
    }
    return out;
}

std::string evaluation_summary(const EvaluationReport& report) {
    std::string out;
    char buf[160];
    auto icc_text = [](const std::optional<IccResult>& r) {
        if (!r) return std::string("-");
        char b[32];
        std::snprintf(b, sizeof b, "%.2f%s", r->value, r->zero_variance ? "!" : "");
        return std::string(b);
    };
    std::snprintf(buf, sizeof buf, "%-18s %-10s %8s %10s %10s %5s\n", "dimension", "landmarks", "MAE[mm]",
                  report.icc_form.c_str(), (report.icc_form + "*").c_str(), "n");
    out += buf;
    for (const auto& s : report.dimensions) {
        const auto i = static_cast<std::size_t>(s.dimension);
        std::snprintf(buf, sizeof buf, "%-18s %-10s %8.2f %10s %10s %5zu\n", std::string(kDimensionKeys[i]).c_str(),
                      std::string(kDimensionNotation[i]).c_str(), s.mae_mm, icc_text(s.icc_raters).c_str(),
                      icc_text(s.icc_with_method).c_str(), s.n);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "%-18s %-10s %8.2f %10s %10s %5zu\n", "overall", "", report.overall_mae_mm, "", "",
                  report.vertebrae_evaluated);
    out += buf;
    out += "* raters plus method; ! zero variance\n";
    return out;
}

}  // namespace spinemorph
