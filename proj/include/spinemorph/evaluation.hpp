#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spinemorph/morphometry.hpp"

namespace spinemorph {

/// Mean absolute difference. Throws length-mismatch / empty-input.
double mae(std::span<const double> predicted, std::span<const double> truth);

struct IccResult {
    double value = 0.0;
    /// All cells identical; value is then defined as 1.0.
    bool zero_variance = false;
};

/// ICC(2,1): two-way random effects, absolute agreement, single measurement.
/// Rows are targets, columns raters. Throws insufficient-data.
IccResult icc(const Eigen::MatrixXd& ratings);

inline constexpr const char* kIccForm = "ICC(2,1)";

struct AnnotationRow {
    std::string spine_id;
    std::string label;
    std::string rater_id;
    Dimension dimension = Dimension::kWidthUpper;
    double value_mm = 0.0;
};

struct AnnotationTable {
    std::vector<AnnotationRow> rows;

    /// Sorted, distinct rater ids.
    std::vector<std::string> raters() const;
    /// Throws schema-error on duplicate keys or non-positive values.
    void validate() const;
};

/// Accepts the long format (spine_id,label,rater_id,dimension,value_mm), a
/// wide format (spine_id,label,rater_id,<dimension keys>...), or a
/// ground-truth CSV (spine_id,label,<dimension keys>...) read as a single
/// rater named "ground_truth". Throws schema-error naming a missing column.
AnnotationTable read_annotations(const std::filesystem::path& path);
AnnotationTable parse_annotations(std::string_view csv, const std::string& source = "<memory>");

/// A *.report.json file, or every such file below a directory (sorted).
std::vector<SpineReport> load_predictions(const std::filesystem::path& path);

struct Residual {
    std::string spine_id;
    std::string label;
    Dimension dimension = Dimension::kWidthUpper;
    double predicted = 0.0;
    double reference = 0.0;
    /// predicted - reference
    double residual = 0.0;
};

struct DimensionSummary {
    Dimension dimension = Dimension::kWidthUpper;
    std::size_t n = 0;
    double mae_mm = 0.0;
    /// Present with two or more raters.
    std::optional<IccResult> icc_raters;
    std::optional<IccResult> icc_with_method;
};

struct EvaluationReport {
    std::string icc_form = kIccForm;
    std::vector<std::string> raters;
    std::size_t vertebrae_evaluated = 0;
    std::array<DimensionSummary, kDimensionCount> dimensions;
    double overall_mae_mm = 0.0;
    std::vector<Residual> residuals;
};

/// Reference per (spine, label, dimension) is the rater mean. Vertebrae
/// missing a prediction or any rater's value for a dimension are skipped
/// for that dimension. Throws no-overlap.
EvaluationReport evaluate(const std::vector<SpineReport>& predictions, const AnnotationTable& annotations);

std::string evaluation_to_json(const EvaluationReport& report);
/// dimension,mae_mm,icc_raters,icc_with_method,n
std::string evaluation_to_csv(const EvaluationReport& report);
/// Fixed-width table: one row per dimension plus an overall row.
std::string evaluation_summary(const EvaluationReport& report);

}  // namespace spinemorph
