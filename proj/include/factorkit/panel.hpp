#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace factorkit {

/// How per-series variances are computed when standardizing.
enum class VarianceConvention { population, sample };

/// Per-series statistics recorded by standardize(), sufficient to undo it.
struct StandardizationInfo {
    Eigen::VectorXd means; ///< length N
    Eigen::VectorXd sds;   ///< length N, strictly positive
    VarianceConvention convention = VarianceConvention::population;
};

/// A T x N data panel. Row t is one period, column i is one series.
/// Cells with mask(t,i) == false are missing; their values slot carries a
/// placeholder that estimators never read.
struct Panel {
    Eigen::MatrixXd values;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
    std::vector<std::string> series_names;
    /// Optional per-series transform codes (1..7), empty when not supplied.
    std::vector<int> transform_codes;

    int T() const { return static_cast<int>(values.rows()); }
    int N() const { return static_cast<int>(values.cols()); }
    bool complete() const { return mask.all(); }

    /// Throws ValidationError unless T >= 2, N >= 2, shapes agree and every
    /// column has at least two observed entries.
    void validate() const;
};

/// Standardized data divided by sqrt(N*T). Under the population variance
/// convention the squared Frobenius norm of Z is exactly 1.
struct ScaledData {
    Eigen::MatrixXd Z;
    double scale = 0.0; ///< sqrt(N*T)

    int T() const { return static_cast<int>(Z.rows()); }
    int N() const { return static_cast<int>(Z.cols()); }
};

struct IngestOptions {
    char delimiter = ',';
    /// Tokens treated as missing, compared case-insensitively after trimming.
    std::vector<std::string> missing_tokens = {"", "NA", "NaN"};
    /// When true the row after the header holds per-series transform codes.
    bool codes_row = false;
};

/// Parse an RFC-4180-style CSV (quoted fields, doubled-quote escapes,
/// configurable delimiter). First row is the header of series names.
/// Throws ValidationError for ragged rows (naming the 1-based row),
/// non-numeric cells (naming row and column) and panels that fail validate().
Panel ingest_csv(const std::string& path, const IngestOptions& opts = {});
Panel ingest_csv_text(const std::string& text, const IngestOptions& opts = {});

/// Load transform codes from a sidecar CSV of (series_name, code) pairs.
/// Every series in the panel must be covered exactly once.
void load_transform_codes(Panel& panel, const std::string& path, char delimiter = ',');

/// Apply per-series transforms. Codes: 1 level, 2 first difference,
/// 3 second difference, 4 log, 5 difference of logs, 6 second difference of
/// logs, 7 difference of percent changes. The first rows consumed by the
/// deepest lag are dropped globally so all series share a common sample.
/// Log codes require strictly positive observed values; violations raise
/// ValidationError naming the 1-based cell.
Panel apply_transforms(const Panel& in, const std::vector<int>& codes);
Panel apply_transforms(const Panel& in); ///< uses in.transform_codes

/// Center and scale each series using observed entries only. A series with
/// zero variance raises ValidationError naming it. Idempotent up to
/// floating-point roundoff.
std::pair<Panel, StandardizationInfo>
standardize(const Panel& in, VarianceConvention conv = VarianceConvention::population);

/// Divide a complete standardized panel by sqrt(N*T).
ScaledData scale(const Panel& standardized);

/// Map a matrix in standardized units back to original units:
/// column i is multiplied by sds[i] and shifted by means[i].
Eigen::MatrixXd destandardize(const Eigen::MatrixXd& values, const StandardizationInfo& info);

} // namespace factorkit
