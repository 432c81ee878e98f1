#pragma once

#include "qbsde/backward.hpp"
#include "qbsde/oracle.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qbsde {

struct StudyConfig {
    std::string model = "d2_fig1";
    std::vector<int> n_list{5, 10, 20, 40};
    std::vector<double> alpha_list{0.25};
    std::vector<TruncationMode> modes{TruncationMode::adaptive};
    /// Unset values fall back to the model's lattice defaults.
    std::optional<int> M;
    std::optional<double> delta;
    std::optional<int> kappa;
    /// Used by the fixed truncation mode.
    double fixed_N = 1.0;
    double fixed_R = 1.0;
    RadiusRule radius_rule = RadiusRule::proportional;
    int workers = 1;
    int reference_nodes = 64;
    /// When false the runtime column is left empty, which makes the CSV a
    /// pure function of the configuration.
    bool timing = true;
    std::string csv_path;
    std::string plot_path;
};

/// Throws Error for an empty or non-increasing n_list, an unknown model,
/// empty mode/alpha lists or a negative alpha.
void validate(const StudyConfig& config);

struct StudyRow {
    int n = 0;
    double h = 0.0;
    /// Empty unless the row ran in adaptive mode.
    std::optional<double> alpha;
    std::string truncation;
    double y0_scheme = 0.0;
    double y0_reference = 0.0;
    /// Empty for diverged rows.
    std::optional<double> abs_error;
    std::optional<double> rel_error;
    std::optional<double> runtime_ms;
    bool diverged = false;

    bool operator==(const StudyRow&) const = default;
};

enum class FitStatus { fitted, exact, undefined };

std::string to_string(FitStatus status);

struct SeriesFit {
    std::string label;
    FitStatus status = FitStatus::undefined;
    /// Negated log-log slope of |error| against n over non-diverged rows.
    std::optional<double> rate;
    std::size_t rows_used = 0;
};

struct StudyResult {
    std::vector<StudyRow> rows;
    ReferenceValue reference;
    std::vector<SeriesFit> fits;
};

/// Series label of a row: the mode name, or "alpha=<value>" when the study
/// varies alpha.
std::string series_label(const StudyRow& row, bool by_alpha);

/// Fits the rate of every series (per mode, or per alpha when by_alpha).
/// A series whose errors are all <= 1e-12 is reported as exact; fewer than
/// two usable rows leave the rate undefined.
std::vector<SeriesFit> fit_series(const std::vector<StudyRow>& rows, bool by_alpha);

/// One row per (n, mode, alpha); writes csv_path and plot_path when set.
/// Throws Error when every row diverged.
StudyResult run_convergence(const StudyConfig& config);

/// Per-alpha profiles on d1_alpha (or config.model) in adaptive mode.
StudyResult run_alpha_study(const StudyConfig& config);

/// Alpha study defaults: d1_alpha, alpha in {0, 1/8, 1/4, 3/8, 5/8},
/// n up to 250.
StudyConfig alpha_study_defaults();

struct Table1Entry {
    std::string model;
    double reference = 0.0;
    bool reference_converged = false;
    SolveResult adaptive;
    SolveResult untruncated;
    double adaptive_rel_error = 0.0;
    double untruncated_rel_error = 0.0;
};

struct Table1Options {
    int n = 12;
    double alpha = 0.25;
    std::optional<int> M;
    std::optional<double> delta;
    std::optional<int> kappa;
    int workers = 1;
    std::vector<std::string> models{"model_I", "model_II", "model_III", "model_IV"};
};

std::vector<Table1Entry> run_table1(const Table1Options& options);

/// Fixed-width text rendering of the table.
std::string format_table1(const std::vector<Table1Entry>& table);

/// JSON rendering of the table.
std::string table1_json(const std::vector<Table1Entry>& table);

inline constexpr const char* kCsvHeader =
    "n,h,alpha,truncation,y0_scheme,y0_reference,abs_error,rel_error,runtime_ms,diverged";

/// Rows as CSV text, floats at 17 significant digits.
std::string format_csv(const std::vector<StudyRow>& rows);
/// Throws Error for an empty row set or an unwritable path.
void emit_csv(const std::vector<StudyRow>& rows, const std::string& path);
/// Throws Error naming the line for malformed input.
std::vector<StudyRow> parse_csv_text(const std::string& text);
std::vector<StudyRow> parse_csv(const std::string& path);

/// Log-log SVG of |error| against n, one polyline per series. Errors above
/// cap (and diverged rows) are drawn at cap.
std::string format_plot(const std::vector<StudyRow>& rows, bool by_alpha, double cap);
void emit_plot(const std::vector<StudyRow>& rows, const std::string& path, bool by_alpha,
               double cap);

}  // namespace qbsde
