#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "marc/core.hpp"

namespace marc {

/// Minimal per-question view the metrics operate on.
struct ScoredRecord {
    double confidence = 0.0;
    bool correct = false;
};

inline std::vector<ScoredRecord> scored_view(const std::vector<EvaluationRecord>& records) {
    std::vector<ScoredRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.confidence, r.correct});
    return out;
}

// ---------------------------------------------------------------------------
// Accuracy

inline double accuracy(const std::vector<ScoredRecord>& records) {
    if (records.empty()) raise(Errc::EmptyInput, "accuracy of empty record set");
    std::size_t correct = 0;
    for (const auto& r : records) correct += r.correct ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

inline double mean_confidence(const std::vector<ScoredRecord>& records) {
    if (records.empty()) raise(Errc::EmptyInput, "mean confidence of empty record set");
    double sum = 0.0;
    for (const auto& r : records) sum += r.confidence;
    return sum / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Expected Calibration Error

struct CalibrationBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_confidence = 0.0;  // 0 when empty
    double accuracy = 0.0;         // 0 when empty
};

struct BinnedCalibration {
    std::vector<double> bin_edges;  // num_bins + 1 edges over [0,1]
    std::vector<CalibrationBin> bins;
    double ece = 0.0;
};

/// Bin index under the half-open convention [lo, hi), top bin closed so a
/// confidence of exactly 1.0 stays in range.
inline std::size_t bin_index(double confidence, const std::vector<double>& edges) {
    const std::size_t num_bins = edges.size() - 1;
    for (std::size_t i = 0; i + 1 < num_bins; ++i)
        if (confidence < edges[i + 1]) return i;
    return num_bins - 1;
}

inline BinnedCalibration ece(const std::vector<ScoredRecord>& records, int num_bins = 5) {
    if (records.empty()) raise(Errc::EmptyInput, "ece of empty record set");
    if (num_bins < 1) raise(Errc::BadInput, "ece needs at least one bin");
    for (const auto& r : records)
        if (!(r.confidence >= 0.0 && r.confidence <= 1.0))
            raise(Errc::BadScore, "confidence outside [0,1]");

    BinnedCalibration out;
    out.bin_edges.resize(static_cast<std::size_t>(num_bins) + 1);
    for (int i = 0; i <= num_bins; ++i)
        out.bin_edges[static_cast<std::size_t>(i)] =
            static_cast<double>(i) / static_cast<double>(num_bins);

    std::vector<double> conf_sum(static_cast<std::size_t>(num_bins), 0.0);
    std::vector<std::size_t> correct(static_cast<std::size_t>(num_bins), 0);
    std::vector<std::size_t> count(static_cast<std::size_t>(num_bins), 0);
    for (const auto& r : records) {
        std::size_t b = bin_index(r.confidence, out.bin_edges);
        conf_sum[b] += r.confidence;
        correct[b] += r.correct ? 1 : 0;
        count[b] += 1;
    }

    const double n = static_cast<double>(records.size());
    out.bins.resize(static_cast<std::size_t>(num_bins));
    for (std::size_t b = 0; b < out.bins.size(); ++b) {
        CalibrationBin& bin = out.bins[b];
        bin.lower = out.bin_edges[b];
        bin.upper = out.bin_edges[b + 1];
        bin.count = count[b];
        if (count[b] > 0) {
            bin.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
            bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
            out.ece += (static_cast<double>(count[b]) / n) *
                       std::abs(bin.accuracy - bin.mean_confidence);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// AUROC

/// Mann-Whitney AUROC with midrank tie handling: the probability that a
/// uniformly random correct record outranks a uniformly random incorrect
/// one, ties counted one half.
inline double auroc(const std::vector<ScoredRecord>& records) {
    if (records.empty()) raise(Errc::EmptyInput, "auroc of empty record set");
    std::size_t n_pos = 0;
    for (const auto& r : records) n_pos += r.correct ? 1 : 0;
    const std::size_t n_neg = records.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        raise(Errc::DegenerateLabels, "auroc undefined when all labels agree");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return records[a].confidence < records[b].confidence;
    });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() &&
               records[order[j]].confidence == records[order[i]].confidence)
            ++j;
        // ranks are 1-based; tied block [i, j) shares the midrank
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (records[order[k]].correct) rank_sum_pos += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// ROC staircase from (0,0) to (1,1), one point per distinct confidence,
/// sweeping thresholds downward. Trapezoidal area equals auroc().
inline std::vector<RocPoint> roc_points(const std::vector<ScoredRecord>& records) {
    if (records.empty()) raise(Errc::EmptyInput, "roc of empty record set");
    std::size_t n_pos = 0;
    for (const auto& r : records) n_pos += r.correct ? 1 : 0;
    const std::size_t n_neg = records.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        raise(Errc::DegenerateLabels, "roc undefined when all labels agree");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return records[a].confidence > records[b].confidence;
    });

    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() &&
               records[order[j]].confidence == records[order[i]].confidence)
            ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (records[order[k]].correct)
                ++tp;
            else
                ++fp;
        }
        points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos)});
        i = j;
    }
    return points;
}

inline double trapezoid_area(const std::vector<RocPoint>& points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += 0.5 * (points[i].tpr + points[i - 1].tpr) * (points[i].fpr - points[i - 1].fpr);
    return area;
}

// ---------------------------------------------------------------------------
// Report tables

struct HistogramBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t correct = 0;
    std::size_t incorrect = 0;
    double accuracy = 0.0;         // 0 when empty
    double mean_confidence = 0.0;  // 0 when empty
};

struct ScalarSummary {
    std::size_t n = 0;
    double accuracy = 0.0;
    double ece = 0.0;
    std::optional<double> auroc;  // absent when labels are degenerate
    double mean_confidence = 0.0;
};

struct ReportTables {
    BinnedCalibration reliability;       // the 0.2-width bins behind ECE
    std::vector<HistogramBin> fine_calibration;  // default 0.05-width bins
    std::vector<HistogramBin> confidence_histogram;  // stacked correct/incorrect
    std::vector<RocPoint> roc;           // empty when labels are degenerate
    ScalarSummary summary;
};

namespace detail {

inline std::vector<HistogramBin> histogram(const std::vector<ScoredRecord>& records,
                                           int num_bins) {
    std::vector<double> edges(static_cast<std::size_t>(num_bins) + 1);
    for (int i = 0; i <= num_bins; ++i)
        edges[static_cast<std::size_t>(i)] =
            static_cast<double>(i) / static_cast<double>(num_bins);
    std::vector<HistogramBin> bins(static_cast<std::size_t>(num_bins));
    std::vector<double> conf_sum(static_cast<std::size_t>(num_bins), 0.0);
    for (std::size_t b = 0; b < bins.size(); ++b) {
        bins[b].lower = edges[b];
        bins[b].upper = edges[b + 1];
    }
    for (const auto& r : records) {
        std::size_t b = bin_index(r.confidence, edges);
        if (r.correct)
            ++bins[b].correct;
        else
            ++bins[b].incorrect;
        conf_sum[b] += r.confidence;
    }
    for (std::size_t b = 0; b < bins.size(); ++b) {
        std::size_t total = bins[b].correct + bins[b].incorrect;
        if (total > 0) {
            bins[b].accuracy = static_cast<double>(bins[b].correct) / static_cast<double>(total);
            bins[b].mean_confidence = conf_sum[b] / static_cast<double>(total);
        }
    }
    return bins;
}

}  // namespace detail

/// Builds every report table in one pass over the records. AUROC falls back
/// to absent (not an error) when all records share one label, so reports
/// stay usable on degenerate slices.
inline ReportTables compute_report(const std::vector<ScoredRecord>& records,
                                   double histogram_bin_width = 0.05) {
    if (records.empty()) raise(Errc::EmptyInput, "report of empty record set");
    if (!(histogram_bin_width > 0.0 && histogram_bin_width <= 1.0))
        raise(Errc::BadInput, "histogram bin width outside (0,1]");
    const int fine_bins = static_cast<int>(std::lround(1.0 / histogram_bin_width));

    ReportTables out;
    out.reliability = ece(records);
    out.fine_calibration = detail::histogram(records, fine_bins);
    out.confidence_histogram = out.fine_calibration;
    out.summary.n = records.size();
    out.summary.accuracy = accuracy(records);
    out.summary.ece = out.reliability.ece;
    out.summary.mean_confidence = mean_confidence(records);
    try {
        out.summary.auroc = auroc(records);
        out.roc = roc_points(records);
    } catch (const Error& e) {
        if (e.code() != Errc::DegenerateLabels) throw;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Emission: CSV, JSON, SVG

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string reliability_csv(const BinnedCalibration& cal) {
    std::string out = "bin_lower,bin_upper,count,mean_confidence,accuracy\n";
    for (const auto& b : cal.bins)
        out += fmt_double(b.lower) + "," + fmt_double(b.upper) + "," +
               std::to_string(b.count) + "," + fmt_double(b.mean_confidence) + "," +
               fmt_double(b.accuracy) + "\n";
    return out;
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins, bool with_accuracy) {
    std::string out = with_accuracy
                          ? std::string("bin_lower,bin_upper,count,accuracy,mean_confidence\n")
                          : std::string("bin_lower,bin_upper,correct,incorrect\n");
    for (const auto& b : bins) {
        if (with_accuracy)
            out += fmt_double(b.lower) + "," + fmt_double(b.upper) + "," +
                   std::to_string(b.correct + b.incorrect) + "," + fmt_double(b.accuracy) +
                   "," + fmt_double(b.mean_confidence) + "\n";
        else
            out += fmt_double(b.lower) + "," + fmt_double(b.upper) + "," +
                   std::to_string(b.correct) + "," + std::to_string(b.incorrect) + "\n";
    }
    return out;
}

inline std::string roc_csv(const std::vector<RocPoint>& points) {
    std::string out = "fpr,tpr\n";
    for (const auto& p : points) out += fmt_double(p.fpr) + "," + fmt_double(p.tpr) + "\n";
    return out;
}

// --- tiny SVG renderers ----------------------------------------------------

inline constexpr int kSvgW = 480;
inline constexpr int kSvgH = 360;
inline constexpr int kSvgMargin = 48;

inline double svg_x(double v) { return kSvgMargin + v * (kSvgW - 2 * kSvgMargin); }
inline double svg_y(double v) { return kSvgH - kSvgMargin - v * (kSvgH - 2 * kSvgMargin); }

inline std::string svg_header(const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(kSvgW) + "\" height=\"" + std::to_string(kSvgH) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + std::to_string(kSvgW / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         title + "</text>\n";
    // axes
    s += "<line x1=\"" + fmt_double(svg_x(0)) + "\" y1=\"" + fmt_double(svg_y(0)) +
         "\" x2=\"" + fmt_double(svg_x(1)) + "\" y2=\"" + fmt_double(svg_y(0)) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + fmt_double(svg_x(0)) + "\" y1=\"" + fmt_double(svg_y(0)) +
         "\" x2=\"" + fmt_double(svg_x(0)) + "\" y2=\"" + fmt_double(svg_y(1)) +
         "\" stroke=\"black\"/>\n";
    return s;
}

inline std::string svg_diagonal() {
    return "<line x1=\"" + fmt_double(svg_x(0)) + "\" y1=\"" + fmt_double(svg_y(0)) +
           "\" x2=\"" + fmt_double(svg_x(1)) + "\" y2=\"" + fmt_double(svg_y(1)) +
           "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
}

inline std::string svg_polyline(const std::vector<std::pair<double, double>>& pts,
                                const std::string& color) {
    std::string s = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) s += fmt_double(svg_x(x)) + "," + fmt_double(svg_y(y)) + " ";
    s += "\"/>\n";
    return s;
}

inline std::string svg_reliability(const BinnedCalibration& cal) {
    std::string s = svg_header("Reliability diagram");
    s += svg_diagonal();
    std::vector<std::pair<double, double>> pts;
    for (const auto& b : cal.bins)
        if (b.count > 0) pts.emplace_back(b.mean_confidence, b.accuracy);
    s += svg_polyline(pts, "steelblue");
    for (const auto& [x, y] : pts)
        s += "<circle cx=\"" + fmt_double(svg_x(x)) + "\" cy=\"" + fmt_double(svg_y(y)) +
             "\" r=\"3\" fill=\"steelblue\"/>\n";
    s += "</svg>\n";
    return s;
}

inline std::string svg_roc(const std::vector<RocPoint>& points) {
    std::string s = svg_header("ROC curve");
    s += svg_diagonal();
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : points) pts.emplace_back(p.fpr, p.tpr);
    s += svg_polyline(pts, "firebrick");
    s += "</svg>\n";
    return s;
}

inline std::string svg_stacked_hist(const std::vector<HistogramBin>& bins,
                                    const std::string& title) {
    std::string s = svg_header(title);
    std::size_t max_count = 1;
    for (const auto& b : bins) max_count = std::max(max_count, b.correct + b.incorrect);
    for (const auto& b : bins) {
        double x0 = svg_x(b.lower), x1 = svg_x(b.upper);
        double hc = static_cast<double>(b.correct) / static_cast<double>(max_count);
        double hi = static_cast<double>(b.incorrect) / static_cast<double>(max_count);
        s += "<rect x=\"" + fmt_double(x0) + "\" y=\"" + fmt_double(svg_y(hc)) + "\" width=\"" +
             fmt_double(x1 - x0 - 1) + "\" height=\"" + fmt_double(svg_y(0) - svg_y(hc)) +
             "\" fill=\"steelblue\"/>\n";
        s += "<rect x=\"" + fmt_double(x0) + "\" y=\"" + fmt_double(svg_y(hc + hi)) +
             "\" width=\"" + fmt_double(x1 - x0 - 1) + "\" height=\"" +
             fmt_double(svg_y(hc) - svg_y(hc + hi)) + "\" fill=\"firebrick\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

inline std::string svg_calibration_hist(const std::vector<HistogramBin>& bins) {
    std::string s = svg_header("Calibration histogram");
    s += svg_diagonal();
    for (const auto& b : bins) {
        if (b.correct + b.incorrect == 0) continue;
        double x0 = svg_x(b.lower), x1 = svg_x(b.upper);
        s += "<rect x=\"" + fmt_double(x0) + "\" y=\"" + fmt_double(svg_y(b.accuracy)) +
             "\" width=\"" + fmt_double(x1 - x0 - 1) + "\" height=\"" +
             fmt_double(svg_y(0) - svg_y(b.accuracy)) + "\" fill=\"steelblue\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace detail

inline json summary_json(const ScalarSummary& s) {
    return json{{"n", s.n},
                {"accuracy", s.accuracy},
                {"ece", s.ece},
                {"auroc", s.auroc ? json(*s.auroc) : json(nullptr)},
                {"mean_confidence", s.mean_confidence}};
}

/// Writes summary.json, reliability.csv, calibration_hist.csv,
/// confidence_hist.csv, roc.csv, and (optionally) SVG renders into `dir`.
inline void write_report_dir(const ReportTables& tables, const fs::path& dir,
                             bool with_svg = false) {
    fs::create_directories(dir);
    write_file_atomic(dir / "summary.json", summary_json(tables.summary).dump(2) + "\n");
    write_file_atomic(dir / "reliability.csv", detail::reliability_csv(tables.reliability));
    write_file_atomic(dir / "calibration_hist.csv",
                      detail::histogram_csv(tables.fine_calibration, true));
    write_file_atomic(dir / "confidence_hist.csv",
                      detail::histogram_csv(tables.confidence_histogram, false));
    write_file_atomic(dir / "roc.csv", detail::roc_csv(tables.roc));
    if (with_svg) {
        write_file_atomic(dir / "reliability.svg", detail::svg_reliability(tables.reliability));
        write_file_atomic(dir / "roc.svg", detail::svg_roc(tables.roc));
        write_file_atomic(dir / "confidence_hist.svg",
                          detail::svg_stacked_hist(tables.confidence_histogram,
                                                   "Confidence histogram (correct vs wrong)"));
        write_file_atomic(dir / "calibration_hist.svg",
                          detail::svg_calibration_hist(tables.fine_calibration));
    }
}

/// Computes and emits all report tables for a record set.
inline ReportTables report_tables(const std::vector<ScoredRecord>& records, const fs::path& dir,
                                  double histogram_bin_width = 0.05, bool with_svg = false) {
    ReportTables tables = compute_report(records, histogram_bin_width);
    write_report_dir(tables, dir, with_svg);
    return tables;
}

}  // namespace marc
