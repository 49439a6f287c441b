#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "marc/metrics.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace marc;
using test::oracle_auroc;
using test::oracle_ece;

namespace {

std::vector<ScoredRecord> random_records(std::mt19937_64& gen, std::size_t n, bool tied_grid) {
    return test::random_scored_records(gen, n, tied_grid);
}

}  // namespace

TEST_CASE("accuracy is the fraction of correct records") {
    REQUIRE(accuracy({{0.5, true}, {0.5, true}}) == 1.0);
    REQUIRE(accuracy({{0.1, false}, {0.2, false}, {0.3, false}, {0.4, false}, {0.5, false}}) ==
            0.0);

    std::vector<ScoredRecord> table1;
    for (int i = 0; i < 250; ++i) table1.push_back({0.5, i < 148});
    REQUIRE(accuracy(table1) == Catch::Approx(0.592).margin(1e-12));

    REQUIRE_THROWS_AS(accuracy({}), Error);
}

TEST_CASE("ece known cases") {
    SECTION("dyadic perfect calibration is exactly zero") {
        // bin [0.2,0.4): conf 0.25, 1 of 4 correct; bin [0.6,0.8): conf 0.75, 3 of 4
        std::vector<ScoredRecord> records = {{0.25, true},  {0.25, false}, {0.25, false},
                                             {0.25, false}, {0.75, true},  {0.75, true},
                                             {0.75, true},  {0.75, false}};
        REQUIRE(ece(records).ece == 0.0);
    }

    SECTION("single occupied bin equals |accuracy - confidence|") {
        std::vector<ScoredRecord> records;
        for (int i = 0; i < 8; ++i) records.push_back({0.75, i < 4});
        REQUIRE(ece(records).ece == 0.25);  // dyadic, exact

        std::vector<ScoredRecord> nine;
        for (int i = 0; i < 10; ++i) nine.push_back({0.9, i < 5});
        REQUIRE(ece(nine).ece == Catch::Approx(0.4).margin(1e-12));
    }

    SECTION("bin edges follow the half-open convention with a closed top") {
        BinnedCalibration cal = ece({{0.2, true}, {1.0, true}, {0.19, false}});
        REQUIRE(cal.bins[0].count == 1);  // 0.19
        REQUIRE(cal.bins[1].count == 1);  // 0.2
        REQUIRE(cal.bins[4].count == 1);  // 1.0
    }

    SECTION("input validation") {
        REQUIRE_THROWS_AS(ece({}), Error);
        try {
            ece({{1.4, true}});
            FAIL("expected BadScore");
        } catch (const Error& e) {
            REQUIRE(e.code() == Errc::BadScore);
        }
    }
}

TEST_CASE("ece matches the per-record oracle on random suites") {
    std::mt19937_64 gen(2025);
    for (int suite = 0; suite < 20; ++suite) {
        auto records = random_records(gen, 1000, suite % 2 == 0);
        REQUIRE(ece(records).ece == Catch::Approx(oracle_ece(records, 5)).margin(1e-12));
        REQUIRE(ece(records, 20).ece ==
                Catch::Approx(oracle_ece(records, 20)).margin(1e-12));
    }
}

TEST_CASE("ece is invariant to record order") {
    std::mt19937_64 gen(77);
    auto records = random_records(gen, 500, false);
    double base = ece(records).ece;
    for (int p = 0; p < 5; ++p) {
        for (std::size_t i = records.size(); i > 1; --i)
            std::swap(records[i - 1], records[gen() % i]);
        REQUIRE(ece(records).ece == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("auroc known cases") {
    SECTION("perfect separation is 1") {
        std::vector<ScoredRecord> records = {{0.9, true}, {0.9, true}, {0.1, false}, {0.1, false}};
        REQUIRE(auroc(records) == 1.0);
    }
    SECTION("identical confidences are pure ties at 0.5") {
        std::vector<ScoredRecord> records = {{0.7, true}, {0.7, false}, {0.7, true}, {0.7, false}};
        REQUIRE(auroc(records) == 0.5);
    }
    SECTION("degenerate labels raise") {
        try {
            auroc({{0.5, true}, {0.6, true}});
            FAIL("expected DegenerateLabels");
        } catch (const Error& e) {
            REQUIRE(e.code() == Errc::DegenerateLabels);
        }
    }
    SECTION("invariant under strictly increasing transforms") {
        std::mt19937_64 gen(11);
        auto records = random_records(gen, 300, true);
        double base = auroc(records);
        auto squashed = records;
        for (auto& r : squashed) r.confidence = r.confidence * r.confidence * 0.5 + 0.1;
        REQUIRE(auroc(squashed) == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("auroc matches the pairwise oracle with deliberate ties") {
    std::mt19937_64 gen(31415);
    for (int suite = 0; suite < 10; ++suite) {
        auto records = random_records(gen, 400 + (gen() % 200), true);
        REQUIRE(auroc(records) == Catch::Approx(oracle_auroc(records)).margin(1e-9));
    }
}

TEST_CASE("roc staircase runs (0,0) to (1,1) and integrates to auroc") {
    std::mt19937_64 gen(2718);

    SECTION("perfect separation passes through (0,1)") {
        std::vector<ScoredRecord> records = {{0.9, true}, {0.8, true}, {0.2, false}, {0.1, false}};
        auto points = roc_points(records);
        REQUIRE(points.front().fpr == 0.0);
        REQUIRE(points.front().tpr == 0.0);
        bool hits_corner = false;
        for (const auto& p : points)
            if (p.fpr == 0.0 && p.tpr == 1.0) hits_corner = true;
        REQUIRE(hits_corner);
        REQUIRE(points.back().fpr == 1.0);
        REQUIRE(points.back().tpr == 1.0);
    }

    SECTION("all-equal confidences collapse to the diagonal segment") {
        std::vector<ScoredRecord> records = {{0.5, true}, {0.5, false}, {0.5, true}, {0.5, false}};
        auto points = roc_points(records);
        REQUIRE(points.size() == 2);
        REQUIRE(points[1].fpr == 1.0);
        REQUIRE(points[1].tpr == 1.0);
        REQUIRE(trapezoid_area(points) == 0.5);
    }

    SECTION("trapezoid area equals auroc on random suites") {
        for (int suite = 0; suite < 10; ++suite) {
            auto records = random_records(gen, 500, suite % 2 == 0);
            REQUIRE(trapezoid_area(roc_points(records)) ==
                    Catch::Approx(auroc(records)).margin(1e-12));
        }
    }
}

TEST_CASE("report tables summarize and emit all artifacts") {
    std::mt19937_64 gen(5);

    SECTION("overconfident records concentrate in the top histogram bins") {
        std::vector<ScoredRecord> records;
        for (int i = 0; i < 100; ++i)
            records.push_back({0.88 + 0.01 * static_cast<double>(i % 10), i % 2 == 0});
        ReportTables tables = compute_report(records);
        std::size_t top_mass = 0;
        for (const auto& b : tables.confidence_histogram)
            if (b.lower >= 0.85) top_mass += b.correct + b.incorrect;
        REQUIRE(top_mass == records.size());
        REQUIRE(tables.summary.mean_confidence > 0.85);
    }

    SECTION("uniform confidences spread across the 20 fine bins") {
        std::vector<ScoredRecord> records;
        std::size_t n = 10000;
        for (std::size_t i = 0; i < n; ++i)
            records.push_back({test::random_unit(gen), gen() % 2 == 0});
        ReportTables tables = compute_report(records);
        REQUIRE(tables.fine_calibration.size() == 20);
        // expected 500 per bin; allow 2 sigma ~ 2*sqrt(10000*.05*.95) ~ 44
        for (const auto& b : tables.fine_calibration) {
            double count = static_cast<double>(b.correct + b.incorrect);
            REQUIRE(count > 500.0 - 2.0 * 43.6);
            REQUIRE(count < 500.0 + 2.0 * 43.6);
        }
    }

    SECTION("empty input raises EmptyInput") {
        REQUIRE_THROWS_AS(compute_report({}), Error);
    }

    SECTION("degenerate labels leave auroc absent instead of failing") {
        std::vector<ScoredRecord> records = {{0.5, true}, {0.9, true}};
        ReportTables tables = compute_report(records);
        REQUIRE_FALSE(tables.summary.auroc.has_value());
        REQUIRE(tables.roc.empty());
        REQUIRE(tables.summary.accuracy == 1.0);
    }

    SECTION("write_report_dir emits the documented files") {
        test::TempDir dir("metrics_report");
        auto records = random_records(gen, 200, false);
        report_tables(records, dir.path() / "report", 0.05, true);
        for (const char* name :
             {"summary.json", "reliability.csv", "calibration_hist.csv", "confidence_hist.csv",
              "roc.csv", "reliability.svg", "roc.svg", "confidence_hist.svg",
              "calibration_hist.svg"})
            REQUIRE(fs::exists(dir.path() / "report" / name));

        json summary = json::parse(read_file(dir.path() / "report" / "summary.json"));
        REQUIRE(summary.at("n").get<std::size_t>() == records.size());
        REQUIRE(summary.contains("accuracy"));
        REQUIRE(summary.contains("ece"));
        REQUIRE(summary.contains("auroc"));
        REQUIRE(summary.contains("mean_confidence"));
    }
}
