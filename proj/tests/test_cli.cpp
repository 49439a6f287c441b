// End-to-end CLI workflow checks: curate -> subset -> run -> report over a
// fully scripted mock backend, plus exit-code conventions.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "marc/dataset.hpp"
#include "marc/harness.hpp"
#include "support/canonical.hpp"
#include "support/test_util.hpp"

using namespace marc;

namespace {

int run_cli(const std::string& args, const fs::path& log) {
    std::string cmd = std::string(MARC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct CliFixture {
    explicit CliFixture(const fs::path& dir) : root(dir) {
        fs::create_directories(root);

        // 8-question medqa-format source; gold always B
        std::ofstream src(root / "source.jsonl");
        for (int i = 0; i < 8; ++i) {
            json row = {
                {"question", "CLI case [cli-" + std::to_string(i) + "] with findings."},
                {"options",
                 {{"A", "option alpha"}, {"B", "option beta"}, {"C", "option gamma"},
                  {"D", "option delta"}}},
                {"answer_idx", "B"},
            };
            src << row.dump() << '\n';
        }
        src.close();

        // scripted mock: curation letters alternate disagreement/agreement;
        // respiratory consults alternate correct (B) / wrong (A)
        std::ofstream script(root / "script.jsonl");
        for (int i = 0; i < 8; ++i) {
            std::string tag = "[cli-" + std::to_string(i) + "]";
            bool disagreement = i % 2 == 0;
            for (Specialty s : kAllSpecialties) {
                std::string letter =
                    disagreement && s == Specialty::Neurology ? "B" : "A";
                script << json{{"stage", "curation_letter"},
                               {"match", json::array(
                                             {tag, std::string(specialty_prompt_phrase(s))})},
                               {"response", letter}}
                              .dump()
                       << '\n';
            }
            std::string answer = i % 2 == 0 ? "B" : "A";
            std::string conf = i % 2 == 0 ? "0.9" : "0.8";
            script << json{{"stage", "specialist_answer"},
                           {"match", json::array({tag, "respiratory medicine"})},
                           {"response", "ANSWER: " + answer + "\nCONFIDENCE: " + conf +
                                            "\nREASONING: scripted rationale " + tag + "."}}
                          .dump()
                   << '\n';

            // verification trio for the respiratory agent (C2 runs)
            std::string vq = "[vq cli-" + std::to_string(i) + "]";
            std::string questions = "VERIFICATION_QUESTIONS:\n";
            for (int j = 1; j <= 4; ++j)
                questions += std::to_string(j) + ". Point " + std::to_string(j) + " of " + vq +
                             "?\n";
            std::string answers = "ANSWERS:\n";
            for (int j = 1; j <= 4; ++j)
                answers += std::to_string(j) + ". stable shared verification reading " +
                           std::to_string(j) + "\n";
            script << json{{"stage", "verify_questions"},
                           {"match", json::array({tag, "scripted rationale"})},
                           {"response", questions}}
                          .dump()
                   << '\n';
            script << json{{"stage", "verify_independent"},
                           {"match", vq},
                           {"response", answers}}
                          .dump()
                   << '\n';
            script << json{{"stage", "verify_reference"}, {"match", vq}, {"response", answers}}
                          .dump()
                   << '\n';
        }
        script.close();

        BackendConfig backend;
        backend.kind = BackendKind::ScriptedMock;
        backend.script_path = (root / "script.jsonl").string();
        write_file_atomic(root / "backend.json", json(backend).dump(2) + "\n");
    }

    std::string backend_arg() const { return (root / "backend.json").string(); }
    fs::path root;
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    test::TempDir dir("cli_usage");
    REQUIRE(run_cli("curate --dataset medqa", dir.path() / "log1") == 2);  // missing flags
    REQUIRE(run_cli("no-such-command", dir.path() / "log2") == 2);
    REQUIRE(run_cli("run --subset x --backend y --config C9 --out z", dir.path() / "log3") == 2);
    REQUIRE(run_cli("--help", dir.path() / "log4") == 0);
    REQUIRE(run_cli("--version", dir.path() / "log5") == 0);
}

TEST_CASE("curate, subset, run, report work end to end") {
    test::TempDir dir("cli_flow");
    CliFixture fx(dir.path() / "fx");

    // curate with early-stop targets 3,2 -> processes exactly 5 questions
    fs::path curation_dir = dir.path() / "curation";
    REQUIRE(run_cli("curate --dataset medqa --input " + (fx.root / "source.jsonl").string() +
                        " --backend " + fx.backend_arg() + " --out " + curation_dir.string() +
                        " --targets 3,2",
                    dir.path() / "curate.log") == 0);
    auto curation = read_jsonl<CurationRecord>(curation_dir / "curation.jsonl");
    REQUIRE(curation.size() == 5);
    REQUIRE(fs::exists(curation_dir / "curation_questions.jsonl"));

    // subset is deterministic for a fixed seed
    fs::path subset_a = dir.path() / "subset_a.jsonl";
    fs::path subset_b = dir.path() / "subset_b.jsonl";
    std::string subset_args = "subset --curation " + (curation_dir / "curation.jsonl").string() +
                              " --size 3 --seed 11 --quotas 2,1 --out ";
    REQUIRE(run_cli(subset_args + subset_a.string(), dir.path() / "subset1.log") == 0);
    REQUIRE(run_cli(subset_args + subset_b.string(), dir.path() / "subset2.log") == 0);
    REQUIRE(read_file(subset_a) == read_file(subset_b));
    REQUIRE(read_jsonl<QuestionRecord>(subset_a).size() == 3);
    json subset_meta = json::parse(read_file(subset_a.string() + ".meta.json"));
    REQUIRE(subset_meta.at("high_disagreement_quota") == 2);
    REQUIRE(subset_meta.at("agreement_quota") == 1);

    // quotas beyond the pool exit 1 with a message
    REQUIRE(run_cli("subset --curation " + (curation_dir / "curation.jsonl").string() +
                        " --size 100 --seed 1 --quotas 90,10 --out " +
                        (dir.path() / "too_big.jsonl").string(),
                    dir.path() / "subset3.log") == 1);
    REQUIRE(read_file(dir.path() / "subset3.log").find("InsufficientPool") != std::string::npos);

    // run C1 over the subset with the weighted-average variant
    fs::path run_dir = dir.path() / "run";
    REQUIRE(run_cli("run --subset " + subset_a.string() + " --config C1 --backend " +
                        fx.backend_arg() + " --variant wavg --out " + run_dir.string(),
                    dir.path() / "run.log") == 0);
    auto records = read_jsonl<EvaluationRecord>(records_path(run_dir, ConfigId::C1));
    REQUIRE(records.size() == 3);
    for (const auto& rec : records) REQUIRE(rec.llm_calls == 1);

    json manifest = json::parse(read_file(run_dir / "run_manifest.json"));
    REQUIRE(manifest.at("s_score_variant") == "weighted_average");
    REQUIRE(manifest.at("s_score_alpha") == 0.65);
    REQUIRE(manifest.at("subset_meta").at("agreement_quota") == 1);  // the recorded split

    // rerunning without --resume refuses; with --resume it is a no-op
    REQUIRE(run_cli("run --subset " + subset_a.string() + " --config C1 --backend " +
                        fx.backend_arg() + " --out " + run_dir.string(),
                    dir.path() / "rerun.log") == 1);
    std::string before = test::canonical_records(records_path(run_dir, ConfigId::C1));
    REQUIRE(run_cli("run --subset " + subset_a.string() + " --config C1 --backend " +
                        fx.backend_arg() + " --resume --out " + run_dir.string(),
                    dir.path() / "resume.log") == 0);
    REQUIRE(test::canonical_records(records_path(run_dir, ConfigId::C1)) == before);

    // report: byte-identical tables on repeat, SVGs on demand
    fs::path report_a = dir.path() / "report_a";
    fs::path report_b = dir.path() / "report_b";
    std::string records_arg = records_path(run_dir, ConfigId::C1).string();
    REQUIRE(run_cli("report --records " + records_arg + " --out " + report_a.string() + " --svg",
                    dir.path() / "report1.log") == 0);
    REQUIRE(run_cli("report --records " + records_arg + " --out " + report_b.string(),
                    dir.path() / "report2.log") == 0);

    fs::path tables_a = report_a / "records_C1";
    fs::path tables_b = report_b / "records_C1";
    for (const char* name :
         {"summary.json", "reliability.csv", "calibration_hist.csv", "confidence_hist.csv",
          "roc.csv"})
        REQUIRE(read_file(tables_a / name) == read_file(tables_b / name));
    for (const char* name :
         {"reliability.svg", "roc.svg", "confidence_hist.svg", "calibration_hist.svg"})
        REQUIRE(fs::exists(tables_a / name));

    // run-time report tables match the offline rebuild byte for byte
    for (const char* name : {"summary.json", "reliability.csv", "roc.csv"})
        REQUIRE(read_file(tables_a / name) ==
                read_file(report_dir(run_dir, ConfigId::C1) / name));

    // a second config plus two-file report -> side-by-side comparison table
    REQUIRE(run_cli("run --subset " + subset_a.string() + " --config C2 --backend " +
                        fx.backend_arg() + " --resume --out " + run_dir.string(),
                    dir.path() / "run_c2.log") == 0);
    fs::path side = dir.path() / "side_by_side";
    REQUIRE(run_cli("report --records " + records_arg + " " +
                        records_path(run_dir, ConfigId::C2).string() + " --out " + side.string(),
                    dir.path() / "report3.log") == 0);
    REQUIRE(fs::exists(side / "comparison.csv"));
    auto lines = split_lines(read_file(side / "comparison.csv"));
    REQUIRE(lines.size() >= 3);
}

TEST_CASE("report exits 1 on corrupt records") {
    test::TempDir dir("cli_corrupt");
    std::ofstream bad(dir.path() / "records.jsonl");
    bad << R"({"question_id":"x")" << '\n';
    bad.close();
    REQUIRE(run_cli("report --records " + (dir.path() / "records.jsonl").string() + " --out " +
                        (dir.path() / "out").string(),
                    dir.path() / "log") == 1);
    REQUIRE(read_file(dir.path() / "log").find("CorruptRecords") != std::string::npos);
}
