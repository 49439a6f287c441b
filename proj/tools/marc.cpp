// marc: multi-agent consistency-verified QA pipeline over any
// OpenAI-compatible chat endpoint (or a deterministic scripted mock).
//
// Workflows:
//   marc curate  — letter-only disagreement sweep over a source dataset
//   marc subset  — build a seeded evaluation subset from curation output
//   marc run     — execute ablation configs C1-C4 over a subset
//   marc report  — rebuild metric tables (and SVGs) from record files

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "marc/dataset.hpp"
#include "marc/harness.hpp"

namespace {

using namespace marc;

BackendConfig load_backend_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        raise(Errc::FormatError, "backend config " + path + ": " + e.what());
    }
    BackendConfig cfg = j.get<BackendConfig>();
    cfg.validate();
    return cfg;
}

std::pair<int, int> parse_targets(const std::string& s) {
    auto comma = s.find(',');
    if (comma == std::string::npos)
        raise(Errc::BadInput, "expected '<disagreement>,<agreement>', got '" + s + "'");
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
}

int cmd_curate(const std::string& dataset, const std::string& input,
               const std::string& backend_path, const std::string& out_dir,
               const std::string& targets) {
    LoadResult loaded = dataset == "medqa" ? load_medqa(input) : load_medmcqa(input);
    std::cout << "loaded " << loaded.records.size() << " questions from " << input << " ("
              << loaded.dropped_rows << " rows dropped)\n";

    Backend backend(load_backend_config(backend_path));
    auto [target_d, target_a] = parse_targets(targets);
    CurationStopRule stop{target_d, target_a};

    fs::create_directories(out_dir);
    fs::path curation_path = fs::path(out_dir) / "curation.jsonl";
    int progress = 0;
    CurationOutcome outcome =
        curate(loaded.records, backend, stop, curation_path, [&](const CurationRecord&) {
            if (++progress % 50 == 0) std::cout << "curated " << progress << " questions...\n";
        });

    // Sidecar with the source questions for every curated id, so subset
    // construction needs no second pass over the raw dataset.
    std::map<std::string, const QuestionRecord*> by_id;
    for (const auto& q : loaded.records) by_id[q.id] = &q;
    std::vector<QuestionRecord> curated_questions;
    for (const auto& rec : outcome.records) {
        auto it = by_id.find(rec.question_id);
        if (it != by_id.end()) curated_questions.push_back(*it->second);
    }
    write_jsonl(fs::path(out_dir) / "curation_questions.jsonl", curated_questions);

    std::cout << "curation finished: " << outcome.processed << " questions processed, "
              << outcome.disagreement_count << " high-disagreement, " << outcome.agreement_count
              << " agreement" << (outcome.stopped_early ? " (early stop)" : "") << "\n";
    std::cout << "wrote " << curation_path.string() << "\n";
    return 0;
}

int cmd_subset(const std::string& curation_path, const std::string& questions_path, int size,
               std::uint64_t seed, const std::string& quotas, const std::string& out_path) {
    auto curation = read_jsonl<CurationRecord>(curation_path);
    fs::path qpath = questions_path.empty()
                         ? fs::path(curation_path).parent_path() / "curation_questions.jsonl"
                         : fs::path(questions_path);
    auto questions = read_jsonl<QuestionRecord>(qpath);

    SubsetSpec spec = SubsetSpec::for_size(size, seed);
    if (!quotas.empty()) {
        auto [d, a] = parse_targets(quotas);
        spec.high_disagreement_quota = d;
        spec.agreement_quota = a;
    }
    spec.validate();

    std::vector<QuestionRecord> subset = build_subset(join_pool(curation, questions), spec);
    write_jsonl(out_path, subset);

    // deterministic sidecar describing the draw; `marc run` copies it into
    // the run manifest
    json meta = {{"size", spec.size},
                 {"seed", spec.seed},
                 {"high_disagreement_quota", spec.high_disagreement_quota},
                 {"agreement_quota", spec.agreement_quota},
                 {"curation_path", curation_path},
                 {"curation_hash", sha256_hex(read_file(curation_path))}};
    write_file_atomic(out_path + ".meta.json", meta.dump(2) + "\n");

    std::cout << "wrote " << subset.size() << " questions to " << out_path << " ("
              << spec.high_disagreement_quota << " high-disagreement + " << spec.agreement_quota
              << " agreement, seed " << seed << ")\n";
    return 0;
}

struct RunFlagState {
    bool variant_set = false;
    bool alpha_set = false;
    bool parallel_set = false;
};

int cmd_run(const std::string& subset_path, const std::string& config_arg,
            const std::string& backend_path, std::string variant_arg, double alpha,
            const std::string& out_dir, int parallel, bool resume_flag,
            const RunFlagState& flags) {
    std::vector<ConfigId> config_ids;
    if (config_arg == "all")
        config_ids = {ConfigId::C1, ConfigId::C2, ConfigId::C3, ConfigId::C4};
    else
        config_ids = {config_from_name(config_arg)};

    std::vector<QuestionRecord> subset = read_jsonl<QuestionRecord>(subset_path);
    for (const auto& q : subset) validate_question(q);

    // The config file may carry run settings under "run"; explicit flags win.
    json file_json;
    try {
        file_json = json::parse(read_file(backend_path));
    } catch (const json::exception& e) {
        raise(Errc::FormatError, "backend config " + backend_path + ": " + e.what());
    }
    std::string knowledge_context;
    if (file_json.contains("run")) {
        const json& run = file_json.at("run");
        if (!flags.variant_set && run.contains("variant"))
            variant_arg = run.at("variant").get<std::string>();
        if (!flags.alpha_set && run.contains("alpha")) alpha = run.at("alpha").get<double>();
        if (!flags.parallel_set && run.contains("parallel"))
            parallel = run.at("parallel").get<int>();
        knowledge_context = run.value("knowledge_context", "");
    }

    SScoreVariant variant = SScoreVariant::from_cli_name(variant_arg);
    variant.alpha = alpha;  // flag value, file value, or the 0.65 default
    variant.validate();

    fs::create_directories(out_dir);
    std::vector<RunConfig> configs;
    for (ConfigId id : config_ids) {
        RunConfig cfg;
        cfg.config = id;
        cfg.variant = variant;
        cfg.backend = load_backend_config(backend_path);
        cfg.subset_path = subset_path;
        cfg.output_dir = out_dir;
        cfg.max_parallel_questions = parallel;
        cfg.knowledge_context = knowledge_context;
        if (!resume_flag && fs::exists(records_path(out_dir, id)))
            raise(Errc::BadInput, records_path(out_dir, id).string() +
                                      " already exists; pass --resume to continue it");
        configs.push_back(std::move(cfg));
    }

    std::vector<RunReport> reports = run_ablation(subset, configs);
    for (const auto& r : reports) {
        std::printf("%s: n=%zu acc=%.4f ece=%.4f", std::string(config_name(r.config)).c_str(),
                    r.n_scored, r.summary.accuracy, r.summary.ece);
        if (r.summary.auroc) std::printf(" auroc=%.4f", *r.summary.auroc);
        std::printf(" avg_conf=%.4f failed=%zu wall=%.1fs\n", r.summary.mean_confidence,
                    r.n_failed, static_cast<double>(r.wall_time_ms) / 1000.0);
    }
    std::cout << "records and reports under " << out_dir << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& records_paths, const std::string& out_dir,
               bool svg) {
    fs::create_directories(out_dir);
    std::vector<RunReport> reports;
    for (const std::string& path : records_paths) {
        std::vector<EvaluationRecord> records = load_existing_records(path);
        if (records.empty()) raise(Errc::EmptyInput, path + " holds no records");
        ReportTables tables = compute_report(scored_view(records));
        fs::path dir = fs::path(out_dir) / fs::path(path).stem();
        write_report_dir(tables, dir, svg);
        std::cout << "wrote " << dir.string() << "\n";

        RunReport r;
        r.config = records.front().config;
        r.n_scored = records.size();
        r.summary = tables.summary;
        for (const auto& rec : records) r.wall_time_ms += rec.wall_time_ms;
        reports.push_back(r);
    }
    if (reports.size() > 1) {
        write_file_atomic(fs::path(out_dir) / "comparison.csv",
                          marc::detail::comparison_csv(reports, true));
        std::cout << "wrote " << (fs::path(out_dir) / "comparison.csv").string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"marc: multi-specialist QA with consistency-verified confidence"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(marc::kToolkitVersion));

    // curate
    auto* curate_cmd = app.add_subcommand("curate", "letter-only disagreement sweep");
    std::string dataset, input, backend_path, out_dir, targets = "220,60";
    curate_cmd->add_option("--dataset", dataset, "source dataset format")
        ->required()
        ->check(CLI::IsMember({"medqa", "medmcqa"}));
    curate_cmd->add_option("--input", input, "source JSONL file")->required();
    curate_cmd->add_option("--backend", backend_path, "backend config JSON")->required();
    curate_cmd->add_option("--out", out_dir, "output directory")->required();
    curate_cmd->add_option("--targets", targets, "early-stop targets <disagreement>,<agreement>");

    // subset
    auto* subset_cmd = app.add_subcommand("subset", "build a seeded evaluation subset");
    std::string curation_path, questions_path, quotas, subset_out;
    int size = 250;
    std::uint64_t seed = 0;
    subset_cmd->add_option("--curation", curation_path, "curation.jsonl from `marc curate`")
        ->required();
    subset_cmd->add_option("--questions", questions_path,
                           "questions sidecar (default: curation_questions.jsonl next to "
                           "--curation)");
    subset_cmd->add_option("--size", size, "subset size")->required();
    subset_cmd->add_option("--seed", seed, "sampling/shuffle seed");
    subset_cmd->add_option("--quotas", quotas, "override quotas <disagreement>,<agreement>");
    subset_cmd->add_option("--out", subset_out, "output subset JSONL")->required();

    // run
    auto* run_cmd = app.add_subcommand("run", "execute ablation configurations");
    std::string subset_path, run_config_arg = "all", run_backend, variant_arg = "mult", run_out;
    double alpha = 0.65;
    int parallel = 1;
    bool resume_flag = false;
    run_cmd->add_option("--subset", subset_path, "subset JSONL")->required();
    run_cmd->add_option("--config", run_config_arg, "C1|C2|C3|C4|all")
        ->check(CLI::IsMember({"C1", "C2", "C3", "C4", "all"}));
    run_cmd->add_option("--backend", run_backend, "backend config JSON")->required();
    run_cmd->add_option("--variant", variant_arg, "s-score variant mult|wavg|pure")
        ->check(CLI::IsMember({"mult", "wavg", "pure"}));
    run_cmd->add_option("--alpha", alpha, "weighted-average alpha");
    run_cmd->add_option("--out", run_out, "output directory")->required();
    run_cmd->add_option("--parallel", parallel, "max questions in flight");
    run_cmd->add_flag("--resume", resume_flag, "continue a partial run directory");

    // report
    auto* report_cmd = app.add_subcommand("report", "rebuild metric tables from records");
    std::vector<std::string> records_paths;
    std::string report_out;
    bool svg = false;
    report_cmd->add_option("--records", records_paths, "records JSONL file(s)")
        ->required()
        ->expected(-1);
    report_cmd->add_option("--out", report_out, "output directory")->required();
    report_cmd->add_flag("--svg", svg, "also render SVG charts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // 2 = usage error, 0 = --help/--version
    }

    try {
        if (curate_cmd->parsed())
            return cmd_curate(dataset, input, backend_path, out_dir, targets);
        if (subset_cmd->parsed())
            return cmd_subset(curation_path, questions_path, size, seed, quotas, subset_out);
        if (run_cmd->parsed()) {
            RunFlagState flags;
            flags.variant_set = run_cmd->count("--variant") > 0;
            flags.alpha_set = run_cmd->count("--alpha") > 0;
            flags.parallel_set = run_cmd->count("--parallel") > 0;
            return cmd_run(subset_path, run_config_arg, run_backend, variant_arg, alpha, run_out,
                           parallel, resume_flag, flags);
        }
        if (report_cmd->parsed()) return cmd_report(records_paths, report_out, svg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
