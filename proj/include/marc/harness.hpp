#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "marc/agents.hpp"
#include "marc/backend.hpp"
#include "marc/core.hpp"
#include "marc/fusion.hpp"
#include "marc/metrics.hpp"
#include "marc/prompt_assets.hpp"
#include "marc/verification.hpp"

namespace marc {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    ConfigId config = ConfigId::C4;
    SScoreVariant variant;
    SimilarityConfig similarity;
    BackendConfig backend;
    std::string subset_path;
    std::string output_dir;
    int max_parallel_questions = 1;
    Specialty baseline_specialist = Specialty::Respiratory;
    std::string knowledge_context;

    void validate() const {
        variant.validate();
        similarity.validate();
        backend.validate();
        if (max_parallel_questions < 1)
            raise(Errc::BadInput, "max_parallel_questions must be >= 1");
    }

    bool uses_all_specialists() const {
        return config == ConfigId::C3 || config == ConfigId::C4;
    }
    bool uses_verification() const {
        return config == ConfigId::C2 || config == ConfigId::C4;
    }
};

// ---------------------------------------------------------------------------
// Single-question execution

namespace detail {

struct SpecialistWork {
    SpecialistResponse response;
    std::optional<VerificationTrace> trace;
};

inline SpecialistWork run_specialist(Specialty specialty, const QuestionRecord& question,
                                     const RunConfig& cfg, ChatClient& backend) {
    SpecialistWork work;
    work.response = consult(specialty, question, backend, cfg.knowledge_context);
    if (cfg.uses_verification())
        work.trace = verify(question, work.response, cfg.variant, cfg.similarity, backend);
    return work;
}

}  // namespace detail

/// Executes one question under one ablation configuration.
///   C1: baseline specialist alone, confidence = initial confidence.
///   C2: baseline specialist + verification, confidence = S-score.
///   C3: four specialists fused with S = initial confidence.
///   C4: four specialists, verification, S-score weighted fusion.
inline EvaluationRecord run_question(const QuestionRecord& question, const RunConfig& cfg,
                                     ChatClient& backend) {
    const auto start = std::chrono::steady_clock::now();
    EvaluationRecord rec;
    rec.question_id = question.id;
    rec.config = cfg.config;

    std::vector<Specialty> team;
    if (cfg.uses_all_specialists())
        team.assign(kAllSpecialties.begin(), kAllSpecialties.end());
    else
        team.push_back(cfg.baseline_specialist);

    // Specialists are independent; run them concurrently and collect in
    // fixed specialty order so records never depend on completion timing.
    std::vector<std::future<detail::SpecialistWork>> futures;
    futures.reserve(team.size());
    for (Specialty s : team)
        futures.push_back(std::async(std::launch::async, [&, s] {
            return detail::run_specialist(s, question, cfg, backend);
        }));

    int llm_calls = 0;
    for (auto& f : futures) {
        detail::SpecialistWork work = f.get();
        llm_calls += 1;
        if (work.trace) llm_calls += work.trace->backend_calls;
        rec.specialist_responses.push_back(std::move(work.response));
        if (work.trace) rec.verification_traces.push_back(std::move(*work.trace));
    }

    switch (cfg.config) {
        case ConfigId::C1: {
            rec.predicted = rec.specialist_responses[0].answer;
            rec.confidence = rec.specialist_responses[0].initial_confidence;
            break;
        }
        case ConfigId::C2: {
            rec.predicted = rec.specialist_responses[0].answer;
            rec.confidence = rec.verification_traces[0].s_score;
            break;
        }
        case ConfigId::C3: {
            std::vector<FusionInput> inputs;
            for (const auto& r : rec.specialist_responses)
                inputs.push_back({r.answer, r.initial_confidence});
            rec.fusion = fuse(inputs, static_cast<int>(team.size()));
            rec.predicted = rec.fusion->final_answer;
            rec.confidence = rec.fusion->calibrated_confidence;
            break;
        }
        case ConfigId::C4: {
            std::vector<FusionInput> inputs;
            for (std::size_t i = 0; i < rec.specialist_responses.size(); ++i)
                inputs.push_back(
                    {rec.specialist_responses[i].answer, rec.verification_traces[i].s_score});
            rec.fusion = fuse(inputs, static_cast<int>(team.size()));
            rec.predicted = rec.fusion->final_answer;
            rec.confidence = rec.fusion->calibrated_confidence;
            break;
        }
    }

    rec.correct = rec.predicted == question.gold;
    rec.llm_calls = llm_calls;
    rec.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    return rec;
}

// ---------------------------------------------------------------------------
// Persistence and resume

struct QuestionFailure {
    std::string question_id;
    std::string error;
};

inline void to_json(json& j, const QuestionFailure& v) {
    j = json{{"question_id", v.question_id}, {"error", v.error}};
}

inline void from_json(const json& j, QuestionFailure& v) {
    v.question_id = j.at("question_id").get<std::string>();
    v.error = j.at("error").get<std::string>();
}

inline fs::path records_path(const fs::path& output_dir, ConfigId config) {
    return output_dir / ("records_" + std::string(config_name(config)) + ".jsonl");
}

inline fs::path failures_path(const fs::path& output_dir, ConfigId config) {
    return output_dir / ("failures_" + std::string(config_name(config)) + ".jsonl");
}

inline fs::path report_dir(const fs::path& output_dir, ConfigId config) {
    return output_dir / ("report_" + std::string(config_name(config)));
}

/// Records already present in a partial run, for resume. A line that fails
/// to deserialize is a hard error naming the line.
inline std::vector<EvaluationRecord> load_existing_records(const fs::path& path) {
    std::vector<EvaluationRecord> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    if (!in) raise(Errc::IoError, "cannot open " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(deserialize_record(line));
        } catch (const Error&) {
            raise(Errc::CorruptRecords,
                  path.string() + " line " + std::to_string(lineno) + " does not deserialize");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

struct RunReport {
    ConfigId config = ConfigId::C1;
    std::size_t n_scored = 0;
    std::size_t n_failed = 0;
    ScalarSummary summary;
    std::int64_t wall_time_ms = 0;
};

namespace detail {

inline std::string iso_timestamp() {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

inline json manifest_json(const RunConfig& cfg, const std::vector<ConfigId>& configs) {
    json templates = json::object();
    for (const auto& [name, hash] : template_hashes()) templates[name] = hash;
    json config_names = json::array();
    for (ConfigId c : configs) config_names.push_back(std::string(config_name(c)));
    std::string subset_hash;
    if (fs::exists(cfg.subset_path)) subset_hash = sha256_hex(read_file(cfg.subset_path));
    json subset_meta;  // written by `marc subset`; absent for hand-built files
    fs::path meta_path = cfg.subset_path + ".meta.json";
    if (fs::exists(meta_path)) {
        try {
            subset_meta = json::parse(read_file(meta_path));
        } catch (const json::exception&) {
            subset_meta = nullptr;
        }
    }
    return json{
        {"toolkit_version", kToolkitVersion},
        {"configs", config_names},
        {"s_score_variant", variant_kind_name(cfg.variant.kind)},
        {"s_score_alpha", cfg.variant.alpha},
        {"jaccard_threshold", cfg.similarity.jaccard_threshold},
        {"content_threshold", cfg.similarity.content_threshold},
        {"content_min_length", cfg.similarity.content_min_length},
        {"stopwords_version", cfg.similarity.stopwords_version},
        {"stopwords_hash", stopwords_hash()},
        {"template_hashes", templates},
        {"backend", cfg.backend},
        {"subset_path", cfg.subset_path},
        {"subset_hash", subset_hash},
        {"subset_meta", subset_meta},
        {"baseline_specialist", specialty_name(cfg.baseline_specialist)},
        {"max_parallel_questions", cfg.max_parallel_questions},
        {"seed_scheme", "sha256(question_id|specialty|stage) truncated to 64 bits"},
        {"started_at", iso_timestamp()},
    };
}

}  // namespace detail

/// Runs one configuration over the subset. Already-recorded question ids are
/// skipped (resume); new records append in subset order regardless of worker
/// completion order, so outputs are stable across parallelism settings.
/// Per-question failures are quarantined, not fatal.
inline RunReport run_config(const std::vector<QuestionRecord>& subset, const RunConfig& cfg) {
    cfg.validate();
    const auto run_start = std::chrono::steady_clock::now();
    fs::create_directories(cfg.output_dir);
    const fs::path rec_path = records_path(cfg.output_dir, cfg.config);
    const fs::path fail_path = failures_path(cfg.output_dir, cfg.config);

    std::vector<EvaluationRecord> existing = load_existing_records(rec_path);
    std::set<std::string> done;
    for (const auto& r : existing) done.insert(r.question_id);
    if (fs::exists(fail_path))
        for (const auto& f : read_jsonl<QuestionFailure>(fail_path)) done.insert(f.question_id);

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < subset.size(); ++i)
        if (!done.contains(subset[i].id)) pending.push_back(i);

    Backend backend(cfg.backend);

    std::ofstream rec_out(rec_path, std::ios::app);
    if (!rec_out) raise(Errc::IoError, "cannot append " + rec_path.string());
    std::ofstream fail_out;  // opened lazily; most runs have no failures

    using Outcome = std::variant<EvaluationRecord, QuestionFailure>;
    std::mutex mu;
    std::map<std::size_t, Outcome> staged;  // keyed by position in `pending`
    std::size_t write_cursor = 0;
    std::atomic<std::size_t> next{0};

    auto flush_ready = [&]() {
        // caller holds `mu`
        while (true) {
            auto it = staged.find(write_cursor);
            if (it == staged.end()) break;
            if (auto* rec = std::get_if<EvaluationRecord>(&it->second)) {
                rec_out << serialize_record(*rec) << '\n';
                rec_out.flush();
            } else {
                auto& fail = std::get<QuestionFailure>(it->second);
                if (!fail_out.is_open()) fail_out.open(fail_path, std::ios::app);
                fail_out << json(fail).dump() << '\n';
                fail_out.flush();
            }
            staged.erase(it);
            ++write_cursor;
        }
    };

    auto worker = [&] {
        while (true) {
            std::size_t k = next.fetch_add(1);
            if (k >= pending.size()) break;
            const QuestionRecord& q = subset[pending[k]];
            Outcome outcome;
            try {
                outcome = run_question(q, cfg, backend);
            } catch (const std::exception& e) {
                outcome = QuestionFailure{q.id, e.what()};
            }
            std::lock_guard lock(mu);
            staged.emplace(k, std::move(outcome));
            flush_ready();
        }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.max_parallel_questions),
                              std::max<std::size_t>(pending.size(), 1));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    rec_out.close();

    // Report over everything now on disk (previous + new records).
    std::vector<EvaluationRecord> all = load_existing_records(rec_path);
    RunReport report;
    report.config = cfg.config;
    report.n_scored = all.size();
    report.n_failed = fs::exists(fail_path) ? read_jsonl<QuestionFailure>(fail_path).size() : 0;
    report.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - run_start)
                              .count();
    if (!all.empty()) {
        ReportTables tables = compute_report(scored_view(all));
        write_report_dir(tables, report_dir(cfg.output_dir, cfg.config));
        report.summary = tables.summary;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Cross-config comparison

namespace detail {

inline std::string comparison_csv(const std::vector<RunReport>& reports, bool include_deltas) {
    const RunReport* baseline = nullptr;
    for (const auto& r : reports)
        if (r.config == ConfigId::C1) baseline = &r;
    include_deltas = include_deltas && baseline != nullptr && reports.size() > 1;

    std::string out = include_deltas
                          ? "config,n,accuracy,delta_acc_pp,ece,delta_ece_pct,auroc,delta_auroc,"
                            "avg_conf,wall_time_s\n"
                          : "config,n,accuracy,ece,auroc,avg_conf,wall_time_s\n";
    for (const auto& r : reports) {
        std::string auroc_cell = r.summary.auroc ? fmt_double(*r.summary.auroc) : "";
        std::string row = std::string(config_name(r.config)) + "," + std::to_string(r.n_scored) +
                          "," + fmt_double(r.summary.accuracy);
        if (include_deltas) {
            std::string dacc, dece, dauroc;
            if (r.config != ConfigId::C1) {
                dacc = fmt_double((r.summary.accuracy - baseline->summary.accuracy) * 100.0);
                if (baseline->summary.ece > 0.0)
                    dece = fmt_double((r.summary.ece - baseline->summary.ece) /
                                      baseline->summary.ece * 100.0);
                if (r.summary.auroc && baseline->summary.auroc)
                    dauroc = fmt_double(*r.summary.auroc - *baseline->summary.auroc);
            }
            row += "," + dacc + "," + fmt_double(r.summary.ece) + "," + dece + "," + auroc_cell +
                   "," + dauroc;
        } else {
            row += "," + fmt_double(r.summary.ece) + "," + auroc_cell;
        }
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.1f", static_cast<double>(r.wall_time_ms) / 1000.0);
        row += "," + fmt_double(r.summary.mean_confidence) + "," + wall;
        out += row + "\n";
    }
    return out;
}

}  // namespace detail

/// Runs each configuration over the subset, emits per-config reports, a
/// cross-config comparison.csv (deltas relative to the C1 baseline when
/// present), and a run manifest.
inline std::vector<RunReport> run_ablation(const std::vector<QuestionRecord>& subset,
                                           const std::vector<RunConfig>& configs) {
    if (subset.empty()) raise(Errc::EmptyInput, "run_ablation over empty subset");
    if (configs.empty()) raise(Errc::EmptyInput, "run_ablation with no configurations");

    std::vector<RunReport> reports;
    for (const RunConfig& cfg : configs) reports.push_back(run_config(subset, cfg));

    const fs::path out_dir = configs.front().output_dir;
    std::vector<ConfigId> ids;
    for (const auto& cfg : configs) ids.push_back(cfg.config);
    write_file_atomic(out_dir / "comparison.csv",
                      detail::comparison_csv(reports, reports.size() > 1));
    write_file_atomic(out_dir / "run_manifest.json",
                      detail::manifest_json(configs.front(), ids).dump(2) + "\n");
    return reports;
}

/// Resume helper: loads the subset named by the config and completes the
/// remainder of a partial run directory.
inline RunReport resume(const fs::path& output_dir, RunConfig cfg) {
    cfg.output_dir = output_dir.string();
    std::vector<QuestionRecord> subset = read_jsonl<QuestionRecord>(cfg.subset_path);
    return run_config(subset, cfg);
}

}  // namespace marc
