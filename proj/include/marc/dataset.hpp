#pragma once

#include <array>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "marc/agents.hpp"
#include "marc/backend.hpp"
#include "marc/core.hpp"

namespace marc {

// ---------------------------------------------------------------------------
// Source loaders

struct LoadResult {
    std::vector<QuestionRecord> records;
    int dropped_rows = 0;
};

namespace detail {

inline json parse_jsonl_line(const fs::path& path, const std::string& line, int lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        raise(Errc::FormatError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
}

inline bool question_fields_ok(const QuestionRecord& q) {
    if (q.stem.empty()) return false;
    for (AnswerLetter a : kAllLetters)
        if (q.option(a).empty()) return false;
    return true;
}

}  // namespace detail

/// MedQA-USMLE rows: {question, options: {"A": ...}, answer_idx: "B"}.
/// Rows without a valid answer_idx (or with missing/empty fields) are
/// dropped and counted, never emitted as invalid records.
inline LoadResult load_medqa(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::IoError, "cannot open " + path.string());
    LoadResult out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json row = detail::parse_jsonl_line(path, line, lineno);
        QuestionRecord q;
        q.source = DatasetSource::MedQA;
        q.id = "medqa-" + std::to_string(lineno);
        q.stem = row.value("question", "");
        if (row.contains("options") && row["options"].is_object()) {
            for (AnswerLetter a : kAllLetters) {
                auto key = letter_str(a);
                if (row["options"].contains(key) && row["options"][key].is_string())
                    q.options[static_cast<std::size_t>(a)] = row["options"][key].get<std::string>();
            }
        }
        std::optional<AnswerLetter> gold;
        if (row.contains("answer_idx") && row["answer_idx"].is_string()) {
            std::string idx = row["answer_idx"].get<std::string>();
            if (idx.size() == 1) gold = letter_from_char(idx[0]);
        }
        if (!gold || !detail::question_fields_ok(q)) {
            ++out.dropped_rows;
            continue;
        }
        q.gold = *gold;
        q.meta["source_line"] = std::to_string(lineno);
        if (row.contains("meta_info") && row["meta_info"].is_string())
            q.meta["meta_info"] = row["meta_info"].get<std::string>();
        out.records.push_back(std::move(q));
    }
    return out;
}

/// MedMCQA rows: {id?, question, opa..opd, cop in {1,2,3,4}}. cop maps
/// positionally (1 -> A .. 4 -> D); anything else drops the row.
inline LoadResult load_medmcqa(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::IoError, "cannot open " + path.string());
    LoadResult out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json row = detail::parse_jsonl_line(path, line, lineno);
        QuestionRecord q;
        q.source = DatasetSource::MedMCQA;
        if (row.contains("id") && row["id"].is_string() && !row["id"].get<std::string>().empty())
            q.id = "medmcqa-" + row["id"].get<std::string>();
        else
            q.id = "medmcqa-" + std::to_string(lineno);
        q.stem = row.value("question", "");
        constexpr std::array<const char*, 4> keys = {"opa", "opb", "opc", "opd"};
        for (std::size_t i = 0; i < 4; ++i)
            if (row.contains(keys[i]) && row[keys[i]].is_string())
                q.options[i] = row[keys[i]].get<std::string>();
        std::optional<AnswerLetter> gold;
        if (row.contains("cop") && row["cop"].is_number_integer()) {
            int cop = row["cop"].get<int>();
            if (cop >= 1 && cop <= 4) gold = static_cast<AnswerLetter>(cop - 1);
        }
        if (!gold || !detail::question_fields_ok(q)) {
            ++out.dropped_rows;
            continue;
        }
        q.gold = *gold;
        q.meta["source_line"] = std::to_string(lineno);
        if (row.contains("subject_name") && row["subject_name"].is_string())
            q.meta["subject_name"] = row["subject_name"].get<std::string>();
        out.records.push_back(std::move(q));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Curation

struct CurationRecord {
    std::string question_id;
    std::array<std::optional<AnswerLetter>, 4> answers;  // indexed by Specialty
    int distinct_answer_count = 0;
    bool high_disagreement = false;

    bool operator==(const CurationRecord&) const = default;
};

inline void to_json(json& j, const CurationRecord& v) {
    json answers = json::object();
    for (Specialty s : kAllSpecialties) {
        const auto& a = v.answers[static_cast<std::size_t>(s)];
        answers[std::string(specialty_name(s))] = a ? json(letter_str(*a)) : json(nullptr);
    }
    j = json{{"question_id", v.question_id},
             {"answers", answers},
             {"distinct_answer_count", v.distinct_answer_count},
             {"high_disagreement", v.high_disagreement}};
}

inline void from_json(const json& j, CurationRecord& v) {
    v.question_id = j.at("question_id").get<std::string>();
    for (Specialty s : kAllSpecialties) {
        const json& a = j.at("answers").at(std::string(specialty_name(s)));
        if (a.is_null())
            v.answers[static_cast<std::size_t>(s)].reset();
        else
            v.answers[static_cast<std::size_t>(s)] = letter_from_str(a.get<std::string>());
    }
    v.distinct_answer_count = j.at("distinct_answer_count").get<int>();
    v.high_disagreement = j.at("high_disagreement").get<bool>();
}

struct CurationStopRule {
    int target_disagreement = 220;
    int target_agreement = 60;
};

/// First standalone A-D token of a letter-only completion, if any.
inline std::optional<AnswerLetter> parse_curation_letter(std::string_view completion) {
    auto hits = detail::standalone_letters(completion);
    if (hits.empty()) return std::nullopt;
    return letter_from_char(completion[hits.front()]);
}

inline CurationRecord label_disagreement(const std::string& question_id,
                                         const std::array<std::optional<AnswerLetter>, 4>& answers) {
    CurationRecord rec;
    rec.question_id = question_id;
    rec.answers = answers;
    std::set<AnswerLetter> distinct;
    for (const auto& a : answers)
        if (a) distinct.insert(*a);
    rec.distinct_answer_count = static_cast<int>(distinct.size());
    rec.high_disagreement = rec.distinct_answer_count >= 2;
    return rec;
}

struct CurationOutcome {
    std::vector<CurationRecord> records;
    int disagreement_count = 0;
    int agreement_count = 0;
    bool stopped_early = false;
    int processed = 0;
};

/// Letter-only curation sweep in dataset order: four 8-token prompts per
/// question (one per specialist), disagreement labeling, and early stop once
/// both pool targets are met. When `checkpoint_path` is given every record
/// is appended as it completes and already-recorded ids are skipped, so an
/// interrupted sweep resumes to the identical output.
inline CurationOutcome curate(const std::vector<QuestionRecord>& questions, ChatClient& backend,
                              const CurationStopRule& stop_rule = {},
                              const std::optional<fs::path>& checkpoint_path = std::nullopt,
                              std::function<void(const CurationRecord&)> on_record = nullptr) {
    CurationOutcome out;
    std::set<std::string> done;
    if (checkpoint_path && fs::exists(*checkpoint_path)) {
        for (const auto& rec : read_jsonl<CurationRecord>(*checkpoint_path)) {
            done.insert(rec.question_id);
            out.records.push_back(rec);
            ++out.processed;
            if (rec.high_disagreement)
                ++out.disagreement_count;
            else
                ++out.agreement_count;
        }
    }
    auto targets_met = [&] {
        return out.disagreement_count >= stop_rule.target_disagreement &&
               out.agreement_count >= stop_rule.target_agreement;
    };
    if (targets_met()) {
        out.stopped_early = out.processed < static_cast<int>(questions.size());
        return out;
    }

    std::ofstream checkpoint;
    if (checkpoint_path) {
        fs::create_directories(checkpoint_path->parent_path().empty()
                                   ? fs::path(".")
                                   : checkpoint_path->parent_path());
        checkpoint.open(*checkpoint_path, std::ios::app);
        if (!checkpoint) raise(Errc::IoError, "cannot append " + checkpoint_path->string());
    }

    for (const QuestionRecord& q : questions) {
        if (done.contains(q.id)) continue;
        std::array<std::optional<AnswerLetter>, 4> answers;
        for (Specialty s : kAllSpecialties) {
            SpecialistIdentity who = identity_for(s);
            ChatRequest req =
                render_curation_prompt(who, q, derive_seed(q.id, who, Stage::CurationLetter));
            Completion completion = backend.complete(req);
            answers[static_cast<std::size_t>(s)] = parse_curation_letter(completion.text);
        }
        CurationRecord rec = label_disagreement(q.id, answers);
        out.records.push_back(rec);
        ++out.processed;
        if (rec.high_disagreement)
            ++out.disagreement_count;
        else
            ++out.agreement_count;
        if (checkpoint) {
            checkpoint << json(rec).dump() << '\n';
            checkpoint.flush();
        }
        if (on_record) on_record(rec);
        if (targets_met()) {
            out.stopped_early = out.processed < static_cast<int>(questions.size());
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subset construction

struct SubsetSpec {
    int size = 250;
    std::uint64_t seed = 0;
    int high_disagreement_quota = 220;
    int agreement_quota = 30;

    void validate() const {
        if (high_disagreement_quota < 0 || agreement_quota < 0 ||
            high_disagreement_quota + agreement_quota != size)
            raise(Errc::BadInput, "subset quotas must be non-negative and sum to size");
    }

    /// Default disagreement/agreement split for the two standard sizes.
    static SubsetSpec for_size(int size, std::uint64_t seed) {
        SubsetSpec spec;
        spec.size = size;
        spec.seed = seed;
        if (size == 250) {
            spec.high_disagreement_quota = 220;
            spec.agreement_quota = 30;
        } else if (size == 100) {
            spec.high_disagreement_quota = 80;
            spec.agreement_quota = 20;
        } else {
            spec.high_disagreement_quota = (size * 4) / 5;
            spec.agreement_quota = size - spec.high_disagreement_quota;
        }
        return spec;
    }
};

struct PoolEntry {
    CurationRecord curation;
    QuestionRecord question;
};

/// Deterministic subset draw: top disagreement questions ranked by
/// (distinct answers desc, original pool index asc), a seeded uniform sample
/// of agreement questions, and a seeded shuffle of the union.
inline std::vector<QuestionRecord> build_subset(const std::vector<PoolEntry>& pool,
                                                const SubsetSpec& spec) {
    spec.validate();
    std::vector<std::size_t> disagreement;
    std::vector<std::size_t> agreement;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].curation.high_disagreement)
            disagreement.push_back(i);
        else
            agreement.push_back(i);
    }
    if (static_cast<int>(disagreement.size()) < spec.high_disagreement_quota ||
        static_cast<int>(agreement.size()) < spec.agreement_quota)
        raise(Errc::InsufficientPool,
              "pool has " + std::to_string(disagreement.size()) + " disagreement / " +
                  std::to_string(agreement.size()) + " agreement questions; need " +
                  std::to_string(spec.high_disagreement_quota) + "/" +
                  std::to_string(spec.agreement_quota));

    std::stable_sort(disagreement.begin(), disagreement.end(), [&](std::size_t a, std::size_t b) {
        return pool[a].curation.distinct_answer_count > pool[b].curation.distinct_answer_count;
    });
    disagreement.resize(static_cast<std::size_t>(spec.high_disagreement_quota));

    std::mt19937_64 gen(spec.seed);
    std::vector<std::size_t> picked_agreement;
    for (std::size_t k :
         sample_indices(agreement.size(), static_cast<std::size_t>(spec.agreement_quota), gen))
        picked_agreement.push_back(agreement[k]);

    std::vector<std::size_t> chosen = disagreement;
    chosen.insert(chosen.end(), picked_agreement.begin(), picked_agreement.end());
    std::mt19937_64 shuffle_gen(spec.seed);
    deterministic_shuffle(chosen, shuffle_gen);

    std::vector<QuestionRecord> subset;
    subset.reserve(chosen.size());
    for (std::size_t i : chosen) subset.push_back(pool[i].question);
    return subset;
}

/// Joins curation records with their source questions by id, preserving
/// curation order (which is dataset order).
inline std::vector<PoolEntry> join_pool(const std::vector<CurationRecord>& curation,
                                        const std::vector<QuestionRecord>& questions) {
    std::map<std::string, const QuestionRecord*> by_id;
    for (const auto& q : questions) {
        if (by_id.contains(q.id))
            raise(Errc::FormatError, "duplicate question id " + q.id);
        by_id[q.id] = &q;
    }
    std::vector<PoolEntry> pool;
    pool.reserve(curation.size());
    for (const auto& c : curation) {
        auto it = by_id.find(c.question_id);
        if (it == by_id.end())
            raise(Errc::FormatError, "curation references unknown question " + c.question_id);
        pool.push_back({c, *it->second});
    }
    return pool;
}

}  // namespace marc
