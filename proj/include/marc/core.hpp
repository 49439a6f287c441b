#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "marc/common.hpp"

namespace marc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Answer letters

/// The four option letters. The underlying order A < B < C < D is total,
/// fixed, and relied on by fusion tie-breaking.
enum class AnswerLetter : int { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::array<AnswerLetter, 4> kAllLetters = {
    AnswerLetter::A, AnswerLetter::B, AnswerLetter::C, AnswerLetter::D};

inline char letter_char(AnswerLetter a) {
    return static_cast<char>('A' + static_cast<int>(a));
}

inline std::string letter_str(AnswerLetter a) { return std::string(1, letter_char(a)); }

inline std::optional<AnswerLetter> letter_from_char(char c) {
    if (c >= 'A' && c <= 'D') return static_cast<AnswerLetter>(c - 'A');
    return std::nullopt;
}

inline AnswerLetter letter_from_str(std::string_view s) {
    if (s.size() == 1) {
        if (auto a = letter_from_char(s[0])) return *a;
    }
    raise(Errc::FormatError, "not an answer letter: '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Specialists

enum class Specialty : int { Respiratory = 0, Cardiology = 1, Neurology = 2, Gastroenterology = 3 };

inline constexpr std::array<Specialty, 4> kAllSpecialties = {
    Specialty::Respiratory, Specialty::Cardiology, Specialty::Neurology,
    Specialty::Gastroenterology};

inline std::string_view specialty_name(Specialty s) {
    switch (s) {
        case Specialty::Respiratory:      return "respiratory";
        case Specialty::Cardiology:       return "cardiology";
        case Specialty::Neurology:        return "neurology";
        case Specialty::Gastroenterology: return "gastroenterology";
    }
    return "";
}

/// Phrase substituted for the {specialty} placeholder in prompts.
inline std::string_view specialty_prompt_phrase(Specialty s) {
    switch (s) {
        case Specialty::Respiratory:      return "respiratory medicine";
        case Specialty::Cardiology:       return "cardiology";
        case Specialty::Neurology:        return "neurology";
        case Specialty::Gastroenterology: return "gastroenterology";
    }
    return "";
}

inline std::string_view specialty_display_name(Specialty s) {
    switch (s) {
        case Specialty::Respiratory:      return "Pulmonologist";
        case Specialty::Cardiology:       return "Cardiologist";
        case Specialty::Neurology:        return "Neurologist";
        case Specialty::Gastroenterology: return "Gastroenterologist";
    }
    return "";
}

inline Specialty specialty_from_name(std::string_view name) {
    for (Specialty s : kAllSpecialties)
        if (specialty_name(s) == name) return s;
    raise(Errc::FormatError, "unknown specialty: '" + std::string(name) + "'");
}

struct SpecialistIdentity {
    Specialty specialty = Specialty::Respiratory;
    std::string display_name;

    bool operator==(const SpecialistIdentity&) const = default;
};

inline SpecialistIdentity identity_for(Specialty s) {
    return SpecialistIdentity{s, std::string(specialty_display_name(s))};
}

// ---------------------------------------------------------------------------
// Questions

enum class DatasetSource : int { MedQA = 0, MedMCQA = 1, Synthetic = 2 };

inline std::string_view source_name(DatasetSource s) {
    switch (s) {
        case DatasetSource::MedQA:     return "MedQA";
        case DatasetSource::MedMCQA:   return "MedMCQA";
        case DatasetSource::Synthetic: return "Synthetic";
    }
    return "";
}

inline DatasetSource source_from_name(std::string_view name) {
    if (name == "MedQA") return DatasetSource::MedQA;
    if (name == "MedMCQA") return DatasetSource::MedMCQA;
    if (name == "Synthetic") return DatasetSource::Synthetic;
    raise(Errc::FormatError, "unknown dataset source: '" + std::string(name) + "'");
}

struct QuestionRecord {
    std::string id;
    std::string stem;
    std::array<std::string, 4> options;  // indexed by AnswerLetter
    AnswerLetter gold = AnswerLetter::A;
    DatasetSource source = DatasetSource::Synthetic;
    std::map<std::string, std::string> meta;

    const std::string& option(AnswerLetter a) const {
        return options[static_cast<std::size_t>(a)];
    }

    bool operator==(const QuestionRecord&) const = default;
};

/// Throws FormatError if a record violates the question invariants.
inline void validate_question(const QuestionRecord& q) {
    if (q.id.empty()) raise(Errc::FormatError, "question with empty id");
    if (q.stem.empty()) raise(Errc::FormatError, "question " + q.id + " has empty stem");
    for (AnswerLetter a : kAllLetters)
        if (q.option(a).empty())
            raise(Errc::FormatError,
                  "question " + q.id + " missing option " + letter_str(a));
}

// ---------------------------------------------------------------------------
// Specialist responses

/// Audit markers set when response parsing had to fall back from the
/// documented output format.
enum class ParseFlag : int {
    AnswerRegexFallback,    // letter found near an "ANSWER" mention, not in the field
    AnswerAnywhereFallback, // letter found anywhere in the text
    AnswerAmbiguous,        // multiple letters in the ANSWER field; first taken
    ConfidenceDefaulted,    // no parseable confidence; 0.5 substituted
    ConfidencePercent,      // "85%" normalized to 0.85
    ConfidenceCommaDecimal, // "0,85" normalized to 0.85
    ConfidenceClamped,      // value outside [0,1] clamped
    ReasoningFromSteps,     // no REASONING field; STEP_1..STEP_5 body used
    ReasoningFromRaw,       // neither REASONING nor STEP body; raw text used
};

inline std::string_view parse_flag_name(ParseFlag f) {
    switch (f) {
        case ParseFlag::AnswerRegexFallback:    return "answer_regex_fallback";
        case ParseFlag::AnswerAnywhereFallback: return "answer_anywhere_fallback";
        case ParseFlag::AnswerAmbiguous:        return "answer_ambiguous";
        case ParseFlag::ConfidenceDefaulted:    return "confidence_defaulted";
        case ParseFlag::ConfidencePercent:      return "confidence_percent";
        case ParseFlag::ConfidenceCommaDecimal: return "confidence_comma_decimal";
        case ParseFlag::ConfidenceClamped:      return "confidence_clamped";
        case ParseFlag::ReasoningFromSteps:     return "reasoning_from_steps";
        case ParseFlag::ReasoningFromRaw:       return "reasoning_from_raw";
    }
    return "";
}

inline ParseFlag parse_flag_from_name(std::string_view name) {
    for (int i = 0; i <= static_cast<int>(ParseFlag::ReasoningFromRaw); ++i) {
        auto f = static_cast<ParseFlag>(i);
        if (parse_flag_name(f) == name) return f;
    }
    raise(Errc::FormatError, "unknown parse flag: '" + std::string(name) + "'");
}

struct SpecialistResponse {
    SpecialistIdentity specialist;
    AnswerLetter answer = AnswerLetter::A;
    std::string reasoning;
    double initial_confidence = 0.5;
    std::set<ParseFlag> parse_flags;
    std::string raw_text;

    bool operator==(const SpecialistResponse&) const = default;
};

// ---------------------------------------------------------------------------
// Verification traces

enum class SScoreVariantKind : int { Multiplicative = 0, WeightedAverage = 1, PureConsistency = 2 };

inline std::string_view variant_kind_name(SScoreVariantKind k) {
    switch (k) {
        case SScoreVariantKind::Multiplicative:  return "multiplicative";
        case SScoreVariantKind::WeightedAverage: return "weighted_average";
        case SScoreVariantKind::PureConsistency: return "pure_consistency";
    }
    return "";
}

inline SScoreVariantKind variant_kind_from_name(std::string_view name) {
    if (name == "multiplicative") return SScoreVariantKind::Multiplicative;
    if (name == "weighted_average") return SScoreVariantKind::WeightedAverage;
    if (name == "pure_consistency") return SScoreVariantKind::PureConsistency;
    raise(Errc::FormatError, "unknown s-score variant: '" + std::string(name) + "'");
}

enum class VerifyFailure : int { NoQuestionsParsed = 0, NoAnswersParsed = 1, NoPairsParsed = 2 };

inline std::string_view verify_failure_name(VerifyFailure f) {
    switch (f) {
        case VerifyFailure::NoQuestionsParsed: return "no_questions_parsed";
        case VerifyFailure::NoAnswersParsed:   return "no_answers_parsed";
        case VerifyFailure::NoPairsParsed:     return "no_pairs_parsed";
    }
    return "";
}

inline VerifyFailure verify_failure_from_name(std::string_view name) {
    if (name == "no_questions_parsed") return VerifyFailure::NoQuestionsParsed;
    if (name == "no_answers_parsed") return VerifyFailure::NoAnswersParsed;
    if (name == "no_pairs_parsed") return VerifyFailure::NoPairsParsed;
    raise(Errc::FormatError, "unknown verify failure: '" + std::string(name) + "'");
}

/// Audit markers for degraded (but non-fatal) verification stages.
enum class VerifyFlag : int { FewerQuestions = 0, MissingAnswerPositions = 1, InconsistencyDefaulted = 2 };

inline std::string_view verify_flag_name(VerifyFlag f) {
    switch (f) {
        case VerifyFlag::FewerQuestions:         return "fewer_questions";
        case VerifyFlag::MissingAnswerPositions: return "missing_answer_positions";
        case VerifyFlag::InconsistencyDefaulted: return "inconsistency_defaulted";
    }
    return "";
}

inline VerifyFlag verify_flag_from_name(std::string_view name) {
    if (name == "fewer_questions") return VerifyFlag::FewerQuestions;
    if (name == "missing_answer_positions") return VerifyFlag::MissingAnswerPositions;
    if (name == "inconsistency_defaulted") return VerifyFlag::InconsistencyDefaulted;
    raise(Errc::FormatError, "unknown verify flag: '" + std::string(name) + "'");
}

/// One verification-question pair. `parsed` is false when either the
/// independent or the reference answer was absent at this position; such
/// pairs are excluded from the inconsistency denominator.
struct PairResult {
    bool parsed = false;
    double similarity = 0.0;
    double content_similarity = 0.0;
    bool consistent = false;

    bool operator==(const PairResult&) const = default;
};

struct VerificationTrace {
    std::vector<std::string> questions;
    std::vector<std::string> independent_answers;  // "" where absent
    std::vector<std::string> reference_answers;    // "" where absent
    std::vector<PairResult> pair_results;
    int parsed_pairs = 0;
    double inconsistency = 0.0;
    double s_score = 0.0;
    SScoreVariantKind variant = SScoreVariantKind::Multiplicative;
    std::optional<VerifyFailure> failure;
    std::set<VerifyFlag> flags;
    int backend_calls = 0;

    bool operator==(const VerificationTrace&) const = default;
};

// ---------------------------------------------------------------------------
// Fusion outcome

struct CandidateScore {
    int votes = 0;
    double mean_s = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
    double score = 0.0;

    bool operator==(const CandidateScore&) const = default;
};

struct FusionOutcome {
    AnswerLetter final_answer = AnswerLetter::A;
    double calibrated_confidence = 0.0;
    std::map<AnswerLetter, CandidateScore> candidate_scores;
    double vote_fraction = 0.0;
    bool unanimous = false;
    bool tie_broken = false;

    bool operator==(const FusionOutcome&) const = default;
};

// ---------------------------------------------------------------------------
// Evaluation records

enum class ConfigId : int { C1 = 0, C2 = 1, C3 = 2, C4 = 3 };

inline std::string_view config_name(ConfigId c) {
    switch (c) {
        case ConfigId::C1: return "C1";
        case ConfigId::C2: return "C2";
        case ConfigId::C3: return "C3";
        case ConfigId::C4: return "C4";
    }
    return "";
}

inline ConfigId config_from_name(std::string_view name) {
    if (name == "C1") return ConfigId::C1;
    if (name == "C2") return ConfigId::C2;
    if (name == "C3") return ConfigId::C3;
    if (name == "C4") return ConfigId::C4;
    raise(Errc::FormatError, "unknown config: '" + std::string(name) + "'");
}

/// LLM calls per question for each ablation configuration.
inline int config_call_budget(ConfigId c) {
    switch (c) {
        case ConfigId::C1: return 1;
        case ConfigId::C2: return 4;
        case ConfigId::C3: return 4;
        case ConfigId::C4: return 16;
    }
    return 0;
}

struct EvaluationRecord {
    std::string question_id;
    ConfigId config = ConfigId::C1;
    AnswerLetter predicted = AnswerLetter::A;
    double confidence = 0.0;
    bool correct = false;
    std::vector<SpecialistResponse> specialist_responses;
    std::vector<VerificationTrace> verification_traces;
    std::optional<FusionOutcome> fusion;
    std::int64_t wall_time_ms = 0;
    int llm_calls = 0;

    bool operator==(const EvaluationRecord&) const = default;
};

// ---------------------------------------------------------------------------
// JSON serialization
//
// Records persist as JSON lines, one object per line. Field names are part
// of the on-disk contract; see docs/schema.md.

inline void to_json(json& j, const SpecialistIdentity& v) {
    j = json{{"specialty", specialty_name(v.specialty)}, {"display_name", v.display_name}};
}

inline void from_json(const json& j, SpecialistIdentity& v) {
    v.specialty = specialty_from_name(j.at("specialty").get<std::string>());
    v.display_name = j.at("display_name").get<std::string>();
}

inline void to_json(json& j, const QuestionRecord& v) {
    json opts = json::object();
    for (AnswerLetter a : kAllLetters) opts[letter_str(a)] = v.option(a);
    j = json{{"id", v.id},
             {"stem", v.stem},
             {"options", opts},
             {"gold", letter_str(v.gold)},
             {"source", source_name(v.source)},
             {"meta", v.meta}};
}

inline void from_json(const json& j, QuestionRecord& v) {
    v.id = j.at("id").get<std::string>();
    v.stem = j.at("stem").get<std::string>();
    const json& opts = j.at("options");
    for (AnswerLetter a : kAllLetters)
        v.options[static_cast<std::size_t>(a)] = opts.at(letter_str(a)).get<std::string>();
    v.gold = letter_from_str(j.at("gold").get<std::string>());
    v.source = source_from_name(j.at("source").get<std::string>());
    v.meta = j.value("meta", std::map<std::string, std::string>{});
}

inline void to_json(json& j, const SpecialistResponse& v) {
    json flags = json::array();
    for (ParseFlag f : v.parse_flags) flags.push_back(parse_flag_name(f));
    j = json{{"specialist", v.specialist},
             {"answer", letter_str(v.answer)},
             {"reasoning", v.reasoning},
             {"initial_confidence", v.initial_confidence},
             {"parse_flags", flags},
             {"raw_text", v.raw_text}};
}

inline void from_json(const json& j, SpecialistResponse& v) {
    v.specialist = j.at("specialist").get<SpecialistIdentity>();
    v.answer = letter_from_str(j.at("answer").get<std::string>());
    v.reasoning = j.at("reasoning").get<std::string>();
    v.initial_confidence = j.at("initial_confidence").get<double>();
    v.parse_flags.clear();
    for (const auto& f : j.at("parse_flags"))
        v.parse_flags.insert(parse_flag_from_name(f.get<std::string>()));
    v.raw_text = j.at("raw_text").get<std::string>();
}

inline void to_json(json& j, const PairResult& v) {
    j = json{{"parsed", v.parsed},
             {"similarity", v.similarity},
             {"content_similarity", v.content_similarity},
             {"consistent", v.consistent}};
}

inline void from_json(const json& j, PairResult& v) {
    v.parsed = j.at("parsed").get<bool>();
    v.similarity = j.at("similarity").get<double>();
    v.content_similarity = j.at("content_similarity").get<double>();
    v.consistent = j.at("consistent").get<bool>();
}

inline void to_json(json& j, const VerificationTrace& v) {
    json flags = json::array();
    for (VerifyFlag f : v.flags) flags.push_back(verify_flag_name(f));
    j = json{{"questions", v.questions},
             {"independent_answers", v.independent_answers},
             {"reference_answers", v.reference_answers},
             {"pair_results", v.pair_results},
             {"parsed_pairs", v.parsed_pairs},
             {"inconsistency", v.inconsistency},
             {"s_score", v.s_score},
             {"variant", variant_kind_name(v.variant)},
             {"failure", v.failure ? json(verify_failure_name(*v.failure)) : json(nullptr)},
             {"flags", flags},
             {"backend_calls", v.backend_calls}};
}

inline void from_json(const json& j, VerificationTrace& v) {
    v.questions = j.at("questions").get<std::vector<std::string>>();
    v.independent_answers = j.at("independent_answers").get<std::vector<std::string>>();
    v.reference_answers = j.at("reference_answers").get<std::vector<std::string>>();
    v.pair_results = j.at("pair_results").get<std::vector<PairResult>>();
    v.parsed_pairs = j.at("parsed_pairs").get<int>();
    v.inconsistency = j.at("inconsistency").get<double>();
    v.s_score = j.at("s_score").get<double>();
    v.variant = variant_kind_from_name(j.at("variant").get<std::string>());
    if (j.at("failure").is_null())
        v.failure.reset();
    else
        v.failure = verify_failure_from_name(j.at("failure").get<std::string>());
    v.flags.clear();
    for (const auto& f : j.at("flags"))
        v.flags.insert(verify_flag_from_name(f.get<std::string>()));
    v.backend_calls = j.at("backend_calls").get<int>();
}

inline void to_json(json& j, const CandidateScore& v) {
    j = json{{"votes", v.votes},
             {"mean_s", v.mean_s},
             {"min_s", v.min_s},
             {"max_s", v.max_s},
             {"score", v.score}};
}

inline void from_json(const json& j, CandidateScore& v) {
    v.votes = j.at("votes").get<int>();
    v.mean_s = j.at("mean_s").get<double>();
    v.min_s = j.at("min_s").get<double>();
    v.max_s = j.at("max_s").get<double>();
    v.score = j.at("score").get<double>();
}

inline void to_json(json& j, const FusionOutcome& v) {
    json scores = json::object();
    for (const auto& [a, cs] : v.candidate_scores) scores[letter_str(a)] = cs;
    j = json{{"final_answer", letter_str(v.final_answer)},
             {"calibrated_confidence", v.calibrated_confidence},
             {"candidate_scores", scores},
             {"vote_fraction", v.vote_fraction},
             {"unanimous", v.unanimous},
             {"tie_broken", v.tie_broken}};
}

inline void from_json(const json& j, FusionOutcome& v) {
    v.final_answer = letter_from_str(j.at("final_answer").get<std::string>());
    v.calibrated_confidence = j.at("calibrated_confidence").get<double>();
    v.candidate_scores.clear();
    for (const auto& [key, val] : j.at("candidate_scores").items())
        v.candidate_scores[letter_from_str(key)] = val.get<CandidateScore>();
    v.vote_fraction = j.at("vote_fraction").get<double>();
    v.unanimous = j.at("unanimous").get<bool>();
    v.tie_broken = j.at("tie_broken").get<bool>();
}

inline void to_json(json& j, const EvaluationRecord& v) {
    j = json{{"question_id", v.question_id},
             {"config", config_name(v.config)},
             {"predicted", letter_str(v.predicted)},
             {"confidence", v.confidence},
             {"correct", v.correct},
             {"specialist_responses", v.specialist_responses},
             {"verification_traces", v.verification_traces},
             {"fusion", v.fusion ? json(*v.fusion) : json(nullptr)},
             {"wall_time_ms", v.wall_time_ms},
             {"llm_calls", v.llm_calls}};
}

inline void from_json(const json& j, EvaluationRecord& v) {
    v.question_id = j.at("question_id").get<std::string>();
    v.config = config_from_name(j.at("config").get<std::string>());
    v.predicted = letter_from_str(j.at("predicted").get<std::string>());
    v.confidence = j.at("confidence").get<double>();
    v.correct = j.at("correct").get<bool>();
    v.specialist_responses = j.at("specialist_responses").get<std::vector<SpecialistResponse>>();
    v.verification_traces = j.at("verification_traces").get<std::vector<VerificationTrace>>();
    if (j.at("fusion").is_null())
        v.fusion.reset();
    else
        v.fusion = j.at("fusion").get<FusionOutcome>();
    v.wall_time_ms = j.at("wall_time_ms").get<std::int64_t>();
    v.llm_calls = j.at("llm_calls").get<int>();
}

/// One-line JSON form; round-trips losslessly through deserialize_record.
inline std::string serialize_record(const EvaluationRecord& record) {
    return json(record).dump();
}

inline EvaluationRecord deserialize_record(std::string_view line) {
    try {
        return json::parse(line).get<EvaluationRecord>();
    } catch (const json::exception& e) {
        raise(Errc::FormatError, std::string("bad record line: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// JSONL helpers

template <typename T>
std::vector<T> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::IoError, "cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line).get<T>());
        } catch (const json::exception& e) {
            raise(Errc::FormatError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
void write_jsonl(const fs::path& path, const std::vector<T>& items) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::IoError, "cannot write " + path.string());
    for (const T& item : items) out << json(item).dump() << '\n';
}

}  // namespace marc
