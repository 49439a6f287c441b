#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "marc/agents.hpp"
#include "marc/backend.hpp"
#include "marc/core.hpp"
#include "marc/prompt_assets.hpp"

namespace marc {

// ---------------------------------------------------------------------------
// Configuration

struct SimilarityConfig {
    double jaccard_threshold = 0.4;
    double content_threshold = 0.6;
    int content_min_length = 5;  // token qualifies as a content word at >= 5 chars
    std::unordered_set<std::string> stopwords = default_stopwords();
    std::string stopwords_version = std::string(kStopwordsVersion);

    void validate() const {
        if (jaccard_threshold <= 0.0 || jaccard_threshold >= 1.0 ||
            content_threshold <= 0.0 || content_threshold >= 1.0)
            raise(Errc::BadInput, "similarity thresholds must lie in (0,1)");
        if (content_min_length < 1) raise(Errc::BadInput, "content_min_length must be >= 1");
    }
};

struct SScoreVariant {
    SScoreVariantKind kind = SScoreVariantKind::Multiplicative;
    double alpha = 0.65;  // weighted-average mixing weight

    void validate() const {
        if (alpha <= 0.0 || alpha >= 1.0) raise(Errc::BadInput, "alpha must lie in (0,1)");
    }

    static SScoreVariant from_cli_name(std::string_view name) {
        if (name == "mult") return {SScoreVariantKind::Multiplicative, 0.65};
        if (name == "wavg") return {SScoreVariantKind::WeightedAverage, 0.65};
        if (name == "pure") return {SScoreVariantKind::PureConsistency, 0.65};
        raise(Errc::BadInput, "unknown variant '" + std::string(name) +
                                  "' (expected mult|wavg|pure)");
    }

    bool operator==(const SScoreVariant&) const = default;
};

// ---------------------------------------------------------------------------
// Token similarity

/// Lowercases, splits on every non-alphanumeric byte, drops empties and
/// stopwords, and returns the set of distinct remaining tokens.
inline std::set<std::string> tokenize_filtered(std::string_view text,
                                               const std::unordered_set<std::string>& stopwords) {
    std::set<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !stopwords.contains(current)) tokens.insert(current);
        current.clear();
    };
    for (char c : text) {
        if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            current.push_back(c);
        } else if (c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

inline std::set<std::string> tokenize_filtered(std::string_view text) {
    return tokenize_filtered(text, default_stopwords());
}

/// |a n b| / |a u b|; two empty sets count as identical (1.0).
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : a)
        if (b.contains(t)) ++inter;
    std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::set<std::string> content_tokens(const std::set<std::string>& tokens, int min_length) {
    std::set<std::string> out;
    for (const auto& t : tokens)
        if (t.size() >= static_cast<std::size_t>(min_length)) out.insert(t);
    return out;
}

/// A pair is consistent when full-token Jaccard exceeds the primary
/// threshold, or content-word Jaccard exceeds the secondary one (the latter
/// absorbs verbosity differences where the key terms still agree).
inline PairResult pair_consistent(std::string_view independent, std::string_view reference,
                                  const SimilarityConfig& cfg) {
    auto ta = tokenize_filtered(independent, cfg.stopwords);
    auto tb = tokenize_filtered(reference, cfg.stopwords);
    PairResult r;
    r.parsed = true;
    r.similarity = jaccard(ta, tb);
    r.content_similarity =
        jaccard(content_tokens(ta, cfg.content_min_length), content_tokens(tb, cfg.content_min_length));
    r.consistent = r.similarity > cfg.jaccard_threshold ||
                   r.content_similarity > cfg.content_threshold;
    return r;
}

// ---------------------------------------------------------------------------
// Inconsistency and S-scores

struct InconsistencyResult {
    double inconsistency = 0.0;
    int parsed_pairs = 0;
};

/// Fraction of parsed pairs that failed the similarity test. With zero
/// parsed pairs the fraction is undefined; callers apply the neutral-0.5
/// fallback policy.
inline InconsistencyResult inconsistency_score(const std::vector<PairResult>& pairs) {
    int parsed = 0;
    int inconsistent = 0;
    for (const PairResult& p : pairs) {
        if (!p.parsed) continue;
        ++parsed;
        if (!p.consistent) ++inconsistent;
    }
    if (parsed == 0) return {0.0, 0};
    return {static_cast<double>(inconsistent) / static_cast<double>(parsed), parsed};
}

inline double s_score(double initial_confidence, double inconsistency,
                      const SScoreVariant& variant) {
    if (initial_confidence < 0.0 || initial_confidence > 1.0)
        raise(Errc::BadScore, "initial confidence outside [0,1]");
    if (inconsistency < 0.0 || inconsistency > 1.0)
        raise(Errc::BadScore, "inconsistency outside [0,1]");
    switch (variant.kind) {
        case SScoreVariantKind::Multiplicative:
            return initial_confidence * (1.0 - inconsistency);
        case SScoreVariantKind::WeightedAverage:
            return variant.alpha * initial_confidence +
                   (1.0 - variant.alpha) * (1.0 - inconsistency);
        case SScoreVariantKind::PureConsistency:
            return 1.0 - inconsistency;
    }
    raise(Errc::BadInput, "unknown s-score variant");
}

// ---------------------------------------------------------------------------
// Numbered-list parsing

namespace detail {

/// Parses "1. text" / "2) text" style items. Non-numbered continuation lines
/// append to the open item; empty-bodied items are dropped.
struct NumberedItem {
    int index = 0;
    std::string text;
};

inline std::optional<std::pair<int, std::string>> match_numbered_line(std::string_view line) {
    std::string_view t = trim(line);
    std::size_t i = 0;
    while (i < t.size() && t[i] >= '0' && t[i] <= '9') ++i;
    if (i == 0 || i > 2) return std::nullopt;
    int index = 0;
    for (std::size_t k = 0; k < i; ++k) index = index * 10 + (t[k] - '0');
    if (index == 0) return std::nullopt;  // lists are 1-based; "0.85" is not an item
    std::size_t sep = i;
    if (sep >= t.size()) return std::nullopt;
    char c = t[sep];
    if (c != '.' && c != ')' && c != ']' && c != ':' && c != '-') return std::nullopt;
    ++sep;
    return std::make_pair(index, std::string(trim(t.substr(sep))));
}

inline std::vector<NumberedItem> parse_numbered_items(std::string_view text) {
    std::vector<NumberedItem> items;
    bool open = false;
    for (const std::string& line : split_lines(text)) {
        if (auto m = match_numbered_line(line)) {
            items.push_back({m->first, m->second});
            open = true;
            continue;
        }
        std::string_view t = trim(line);
        if (t.empty()) continue;
        if (open) {
            auto& cur = items.back().text;
            if (!cur.empty()) cur.push_back(' ');
            cur.append(t);
        }
    }
    std::erase_if(items, [](const NumberedItem& it) { return it.text.empty(); });
    return items;
}

/// Body after the last case-insensitive `marker:` field, or the whole text
/// when the marker is missing.
inline std::string_view after_marker(std::string_view text, std::string_view marker) {
    auto fields = field_positions(text, marker);
    if (fields.empty()) return text;
    return text.substr(fields.back());
}

inline std::string render_question_list(const std::vector<std::string>& questions) {
    std::string out;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        if (!out.empty()) out.push_back('\n');
        out += std::to_string(i + 1) + ". " + questions[i];
    }
    return out;
}

}  // namespace detail

/// Parses the numbered list under VERIFICATION_QUESTIONS:, in listed order,
/// capped at four.
inline std::vector<std::string> parse_verification_questions(std::string_view completion) {
    auto items = detail::parse_numbered_items(
        detail::after_marker(completion, "verification_questions"));
    std::vector<std::string> questions;
    for (const auto& it : items) {
        questions.push_back(it.text);
        if (questions.size() == 4) break;
    }
    if (questions.empty())
        raise(Errc::NoQuestionsParsed, "no numbered verification questions found");
    return questions;
}

/// Parses the numbered ANSWERS: list into per-position slots; positions the
/// model skipped stay absent.
inline std::vector<std::optional<std::string>> parse_answer_list(std::string_view completion,
                                                                 std::size_t num_questions) {
    auto items = detail::parse_numbered_items(detail::after_marker(completion, "answers"));
    std::vector<std::optional<std::string>> out(num_questions);
    int placed = 0;
    for (const auto& it : items) {
        if (it.index < 1 || static_cast<std::size_t>(it.index) > num_questions) continue;
        auto& slot = out[static_cast<std::size_t>(it.index - 1)];
        if (slot) continue;  // first occurrence wins
        slot = it.text;
        ++placed;
    }
    if (placed == 0) raise(Errc::NoAnswersParsed, "no numbered answers found");
    return out;
}

// ---------------------------------------------------------------------------
// Backend-facing steps

/// Phase 2 step 1: ask the model to extract up to four verification
/// questions from the specialist's reasoning.
inline std::vector<std::string> formulate_questions(const QuestionRecord& question,
                                                    const SpecialistResponse& response,
                                                    ChatClient& backend) {
    if (trim(response.reasoning).empty())
        raise(Errc::BadInput, "cannot formulate questions from empty reasoning");
    std::map<std::string, std::string> values = {
        {"question", question.stem},
        {"answer", letter_str(response.answer) + ". " + question.option(response.answer)},
        {"reasoning", response.reasoning},
    };
    auto [system_prompt, user_prompt] = render_template(verify_formulate_template(), values);
    ChatRequest req;
    req.system_prompt = std::move(system_prompt);
    req.user_prompt = std::move(user_prompt);
    req.params = GenerationParams::for_stage(
        Stage::VerifyQuestions,
        derive_seed(question.id, response.specialist, Stage::VerifyQuestions));
    Completion completion = backend.complete(req);
    return parse_verification_questions(completion.text);
}

/// Phase 2 steps 2-3: answer the verification questions in one call, either
/// independently (no reasoning given) or with the reasoning in context.
inline std::vector<std::optional<std::string>> answer_batch(
    const QuestionRecord& question, const std::vector<std::string>& verification_questions,
    const std::optional<std::string>& reasoning, const SpecialistIdentity& specialist,
    ChatClient& backend) {
    if (verification_questions.empty())
        raise(Errc::BadInput, "answer_batch with no verification questions");
    std::map<std::string, std::string> values = {
        {"question", question.stem},
        {"verification_questions", detail::render_question_list(verification_questions)},
    };
    const PromptTemplate* tpl = nullptr;
    Stage stage;
    if (reasoning) {
        values["reasoning"] = *reasoning;
        tpl = &verify_reference_template();
        stage = Stage::VerifyReference;
    } else {
        tpl = &verify_independent_template();
        stage = Stage::VerifyIndependent;
    }
    auto [system_prompt, user_prompt] = render_template(*tpl, values);
    ChatRequest req;
    req.system_prompt = std::move(system_prompt);
    req.user_prompt = std::move(user_prompt);
    req.params = GenerationParams::for_stage(stage, derive_seed(question.id, specialist, stage));
    Completion completion = backend.complete(req);
    return parse_answer_list(completion.text, verification_questions.size());
}

// ---------------------------------------------------------------------------
// Full verification

/// Two-Phase Verification for one specialist response: formulate questions,
/// answer independently and with reference, score pairwise consistency, and
/// derive the S-score. Exactly three backend calls on the happy path.
/// Formulation or answer parse failures mark the trace and fall back to the
/// neutral inconsistency of 0.5.
inline VerificationTrace verify(const QuestionRecord& question,
                                const SpecialistResponse& response,
                                const SScoreVariant& variant, const SimilarityConfig& cfg,
                                ChatClient& backend) {
    cfg.validate();
    variant.validate();
    VerificationTrace trace;
    trace.variant = variant.kind;

    std::vector<std::string> questions;
    std::vector<std::optional<std::string>> independent;
    std::vector<std::optional<std::string>> reference;
    try {
        questions = formulate_questions(question, response, backend);
        trace.backend_calls = 1;
        if (questions.size() < 4) trace.flags.insert(VerifyFlag::FewerQuestions);

        independent = answer_batch(question, questions, std::nullopt, response.specialist, backend);
        trace.backend_calls = 2;
        reference = answer_batch(question, questions, response.reasoning, response.specialist,
                                 backend);
        trace.backend_calls = 3;
    } catch (const Error& e) {
        switch (e.code()) {
            case Errc::NoQuestionsParsed:
                trace.backend_calls += 1;  // the formulate call itself succeeded
                trace.failure = VerifyFailure::NoQuestionsParsed;
                break;
            case Errc::NoAnswersParsed:
                trace.backend_calls += 1;  // ditto for the failed answer batch
                trace.failure = VerifyFailure::NoAnswersParsed;
                break;
            default:
                throw;  // transport errors propagate to the harness
        }
    }

    trace.questions = questions;
    const std::size_t n = questions.size();
    trace.independent_answers.assign(n, "");
    trace.reference_answers.assign(n, "");
    trace.pair_results.assign(n, PairResult{});

    bool missing = false;
    for (std::size_t j = 0; j < n; ++j) {
        bool has_ind = j < independent.size() && independent[j].has_value();
        bool has_ref = j < reference.size() && reference[j].has_value();
        if (has_ind) trace.independent_answers[j] = *independent[j];
        if (has_ref) trace.reference_answers[j] = *reference[j];
        if (has_ind && has_ref)
            trace.pair_results[j] = pair_consistent(*independent[j], *reference[j], cfg);
        else
            missing = true;
    }
    if (missing && !trace.failure && n > 0)
        trace.flags.insert(VerifyFlag::MissingAnswerPositions);

    auto [inconsistency, parsed] = inconsistency_score(trace.pair_results);
    trace.parsed_pairs = parsed;
    if (parsed == 0) {
        if (!trace.failure) trace.failure = VerifyFailure::NoPairsParsed;
        trace.inconsistency = 0.5;  // neutral: no evidence either way
        trace.flags.insert(VerifyFlag::InconsistencyDefaulted);
    } else {
        trace.inconsistency = inconsistency;
    }
    trace.s_score = s_score(response.initial_confidence, trace.inconsistency, variant);
    return trace;
}

}  // namespace marc
