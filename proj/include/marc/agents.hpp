#pragma once

#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "marc/backend.hpp"
#include "marc/core.hpp"
#include "marc/prompt_assets.hpp"

namespace marc {

// ---------------------------------------------------------------------------
// Templates

struct PromptTemplate {
    std::string name;
    std::string system_template;
    std::string user_template;
    std::set<std::string> required_placeholders;
};

namespace detail {

inline std::set<std::string> scan_placeholders(std::string_view text) {
    std::set<std::string> names;
    std::size_t pos = 0;
    while ((pos = text.find('{', pos)) != std::string_view::npos) {
        auto end = text.find('}', pos + 1);
        if (end == std::string_view::npos) break;
        std::string_view name = text.substr(pos + 1, end - pos - 1);
        bool ident = !name.empty();
        for (char c : name)
            if (!(c == '_' || (c >= 'a' && c <= 'z'))) ident = false;
        if (ident) {
            names.emplace(name);
            pos = end + 1;
        } else {
            pos = pos + 1;
        }
    }
    return names;
}

inline std::string substitute(std::string_view text,
                              const std::map<std::string, std::string>& values,
                              const std::string& template_name) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        auto close = text.find('}', open + 1);
        std::string_view name =
            close == std::string_view::npos ? std::string_view{} : text.substr(open + 1, close - open - 1);
        bool ident = !name.empty();
        for (char c : name)
            if (!(c == '_' || (c >= 'a' && c <= 'z'))) ident = false;
        if (!ident) {
            out.append(text.substr(pos, open - pos + 1));
            pos = open + 1;
            continue;
        }
        out.append(text.substr(pos, open - pos));
        auto it = values.find(std::string(name));
        if (it == values.end())
            raise(Errc::TemplateError, "template '" + template_name +
                                           "' missing placeholder value for {" +
                                           std::string(name) + "}");
        out.append(it->second);
        pos = close + 1;
    }
    return out;
}

/// The verification templates ship as one blob each; the leading paragraph
/// (up to the first blank line) is the system prompt, the rest the user
/// prompt.
inline std::pair<std::string, std::string> split_template_blob(std::string_view blob) {
    auto pos = blob.find("\n\n");
    if (pos == std::string_view::npos)
        raise(Errc::TemplateError, "template blob has no system/user separator");
    return {std::string(blob.substr(0, pos)), std::string(blob.substr(pos + 2))};
}

}  // namespace detail

inline PromptTemplate make_template(std::string name, std::string_view system_tpl,
                                    std::string_view user_tpl) {
    PromptTemplate t;
    t.name = std::move(name);
    t.system_template = std::string(system_tpl);
    t.user_template = std::string(user_tpl);
    t.required_placeholders = detail::scan_placeholders(t.system_template);
    auto user_names = detail::scan_placeholders(t.user_template);
    t.required_placeholders.insert(user_names.begin(), user_names.end());
    return t;
}

inline PromptTemplate make_template_from_blob(std::string name, std::string_view blob) {
    auto [system_tpl, user_tpl] = detail::split_template_blob(blob);
    return make_template(std::move(name), system_tpl, user_tpl);
}

inline const PromptTemplate& specialist_template() {
    static const PromptTemplate t =
        make_template("specialist", kSpecialistSystemTemplate, kSpecialistUserTemplate);
    return t;
}

inline const PromptTemplate& verify_formulate_template() {
    static const PromptTemplate t =
        make_template_from_blob("verify_formulate", kVerifyFormulateTemplate);
    return t;
}

inline const PromptTemplate& verify_independent_template() {
    static const PromptTemplate t =
        make_template_from_blob("verify_independent", kVerifyIndependentTemplate);
    return t;
}

inline const PromptTemplate& verify_reference_template() {
    static const PromptTemplate t =
        make_template_from_blob("verify_reference", kVerifyReferenceTemplate);
    return t;
}

inline const PromptTemplate& curation_template() {
    static const PromptTemplate t =
        make_template("curation_letter", kSpecialistSystemTemplate, kCurationLetterTemplate);
    return t;
}

/// Renders both prompt halves, rejecting incomplete placeholder maps.
inline std::pair<std::string, std::string> render_template(
    const PromptTemplate& tpl, const std::map<std::string, std::string>& values) {
    return {detail::substitute(tpl.system_template, values, tpl.name),
            detail::substitute(tpl.user_template, values, tpl.name)};
}

/// "A. <text>" ... "D. <text>", one option per line.
inline std::string format_options(const QuestionRecord& question) {
    std::string out;
    for (AnswerLetter a : kAllLetters) {
        if (!out.empty()) out.push_back('\n');
        out.push_back(letter_char(a));
        out.append(". ");
        out.append(question.option(a));
    }
    return out;
}

inline ChatRequest render_specialist_prompt(const SpecialistIdentity& specialist,
                                            const QuestionRecord& question,
                                            const std::string& knowledge_context = "",
                                            std::optional<std::uint64_t> seed = std::nullopt) {
    validate_question(question);
    std::map<std::string, std::string> values = {
        {"specialty", std::string(specialty_prompt_phrase(specialist.specialty))},
        {"knowledge_context", knowledge_context},
        {"question", question.stem},
        {"options", format_options(question)},
    };
    auto [system_prompt, user_prompt] = render_template(specialist_template(), values);
    ChatRequest req;
    req.system_prompt = std::move(system_prompt);
    req.user_prompt = std::move(user_prompt);
    req.params = GenerationParams::for_stage(Stage::SpecialistAnswer, seed);
    return req;
}

inline ChatRequest render_curation_prompt(const SpecialistIdentity& specialist,
                                          const QuestionRecord& question,
                                          std::optional<std::uint64_t> seed = std::nullopt) {
    validate_question(question);
    std::map<std::string, std::string> values = {
        {"specialty", std::string(specialty_prompt_phrase(specialist.specialty))},
        {"knowledge_context", ""},
        {"question", question.stem},
        {"options", format_options(question)},
    };
    auto [system_prompt, user_prompt] = render_template(curation_template(), values);
    ChatRequest req;
    req.system_prompt = std::move(system_prompt);
    req.user_prompt = std::move(user_prompt);
    req.params = GenerationParams::for_stage(Stage::CurationLetter, seed);
    return req;
}

// ---------------------------------------------------------------------------
// Response parsing

namespace detail {

inline bool is_alnum(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

/// Positions of standalone uppercase A-D tokens (non-alphanumeric on both
/// sides) at or after `from`.
inline std::vector<std::size_t> standalone_letters(std::string_view text, std::size_t from = 0) {
    std::vector<std::size_t> hits;
    for (std::size_t i = from; i < text.size(); ++i) {
        char c = text[i];
        if (c < 'A' || c > 'D') continue;
        bool left_ok = i == 0 || !is_alnum(text[i - 1]);
        bool right_ok = i + 1 == text.size() || !is_alnum(text[i + 1]);
        if (left_ok && right_ok) hits.push_back(i);
    }
    return hits;
}

inline std::size_t line_end(std::string_view text, std::size_t pos) {
    auto nl = text.find('\n', pos);
    return nl == std::string_view::npos ? text.size() : nl;
}

/// Byte offsets just past every case-insensitive `word:` match.
inline std::vector<std::size_t> field_positions(std::string_view text, std::string_view word) {
    std::vector<std::size_t> out;
    std::string lower = to_lower_ascii(text);
    std::string needle = to_lower_ascii(word);
    std::size_t pos = 0;
    while ((pos = lower.find(needle, pos)) != std::string::npos) {
        std::size_t after = pos + needle.size();
        while (after < lower.size() && (lower[after] == ' ' || lower[after] == '\t')) ++after;
        if (after < lower.size() && lower[after] == ':') out.push_back(after + 1);
        pos += needle.size();
    }
    return out;
}

/// Case-insensitive positions of a bare word (no colon required).
inline std::vector<std::size_t> word_positions(std::string_view text, std::string_view word) {
    std::vector<std::size_t> out;
    std::string lower = to_lower_ascii(text);
    std::string needle = to_lower_ascii(word);
    std::size_t pos = 0;
    while ((pos = lower.find(needle, pos)) != std::string::npos) {
        out.push_back(pos);
        pos += needle.size();
    }
    return out;
}

struct LetterParse {
    AnswerLetter letter;
    std::set<ParseFlag> flags;
};

inline std::optional<LetterParse> parse_answer_letter(std::string_view raw) {
    // 1. ANSWER: field; the last field occurrence that carries a letter wins.
    auto fields = field_positions(raw, "answer");
    for (auto it = fields.rbegin(); it != fields.rend(); ++it) {
        std::size_t end = line_end(raw, *it);
        auto hits = standalone_letters(raw.substr(0, end), *it);
        if (hits.empty()) continue;
        LetterParse out{*letter_from_char(raw[hits.front()]), {}};
        std::set<char> distinct;
        for (auto h : hits) distinct.insert(raw[h]);
        if (distinct.size() > 1) out.flags.insert(ParseFlag::AnswerAmbiguous);
        return out;
    }
    // 2. First standalone letter after the last "ANSWER" mention.
    auto mentions = word_positions(raw, "answer");
    if (!mentions.empty()) {
        auto hits = standalone_letters(raw, mentions.back());
        if (!hits.empty())
            return LetterParse{*letter_from_char(raw[hits.front()]),
                               {ParseFlag::AnswerRegexFallback}};
    }
    // 3. First standalone letter anywhere.
    auto hits = standalone_letters(raw);
    if (!hits.empty())
        return LetterParse{*letter_from_char(raw[hits.front()]),
                           {ParseFlag::AnswerAnywhereFallback}};
    return std::nullopt;
}

struct ConfidenceParse {
    double value;
    std::set<ParseFlag> flags;
};

inline ConfidenceParse parse_confidence(std::string_view raw) {
    static const std::regex number_re(R"((-?[0-9]+[.,][0-9]+|-?[.,][0-9]+|-?[0-9]+)\s*(%?))");
    auto fields = field_positions(raw, "confidence");
    for (auto it = fields.rbegin(); it != fields.rend(); ++it) {
        std::size_t end = line_end(raw, *it);
        std::string body(raw.substr(*it, end - *it));
        std::smatch m;
        if (!std::regex_search(body, m, number_re)) continue;
        std::string num = m[1].str();
        ConfidenceParse out{0.0, {}};
        if (num.find(',') != std::string::npos) {
            for (char& c : num)
                if (c == ',') c = '.';
            out.flags.insert(ParseFlag::ConfidenceCommaDecimal);
        }
        double v = std::stod(num);
        if (m[2].length() > 0) {
            v /= 100.0;
            out.flags.insert(ParseFlag::ConfidencePercent);
        }
        if (v < 0.0 || v > 1.0) {
            v = v < 0.0 ? 0.0 : 1.0;
            out.flags.insert(ParseFlag::ConfidenceClamped);
        }
        out.value = v;
        return out;
    }
    return ConfidenceParse{0.5, {ParseFlag::ConfidenceDefaulted}};
}

struct ReasoningParse {
    std::string text;
    std::set<ParseFlag> flags;
};

inline ReasoningParse parse_reasoning(std::string_view raw) {
    auto fields = field_positions(raw, "reasoning");
    if (!fields.empty()) {
        // body runs to the next ANSWER/CONFIDENCE field line, if any follows
        std::size_t begin = fields.back();
        std::size_t stop = raw.size();
        for (std::string_view word : {"answer", "confidence"}) {
            for (std::size_t f : field_positions(raw, word)) {
                if (f <= begin) continue;
                auto line_start = raw.rfind('\n', f);
                if (line_start != std::string_view::npos && line_start >= begin &&
                    line_start < stop)
                    stop = line_start;
            }
        }
        return ReasoningParse{std::string(trim(raw.substr(begin, stop - begin))), {}};
    }
    // Fall back to the chain-of-thought body: from the first STEP_1 mention
    // up to the ANSWER field, when both exist in that order.
    auto steps = word_positions(raw, "step_1");
    if (steps.empty()) steps = word_positions(raw, "step 1");
    if (!steps.empty()) {
        std::size_t begin = steps.front();
        std::size_t stop = raw.size();
        for (std::size_t f : field_positions(raw, "answer"))
            if (f > begin) {
                auto line_start = raw.rfind('\n', f);
                stop = line_start == std::string_view::npos ? 0 : line_start;
                break;
            }
        if (stop > begin)
            return ReasoningParse{std::string(trim(raw.substr(begin, stop - begin))),
                                  {ParseFlag::ReasoningFromSteps}};
    }
    return ReasoningParse{std::string(trim(raw)), {ParseFlag::ReasoningFromRaw}};
}

}  // namespace detail

/// Extracts answer letter, confidence, and reasoning from a specialist
/// completion. Fallbacks are flagged, never silent; the only hard failure is
/// a text without any standalone A-D token.
inline SpecialistResponse parse_specialist_response(
    std::string_view raw, const SpecialistIdentity& specialist = identity_for(Specialty::Respiratory)) {
    if (trim(raw).empty()) raise(Errc::NoAnswerLetter, "empty specialist response");
    SpecialistResponse resp;
    resp.specialist = specialist;
    resp.raw_text = std::string(raw);

    auto letter = detail::parse_answer_letter(raw);
    if (!letter) raise(Errc::NoAnswerLetter, "no A-D token in specialist response");
    resp.answer = letter->letter;
    resp.parse_flags.insert(letter->flags.begin(), letter->flags.end());

    auto conf = detail::parse_confidence(raw);
    resp.initial_confidence = conf.value;
    resp.parse_flags.insert(conf.flags.begin(), conf.flags.end());

    auto reasoning = detail::parse_reasoning(raw);
    resp.reasoning = std::move(reasoning.text);
    resp.parse_flags.insert(reasoning.flags.begin(), reasoning.flags.end());
    return resp;
}

/// One specialist consultation: render, one backend call, parse.
inline SpecialistResponse consult(const SpecialistIdentity& specialist,
                                  const QuestionRecord& question, ChatClient& backend,
                                  const std::string& knowledge_context = "") {
    ChatRequest req = render_specialist_prompt(
        specialist, question, knowledge_context,
        derive_seed(question.id, specialist, Stage::SpecialistAnswer));
    Completion completion = backend.complete(req);
    return parse_specialist_response(completion.text, specialist);
}

inline SpecialistResponse consult(Specialty specialty, const QuestionRecord& question,
                                  ChatClient& backend,
                                  const std::string& knowledge_context = "") {
    return consult(identity_for(specialty), question, backend, knowledge_context);
}

}  // namespace marc
