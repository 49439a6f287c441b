#pragma once

#include <vector>

#include "marc/core.hpp"

namespace marc {

struct FusionInput {
    AnswerLetter answer = AnswerLetter::A;
    double s_score = 0.0;
};

/// S-Score Weighted Fusion. Per candidate a, score(a) = votes(a) x mean
/// supporter S-score; the winner is the argmax. Perfect score ties fall to
/// the higher max supporter S-score, then to fixed letter order, and set
/// tie_broken. Confidence: max S over all agents when the vote is unanimous,
/// otherwise v * mean + (1 - v) * min over the winner's supporters, with v
/// the winner's vote fraction.
inline FusionOutcome fuse(const std::vector<FusionInput>& inputs, int expected_agents = 4) {
    if (inputs.empty()) raise(Errc::EmptyInput, "fuse() with no specialist inputs");
    if (static_cast<int>(inputs.size()) != expected_agents)
        raise(Errc::BadInput, "fuse() expected " + std::to_string(expected_agents) +
                                  " inputs, got " + std::to_string(inputs.size()));
    for (const FusionInput& in : inputs)
        if (!(in.s_score >= 0.0 && in.s_score <= 1.0))
            raise(Errc::BadScore, "s_score outside [0,1]");

    FusionOutcome out;
    for (const FusionInput& in : inputs) {
        auto [it, fresh] = out.candidate_scores.try_emplace(in.answer);
        CandidateScore& cs = it->second;
        if (fresh) {
            cs.min_s = in.s_score;
            cs.max_s = in.s_score;
        } else {
            if (in.s_score < cs.min_s) cs.min_s = in.s_score;
            if (in.s_score > cs.max_s) cs.max_s = in.s_score;
        }
        cs.votes += 1;
        cs.mean_s += in.s_score;  // running sum; divided below
    }
    for (auto& [letter, cs] : out.candidate_scores) {
        cs.mean_s = cs.mean_s / static_cast<double>(cs.votes);
        cs.score = static_cast<double>(cs.votes) * cs.mean_s;
    }

    // Argmax over scores. Score ties fall to the higher max supporter
    // S-score; the map iterates in letter order, so remaining ties keep the
    // earliest letter.
    const CandidateScore* best = nullptr;
    for (const auto& [letter, cs] : out.candidate_scores) {
        if (!best || cs.score > best->score ||
            (cs.score == best->score && cs.max_s > best->max_s)) {
            out.final_answer = letter;
            best = &cs;
        }
    }
    bool tie = false;
    for (const auto& [letter, cs] : out.candidate_scores)
        if (letter != out.final_answer && cs.score == best->score) tie = true;
    out.tie_broken = tie;

    const CandidateScore& win = out.candidate_scores.at(out.final_answer);
    out.vote_fraction = static_cast<double>(win.votes) / static_cast<double>(expected_agents);
    out.unanimous = out.candidate_scores.size() == 1 &&
                    win.votes == expected_agents;
    if (out.unanimous) {
        out.calibrated_confidence = win.max_s;
    } else {
        const double v = out.vote_fraction;
        out.calibrated_confidence = v * win.mean_s + (1.0 - v) * win.min_s;
    }
    return out;
}

}  // namespace marc
