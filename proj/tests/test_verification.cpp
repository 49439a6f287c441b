#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "marc/verification.hpp"
#include "support/corpus_runner.hpp"
#include "support/test_util.hpp"

using namespace marc;

namespace {

Backend make_mock(const fs::path& dir, const std::vector<json>& entries) {
    fs::path script = dir / "script.jsonl";
    std::ofstream out(script);
    for (const json& e : entries) out << e.dump() << '\n';
    out.close();
    BackendConfig cfg;
    cfg.kind = BackendKind::ScriptedMock;
    cfg.script_path = script.string();
    return Backend(cfg);
}

SpecialistResponse scripted_response(double confidence) {
    SpecialistResponse r;
    r.specialist = identity_for(Specialty::Respiratory);
    r.answer = AnswerLetter::B;
    r.reasoning = "scripted reasoning body for verification";
    r.initial_confidence = confidence;
    return r;
}

std::string numbered(const std::vector<std::string>& items, const std::string& header) {
    std::string out = header + "\n";
    for (std::size_t i = 0; i < items.size(); ++i)
        out += std::to_string(i + 1) + ". " + items[i] + "\n";
    return out;
}

}  // namespace

TEST_CASE("tokenize_filtered lowercases, splits, and drops stopwords") {
    REQUIRE(tokenize_filtered("The heart pumps blood.") ==
            std::set<std::string>{"heart", "pumps", "blood"});
    REQUIRE(tokenize_filtered("").empty());
    REQUIRE(tokenize_filtered("A a A").empty());
    REQUIRE(tokenize_filtered("beta-blocker dose: 2.5mg!") ==
            std::set<std::string>{"beta", "blocker", "dose", "2", "5mg"});
}

TEST_CASE("jaccard basics") {
    std::set<std::string> xyz = {"x", "y", "z"};
    std::set<std::string> yzw = {"y", "z", "w"};
    REQUIRE(jaccard(xyz, xyz) == 1.0);
    REQUIRE(jaccard(xyz, {"p", "q"}) == 0.0);
    REQUIRE(jaccard(xyz, yzw) == 0.5);  // 2 shared of 4 total
    REQUIRE(jaccard({}, {}) == 1.0);
}

TEST_CASE("jaccard is symmetric and bounded on random token sets") {
    std::mt19937_64 gen(4242);
    std::vector<std::string> universe;
    for (int i = 0; i < 30; ++i) universe.push_back("tok" + std::to_string(i));
    for (int iter = 0; iter < 2000; ++iter) {
        std::set<std::string> a, b;
        for (const auto& t : universe) {
            if (gen() % 3 == 0) a.insert(t);
            if (gen() % 3 == 0) b.insert(t);
        }
        double ab = jaccard(a, b);
        REQUIRE(ab == jaccard(b, a));
        REQUIRE(ab >= 0.0);
        REQUIRE(ab <= 1.0);
        if (a == b) REQUIRE(ab == 1.0);
    }
}

TEST_CASE("pair_consistent applies the primary and secondary thresholds") {
    SimilarityConfig cfg;

    SECTION("identical answers are consistent with similarity 1") {
        PairResult r = pair_consistent("mitral stenosis causes the murmur",
                                       "mitral stenosis causes the murmur", cfg);
        REQUIRE(r.parsed);
        REQUIRE(r.similarity == 1.0);
        REQUIRE(r.consistent);
    }

    SECTION("token-disjoint answers are inconsistent") {
        PairResult r = pair_consistent("aortic dissection tearing pain",
                                       "pulmonary embolus hypoxemia clot", cfg);
        REQUIRE(r.similarity == 0.0);
        REQUIRE_FALSE(r.consistent);
    }

    SECTION("similarity 0.35 with content similarity 0.67 passes the secondary check") {
        // 7 shared of 20 total tokens; content words 2 shared of 3
        std::string ind =
            "kx1 kx2 kx3 kx4 kx5 longwordone longwordtwo gradienta pa1 pa2 pa3 pa4 pa5";
        std::string ref =
            "kx1 kx2 kx3 kx4 kx5 longwordone longwordtwo pb1 pb2 pb3 pb4 pb5 pb6 pb7";
        PairResult r = pair_consistent(ind, ref, cfg);
        REQUIRE(r.similarity == 7.0 / 20.0);
        REQUIRE(r.content_similarity == 2.0 / 3.0);
        REQUIRE_FALSE(r.similarity > cfg.jaccard_threshold);
        REQUIRE(r.consistent);
    }

    SECTION("exactly tau is not strictly greater, so not consistent") {
        // 4 shared of 10 tokens = 0.4 exactly; content words disjoint
        std::string ind = "kc1 kc2 kc3 kc4 alphaword xq1";
        std::string ref = "kc1 kc2 kc3 kc4 betaword yq1 yq2 yq3";
        PairResult r = pair_consistent(ind, ref, cfg);
        REQUIRE(r.similarity == 4.0 / 10.0);
        REQUIRE(r.content_similarity == 0.0);
        REQUIRE_FALSE(r.consistent);
    }

    SECTION("pair_consistent is symmetric") {
        std::string a = "renin cascade elevates arterial pressor tone";
        std::string b = "arterial pressure rises through renin signaling";
        PairResult ab = pair_consistent(a, b, cfg);
        PairResult ba = pair_consistent(b, a, cfg);
        REQUIRE(ab.similarity == ba.similarity);
        REQUIRE(ab.content_similarity == ba.content_similarity);
        REQUIRE(ab.consistent == ba.consistent);
    }
}

TEST_CASE("inconsistency_score counts failed pairs over parsed pairs") {
    auto consistent = PairResult{true, 1.0, 1.0, true};
    auto inconsistent = PairResult{true, 0.0, 0.0, false};
    auto absent = PairResult{};

    SECTION("all sixteen parsed patterns match the direct count") {
        for (int mask = 0; mask < 16; ++mask) {
            std::vector<PairResult> pairs;
            int bad = 0;
            for (int j = 0; j < 4; ++j) {
                bool ok = (mask >> j) & 1;
                pairs.push_back(ok ? consistent : inconsistent);
                if (!ok) ++bad;
            }
            auto [i_score, n] = inconsistency_score(pairs);
            REQUIRE(n == 4);
            REQUIRE(i_score == static_cast<double>(bad) / 4.0);
        }
    }

    SECTION("unparsed pairs are excluded from the denominator") {
        auto [i_score, n] =
            inconsistency_score({inconsistent, absent, inconsistent, inconsistent});
        REQUIRE(n == 3);
        REQUIRE(i_score == 1.0);
    }

    SECTION("zero parsed pairs yields N = 0 for the caller policy") {
        auto [i_score, n] = inconsistency_score({absent, absent});
        REQUIRE(n == 0);
        REQUIRE(i_score == 0.0);
    }
}

TEST_CASE("s_score formulas") {
    SScoreVariant mult{SScoreVariantKind::Multiplicative, 0.65};
    SScoreVariant wavg{SScoreVariantKind::WeightedAverage, 0.65};
    SScoreVariant pure{SScoreVariantKind::PureConsistency, 0.65};

    REQUIRE(s_score(0.9, 0.0, mult) == 0.9);
    REQUIRE(s_score(0.7, 1.0, mult) == 0.0);
    REQUIRE(s_score(0.8, 0.5, wavg) ==
            Catch::Approx(0.65 * 0.8 + 0.35 * 0.5).margin(1e-12));
    REQUIRE(s_score(0.8, 0.5, wavg) == Catch::Approx(0.695).margin(1e-12));
    REQUIRE(s_score(0.3, 0.25, pure) == 0.75);

    SECTION("grid equivalence against the direct formulas") {
        for (int ci = 0; ci <= 20; ++ci) {
            for (int ii = 0; ii <= 20; ++ii) {
                double c = ci / 20.0;
                double i = ii / 20.0;
                REQUIRE(s_score(c, i, mult) == c * (1.0 - i));
                REQUIRE(s_score(c, i, wavg) == 0.65 * c + (1.0 - 0.65) * (1.0 - i));
                REQUIRE(s_score(c, i, pure) == 1.0 - i);
            }
        }
    }

    SECTION("monotone in the documented directions") {
        for (int ci = 0; ci <= 20; ++ci) {
            for (int ii = 0; ii + 1 <= 20; ++ii) {
                double c = ci / 20.0;
                REQUIRE(s_score(c, ii / 20.0, mult) >= s_score(c, (ii + 1) / 20.0, mult));
                REQUIRE(s_score(c, ii / 20.0, wavg) >= s_score(c, (ii + 1) / 20.0, wavg));
                REQUIRE(s_score(c, ii / 20.0, pure) >= s_score(c, (ii + 1) / 20.0, pure));
            }
        }
        for (int ii = 0; ii <= 20; ++ii) {
            for (int ci = 0; ci + 1 <= 20; ++ci) {
                double i = ii / 20.0;
                REQUIRE(s_score((ci + 1) / 20.0, i, mult) >= s_score(ci / 20.0, i, mult));
                REQUIRE(s_score((ci + 1) / 20.0, i, wavg) >= s_score(ci / 20.0, i, wavg));
            }
        }
    }

    SECTION("domain violations raise BadScore") {
        REQUIRE_THROWS_AS(s_score(1.2, 0.0, mult), Error);
        REQUIRE_THROWS_AS(s_score(0.5, -0.1, mult), Error);
    }

    SECTION("alpha outside (0,1) is rejected") {
        SScoreVariant bad{SScoreVariantKind::WeightedAverage, 1.0};
        REQUIRE_THROWS_AS(bad.validate(), Error);
    }
}

TEST_CASE("verification question and answer corpus entries parse as documented") {
    json corpus = test::load_parser_corpus();
    for (const json& entry : corpus.at("questions")) {
        INFO(entry.at("name").get<std::string>());
        REQUIRE(test::check_questions_entry(entry) == "");
    }
    for (const json& entry : corpus.at("answers")) {
        INFO(entry.at("name").get<std::string>());
        REQUIRE(test::check_answers_entry(entry) == "");
    }
}

TEST_CASE("verify composes the full two-phase pipeline") {
    SimilarityConfig sim;
    SScoreVariant mult{SScoreVariantKind::Multiplicative, 0.65};
    QuestionRecord q = test::make_question("verify-1", AnswerLetter::B);
    std::vector<std::string> vq = {"check alpha claim?", "check beta claim?",
                                   "check gamma claim?", "check delta claim?"};

    SECTION("happy path: four consistent pairs keep full confidence") {
        test::TempDir dir("verify_happy");
        std::string answers = numbered({"stable shared finding one", "stable shared finding two",
                                        "stable shared finding three", "stable shared finding four"},
                                       "ANSWERS:");
        Backend backend = make_mock(
            dir.path(),
            {json{{"stage", "verify_questions"},
                  {"match", "verify-1"},
                  {"response", numbered(vq, "VERIFICATION_QUESTIONS:")}},
             json{{"stage", "verify_independent"}, {"match", "verify-1"}, {"response", answers}},
             json{{"stage", "verify_reference"}, {"match", "verify-1"}, {"response", answers}}});

        VerificationTrace trace = verify(q, scripted_response(0.9), mult, sim, backend);
        REQUIRE(trace.questions == vq);
        REQUIRE(trace.parsed_pairs == 4);
        REQUIRE(trace.inconsistency == 0.0);
        REQUIRE(trace.s_score == 0.9);
        REQUIRE(trace.backend_calls == 3);
        REQUIRE(backend.calls() == 3);
        REQUIRE_FALSE(trace.failure.has_value());
        REQUIRE(trace.flags.empty());
    }

    SECTION("two of four inconsistent pairs halve a 0.8 confidence") {
        test::TempDir dir("verify_half");
        std::string ind = numbered({"baroreceptor pressor cascade elevation",
                                    "catecholamine surge tachyarrhythmia output",
                                    "stable shared finding three", "stable shared finding four"},
                                   "ANSWERS:");
        std::string ref = numbered({"biliary sludge icterus obstruction",
                                    "glomerular sclerosis proteinuria nephron",
                                    "stable shared finding three", "stable shared finding four"},
                                   "ANSWERS:");
        Backend backend = make_mock(
            dir.path(),
            {json{{"stage", "verify_questions"},
                  {"match", "verify-1"},
                  {"response", numbered(vq, "VERIFICATION_QUESTIONS:")}},
             json{{"stage", "verify_independent"}, {"match", "verify-1"}, {"response", ind}},
             json{{"stage", "verify_reference"}, {"match", "verify-1"}, {"response", ref}}});

        VerificationTrace trace = verify(q, scripted_response(0.8), mult, sim, backend);
        REQUIRE(trace.parsed_pairs == 4);
        REQUIRE(trace.inconsistency == 0.5);
        REQUIRE(trace.s_score == 0.4);
        REQUIRE_FALSE(trace.pair_results[0].consistent);
        REQUIRE_FALSE(trace.pair_results[1].consistent);
        REQUIRE(trace.pair_results[2].consistent);
        REQUIRE(trace.pair_results[3].consistent);
    }

    SECTION("formulation failure applies the neutral fallback") {
        test::TempDir dir("verify_noq");
        Backend backend = make_mock(
            dir.path(), {json{{"stage", "verify_questions"},
                              {"match", "verify-1"},
                              {"response", "The reasoning needs no verification at all."}}});
        VerificationTrace trace = verify(q, scripted_response(0.8), mult, sim, backend);
        REQUIRE(trace.failure == VerifyFailure::NoQuestionsParsed);
        REQUIRE(trace.parsed_pairs == 0);
        REQUIRE(trace.inconsistency == 0.5);
        REQUIRE(trace.s_score == 0.4);  // 0.8 * (1 - 0.5)
        REQUIRE(trace.backend_calls == 1);
        REQUIRE(trace.flags.contains(VerifyFlag::InconsistencyDefaulted));
    }

    SECTION("independent batch failure stops after two calls") {
        test::TempDir dir("verify_noa");
        Backend backend = make_mock(
            dir.path(),
            {json{{"stage", "verify_questions"},
                  {"match", "verify-1"},
                  {"response", numbered(vq, "VERIFICATION_QUESTIONS:")}},
             json{{"stage", "verify_independent"},
                  {"match", "verify-1"},
                  {"response", "I decline to enumerate anything here."}}});
        VerificationTrace trace = verify(q, scripted_response(0.6), mult, sim, backend);
        REQUIRE(trace.failure == VerifyFailure::NoAnswersParsed);
        REQUIRE(trace.backend_calls == 2);
        REQUIRE(backend.calls() == 2);
        REQUIRE(trace.inconsistency == 0.5);
        REQUIRE(trace.s_score == 0.3);
    }

    SECTION("three formulated questions flag FewerQuestions and use N = 3") {
        test::TempDir dir("verify_three");
        std::vector<std::string> three = {vq[0], vq[1], vq[2]};
        std::string answers = numbered({"stable shared finding one", "stable shared finding two",
                                        "stable shared finding three"},
                                       "ANSWERS:");
        Backend backend = make_mock(
            dir.path(),
            {json{{"stage", "verify_questions"},
                  {"match", "verify-1"},
                  {"response", numbered(three, "VERIFICATION_QUESTIONS:")}},
             json{{"stage", "verify_independent"}, {"match", "verify-1"}, {"response", answers}},
             json{{"stage", "verify_reference"}, {"match", "verify-1"}, {"response", answers}}});
        VerificationTrace trace = verify(q, scripted_response(0.9), mult, sim, backend);
        REQUIRE(trace.questions.size() == 3);
        REQUIRE(trace.parsed_pairs == 3);
        REQUIRE(trace.flags.contains(VerifyFlag::FewerQuestions));
        REQUIRE(trace.s_score == 0.9);
    }

    SECTION("missing answer position shrinks the denominator") {
        test::TempDir dir("verify_gap");
        std::string ind = "ANSWERS:\n1. stable shared finding one\n2. stable shared finding two\n"
                          "4. stable shared finding four\n";
        std::string ref = numbered({"stable shared finding one", "stable shared finding two",
                                    "stable shared finding three", "stable shared finding four"},
                                   "ANSWERS:");
        Backend backend = make_mock(
            dir.path(),
            {json{{"stage", "verify_questions"},
                  {"match", "verify-1"},
                  {"response", numbered(vq, "VERIFICATION_QUESTIONS:")}},
             json{{"stage", "verify_independent"}, {"match", "verify-1"}, {"response", ind}},
             json{{"stage", "verify_reference"}, {"match", "verify-1"}, {"response", ref}}});
        VerificationTrace trace = verify(q, scripted_response(0.9), mult, sim, backend);
        REQUIRE(trace.parsed_pairs == 3);
        REQUIRE_FALSE(trace.pair_results[2].parsed);
        REQUIRE(trace.flags.contains(VerifyFlag::MissingAnswerPositions));
        REQUIRE(trace.inconsistency == 0.0);
        REQUIRE(trace.independent_answers[2].empty());
    }
}

TEST_CASE("verification trace lengths stay aligned") {
    SimilarityConfig sim;
    SScoreVariant mult;
    QuestionRecord q = test::make_question("verify-2");
    test::TempDir dir("verify_align");
    std::vector<std::string> vq = {"one?", "two?"};
    Backend backend = make_mock(
        dir.path(),
        {json{{"stage", "verify_questions"},
              {"match", "verify-2"},
              {"response", numbered(vq, "VERIFICATION_QUESTIONS:")}},
         json{{"stage", "verify_independent"},
              {"match", "verify-2"},
              {"response", numbered({"alpha beta", "gamma delta"}, "ANSWERS:")}},
         json{{"stage", "verify_reference"},
              {"match", "verify-2"},
              {"response", numbered({"alpha beta", "gamma delta"}, "ANSWERS:")}}});
    VerificationTrace trace = verify(q, scripted_response(0.5), mult, sim, backend);
    REQUIRE(trace.questions.size() == 2);
    REQUIRE(trace.independent_answers.size() == trace.questions.size());
    REQUIRE(trace.reference_answers.size() == trace.questions.size());
    REQUIRE(trace.pair_results.size() == trace.questions.size());
    REQUIRE(trace.flags.contains(VerifyFlag::FewerQuestions));
}
