#pragma once

#include <string_view>
#include <unordered_set>
#include <vector>

#include "marc/common.hpp"

// Prompt templates and the stopword list, embedded so the library needs no
// runtime asset path. The same content ships as plain-text files under
// assets/; a test asserts the two stay byte-identical.

namespace marc {

inline constexpr std::string_view kSpecialistSystemTemplate =
    R"TPL(You are an expert medical specialist in {specialty}.
You have deep knowledge in this specific domain and are
consulting on a medical case.

{knowledge_context}

Your task is to:
1. Analyze the question from your specialty's perspective
2. Provide your expert opinion on the correct answer
3. Explain your reasoning clearly
4. Include relevant medical knowledge from your specialty

Be precise, evidence-based, and focus on your area of expertise.
)TPL";

inline constexpr std::string_view kSpecialistUserTemplate =
    R"TPL(Question: {question}

Options:
{options}

As a {specialty} specialist, please use CHAIN-OF-THOUGHT reasoning:

STEP 1: Understand the clinical scenario
- What are the key symptoms, signs, or findings?
- What is the patient's presentation?
- What is the clinical context?

STEP 2: Consider differential diagnoses from your specialty
- What conditions in your specialty could explain this?
- What are the diagnostic criteria for each?
- What are the distinguishing features?

STEP 3: Evaluate each option systematically
- For EACH option, evaluate:
  * Is this medically correct?
  * Does this fit the clinical scenario?
  * What evidence supports or refutes this?

STEP 4: Compare options
- Which option best fits the clinical scenario?
- Which option has the strongest evidence?

STEP 5: Make your decision
- Select the most appropriate answer
- Provide confidence score (0-1)

IMPORTANT: For ANSWER, provide ONLY the option LETTER
(A, B, C, or D). Do NOT provide the full text.

Format your response as:
STEP_1_ANALYSIS: [clinical scenario analysis]
STEP_2_DIFFERENTIAL: [differential diagnoses]
STEP_3_OPTION_EVALUATION: [evaluation of each option]
STEP_4_COMPARISON: [comparison of options]
STEP_5_DECISION: [final decision reasoning]
ANSWER: [Single letter: A, B, C, or D]
CONFIDENCE: [0.0-1.0]
REASONING: [detailed explanation]
)TPL";

inline constexpr std::string_view kVerifyFormulateTemplate =
    R"TPL(You are a medical verification expert. Your task is to
formulate verification questions based on the explanation.

Question: {question}
Proposed Answer: {answer}
Explanation: {reasoning}

Based on the explanation above, formulate exactly 4 specific
verification questions that check the factual claims made in
the explanation. These questions should:
1. Target specific medical facts or claims in the explanation
2. Be answerable independently (without the explanation)
3. Help verify the correctness of the reasoning
4. Cover the key factual claims in the explanation

Format your response as:
VERIFICATION_QUESTIONS:
1. [First question]
2. [Second question]
3. [Third question]
4. [Fourth question]
)TPL";

inline constexpr std::string_view kVerifyIndependentTemplate =
    R"TPL(You are a medical expert. Answer the following verification
questions based on your medical knowledge.

Original Question Context: {question}

Verification Questions:
{verification_questions}

IMPORTANT: Answer these questions based on your medical
knowledge ONLY. Do NOT reference any specific explanation
or reasoning from the original question.

Format your response as:
ANSWERS:
1. [Answer to first question]
2. [Answer to second question]
3. [Answer to third question]
4. [Answer to fourth question]
)TPL";

inline constexpr std::string_view kVerifyReferenceTemplate =
    R"TPL(You are a medical expert. Answer the following verification
questions while referencing the provided explanation.

Original Question Context: {question}

Original Explanation:
{reasoning}

Verification Questions:
{verification_questions}

IMPORTANT: Answer these questions while referencing the
explanation above. Use the explanation to guide your answers.

Format your response as:
ANSWERS:
1. [Answer to first question]
2. [Answer to second question]
3. [Answer to third question]
4. [Answer to fourth question]
)TPL";

inline constexpr std::string_view kCurationLetterTemplate =
    R"TPL(Question: {question}

Options:
{options}

Respond with ONLY the single option letter (A, B, C, or D). Do not explain.
)TPL";

inline constexpr std::string_view kStopwordsVersion = "v1";

inline constexpr std::string_view kStopwordsText =
    R"SW(a
about
above
after
again
against
all
am
an
and
any
are
as
at
be
because
been
before
being
below
between
both
but
by
can
cannot
could
did
do
does
doing
down
during
each
few
for
from
further
had
has
have
having
he
her
here
hers
herself
him
himself
his
how
i
if
in
into
is
it
its
itself
just
me
more
most
my
myself
no
nor
not
now
of
off
on
once
only
or
other
our
ours
ourselves
out
over
own
same
she
should
so
some
such
than
that
the
their
theirs
them
themselves
then
there
these
they
this
those
through
to
too
under
until
up
very
was
we
were
what
when
where
which
while
who
whom
why
will
with
would
you
your
yours
yourself
yourselves
)SW";

inline const std::unordered_set<std::string>& default_stopwords() {
    static const std::unordered_set<std::string> words = [] {
        std::unordered_set<std::string> out;
        for (const std::string& line : split_lines(kStopwordsText))
            if (auto w = trim(line); !w.empty()) out.emplace(w);
        return out;
    }();
    return words;
}

inline std::string stopwords_hash() { return sha256_hex(kStopwordsText); }

/// SHA-256 of every shipped template, keyed by asset name. Recorded in run
/// manifests so a report can be traced back to exact prompt content.
inline std::vector<std::pair<std::string, std::string>> template_hashes() {
    return {
        {"specialist_system", sha256_hex(kSpecialistSystemTemplate)},
        {"specialist_user", sha256_hex(kSpecialistUserTemplate)},
        {"verify_formulate", sha256_hex(kVerifyFormulateTemplate)},
        {"verify_independent", sha256_hex(kVerifyIndependentTemplate)},
        {"verify_reference", sha256_hex(kVerifyReferenceTemplate)},
        {"curation_letter", sha256_hex(kCurationLetterTemplate)},
    };
}

}  // namespace marc
