#pragma once

#include <map>
#include <string>
#include <vector>

#include "mabdqa/errors.hpp"

namespace mabdqa {

// The eight prompt templates, named by function.
enum class TemplateId {
    kDecompose,            // query -> comma-separated key phrases
    kJudgeEvidence,        // page relevance rating 1-5
    kGradeAnswer,          // binary correctness vs ground truth
    kAnswerQuestion,       // concise answer from page screenshots
    kRewriteQuestion,      // question clarification rewrite
    kReflectAnswer,        // did-the-answer-address-the-question yes/no
    kSummarizeHypergraph,  // core-concept analysis with aspect hints
    kRefineAnswer,         // improved answer from initial answer + summary
};

constexpr int kTemplateCount = 8;

const char* template_name(TemplateId id);
TemplateId template_from_name(const std::string& name);
const std::string& template_text(TemplateId id);

// Substitutes {field} slots from the map; "{{" and "}}" become literal
// braces. Missing fields are contract violations.
std::string render_template(TemplateId id, const std::map<std::string, std::string>& fields);

// Verbal confidence bucket for the judge prompt's priori slot.
std::string priori_bucket(double li_norm);

// Comma-separated phrase list: trim, drop empties, case-insensitive dedup
// keeping first occurrences, cap at max_items.
std::vector<std::string> parse_comma_list(const std::string& reply, std::size_t max_items);

// Last standalone integer in [1,5]; throws ParseError when none exists.
int parse_last_rating(const std::string& reply);

// First JSON object in the reply, field "binary_correctness" as 0/1.
int parse_binary_grade(const std::string& reply);

// First whitespace-token, case-insensitive; only an explicit "yes" counts.
bool parse_yes_no(const std::string& reply);

std::string trim(const std::string& s);

}  // namespace mabdqa
