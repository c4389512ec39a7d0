#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>

#include "polarsim/domain.hpp"

namespace polarsim {

using PromptVars = std::map<std::string, std::string, std::less<>>;

/// Substitutes every {{name}} in the template. Throws Error when the
/// template references a name missing from vars or a "{{" is unterminated.
std::string render_template(std::string_view tmpl, const PromptVars& vars);

/// Built-in template text by stage name (expression, decision, persuasion,
/// update, check_expression, check_persuasion, check_update, perception,
/// study), without its trailing newline.
std::string_view prompt_template(std::string_view name);

/// The five `"label" means you think description.` lines, joined by '\n'.
std::string standpoint_lines(const IssueDefinition& issue);

/// One "\n"-prefixed trait line per disposition, in kind order.
std::string trait_lines(std::span<const DispositionKind> kinds);

/// Messages numbered "[1] text [2] text ..." in the given order; "none" when
/// empty.
std::string message_list(std::span<const Message> messages);

std::string render_expression_prompt(const IssueDefinition& issue, Opinion self);
std::string render_decision_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason,
                                   Opinion partner, std::string_view partner_reason,
                                   std::span<const DispositionKind> traits);
std::string render_persuasion_prompt(const IssueDefinition& issue, std::string_view self_reason,
                                     std::span<const Message> history, std::string_view partner_reason);
std::string render_update_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason,
                                 std::span<const Message> inbox, std::span<const DispositionKind> traits);
std::string render_check_expression_prompt(const IssueDefinition& issue, Opinion self, std::string_view reason);
std::string render_check_persuasion_prompt(const IssueDefinition& issue, Opinion self, std::string_view message);
std::string render_check_update_prompt(const IssueDefinition& issue, Opinion prior, Opinion proposed,
                                       std::string_view self_reason, std::span<const Message> inbox);
std::string render_perception_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason,
                                     Opinion target, std::string_view target_reason);
std::string render_study_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason);

}  // namespace polarsim
