#include "polarsim/prompts.hpp"

#include "polarsim/embedded.hpp"

namespace polarsim {

std::string render_template(std::string_view tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size() * 2);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error("unterminated placeholder in prompt template");
    const auto name = tmpl.substr(open + 2, close - open - 2);
    const auto it = vars.find(name);
    if (it == vars.end()) throw Error("prompt placeholder '" + std::string(name) + "' has no value");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string_view prompt_template(std::string_view name) {
  const auto text = embedded_resource("prompts/" + std::string(name) + ".txt");
  if (!text) throw Error("unknown prompt template '" + std::string(name) + "'");
  std::string_view t = *text;
  if (t.ends_with('\n')) t.remove_suffix(1);
  return t;
}

std::string standpoint_lines(const IssueDefinition& issue) {
  std::string out;
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    if (k > 0) out += '\n';
    out += '"' + issue.labels[k] + "\" means you think " + issue.descriptions[k] + '.';
  }
  return out;
}

std::string trait_lines(std::span<const DispositionKind> kinds) {
  std::string out;
  for (auto k : kinds) out += "\n" + disposition_info(k).prompt_line();
  return out;
}

std::string message_list(std::span<const Message> messages) {
  if (messages.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i > 0) out += ' ';
    out += '[' + std::to_string(i + 1) + "] " + messages[i].text;
  }
  return out;
}

namespace {

PromptVars base_vars(const IssueDefinition& issue) {
  PromptVars v;
  v["issue"] = issue.name;
  v["standpoints"] = standpoint_lines(issue);
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) v["opinion_" + std::to_string(k + 1)] = issue.labels[k];
  return v;
}

}  // namespace

std::string render_expression_prompt(const IssueDefinition& issue, Opinion self) {
  auto v = base_vars(issue);
  v["self_opinion"] = issue.label(self);
  return render_template(prompt_template("expression"), v);
}

std::string render_decision_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason,
                                   Opinion partner, std::string_view partner_reason,
                                   std::span<const DispositionKind> traits) {
  auto v = base_vars(issue);
  v["self_opinion"] = issue.label(self);
  v["self_reason"] = std::string(self_reason);
  v["partner_opinion"] = issue.label(partner);
  v["partner_reason"] = std::string(partner_reason);
  v["trait_lines"] = trait_lines(traits);
  return render_template(prompt_template("decision"), v);
}

std::string render_persuasion_prompt(const IssueDefinition& issue, std::string_view self_reason,
                                     std::span<const Message> history, std::string_view partner_reason) {
  auto v = base_vars(issue);
  v["self_reason"] = std::string(self_reason);
  v["history"] = message_list(history);
  v["partner_reason"] = std::string(partner_reason);
  return render_template(prompt_template("persuasion"), v);
}

std::string render_update_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason,
                                 std::span<const Message> inbox, std::span<const DispositionKind> traits) {
  auto v = base_vars(issue);
  v["self_opinion"] = issue.label(self);
  v["self_reason"] = std::string(self_reason);
  v["inbox"] = message_list(inbox);
  v["trait_lines"] = trait_lines(traits);
  return render_template(prompt_template("update"), v);
}

std::string render_check_expression_prompt(const IssueDefinition& issue, Opinion self, std::string_view reason) {
  auto v = base_vars(issue);
  v["self_opinion"] = issue.label(self);
  v["self_reason"] = std::string(reason);
  v["expression_prompt"] = render_expression_prompt(issue, self);
  return render_template(prompt_template("check_expression"), v);
}

std::string render_check_persuasion_prompt(const IssueDefinition& issue, Opinion self, std::string_view message) {
  auto v = base_vars(issue);
  v["self_opinion"] = issue.label(self);
  v["message"] = std::string(message);
  return render_template(prompt_template("check_persuasion"), v);
}

std::string render_check_update_prompt(const IssueDefinition& issue, Opinion prior, Opinion proposed,
                                       std::string_view self_reason, std::span<const Message> inbox) {
  auto v = base_vars(issue);
  v["prior_opinion"] = issue.label(prior);
  v["new_opinion"] = issue.label(proposed);
  v["self_reason"] = std::string(self_reason);
  v["inbox"] = message_list(inbox);
  return render_template(prompt_template("check_update"), v);
}

std::string render_perception_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason,
                                     Opinion target, std::string_view target_reason) {
  auto v = base_vars(issue);
  v["self_opinion"] = issue.label(self);
  v["self_reason"] = std::string(self_reason);
  v["partner_opinion"] = issue.label(target);
  v["partner_reason"] = std::string(target_reason);
  return render_template(prompt_template("perception"), v);
}

std::string render_study_prompt(const IssueDefinition& issue, Opinion self, std::string_view self_reason) {
  auto v = base_vars(issue);
  v["self_opinion"] = issue.label(self);
  v["self_reason"] = std::string(self_reason);
  return render_template(prompt_template("study"), v);
}

}  // namespace polarsim
