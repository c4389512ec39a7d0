// Rendered prompts against hand-transcribed golden files
// (tests/oracles/golden_prompts.py).
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "polarsim/prompts.hpp"
#include "support.hpp"

using namespace polarsim;

namespace {

std::vector<Message> messages(const nlohmann::json& texts) {
  std::vector<Message> out;
  int sender = 10;
  for (const auto& t : texts) out.push_back({sender++, t.get<std::string>(), Opinion(0), 0});
  return out;
}

std::vector<DispositionKind> traits(const nlohmann::json& names) {
  std::vector<DispositionKind> out;
  for (const auto& n : names) out.push_back(*parse_disposition_kind(n.get<std::string>()));
  return out;
}

std::string golden(const std::string& stage, int case_no) {
  return test::slurp(test::data_path("golden/" + stage + "_" + std::to_string(case_no) + ".txt"));
}

}  // namespace

TEST_CASE("stage prompts byte-match the golden files") {
  const auto cases = nlohmann::json::parse(test::slurp(test::data_path("golden/cases.json")));
  REQUIRE(cases.size() == 5);
  int compared = 0;
  for (const auto& c : cases) {
    const int no = c.at("case").get<int>();
    CAPTURE(no);
    const auto issue = builtin_issue(c.at("issue").get<std::string>());
    const Opinion self(c.at("self").get<int>());
    const Opinion partner(c.at("partner").get<int>());
    const std::string self_reason = c.at("self_reason");
    const std::string partner_reason = c.at("partner_reason");
    const auto history = messages(c.at("history"));
    const auto inbox = messages(c.at("inbox"));
    const auto dec = traits(c.at("decision_traits"));
    const auto upd = traits(c.at("update_traits"));

    const std::vector<std::pair<std::string, std::string>> rendered{
        {"expression", render_expression_prompt(issue, self)},
        {"decision", render_decision_prompt(issue, self, self_reason, partner, partner_reason, dec)},
        {"persuasion", render_persuasion_prompt(issue, self_reason, history, partner_reason)},
        {"update", render_update_prompt(issue, self, self_reason, inbox, upd)},
        {"perception", render_perception_prompt(issue, self, self_reason, partner, partner_reason)},
        {"check_expression", render_check_expression_prompt(issue, self, self_reason)},
        {"check_persuasion", render_check_persuasion_prompt(issue, self, partner_reason)},
        {"check_update", render_check_update_prompt(issue, self, partner, self_reason, inbox)},
    };
    for (const auto& [stage, text] : rendered) {
      CAPTURE(stage);
      CHECK(text == golden(stage, no));
      ++compared;
    }
  }
  CHECK(compared == 40);
}

TEST_CASE("template substitution") {
  CHECK(render_template("a {{x}} b {{y}}", {{"x", "1"}, {"y", "{{z}}"}}) == "a 1 b {{z}}");
  CHECK(render_template("no placeholders", {}) == "no placeholders");
  CHECK_THROWS_AS(render_template("{{missing}}", {}), Error);
  CHECK_THROWS_AS(render_template("open {{x", {{"x", "1"}}), Error);
  CHECK_THROWS_AS(prompt_template("nonexistent"), Error);
  for (const char* name : {"expression", "decision", "persuasion", "update", "check_expression", "check_persuasion",
                           "check_update", "perception", "study"}) {
    CHECK_FALSE(prompt_template(name).ends_with("\n"));
  }
}

TEST_CASE("message lists") {
  CHECK(message_list({}) == "none");
  const std::vector<Message> m{{1, "first", Opinion(1), 0}, {2, "second", Opinion(-1), 0}};
  CHECK(message_list(m) == "[1] first [2] second");
}

TEST_CASE("study prompt names the stance") {
  const auto issue = builtin_issue("immigration");
  const auto text = render_study_prompt(issue, Opinion(1), "borders matter");
  CHECK(text.find(issue.label(Opinion(1))) != std::string::npos);
  CHECK(text.find("borders matter") != std::string::npos);
  CHECK(text.find("accept and theory") != std::string::npos);
}
