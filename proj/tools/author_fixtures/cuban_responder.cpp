#include "cuban_responder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>

namespace dstage::authoring {
namespace {

struct Line {
  const char* statement;
  const char* action;
};

constexpr int kDays = 13;

// Baseline decisions, 16 to 28 October.
constexpr Line kKennedy[kDays] = {
    {"", "Convene a secret meeting of senior advisers to review the reconnaissance photographs and weigh responses."},
    {"", "Order more reconnaissance flights and keep the discovery confidential while options are studied."},
    {"Offensive weapons in Cuba would raise the gravest issues.",
     "Meet Foreign Minister Gromyko without revealing the intelligence and hold a firm position."},
    {"", "Put naval units on heightened watch after the submarine reports and keep deliberations private."},
    {"", "Approve the advisers' recommendation of a naval quarantine of Cuba instead of an air strike."},
    {"", "Brief allied leaders privately and finalize the quarantine proclamation."},
    {"The United States will not tolerate offensive missiles ninety miles from its shores.",
     "Announce in a televised address the quarantine of Cuba and demand withdrawal of the missiles."},
    {"", "Sign the quarantine proclamation, seek the backing of the Organization of American States and hail the "
         "approaching freighter rather than fire on it."},
    {"", "Keep the quarantine in force while letting ships that stop or turn back go unchallenged."},
    {"", "Have the UN ambassador present the reconnaissance photographs to the Security Council."},
    {"", "Study Khrushchev's letter offering withdrawal of the missiles for a pledge not to invade Cuba."},
    {"", "Hold back retaliation for the downed aircraft and answer the first letter, accepting its terms."},
    {"We welcome Chairman Khrushchev's decision.",
     "Pledge not to invade Cuba and agree privately to remove the missiles from Turkey later."},
};

// Kennedy under the standing directive.
constexpr Line kKennedyTough[kDays] = {
    {"", "Order preparations for air strikes on the missile sites and put forces on alert, without concessions."},
    {"", "Expand reconnaissance and move strike aircraft to Florida bases, without concessions."},
    {"Any offensive weapon in Cuba will be met with force.",
     "Confront Gromyko with a warning and refuse any discussion, without concessions."},
    {"", "Order naval units to track and harass the reported submarines, without concessions."},
    {"", "Approve a full blockade of Cuba and prepare invasion forces, without concessions."},
    {"", "Move invasion forces into position in the southeast and warn allies to prepare, without concessions."},
    {"The missiles will be removed, by force if necessary.",
     "Announce a full blockade and an ultimatum for withdrawal of the missiles, without concessions."},
    {"", "Order warships to stop the approaching freighter by firing across its bow, without concessions."},
    {"", "Board a Soviet vessel at the blockade line and drop charges on an escorting submarine that refuses to "
         "surface, without concessions."},
    {"", "Demand at the United Nations the immediate dismantling of the sites, without concessions."},
    {"", "Reject the offer of withdrawal for a no-invasion pledge and keep invasion forces ready, without concessions."},
    {"", "Order a retaliatory strike on the air defence site that shot down the aircraft, without concessions."},
    {"", "Keep the blockade in force and accept only unconditional withdrawal, without concessions."},
};

constexpr Line kKhrushchev[kDays] = {
    {"", "Keep the deployment secret and continue construction of the missile sites."},
    {"", "Instruct the foreign ministry to deny the presence of offensive weapons in Cuba."},
    {"", "Send Gromyko to Washington with assurances that the weapons in Cuba are defensive."},
    {"", "Order submarines to keep their distance from US warships while construction continues."},
    {"", "Weigh reports of US naval movements and keep forces in Cuba on alert."},
    {"", "Ask the Presidium to prepare responses to a possible US move."},
    {"The Soviet Union will not be intimidated.", "Denounce the quarantine as piracy while avoiding any military response."},
    {"", "Order the ships nearest the quarantine line to slow down and wait for instructions."},
    {"", "Order Soviet ships approaching the quarantine line to stop or turn back."},
    {"", "Keep the remaining ships away from the line and look for a way out."},
    {"", "Send a letter offering to withdraw the missiles in exchange for a pledge not to invade Cuba."},
    {"", "Send a second letter asking that US missiles in Turkey be removed as well."},
    {"We have given the order to dismantle the weapons.",
     "Announce by radio that the missiles will be dismantled and returned to the Soviet Union."},
};

// Khrushchev's answers once Washington refuses any concession, from the day
// of the freighter incident on.
constexpr Line kKhrushchevHard[kDays] = {
    {}, {}, {}, {}, {}, {}, {},
    {"", "Order the freighters to hold course and tell submarine commanders to defend themselves if attacked."},
    {"", "Order submarine escorts to resist boarding and put forces in Cuba on full alert."},
    {"", "Reinforce air defences in Cuba and refuse to discuss dismantling under threat."},
    {"", "Offer withdrawal only if the blockade is lifted first, and keep forces on alert."},
    {"", "Authorize local commanders to return fire if US aircraft attack Cuban sites."},
    {"A ceasefire at sea is possible, capitulation is not.",
     "Agree to a ceasefire at sea while refusing to withdraw the missiles under pressure."},
};

constexpr Line kCastro[kDays] = {
    {"", "Continue fortifying the island and keep the militia on standby."},
    {"", "Inspect coastal defences and keep the militia on standby."},
    {"", "Press Soviet advisers for faster completion of the air defence network."},
    {"", "Put coastal units on watch after reports of naval activity."},
    {"", "Keep the militia on standby and prepare civil defence."},
    {"", "Keep the militia on standby and prepare civil defence."},
    {"Cuba will defend its sovereignty.", "Mobilize the Cuban armed forces in response to the US announcement."},
    {"", "Put air defences on alert and denounce the quarantine."},
    {"", "Put air defences on alert and denounce the quarantine."},
    {"", "Keep air defences on alert and call for solidarity from socialist states."},
    {"", "Urge Moscow to stand firm against any invasion."},
    {"", "Order anti-aircraft batteries to fire on low-flying US aircraft."},
    {"Cuba was not consulted.", "Protest that Cuba was not consulted about the withdrawal."},
};

constexpr Line kDobrynin[kDays] = {
    {"", "Report on the mood in Washington to Moscow."},
    {"", "Report on the mood in Washington to Moscow."},
    {"", "Accompany Gromyko and report on the meeting at the White House."},
    {"", "Report US naval movements to Moscow."},
    {"", "Report on the mood in Washington to Moscow."},
    {"", "Report rumours of an imminent US announcement to Moscow."},
    {"", "Receive the text of the President's address and cable it to Moscow."},
    {"", "Meet the Attorney General privately to keep a channel open."},
    {"", "Meet the Attorney General privately to keep a channel open."},
    {"", "Keep the private channel open and relay Washington's position."},
    {"", "Relay the terms of the first letter through the private channel."},
    {"", "Meet the Attorney General and discuss the missiles in Turkey as part of a settlement."},
    {"", "Confirm the private understanding on Turkey to Moscow."},
};

constexpr Line kGromyko[kDays] = {
    {"", "Prepare for meetings in Washington."},
    {"", "Prepare for meetings in Washington."},
    {"Soviet aid to Cuba is purely defensive.", "Assure Kennedy that Soviet assistance to Cuba is defensive."},
    {"", "Report on the meeting to Moscow and monitor US reactions."},
    {"", "Report on the meeting to Moscow and monitor US reactions."},
    {"", "Report on the meeting to Moscow and monitor US reactions."},
    {"", "Coordinate the Soviet position at the United Nations."},
    {"", "Coordinate the Soviet position at the United Nations."},
    {"", "Coordinate the Soviet position at the United Nations."},
    {"", "Coordinate the Soviet position at the United Nations."},
    {"", "Support a negotiated settlement through diplomatic channels."},
    {"", "Support a negotiated settlement through diplomatic channels."},
    {"", "Support a negotiated settlement through diplomatic channels."},
};

constexpr Line kUThant[kDays] = {
    {"", "Follow the situation through diplomatic contacts."},
    {"", "Follow the situation through diplomatic contacts."},
    {"", "Follow the situation through diplomatic contacts."},
    {"", "Follow the situation through diplomatic contacts."},
    {"", "Follow the situation through diplomatic contacts."},
    {"", "Follow the situation through diplomatic contacts."},
    {"", "Call on both parties to refrain from any action that could worsen the situation."},
    {"", "Appeal to both sides for a voluntary pause in shipments and in the quarantine."},
    {"", "Send messages to Kennedy and Khrushchev proposing a standstill."},
    {"", "Host the Security Council debate and keep both delegations talking."},
    {"", "Offer UN inspection of the missile sites as part of a settlement."},
    {"", "Offer UN inspection of the missile sites as part of a settlement."},
    {"", "Offer to send a UN team to verify the dismantling."},
};

// Judge tables: outcome weights in percent, then systemic tension.
constexpr double kWeights[kDays][4] = {
    {55, 25, 13, 7}, {57, 24, 12, 7}, {58, 23, 12, 7}, {48, 28, 15, 9}, {56, 24, 13, 7},
    {58, 23, 12, 7}, {57, 24, 12, 7}, {47, 29, 15, 9}, {49, 28, 14, 9}, {60, 22, 11, 7},
    {68, 18, 9, 5},  {62, 21, 11, 6}, {82, 11, 5, 2}};
constexpr double kWeightsTough[kDays][4] = {
    {50, 27, 15, 8}, {48, 28, 16, 8}, {45, 30, 16, 9}, {38, 33, 18, 11}, {40, 32, 18, 10},
    {38, 33, 18, 11}, {33, 36, 20, 11}, {22, 44, 22, 12}, {18, 48, 22, 12}, {20, 47, 21, 12},
    {24, 46, 19, 11}, {20, 48, 20, 12}, {25, 50, 16, 9}};
constexpr double kTension[kDays] = {45, 46, 50, 60, 55, 56, 66, 74, 76, 70, 62, 80, 38};
constexpr double kTensionTough[kDays] = {50, 53, 57, 68, 64, 66, 76, 86, 88, 84, 80, 85, 74};

std::string after(const std::string& text, const std::string& marker) {
  auto pos = text.rfind(marker);
  if (pos == std::string::npos) return {};
  return text.substr(pos + marker.size());
}

std::string line_after(const std::string& text, const std::string& marker) {
  auto rest = after(text, marker);
  return rest.substr(0, rest.find('\n'));
}

Json first_json(const std::string& text) {
  auto pos = text.find('{');
  if (pos == std::string::npos) return nullptr;
  return Json::parse(text.substr(pos), nullptr, false);
}

int candidate_of(const std::string& perspective) {
  static const char* order[] = {"research objectives", "variable design", "operational process", "expected outcomes"};
  for (int i = 0; i < 4; ++i)
    if (perspective == order[i]) return i;
  return 0;
}

// Reads N from text that starts with "day N" or "Day N".
int day_of(const std::string& text) {
  int day = 0;
  if (text.size() > 4) std::sscanf(text.c_str() + 4, "%d", &day);
  return std::clamp(day - 1, 0, kDays - 1);
}

std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  std::erase_if(out, [](const std::string& t) { return t.size() < 3; });
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Json factor_list(const Json& factors, std::initializer_list<int> picks) {
  Json out = Json::array();
  for (int i : picks) out.push_back(factors.at(static_cast<std::size_t>(i)));
  return out;
}

Json points_over(const std::vector<std::pair<std::string, Json>>& levels, std::size_t count) {
  // Walks the binary grid of the listed factors in order.
  Json out = Json::array();
  for (std::size_t i = 0; i < count; ++i) {
    Json assignments = Json::object();
    for (std::size_t f = 0; f < levels.size(); ++f)
      assignments[levels[f].first] = levels[f].second.at((i >> (levels.size() - 1 - f)) & 1U);
    char id[16];
    std::snprintf(id, sizeof id, "dp-%02zu", i + 1);
    out.push_back({{"id", id}, {"assignments", std::move(assignments)}});
  }
  return out;
}

}  // namespace

std::vector<double> hashed_embedding(std::string_view text, std::size_t dims) {
  std::vector<double> v(dims, 0.0);
  for (const auto& t : tokens(text)) v[fnv1a(t) % dims] += 1.0;
  return v;
}

CubanResponder::CubanResponder(const std::filesystem::path& dataset_dir)
    : script_(read_json_file(dataset_dir / "example_script.json")) {}

std::string CubanResponder::complete(const llm::CompletionRequest& req) {
  std::string system, user;
  for (const auto& m : req.messages) (m.speaker == llm::Speaker::system ? system : user) += m.text;
  const auto& role = req.role_id;
  if (role == llm::roles::kEmbedder) return Json(hashed_embedding(user)).dump();
  if (role == llm::roles::kScreenwriter) return screenwriter(user);
  if (role.rfind("director_", 0) == 0) return director(role, user);
  if (role == llm::roles::kChiefDirector) return chief(user);
  if (llm::roles::is_actor(role)) return actor(role.substr(role.find(':') + 1), user);
  if (role == llm::roles::kJudge) return judge(system, user);
  if (role == llm::roles::kActorFactory) {
    Json actors = Json::array({
        {{"id", "kennedy"}, {"name", "John F. Kennedy"}, {"identity", "President of the United States"},
         {"description", "Commander in chief, balancing military options against the risk of nuclear war."},
         {"influence_factors", {"us_military_readiness", "naval_quarantine_strictness", "us_invasion_preparation",
                                "public_disclosure_timing", "us_domestic_political_pressure", "us_military_hawkishness",
                                "turkey_missile_negotiability", "reconnaissance_frequency", "kennedy_risk_tolerance"}},
         {"knowledge", {"U-2 photographs show missile sites in Cuba", "US strategic forces outnumber Soviet forces",
                        "Jupiter missiles are deployed in Turkey"}},
         {"goals", {"remove the Soviet missiles from Cuba", "avoid nuclear war", "preserve US credibility with allies"}}},
        {{"id", "khrushchev"}, {"name", "Nikita Khrushchev"}, {"identity", "First Secretary of the Soviet Communist Party"},
         {"description", "Soviet leader who ordered the deployment to protect Cuba and offset US missiles near the USSR."},
         {"influence_factors", {"soviet_missile_readiness", "soviet_naval_posture", "soviet_hardliner_influence",
                                "soviet_military_hawkishness", "berlin_linkage", "warheads_in_cuba",
                                "warsaw_pact_solidarity", "khrushchev_risk_tolerance"}},
         {"knowledge", {"the missiles are not yet all operational", "US missiles in Turkey threaten the USSR"}},
         {"goals", {"protect Cuba from invasion", "win strategic concessions", "avoid nuclear war"}}},
        {{"id", "castro"}, {"name", "Fidel Castro"}, {"identity", "Prime Minister of Cuba"},
         {"description", "Revolutionary leader expecting a US invasion."},
         {"influence_factors", {"cuban_air_defense_autonomy", "castro_independence"}},
         {"goals", {"prevent a US invasion of Cuba", "keep Cuban sovereignty"}}},
        {{"id", "dobrynin"}, {"name", "Anatoly Dobrynin"}, {"identity", "Soviet Ambassador to the United States"},
         {"description", "Diplomat who keeps the private line between the Kremlin and the White House."},
         {"influence_factors", {"back_channel_availability", "communication_latency"}},
         {"goals", {"keep communication with Washington open"}}},
        {{"id", "u_thant"}, {"name", "U Thant"}, {"identity", "Acting Secretary-General of the United Nations"},
         {"description", "Neutral mediator seeking to buy time for negotiation."},
         {"influence_factors", {"un_mediation_level", "third_party_mediators"}},
         {"goals", {"prevent war through mediation"}}},
    });
    Json relationships = Json::array({
        {{"a", "kennedy"}, {"b", "khrushchev"}, {"label", "adversaries"}},
        {{"a", "khrushchev"}, {"b", "castro"}, {"label", "allies"}},
        {{"a", "kennedy"}, {"b", "castro"}, {"label", "hostile"}},
        {{"a", "dobrynin"}, {"b", "khrushchev"}, {"label", "reports to"}},
        {{"a", "dobrynin"}, {"b", "kennedy"}, {"label", "private channel"}},
        {{"a", "u_thant"}, {"b", "kennedy"}, {"label", "mediator"}},
        {{"a", "u_thant"}, {"b", "khrushchev"}, {"label", "mediator"}},
    });
    return Json{{"actors", actors}, {"relationships", relationships}}.dump(2);
  }
  if (role == llm::roles::kSupervisor) {
    return "The cast covers the main decision makers. The Soviet foreign minister plays a documented part on 18 "
           "October and should be added.\n" +
           Json{{"add", {{{"id", "gromyko"},
                           {"name", "Andrei Gromyko"},
                           {"identity", "Soviet Foreign Minister"},
                           {"description", "Diplomat who delivers Moscow's position in Washington."},
                           {"knowledge", {"Soviet aid to Cuba is officially described as defensive"}},
                           {"goals", {"defend the Soviet position in diplomatic talks"}}}}},
                {"update", {{{"id", "castro"}, {"knowledge", {"a US invasion force is gathering in Florida"}}}}},
                {"relabel", {{{"a", "gromyko"}, {"b", "khrushchev"}, {"label", "reports to"}},
                             {{"a", "kennedy"}, {"b", "khrushchev"}, {"label", "adversaries with a private channel"}}}},
                {"notes", "added the foreign minister; Castro's knowledge updated"}}
               .dump(2);
  }
  throw llm::TransportError("no scripted answer for role " + role, false);
}

Json CubanResponder::section_for(int candidate, const std::string& stage, bool rewrite) const {
  const auto& factors = script_.at("factors");
  const auto& responses = script_.at("responses");
  if (stage == "Goal") {
    Json goal = script_.at("goal");
    switch (candidate) {
      case 0:
        goal["statement"] = "Identify which leadership decisions most change the probability of war during the crisis.";
        break;
      case 2:
        goal["statement"] = "Reproduce the day-by-day decision process of the crisis and measure tension after each day.";
        if (!rewrite) goal["success_criteria"] = Json::array();
        break;
      case 3:
        goal["statement"] = "Predict the final outcome category of the crisis from the leaders' decision styles.";
        break;
    }
    return goal;
  }
  if (stage == "InfluenceAndResponse_Factors") {
    switch (candidate) {
      case 0: {
        Json out = {{"factors", factor_list(factors, {0, 1, 2, 4, 10, 11, 12, 14, 15, 22, 23, 26})}};
        out["responses"] = rewrite ? Json::array({responses[0], responses[3]}) : Json::array({responses[3]});
        return out;
      }
      case 1:
        return {{"factors", factors}, {"responses", responses}};
      case 2:
        return {{"factors", factor_list(factors, {0, 1, 2, 3, 4, 5, 6, 7, 10, 12, 17, 18, 20, 22, 23, 27})},
                {"responses", Json::array({responses[0], responses[1], responses[3]})}};
      default: {
        Json picked = factor_list(factors, {2, 10, 14, 15, 16, 22, 23, 24, 26, 28});
        picked.push_back({{"name", "leader_health_records"},
                          {"description", "Private medical records of the real leaders used to predict their stress"},
                          {"levels", {"undisclosed", "disclosed"}}});
        return {{"factors", picked}, {"responses", Json::array({responses[0], responses[3]})}};
      }
    }
  }
  if (stage == "DesignPoints") {
    switch (candidate) {
      case 0:
        return {{"design_points", points_over({{"naval_quarantine_strictness", {"selective", "full"}},
                                               {"back_channel_availability", {"closed", "open"}}},
                                              4)}};
      case 1:
        return {{"design_points", script_.at("design_points")}};
      case 2:
        return {{"design_points", points_over({{"naval_quarantine_strictness", {"selective", "full"}},
                                               {"communication_latency", {2, 12}},
                                               {"kennedy_risk_tolerance", {"cautious", "assertive"}}},
                                              6)}};
      default:
        return {{"design_points",
                 points_over({{"kennedy_risk_tolerance", {"cautious", "assertive"}},
                              {"khrushchev_risk_tolerance", {"cautious", "assertive"}},
                              {"accident_likelihood", {"low", "elevated"}}},
                             rewrite ? 6 : 2)}};
    }
  }
  return nullptr;
}

std::string CubanResponder::screenwriter(const std::string& user) const {
  const int candidate = candidate_of(line_after(user, "Perspective for this candidate script: "));
  std::string stage;
  bool rewrite = false;
  if (user.find("Section to rewrite: ") != std::string::npos) {
    stage = line_after(user, "Section to rewrite: ");
    rewrite = true;
  } else if (user.find("Write part 1") != std::string::npos) {
    stage = "Goal";
  } else if (user.find("Write part 2") != std::string::npos) {
    stage = "InfluenceAndResponse_Factors";
  } else {
    stage = "DesignPoints";
  }
  auto section = section_for(candidate, stage, rewrite);
  if (section.is_null()) throw llm::TransportError("no scripted section for stage " + stage, false);
  return section.dump(2);
}

std::string CubanResponder::director(const std::string& role, const std::string& user) const {
  auto verdict = [](bool passed, const char* feedback) {
    return Json{{"passed", passed}, {"feedback", passed ? "" : feedback}}.dump();
  };
  if (role == llm::roles::kDirectorFormat) return verdict(true, "");
  const auto section = first_json(after(user, "under review:\n"));
  if (section.is_null() || section.is_discarded()) return verdict(false, "the section is not valid JSON");
  if (role == llm::roles::kDirectorGoal)
    return verdict(!section.value("success_criteria", Json::array()).empty(),
                   "the goal has no success criteria; state how the objective will be measured");
  if (role == llm::roles::kDirectorFactors) {
    bool has_outcome = false;
    for (const auto& r : section.value("responses", Json::array()))
      has_outcome = has_outcome || r.value("kind", "") == "probability_vector";
    return verdict(has_outcome, "no response variable measures the outcome; add a probability vector over outcomes");
  }
  return verdict(section.value("design_points", Json::array()).size() >= 4,
                 "two design points cannot represent the factor space; add more conditions");
}

std::string CubanResponder::chief(const std::string& user) const {
  int index = 1;
  if (auto pos = user.find("(script-"); pos != std::string::npos) std::sscanf(user.c_str() + pos + 8, "%d", &index);
  static const double scores[4][6] = {{70, 60, 60, 50, 60, 100},
                                      {80, 60, 70, 50, 60, 100},
                                      {65, 70, 60, 55, 55, 100},
                                      {75, 55, 65, 60, 70, 0}};
  static const char* notes[4][6] = {
      {"clear objective with a compact factor set", "moderate setup effort", "few controlled conditions",
       "limited contingency handling", "matches the requirement", "no ethical concerns"},
      {"rich and operable factor set grounded in the historical record", "large but automatable design",
       "design points isolate quarantine, channel and leader risk", "accident conditions probe robustness only partly",
       "covers the requested outcome and tension variables", "no ethical concerns"},
      {"process-oriented with fewer outcome measures", "simple to run", "latency factor is hard to control",
       "reasonable robustness", "drifts toward process reconstruction", "no ethical concerns"},
      {"predictive framing with explicit leader traits", "straightforward",
       "controls leader styles directly", "considers accidents", "aligned with the outcome question",
       "relies on private medical records of real individuals"}};
  const auto s = scores[std::clamp(index, 1, 4) - 1];
  const auto n = notes[std::clamp(index, 1, 4) - 1];
  static const char* names[6] = {"scientific_soundness", "implementation_difficulty", "conditions_controllability",
                                 "risk_robustness", "requirement_alignment", "ethics_compliance"};
  Json doc = {{"scores", Json::object()}};
  for (int i = 0; i < 6; ++i) doc["scores"][names[i]] = {{"score", s[i]}, {"rationale", n[i]}};
  return doc.dump(2);
}

std::string CubanResponder::actor(const std::string& id, const std::string& user) const {
  const int day = day_of(after(user, "Today is "));
  const bool directive = user.find("Standing directive") != std::string::npos;
  const bool hard_line = user.find("without concessions") != std::string::npos;
  Line line{"", "Observe the situation."};
  Json updates = Json::object();
  if (id == "kennedy") {
    line = directive ? kKennedyTough[day] : kKennedy[day];
    static const char* baseline_posture[kDays] = {"deliberating", "deliberating", "firm",     "watchful", "quarantine",
                                                  "quarantine",   "quarantine",   "quarantine", "quarantine", "quarantine",
                                                  "negotiating",  "restrained",   "settled"};
    updates["posture"] = directive ? (day < 4 ? "strike planning" : "confrontational") : baseline_posture[day];
  } else if (id == "khrushchev") {
    line = (hard_line && day >= 7) ? kKhrushchevHard[day] : kKhrushchev[day];
    updates["posture"] = (hard_line && day >= 7) ? "defiant" : (day >= 10 ? "conciliatory" : "guarded");
  } else if (id == "castro") {
    line = kCastro[day];
    if (hard_line && day == 8) line = {"", "Order Cuban batteries to fire on any US aircraft over the island."};
  } else if (id == "dobrynin") {
    line = kDobrynin[day];
    if (hard_line && (day == 10 || day == 11))
      line = {"", "Report that Washington refuses any private talks and an attack may follow."};
  } else if (id == "gromyko") {
    line = kGromyko[day];
  } else if (id == "u_thant") {
    line = kUThant[day];
  }
  Json doc = {{"statement", line.statement}, {"action", line.action}};
  if (!updates.empty()) doc["state_updates"] = updates;
  return doc.dump();
}

std::string CubanResponder::judge(const std::string& system, const std::string& user) {
  const bool tough = user.find("without concessions") != std::string::npos;
  if (system.find("compare two accounts") != std::string::npos) {
    const auto a = tokens(after(user, "Historical actions:\n").substr(0, after(user, "Historical actions:\n").find("Simulated decisions:")));
    const auto b = tokens(after(user, "Simulated decisions:\n"));
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::size_t common = 0;
    for (const auto& t : sa) common += sb.count(t);
    const double overlap = (sa.empty() || sb.empty()) ? 0.0 : static_cast<double>(common) / std::sqrt(double(sa.size() * sb.size()));
    const double score = std::round(std::min(100.0, 45.0 + 120.0 * overlap));
    return Json{{"score", score}, {"rationale", "shared decisions and intent"}}.dump();
  }
  if (system.find("has finished") != std::string::npos) {
    // The outcome judge reads the whole channel.
    if (tough)
      return Json{{"label", "limited conflict: local military clashes at sea and over Cuba without escalation to "
                            "full-scale war"},
                  {"category", "limited_conflict"}}
          .dump();
    return Json{{"label", "peaceful resolution with lingering tension"}, {"category", "peace"}}.dump();
  }
  const int day = day_of("Day " + after(user, "\nDay "));
  const double tension = tough ? kTensionTough[day] : kTension[day];
  if (system.find("systemic tension") != std::string::npos)
    return Json{{"score", tension}, {"rationale", "tension rubric"}}.dump();

  const auto factor = line_after(user, "Response variable: ");
  if (factor == "war_event_outcome_probabilities") {
    const auto& w = tough ? kWeightsTough[day] : kWeights[day];
    return Json{{"weights", {w[0], w[1], w[2], w[3]}}, {"rationale", "weights in percent"}}.dump();
  }
  double value = tension;
  if (factor == "escalation_index") value = std::max(0.0, tension - 6.0);
  if (factor == "bilateral_tension_next") value = std::min(100.0, tension + 3.0);
  // One malformed answer on day 6 exercises the judge retry.
  const std::string key = factor + "#" + std::to_string(day);
  if (factor == "escalation_index" && day == 5 &&
      std::find(unparseable_once_.begin(), unparseable_once_.end(), key) == unparseable_once_.end()) {
    unparseable_once_.push_back(key);
    return "Escalation is moderate today.";
  }
  return Json{{"score", value}, {"rationale", "judged from the day's channel"}}.dump();
}

}  // namespace dstage::authoring
