#include <gtest/gtest.h>

#include <numeric>
#include <set>
#include <thread>

#include "cuban_responder.hpp"
#include "dstage/sim/simulation.hpp"
#include "support.hpp"

using namespace dstage;
using namespace dstage::sim;
namespace ts = dstage::testing;

namespace {

const UserRequirement kReq{"g", {"v"}, "t", {}, {}};

struct Fixture {
  std::shared_ptr<ts::RoleProvider> provider = ts::generic_run_provider(2);
  std::shared_ptr<llm::Gateway> gateway = llm::Gateway::live(provider);
  Script script = ts::small_script();
  cast::Cast cast;

  Fixture() {
    cast::ActorFactory factory(*gateway, llm::PromptLibrary::builtin());
    cast = factory.generate_cast(script, kReq);
  }

  RunConfig config(int days) const {
    RunConfig c;
    c.days = days;
    c.start_date = CalendarDate::parse("1962-10-16");
    return c;
  }

  Simulation sim(int days) const { return Simulation(Simulation::init_run(script, cast, config(days), "test")); }
};

int count_kind(const RunLog& log, MessageKind kind) {
  return static_cast<int>(std::count_if(log.state.channel.begin(), log.state.channel.end(),
                                        [&](const WorldMessage& m) { return m.kind == kind; }));
}

}  // namespace

TEST(Normalize, Examples) {
  EXPECT_EQ(*normalize_probability_vector({0.5, 0.3, 0.15, 0.05}), (std::vector<double>{0.5, 0.3, 0.15, 0.05}));
  EXPECT_EQ(*normalize_probability_vector({2, 1, 1, 0}), (std::vector<double>{0.5, 0.25, 0.25, 0.0}));
  EXPECT_EQ(*normalize_probability_vector({-1, 1, 3}), (std::vector<double>{0.0, 0.25, 0.75}));
  EXPECT_FALSE(normalize_probability_vector({0, 0, 0}).has_value());
  EXPECT_FALSE(normalize_probability_vector({-1, -2}).has_value());
  EXPECT_FALSE(normalize_probability_vector({1, std::nan("")}).has_value());
}

TEST(Normalize, RandomVectorsSumToOne) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-2.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> w(std::uniform_int_distribution<int>(2, 6)(rng));
    for (auto& x : w) x = d(rng);
    const auto p = normalize_probability_vector(w);
    if (!p) continue;
    EXPECT_NEAR(std::accumulate(p->begin(), p->end(), 0.0), 1.0, 1e-9);
    for (double x : *p) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(Init, DatesAndOpeningMessage) {
  Fixture f;
  auto sim = f.sim(13);
  EXPECT_EQ(sim.log().state.calendar_date.to_string(), "1962-10-16");
  ASSERT_FALSE(sim.log().state.channel.empty());
  EXPECT_EQ(sim.log().state.channel[0].sender, "system");
  std::vector<std::string> dates;
  for (int d = 0; d < 13; ++d) dates.push_back(sim.step_day(*f.gateway).calendar_date.to_string());
  EXPECT_EQ(dates.front(), "1962-10-16");
  EXPECT_EQ(dates.back(), "1962-10-28");
  EXPECT_EQ(sim.log().state.tension_series.size(), 13u);
  EXPECT_THROW(sim.step_day(*f.gateway), SimulationError);
}

TEST(Init, ConstraintMembership) {
  Fixture f;
  auto cfg = f.config(3);
  cfg.constraints = {{"a0", "always maintain a tough attitude"}};
  EXPECT_NO_THROW(Simulation::init_run(f.script, f.cast, cfg));
  cfg.constraints = {{"Napoleon", "conquer"}};
  EXPECT_THROW(Simulation::init_run(f.script, f.cast, cfg), SimulationError);
  cfg.constraints = {{"a0", ""}};
  EXPECT_THROW(Simulation::init_run(f.script, f.cast, cfg), SimulationError);
  cfg.constraints.clear();
  cfg.days = 0;
  EXPECT_THROW(Simulation::init_run(f.script, f.cast, cfg), SimulationError);
}

TEST(Init, CubanConstraintAcceptsKennedyRejectsNapoleon) {
  auto gw = llm::Gateway::live(std::make_shared<authoring::CubanResponder>(ts::cuban_dir()));
  cast::ActorFactory factory(*gw, llm::PromptLibrary::builtin());
  const auto script = ts::cuban_script();
  const auto cast = factory.generate_cast(script, ts::cuban_requirement());
  RunConfig cfg;
  cfg.days = 13;
  cfg.start_date = CalendarDate::parse("1962-10-16");
  cfg.constraints = {{"kennedy", "always maintain a tough attitude"}};
  EXPECT_NO_THROW(Simulation::init_run(script, cast, cfg));
  cfg.constraints = {{"napoleon", "always maintain a tough attitude"}};
  EXPECT_THROW(Simulation::init_run(script, cast, cfg), SimulationError);
}

TEST(Init, DesignPointLevelsBecomeAttributes) {
  Fixture f;
  auto cfg = f.config(1);
  cfg.design_point = f.script.design_points[1];
  const auto log = Simulation::init_run(f.script, f.cast, cfg);
  // a0 holds f0, which the design point sets to "high".
  EXPECT_EQ(log.state.agent_states.at("a0").at("f0"), "high");
  cfg.design_point = DesignPoint{"elsewhere", {}};
  EXPECT_THROW(Simulation::init_run(f.script, f.cast, cfg), SimulationError);
}

TEST(Step, ConstraintAppearsInEveryPromptOfThatAgent) {
  Fixture f;
  auto cfg = f.config(2);
  cfg.constraints = {{"a1", "never negotiate"}};
  Simulation sim(Simulation::init_run(f.script, f.cast, cfg));
  sim.step_day(*f.gateway);
  sim.step_day(*f.gateway);
  int seen = 0;
  for (const auto& req : f.gateway->issued()) {
    if (!llm::roles::is_actor(req.role_id)) continue;
    const bool has = ts::user_text(req).find("never negotiate") != std::string::npos;
    EXPECT_EQ(has, req.role_id == "actor:a1");
    seen += has;
  }
  EXPECT_EQ(seen, 2);
}

TEST(Step, EventOnDayThreeReachesEveryAgent) {
  Fixture f;
  auto sim = f.sim(5);
  sim.inject_event({3, "A storm closes the harbour.", "user"});
  for (int d = 0; d < 5; ++d) sim.step_day(*f.gateway);
  std::set<std::string> agents;
  for (const auto& req : f.gateway->issued()) {
    if (!llm::roles::is_actor(req.role_id)) continue;
    const auto user = ts::user_text(req);
    const bool today = user.find("Today is day 4 of 5") != std::string::npos;
    const auto events = user.substr(user.find("Emergent events today:"), user.find("World channel so far:") - user.find("Emergent events today:"));
    EXPECT_EQ(events.find("A storm closes the harbour.") != std::string::npos, today);
    if (today) agents.insert(req.role_id);
  }
  EXPECT_EQ(agents, (std::set<std::string>{"actor:a0", "actor:a1"}));
  EXPECT_EQ(count_kind(sim.log(), MessageKind::emergent_event), 1);
  EXPECT_EQ(sim.log().days[3].messages.front().kind, MessageKind::emergent_event);
}

TEST(Step, TwoEventsSameDayKeepArrivalOrder) {
  Fixture f;
  auto sim = f.sim(2);
  sim.inject_event({1, "first", "user"});
  sim.inject_event({1, "second", "user"});
  sim.step_day(*f.gateway);
  sim.step_day(*f.gateway);
  const auto& msgs = sim.log().days[1].messages;
  ASSERT_GE(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].text, "first");
  EXPECT_EQ(msgs[1].text, "second");
}

TEST(Step, OverrideOnDayFive) {
  Fixture f;
  auto sim = f.sim(7);
  sim.override_decision({5, "a0", "Order a full blockade."});
  for (int d = 0; d < 7; ++d) sim.step_day(*f.gateway);
  const auto* decision = sim.log().decision(5, "a0");
  ASSERT_NE(decision, nullptr);
  EXPECT_TRUE(decision->overridden);
  EXPECT_EQ(decision->text, "Order a full blockade.");
  EXPECT_FALSE(sim.log().decision(5, "a1")->overridden);
  EXPECT_FALSE(sim.log().decision(4, "a0")->overridden);
  EXPECT_EQ(count_kind(sim.log(), MessageKind::override_notice), 1);
  bool notice_on_day_five = false;
  for (const auto& m : sim.log().days[5].messages) notice_on_day_five |= m.kind == MessageKind::override_notice;
  EXPECT_TRUE(notice_on_day_five);
  EXPECT_EQ(f.provider->calls("actor:a0"), 6);
}

TEST(Commands, PastDayRejectedAndFutureAccepted) {
  Fixture f;
  auto sim = f.sim(4);
  sim.step_day(*f.gateway);
  sim.step_day(*f.gateway);
  EXPECT_THROW(sim.inject_event({1, "late", "user"}), CommandError);
  EXPECT_THROW(sim.override_decision({0, "a0", "x"}), CommandError);
  EXPECT_THROW(sim.override_decision({3, "ghost", "x"}), CommandError);
  EXPECT_THROW(sim.inject_event({9, "beyond", "user"}), CommandError);
  EXPECT_NO_THROW(sim.inject_event({2, "now", "user"}));
  EXPECT_NO_THROW(sim.override_decision({3, "a1", "x"}));
  EXPECT_THROW(sim.override_decision({3, "a1", "y"}), CommandError);
}

TEST(Commands, SealedRunRejects) {
  Fixture f;
  auto sim = f.sim(1);
  sim.step_day(*f.gateway);
  const auto outcome = sim.finalize_run(*f.gateway);
  EXPECT_EQ(outcome.category, "peace");
  EXPECT_TRUE(sim.sealed());
  EXPECT_THROW(sim.inject_event({0, "late", "user"}), CommandError);
  EXPECT_THROW(sim.override_decision({0, "a0", "x"}), CommandError);
  EXPECT_THROW(sim.finalize_run(*f.gateway), SimulationError);
}

TEST(Commands, FinalizeNeedsAllDays) {
  Fixture f;
  auto sim = f.sim(2);
  sim.step_day(*f.gateway);
  EXPECT_THROW(sim.finalize_run(*f.gateway), SimulationError);
}

TEST(Responses, VectorsNormalizedAndTensionMirrored) {
  Fixture f;
  auto sim = f.sim(3);
  for (int d = 0; d < 3; ++d) sim.step_day(*f.gateway);
  const auto& series = sim.log().state.response_series.at("outcome");
  ASSERT_EQ(series.size(), 3u);
  for (const auto& s : series) EXPECT_EQ(s.probabilities, (std::vector<double>{0.5, 0.25, 0.25}));
  // The scalar whose name mentions tension is the tension source.
  for (double t : sim.log().state.tension_series) EXPECT_EQ(t, 40.0);
  EXPECT_EQ(tension_source(f.script, f.config(1)), "tension_index");
}

TEST(Responses, UnparseableJudgeCarriesForward) {
  Fixture f;
  auto sim = f.sim(2);
  sim.step_day(*f.gateway);
  f.provider->on(std::string(llm::roles::kJudge), [](const llm::CompletionRequest& r) -> std::string {
    if (ts::user_text(r).find("Response variable: outcome") != std::string::npos) return "mostly calm";
    return R"({"score": 60})";
  });
  const auto day = sim.step_day(*f.gateway);
  EXPECT_TRUE(day.samples.at("outcome").carried_forward);
  EXPECT_EQ(day.samples.at("outcome").probabilities, (std::vector<double>{0.5, 0.25, 0.25}));
  EXPECT_FALSE(day.warnings.empty());
  EXPECT_EQ(day.tension, 60.0);
}

TEST(Responses, DedicatedTensionJudgeWhenNoSource) {
  Fixture f;
  f.script.responses.pop_back();  // drop tension_index
  f.provider->on(std::string(llm::roles::kJudge), [](const llm::CompletionRequest& r) -> std::string {
    if (ts::system_text(r).find("systemic tension") != std::string::npos) return "73";
    if (ts::user_text(r).find("Response variable: outcome") != std::string::npos) return R"({"weights": [1, 1, 2]})";
    return R"({"score": 10})";
  });
  cast::ActorFactory factory(*f.gateway, llm::PromptLibrary::builtin());
  f.cast = factory.generate_cast(f.script, kReq);
  auto sim = f.sim(1);
  EXPECT_FALSE(tension_source(f.script, f.config(1)).has_value());
  EXPECT_EQ(sim.step_day(*f.gateway).tension, 73.0);
}

TEST(Atomicity, ProviderFailureLeavesStateUntouched) {
  Fixture f;
  auto sim = f.sim(3);
  sim.step_day(*f.gateway);
  const auto before = state_digest(sim.log());
  const auto snapshot = sim.snapshot();
  f.provider->on("actor:a1", [](const llm::CompletionRequest&) -> std::string {
    throw llm::TransportError("provider down", false);
  });
  sim.inject_event({1, "queued before the failure", "user"});
  EXPECT_THROW(sim.step_day(*f.gateway), llm::TransportError);
  EXPECT_EQ(state_digest(sim.log()), before);
  EXPECT_EQ(sim.log().state, snapshot.state);
  EXPECT_EQ(sim.current_day(), 1);
  // The queued event survives and is delivered once the provider recovers.
  f.provider->on("actor:a1", [](const llm::CompletionRequest&) { return std::string(R"({"action": "wait"})"); });
  const auto day = sim.step_day(*f.gateway);
  EXPECT_EQ(day.day_index, 1);
  EXPECT_EQ(day.messages.front().text, "queued before the failure");
}

TEST(Replay, RecordedRunReplaysIdentically) {
  Fixture f;
  auto rec = llm::Gateway::recording(f.provider);
  auto first = f.sim(4);
  first.inject_event({2, "news", "user"});
  for (int d = 0; d < 4; ++d) first.step_day(*rec);
  first.finalize_run(*rec);

  auto replay = llm::Gateway::replay(rec->recorded());
  auto second = f.sim(4);
  second.inject_event({2, "news", "user"});
  for (int d = 0; d < 4; ++d) second.step_day(*replay);
  second.finalize_run(*replay);
  EXPECT_EQ(first.log(), second.log());
  EXPECT_EQ(state_digest(first.log()), state_digest(second.log()));
}

TEST(Finalize, UnparseableOutcomeIsUndetermined) {
  Fixture f;
  auto sim = f.sim(1);
  sim.step_day(*f.gateway);
  f.provider->on(std::string(llm::roles::kJudge), [](const llm::CompletionRequest&) { return std::string("It ended."); });
  const auto o = sim.finalize_run(*f.gateway);
  EXPECT_EQ(o.category, "undetermined");
  EXPECT_EQ(o.raw, "It ended.");
}

TEST(Persistence, SaveLoadRoundTrip) {
  Fixture f;
  auto sim = f.sim(3);
  sim.inject_event({2, "pending", "user"});
  sim.step_day(*f.gateway);
  const auto dir = ts::temp_dir("run");
  save_run(sim.log(), dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "days" / "day-000.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "series.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "outcome.json"));
  const auto loaded = load_run(dir);
  EXPECT_EQ(loaded, sim.log());
  Simulation resumed(loaded);
  resumed.step_day(*f.gateway);
  resumed.step_day(*f.gateway);
  resumed.finalize_run(*f.gateway);
  save_run(resumed.log(), dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "outcome.json"));
  EXPECT_EQ(load_run(dir), resumed.log());
}

TEST(Json, TypesRoundTrip) {
  ResponseSample s{ResponseKind::probability_vector, 0, {0.5, 0.5}, "", true};
  EXPECT_EQ(sample_from_json(to_json(s)), s);
  EmergentEvent e{3, "x", "user"};
  EXPECT_EQ(event_from_json(to_json(e)), e);
  DecisionOverride o{1, "a", "b"};
  EXPECT_EQ(override_from_json(to_json(o)), o);
  RunConfig c;
  c.days = 5;
  c.channel_window = 10;
  c.tension_factor = "t";
  c.constraints = {{"a", "b"}};
  EXPECT_EQ(run_config_from_json(to_json(c)), c);
}

TEST(Concurrency, CommandsFromAnotherThread) {
  Fixture f;
  auto sim = f.sim(20);
  std::atomic<bool> done{false};
  std::atomic<int> accepted{0};
  std::thread steer([&] {
    while (!done) {
      try {
        sim.inject_event({sim.current_day(), "ping", "user"});
        ++accepted;
      } catch (const CommandError&) {
      }
      std::this_thread::yield();
    }
  });
  for (int d = 0; d < 20; ++d) sim.step_day(*f.gateway);
  done = true;
  steer.join();
  // Every accepted event is either delivered or still pending for a day
  // that will not run.
  const int delivered = count_kind(sim.log(), MessageKind::emergent_event);
  EXPECT_EQ(delivered + static_cast<int>(sim.snapshot().pending_events.size()), accepted.load());
}
