#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "dstage/llm/extract.hpp"
#include "dstage/llm/gateway.hpp"
#include "dstage/llm/http_provider.hpp"
#include "dstage/llm/prompts.hpp"
#include "support.hpp"

using namespace dstage;
using namespace dstage::llm;
namespace ts = dstage::testing;

namespace {

CompletionRequest sample_request(std::string role = "director_goal", std::string user = "hello") {
  return Gateway::live(std::make_shared<FunctionProvider>([](const CompletionRequest&) { return ""; }))
      ->request(role, "system text", std::move(user), "verdict.v1");
}

std::shared_ptr<FunctionProvider> counting(std::atomic<int>& n) {
  return std::make_shared<FunctionProvider>([&n](const CompletionRequest& req) {
    return req.role_id + "#" + std::to_string(++n);
  });
}

}  // namespace

TEST(Request, DigestIgnoresModelHint) {
  auto a = sample_request();
  auto b = a;
  b.model_hint = "another-model";
  EXPECT_EQ(request_digest(a), request_digest(b));
  b.temperature = 0.5;
  EXPECT_NE(request_digest(a), request_digest(b));
  b = a;
  b.messages[1].text += " ";
  EXPECT_NE(request_digest(a), request_digest(b));
  b = a;
  b.role_id = "director_design";
  EXPECT_NE(request_digest(a), request_digest(b));
}

TEST(Request, JsonRoundTrip) {
  const auto req = sample_request();
  EXPECT_EQ(request_from_json(to_json(req)), req);
  EXPECT_EQ(request_digest(request_from_json(Json::parse(to_json(req).dump(4)))), request_digest(req));
}

TEST(Request, ChecksShape) {
  CompletionRequest req;
  EXPECT_THROW(check_request(req), Error);
  req.messages = {{Speaker::user, "x"}};
  EXPECT_THROW(check_request(req), Error);
  req.messages = {{Speaker::system, "s"}, {Speaker::user, "x"}};
  EXPECT_NO_THROW(check_request(req));
  req.temperature = -1;
  EXPECT_THROW(check_request(req), Error);
}

TEST(Roles, ActorRoles) {
  EXPECT_EQ(roles::actor("kennedy"), "actor:kennedy");
  EXPECT_TRUE(roles::is_actor("actor:kennedy"));
  EXPECT_FALSE(roles::is_actor("judge"));
}

TEST(GatewayConfig, TemperatureDefaults) {
  const auto c = GatewayConfig::defaults();
  EXPECT_EQ(c.settings_for("screenwriter").temperature, 0.8);
  EXPECT_EQ(c.settings_for("director_goal").temperature, 0.0);
  EXPECT_EQ(c.settings_for("judge").temperature, 0.0);
  EXPECT_EQ(c.settings_for("actor:x").temperature, 0.7);
  EXPECT_EQ(c.settings_for("unknown_role").model, c.settings_for("default").model);
}

TEST(Fixture, TextRoundTrip) {
  Fixture f;
  f.append({"d1", "first", {{"role_id", "judge"}}});
  f.append({"d2", "line\nbreak", {}});
  f.append({"d1", "again", {}});
  const auto text = f.to_text();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  const auto back = Fixture::parse(text);
  EXPECT_EQ(back.entries(), f.entries());
  ASSERT_NE(back.positions("d1"), nullptr);
  EXPECT_EQ(*back.positions("d1"), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(back.positions("zz"), nullptr);
  const auto dir = ts::temp_dir("fixture");
  f.save(dir / "f.jsonl");
  EXPECT_EQ(Fixture::load(dir / "f.jsonl").entries(), f.entries());
}

TEST(Gateway, RecordThenReplayIsIdentical) {
  std::atomic<int> n{0};
  auto rec = Gateway::recording(counting(n));
  std::vector<std::string> first;
  for (auto user : {"a", "b", "a", "c", "a"}) first.push_back(rec->complete(sample_request("judge", user)));
  const auto replay = Gateway::replay(rec->recorded());
  std::vector<std::string> second;
  for (auto user : {"a", "b", "a", "c", "a"}) second.push_back(replay->complete(sample_request("judge", user)));
  EXPECT_EQ(first, second);
  EXPECT_EQ(n.load(), 5);
  // Cursor runs past the recordings for "a" and sticks on the last one.
  EXPECT_EQ(replay->complete(sample_request("judge", "a")), first[4]);
}

TEST(Gateway, ReplayMissNamesRole) {
  const auto replay = Gateway::replay(Fixture{});
  try {
    replay->complete(sample_request("director_goal"));
    FAIL() << "expected ReplayMissError";
  } catch (const ReplayMissError& e) {
    EXPECT_EQ(e.role_id(), "director_goal");
    EXPECT_EQ(e.digest(), request_digest(sample_request("director_goal")));
    EXPECT_NE(std::string(e.what()).find("director_goal"), std::string::npos);
  }
}

TEST(Gateway, RecordingSinkAppendsAsItGoes) {
  const auto dir = ts::temp_dir("sink");
  std::atomic<int> n{0};
  auto rec = Gateway::recording(counting(n), GatewayConfig::defaults(), dir / "rec.jsonl");
  rec->complete(sample_request("judge", "x"));
  EXPECT_EQ(Fixture::load(dir / "rec.jsonl").size(), 1u);
  rec->complete(sample_request("judge", "y"));
  const auto loaded = Fixture::load(dir / "rec.jsonl");
  EXPECT_EQ(loaded.entries(), rec->recorded().entries());
  EXPECT_EQ(loaded.entries()[0].metadata["role_id"], "judge");
}

TEST(Gateway, RetriesRetryableErrorsWithBackoff) {
  int calls = 0;
  std::vector<long long> delays;
  auto config = GatewayConfig::defaults();
  config.sleep = [&](std::chrono::milliseconds d) { delays.push_back(d.count()); };
  auto gw = Gateway::live(std::make_shared<FunctionProvider>([&](const CompletionRequest&) -> std::string {
                            if (++calls < 3) throw TransportError("busy");
                            return "ok";
                          }),
                          config);
  EXPECT_EQ(gw->complete(sample_request()), "ok");
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(delays, (std::vector<long long>{500, 1000}));
}

TEST(Gateway, ExhaustionIsTransportError) {
  int calls = 0;
  auto config = GatewayConfig::defaults();
  config.sleep = [](std::chrono::milliseconds) {};
  auto gw = Gateway::live(std::make_shared<FunctionProvider>([&](const CompletionRequest&) -> std::string {
                            ++calls;
                            throw TransportError("down");
                          }),
                          config);
  EXPECT_THROW(gw->complete(sample_request()), TransportError);
  EXPECT_EQ(calls, 3);

  calls = 0;
  auto fatal = Gateway::live(std::make_shared<FunctionProvider>([&](const CompletionRequest&) -> std::string {
                               ++calls;
                               throw TransportError("bad request", false);
                             }),
                             config);
  EXPECT_THROW(fatal->complete(sample_request()), TransportError);
  EXPECT_EQ(calls, 1);
}

TEST(Gateway, ConcurrentCompleteIsSafe) {
  std::atomic<int> n{0};
  auto rec = Gateway::recording(counting(n));
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) rec->complete(sample_request("judge", std::to_string(t * 100 + i)));
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(rec->recorded().size(), 200u);
  EXPECT_EQ(rec->issued().size(), 200u);
}

TEST(Gateway, EmbedParsesArray) {
  auto gw = Gateway::live(std::make_shared<FunctionProvider>([](const CompletionRequest& req) -> std::string {
    EXPECT_EQ(req.role_id, "embedder");
    return "[1, 2.5, -3]";
  }));
  EXPECT_EQ(gw->embed("text"), (std::vector<double>{1, 2.5, -3}));
  auto bad = Gateway::live(std::make_shared<FunctionProvider>([](const CompletionRequest&) { return "none"; }));
  EXPECT_THROW(bad->embed("text"), GatewayError);
}

TEST(Extract, FencedDocument) {
  const auto doc = extract_structured("Sure!\n```json\n{\"passed\": true, \"feedback\": \"\"}\n```\nDone.", "verdict.v1");
  EXPECT_EQ(doc["passed"], true);
}

TEST(Extract, ProseOnlyFails) {
  EXPECT_THROW(extract_structured("I think it passes.", "verdict.v1"), ExtractionError);
}

TEST(Extract, SkipsInvalidFirstDocument) {
  const auto doc = extract_structured(
      R"(Draft: {"passed": "yes"} final: {"passed": false, "feedback": "fix it"})", "verdict.v1");
  EXPECT_EQ(doc["passed"], false);
  EXPECT_EQ(doc["feedback"], "fix it");
}

TEST(Extract, BracesInsideStrings) {
  const auto doc = extract_structured(R"({"passed": true, "feedback": "use {x} and ]"})", "verdict.v1");
  EXPECT_EQ(doc["feedback"], "use {x} and ]");
}

TEST(Extract, SchemaViolationReason) {
  try {
    extract_structured(R"({"feedback": "x"})", "verdict.v1");
    FAIL();
  } catch (const ExtractionError& e) {
    EXPECT_NE(std::string(e.what()).find("passed"), std::string::npos);
  }
}

TEST(Extract, Scores) {
  EXPECT_EQ(extract_score("85"), 85.0);
  EXPECT_EQ(extract_score("110"), 100.0);
  EXPECT_EQ(extract_score(R"({"score": -4})"), 0.0);
  EXPECT_EQ(extract_score("Score: {\"score\": 72.5}"), 72.5);
  EXPECT_FALSE(extract_score("about eighty").has_value());
  EXPECT_FALSE(extract_score("").has_value());
}

TEST(Prompts, RenderAndMissingPlaceholder) {
  PromptLibrary lib;
  lib.add("t", "#! comment\n[system]\nHello {{name}}.\n[user]\nTopic: {{topic}}\n");
  const auto p = lib.render("t", {{"name", "Ann"}, {"topic", "x"}});
  EXPECT_EQ(p.system, "Hello Ann.");
  EXPECT_EQ(p.user, "Topic: x");
  EXPECT_THROW(lib.render("t", {{"name", "Ann"}}), Error);
  EXPECT_THROW(lib.render("nope", {}), Error);
  EXPECT_EQ(substitute("{{a}}{{a}}-{{b}}", {{"a", "1"}, {"b", "2"}}), "11-2");
}

TEST(Prompts, BuiltinTemplatesExist) {
  const auto& lib = PromptLibrary::builtin();
  for (auto id : {"screenwriter_goal.v1", "screenwriter_factors.v1", "screenwriter_design.v1", "screenwriter_rewrite.v1",
                  "director_goal.v1", "director_factors.v1", "director_design.v1", "director_format.v1",
                  "chief_director.v1", "actor_factory.v1", "supervisor.v1", "actor_decision.v1", "judge_response.v1",
                  "judge_tension.v1", "judge_outcome.v1", "judge_similarity.v1"})
    EXPECT_TRUE(lib.has(id)) << id;
}

TEST(HttpProvider, WireShapes) {
  auto req = sample_request();
  req.model_hint = "m1";
  const auto body = HttpChatProvider::chat_body(req);
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "hello");
  EXPECT_EQ(body["response_format"]["type"], "json_object");
  EXPECT_EQ(HttpChatProvider::parse_chat_response(R"({"choices":[{"message":{"content":"hi"}}]})"), "hi");
  EXPECT_THROW(HttpChatProvider::parse_chat_response("{}"), TransportError);
  EXPECT_EQ(HttpChatProvider::parse_embedding_response(R"({"data":[{"embedding":[1,2]}]})"), "[1,2]");
  EXPECT_THROW(HttpChatProvider(HttpChatProvider::Options{"localhost:1", "", std::chrono::seconds(1)}), Error);
}

TEST(HttpProvider, TalksToLocalEndpoint) {
  httplib::Server server;
  std::atomic<int> failures_left{1};
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& r, httplib::Response& res) {
    if (failures_left-- > 0) {
      res.status = 503;
      return;
    }
    seen_auth = r.get_header_value("Authorization");
    const auto body = Json::parse(r.body);
    const Json reply = {{"choices", {{{"message", {{"content", "echo:" + body["messages"][1]["content"].get<std::string>()}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  server.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"embedding":[0.5,0.25]}]})", "application/json");
  });
  server.Post("/v1/bad/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("nope", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  auto provider = std::make_shared<HttpChatProvider>(HttpChatProvider::Options{base, "key-1", std::chrono::seconds(5)});
  auto config = GatewayConfig::defaults();
  config.sleep = [](std::chrono::milliseconds) {};
  auto gw = Gateway::live(provider, config);
  EXPECT_EQ(gw->complete(sample_request("judge", "ping")), "echo:ping");
  EXPECT_EQ(seen_auth, "Bearer key-1");
  EXPECT_EQ(gw->embed("x"), (std::vector<double>{0.5, 0.25}));

  auto bad = Gateway::live(
      std::make_shared<HttpChatProvider>(HttpChatProvider::Options{base + "/bad", "", std::chrono::seconds(5)}), config);
  EXPECT_THROW(bad->complete(sample_request()), TransportError);

  server.stop();
  th.join();
}
