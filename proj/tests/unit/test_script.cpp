#include <gtest/gtest.h>

#include <set>

#include "dstage/script/serialization.hpp"
#include "support.hpp"

using namespace dstage;
namespace ts = dstage::testing;

TEST(Requirement, ValidExample) {
  UserRequirement req{"factors of salesperson efficiency", {"order difficulty"}, "salesperson Zhang Qiang", {}, {}};
  EXPECT_TRUE(validate_requirement(req).valid());
}

TEST(Requirement, EmptyInputListsAllThree) {
  const auto r = validate_requirement(UserRequirement{});
  EXPECT_EQ(r.violations.size(), 3u);
  std::set<std::string> paths;
  for (const auto& v : r.violations) paths.insert(v.path);
  EXPECT_EQ(paths, (std::set<std::string>{"research_goal", "core_variables", "target_object"}));
}

TEST(Requirement, WhitespaceOnlyTargetIsMissing) {
  UserRequirement req{"x", {"v"}, "   ", {}, {}};
  const auto r = validate_requirement(req);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].path, "target_object");
}

TEST(Requirement, BlankVariablesDoNotCount) {
  UserRequirement req{"x", {" ", ""}, "t", {}, {}};
  EXPECT_FALSE(validate_requirement(req).valid());
  req.core_variables.push_back("v");
  EXPECT_TRUE(validate_requirement(req).valid());
}

TEST(Requirement, JsonRoundTrip) {
  UserRequirement req{"g", {"a", "b"}, "t", std::string("story"), std::string("tag")};
  EXPECT_EQ(parse_requirement(to_json(req)), req);
  EXPECT_THROW(parse_requirement(Json::parse(R"({"research_goal": 1})")), ParseError);
}

TEST(ScriptValidation, CubanExampleIsValid) {
  const auto s = ts::cuban_script();
  EXPECT_EQ(s.factors.size(), 29u);
  EXPECT_EQ(s.responses.size(), 4u);
  EXPECT_EQ(s.design_points.size(), 12u);
  EXPECT_TRUE(validate_script(s).valid()) << validate_script(s).summary();
}

TEST(ScriptValidation, LevelNotDeclared) {
  auto s = ts::small_script();
  s.design_points[0].assignments["f1"] = std::string("x");
  const auto r = validate_script(s);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].path, "design_points[0].assignments[\"f1\"]");
}

TEST(ScriptValidation, DuplicateFactorNames) {
  auto s = ts::small_script();
  s.factors[1].name = "f0";
  const auto r = validate_script(s);
  ASSERT_FALSE(r.valid());
  bool uniqueness = false;
  for (const auto& v : r.violations) uniqueness |= v.message.find("duplicate") != std::string::npos;
  EXPECT_TRUE(uniqueness) << r.summary();
}

TEST(ScriptValidation, FactorNamesAreCaseSensitive) {
  auto s = ts::small_script();
  s.factors[1].name = "F0";
  EXPECT_TRUE(validate_script(s).valid());
}

TEST(ScriptValidation, StructuralRules) {
  auto s = ts::small_script();
  s.factors[0].levels = {std::string("a"), std::string("a")};
  s.design_points.clear();
  s.responses[0].categories = {"only"};
  s.goal.statement = " ";
  const auto r = validate_script(s);
  std::set<std::string> paths;
  for (const auto& v : r.violations) paths.insert(v.path);
  EXPECT_TRUE(paths.count("factors[0].levels"));
  EXPECT_TRUE(paths.count("design_points"));
  EXPECT_TRUE(paths.count("responses[0].categories"));
  EXPECT_TRUE(paths.count("goal.statement"));
}

TEST(ScriptValidation, DeterministicAndPure) {
  auto s = ts::small_script();
  s.design_points[1].assignments["ghost"] = 1.0;
  const auto copy = s;
  EXPECT_EQ(validate_script(s), validate_script(s));
  EXPECT_EQ(s, copy);
}

TEST(ScriptValidation, NumericAndStringLevelsDiffer) {
  auto s = ts::small_script();
  s.factors[2].levels = {1.0, 2.0};
  s.design_points[0].assignments["f2"] = std::string("1");
  EXPECT_FALSE(validate_script(s).valid());
  s.design_points[0].assignments["f2"] = 1.0;
  EXPECT_TRUE(validate_script(s).valid());
}

TEST(Serialization, RoundTripSmallAndCuban) {
  for (const auto& s : {ts::small_script(), ts::cuban_script()}) {
    const auto doc = serialize_script(s);
    EXPECT_EQ(doc["schema_version"], "1");
    EXPECT_EQ(parse_script(doc), s);
    EXPECT_EQ(serialize_script_text(parse_script_text(serialize_script_text(s))), serialize_script_text(s));
  }
}

TEST(Serialization, MissingResponsesPath) {
  auto doc = serialize_script(ts::small_script());
  doc.erase("responses");
  try {
    parse_script(doc);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.path(), "root.responses");
  }
}

TEST(Serialization, InvariantViolationIsParseError) {
  auto doc = serialize_script(ts::small_script());
  doc["design_points"][0]["assignments"]["f0"] = "nope";
  EXPECT_THROW(parse_script(doc), ParseError);
  EXPECT_THROW(parse_script_text("{not json"), ParseError);
}

TEST(Serialization, SerializeRejectsInvalidScript) {
  auto s = ts::small_script();
  s.factors.clear();
  EXPECT_THROW(serialize_script(s), ValidationError);
}

TEST(Serialization, RandomScriptsRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto s = ts::random_script(rng);
    ASSERT_TRUE(validate_script(s).valid()) << validate_script(s).summary();
    EXPECT_EQ(parse_script(serialize_script(s)), s);
  }
}

TEST(Serialization, MutatedScriptsRejectedWithPath) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto doc = serialize_script(ts::random_script(rng));
    std::string what;
    const auto bad = ts::mutate_invalid(doc, rng, what);
    try {
      parse_script(bad);
      ADD_FAILURE() << "accepted: " << what;
    } catch (const ParseError& e) {
      EXPECT_FALSE(e.path().empty()) << what;
      EXPECT_EQ(e.path().rfind("root", 0), 0u) << what << " " << e.path();
    }
  }
}

TEST(FullFactorial, TwoByThree) {
  std::vector<InfluenceFactor> factors = {
      {"b", "", {1.0, 2.0, 3.0}, {}},
      {"a", "", {std::string("x"), std::string("y")}, {}},
  };
  const auto points = full_factorial_design(factors, 100);
  ASSERT_EQ(points.size(), 6u);
  // "a" sorts first and varies slowest.
  EXPECT_EQ(level_to_string(points[0].assignments.at("a")), "x");
  EXPECT_EQ(level_to_string(points[0].assignments.at("b")), "1");
  EXPECT_EQ(level_to_string(points[1].assignments.at("b")), "2");
  EXPECT_EQ(level_to_string(points[3].assignments.at("a")), "y");
  std::set<std::string> ids;
  for (const auto& p : points) ids.insert(p.id);
  EXPECT_EQ(ids.size(), 6u);
}

TEST(FullFactorial, OneFactorOrderedByLevel) {
  const auto points = full_factorial_design({{"f", "", {std::string("low"), std::string("high")}, {}}}, 10);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(std::get<std::string>(points[0].assignments.at("f")), "low");
  EXPECT_EQ(std::get<std::string>(points[1].assignments.at("f")), "high");
}

TEST(FullFactorial, CapExceededCitesProduct) {
  std::vector<InfluenceFactor> factors;
  for (auto n : {"a", "b", "c"}) factors.push_back({n, "", {0.0, 1.0}, {}});
  try {
    full_factorial_design(factors, 4);
    FAIL() << "expected CapExceededError";
  } catch (const CapExceededError& e) {
    EXPECT_EQ(e.product(), 8u);
    EXPECT_NE(std::string(e.what()).find('8'), std::string::npos);
  }
}

TEST(FullFactorial, CoversEveryLevelPair) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = ts::random_script(rng);
    std::size_t product = 1;
    for (const auto& f : s.factors) product *= f.levels.size();
    if (product > 5000) continue;
    const auto points = full_factorial_design(s.factors, 5000);
    EXPECT_EQ(points.size(), product);
    for (const auto& f : s.factors)
      for (const auto& level : f.levels) {
        bool seen = false;
        for (const auto& p : points) seen |= p.assignments.at(f.name) == level;
        EXPECT_TRUE(seen);
      }
    s.design_points = points;
    EXPECT_TRUE(validate_script(s).valid());
  }
}
