#include <gtest/gtest.h>

#include "dstage/common/assets.hpp"
#include "dstage/common/date.hpp"
#include "dstage/common/json.hpp"
#include "dstage/common/schema.hpp"
#include "support.hpp"

using namespace dstage;
namespace ts = dstage::testing;

TEST(Json, CanonicalDumpSortsKeys) {
  const Json doc = Json::parse(R"({"b": 1, "a": {"d": [1, 2], "c": null}})");
  EXPECT_EQ(canonical_dump(doc), R"({"a":{"c":null,"d":[1,2]},"b":1})");
}

TEST(Json, PrettyDumpEndsWithNewline) {
  const auto text = pretty_dump(Json{{"z", 1}, {"a", 2}});
  EXPECT_EQ(text, "{\n  \"a\": 2,\n  \"z\": 1\n}\n");
}

TEST(Json, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Json, DigestIgnoresKeyOrder) {
  EXPECT_EQ(digest_of(Json::parse(R"({"a":1,"b":2})")), digest_of(Json::parse(R"({"b":2,"a":1})")));
  EXPECT_NE(digest_of(Json::parse(R"({"a":1})")), digest_of(Json::parse(R"({"a":2})")));
}

TEST(Json, WithoutKeyIsRecursive) {
  const Json doc = Json::parse(R"({"timestamp": 1, "x": [{"timestamp": 2, "y": 3}], "z": {"timestamp": 4}})");
  EXPECT_EQ(without_key(doc, "timestamp"), Json::parse(R"({"x": [{"y": 3}], "z": {}})"));
}

TEST(Json, FilesRoundTrip) {
  const auto dir = ts::temp_dir("json");
  const Json doc = {{"k", {1, 2, 3}}};
  write_json_file(dir / "sub" / "a.json", doc);
  EXPECT_EQ(read_json_file(dir / "sub" / "a.json"), doc);
  write_text_file(dir / "t.txt", "one");
  write_text_file(dir / "t.txt", "two");
  EXPECT_EQ(read_text_file(dir / "t.txt"), "two");
  append_text_file(dir / "t.txt", "\nthree");
  EXPECT_EQ(read_text_file(dir / "t.txt"), "two\nthree");
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    EXPECT_EQ(entry.path().filename().string().find(".tmp"), std::string::npos);
}

TEST(Json, ReadMissingFileThrows) {
  EXPECT_THROW(read_text_file("/nonexistent/dstage/file"), Error);
}

TEST(Date, ParseAndFormat) {
  const auto d = CalendarDate::parse("1962-10-16");
  EXPECT_EQ(d.year(), 1962);
  EXPECT_EQ(d.month(), 10u);
  EXPECT_EQ(d.day(), 16u);
  EXPECT_EQ(d.to_string(), "1962-10-16");
  EXPECT_THROW(CalendarDate::parse("1962-13-01"), Error);
  EXPECT_THROW(CalendarDate::parse("1962-02-30"), Error);
  EXPECT_THROW(CalendarDate::parse("16/10/1962"), Error);
}

TEST(Date, Arithmetic) {
  const auto d = CalendarDate::parse("1962-10-16");
  EXPECT_EQ(d.plus_days(12).to_string(), "1962-10-28");
  EXPECT_EQ(d.plus_days(16).to_string(), "1962-11-01");
  EXPECT_EQ(CalendarDate::parse("1962-10-28").days_since(d), 12);
  EXPECT_LT(d, d.plus_days(1));
  EXPECT_EQ(CalendarDate::parse("2024-02-28").plus_days(1).to_string(), "2024-02-29");
}

TEST(Validation, ReportSummaryAndJson) {
  ValidationReport r;
  EXPECT_TRUE(r.valid());
  r.add("root.a", "bad");
  r.add("root.b", "worse");
  EXPECT_FALSE(r.valid());
  EXPECT_NE(r.summary().find("root.a"), std::string::npos);
  const auto doc = r.to_json();
  EXPECT_EQ(doc["valid"], false);
  EXPECT_EQ(doc["violations"][1]["path"], "root.b");
  ValidationError e(r);
  EXPECT_EQ(e.report().violations.size(), 2u);
}

TEST(Schema, ValidatesTypesAndRequired) {
  Schema schema(Json::parse(R"({
    "type": "object", "required": ["name", "n"], "additionalProperties": false,
    "properties": {
      "name": {"type": "string", "minLength": 1},
      "n": {"type": "integer", "minimum": 0, "maximum": 10},
      "tags": {"type": "array", "minItems": 1, "maxItems": 2, "items": {"enum": ["a", "b"]}}
    }})"));
  EXPECT_TRUE(schema.validate(Json::parse(R"({"name": "x", "n": 3, "tags": ["a"]})")).valid());

  auto r = schema.validate(Json::parse(R"({"name": "", "n": 11, "tags": ["c", "a", "b"], "extra": 1})"));
  std::set<std::string> paths;
  for (const auto& v : r.violations) paths.insert(v.path);
  EXPECT_TRUE(paths.count("root.name"));
  EXPECT_TRUE(paths.count("root.n"));
  EXPECT_TRUE(paths.count("root.tags"));
  EXPECT_TRUE(paths.count("root.tags[0]"));
  EXPECT_TRUE(paths.count("root.extra"));

  r = schema.validate(Json::parse(R"({"name": "x"})"));
  ASSERT_FALSE(r.valid());
  EXPECT_NE(r.violations[0].message.find("n"), std::string::npos);
}

TEST(Schema, NamedSchemasResolveCrossReferences) {
  const auto& section = Schema::named("section_goal.v1");
  EXPECT_TRUE(section.validate(Json::parse(R"({"statement": "s", "success_criteria": []})")).valid());
  EXPECT_FALSE(section.validate(Json::parse(R"({"success_criteria": []})")).valid());
  const auto& script = Schema::named("section_script.v1");
  EXPECT_FALSE(script.validate(Json::object()).valid());
  EXPECT_THROW(Schema::named("no_such_schema"), std::exception);
}

TEST(Assets, PromptsAndSchemasAreEmbedded) {
  EXPECT_TRUE(assets::contains("schemas/script.v1.json"));
  EXPECT_TRUE(assets::contains("prompts/chief_director.v1.txt"));
  EXPECT_FALSE(assets::contains("prompts/missing.txt"));
  EXPECT_THROW(assets::get("prompts/missing.txt"), std::out_of_range);
  EXPECT_GE(assets::list("prompts/").size(), 16u);
  for (const auto& name : assets::list("schemas/")) {
    const auto doc = Json::parse(assets::get(name));
    EXPECT_TRUE(doc.is_object()) << name;
  }
}
