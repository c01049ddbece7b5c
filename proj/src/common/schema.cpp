#include "dstage/common/schema.hpp"

#include <map>
#include <memory>
#include <mutex>

#include "dstage/common/assets.hpp"
#include "dstage/common/errors.hpp"

namespace dstage {
namespace {

bool matches_type(const std::string& type, const Json& value) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "number") return value.is_number();
  if (type == "integer") {
    if (value.is_number_integer()) return true;
    if (value.is_number_float()) {
      double d = value.get<double>();
      return d == static_cast<double>(static_cast<long long>(d));
    }
    return false;
  }
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  throw Error("schema uses unsupported type '" + type + "'");
}

std::string type_of(const Json& value) {
  switch (value.type()) {
    case Json::value_t::object: return "object";
    case Json::value_t::array: return "array";
    case Json::value_t::string: return "string";
    case Json::value_t::boolean: return "boolean";
    case Json::value_t::null: return "null";
    default: return "number";
  }
}

}  // namespace

Schema::Schema(Json document) : doc_(std::move(document)) {
  if (!doc_.is_object()) throw Error("schema document must be an object");
  name_ = doc_.value("$id", std::string{});
}

const Schema& Schema::named(std::string_view name) {
  static std::mutex mu;
  static std::map<std::string, std::unique_ptr<Schema>, std::less<>> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(name); it != cache.end()) return *it->second;
  auto text = assets::get("schemas/" + std::string(name) + ".json");
  auto schema = std::make_unique<Schema>(Json::parse(text));
  auto& ref = *schema;
  cache.emplace(std::string(name), std::move(schema));
  return ref;
}

ValidationReport Schema::validate(const Json& value, const std::string& root) const {
  ValidationReport report;
  check(doc_, value, root, report);
  return report;
}

ValidationReport Schema::validate_definition(std::string_view definition, const Json& value,
                                             const std::string& root) const {
  ValidationReport report;
  check(doc_.at("definitions").at(std::string(definition)), value, root, report);
  return report;
}

std::pair<const Schema*, const Json*> Schema::resolve(const Json& node) const {
  if (!node.is_object() || !node.contains("$ref")) return {this, &node};
  const auto ref = node.at("$ref").get<std::string>();
  const auto hash = ref.find('#');
  if (hash == std::string::npos) throw Error("unsupported $ref '" + ref + "'");
  const Schema& owner = hash == 0 ? *this : Schema::named(ref.substr(0, hash));
  static constexpr std::string_view kPrefix = "/definitions/";
  const auto pointer = ref.substr(hash + 1);
  if (pointer.rfind(kPrefix, 0) != 0) throw Error("unsupported $ref '" + ref + "'");
  const Json& target = owner.doc_.at("definitions").at(pointer.substr(kPrefix.size()));
  return owner.resolve(target);
}

void Schema::check(const Json& raw, const Json& value, const std::string& path,
                   ValidationReport& report) const {
  const auto [owner, resolved] = resolve(raw);
  if (owner != this) {
    owner->check(*resolved, value, path, report);
    return;
  }
  const Json& node = *resolved;

  if (auto it = node.find("type"); it != node.end()) {
    bool ok = false;
    if (it->is_array()) {
      for (const auto& t : *it) ok = ok || matches_type(t.get<std::string>(), value);
    } else {
      ok = matches_type(it->get<std::string>(), value);
    }
    if (!ok) {
      report.add(path, "expected " + it->dump() + ", got " + type_of(value));
      return;
    }
  }

  if (auto it = node.find("enum"); it != node.end()) {
    bool found = false;
    for (const auto& option : *it) found = found || option == value;
    if (!found) report.add(path, "value " + value.dump() + " not in " + it->dump());
  }

  if (value.is_string()) {
    if (auto it = node.find("minLength"); it != node.end()) {
      if (value.get_ref<const std::string&>().size() < it->get<std::size_t>())
        report.add(path, "string shorter than " + it->dump());
    }
  }

  if (value.is_number()) {
    const double d = value.get<double>();
    if (auto it = node.find("minimum"); it != node.end() && d < it->get<double>())
      report.add(path, "value " + value.dump() + " below minimum " + it->dump());
    if (auto it = node.find("maximum"); it != node.end() && d > it->get<double>())
      report.add(path, "value " + value.dump() + " above maximum " + it->dump());
  }

  if (value.is_array()) {
    if (auto it = node.find("minItems"); it != node.end() && value.size() < it->get<std::size_t>())
      report.add(path, "expected at least " + it->dump() + " items, got " +
                           std::to_string(value.size()));
    if (auto it = node.find("maxItems"); it != node.end() && value.size() > it->get<std::size_t>())
      report.add(path, "expected at most " + it->dump() + " items, got " +
                           std::to_string(value.size()));
    if (auto it = node.find("items"); it != node.end()) {
      for (std::size_t i = 0; i < value.size(); ++i)
        check(*it, value[i], path + "[" + std::to_string(i) + "]", report);
    }
  }

  if (value.is_object()) {
    const Json empty = Json::object();
    const Json& props = node.contains("properties") ? node.at("properties") : empty;
    if (auto it = node.find("required"); it != node.end()) {
      for (const auto& key : *it) {
        const auto& k = key.get_ref<const std::string&>();
        if (!value.contains(k)) report.add(path + "." + k, "required key missing");
      }
    }
    const auto extra_it = node.find("additionalProperties");
    const bool closed =
        extra_it != node.end() && extra_it->is_boolean() && !extra_it->get<bool>();
    for (const auto& [k, v] : value.items()) {
      if (auto p = props.find(k); p != props.end()) {
        check(*p, v, path + "." + k, report);
      } else if (closed) {
        report.add(path + "." + k, "unexpected key");
      } else if (extra_it != node.end() && extra_it->is_object()) {
        check(*extra_it, v, path + "." + k, report);
      }
    }
  }
}

}  // namespace dstage
