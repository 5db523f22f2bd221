#include "tcr/config.hpp"

#include <cmath>
#include <sstream>

#include "tcr/bytes.hpp"
#include "tcr/error.hpp"

namespace tcr::config {

using nlohmann::json;

std::string Bound::describe() const {
  std::ostringstream os;
  bool first = true;
  if (min) {
    os << (min_exclusive ? "> " : ">= ") << *min;
    first = false;
  }
  if (max) os << (first ? "" : " and ") << (max_exclusive ? "< " : "<= ") << *max;
  return os.str();
}

namespace {

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

[[noreturn]] void fail(const std::string& ptr, const std::string& what) {
  throw ConfigError("config " + (ptr.empty() ? std::string("/") : ptr) + ": " + what);
}

void check_bound(const Schema& s, const std::string& ptr, double v) {
  auto it = s.bounds.find(ptr);
  if (it == s.bounds.end()) return;
  const Bound& b = it->second;
  const bool lo = !b.min || (b.min_exclusive ? v > *b.min : v >= *b.min);
  const bool hi = !b.max || (b.max_exclusive ? v < *b.max : v <= *b.max);
  if (!lo || !hi) {
    std::ostringstream os;
    os << "value " << v << " out of range, must be " << b.describe();
    fail(ptr, os.str());
  }
}

json check_scalar(const json& def, const json& v, const Schema& s, const std::string& ptr) {
  if (def.is_boolean()) {
    if (!v.is_boolean()) fail(ptr, std::string("expected boolean, got ") + type_name(v));
    return v;
  }
  if (def.is_number_integer()) {
    if (!v.is_number_integer()) fail(ptr, std::string("expected integer, got ") + type_name(v));
    check_bound(s, ptr, v.get<double>());
    return v;
  }
  if (def.is_number()) {
    if (!v.is_number()) fail(ptr, std::string("expected number, got ") + type_name(v));
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ptr, "value must be finite");
    check_bound(s, ptr, d);
    return json(d);
  }
  if (def.is_string()) {
    if (!v.is_string()) fail(ptr, std::string("expected string, got ") + type_name(v));
    auto it = s.choices.find(ptr);
    if (it != s.choices.end()) {
      bool ok = false;
      std::string list;
      for (const auto& c : it->second) {
        ok = ok || c == v.get<std::string>();
        list += (list.empty() ? "" : ", ") + c;
      }
      if (!ok) fail(ptr, "'" + v.get<std::string>() + "' is not one of {" + list + "}");
    }
    return v;
  }
  fail(ptr, "schema default has unsupported type");
}

json merge(const json& def, const json& user, const Schema& s, const std::string& ptr) {
  if (def.is_object()) {
    if (!user.is_object()) fail(ptr, std::string("expected object, got ") + type_name(user));
    for (auto it = user.begin(); it != user.end(); ++it) {
      if (!def.contains(it.key())) fail(ptr + "/" + it.key(), "unknown key");
    }
    json out = json::object();
    for (auto it = def.begin(); it != def.end(); ++it) {
      const std::string p = ptr + "/" + it.key();
      out[it.key()] = user.contains(it.key()) ? merge(it.value(), user.at(it.key()), s, p)
                                              : merge(it.value(), it.value(), s, p);
    }
    return out;
  }
  if (def.is_array()) {
    if (!user.is_array()) fail(ptr, std::string("expected array, got ") + type_name(user));
    auto len = s.array_lengths.find(ptr);
    if (len != s.array_lengths.end() && user.size() != len->second) {
      fail(ptr, "expected " + std::to_string(len->second) + " elements, got " + std::to_string(user.size()));
    }
    json elem_def;
    auto kind = s.array_kinds.find(ptr);
    if (kind != s.array_kinds.end()) {
      elem_def = kind->second == ElementKind::Int ? json(0) : kind->second == ElementKind::Number ? json(0.0) : json("");
    } else if (!def.empty()) {
      elem_def = def.front();
    } else {
      fail(ptr, "schema lacks an element kind for this array");
    }
    json out = json::array();
    for (std::size_t k = 0; k < user.size(); ++k) {
      const std::string p = ptr + "/" + std::to_string(k);
      if (elem_def.is_number_integer() && !user[k].is_number_integer()) {
        fail(p, std::string("expected integer, got ") + type_name(user[k]));
      }
      // Element bounds are declared on the array pointer.
      Schema probe;
      if (auto b = s.bounds.find(ptr); b != s.bounds.end()) probe.bounds[p] = b->second;
      if (auto c = s.choices.find(ptr); c != s.choices.end()) probe.choices[p] = c->second;
      out.push_back(check_scalar(elem_def, user[k], probe, p));
    }
    return out;
  }
  return check_scalar(def, user, s, ptr);
}

}  // namespace

json resolve(const json& user, const Schema& schema) {
  return merge(schema.defaults, user.is_null() ? json::object() : user, schema, "");
}

json read_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& pointer, const std::string& value) {
  if (pointer.empty() || pointer.front() != '/') throw ConfigError("override key must be a JSON pointer: " + pointer);
  json v;
  try {
    v = json::parse(value);
  } catch (const json::parse_error&) {
    v = value;
  }
  try {
    doc[json::json_pointer(pointer)] = v;
  } catch (const json::exception& e) {
    throw ConfigError("cannot apply override " + pointer + ": " + e.what());
  }
}

const json& at(const json& doc, const std::string& pointer) {
  const json::json_pointer p(pointer);
  if (!doc.contains(p)) throw ConfigError("config " + pointer + ": missing");
  return doc.at(p);
}

}  // namespace tcr::config
