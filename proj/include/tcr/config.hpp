#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tcr::config {

struct Bound {
  std::optional<double> min;
  std::optional<double> max;
  bool min_exclusive = false;
  bool max_exclusive = false;

  std::string describe() const;
};

enum class ElementKind { Int, Number, String };

// A schema is a document of defaults: every accepted key appears in it and
// its default fixes the type. Bounds, choices and element kinds of
// empty-default arrays are keyed by JSON pointer.
struct Schema {
  nlohmann::json defaults = nlohmann::json::object();
  std::map<std::string, Bound> bounds;
  std::map<std::string, std::vector<std::string>> choices;
  std::map<std::string, ElementKind> array_kinds;
  // Arrays whose length is fixed by the default (e.g. [lo, hi] ranges).
  std::map<std::string, std::size_t> array_lengths;
};

// Merges `user` over the defaults. Throws ConfigError naming the JSON pointer
// of the first unknown key, type mismatch or bound violation.
nlohmann::json resolve(const nlohmann::json& user, const Schema& schema);

// Parses a JSON file; ConfigError on missing file or syntax errors.
nlohmann::json read_json_file(const std::filesystem::path& path);

// Sets the value at `pointer` from a flag string, parsed as JSON when
// possible and as a bare string otherwise. Intermediate objects are created.
void apply_override(nlohmann::json& doc, const std::string& pointer, const std::string& value);

// Pointer-addressed lookups with ConfigError on absence.
const nlohmann::json& at(const nlohmann::json& doc, const std::string& pointer);

}  // namespace tcr::config
