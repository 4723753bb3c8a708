#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spluad/core/error.hpp"

namespace spluad::clip {

struct ClassPrompt {
  std::string key;   // stable identifier, e.g. "live"
  std::string name;  // fills the template slot
  std::vector<std::string> descriptions;
};

// Class names, the prompt template, and per-class descriptions that feed
// context clustering.
struct ClassPromptSet {
  std::string prompt_template = "a photo of a {}";
  std::vector<ClassPrompt> classes;

  void validate() const {
    require(classes.size() >= 2, ErrorCode::input, "class prompt set needs at least 2 classes");
    require(prompt_template.find("{}") != std::string::npos, ErrorCode::input,
            "prompt template must contain a {} slot");
    for (const auto& c : classes)
      require(!c.descriptions.empty(), ErrorCode::input,
              "class '" + c.key + "' has no descriptions");
  }

  std::string fill(const std::string& phrase) const {
    std::string out = prompt_template;
    out.replace(out.find("{}"), 2, phrase);
    return out;
  }

  std::size_t index_of(const std::string& key) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i].key == key) return i;
    fail(ErrorCode::input, "unknown class key: " + key);
  }

  std::vector<std::string> all_texts() const {
    std::vector<std::string> out;
    for (const auto& c : classes) {
      out.push_back(fill(c.name));
      for (const auto& d : c.descriptions) out.push_back(fill(d));
    }
    return out;
  }
};

// Live, physical and digital classes with attack-family descriptions.
inline ClassPromptSet default_class_prompts() {
  ClassPromptSet set;
  set.classes = {
      {"live",
       "real face",
       {"real face", "live bona fide face", "genuine face with natural skin texture",
        "real person under natural lighting"}},
      {"physical_attack",
       "physical spoof face",
       {"printed photo face", "screen replay face", "3d mask face", "paper cutout face"}},
      {"digital_attack",
       "digital forgery face",
       {"deepfake face swap", "attribute edited face", "gan synthesized face",
        "blended forgery face"}},
  };
  return set;
}

// JSON form:
//   {"template": "a photo of a {}",
//    "classes": [{"key": "live", "name": "real face",
//                 "descriptions": ["...", ...]}, ...]}
inline ClassPromptSet class_prompts_from_json(const nlohmann::json& j) {
  ClassPromptSet set;
  try {
    if (j.contains("template")) set.prompt_template = j.at("template").get<std::string>();
    for (const auto& c : j.at("classes")) {
      ClassPrompt p;
      p.key = c.at("key").get<std::string>();
      p.name = c.at("name").get<std::string>();
      p.descriptions = c.at("descriptions").get<std::vector<std::string>>();
      set.classes.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::input, std::string("malformed class prompt document: ") + e.what());
  }
  set.validate();
  return set;
}

inline nlohmann::json class_prompts_to_json(const ClassPromptSet& set) {
  nlohmann::json j;
  j["template"] = set.prompt_template;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : set.classes)
    j["classes"].push_back({{"key", c.key}, {"name", c.name}, {"descriptions", c.descriptions}});
  return j;
}

inline ClassPromptSet load_class_prompts(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open class prompt file: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::input, path.string() + ": " + e.what());
  }
  return class_prompts_from_json(j);
}

}  // namespace spluad::clip
