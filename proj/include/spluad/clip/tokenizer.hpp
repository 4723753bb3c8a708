#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "spluad/core/error.hpp"

namespace spluad::clip {

using TokenIds = std::vector<std::size_t>;

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kSosId = 1;
inline constexpr std::size_t kEosId = 2;
inline constexpr std::size_t kUnkId = 3;

inline std::vector<std::string> normalize_words(const std::string& text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream is(lowered);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  return words;
}

// Word-level vocabulary. Line number in the vocabulary file is the id; the
// first four lines are the reserved <pad>, <sos>, <eos>, <unk> tokens.
class Vocabulary {
 public:
  Vocabulary() : tokens_{"<pad>", "<sos>", "<eos>", "<unk>"} { reindex(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    require(tokens_.size() >= 4 && tokens_[0] == "<pad>" && tokens_[1] == "<sos>" &&
                tokens_[2] == "<eos>" && tokens_[3] == "<unk>",
            ErrorCode::input, "vocabulary must start with <pad>, <sos>, <eos>, <unk>");
    reindex();
  }

  // Reserved tokens followed by every distinct normalized word, sorted.
  static Vocabulary from_texts(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts)
      for (auto& w : normalize_words(t)) words.insert(w);
    std::vector<std::string> tokens{"<pad>", "<sos>", "<eos>", "<unk>"};
    for (const auto& w : words)
      if (std::find(tokens.begin(), tokens.end(), w) == tokens.end()) tokens.push_back(w);
    return Vocabulary(std::move(tokens));
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::io, "cannot open vocabulary file: " + path.string());
    std::vector<std::string> tokens;
    for (std::string line; std::getline(is, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) fail(ErrorCode::io, "cannot write vocabulary file: " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

  std::size_t id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnkId : it->second;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Lower-cases, splits on whitespace, maps unknown words to <unk>, wraps in
// <sos>/<eos>. Long inputs keep their first max_len - 2 words.
inline TokenIds tokenize(const std::string& text, const Vocabulary& vocab, std::size_t max_len) {
  require(max_len >= 3, ErrorCode::config, "max_text_len must be at least 3");
  const auto words = normalize_words(text);
  require(!words.empty(), ErrorCode::input, "cannot tokenize empty text");
  TokenIds ids{kSosId};
  for (std::size_t i = 0; i < words.size() && i + 2 < max_len; ++i) ids.push_back(vocab.id(words[i]));
  ids.push_back(kEosId);
  return ids;
}

}  // namespace spluad::clip
