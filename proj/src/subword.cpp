#include "tagprime/subword.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace tagprime {

SubwordVocab::SubwordVocab(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  for (size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw std::invalid_argument("empty vocab piece");
    index_.emplace(pieces_[i], static_cast<int>(i));
    max_piece_len_ = std::max(max_piece_len_, pieces_[i].size());
  }
}

int SubwordVocab::piece_id(const std::string& piece) const {
  auto it = index_.find(piece);
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> SubwordVocab::split(const std::string& token) const {
  std::vector<int> ids;
  size_t pos = 0;
  while (pos < token.size()) {
    size_t len = std::min(max_piece_len_, token.size() - pos);
    int id = -1;
    for (; len >= 1; --len) {
      auto it = index_.find(token.substr(pos, len));
      if (it != index_.end()) {
        id = it->second;
        break;
      }
    }
    if (id < 0) {
      throw std::invalid_argument("vocab does not cover character '" +
                                  token.substr(pos, 1) + "' in token: " + token);
    }
    ids.push_back(id);
    pos += len;
  }
  return ids;
}

void SubwordVocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& p : pieces_) out << p << "\n";
}

SubwordVocab SubwordVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab file: " + path);
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) pieces.push_back(line);
  }
  return SubwordVocab(std::move(pieces));
}

SubwordVocab SubwordVocab::build(const std::vector<RSEInstance>& corpus,
                                 const RelationSchema& schema) {
  std::set<std::string> words;
  words.insert(schema.separator);
  for (const auto& inst : corpus) {
    for (const auto& t : inst.passage.tokens) words.insert(t);
  }
  for (const auto& r : schema.relation_labels) {
    for (const auto& w : schema.verbalize_relation(r)) words.insert(w);
  }
  for (const auto& t : schema.condition_types) {
    for (const auto& w : schema.verbalize_condition_type(t)) words.insert(w);
  }
  std::set<std::string> chars;
  for (const auto& w : words) {
    for (char c : w) chars.insert(std::string(1, c));
  }
  std::vector<std::string> pieces(words.begin(), words.end());
  for (const auto& c : chars) {
    if (!words.count(c)) pieces.push_back(c);
  }
  std::sort(pieces.begin(), pieces.end());
  return SubwordVocab(std::move(pieces));
}

}  // namespace tagprime
