#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tagprime/types.hpp"

namespace tagprime {

// Greedy longest-match subword vocabulary. Piece ids are line indices in
// the vocab file. Tokens listed verbatim stay whole; anything else falls
// back to shorter pieces, down to single characters.
class SubwordVocab {
 public:
  SubwordVocab() = default;
  explicit SubwordVocab(std::vector<std::string> pieces);

  int size() const { return static_cast<int>(pieces_.size()); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  int piece_id(const std::string& piece) const;  // -1 if absent

  // Deterministic greedy longest-match; the concatenation of the returned
  // pieces spells the token. Throws if a character is not covered.
  std::vector<int> split(const std::string& token) const;

  void save(const std::string& path) const;
  static SubwordVocab load(const std::string& path);

  // Whole corpus tokens + verbalizer words + separator + all characters.
  static SubwordVocab build(const std::vector<RSEInstance>& corpus,
                            const RelationSchema& schema);

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
  size_t max_piece_len_ = 0;
};

}  // namespace tagprime
