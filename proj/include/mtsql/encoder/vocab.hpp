#pragma once

#include <map>
#include <string>
#include <vector>

namespace mtsql::encoder {

// Word vocabulary. Id 0 is reserved for unknown words.
class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;

  Vocabulary();
  std::size_t add(const std::string& word);
  std::size_t id(const std::string& word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace mtsql::encoder
