#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtsql::linking {

// Lowercases and splits on anything that is not a letter or digit (underscore
// included). A '.' between two digits stays inside the token so decimals
// survive.
std::vector<std::string> tokenize(std::string_view text);
// Same token boundaries as tokenize, original casing kept (literal values).
std::vector<std::string> tokenize_cased(std::string_view text);

// Porter stemmer, original 1980 rule set.
std::string stem(std::string_view token);

bool is_stopword(std::string_view token);

std::string join_words(const std::vector<std::string>& words, std::string_view sep = " ");

}  // namespace mtsql::linking
