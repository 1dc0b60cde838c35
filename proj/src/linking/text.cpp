#include "mtsql/linking/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace mtsql::linking {

std::vector<std::string> tokenize(std::string_view text) {
  auto out = tokenize_cased(text);
  for (auto& t : out)
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize_cased(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (is_word(c)) {
      cur.push_back(c);
    } else if (c == '.' && !cur.empty() && std::isdigit(static_cast<unsigned char>(cur.back())) &&
               i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      cur.push_back('.');
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

class Porter {
 public:
  explicit Porter(std::string_view w) : b_(w) {}

  std::string run() {
    step1a();
    step1b();
    step1c();
    step2();
    step3();
    step4();
    step5();
    return b_;
  }

 private:
  std::string b_;

  bool cons(const std::string& s, std::size_t i) const {
    switch (s[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 || !cons(s, i - 1);
      default:
        return true;
    }
  }

  // Number of VC sequences in [C](VC)^m[V].
  int measure(const std::string& s) const {
    int m = 0;
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n && cons(s, i)) ++i;
    while (i < n) {
      while (i < n && !cons(s, i)) ++i;
      if (i >= n) break;
      while (i < n && cons(s, i)) ++i;
      ++m;
    }
    return m;
  }

  bool has_vowel(const std::string& s) const {
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!cons(s, i)) return true;
    return false;
  }

  bool double_cons(const std::string& s) const {
    const auto n = s.size();
    return n >= 2 && s[n - 1] == s[n - 2] && cons(s, n - 1);
  }

  bool cvc(const std::string& s) const {
    const auto n = s.size();
    if (n < 3) return false;
    if (!cons(s, n - 3) || cons(s, n - 2) || !cons(s, n - 1)) return false;
    const char c = s[n - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool ends(std::string_view suf) const {
    return b_.size() >= suf.size() && b_.compare(b_.size() - suf.size(), suf.size(), suf) == 0;
  }
  std::string stem_of(std::string_view suf) const { return b_.substr(0, b_.size() - suf.size()); }

  struct Rule {
    std::string_view suffix;
    std::string_view replacement;
  };

  // First rule whose suffix matches decides; it fires only if the remaining
  // stem has measure > min_m.
  template <std::size_t N>
  void apply_list(const std::array<Rule, N>& rules, int min_m) {
    for (const auto& r : rules) {
      if (!ends(r.suffix)) continue;
      std::string s = stem_of(r.suffix);
      if (measure(s) > min_m) b_ = s + std::string(r.replacement);
      return;
    }
  }

  void step1a() {
    if (ends("sses")) b_ = stem_of("sses") + "ss";
    else if (ends("ies")) b_ = stem_of("ies") + "i";
    else if (ends("ss")) return;
    else if (ends("s")) b_ = stem_of("s");
  }

  void step1b() {
    if (ends("eed")) {
      std::string s = stem_of("eed");
      if (measure(s) > 0) b_ = s + "ee";
      return;
    }
    std::string s;
    if (ends("ed")) s = stem_of("ed");
    else if (ends("ing")) s = stem_of("ing");
    else return;
    if (!has_vowel(s)) return;
    b_ = s;
    if (ends("at") || ends("bl") || ends("iz")) {
      b_ += "e";
    } else if (double_cons(b_) && !ends("l") && !ends("s") && !ends("z")) {
      b_.pop_back();
    } else if (measure(b_) == 1 && cvc(b_)) {
      b_ += "e";
    }
  }

  void step1c() {
    if (ends("y") && has_vowel(stem_of("y"))) b_ = stem_of("y") + "i";
  }

  void step2() {
    static constexpr std::array<Rule, 20> rules{{
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
    }};
    apply_list(rules, 0);
  }

  void step3() {
    static constexpr std::array<Rule, 7> rules{{
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""},
    }};
    apply_list(rules, 0);
  }

  void step4() {
    static constexpr std::array<std::string_view, 19> suffixes{
        "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
        "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
    for (auto suf : suffixes) {
      if (!ends(suf)) continue;
      std::string s = stem_of(suf);
      if (measure(s) <= 1) return;
      if (suf == "ion" && (s.empty() || (s.back() != 's' && s.back() != 't'))) return;
      b_ = s;
      return;
    }
  }

  void step5() {
    if (ends("e")) {
      std::string s = stem_of("e");
      const int m = measure(s);
      if (m > 1 || (m == 1 && !cvc(s))) b_ = s;
    }
    if (measure(b_) > 1 && double_cons(b_) && ends("l")) b_.pop_back();
  }
};

}  // namespace

std::string stem(std::string_view token) {
  if (token.empty()) return {};
  return Porter(token).run();
}

bool is_stopword(std::string_view token) {
  static constexpr std::array<std::string_view, 48> words{
      "a",    "an",   "the",  "of",   "in",   "on",   "at",   "to",   "for",  "by",   "with", "and",
      "or",   "is",   "are",  "was",  "were", "be",   "what", "which", "who", "whom", "how",  "many",
      "much", "all",  "each", "that", "this", "those", "these", "do", "does", "did", "it",  "its",
      "as",   "from", "list", "show", "give", "find", "me",   "there", "than", "have", "has", "s"};
  return std::find(words.begin(), words.end(), token) != words.end();
}

std::string join_words(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

}  // namespace mtsql::linking
