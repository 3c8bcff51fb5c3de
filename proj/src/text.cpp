#include "tforge/text.hpp"

#include <cctype>

#include "tforge/error.hpp"

namespace tforge::text {
namespace {

enum class CharClass { Word, Punct, Space };

CharClass classify(unsigned char c) {
  if (c >= 0x80 || std::isalnum(c)) return CharClass::Word;
  if (std::ispunct(c)) return CharClass::Punct;
  return CharClass::Space;
}

template <typename Visit>
void scan(std::string_view text, Visit&& visit) {
  std::size_t i = 0;
  while (i < text.size()) {
    const CharClass cls = classify(static_cast<unsigned char>(text[i]));
    if (cls == CharClass::Space) {
      ++i;
    } else if (cls == CharClass::Punct) {
      visit(text.substr(i, 1));
      ++i;
    } else {
      std::size_t j = i + 1;
      while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == CharClass::Word) {
        ++j;
      }
      visit(text.substr(i, j - i));
      i = j;
    }
  }
}

}  // namespace

std::string_view to_string(TokenizerId id) {
  return id == TokenizerId::WhitespacePunct ? "whitespace-punct" : "custom";
}

TokenizerId tokenizer_from_string(std::string_view name) {
  if (name == "whitespace-punct") return TokenizerId::WhitespacePunct;
  if (name == "custom") return TokenizerId::Custom;
  throw Error(ErrorKind::Config, "unknown tokenizer '" + std::string(name) + "'");
}

std::vector<std::string_view> WhitespacePunctTokenizer::tokenize(std::string_view text) const {
  std::vector<std::string_view> tokens;
  scan(text, [&](std::string_view tok) { tokens.push_back(tok); });
  return tokens;
}

std::size_t WhitespacePunctTokenizer::count(std::string_view text) const {
  std::size_t n = 0;
  scan(text, [&](std::string_view) { ++n; });
  return n;
}

const Tokenizer& default_tokenizer() {
  static const WhitespacePunctTokenizer instance;
  return instance;
}

std::size_t count_tokens(std::string_view text, TokenizerId id) {
  if (id == TokenizerId::Custom) {
    throw Error(ErrorKind::InvalidInput, "count_tokens: pass the custom tokenizer instance");
  }
  return default_tokenizer().count(text);
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return text.substr(b, e - b);
}

}  // namespace tforge::text
