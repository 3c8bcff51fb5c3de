#ifndef TFORGE_TEXT_HPP
#define TFORGE_TEXT_HPP

#include <string>
#include <string_view>
#include <vector>

namespace tforge::text {

enum class TokenizerId { WhitespacePunct, Custom };

std::string_view to_string(TokenizerId id);
TokenizerId tokenizer_from_string(std::string_view name);

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string_view> tokenize(std::string_view text) const = 0;
  virtual std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

/// Maximal runs of alphanumerics (bytes >= 0x80 count as word characters so UTF-8 words stay
/// whole) plus one token per ASCII punctuation character. Whitespace and control bytes separate.
class WhitespacePunctTokenizer final : public Tokenizer {
 public:
  std::vector<std::string_view> tokenize(std::string_view text) const override;
  std::size_t count(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

/// Throws InvalidInput for TokenizerId::Custom: custom tokenizers are passed by reference.
std::size_t count_tokens(std::string_view text, TokenizerId id = TokenizerId::WhitespacePunct);

std::string ascii_lower(std::string_view text);
std::string_view trim(std::string_view text);

}  // namespace tforge::text

#endif  // TFORGE_TEXT_HPP
