#include "idfprobe/wordpiece.h"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <array>
#include <stdexcept>

namespace idfprobe {
namespace {

bool IsWhitespace(UChar32 c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return true;
  return u_charType(c) == U_SPACE_SEPARATOR;
}

bool IsControl(UChar32 c) {
  if (c == '\t' || c == '\n' || c == '\r') return false;
  switch (u_charType(c)) {
    case U_CONTROL_CHAR:
    case U_FORMAT_CHAR:
    case U_SURROGATE:
    case U_PRIVATE_USE_CHAR:
    case U_UNASSIGNED:
      return true;
    default:
      return false;
  }
}

bool IsPunctuation(UChar32 c) {
  // Non-letter ASCII symbols such as '$' and '^' count as punctuation too.
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
      (c >= 123 && c <= 126)) {
    return true;
  }
  switch (u_charType(c)) {
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_CONNECTOR_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
      return true;
    default:
      return false;
  }
}

bool IsCjk(UChar32 c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0x20000 && c <= 0x2A6DF) || (c >= 0x2A700 && c <= 0x2B73F) ||
         (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

struct Word {
  std::string text;
  bool special = false;
};

constexpr std::array<std::string_view, 5> kSpecialLiterals = {
    Vocabulary::kUnknown, Vocabulary::kClassifier, Vocabulary::kSeparator,
    Vocabulary::kPad, Vocabulary::kMask};

const icu::Normalizer2& Nfd() {
  static const icu::Normalizer2* nfd = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFDInstance(status);
    if (U_FAILURE(status)) throw std::runtime_error("ICU NFD unavailable");
    return n;
  }();
  return *nfd;
}

// Lowercase, strip combining marks, split on punctuation.
void NormalizeToken(const icu::UnicodeString& token, std::vector<Word>& out) {
  icu::UnicodeString lowered(token);
  lowered.toLower(icu::Locale::getRoot());
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString decomposed = Nfd().normalize(lowered, status);
  if (U_FAILURE(status)) decomposed = lowered;

  icu::UnicodeString current;
  auto flush = [&] {
    if (!current.isEmpty()) {
      Word w;
      current.toUTF8String(w.text);
      out.push_back(std::move(w));
      current.remove();
    }
  };
  for (int32_t i = 0; i < decomposed.length();
       i = decomposed.moveIndex32(i, 1)) {
    const UChar32 c = decomposed.char32At(i);
    if (u_charType(c) == U_NON_SPACING_MARK) continue;
    if (IsPunctuation(c)) {
      flush();
      current.append(c);
      flush();
    } else {
      current.append(c);
    }
  }
  flush();
}

void SplitPlain(std::string_view segment, std::vector<Word>& out) {
  const icu::UnicodeString text = icu::UnicodeString::fromUTF8(
      icu::StringPiece(segment.data(), static_cast<int32_t>(segment.size())));
  icu::UnicodeString token;
  auto flush = [&] {
    if (!token.isEmpty()) {
      NormalizeToken(token, out);
      token.remove();
    }
  };
  for (int32_t i = 0; i < text.length(); i = text.moveIndex32(i, 1)) {
    const UChar32 c = text.char32At(i);
    if (c == 0 || c == 0xFFFD || IsControl(c)) continue;
    if (IsWhitespace(c)) {
      flush();
    } else if (IsCjk(c)) {
      flush();
      token.append(c);
      flush();
    } else {
      token.append(c);
    }
  }
  flush();
}

std::vector<Word> SplitWords(std::string_view text) {
  std::vector<Word> words;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t best = std::string_view::npos;
    std::string_view literal;
    for (std::string_view s : kSpecialLiterals) {
      const std::size_t at = text.find(s, pos);
      if (at < best) {
        best = at;
        literal = s;
      }
    }
    if (best == std::string_view::npos) {
      SplitPlain(text.substr(pos), words);
      break;
    }
    SplitPlain(text.substr(pos, best - pos), words);
    words.push_back(Word{std::string(literal), true});
    pos = best + literal.size();
  }
  return words;
}

}  // namespace

std::vector<std::string> WordPieceTokenizer::PreTokenize(
    std::string_view text) const {
  std::vector<std::string> out;
  for (auto& w : SplitWords(text)) out.push_back(std::move(w.text));
  return out;
}

std::vector<TokenId> WordPieceTokenizer::Encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const Word& w : SplitWords(text)) {
    if (w.special) {
      ids.push_back(*vocab_->Find(w.text));
    } else {
      EncodeWord(w.text, ids);
    }
  }
  return ids;
}

void WordPieceTokenizer::EncodeWord(const std::string& word,
                                    std::vector<TokenId>& out) const {
  std::vector<std::size_t> bounds;
  bounds.reserve(word.size() + 1);
  for (std::size_t i = 0; i < word.size(); ++i) {
    if ((static_cast<unsigned char>(word[i]) & 0xC0) != 0x80) bounds.push_back(i);
  }
  bounds.push_back(word.size());
  const std::size_t chars = bounds.size() - 1;
  const TokenId unknown = vocab_->special().unknown;
  if (chars > max_chars_per_word_) {
    out.push_back(unknown);
    return;
  }

  std::vector<TokenId> pieces;
  std::string candidate;
  std::size_t start = 0;
  while (start < chars) {
    std::size_t end = chars;
    std::optional<TokenId> match;
    while (start < end) {
      candidate.clear();
      if (start > 0) candidate = "##";
      candidate.append(word, bounds[start], bounds[end] - bounds[start]);
      match = vocab_->Find(candidate);
      if (match) break;
      --end;
    }
    if (!match) {
      out.push_back(unknown);
      return;
    }
    pieces.push_back(*match);
    start = end;
  }
  out.insert(out.end(), pieces.begin(), pieces.end());
}

std::vector<TokenId> WordPieceTokenize(std::string_view text,
                                       const Vocabulary& vocab) {
  return WordPieceTokenizer(vocab).Encode(text);
}

std::vector<std::string> IdsToTokens(const std::vector<TokenId>& ids,
                                     const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

}  // namespace idfprobe
