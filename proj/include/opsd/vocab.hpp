#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace opsd {

using TokenId = int;

// Closed character-level vocabulary. Ordinary characters map 1:1 to tokens;
// structural markers are reserved tokens that never collide with text.
namespace vocab {

inline constexpr char kChars[] = "0123456789+-*%()=;# ";
inline constexpr int kNumChars = 20;

inline constexpr TokenId PROB = kNumChars + 0;   // problem marker
inline constexpr TokenId REF = kNumChars + 1;    // reference-solution marker
inline constexpr TokenId RETRY = kNumChars + 2;  // "solve it yourself" instruction
inline constexpr TokenId ANS = kNumChars + 3;    // answer marker
inline constexpr TokenId EOS = kNumChars + 4;

inline constexpr int kSize = kNumChars + 5;

inline TokenId encode_char(char c) {
    for (int i = 0; i < kNumChars; ++i)
        if (kChars[i] == c) return i;
    throw std::invalid_argument(std::string("vocab: unencodable character '") + c + "'");
}

inline std::vector<TokenId> encode(const std::string& text) {
    std::vector<TokenId> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(encode_char(c));
    return out;
}

// Markers render as nothing; decode is for verifier/report consumption.
inline std::string decode(const std::vector<TokenId>& tokens) {
    std::string out;
    for (TokenId t : tokens) {
        if (t < 0 || t >= kSize) throw std::invalid_argument("vocab: token id out of range");
        if (t < kNumChars) out += kChars[t];
    }
    return out;
}

inline bool is_marker(TokenId t) { return t >= kNumChars && t < kSize; }

}  // namespace vocab
}  // namespace opsd
