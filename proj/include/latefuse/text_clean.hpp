// Copyright 2026 The latefuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LATEFUSE_TEXT_CLEAN_HPP
#define LATEFUSE_TEXT_CLEAN_HPP

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

namespace latefuse {

namespace detail {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_ascii_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// One strip/decode/collapse pass. Tags are "<", optional "/", an ASCII
// letter, then anything but angle brackets up to ">". Numeric character
// references decode with or without the trailing semicolon (real product
// text often truncates them, "L&#39"); anything malformed is copied through.
inline std::string clean_text_pass(std::string_view s) {
  std::string decoded;
  decoded.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (c == '<') {
      std::size_t j = i + 1;
      if (j < s.size() && s[j] == '/') ++j;
      if (j < s.size() && is_ascii_alpha(s[j])) {
        ++j;
        while (j < s.size() && s[j] != '<' && s[j] != '>') ++j;
        if (j < s.size() && s[j] == '>') {
          i = j + 1;  // drop the whole tag
          continue;
        }
      }
      decoded.push_back(c);
      ++i;
      continue;
    }
    if (c == '&' && i + 1 < s.size() && s[i + 1] == '#') {
      std::size_t j = i + 2;
      bool hex = j < s.size() && (s[j] == 'x' || s[j] == 'X');
      if (hex) ++j;
      std::uint64_t value = 0;
      std::size_t digits = 0;
      while (j < s.size()) {
        char d = s[j];
        int dv;
        if (d >= '0' && d <= '9') dv = d - '0';
        else if (hex && d >= 'a' && d <= 'f') dv = d - 'a' + 10;
        else if (hex && d >= 'A' && d <= 'F') dv = d - 'A' + 10;
        else break;
        if (value <= 0x10FFFF) value = value * (hex ? 16 : 10) + static_cast<std::uint64_t>(dv);
        ++digits;
        ++j;
      }
      bool has_semi = j < s.size() && s[j] == ';';
      bool valid = digits > 0 && value > 0 && value <= 0x10FFFF &&
                   !(value >= 0xD800 && value <= 0xDFFF);
      if (valid) {
        append_utf8(decoded, static_cast<std::uint32_t>(value));
        i = has_semi ? j + 1 : j;
        continue;
      }
      decoded.push_back(c);
      ++i;
      continue;
    }
    decoded.push_back(c);
    ++i;
  }

  std::string out;
  out.reserve(decoded.size());
  bool pending_space = false;
  for (char c : decoded) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Preprocessing for raw product text: strips HTML tags, decodes numeric
/// character references, collapses whitespace runs, trims. Total function;
/// malformed tags and entities pass through untouched. Iterates to a
/// fixpoint so the result is idempotent even when decoding exposes new
/// tags or references (each pass strictly shrinks the string).
inline std::string clean_text(std::string_view raw) {
  std::string cur(raw);
  // each changing pass shrinks or stabilizes, so length+2 bounds the loop
  for (std::size_t pass = 0; pass < raw.size() + 2; ++pass) {
    std::string next = detail::clean_text_pass(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

}  // namespace latefuse

#endif  // LATEFUSE_TEXT_CLEAN_HPP
