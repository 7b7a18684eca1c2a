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

#include <catch2/catch_amalgamated.hpp>

#include "latefuse/rng.hpp"
#include "latefuse/text_clean.hpp"

using latefuse::clean_text;

TEST_CASE("clean_text strips HTML tags") {
  CHECK(clean_text("<p>Bonjour</p>") == "Bonjour");
  CHECK(clean_text("<div class=\"x\">a</div>") == "a");
  CHECK(clean_text("a<br/>b") == "ab");
  CHECK(clean_text("<p><p><p>x") == "x");
}

TEST_CASE("clean_text decodes numeric character references") {
  CHECK(clean_text("L&#39;été") == "L'été");
  CHECK(clean_text("L&#39 été") == "L' été");  // semicolon-less form
  CHECK(clean_text("&#x27;quote&#x27;") == "'quote'");
  CHECK(clean_text("caf&#233;") == "café");
}

TEST_CASE("clean_text collapses whitespace") {
  CHECK(clean_text("a   b") == "a b");
  CHECK(clean_text("  a\t\n b\r\n") == "a b");
  CHECK(clean_text("") == "");
  CHECK(clean_text(" \t \n ") == "");
}

TEST_CASE("clean_text passes malformed input through") {
  CHECK(clean_text("a < b") == "a < b");
  CHECK(clean_text("1<2 and 2>1") == "1<2 and 2>1");
  CHECK(clean_text("<3>") == "<3>");
  CHECK(clean_text("<p") == "<p");  // unterminated
  CHECK(clean_text("&#;") == "&#;");
  CHECK(clean_text("&#xyzq") == "&#xyzq");
  CHECK(clean_text("R&D") == "R&D");
  CHECK(clean_text("&#1114112;") == "&#1114112;");  // beyond U+10FFFF
  CHECK(clean_text("&#xD800;") == "&#xD800;");      // surrogate
  CHECK(clean_text("&#0;") == "&#0;");
}

TEST_CASE("clean_text reaches a fixpoint when decoding exposes structure") {
  // &#60; -> '<', &#62; -> '>', so the decoded tag must also be stripped
  CHECK(clean_text("&#60;p&#62;bold&#60;/p&#62;") == "bold");
  CHECK(clean_text("&#38;#39;") == "'");  // '&' + "#39;" assembles a reference
}

namespace {

// Seeded fuzz corpus biased toward tag/entity/whitespace fragments.
std::string fuzz_string(latefuse::SplitMix64& rng) {
  static const char* pieces[] = {"<p>",  "</p>", "<",    ">",    "&#",   "&#39;", "&#x27;",
                                 ";",    "&",    "#",    " ",    "  ",   "\t",    "\n",
                                 "a",    "é",    "09",   "x",    "12",   "div",   "/",
                                 "L",    "&#60;", "&#38;", "text", "0", "&#xD800;"};
  std::string s;
  std::size_t n = rng.uniform_below(20);
  for (std::size_t i = 0; i < n; ++i)
    s += pieces[rng.uniform_below(std::size(pieces))];
  return s;
}

}  // namespace

TEST_CASE("clean_text is idempotent on a fuzz corpus") {
  latefuse::SplitMix64 rng(0xC1EA);
  for (int i = 0; i < 1000; ++i) {
    std::string s = fuzz_string(rng);
    std::string once = clean_text(s);
    CHECK(clean_text(once) == once);
  }
}
