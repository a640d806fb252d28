// minirbt/tokenizer.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MINIRBT_TOKENIZER_HPP_
#define MINIRBT_TOKENIZER_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace minirbt {

constexpr std::int64_t kIgnoreLabel = -100;

/// Token string <-> id bijection with the five reserved tokens.
/// [PAD] is pinned to id 0; continuation pieces carry a "##" prefix.
class Vocab {
 public:
  explicit Vocab(std::vector<std::string> tokens);
  static Vocab FromFile(const std::string& path);
  void Save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  bool has(const std::string& tok) const { return index_.count(tok) != 0; }
  std::int64_t id(const std::string& tok) const;  // [UNK] id if absent
  const std::string& token(std::int64_t id) const;

  std::int64_t pad_id() const { return 0; }
  std::int64_t unk_id() const { return unk_; }
  std::int64_t cls_id() const { return cls_; }
  std::int64_t sep_id() const { return sep_; }
  std::int64_t mask_id() const { return mask_; }
  bool is_special(std::int64_t id) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> index_;
  std::int64_t unk_ = -1, cls_ = -1, sep_ = -1, mask_ = -1;
};

/// Word dictionary for forward-maximum-matching segmentation. Entries are
/// multi-character words stored as codepoint sequences.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(const std::vector<std::string>& words);
  static Lexicon FromFile(const std::string& path);  // '#' comments skipped

  bool contains(const std::u32string& w) const { return words_.count(w) != 0; }
  std::size_t max_len() const { return max_len_; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::u32string> words_;
  std::size_t max_len_ = 0;
};

/// Half-open token index range [start, end); spans tile a token sequence.
struct WordSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t len() const { return end - start; }
  bool operator==(const WordSpan&) const = default;
};

/// One MLM training example: ids after masking, original ids at selected
/// positions (kIgnoreLabel elsewhere), and the real-token count.
struct MaskedSample {
  std::vector<std::int64_t> input_ids;
  std::vector<std::int64_t> labels;
  std::size_t attention_len = 0;
};

/// Padded batch with [CLS]/[SEP] framing.
struct Batch {
  std::size_t batch = 0;
  std::size_t max_len = 0;
  std::vector<std::int64_t> input_ids;  // batch * max_len
  std::vector<std::int64_t> labels;     // batch * max_len
  std::vector<std::size_t> lengths;     // real tokens incl. [CLS]/[SEP]
};

std::vector<std::uint32_t> Utf8Decode(const std::string& s);
std::string Utf8Encode(const std::vector<std::uint32_t>& cps);

// Character split for non-ASCII codepoints, greedy longest-match WordPiece
// ("##" continuations) for ASCII alphanumeric runs, [UNK] for anything the
// vocab cannot cover.
std::vector<std::string> Tokenize(const std::string& text, const Vocab& vocab);

// Forward maximum matching over single-codepoint tokens; a WordPiece run
// (head plus its "##" continuations) is always one span; leftovers are
// singletons. Output tiles the input.
std::vector<WordSpan> SegmentWords(const std::vector<std::string>& tokens,
                                   const Lexicon& lexicon);

// Whole-word masking: spans are taken in random order while the selected
// token count is below round(mask_rate * n); a span that would overshoot
// the target is skipped; at least one span is always selected. One
// 80/10/10 mask/random/keep decision per selected span.
MaskedSample GenerateWwmSample(const std::vector<std::string>& tokens,
                               const std::vector<WordSpan>& spans,
                               const Vocab& vocab, double mask_rate,
                               std::uint64_t rng_seed);

// Baseline independent per-token masking (every token its own span).
MaskedSample GenerateCharMaskSample(const std::vector<std::string>& tokens,
                                    const Vocab& vocab, double mask_rate,
                                    std::uint64_t rng_seed);

// [CLS] ... [SEP] framing plus [PAD] to max_len; over-length samples keep
// their first max_len-2 content tokens.
Batch BuildBatch(const std::vector<MaskedSample>& samples, const Vocab& vocab,
                 std::size_t max_len);

std::vector<std::string> LoadCorpus(const std::string& path);

std::vector<std::int64_t> TokensToIds(const std::vector<std::string>& tokens,
                                      const Vocab& vocab);

}  // namespace minirbt

#endif  // MINIRBT_TOKENIZER_HPP_
