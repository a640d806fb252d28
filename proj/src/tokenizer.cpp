// minirbt/tokenizer.cpp

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

#include "minirbt/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "minirbt/rng.hpp"

namespace minirbt {

namespace {

bool IsAsciiAlnum(std::uint32_t c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z');
}

bool IsSpace(std::uint32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == 0x3000;
}

bool IsContinuation(const std::string& tok) {
  return tok.size() > 2 && tok[0] == '#' && tok[1] == '#';
}

}  // namespace

std::vector<std::uint32_t> Utf8Decode(const std::string& s) {
  std::vector<std::uint32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char b = s[i];
    std::uint32_t cp = 0;
    std::size_t extra = 0;
    if (b < 0x80) {
      cp = b;
    } else if ((b & 0xE0) == 0xC0) {
      cp = b & 0x1F;
      extra = 1;
    } else if ((b & 0xF0) == 0xE0) {
      cp = b & 0x0F;
      extra = 2;
    } else if ((b & 0xF8) == 0xF0) {
      cp = b & 0x07;
      extra = 3;
    } else {
      cp = 0xFFFD;  // stray continuation byte
    }
    if (extra > 0 && i + extra >= s.size()) {  // truncated sequence
      out.push_back(0xFFFD);
      break;
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      unsigned char nb = s[i + k];
      if ((nb & 0xC0) != 0x80) {
        cp = 0xFFFD;
        extra = k - 1;
        break;
      }
      cp = (cp << 6) | (nb & 0x3F);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string Utf8Encode(const std::vector<std::uint32_t>& cps) {
  std::string out;
  for (std::uint32_t cp : cps) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty())
      throw std::invalid_argument("Vocab: empty token at line " +
                                  std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<std::int64_t>(i)).second)
      throw std::invalid_argument("Vocab: duplicate token '" + tokens_[i] +
                                  "'");
  }
  auto require = [&](const char* tok) -> std::int64_t {
    auto it = index_.find(tok);
    if (it == index_.end())
      throw std::invalid_argument(std::string("Vocab: missing reserved token ") +
                                  tok);
    return it->second;
  };
  if (require("[PAD]") != 0)
    throw std::invalid_argument("Vocab: [PAD] must have id 0");
  unk_ = require("[UNK]");
  cls_ = require("[CLS]");
  sep_ = require("[SEP]");
  mask_ = require("[MASK]");
}

Vocab Vocab::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Vocab: cannot open " + path);
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    toks.push_back(line);
  }
  return Vocab(std::move(toks));
}

void Vocab::Save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Vocab: cannot write " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

std::int64_t Vocab::id(const std::string& tok) const {
  auto it = index_.find(tok);
  return it == index_.end() ? unk_ : it->second;
}

const std::string& Vocab::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("Vocab: id " + std::to_string(id) +
                            " out of range");
  return tokens_[id];
}

bool Vocab::is_special(std::int64_t id) const {
  return id == 0 || id == unk_ || id == cls_ || id == sep_ || id == mask_;
}

// ---------------------------------------------------------------------------
// Lexicon

Lexicon::Lexicon(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    if (w.empty()) throw std::invalid_argument("Lexicon: empty entry");
    auto cps = Utf8Decode(w);
    std::u32string key(cps.begin(), cps.end());
    max_len_ = std::max(max_len_, key.size());
    words_.insert(std::move(key));
  }
}

Lexicon Lexicon::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Lexicon: cannot open " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    words.push_back(line);
  }
  return Lexicon(words);
}

// ---------------------------------------------------------------------------
// Tokenize

namespace {

// greedy longest-match WordPiece over one ASCII alphanumeric run; the whole
// run degrades to [UNK] if any step finds no vocabulary piece
void WordPieceRun(const std::string& run, const Vocab& vocab,
                  std::vector<std::string>* out) {
  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (pos < run.size()) {
    std::size_t best = 0;
    std::string best_tok;
    for (std::size_t len = run.size() - pos; len >= 1; --len) {
      std::string cand = run.substr(pos, len);
      if (pos > 0) cand = "##" + cand;
      if (vocab.has(cand)) {
        best = len;
        best_tok = std::move(cand);
        break;
      }
    }
    if (best == 0) {
      out->push_back("[UNK]");
      return;
    }
    pieces.push_back(std::move(best_tok));
    pos += best;
  }
  for (auto& p : pieces) out->push_back(std::move(p));
}

}  // namespace

std::vector<std::string> Tokenize(const std::string& text, const Vocab& vocab) {
  auto cps = Utf8Decode(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < cps.size()) {
    std::uint32_t c = cps[i];
    if (IsSpace(c)) {
      ++i;
      continue;
    }
    if (IsAsciiAlnum(c)) {
      std::string run;
      while (i < cps.size() && IsAsciiAlnum(cps[i])) {
        run += static_cast<char>(cps[i]);
        ++i;
      }
      WordPieceRun(run, vocab, &out);
      continue;
    }
    // CJK and everything else: one token per codepoint
    std::string tok = Utf8Encode({c});
    out.push_back(vocab.has(tok) ? tok : std::string("[UNK]"));
    ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation

std::vector<WordSpan> SegmentWords(const std::vector<std::string>& tokens,
                                   const Lexicon& lexicon) {
  std::vector<WordSpan> spans;
  std::size_t n = tokens.size();
  // single-codepoint non-ASCII tokens are segmentable characters
  std::vector<std::uint32_t> cp(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (IsContinuation(tokens[i]) || tokens[i] == "[UNK]") continue;
    auto d = Utf8Decode(tokens[i]);
    if (d.size() == 1 && d[0] >= 0x80) cp[i] = d[0];
  }
  std::size_t i = 0;
  while (i < n) {
    // a WordPiece run is always one span
    if (!IsContinuation(tokens[i])) {
      std::size_t j = i + 1;
      while (j < n && IsContinuation(tokens[j])) ++j;
      if (j > i + 1) {
        spans.push_back({i, j});
        i = j;
        continue;
      }
    } else {
      // stray continuation (should not happen after Tokenize): singleton
      spans.push_back({i, i + 1});
      ++i;
      continue;
    }
    if (cp[i] != 0 && lexicon.max_len() >= 2) {
      std::size_t limit = std::min(lexicon.max_len(), n - i);
      std::size_t matched = 0;
      std::u32string word;
      for (std::size_t k = 0; k < limit && cp[i + k] != 0; ++k)
        word.push_back(cp[i + k]);
      for (std::size_t len = word.size(); len >= 2; --len) {
        if (lexicon.contains(word.substr(0, len))) {
          matched = len;
          break;
        }
      }
      if (matched >= 2) {
        spans.push_back({i, i + matched});
        i += matched;
        continue;
      }
    }
    spans.push_back({i, i + 1});
    ++i;
  }
  return spans;
}

// ---------------------------------------------------------------------------
// Masking

namespace {

void CheckTiling(const std::vector<WordSpan>& spans, std::size_t n) {
  std::size_t pos = 0;
  for (const auto& s : spans) {
    if (s.start != pos || s.end <= s.start || s.end > n)
      throw std::invalid_argument("masking: spans do not tile the sequence");
    pos = s.end;
  }
  if (pos != n)
    throw std::invalid_argument("masking: spans do not cover the sequence");
}

MaskedSample MaskSpans(const std::vector<std::int64_t>& ids,
                       const std::vector<WordSpan>& spans, const Vocab& vocab,
                       double mask_rate, std::uint64_t rng_seed) {
  std::size_t n = ids.size();
  if (n == 0) throw std::invalid_argument("masking: zero maskable tokens");
  if (!(mask_rate > 0.0 && mask_rate < 1.0))
    throw std::invalid_argument("masking: mask_rate must be in (0,1)");
  std::size_t target = static_cast<std::size_t>(
      std::llround(mask_rate * static_cast<double>(n)));
  if (target == 0) target = 1;

  Rng rng(rng_seed);
  std::vector<std::size_t> order(spans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  MaskedSample out;
  out.input_ids = ids;
  out.labels.assign(n, kIgnoreLabel);
  out.attention_len = n;

  std::size_t selected = 0;
  std::vector<std::size_t> chosen;
  for (std::size_t oi : order) {
    if (selected >= target) break;
    std::size_t len = spans[oi].len();
    if (selected + len > target) continue;  // would overshoot, try smaller
    chosen.push_back(oi);
    selected += len;
  }
  if (chosen.empty()) chosen.push_back(order[0]);  // minimum-one rule

  // non-special id pool for the 10% random-replacement branch
  std::vector<std::int64_t> pool;
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(vocab.size()); ++v)
    if (!vocab.is_special(v)) pool.push_back(v);

  for (std::size_t oi : chosen) {
    const WordSpan& sp = spans[oi];
    double u = rng.next_double();
    for (std::size_t p = sp.start; p < sp.end; ++p) {
      out.labels[p] = ids[p];
      if (u < 0.8) {
        out.input_ids[p] = vocab.mask_id();
      } else if (u < 0.9) {
        out.input_ids[p] =
            pool.empty() ? vocab.mask_id()
                         : pool[rng.next_below(pool.size())];
      }
      // else: keep original token, label still recorded
    }
  }
  return out;
}

}  // namespace

MaskedSample GenerateWwmSample(const std::vector<std::string>& tokens,
                               const std::vector<WordSpan>& spans,
                               const Vocab& vocab, double mask_rate,
                               std::uint64_t rng_seed) {
  CheckTiling(spans, tokens.size());
  return MaskSpans(TokensToIds(tokens, vocab), spans, vocab, mask_rate,
                   rng_seed);
}

MaskedSample GenerateCharMaskSample(const std::vector<std::string>& tokens,
                                    const Vocab& vocab, double mask_rate,
                                    std::uint64_t rng_seed) {
  std::vector<WordSpan> spans;
  for (std::size_t i = 0; i < tokens.size(); ++i) spans.push_back({i, i + 1});
  return MaskSpans(TokensToIds(tokens, vocab), spans, vocab, mask_rate,
                   rng_seed);
}

std::vector<std::int64_t> TokensToIds(const std::vector<std::string>& tokens,
                                      const Vocab& vocab) {
  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

// ---------------------------------------------------------------------------
// Batching

Batch BuildBatch(const std::vector<MaskedSample>& samples, const Vocab& vocab,
                 std::size_t max_len) {
  if (samples.empty()) throw std::invalid_argument("build_batch: empty batch");
  if (max_len < 3)
    throw std::invalid_argument("build_batch: max_len must be at least 3");
  Batch b;
  b.batch = samples.size();
  b.max_len = max_len;
  b.input_ids.assign(b.batch * max_len, vocab.pad_id());
  b.labels.assign(b.batch * max_len, kIgnoreLabel);
  b.lengths.resize(b.batch);
  std::size_t content_cap = max_len - 2;
  for (std::size_t i = 0; i < b.batch; ++i) {
    const MaskedSample& s = samples[i];
    std::size_t content = std::min(s.input_ids.size(), content_cap);
    std::int64_t* ids = b.input_ids.data() + i * max_len;
    std::int64_t* lab = b.labels.data() + i * max_len;
    ids[0] = vocab.cls_id();
    for (std::size_t j = 0; j < content; ++j) {
      ids[1 + j] = s.input_ids[j];
      lab[1 + j] = s.labels[j];
    }
    ids[1 + content] = vocab.sep_id();
    b.lengths[i] = content + 2;
  }
  return b;
}

std::vector<std::string> LoadCorpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace minirbt
