// Copyright 2026 The convasr Authors.
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

#include "convasr/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace convasr {

using nlohmann::json;

void Conversation::Validate() const {
  for (size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    if (u.turn != static_cast<int>(i) + 1) {
      throw InputError("Conversation " + conv_id +
                       ": turns must be consecutive from 1");
    }
    if (u.speaker != 'A' && u.speaker != 'B') {
      throw InputError("Conversation " + conv_id + ": speaker must be A or B");
    }
    if (u.text.empty()) {
      throw InputError("Conversation " + conv_id + ": empty utterance text");
    }
    if (i > 0 && u.speaker == utterances[i - 1].speaker) {
      throw InputError("Conversation " + conv_id +
                       ": speakers must alternate");
    }
    if (u.conv_id != conv_id) {
      throw InputError("Conversation " + conv_id + ": conv_id mismatch");
    }
  }
}

Vocabulary Vocabulary::FromChars(const std::string& chars) {
  Vocabulary v;
  for (char c : chars) {
    if (v.index_.count(c)) continue;
    v.index_[c] = kFirstCharId + static_cast<int>(v.chars_.size());
    v.chars_.push_back(c);
  }
  return v;
}

Vocabulary Vocabulary::FromCorpus(const std::vector<Conversation>& corpus) {
  std::string seen;
  std::unordered_map<char, bool> mark;
  for (const auto& conv : corpus) {
    for (const auto& utt : conv.utterances) {
      for (char c : utt.text) {
        if (!mark[c]) {
          mark[c] = true;
          seen.push_back(c);
        }
      }
    }
  }
  std::sort(seen.begin(), seen.end());
  return FromChars(seen);
}

int Vocabulary::IdOf(char c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnkId : it->second;
}

char Vocabulary::CharOf(int id) const {
  if (!IsCharId(id)) {
    throw RangeError("Vocabulary::CharOf: id " + std::to_string(id) +
                     " is not a character id");
  }
  return chars_[id - kFirstCharId];
}

std::vector<int> Vocabulary::Encode(const std::string& text) const {
  std::vector<int> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(kSosId);
  for (char c : text) ids.push_back(IdOf(c));
  ids.push_back(kEosId);
  return ids;
}

std::string Vocabulary::Decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (IsCharId(id)) out.push_back(CharOf(id));
  }
  return out;
}

ContextPair BuildContexts(const Conversation& conv, int k, int role_len,
                          int topic_len, const Vocabulary& vocab) {
  int n = static_cast<int>(conv.utterances.size());
  if (k < 1 || k > n) {
    throw RangeError("BuildContexts: turn " + std::to_string(k) +
                     " out of range [1, " + std::to_string(n) + "]");
  }
  char speaker = conv.utterances[k - 1].speaker;
  // Gather candidate turn indices (1-based), newest last.
  std::vector<int> role_turns, dia_turns;
  for (int t = 1; t < k; ++t) {
    dia_turns.push_back(t);
    if (conv.utterances[t - 1].speaker == speaker) role_turns.push_back(t);
  }
  auto truncate = [](std::vector<int>& turns, int limit) {
    if (limit == kNoContextLimit) return;
    if (limit <= 0) {
      turns.clear();
    } else if (static_cast<int>(turns.size()) > limit) {
      turns.erase(turns.begin(), turns.end() - limit);
    }
  };
  truncate(role_turns, role_len);
  truncate(dia_turns, topic_len);
  ContextPair out;
  auto append = [&](std::vector<int>& dst, const std::vector<int>& turns) {
    for (int t : turns) {
      std::vector<int> ids = vocab.Encode(conv.utterances[t - 1].text);
      dst.insert(dst.end(), ids.begin(), ids.end());
    }
  };
  append(out.role_tokens, role_turns);
  append(out.dia_tokens, dia_turns);
  return out;
}

// ---- Synthetic corpus ----------------------------------------------------

namespace {

// Printable, collision-free character pool for the synthetic universe.
const char kCharPool[] =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

}  // namespace

void CorpusConfig::Validate() const {
  if (n_conversations < 0) throw ConfigError("n_conversations must be >= 0");
  if (turns_per_conv < 1) throw ConfigError("turns_per_conv must be >= 1");
  if (n_topics < 1) throw ConfigError("n_topics must be >= 1");
  if (role_vocab_size < 1 || topic_vocab_size < 1 || shared_vocab_size < 1) {
    throw ConfigError("vocabulary sizes must be >= 1");
  }
  if (utt_len_min < 1 || utt_len_max < utt_len_min) {
    throw ConfigError("utterance length range invalid");
  }
  if (p_shared < 0 || p_role < 0 || p_shared + p_role > 1.0) {
    throw ConfigError("character source probabilities invalid");
  }
  if (homophone_pairs < 0 || homophone_pairs > role_vocab_size ||
      homophone_pairs > topic_vocab_size) {
    throw ConfigError("homophone_pairs exceeds vocabulary block size");
  }
  int total = shared_vocab_size + 2 * role_vocab_size +
              n_topics * topic_vocab_size;
  if (total > static_cast<int>(sizeof(kCharPool)) - 1) {
    throw ConfigError("character universe exceeds available pool (" +
                      std::to_string(total) + " chars requested)");
  }
}

std::string CorpusConfig::CharUniverse() const {
  Validate();
  int total =
      shared_vocab_size + 2 * role_vocab_size + n_topics * topic_vocab_size;
  return std::string(kCharPool, kCharPool + total);
}

std::string CorpusConfig::SharedChars() const {
  return CharUniverse().substr(0, shared_vocab_size);
}

std::string CorpusConfig::RoleChars(char speaker) const {
  int offset = shared_vocab_size + (speaker == 'A' ? 0 : role_vocab_size);
  return CharUniverse().substr(offset, role_vocab_size);
}

std::string CorpusConfig::TopicChars(int topic) const {
  if (topic < 0 || topic >= n_topics) {
    throw RangeError("TopicChars: topic out of range");
  }
  int offset = shared_vocab_size + 2 * role_vocab_size +
               topic * topic_vocab_size;
  return CharUniverse().substr(offset, topic_vocab_size);
}

std::vector<int> CorpusConfig::PrototypeMap(const Vocabulary& vocab) const {
  std::vector<int> map(vocab.size());
  for (size_t i = 0; i < map.size(); ++i) map[i] = static_cast<int>(i);
  // The first homophone_pairs characters of speaker B's block alias speaker
  // A's, and of every topic t > 0 alias topic 0's.
  for (int i = 0; i < homophone_pairs; ++i) {
    map[vocab.IdOf(RoleChars('B')[i])] = vocab.IdOf(RoleChars('A')[i]);
    for (int t = 1; t < n_topics; ++t) {
      map[vocab.IdOf(TopicChars(t)[i])] = vocab.IdOf(TopicChars(0)[i]);
    }
  }
  return map;
}

std::vector<Conversation> GenerateSyntheticCorpus(const CorpusConfig& config,
                                                  uint64_t seed) {
  config.Validate();
  std::string shared = config.SharedChars();
  std::vector<Conversation> corpus;
  corpus.reserve(config.n_conversations);
  for (int ci = 0; ci < config.n_conversations; ++ci) {
    Rng rng(SubSeed(seed, "conv", ci));
    Conversation conv;
    conv.conv_id = "conv" + std::to_string(ci);
    int topic = rng.UniformInt(config.n_topics);
    std::string topic_chars = config.TopicChars(topic);
    for (int t = 1; t <= config.turns_per_conv; ++t) {
      Utterance utt;
      utt.conv_id = conv.conv_id;
      utt.turn = t;
      utt.speaker = (t % 2 == 1) ? 'A' : 'B';
      std::string role_chars = config.RoleChars(utt.speaker);
      int len = config.utt_len_min +
                rng.UniformInt(config.utt_len_max - config.utt_len_min + 1);
      for (int i = 0; i < len; ++i) {
        double u = rng.Uniform();
        const std::string* pool;
        if (u < config.p_shared) {
          pool = &shared;
        } else if (u < config.p_shared + config.p_role) {
          pool = &role_chars;
        } else {
          pool = &topic_chars;
        }
        utt.text.push_back((*pool)[rng.UniformInt(
            static_cast<int>(pool->size()))]);
      }
      conv.utterances.push_back(std::move(utt));
    }
    conv.Validate();
    corpus.push_back(std::move(conv));
  }
  return corpus;
}

int TopicLabelOf(const Conversation& conv, const CorpusConfig& config) {
  std::vector<int> counts(config.n_topics, 0);
  for (int t = 0; t < config.n_topics; ++t) {
    std::string chars = config.TopicChars(t);
    for (const auto& utt : conv.utterances) {
      for (char c : utt.text) {
        if (chars.find(c) != std::string::npos) ++counts[t];
      }
    }
  }
  int best = -1, best_count = 0;
  for (int t = 0; t < config.n_topics; ++t) {
    if (counts[t] > best_count) {
      best = t;
      best_count = counts[t];
    }
  }
  return best;
}

double TopicVocabPurity(const Conversation& conv, const CorpusConfig& config) {
  int label = TopicLabelOf(conv, config);
  if (label < 0) return 1.0;
  int own = 0, total = 0;
  for (int t = 0; t < config.n_topics; ++t) {
    std::string chars = config.TopicChars(t);
    for (const auto& utt : conv.utterances) {
      for (char c : utt.text) {
        if (chars.find(c) != std::string::npos) {
          ++total;
          if (t == label) ++own;
        }
      }
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(own) / total;
}

// ---- Feature synthesis ----------------------------------------------------

void FeatureSequence::Validate() const {
  if (frames < 1 || dim < 1) {
    throw InputError("FeatureSequence: frames and dim must be >= 1");
  }
  if (data.size() != static_cast<size_t>(frames) * dim) {
    throw InputError("FeatureSequence: data size mismatch");
  }
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError("FeatureSequence: non-finite entry");
    }
  }
}

void FeatureConfig::Validate() const {
  if (frames_per_token < 1) throw ConfigError("frames_per_token must be >= 1");
  if (feat_dim < 1) throw ConfigError("feat_dim must be >= 1");
  if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
}

std::vector<double> PrototypeVector(const FeatureConfig& config,
                                    int proto_id) {
  Rng rng(SubSeed(config.prototype_seed, "proto", proto_id));
  std::vector<double> v(config.feat_dim);
  for (double& x : v) x = rng.Uniform(-1.0, 1.0);
  return v;
}

uint64_t UtteranceSeed(uint64_t base, const Utterance& utt) {
  return SubSeed(SubSeed(base, utt.conv_id), "turn", utt.turn);
}

FeatureSequence SynthesizeFeatures(const Utterance& utt,
                                   const Vocabulary& vocab,
                                   const FeatureConfig& config,
                                   uint64_t seed) {
  config.Validate();
  std::vector<int> tokens = vocab.Encode(utt.text);
  FeatureSequence feats;
  feats.dim = config.feat_dim;
  feats.frames = config.frames_per_token * static_cast<int>(tokens.size());
  feats.data.resize(static_cast<size_t>(feats.frames) * feats.dim);
  Rng rng(seed);
  int row = 0;
  for (int tok : tokens) {
    int proto = tok;
    if (!config.prototype_map.empty()) {
      if (tok >= static_cast<int>(config.prototype_map.size())) {
        throw ConfigError("prototype_map does not cover token id " +
                          std::to_string(tok));
      }
      proto = config.prototype_map[tok];
    }
    std::vector<double> base = PrototypeVector(config, proto);
    for (int r = 0; r < config.frames_per_token; ++r, ++row) {
      for (int f = 0; f < feats.dim; ++f) {
        double noise =
            config.noise_std > 0 ? config.noise_std * rng.Gaussian() : 0.0;
        feats.at(row, f) = base[f] + noise;
      }
    }
  }
  feats.Validate();
  return feats;
}

// ---- Files -----------------------------------------------------------------

void SaveCorpusJsonl(const std::vector<Conversation>& corpus,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& conv : corpus) {
    for (const auto& utt : conv.utterances) {
      json j;
      j["conv_id"] = utt.conv_id;
      j["turn"] = utt.turn;
      j["speaker"] = std::string(1, utt.speaker);
      j["text"] = utt.text;
      out << j.dump() << "\n";
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Conversation> LoadCorpusJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Conversation> corpus;
  std::unordered_map<std::string, size_t> by_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IoError("bad JSON line in " + path + ": " + e.what());
    }
    Utterance utt;
    utt.conv_id = j.at("conv_id").get<std::string>();
    utt.turn = j.at("turn").get<int>();
    std::string speaker = j.at("speaker").get<std::string>();
    if (speaker.size() != 1) throw InputError("speaker must be one character");
    utt.speaker = speaker[0];
    utt.text = j.at("text").get<std::string>();
    auto it = by_id.find(utt.conv_id);
    if (it == by_id.end()) {
      by_id[utt.conv_id] = corpus.size();
      corpus.push_back(Conversation{utt.conv_id, {}});
      it = by_id.find(utt.conv_id);
    }
    corpus[it->second].utterances.push_back(std::move(utt));
  }
  for (auto& conv : corpus) {
    std::sort(conv.utterances.begin(), conv.utterances.end(),
              [](const Utterance& a, const Utterance& b) {
                return a.turn < b.turn;
              });
    conv.Validate();
  }
  return corpus;
}

namespace {

void WriteU32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t ReadU32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("truncated feature cache");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void SaveFeatureCache(const FeatureSequence& feats, const std::string& path) {
  feats.Validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  WriteU32(out, static_cast<uint32_t>(feats.frames));
  WriteU32(out, static_cast<uint32_t>(feats.dim));
  for (double v : feats.data) {
    float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    WriteU32(out, bits);
  }
  if (!out) throw IoError("write failed: " + path);
}

FeatureSequence LoadFeatureCache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  FeatureSequence feats;
  feats.frames = static_cast<int>(ReadU32(in));
  feats.dim = static_cast<int>(ReadU32(in));
  feats.data.resize(static_cast<size_t>(feats.frames) * feats.dim);
  for (double& v : feats.data) {
    uint32_t bits = ReadU32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<double>(f);
  }
  feats.Validate();
  return feats;
}

}  // namespace convasr
