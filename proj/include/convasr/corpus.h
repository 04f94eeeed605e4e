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

#ifndef CONVASR_CORPUS_H_
#define CONVASR_CORPUS_H_

#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "convasr/common.h"

namespace convasr {

// Two-speaker conversation data model. Text is character-level; every
// character is one output unit, so a std::string doubles as a character
// sequence.

struct Utterance {
  std::string conv_id;
  int turn = 0;        // 1-based position in the conversation
  char speaker = 'A';  // 'A' or 'B'
  std::string text;

  std::string UttId() const { return conv_id + ":" + std::to_string(turn); }
};

struct Conversation {
  std::string conv_id;
  std::vector<Utterance> utterances;

  // Enforces consecutive turns from 1 and strict speaker alternation.
  void Validate() const;
};

// Token-id sequences for the role context (same-speaker history) and the
// dialog context (all history). Each constituent sentence is wrapped in
// sos/eos ids.
struct ContextPair {
  std::vector<int> role_tokens;
  std::vector<int> dia_tokens;
};

// Character vocabulary with reserved ids: pad=0, sos=1, eos=2, unk=3,
// characters from 4 upward.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kSosId = 1;
  static constexpr int kEosId = 2;
  static constexpr int kUnkId = 3;
  static constexpr int kFirstCharId = 4;

  Vocabulary() = default;
  static Vocabulary FromChars(const std::string& chars);
  static Vocabulary FromCorpus(const std::vector<Conversation>& corpus);

  int size() const { return kFirstCharId + static_cast<int>(chars_.size()); }
  const std::string& chars() const { return chars_; }
  bool Contains(char c) const { return index_.count(c) > 0; }
  int IdOf(char c) const;           // kUnkId when absent
  char CharOf(int id) const;        // only valid for character ids
  bool IsCharId(int id) const {
    return id >= kFirstCharId && id < size();
  }

  // Wraps text in sos/eos; unknown characters map to unk.
  std::vector<int> Encode(const std::string& text) const;
  // Inverse of Encode on in-vocabulary text; reserved ids are dropped.
  std::string Decode(const std::vector<int>& ids) const;

 private:
  std::string chars_;
  std::unordered_map<char, int> index_;
};

inline constexpr int kNoContextLimit = std::numeric_limits<int>::max();

// Contexts for decoding turn k (1-based): role context holds the most
// recent `role_len` earlier sentences by the same speaker, dialog context
// the most recent `topic_len` earlier sentences by anyone, both in
// chronological order. A length of 0 yields an empty context.
ContextPair BuildContexts(const Conversation& conv, int k, int role_len,
                          int topic_len, const Vocabulary& vocab);

// ---- Synthetic corpus ----------------------------------------------------

struct CorpusConfig {
  int n_conversations = 20;
  int turns_per_conv = 6;
  int n_topics = 2;
  int role_vocab_size = 4;   // per speaker
  int topic_vocab_size = 6;  // per topic
  int shared_vocab_size = 6;
  int utt_len_min = 5;
  int utt_len_max = 9;
  // Per-character source probabilities; topic takes the remainder.
  double p_shared = 0.25;
  double p_role = 0.25;
  // Number of leading characters per role/topic vocabulary that share an
  // acoustic prototype with their counterpart in the other role/topics.
  // These "homophones" are only separable through conversational context.
  int homophone_pairs = 0;

  void Validate() const;

  // Deterministic character universe: shared block, role A, role B, then
  // one block per topic.
  std::string CharUniverse() const;
  Vocabulary BuildVocabulary() const { return Vocabulary::FromChars(CharUniverse()); }

  // Character ranges within the universe.
  std::string SharedChars() const;
  std::string RoleChars(char speaker) const;
  std::string TopicChars(int topic) const;

  // token id -> prototype id; homophone characters collapse onto the
  // first role / first topic block.
  std::vector<int> PrototypeMap(const Vocabulary& vocab) const;
};

std::vector<Conversation> GenerateSyntheticCorpus(const CorpusConfig& config,
                                                  uint64_t seed);

// Majority topic of a conversation judged by topic-vocabulary membership.
// The generator draws topic characters only from the assigned topic, so
// this recovers the generation label. Returns -1 if no topic char occurs.
int TopicLabelOf(const Conversation& conv, const CorpusConfig& config);

// Fraction of topic-vocabulary characters that belong to the conversation's
// majority topic (1.0 when none occur).
double TopicVocabPurity(const Conversation& conv, const CorpusConfig& config);

// ---- Feature synthesis ----------------------------------------------------

struct FeatureSequence {
  int frames = 0;
  int dim = 0;
  std::vector<double> data;  // row-major frames x dim

  double& at(int t, int f) { return data[static_cast<size_t>(t) * dim + f]; }
  double at(int t, int f) const {
    return data[static_cast<size_t>(t) * dim + f];
  }
  void Validate() const;
};

struct FeatureConfig {
  int frames_per_token = 2;
  int feat_dim = 8;
  double noise_std = 0.1;
  // token id -> prototype id; empty means identity.
  std::vector<int> prototype_map;
  uint64_t prototype_seed = 0x9d2c5680;

  void Validate() const;
};

// Fixed per-prototype vector, uniform in [-1, 1] per dimension and fully
// determined by (prototype_seed, prototype id, feat_dim).
std::vector<double> PrototypeVector(const FeatureConfig& config, int proto_id);

// Toy "speech": every token (including sos/eos markers) contributes
// frames_per_token frames of its prototype plus Gaussian noise.
FeatureSequence SynthesizeFeatures(const Utterance& utt,
                                   const Vocabulary& vocab,
                                   const FeatureConfig& config, uint64_t seed);

// Per-utterance noise seed fanned out from a base seed.
uint64_t UtteranceSeed(uint64_t base, const Utterance& utt);

// ---- Files -----------------------------------------------------------------

// JSON Lines, one object per utterance: conv_id, turn, speaker, text.
void SaveCorpusJsonl(const std::vector<Conversation>& corpus,
                     const std::string& path);
std::vector<Conversation> LoadCorpusJsonl(const std::string& path);

// Binary feature cache: header of two little-endian uint32 (T, F) followed
// by T*F little-endian 32-bit floats, row-major.
void SaveFeatureCache(const FeatureSequence& feats, const std::string& path);
FeatureSequence LoadFeatureCache(const std::string& path);

}  // namespace convasr

#endif  // CONVASR_CORPUS_H_
