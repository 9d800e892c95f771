// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "opseqids/rng.hpp"

namespace opseqids {

// Mnemonic -> index map. Index 0 is PAD and never maps to a mnemonic;
// real mnemonics occupy 1..size contiguously. Out-of-vocabulary tokens
// encode to unk_index() = size + 1.
class Vocabulary {
public:
  Vocabulary() = default;

  // Distinct mnemonics across all sequences, sorted lexicographically,
  // indices assigned 1..n in that order. Throws on an empty corpus.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sequences);

  int size() const { return static_cast<int>(by_index_.size()); }
  int unk_index() const { return size() + 1; }

  // 0 if unknown (callers map to unk_index for encoding).
  int index_of(const std::string& mnemonic) const;
  const std::string& mnemonic_of(int index) const;  // valid for 1..size

  std::vector<int> encode(const std::vector<std::string>& mnemonics,
                          std::size_t* unk_count = nullptr) const;
  std::vector<std::string> decode(const std::vector<int>& codes) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary&) const = default;

private:
  std::map<std::string, int> entries_;
  std::vector<std::string> by_index_;  // by_index_[i-1] = mnemonic of index i
};

struct OpcodeSequence {
  std::string file_id;
  int label = 0;  // 0 benign, 1 malicious
  std::vector<int> codes;
};

struct ManifestRecord {
  std::string file_id;
  std::string path;  // relative to the manifest's directory
  int label = 0;
};

struct CorpusManifest {
  std::vector<ManifestRecord> records;
  std::string provenance = "parsed";  // parsed | synthetic

  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);
};

struct ParseStats {
  std::size_t instruction_lines = 0;
  std::size_t skipped_lines = 0;    // recognized non-instruction lines
  std::size_t unparsed_lines = 0;   // lines matching no known layout
};

// Extract instruction mnemonics from GNU objdump -d (AT&T syntax) text.
// Total: never throws on arbitrary input; anything unrecognized is counted.
std::vector<std::string> parse_disassembly(const std::string& text,
                                           ParseStats* stats = nullptr);

// One mnemonic per line.
std::vector<std::string> load_opcode_file(const std::filesystem::path& path);
void save_opcode_file(const std::filesystem::path& path,
                      const std::vector<std::string>& mnemonics);

struct SyntheticSpec {
  int n_benign = 0;
  int n_malicious = 0;
  int vocab_size = 0;
  int min_length = 0;
  int max_length = 0;
  std::vector<int> motif;    // vocabulary indices, planted in malicious files
  double motif_rate = 1.0;   // per-malicious-sequence plant probability
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  CorpusManifest manifest;
  std::vector<OpcodeSequence> sequences;  // aligned with manifest.records
  Vocabulary vocab;
};

// Benign sequences are uniform random and guaranteed motif-free; each
// malicious sequence carries the motif with probability motif_rate (the
// rest stay motif-free "hard" positives). Deterministic under seed.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// Mnemonic naming used when a synthetic corpus is written to disk:
// zero-padded so lexicographic vocabulary order matches index order.
std::string synthetic_mnemonic(int index, int vocab_size);

// Write a synthetic corpus as a regular corpus directory
// (manifest.tsv + vocab.tsv + ops/*.txt).
void write_corpus_dir(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

// Load a corpus directory into labeled encoded sequences.
std::vector<OpcodeSequence> load_corpus_sequences(const std::filesystem::path& manifest_path,
                                                  const Vocabulary& vocab,
                                                  std::size_t* unk_total = nullptr);

// Atomic text write: temp file in the same directory, then rename.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace opseqids
