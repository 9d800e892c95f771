// SPDX-License-Identifier: Apache-2.0
#include "opseqids/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <string_view>
#include <sstream>
#include <stdexcept>

namespace opseqids {

namespace fs = std::filesystem;

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sequences) {
  std::set<std::string> distinct;
  for (const auto& seq : sequences)
    for (const auto& m : seq) distinct.insert(m);
  if (distinct.empty()) throw std::runtime_error("empty corpus");
  Vocabulary v;
  int idx = 1;
  for (const auto& m : distinct) {
    v.entries_.emplace(m, idx++);
    v.by_index_.push_back(m);
  }
  return v;
}

int Vocabulary::index_of(const std::string& mnemonic) const {
  auto it = entries_.find(mnemonic);
  return it == entries_.end() ? 0 : it->second;
}

const std::string& Vocabulary::mnemonic_of(int index) const {
  if (index < 1 || index > size())
    throw std::out_of_range("vocabulary index " + std::to_string(index));
  return by_index_[static_cast<std::size_t>(index - 1)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& mnemonics,
                                    std::size_t* unk_count) const {
  std::vector<int> codes;
  codes.reserve(mnemonics.size());
  for (const auto& m : mnemonics) {
    int idx = index_of(m);
    if (idx == 0) {
      idx = unk_index();
      if (unk_count) ++*unk_count;
    }
    codes.push_back(idx);
  }
  return codes;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& codes) const {
  std::vector<std::string> out;
  out.reserve(codes.size());
  for (int c : codes) out.push_back(mnemonic_of(c));
  return out;
}

void Vocabulary::save(const fs::path& path) const {
  std::ostringstream os;
  os << "#pad=0 unk=" << unk_index() << "\n";
  for (int i = 1; i <= size(); ++i) os << by_index_[i - 1] << "\t" << i << "\n";
  atomic_write_text(path, os.str());
}

Vocabulary Vocabulary::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("malformed vocabulary line " + std::to_string(lineno));
    std::string mnemonic = line.substr(0, tab);
    int idx = std::stoi(line.substr(tab + 1));
    if (idx != static_cast<int>(v.by_index_.size()) + 1)
      throw std::runtime_error("non-contiguous vocabulary index at line " +
                               std::to_string(lineno));
    v.entries_.emplace(mnemonic, idx);
    v.by_index_.push_back(mnemonic);
  }
  return v;
}

void CorpusManifest::save(const fs::path& path) const {
  std::ostringstream os;
  for (const auto& r : records)
    os << r.file_id << "\t" << r.path << "\t" << r.label << "\n";
  atomic_write_text(path, os.str());
}

CorpusManifest CorpusManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  CorpusManifest m;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw std::runtime_error("malformed manifest line " + std::to_string(lineno));
    ManifestRecord r;
    r.file_id = line.substr(0, t1);
    r.path = line.substr(t1 + 1, t2 - t1 - 1);
    r.label = std::stoi(line.substr(t2 + 1));
    if (r.label != 0 && r.label != 1)
      throw std::runtime_error("manifest line " + std::to_string(lineno) +
                               ": label must be 0 or 1, got " + std::to_string(r.label));
    if (!seen.insert(r.file_id).second)
      throw std::runtime_error("manifest line " + std::to_string(lineno) +
                               ": duplicate file_id " + r.file_id);
    m.records.push_back(std::move(r));
  }
  return m;
}

namespace {

bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

// Instruction lines look like "  401000:\t55 89 e5 \tpush   %ebp".
// Returns the instruction field (possibly empty for byte-only continuation
// lines) or nullopt if the line is not in that layout at all.
std::optional<std::string_view> instruction_field(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  std::size_t addr_begin = i;
  while (i < line.size() && is_hex(line[i])) ++i;
  if (i == addr_begin || i >= line.size() || line[i] != ':') return std::nullopt;
  ++i;
  // hex byte columns: pairs separated by whitespace
  std::size_t bytes = 0;
  while (true) {
    std::size_t ws = i;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (ws == i && bytes > 0) break;  // end of a byte run without separator
    std::size_t b = i;
    while (i < line.size() && is_hex(line[i])) ++i;
    if (i - b != 2) {
      i = b;  // not a byte pair; instruction field starts here
      break;
    }
    ++bytes;
  }
  if (bytes == 0) return std::nullopt;
  return trim(line.substr(i));
}

}  // namespace

std::vector<std::string> parse_disassembly(const std::string& text, ParseStats* stats) {
  std::vector<std::string> mnemonics;
  ParseStats local;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string_view t = trim(line);
    if (t.empty() || t == "..." || t.starts_with("Disassembly of section") ||
        t.ends_with(":") ||                    // symbol labels "0040100 <main>:"
        t.find("file format") != std::string::npos) {
      ++local.skipped_lines;
      continue;
    }
    auto field = instruction_field(line);
    if (!field) {
      ++local.unparsed_lines;
      continue;
    }
    std::string_view instr = *field;
    if (instr.empty() || instr == "..." || instr.starts_with("(bad)")) {
      ++local.skipped_lines;
      continue;
    }
    std::size_t end = instr.find_first_of(" \t");
    std::string mnemonic(instr.substr(0, end));
    std::transform(mnemonic.begin(), mnemonic.end(), mnemonic.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    mnemonics.push_back(std::move(mnemonic));
    ++local.instruction_lines;
  }
  if (stats) *stats = local;
  return mnemonics;
}

std::vector<std::string> load_opcode_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open op-code file: " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void save_opcode_file(const fs::path& path, const std::vector<std::string>& mnemonics) {
  std::ostringstream os;
  for (const auto& m : mnemonics) os << m << "\n";
  atomic_write_text(path, os.str());
}

std::string synthetic_mnemonic(int index, int vocab_size) {
  int width = 1;
  for (int v = vocab_size; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(index);
  return "op" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
}

namespace {

bool contains_motif(const std::vector<int>& codes, const std::vector<int>& motif) {
  if (motif.empty() || codes.size() < motif.size()) return false;
  return std::search(codes.begin(), codes.end(), motif.begin(), motif.end()) !=
         codes.end();
}

std::vector<int> motif_free_sequence(int length, int vocab_size,
                                     const std::vector<int>& motif, Rng& rng) {
  std::vector<int> codes(static_cast<std::size_t>(length));
  while (true) {
    for (auto& c : codes) c = rng.uniform_int(1, vocab_size);
    if (!contains_motif(codes, motif)) return codes;
  }
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (spec.min_length < 1 || spec.max_length < spec.min_length)
    throw std::invalid_argument("invalid length range");
  if (spec.min_length < static_cast<int>(spec.motif.size()))
    throw std::invalid_argument("min_length shorter than motif");
  if (spec.motif_rate <= 0.0 || spec.motif_rate > 1.0)
    throw std::invalid_argument("motif_rate must be in (0,1]");
  for (int m : spec.motif)
    if (m < 1 || m > spec.vocab_size)
      throw std::invalid_argument("motif index outside vocabulary");

  SyntheticCorpus corpus;
  corpus.manifest.provenance = "synthetic";
  {
    std::vector<std::vector<std::string>> all_mnemonics(1);
    for (int i = 1; i <= spec.vocab_size; ++i)
      all_mnemonics[0].push_back(synthetic_mnemonic(i, spec.vocab_size));
    corpus.vocab = Vocabulary::build(all_mnemonics);
  }

  Rng rng(spec.seed);
  auto add = [&](int label, int count, const char* prefix) {
    for (int i = 0; i < count; ++i) {
      int length = rng.uniform_int(spec.min_length, spec.max_length);
      std::vector<int> codes =
          motif_free_sequence(length, spec.vocab_size, spec.motif, rng);
      if (label == 1 && rng.bernoulli(spec.motif_rate) && !spec.motif.empty()) {
        int pos = rng.uniform_int(0, length - static_cast<int>(spec.motif.size()));
        std::copy(spec.motif.begin(), spec.motif.end(),
                  codes.begin() + pos);
      }
      OpcodeSequence seq;
      seq.file_id = std::string(prefix) + std::to_string(i);
      seq.label = label;
      seq.codes = std::move(codes);
      corpus.manifest.records.push_back(
          {seq.file_id, "ops/" + seq.file_id + ".txt", label});
      corpus.sequences.push_back(std::move(seq));
    }
  };
  add(0, spec.n_benign, "benign_");
  add(1, spec.n_malicious, "malicious_");
  return corpus;
}

void write_corpus_dir(const SyntheticCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "ops");
  corpus.vocab.save(dir / "vocab.tsv");
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    const auto& seq = corpus.sequences[i];
    save_opcode_file(dir / corpus.manifest.records[i].path,
                     corpus.vocab.decode(seq.codes));
  }
  corpus.manifest.save(dir / "manifest.tsv");
}

std::vector<OpcodeSequence> load_corpus_sequences(const fs::path& manifest_path,
                                                  const Vocabulary& vocab,
                                                  std::size_t* unk_total) {
  CorpusManifest manifest = CorpusManifest::load(manifest_path);
  fs::path base = manifest_path.parent_path();
  std::vector<OpcodeSequence> out;
  out.reserve(manifest.records.size());
  std::size_t unks = 0;
  for (const auto& r : manifest.records) {
    OpcodeSequence seq;
    seq.file_id = r.file_id;
    seq.label = r.label;
    seq.codes = vocab.encode(load_opcode_file(base / r.path), &unks);
    out.push_back(std::move(seq));
  }
  if (unk_total) *unk_total = unks;
  return out;
}

void atomic_write_text(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

}  // namespace opseqids
