#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

// A vocabulary with one embedding row per token plus frequency counts.
// Immutable in spirit: functions return transformed copies.
struct EmbeddingTable {
  std::vector<std::string> words;
  std::vector<long long> frequencies;  // nonnegative; descending unless a sidecar says otherwise
  Tensor matrix;                       // |words| x dim, row i belongs to words[i]

  int size() const { return static_cast<int>(words.size()); }
  int dim() const { return matrix.ndim() == 2 ? matrix.dim(1) : 0; }

  // Index of a token, or -1. The lookup map is built on first use.
  int find(const std::string& token) const;

 private:
  mutable std::unordered_map<std::string, int> index_;
};

// Paired word indices (speech side, text side) used for refinement.
struct Dictionary {
  std::vector<std::pair<int, int>> pairs;
  // How many requested pairs could not be formed (shared vocabulary smaller
  // than the requested k); 0 when the request was met.
  int shortfall = 0;

  int size() const { return static_cast<int>(pairs.size()); }
  bool empty() const { return pairs.empty(); }
};

enum class Side { speech, text };

// Text format: header "<count> <dim>", then "<token> v1 ... v<dim>" per
// line. Frequencies default to rank order (earlier row = more frequent)
// as word2vec tools emit; load_frequencies overrides from a sidecar.
EmbeddingTable load_word2vec_text(const std::string& path);
void save_word2vec_text(const EmbeddingTable& table, const std::string& path);

// Sidecar format: "<token> <count>" per line. Tokens absent from the table
// are ignored; tokens absent from the sidecar keep their current count.
void load_frequencies(EmbeddingTable& table, const std::string& path);
void save_frequencies(const EmbeddingTable& table, const std::string& path);

// Every row scaled to unit L2 norm. A zero row is a data error naming the
// offending token.
EmbeddingTable normalize(const EmbeddingTable& table);

// The k most frequent tokens present in both vocabularies, paired by
// identical token string. Frequency of a shared token is the sum of its two
// counts; ties break lexicographically. Fewer than k shared tokens yields
// all of them with `shortfall` set.
Dictionary build_frequency_dictionary(const EmbeddingTable& speech, const EmbeddingTable& text,
                                      int k);

// Rows of `table` selected by the dictionary's speech or text indices, in
// dictionary order: a |dict| x dim matrix.
Tensor gather(const EmbeddingTable& table, const Dictionary& dict, Side side);

}  // namespace affect
