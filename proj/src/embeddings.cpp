#include "affect/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "affect/error.hpp"

namespace affect {

namespace {

double parse_double(const std::string& field, long line_no) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &consumed);
  } catch (const std::exception&) {
    throw ParseError("non-numeric field '" + field + "'", line_no);
  }
  if (consumed != field.size()) throw ParseError("non-numeric field '" + field + "'", line_no);
  return v;
}

long long parse_count(const std::string& field, long line_no) {
  std::size_t consumed = 0;
  long long v = 0;
  try {
    v = std::stoll(field, &consumed);
  } catch (const std::exception&) {
    throw ParseError("non-numeric field '" + field + "'", line_no);
  }
  if (consumed != field.size() || v < 0) {
    throw ParseError("bad count '" + field + "'", line_no);
  }
  return v;
}

}  // namespace

int EmbeddingTable::find(const std::string& token) const {
  if (index_.empty() && !words.empty()) {
    index_.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) index_.emplace(words[i], static_cast<int>(i));
  }
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

EmbeddingTable load_word2vec_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path);

  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty embedding file " + path, 1);
  ++line_no;
  std::istringstream header(line);
  long long count = 0, dim = 0;
  if (!(header >> count >> dim) || count <= 0 || dim <= 0) {
    throw ParseError("bad header '" + line + "'", line_no);
  }

  EmbeddingTable table;
  table.words.reserve(static_cast<std::size_t>(count));
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(count * dim));

  std::unordered_map<std::string, long> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    if (token.empty()) throw ParseError("missing token", line_no);
    if (static_cast<long long>(table.words.size()) == count) {
      throw ParseError("more rows than the header's " + std::to_string(count), line_no);
    }
    if (!seen.emplace(token, line_no).second) {
      throw ParseError("duplicate token '" + token + "'", line_no);
    }
    std::string field;
    long long got = 0;
    while (row >> field) {
      data.push_back(parse_double(field, line_no));
      ++got;
    }
    if (got != dim) {
      throw ParseError("expected " + std::to_string(dim) + " values for '" + token + "', got " +
                           std::to_string(got),
                       line_no);
    }
    table.words.push_back(std::move(token));
  }
  if (static_cast<long long>(table.words.size()) != count) {
    throw ParseError("header promised " + std::to_string(count) + " rows, file has " +
                         std::to_string(table.words.size()),
                     line_no + 1);
  }

  table.matrix = Tensor::from_data({static_cast<int>(count), static_cast<int>(dim)}, std::move(data));
  // rank-implied frequencies: file order is assumed frequency-sorted
  table.frequencies.resize(table.words.size());
  for (std::size_t i = 0; i < table.words.size(); ++i) {
    table.frequencies[i] = static_cast<long long>(table.words.size() - i);
  }
  return table;
}

void save_word2vec_text(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding file " + path);
  out << table.size() << ' ' << table.dim() << '\n';
  const auto data = table.matrix.data();
  char buf[32];
  for (int i = 0; i < table.size(); ++i) {
    out << table.words[static_cast<std::size_t>(i)];
    for (int j = 0; j < table.dim(); ++j) {
      std::snprintf(buf, sizeof buf, " %.17g", data[static_cast<std::size_t>(i) * table.dim() + j]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing embedding file " + path);
}

void load_frequencies(EmbeddingTable& table, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open frequency file " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token, count;
    if (!(row >> token >> count)) throw ParseError("expected '<token> <count>'", line_no);
    const long long c = parse_count(count, line_no);
    const int idx = table.find(token);
    if (idx >= 0) table.frequencies[static_cast<std::size_t>(idx)] = c;
  }
}

void save_frequencies(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write frequency file " + path);
  for (int i = 0; i < table.size(); ++i) {
    out << table.words[static_cast<std::size_t>(i)] << ' '
        << table.frequencies[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw IoError("failed writing frequency file " + path);
}

EmbeddingTable normalize(const EmbeddingTable& table) {
  EmbeddingTable out = table;
  const int n = table.size(), d = table.dim();
  std::vector<double> data(table.matrix.data().begin(), table.matrix.data().end());
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = data[static_cast<std::size_t>(i) * d + j];
      sq += v * v;
    }
    if (sq <= 0.0) throw DataError("zero-norm embedding for token '" + table.words[i] + "'");
    const double inv = 1.0 / std::sqrt(sq);
    for (int j = 0; j < d; ++j) data[static_cast<std::size_t>(i) * d + j] *= inv;
  }
  out.matrix = Tensor::from_raw({n, d}, std::move(data));
  return out;
}

Dictionary build_frequency_dictionary(const EmbeddingTable& speech, const EmbeddingTable& text,
                                      int k) {
  if (k < 1) throw ArgumentError("dictionary size must be at least 1");

  struct Shared {
    long long freq;
    const std::string* token;
    int speech_idx, text_idx;
  };
  std::vector<Shared> shared;
  for (int i = 0; i < speech.size(); ++i) {
    const int j = text.find(speech.words[static_cast<std::size_t>(i)]);
    if (j < 0) continue;
    shared.push_back({speech.frequencies[static_cast<std::size_t>(i)] +
                          text.frequencies[static_cast<std::size_t>(j)],
                      &speech.words[static_cast<std::size_t>(i)], i, j});
  }
  std::sort(shared.begin(), shared.end(), [](const Shared& a, const Shared& b) {
    if (a.freq != b.freq) return a.freq > b.freq;
    return *a.token < *b.token;
  });

  Dictionary dict;
  const int take = std::min<int>(k, static_cast<int>(shared.size()));
  dict.pairs.reserve(static_cast<std::size_t>(take));
  for (int i = 0; i < take; ++i) dict.pairs.emplace_back(shared[i].speech_idx, shared[i].text_idx);
  dict.shortfall = k - take;
  if (dict.shortfall > 0) {
    std::fprintf(stderr, "warning: only %d of %d requested dictionary pairs available\n", take, k);
  }
  return dict;
}

Tensor gather(const EmbeddingTable& table, const Dictionary& dict, Side side) {
  if (dict.empty()) throw ArgumentError("gather: empty dictionary");
  const int d = table.dim();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(dict.size()) * d);
  const auto data = table.matrix.data();
  for (const auto& [si, ti] : dict.pairs) {
    const int idx = side == Side::speech ? si : ti;
    if (idx < 0 || idx >= table.size()) {
      throw ArgumentError("gather: dictionary index " + std::to_string(idx) +
                          " outside table of " + std::to_string(table.size()));
    }
    const auto row = data.subspan(static_cast<std::size_t>(idx) * d, static_cast<std::size_t>(d));
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::from_raw({dict.size(), d}, std::move(out));
}

}  // namespace affect
