#include "svebm/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "svebm/errors.hpp"

namespace svebm {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  return is;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

[[noreturn]] void bad_line(const std::filesystem::path& path, int line, const std::string& msg) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// Splits an optional "label<TAB>" prefix off a line.
std::optional<int> take_label(std::string& line, const std::filesystem::path& path, int lineno) {
  const auto tab = line.find('\t');
  if (tab == std::string::npos) return std::nullopt;
  int label = 0;
  if (!parse_number(std::string_view(line).substr(0, tab), label) || label < 0)
    bad_line(path, lineno, "label must be a non-negative integer");
  line.erase(0, tab + 1);
  return label;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

PointDataset read_points(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line)) bad_line(path, 1, "empty file");
  strip_cr(line);
  bool with_component = false;
  if (line == "x,y,component") with_component = true;
  else if (line != "x,y") bad_line(path, 1, "expected header 'x,y,component'");

  std::vector<double> coords;
  std::vector<int> comp;
  int lineno = 1;
  int max_comp = -1;
  while (std::getline(is, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != (with_component ? 3u : 2u)) bad_line(path, lineno, "wrong number of columns");
    double x = 0.0, y = 0.0;
    char* end = nullptr;
    x = std::strtod(f[0].c_str(), &end);
    if (end == f[0].c_str() || *end != '\0') bad_line(path, lineno, "x is not a number");
    y = std::strtod(f[1].c_str(), &end);
    if (end == f[1].c_str() || *end != '\0') bad_line(path, lineno, "y is not a number");
    if (!std::isfinite(x) || !std::isfinite(y)) bad_line(path, lineno, "non-finite coordinate");
    coords.push_back(x);
    coords.push_back(y);
    if (with_component) {
      int c = 0;
      if (!parse_number(std::string_view(f[2]), c) || c < 0) bad_line(path, lineno, "component must be a non-negative integer");
      comp.push_back(c);
      max_comp = std::max(max_comp, c);
    }
  }
  PointDataset ds;
  const std::size_t rows = coords.size() / 2;
  ds.points = Matrix(rows, 2, std::move(coords));
  ds.component = std::move(comp);
  ds.num_components = static_cast<std::size_t>(max_comp + 1);
  return ds;
}

void write_points(const std::filesystem::path& path, const PointDataset& ds) {
  write_point_examples(path, ds.examples());
}

void write_point_examples(const std::filesystem::path& path, std::span<const Example> xs) {
  const bool labeled = !xs.empty() && std::all_of(xs.begin(), xs.end(), [](const Example& x) { return x.label.has_value(); });
  auto os = open_out(path);
  os << (labeled ? "x,y,component\n" : "x,y\n");
  char buf[96];
  for (const auto& x : xs) {
    const auto* p = std::get_if<PointExample>(&x.x);
    if (p == nullptr || p->coords.size() != 2) throw DataError("point files hold 2D points only");
    if (labeled)
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d", p->coords[0], p->coords[1], *x.label);
    else
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", p->coords[0], p->coords[1]);
    os << buf << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Example> read_corpus(const std::filesystem::path& path, Vocabulary& vocab, bool extend,
                                 std::size_t max_len) {
  auto is = open_in(path);
  std::vector<Example> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Example ex;
    ex.label = take_label(line, path, lineno);
    SequenceExample s;
    std::istringstream ts(line);
    std::string tok;
    while (ts >> tok) {
      const int id = extend ? vocab.add(tok) : vocab.id(tok);
      if (id == Vocabulary::kEos || id == Vocabulary::kBos || id == Vocabulary::kPad)
        bad_line(path, lineno, "reserved token '" + tok + "' inside a sequence");
      s.tokens.push_back(id);
    }
    if (s.tokens.empty()) bad_line(path, lineno, "empty sequence");
    if (max_len > 0 && s.tokens.size() > max_len)
      bad_line(path, lineno, "sequence of length " + std::to_string(s.tokens.size()) + " exceeds maximum length " +
                                 std::to_string(max_len));
    ex.x = std::move(s);
    out.push_back(std::move(ex));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Example> xs, const Vocabulary& vocab) {
  auto os = open_out(path);
  for (const auto& x : xs) {
    const auto* s = std::get_if<SequenceExample>(&x.x);
    if (s == nullptr) throw DataError("corpus files hold token sequences only");
    if (x.label) os << *x.label << '\t';
    os << vocab.decode(s->tokens) << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Example> read_documents(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::vector<Example> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Example ex;
    ex.label = take_label(line, path, lineno);
    DocumentExample d;
    std::istringstream ts(line);
    std::string pair;
    std::map<int, int> seen;
    while (ts >> pair) {
      const auto colon = pair.find(':');
      int id = 0, count = 0;
      if (colon == std::string::npos || !parse_number(std::string_view(pair).substr(0, colon), id) ||
          !parse_number(std::string_view(pair).substr(colon + 1), count) || id < 0 || count < 0)
        bad_line(path, lineno, "expected id:count, got '" + pair + "'");
      if (seen.count(id)) bad_line(path, lineno, "token id " + std::to_string(id) + " listed twice");
      seen[id] = count;
      if (count > 0) d.counts.push_back({id, count});
    }
    if (d.total() < 1) bad_line(path, lineno, "document has no tokens");
    ex.x = std::move(d);
    out.push_back(std::move(ex));
  }
  return out;
}

void write_documents(const std::filesystem::path& path, std::span<const Example> xs) {
  auto os = open_out(path);
  for (const auto& x : xs) {
    const auto* d = std::get_if<DocumentExample>(&x.x);
    if (d == nullptr) throw DataError("document files hold bag-of-words documents only");
    if (x.label) os << *x.label << '\t';
    for (std::size_t i = 0; i < d->counts.size(); ++i)
      os << (i ? " " : "") << d->counts[i].id << ':' << d->counts[i].count;
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Example> load_dataset(const std::filesystem::path& path, Modality modality, Vocabulary& vocab,
                                  bool extend_vocab, std::size_t max_len) {
  switch (modality) {
    case Modality::Points: {
      const PointDataset ds = read_points(path);
      return ds.examples();
    }
    case Modality::Sequence:
      return read_corpus(path, vocab, extend_vocab, max_len);
    case Modality::Document:
      return read_documents(path);
  }
  return {};
}

}  // namespace svebm
