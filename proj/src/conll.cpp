#include "biasner/conll.hpp"

#include "biasner/error.hpp"

namespace biasner {

std::string emit_conll(std::span<const TaggedSentence> sentences) {
  std::string out;
  bool first = true;
  for (const auto& raw : sentences) {
    if (raw.tokens.empty()) continue;
    const TaggedSentence s = raw.scheme == Scheme::kBio ? raw : expand_tags(raw);
    validate(s);
    if (!first) out += '\n';
    first = false;
    for (size_t i = 0; i < s.tokens.size(); ++i) {
      out += s.tokens[i].surface;
      out += "\t-X-\t-X-\t";
      out += tag_name(s.tags[i]);
      out += '\n';
    }
  }
  return out;
}

namespace {

std::vector<std::string_view> split_columns(std::string_view line) {
  std::vector<std::string_view> cols;
  const bool tabbed = line.find('\t') != std::string_view::npos;
  size_t pos = 0;
  while (pos <= line.size()) {
    if (!tabbed) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      if (pos == line.size()) break;
    }
    size_t next = line.find(tabbed ? '\t' : ' ', pos);
    if (next == std::string_view::npos) next = line.size();
    cols.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return cols;
}

bool blank(std::string_view line) {
  for (char c : line)
    if (c != ' ' && c != '\t') return false;
  return true;
}

}  // namespace

std::vector<TaggedSentence> parse_conll(std::string_view stream) {
  std::vector<TaggedSentence> out;
  TaggedSentence cur;
  size_t first_line_of_sentence = 0;

  auto finish = [&]() {
    if (cur.tokens.empty()) return;
    cur.scheme = Scheme::kBio;
    cur.provenance.assign(cur.tokens.size(), Provenance::kHuman);
    try {
      validate(cur);
    } catch (const Error& e) {
      fail(ErrorKind::kValidation,
           std::string(e.what()) + " (sentence starting at line " + std::to_string(first_line_of_sentence) + ")");
    }
    out.push_back(std::move(cur));
    cur = TaggedSentence{};
  };

  size_t line_no = 0;
  size_t pos = 0;
  while (pos < stream.size()) {
    size_t nl = stream.find('\n', pos);
    if (nl == std::string_view::npos) nl = stream.size();
    std::string_view line = stream.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (blank(line)) {
      finish();
      continue;
    }
    if (line.starts_with("-DOCSTART-")) continue;

    const auto cols = split_columns(line);
    if (cols.size() < 2)
      fail(ErrorKind::kParse, "line " + std::to_string(line_no) + ": expected at least 2 columns");
    const auto tag = parse_tag(cols.back());
    if (!tag || *tag == Tag::kBias)
      fail(ErrorKind::kParse, "line " + std::to_string(line_no) + ": unknown tag '" + std::string(cols.back()) + "'");
    if (cols.front().empty())
      fail(ErrorKind::kParse, "line " + std::to_string(line_no) + ": empty token");

    if (cur.tokens.empty()) first_line_of_sentence = line_no;
    if (!cur.text.empty()) cur.text += ' ';
    Token t;
    t.surface = std::string(cols.front());
    t.start = cur.text.size();
    cur.text += t.surface;
    t.end = cur.text.size();
    t.lower = ascii_lower(t.surface);
    cur.tokens.push_back(std::move(t));
    cur.tags.push_back(*tag);
  }
  finish();
  return out;
}

}  // namespace biasner
