#include "biasner/ingest.hpp"

#include <map>

#include <json.hpp>

#include "biasner/error.hpp"

namespace biasner {

using nlohmann::json;

std::vector<std::string> split_phrase_list(std::string_view text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view piece = text.substr(pos, comma - pos);
    while (!piece.empty() && (piece.front() == ' ' || piece.front() == '\t')) piece.remove_prefix(1);
    while (!piece.empty() && (piece.back() == ' ' || piece.back() == '\t')) piece.remove_suffix(1);
    if (!piece.empty()) out.emplace_back(piece);
    pos = comma + 1;
  }
  return out;
}

ColumnMap column_map_from_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("column map JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::kConfig, "column map must be a JSON object");
  ColumnMap m;
  const std::map<std::string, std::string*> fields = {
      {"dataset", &m.dataset},         {"text", &m.text},   {"biased_words", &m.biased_words},
      {"aspect_of_bias", &m.aspect_of_bias}, {"label", &m.label}, {"default_dataset", &m.default_dataset},
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto f = fields.find(it.key());
    if (f == fields.end()) fail(ErrorKind::kConfig, "unknown column map key '" + it.key() + "'");
    if (it.value().is_null()) {
      *f->second = "";
    } else if (it.value().is_string()) {
      *f->second = it.value().get<std::string>();
    } else {
      fail(ErrorKind::kConfig, "column map value for '" + it.key() + "' must be a string");
    }
  }
  if (m.text.empty()) fail(ErrorKind::kConfig, "column map must name a text column");
  return m;
}

namespace {

// Field values for one source row, keyed by Record field.
struct RowFields {
  std::optional<std::string> dataset, text, aspect, label;
  std::optional<std::vector<std::string>> biased_words;
};

bool blank_text(const std::string& s) {
  for (char c : s)
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') return false;
  return true;
}

void append_record(IngestResult& result, const RowFields& f, const ColumnMap& map, size_t row) {
  ++result.rows_read;
  if (!f.text || blank_text(*f.text)) {
    ++result.dropped_empty;
    return;
  }
  Record r;
  r.text = *f.text;
  r.dataset = f.dataset && !f.dataset->empty() ? *f.dataset : map.default_dataset;
  if (f.biased_words) r.biased_words = *f.biased_words;
  r.aspect_of_bias = f.aspect && !f.aspect->empty() ? *f.aspect : std::string(kUnspecifiedAspect);
  if (f.label && !f.label->empty()) {
    auto l = parse_label(*f.label);
    if (!l) fail(ErrorKind::kIngest, "row " + std::to_string(row) + ": unknown label '" + *f.label + "'");
    r.label = *l;
  } else {
    r.label = r.biased_words.empty() ? Label::kNonBiased : Label::kBiased;
  }
  if (!r.consistent()) ++result.inconsistent;
  result.records.push_back(std::move(r));
}

std::optional<std::string> json_string(const json& obj, const std::string& key, size_t row) {
  if (key.empty()) return std::nullopt;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number() || it->is_boolean()) return it->dump();
  fail(ErrorKind::kIngest, "row " + std::to_string(row) + ": field '" + key + "' is not a scalar");
}

}  // namespace

IngestResult ingest_jsonl(std::istream& in, const ColumnMap& map) {
  if (map.text.empty()) fail(ErrorKind::kConfig, "column map must name a text column");
  if (!in) fail(ErrorKind::kIngest, "input stream is not readable");

  IngestResult result;
  std::map<std::string, bool> seen;
  for (const std::string* key : {&map.dataset, &map.text, &map.biased_words, &map.aspect_of_bias, &map.label})
    if (!key->empty()) seen[*key] = false;

  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (blank_text(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::kIngest, "row " + std::to_string(row) + ": " + e.what());
    }
    if (obj.is_object() && obj.size() == 1 && obj.contains("Record") && obj["Record"].is_object())
      obj = obj["Record"];
    if (!obj.is_object()) fail(ErrorKind::kIngest, "row " + std::to_string(row) + ": not a JSON object");
    for (auto& [key, present] : seen) present = present || obj.contains(key);

    RowFields f;
    f.dataset = json_string(obj, map.dataset, row);
    f.text = json_string(obj, map.text, row);
    f.aspect = json_string(obj, map.aspect_of_bias, row);
    f.label = json_string(obj, map.label, row);
    if (!map.biased_words.empty()) {
      auto it = obj.find(map.biased_words);
      if (it != obj.end() && !it->is_null()) {
        if (it->is_string()) {
          f.biased_words = split_phrase_list(it->get<std::string>());
        } else if (it->is_array()) {
          std::vector<std::string> words;
          for (const auto& w : *it) {
            if (!w.is_string()) fail(ErrorKind::kIngest, "row " + std::to_string(row) + ": biased word is not a string");
            if (!w.get<std::string>().empty()) words.push_back(w.get<std::string>());
          }
          f.biased_words = std::move(words);
        } else {
          fail(ErrorKind::kIngest, "row " + std::to_string(row) + ": biased words must be a string or list");
        }
      }
    }
    append_record(result, f, map, row);
  }
  if (in.bad()) fail(ErrorKind::kIngest, "read failure after row " + std::to_string(row));
  if (row > 0 && !seen[map.text])
    fail(ErrorKind::kConfig, "text key '" + map.text + "' not present in any row");
  // Non-default key names were requested explicitly and must exist.
  const ColumnMap defaults;
  const std::pair<const std::string*, const std::string*> optional_keys[] = {
      {&map.dataset, &defaults.dataset},
      {&map.biased_words, &defaults.biased_words},
      {&map.aspect_of_bias, &defaults.aspect_of_bias},
      {&map.label, &defaults.label},
  };
  for (const auto& [key, def] : optional_keys)
    if (row > 0 && !key->empty() && *key != *def && !seen[*key])
      fail(ErrorKind::kConfig, "key '" + *key + "' not present in any row");
  return result;
}

namespace {

// Reads one logical record; quoted fields may span lines. Returns false at EOF.
bool read_delimited_row(std::istream& in, char delim, std::vector<std::string>& fields, size_t& line_no) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool field_quoted = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    any = true;
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_quoted) {
      in_quotes = true;
      field_quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
      field_quoted = false;
    } else if (c == '\n') {
      ++line_no;
      fields.push_back(std::move(field));
      return true;
    } else if (c == '\r') {
      // CRLF line endings.
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) fail(ErrorKind::kIngest, "line " + std::to_string(line_no + 1) + ": unterminated quoted field");
  if (!any) return false;
  fields.push_back(std::move(field));
  ++line_no;
  return true;
}

}  // namespace

IngestResult ingest_delimited(std::istream& in, char delimiter, const ColumnMap& map) {
  if (map.text.empty()) fail(ErrorKind::kConfig, "column map must name a text column");
  if (!in) fail(ErrorKind::kIngest, "input stream is not readable");

  std::vector<std::string> header;
  size_t line_no = 0;
  if (!read_delimited_row(in, delimiter, header, line_no)) return {};

  std::map<std::string, size_t> col;
  for (size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto index_of = [&](const std::string& name, bool required) -> std::optional<size_t> {
    if (name.empty()) return std::nullopt;
    auto it = col.find(name);
    if (it == col.end()) {
      if (required) fail(ErrorKind::kConfig, "column '" + name + "' not in header");
      return std::nullopt;
    }
    return it->second;
  };
  // Only text is mandatory; other mapped names must exist when they differ
  // from the defaults, since then the user asked for them explicitly.
  const ColumnMap defaults;
  const auto text_idx = index_of(map.text, true);
  const auto dataset_idx = index_of(map.dataset, map.dataset != defaults.dataset);
  const auto words_idx = index_of(map.biased_words, map.biased_words != defaults.biased_words);
  const auto aspect_idx = index_of(map.aspect_of_bias, map.aspect_of_bias != defaults.aspect_of_bias);
  const auto label_idx = index_of(map.label, map.label != defaults.label);

  IngestResult result;
  std::vector<std::string> fields;
  size_t row = 0;
  while (read_delimited_row(in, delimiter, fields, line_no)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() > header.size())
      fail(ErrorKind::kIngest, "row " + std::to_string(row) + ": " + std::to_string(fields.size()) +
                                   " fields but header has " + std::to_string(header.size()));
    auto get = [&](const std::optional<size_t>& idx) -> std::optional<std::string> {
      if (!idx || *idx >= fields.size()) return std::nullopt;
      return fields[*idx];
    };
    RowFields f;
    f.text = get(text_idx);
    f.dataset = get(dataset_idx);
    f.aspect = get(aspect_idx);
    f.label = get(label_idx);
    if (auto w = get(words_idx)) f.biased_words = split_phrase_list(*w);
    append_record(result, f, map, row);
  }
  return result;
}

std::string records_to_jsonl(std::span<const Record> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"Dataset", r.dataset},
                     {"Text", r.text},
                     {"BiasedWords", r.biased_words},
                     {"AspectOfBias", r.aspect_of_bias},
                     {"Label", label_name(r.label)}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace biasner
