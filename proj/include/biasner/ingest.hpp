#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "biasner/corpus.hpp"

namespace biasner {

// Source column/key names for each Record field. Only `text` is required;
// an empty name means the field is absent from the source.
struct ColumnMap {
  std::string dataset = "Dataset";
  std::string text = "Text";
  std::string biased_words = "BiasedWords";
  std::string aspect_of_bias = "AspectOfBias";
  std::string label = "Label";
  // Used when the dataset column is absent or empty.
  std::string default_dataset = "unknown";
};

struct IngestResult {
  std::vector<Record> records;
  size_t rows_read = 0;
  size_t dropped_empty = 0;
  // Rows whose label disagrees with the presence of biased words.
  size_t inconsistent = 0;
};

// One JSON object per line. Objects wrapped as {"Record": {...}} are
// unwrapped. BiasedWords may be a comma-separated string or a list.
// A mapped key missing from every row is a configuration error.
IngestResult ingest_jsonl(std::istream& in, const ColumnMap& map = {});

// Delimiter-separated with a header row; RFC 4180 quoting.
IngestResult ingest_delimited(std::istream& in, char delimiter, const ColumnMap& map = {});

// Splits a comma-separated phrase list, trimming blanks.
std::vector<std::string> split_phrase_list(std::string_view text);

// Reads a column map from JSON {"text": "...", ...}; unknown keys are errors.
ColumnMap column_map_from_json(std::string_view json_text);

// One object per record with the default column names; ingest_jsonl reads
// it back unchanged.
std::string records_to_jsonl(std::span<const Record> records);

}  // namespace biasner
