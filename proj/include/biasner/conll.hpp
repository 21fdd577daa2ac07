#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasner/corpus.hpp"

namespace biasner {

// Four tab-separated columns per token: surface, POS, chunk, tag. POS and
// chunk are written as "-X-". Sentences are separated by one blank line and
// the stream ends with a newline. Sentences without tokens are skipped.
// Collapsed sentences are expanded to bio before writing.
std::string emit_conll(std::span<const TaggedSentence> sentences);

// Reads 2..N column lines (surface first, tag last). Blank lines end
// sentences and "-DOCSTART-" lines are ignored. Tokens are laid out over a
// synthesized text joined by single spaces. Throws kParse with the line
// number for short lines and unknown tags, kValidation for ill-formed bio.
std::vector<TaggedSentence> parse_conll(std::string_view stream);

}  // namespace biasner
