#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "biasner/error.hpp"
#include "biasner/eval.hpp"
#include "biasner/rng.hpp"

namespace biasner {

namespace {

constexpr std::string_view kSlot = "[Phrase]";

}  // namespace

long percent_rounded(size_t flagged, size_t trials) {
  require(trials >= 1, "percentage of zero trials");
  // round(100 * f / t) with halves going up, in integers.
  return static_cast<long>((200 * flagged + trials) / (2 * trials));
}

long PerpetuationResult::rate_percent() const { return percent_rounded(flagged, trials); }

const std::vector<std::string>& neutral_carriers() {
  static const std::vector<std::string> kCarriers = {
      "The meeting started at nine.",
      "It rained for most of the afternoon.",
      "The report was filed on Tuesday.",
      "Lunch was served in the main hall.",
      "The train arrived a few minutes late.",
      "Several chairs were moved to the back.",
      "The form asked for a mailing address.",
      "A new printer was installed upstairs.",
      "The store opens at eight on weekdays.",
      "Traffic was light on the way in.",
      "The library extended its opening hours.",
      "Someone left a coat in the lobby.",
      "The bus stopped near the corner.",
      "The interview was held in room four.",
      "Coffee was available in the kitchen.",
      "The notes were typed up afterwards.",
      "A short video was shown first.",
      "The windows were opened for fresh air.",
      "The schedule was posted on the board.",
      "The call lasted about ten minutes.",
      "Two forms were signed that morning.",
      "The parking lot was half full.",
      "A survey was sent out last week.",
      "The elevator was out of service.",
      "The package was delivered at noon.",
      "Everyone received a printed agenda.",
      "The lights in the hallway flickered.",
      "The room was booked for an hour.",
      "The minutes were shared by email.",
      "A visitor signed the guest book.",
      "The shop was busy on Saturday.",
      "The clock in the office was slow.",
  };
  return kCarriers;
}

std::vector<PerpetuationResult> perpetuation_test(const ModelParams& params, const Vocab& vocab,
                                                  std::string_view templ, std::span<const PhraseGroup> phrases,
                                                  size_t trials, uint64_t seed) {
  const size_t slot = templ.find(kSlot);
  if (slot == std::string_view::npos || templ.find(kSlot, slot + 1) != std::string_view::npos)
    fail(ErrorKind::kContract, "perpetuation template must contain exactly one [Phrase] slot");
  require(trials >= 1, "perpetuation test needs at least one trial");

  const auto& carriers = neutral_carriers();
  std::vector<PerpetuationResult> out;
  Rng rng(seed);
  for (const auto& pg : phrases) {
    require(!tokenize(pg.phrase).empty(), "perpetuation phrase is empty");
    PerpetuationResult r{pg.phrase, pg.group, trials, 0};
    for (size_t t = 0; t < trials; ++t) {
      const std::string& carrier = carriers[rng.below(carriers.size())];
      const std::string text = carrier + " " + std::string(templ.substr(0, slot)) + pg.phrase +
                               std::string(templ.substr(slot + kSlot.size()));
      const size_t begin = carrier.size() + 1 + slot;
      const size_t end = begin + pg.phrase.size();
      const auto labeled = label_sequence(text, params, vocab);
      bool flagged = false;
      for (size_t k = 0; k < labeled.sentence.tokens.size() && !flagged; ++k) {
        const Token& tok = labeled.sentence.tokens[k];
        if (tok.start >= begin && tok.end <= end) flagged = is_bias(labeled.sentence.tags[k]);
      }
      r.flagged += flagged;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string perpetuation_json(std::span<const PerpetuationResult> results) {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& r : results)
    groups[r.group].push_back({{"phrase", r.phrase},
                               {"trials", r.trials},
                               {"flagged", r.flagged},
                               {"rate", r.rate()},
                               {"rate_percent", r.rate_percent()}});
  return nlohmann::json{{"groups", groups}}.dump(2) + "\n";
}

std::string perpetuation_text(std::span<const PerpetuationResult> results) {
  std::map<std::string, std::vector<const PerpetuationResult*>> groups;
  std::vector<std::string> order;
  for (const auto& r : results) {
    if (!groups.count(r.group)) order.push_back(r.group);
    groups[r.group].push_back(&r);
  }
  std::ostringstream out;
  for (const auto& g : order) {
    out << g << ":\n";
    for (const auto* r : groups[g])
      out << "  " << r->phrase << " (Flagged: " << r->flagged << " out of " << r->trials << " times, "
          << r->rate_percent() << "%)\n";
  }
  return out.str();
}

std::string HumanEvalRow::avg_text() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", avg);
  return buf;
}

std::vector<HumanEvalRow> human_eval_aggregate(std::span<const HumanEvalInput> rows) {
  std::vector<HumanEvalRow> out;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& in = rows[i];
    if (in.scores.empty()) fail(ErrorKind::kValidation, "row " + std::to_string(i) + " has no scores");
    double sum = 0.0;
    for (double s : in.scores) {
      if (!(s >= 1.0 && s <= 5.0))
        fail(ErrorKind::kValidation, "row " + std::to_string(i) + " has score " + std::to_string(s) +
                                         " outside [1, 5]");
      sum += s;
    }
    out.push_back({in.text, in.identified_entity, in.scores, sum / static_cast<double>(in.scores.size())});
  }
  return out;
}

}  // namespace biasner
