#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "biasner/error.hpp"
#include "biasner/eval.hpp"
#include "biasner/rng.hpp"

namespace biasner {

std::string_view perturb_kind_name(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::kSpelling: return "spelling";
    case PerturbKind::kSemantics: return "semantics";
    case PerturbKind::kCase: return "case";
    case PerturbKind::kContext: return "context";
  }
  return "spelling";
}

std::optional<PerturbKind> parse_perturb_kind(std::string_view text) {
  for (PerturbKind k : {PerturbKind::kSpelling, PerturbKind::kSemantics, PerturbKind::kCase, PerturbKind::kContext})
    if (text == perturb_kind_name(k)) return k;
  return std::nullopt;
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kPartial: return "partial";
    case Verdict::kFail: return "fail";
  }
  return "fail";
}

const PerturbResources& PerturbResources::bundled() {
  static const PerturbResources r = [] {
    PerturbResources res;
    res.synonyms = {
        {"women", "females"}, {"woman", "female"}, {"men", "males"}, {"man", "male"},
        {"girls", "young women"}, {"boys", "young men"}, {"exaggerate", "amplify"}, {"exaggerates", "amplifies"},
        {"senior", "older"}, {"elderly", "aged"}, {"old", "aged"}, {"young", "youthful"},
        {"resist", "oppose"}, {"resists", "opposes"}, {"more prone", "higher susceptibility"},
        {"prone", "susceptible"}, {"not fit", "not suitable"}, {"unfit", "unsuitable"}, {"fit", "suitable"},
        {"superior", "better"}, {"inferior", "lesser"}, {"unlike", "contrary to"}, {"lack", "miss"},
        {"lacks", "misses"}, {"emotional", "sentimental"}, {"hysterical", "frantic"}, {"weak", "feeble"},
        {"strong", "powerful"}, {"lazy", "idle"}, {"greedy", "avaricious"}, {"dishonest", "deceitful"},
        {"corrupt", "crooked"}, {"stupid", "dumb"}, {"smart", "clever"}, {"intelligent", "bright"},
        {"ignorant", "uninformed"}, {"uneducated", "unschooled"}, {"illiterate", "unlettered"},
        {"fat", "overweight"}, {"obese", "overweight"}, {"skinny", "scrawny"}, {"thin", "slim"},
        {"ugly", "unattractive"}, {"beautiful", "attractive"}, {"pretty", "attractive"}, {"poor", "needy"},
        {"rich", "wealthy"}, {"wealthy", "affluent"}, {"immigrant", "newcomer"}, {"immigrants", "newcomers"},
        {"foreigner", "outsider"}, {"foreigners", "outsiders"}, {"alien", "stranger"}, {"aliens", "strangers"},
        {"criminal", "offender"}, {"criminals", "offenders"}, {"thug", "hoodlum"}, {"thugs", "hoodlums"},
        {"violent", "aggressive"}, {"aggressive", "hostile"}, {"angry", "furious"}, {"loud", "noisy"},
        {"rude", "impolite"}, {"arrogant", "haughty"}, {"bossy", "domineering"}, {"nagging", "complaining"},
        {"fragile", "delicate"}, {"sensitive", "touchy"}, {"irrational", "illogical"}, {"crazy", "insane"},
        {"insane", "deranged"}, {"mad", "deranged"}, {"senile", "doddering"}, {"slow", "sluggish"},
        {"clumsy", "awkward"}, {"incompetent", "inept"}, {"incapable", "unable"}, {"useless", "worthless"},
        {"worthless", "valueless"}, {"helpless", "powerless"}, {"dependent", "reliant"},
        {"handicapped", "disabled"}, {"crippled", "lame"}, {"sick", "ill"}, {"diseased", "ailing"},
        {"dirty", "filthy"}, {"filthy", "grimy"}, {"primitive", "backward"}, {"backward", "underdeveloped"},
        {"uncivilized", "savage"}, {"savage", "brutal"}, {"barbaric", "brutal"}, {"radical", "extreme"},
        {"extremist", "fanatic"}, {"fanatic", "zealot"}, {"fanatics", "zealots"}, {"terrorist", "militant"},
        {"heathen", "pagan"}, {"infidel", "unbeliever"}, {"religious", "devout"}, {"traditional", "conventional"},
        {"old-fashioned", "outdated"}, {"outdated", "obsolete"}, {"naive", "gullible"}, {"gullible", "credulous"},
        {"immature", "childish"}, {"childish", "infantile"}, {"reckless", "careless"}, {"careless", "negligent"},
        {"unreliable", "undependable"}, {"untrustworthy", "shady"}, {"sneaky", "sly"}, {"cunning", "crafty"},
        {"manipulative", "scheming"}, {"selfish", "self-centered"}, {"narcissistic", "vain"}, {"vain", "conceited"},
        {"attention seeking", "attention hungry"}, {"seeking attention", "craving attention"},
        {"cheap", "stingy"}, {"stingy", "miserly"}, {"wasteful", "extravagant"}, {"spoiled", "pampered"},
        {"entitled", "privileged"}, {"privileged", "advantaged"}, {"unemployed", "jobless"},
        {"homeless", "unhoused"}, {"freeloader", "sponge"}, {"freeloaders", "sponges"}, {"beggar", "panhandler"},
        {"ghetto", "slum"}, {"slum", "shantytown"}, {"worker", "employee"}, {"workers", "employees"},
        {"employees", "staff"}, {"boss", "manager"}, {"leader", "head"}, {"leadership", "management"},
        {"roles", "positions"}, {"role", "position"}, {"job", "position"}, {"jobs", "positions"},
        {"hire", "employ"}, {"hiring", "recruitment"}, {"fired", "dismissed"}, {"skills", "abilities"},
        {"skill", "ability"}, {"technological", "technical"}, {"change", "transition"}, {"ideas", "notions"},
        {"views", "opinions"}, {"opinion", "view"}, {"belief", "conviction"}, {"beliefs", "convictions"},
        {"liberal", "progressive"}, {"conservative", "traditionalist"}, {"tend to", "are inclined to"},
        {"tends to", "is inclined to"}, {"always", "invariably"}, {"never", "not ever"}, {"often", "frequently"},
        {"usually", "typically"}, {"mostly", "largely"}, {"pain", "discomfort"}, {"nature", "temperament"},
        {"personality", "character"}, {"lifestyle", "way of life"}, {"lifestyles", "ways of life"},
        {"diabetes", "diabetic illness"}, {"illness", "sickness"}, {"disease", "illness"}, {"doctor", "physician"},
        {"nurse", "caregiver"}, {"patient", "case"}, {"patients", "cases"}, {"people", "persons"},
        {"person", "individual"}, {"individuals", "persons"}, {"children", "kids"}, {"child", "kid"},
        {"mother", "mom"}, {"father", "dad"}, {"wife", "spouse"}, {"husband", "spouse"}, {"family", "household"},
        {"community", "neighbourhood"}, {"country", "nation"}, {"national", "domestic"}, {"foreign", "overseas"},
        {"unpatriotic", "disloyal"}, {"disloyal", "treacherous"}, {"dangerous", "hazardous"},
        {"threatening", "menacing"}, {"suspicious", "dubious"}, {"exotic", "foreign-looking"},
        {"strange", "odd"}, {"weird", "bizarre"}, {"abnormal", "unusual"}, {"normal", "ordinary"},
        {"overweight", "heavy"}, {"self-control", "discipline"}, {"best fit", "ideal match"},
        {"more suitable", "better suited"}, {"must be", "has to be"}, {"simply", "merely"}, {"just", "merely"},
        {"severe", "harsh"}, {"mild", "gentle"}, {"bad", "poor"}, {"good", "fine"}, {"terrible", "awful"},
        {"excellent", "superb"},
    };
    res.intensity_adverbs = {"severely", "extremely", "very", "highly", "deeply", "totally", "utterly", "completely"};
    res.stopwords = {"the", "a", "an", "and", "or", "but", "of", "to", "in", "on", "at", "for", "with", "by",
                     "from", "is", "are", "was", "were", "be", "been", "it", "its", "this", "that", "these",
                     "those", "their", "they", "them", "he", "she", "his", "her", "we", "our", "you", "your",
                     "due", "as", "has", "have", "had", "do", "does", "did", "not", "no"};
    return res;
  }();
  return r;
}

namespace {

bool is_word(const Token& t) {
  return std::all_of(t.surface.begin(), t.surface.end(),
                     [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '-'; });
}

bool is_content(const Token& t, const PerturbResources& res) {
  if (t.surface.size() < 3 || !is_word(t)) return false;
  return std::find(res.stopwords.begin(), res.stopwords.end(), t.lower) == res.stopwords.end();
}

bool inside(size_t i, std::span<const Span> spans) {
  return std::any_of(spans.begin(), spans.end(), [&](const Span& s) { return i >= s.begin && i < s.end; });
}

// Candidates inside spans if any exist, otherwise all of them.
std::vector<size_t> prefer_spans(const std::vector<size_t>& all, std::span<const Span> spans) {
  std::vector<size_t> in;
  for (size_t i : all)
    if (inside(i, spans)) in.push_back(i);
  return in.empty() ? all : in;
}

std::string match_case(const std::string& source, std::string replacement) {
  const bool has_alpha =
      std::any_of(source.begin(), source.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
  const bool all_upper = source.size() > 1 && has_alpha &&
                         std::none_of(source.begin(), source.end(),
                                      [](char c) { return std::islower(static_cast<unsigned char>(c)); });
  if (all_upper) return ascii_upper(replacement);
  if (!source.empty() && std::isupper(static_cast<unsigned char>(source[0])) && !replacement.empty())
    replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
  return replacement;
}

// Replaces tokens [first, first+count) with `replacement` (count 0 inserts
// before token `first`; empty replacement deletes) and maps the spans.
RobustnessCase rewrite(std::string_view text, const std::vector<Token>& tokens, size_t first, size_t count,
                       const std::string& replacement, std::span<const Span> spans, PerturbKind kind) {
  std::string out;
  if (count == 0) {
    const size_t at = tokens[first].start;
    out = std::string(text.substr(0, at)) + replacement + " " + std::string(text.substr(at));
  } else {
    size_t from = tokens[first].start;
    size_t to = tokens[first + count - 1].end;
    if (replacement.empty()) {
      // Drop one adjoining whitespace run so no double space remains.
      size_t after = to;
      while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
      if (after > to) {
        to = after;
      } else {
        while (from > 0 && std::isspace(static_cast<unsigned char>(text[from - 1]))) --from;
      }
    }
    out = std::string(text.substr(0, from)) + replacement + std::string(text.substr(to));
  }

  const size_t new_count = tokenize(replacement).size();
  const long delta = static_cast<long>(new_count) - static_cast<long>(count);
  auto shift = [&](size_t i) { return static_cast<size_t>(static_cast<long>(i) + delta); };

  RobustnessCase c;
  c.original = std::string(text);
  c.perturbed = std::move(out);
  c.kind = kind;
  c.original_spans.assign(spans.begin(), spans.end());
  for (const Span& s : spans) {
    Span m;
    m.begin = s.begin < first ? s.begin : (s.begin >= first + count ? shift(s.begin) : first);
    m.end = s.end <= first ? s.end : (s.end >= first + count ? shift(s.end) : first + new_count);
    if (count == 0 && s.begin == first) m.begin = shift(s.begin);
    if (m.end > m.begin) c.expected_spans.push_back(m);
  }
  return c;
}

}  // namespace

std::optional<RobustnessCase> perturb(std::string_view text, std::span<const Span> spans, PerturbKind kind,
                                      const PerturbResources& res, uint64_t seed) {
  const auto tokens = tokenize(text);
  for (const Span& s : spans) require(s.begin < s.end && s.end <= tokens.size(), "perturb: span out of range");
  Rng rng(seed);
  std::vector<size_t> content;
  for (size_t i = 0; i < tokens.size(); ++i)
    if (is_content(tokens[i], res)) content.push_back(i);

  switch (kind) {
    case PerturbKind::kSpelling: {
      if (content.empty()) return std::nullopt;
      const auto cands = prefer_spans(content, spans);
      const size_t i = cands[rng.below(cands.size())];
      std::string w = tokens[i].surface;
      if (rng.below(2) == 0) w.insert(w.size() / 2, 1, w[w.size() / 2]);
      else w.insert(w.size() / 3, " ");
      return rewrite(text, tokens, i, 1, w, spans, kind);
    }
    case PerturbKind::kSemantics: {
      struct Hit {
        size_t first, count;
        std::string to;
      };
      std::vector<Hit> hits;
      for (const auto& [a, b] : res.synonyms) {
        for (const auto* pair : {&a, &b}) {
          const auto words = tokenize(*pair);
          const std::string& other = pair == &a ? b : a;
          for (size_t i = 0; i + words.size() <= tokens.size(); ++i) {
            bool ok = true;
            for (size_t k = 0; k < words.size() && ok; ++k) ok = tokens[i + k].lower == words[k].lower;
            if (ok) hits.push_back({i, words.size(), other});
          }
        }
      }
      if (hits.empty()) return std::nullopt;
      std::vector<size_t> idx(hits.size());
      for (size_t k = 0; k < hits.size(); ++k) idx[k] = k;
      std::vector<size_t> in;
      for (size_t k : idx)
        if (inside(hits[k].first, spans)) in.push_back(k);
      const auto& pool = in.empty() ? idx : in;
      const Hit& h = hits[pool[rng.below(pool.size())]];
      const std::string source(text.substr(tokens[h.first].start, tokens[h.first + h.count - 1].end - tokens[h.first].start));
      return rewrite(text, tokens, h.first, h.count, match_case(source, h.to), spans, kind);
    }
    case PerturbKind::kCase: {
      std::vector<size_t> cands;
      for (size_t i : content)
        if (tokens[i].surface != ascii_upper(tokens[i].surface)) cands.push_back(i);
      if (cands.empty()) return std::nullopt;
      cands = prefer_spans(cands, spans);
      const size_t i = cands[rng.below(cands.size())];
      return rewrite(text, tokens, i, 1, ascii_upper(tokens[i].surface), spans, kind);
    }
    case PerturbKind::kContext: {
      std::vector<size_t> adverbs;
      for (size_t i = 0; i < tokens.size(); ++i)
        if (std::find(res.intensity_adverbs.begin(), res.intensity_adverbs.end(), tokens[i].lower) !=
            res.intensity_adverbs.end())
          adverbs.push_back(i);
      if (!adverbs.empty()) {
        const size_t i = adverbs[rng.below(adverbs.size())];
        return rewrite(text, tokens, i, 1, "", spans, kind);
      }
      if (res.intensity_adverbs.empty()) return std::nullopt;
      size_t at;
      if (!spans.empty()) at = spans[rng.below(spans.size())].begin;
      else if (!content.empty()) at = content[rng.below(content.size())];
      else return std::nullopt;
      std::string adverb = res.intensity_adverbs[rng.below(res.intensity_adverbs.size())];
      if (at == 0) adverb = match_case(tokens[0].surface.substr(0, 1), adverb);
      return rewrite(text, tokens, at, 0, adverb, spans, kind);
    }
  }
  return std::nullopt;
}

RobustnessCase make_case(std::string original, std::string perturbed, PerturbKind kind,
                         std::vector<Span> original_spans, std::vector<Span> expected_spans) {
  const size_t n_orig = tokenize(original).size();
  const size_t n_pert = tokenize(perturbed).size();
  for (const Span& s : original_spans)
    require(s.begin < s.end && s.end <= n_orig, "make_case: original span out of range");
  for (const Span& s : expected_spans)
    require(s.begin < s.end && s.end <= n_pert, "make_case: expected span out of range");
  RobustnessCase c;
  c.original = std::move(original);
  c.perturbed = std::move(perturbed);
  c.kind = kind;
  c.original_spans = std::move(original_spans);
  c.expected_spans = std::move(expected_spans);
  return c;
}

Verdict verdict_for(std::span<const Tag> tags, std::span<const Span> expected, size_t* preserved) {
  size_t kept = 0;
  for (const Span& s : expected) {
    require(s.end <= tags.size(), "verdict_for: span outside the tagged sentence");
    bool all = true;
    for (size_t k = s.begin; k < s.end && all; ++k) all = is_bias(tags[k]);
    kept += all;
  }
  if (preserved) *preserved = kept;
  if (kept == expected.size()) return Verdict::kPass;
  return kept > 0 ? Verdict::kPartial : Verdict::kFail;
}

RobustnessReport run_robustness(const ModelParams& params, const Vocab& vocab, std::vector<RobustnessCase> cases) {
  RobustnessReport r;
  for (PerturbKind k : {PerturbKind::kSpelling, PerturbKind::kSemantics, PerturbKind::kCase, PerturbKind::kContext})
    r.per_kind.push_back({k, {}});
  for (auto& c : cases) {
    const auto labeled = label_sequence(c.perturbed, params, vocab);
    c.verdict = verdict_for(labeled.sentence.tags, c.expected_spans, &c.preserved);
    auto& counts = r.per_kind[static_cast<size_t>(c.kind)].second;
    switch (c.verdict) {
      case Verdict::kPass: ++counts.pass; break;
      case Verdict::kPartial: ++counts.partial; break;
      case Verdict::kFail: ++counts.fail; break;
    }
  }
  r.cases = std::move(cases);
  return r;
}

std::vector<RobustnessCase> worked_robustness_suite() {
  return {
      make_case("Conservative views are superior, unlike liberal ideas.",
                "Conservative views are superrior, un like liberal ideas.", PerturbKind::kSpelling,
                {{3, 4}, {5, 6}}, {{3, 4}, {5, 7}}),
      make_case("Women tend to exaggerate pain due to their emotional nature.",
                "Females tend to amplify pain due to their emotional nature.", PerturbKind::kSemantics,
                {{3, 4}, {8, 10}}, {{3, 4}, {8, 10}}),
      make_case("Asians are more prone to diabetes due to lifestyles.",
                "ASIANS have a higher susceptibility to diabetes, due to lifestyle.", PerturbKind::kCase, {{2, 4}},
                {{3, 5}}),
      make_case("Women are not fit for leadership roles.", "Females are not suitable for leadership roles.",
                PerturbKind::kSemantics, {{2, 4}}, {{2, 4}}),
      make_case("Senior employees resist change and severely lack technological skills.",
                "Older employees are resistant to change and lack technological skills.", PerturbKind::kContext,
                {{2, 3}, {5, 7}}, {{3, 4}, {7, 8}}),
  };
}

namespace {

nlohmann::json spans_json(const std::vector<Span>& spans) {
  nlohmann::json a = nlohmann::json::array();
  for (const Span& s : spans) a.push_back({s.begin, s.end});
  return a;
}

}  // namespace

std::string RobustnessReport::to_json() const {
  nlohmann::json j;
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : cases)
    cs.push_back({{"original", c.original},
                  {"perturbed", c.perturbed},
                  {"kind", perturb_kind_name(c.kind)},
                  {"original_spans", spans_json(c.original_spans)},
                  {"expected_spans", spans_json(c.expected_spans)},
                  {"preserved", c.preserved},
                  {"verdict", verdict_name(c.verdict)}});
  j["cases"] = cs;
  nlohmann::json pk = nlohmann::json::object();
  for (const auto& [kind, n] : per_kind)
    pk[std::string(perturb_kind_name(kind))] = {{"pass", n.pass}, {"partial", n.partial}, {"fail", n.fail}};
  j["per_kind"] = pk;
  return j.dump(2) + "\n";
}

std::string RobustnessReport::to_text() const {
  std::ostringstream out;
  for (const auto& c : cases) {
    out << "Original:  " << c.original << "\n"
        << "Test case: " << c.perturbed << "\n"
        << "Test type: " << perturb_kind_name(c.kind) << "\n"
        << "Verdict:   " << verdict_name(c.verdict) << " (" << c.preserved << "/" << c.expected_spans.size()
        << " spans preserved)\n\n";
  }
  out << "kind        pass  partial  fail\n";
  for (const auto& [kind, n] : per_kind) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-10s %5zu %8zu %5zu\n", std::string(perturb_kind_name(kind)).c_str(), n.pass,
                  n.partial, n.fail);
    out << buf;
  }
  return out.str();
}

}  // namespace biasner
