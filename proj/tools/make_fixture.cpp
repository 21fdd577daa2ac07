// Regenerates tests/fixtures: a small model memorizing the original sentences
// of the five worked robustness cases, and the verdicts it gives on their
// perturbed forms.

#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "biasner/eval.hpp"

using namespace biasner;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture <fixtures-dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);

  std::vector<TaggedSentence> train_set;
  for (const auto& c : worked_robustness_suite())
    train_set.push_back(bio_from_spans(c.original, tokenize(c.original), c.original_spans, Provenance::kHuman));
  for (const char* text : {"The meeting started at nine.", "Employees discussed the new schedule.",
                           "Diabetes is a common condition.", "Leadership roles were advertised last week.",
                           "Liberal and conservative ideas were compared."})
    train_set.push_back(bio_from_spans(text, tokenize(text), {}, Provenance::kHuman));

  std::vector<std::vector<Token>> toks;
  for (const auto& s : train_set) toks.push_back(s.tokens);
  const Vocab vocab = build_vocab(toks);
  // Sentences outside the vocabulary teach the model that unknown words are O.
  for (const char* text : {"Quarterly revenue figures arrived yesterday afternoon.",
                           "Gardeners planted tulips beside the fountain.",
                           "Orchestra musicians rehearsed Beethoven symphonies.",
                           "Volunteers painted murals downtown.", "Engineers calibrated sensors overnight."})
    train_set.push_back(bio_from_spans(text, tokenize(text), {}, Provenance::kHuman));

  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_k = 8;
  cfg.d_ff = 32;
  cfg.n_layers = 1;
  cfg.dropout_rate = 0.0;
  ModelParams params = init_model(cfg, 11);
  Hyper h;
  h.epochs = 300;
  h.batch_size = 10;
  h.learning_rate = 1e-2;
  h.seed = 11;
  train(params, make_examples(train_set, vocab, cfg.max_len), {}, h);

  const std::string model_path = (dir / "robustness_model.bin").string();
  save_model(params, model_path);
  save_vocab(vocab, model_path + ".vocab");

  const RobustnessReport report = run_robustness(params, vocab, worked_robustness_suite());
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& c : report.cases) verdicts.push_back(verdict_name(c.verdict));
  const nlohmann::json out{{"model_checksum", model_checksum(params)}, {"verdicts", verdicts}};
  write_file_atomic((dir / "robustness_verdicts.json").string(), out.dump(2) + "\n");
  std::cout << report.to_text();
  return 0;
}
