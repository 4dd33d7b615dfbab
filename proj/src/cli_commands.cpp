#include "xlit/cli_commands.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#include "xlit/aligneval.hpp"
#include "xlit/corpus.hpp"
#include "xlit/errors.hpp"
#include "xlit/io_util.hpp"
#include "xlit/romanizer.hpp"
#include "xlit/tokenizer.hpp"
#include "xlit/trainer.hpp"
#include "xlit/utf8.hpp"

namespace xlit {

namespace fs = std::filesystem;

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& args, std::uint64_t seed,
                    const std::vector<std::string>& input_files,
                    const std::vector<std::string>& output_files) {
  nlohmann::ordered_json manifest;
  manifest["command"] = command;
  manifest["version"] = kToolVersion;
  manifest["seed"] = seed;
  manifest["args"] = args;
  std::string digest_input;
  for (const auto& [key, value] : args) digest_input += key + "=" + value + "\n";
  manifest["config_digest"] = sha256_hex(digest_input);
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  for (const std::string& path : input_files) inputs[path] = sha256_file_hex(path);
  manifest["inputs"] = inputs;
  manifest["outputs"] = output_files;
  write_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

namespace {

SynthPairSpec parse_synth_spec(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth spec JSON parse error: ") + e.what());
  }
  SynthPairSpec spec;
  const auto require = [&](const char* field) {
    if (!j.contains(field)) {
      throw ValidationError(std::string("synth spec: missing field '") + field + "'");
    }
    return j[field];
  };
  try {
    spec.lexicon_size = require("lexicon_size").get<std::size_t>();
    spec.sentence_count = require("sentence_count").get<std::size_t>();
    spec.parallel_count = require("parallel_count").get<std::size_t>();
    spec.cognate_rate = require("cognate_rate").get<double>();
    spec.perturbation_rate = require("perturbation_rate").get<double>();
    spec.seed = require("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth spec: malformed field: ") + e.what());
  }
  spec.validate();
  return spec;
}

void write_corpus_file(const std::string& path, const std::vector<SentenceRecord>& records) {
  std::string out;
  for (const SentenceRecord& rec : records) {
    out += rec.text;
    out.push_back('\n');
  }
  write_file(path, out);
}

std::string rules_to_tsv(const RuleTable& table) {
  std::string out = "# " + table.name() + "\n";
  for (const auto& [source, target] : table.rules()) {
    out += source;
    out.push_back('\t');
    out += target;
    out.push_back('\n');
  }
  return out;
}

/// Picks a checkpoint file from <run>/checkpoints by selector: "best"
/// (maximum stored validation metric, earliest on ties), "last", or a step
/// number.
std::string select_checkpoint(const std::string& run_dir, const std::string& selector,
                              const EncoderConfig& config, std::int64_t* step_out = nullptr) {
  const std::string dir = run_dir + "/checkpoints";
  if (!fs::is_directory(dir)) throw IoError("no checkpoints directory in " + run_dir);
  std::vector<std::pair<std::int64_t, std::string>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("step-", 0) != 0 || entry.path().extension() != ".ckpt") continue;
    found.emplace_back(std::stoll(name.substr(5, name.size() - 5 - 5)), entry.path().string());
  }
  if (found.empty()) throw IoError("no checkpoints found in " + dir);
  std::sort(found.begin(), found.end());
  std::string chosen;
  std::int64_t chosen_step = -1;
  if (selector == "last") {
    chosen = found.back().second;
    chosen_step = found.back().first;
  } else if (selector == "best") {
    double best = -1.0;
    for (const auto& [step, path] : found) {
      const CheckpointRecord record = load_checkpoint(path, config);
      if (record.val_metric > best) {
        best = record.val_metric;
        chosen = path;
        chosen_step = step;
      }
    }
  } else {
    const std::int64_t want = std::stoll(selector);
    for (const auto& [step, path] : found) {
      if (step == want) {
        chosen = path;
        chosen_step = step;
      }
    }
    if (chosen.empty()) {
      throw ValidationError("no checkpoint at step " + selector + " in " + dir);
    }
  }
  if (step_out != nullptr) *step_out = chosen_step;
  return chosen;
}

RunConfig run_config_of(const std::string& run_dir) {
  return RunConfig::from_json(read_file(run_dir + "/config.json"));
}

/// One TSV path, or four comma-separated side-by-side files.
ParallelEvalSet load_eval_arg(const std::string& eval_path) {
  if (eval_path.find(',') == std::string::npos) return load_eval_tsv(eval_path);
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = eval_path.find(',', start);
    parts.push_back(eval_path.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 4) {
    throw ValidationError("eval files: expected one TSV or four comma-separated paths");
  }
  return load_eval_files(parts[0], parts[1], parts[2], parts[3]);
}

std::vector<std::string> eval_input_files(const std::string& eval_path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = eval_path.find(',', start);
    parts.push_back(eval_path.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return parts;
}

std::string similarity_summary_json(const SimilarityReport& report) {
  nlohmann::ordered_json j;
  j["direction"] = report.direction;
  j["checkpoint_step"] = report.checkpoint_step;
  for (int type = 0; type < kNumSimilarityTypes; ++type) {
    nlohmann::ordered_json entry;
    entry["matched_mean"] = report.matched_mean[static_cast<std::size_t>(type)];
    entry["random_mean"] = report.random_mean[static_cast<std::size_t>(type)];
    entry["gap"] = report.gap[static_cast<std::size_t>(type)];
    j[kSimilarityNames[type]] = entry;
  }
  return j.dump(2) + "\n";
}

std::string pairs_csv(const SimilarityReport& report) {
  std::string out = "index";
  for (int type = 0; type < kNumSimilarityTypes; ++type) {
    out += std::string(",") + kSimilarityNames[type] + "," + kSimilarityNames[type] + "_random";
  }
  out.push_back('\n');
  const std::size_t n = report.matched[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i);
    for (int type = 0; type < kNumSimilarityTypes; ++type) {
      out += "," + format_double(report.matched[static_cast<std::size_t>(type)][i]) + "," +
             format_double(report.random_pairs[static_cast<std::size_t>(type)][i]);
    }
    out.push_back('\n');
  }
  return out;
}

std::string histogram_csv(const SimilarityReport& report) {
  std::string out = "type,bin_left,count_matched,count_random\n";
  for (int type = 0; type < kNumSimilarityTypes; ++type) {
    for (int bin = 0; bin < kHistogramBins; ++bin) {
      const double bin_left = -1.0 + bin * kHistogramBinWidth;
      out += std::string(kSimilarityNames[type]) + "," + format_double(bin_left) + "," +
             std::to_string(report.hist_matched[static_cast<std::size_t>(type)][static_cast<std::size_t>(bin)]) +
             "," +
             std::to_string(report.hist_random[static_cast<std::size_t>(type)][static_cast<std::size_t>(bin)]) +
             "\n";
    }
  }
  return out;
}

std::string retrieval_json(const RetrievalReport& report) {
  nlohmann::ordered_json j;
  j["direction"] = report.direction;
  for (const auto& [k, acc] : report.accuracy) j["top" + std::to_string(k)] = acc;
  j["weak_alignment_rate"] = report.weak_alignment_rate;
  return j.dump(2) + "\n";
}

}  // namespace

int cmd_gen_synth(const std::string& spec_path, const std::string& out_dir) {
  const SynthPairSpec spec = parse_synth_spec(read_file(spec_path));
  const SynthPair pair = generate_synth_pair(spec);
  fs::create_directories(out_dir);

  write_corpus_file(out_dir + "/a_orig.txt", pair.corpus_a.originals);
  write_corpus_file(out_dir + "/a_latn.txt", pair.corpus_a.transliterations);
  write_corpus_file(out_dir + "/b_orig.txt", pair.corpus_b.originals);
  write_corpus_file(out_dir + "/b_latn.txt", pair.corpus_b.transliterations);
  save_eval_tsv(pair.eval, out_dir + "/eval.tsv");
  write_file(out_dir + "/rules_b_latn.tsv", rules_to_tsv(pair.cipher_inverse));

  // Topic-labeled eval sentences for the transfer probe; label parity holds
  // across the two languages by construction.
  {
    std::string probe = "text\tlang\tlabel\n";
    for (std::size_t i = 0; i < pair.eval.size(); ++i) {
      probe += pair.eval.t[i] + "\tA\t" + std::to_string(pair.eval_labels[i]) + "\n";
      probe += pair.eval.s[i] + "\tB\t" + std::to_string(pair.eval_labels[i]) + "\n";
    }
    write_file(out_dir + "/probe.tsv", probe);
  }
  write_file(out_dir + "/spec.json", read_file(spec_path));

  write_manifest(out_dir, "gen-synth", {{"spec", spec_path}, {"out", out_dir}}, spec.seed,
                 {spec_path},
                 {"a_orig.txt", "a_latn.txt", "b_orig.txt", "b_latn.txt", "eval.tsv",
                  "rules_b_latn.tsv", "probe.tsv", "spec.json"});
  return kExitOk;
}

int cmd_transliterate(const std::string& in_path, const std::string& rules_path,
                      const std::string& out_path, const std::string& fallback) {
  Fallback policy;
  if (fallback == "pass") {
    policy = Fallback::kPassThrough;
  } else if (fallback == "drop") {
    policy = Fallback::kDrop;
  } else {
    throw ValidationError("transliterate: fallback must be 'pass' or 'drop'");
  }
  const RuleTable rules = load_rules(rules_path, policy);
  std::string out;
  for (const std::string& line : read_lines(in_path)) {
    out += transliterate(nfc_compose(line), rules);
    out.push_back('\n');
  }
  write_file(out_path, out);
  return kExitOk;
}

int cmd_train_tokenizer(const std::vector<std::string>& corpus_paths, std::size_t vocab_size,
                        std::uint64_t seed, const std::string& out_path, bool word_marker) {
  if (corpus_paths.empty()) throw ValidationError("train-tokenizer: no corpus files");
  std::vector<std::string> texts;
  for (const std::string& path : corpus_paths) {
    for (const SentenceRecord& rec : load_corpus(path, "", "")) texts.push_back(rec.text);
  }
  TrainOptions options;
  options.word_marker = word_marker;
  const UnigramVocabulary vocab = train_unigram(texts, vocab_size, seed, options);
  vocab.save(out_path);
  return kExitOk;
}

int cmd_overlap(const std::string& corpus_a, const std::string& corpus_b,
                const std::string& vocab_path, std::size_t sample_size, std::uint64_t seed,
                const std::string& out_path) {
  const UnigramVocabulary vocab = UnigramVocabulary::load(vocab_path);
  std::vector<std::string> texts_a, texts_b;
  for (const SentenceRecord& rec : load_corpus(corpus_a, "", "")) texts_a.push_back(rec.text);
  for (const SentenceRecord& rec : load_corpus(corpus_b, "", "")) texts_b.push_back(rec.text);
  const OverlapReport report = lexical_overlap(texts_a, texts_b, vocab, sample_size, seed);
  nlohmann::ordered_json j;
  j["shared_types"] = report.shared_types;
  j["total_types"] = report.total_types;
  j["ratio"] = report.ratio;
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_file(out_path, text);
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& vocab_path, const std::string& out_dir,
              const std::string& resume_checkpoint) {
  const RunConfig config = RunConfig::from_json(read_file(config_path));
  const UnigramVocabulary vocab = UnigramVocabulary::load(vocab_path);
  if (config.encoder.vocab_size != static_cast<int>(vocab.size())) {
    throw ValidationError("train: config vocab_size " +
                          std::to_string(config.encoder.vocab_size) +
                          " does not match vocabulary size " + std::to_string(vocab.size()));
  }
  PairedCorpus corpus_a;
  corpus_a.originals = load_corpus(data_dir + "/a_orig.txt", "A", "latn");
  corpus_a.transliterations = load_corpus(data_dir + "/a_latn.txt", "A", "latn");
  PairedCorpus corpus_b;
  corpus_b.originals = load_corpus(data_dir + "/b_orig.txt", "B", "synthb");
  corpus_b.transliterations = load_corpus(data_dir + "/b_latn.txt", "B", "latn");
  const ParallelEvalSet validation = load_eval_tsv(data_dir + "/eval.tsv");
  const TrainData data = tokenize_pairs(corpus_a, corpus_b, vocab);

  fs::create_directories(out_dir);
  write_file(out_dir + "/config.json", config.to_json());
  train(config, data, vocab, validation, out_dir, resume_checkpoint);

  std::map<std::string, std::string> args = {{"config", config_path},
                                             {"data", data_dir},
                                             {"vocab", vocab_path},
                                             {"out", out_dir}};
  if (!resume_checkpoint.empty()) args["resume"] = resume_checkpoint;
  std::vector<std::string> inputs = {config_path, vocab_path, data_dir + "/a_orig.txt",
                                     data_dir + "/a_latn.txt", data_dir + "/b_orig.txt",
                                     data_dir + "/b_latn.txt", data_dir + "/eval.tsv"};
  if (!resume_checkpoint.empty()) inputs.push_back(resume_checkpoint);
  write_manifest(out_dir, "train", args, config.train.seed, inputs,
                 {"config.json", "metrics.csv", "checkpoints/"});
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, const std::string& eval_path,
             const std::string& vocab_path, const std::string& direction,
             const std::string& checkpoint_sel, std::uint64_t seed, bool exhaustive_random,
             const std::string& out_dir) {
  if (direction != "fwd" && direction != "bwd" && direction != "both") {
    throw ValidationError("eval: direction must be fwd, bwd, or both");
  }
  const RunConfig config = run_config_of(run_dir);
  const UnigramVocabulary vocab = UnigramVocabulary::load(vocab_path);
  std::int64_t step = -1;
  const std::string ckpt_path = select_checkpoint(run_dir, checkpoint_sel, config.encoder, &step);
  const CheckpointRecord record = load_checkpoint(ckpt_path, config.encoder);
  const ParallelEvalSet eval_fwd = load_eval_arg(eval_path);
  fs::create_directories(out_dir);

  SimilarityOptions sim_options;
  sim_options.seed = seed;
  sim_options.exhaustive_random = exhaustive_random;

  std::vector<std::string> outputs;
  const auto run_direction = [&](const ParallelEvalSet& eval, const std::string& tag) {
    const EncodedSet enc_s = encode_set(record.params, config.encoder, vocab, eval.s, "s", step);
    const EncodedSet enc_t = encode_set(record.params, config.encoder, vocab, eval.t, "t", step);
    const EncodedSet enc_rs =
        encode_set(record.params, config.encoder, vocab, eval.r_s, "r_s", step);
    const EncodedSet enc_rt =
        encode_set(record.params, config.encoder, vocab, eval.r_t, "r_t", step);
    SimilarityReport sim = four_similarities(enc_s, enc_t, enc_rs, enc_rt, sim_options);
    sim.direction = eval.direction;
    RetrievalReport retrieval = retrieval_topk(enc_s.vectors, enc_t.vectors);
    retrieval.direction = eval.direction;
    write_file(out_dir + "/similarity_" + tag + ".json", similarity_summary_json(sim));
    write_file(out_dir + "/pairs_" + tag + ".csv", pairs_csv(sim));
    write_file(out_dir + "/histogram_" + tag + ".csv", histogram_csv(sim));
    write_file(out_dir + "/retrieval_" + tag + ".json", retrieval_json(retrieval));
    outputs.push_back("similarity_" + tag + ".json");
    outputs.push_back("pairs_" + tag + ".csv");
    outputs.push_back("histogram_" + tag + ".csv");
    outputs.push_back("retrieval_" + tag + ".json");
  };
  if (direction == "fwd" || direction == "both") run_direction(eval_fwd, "fwd");
  if (direction == "bwd" || direction == "both") run_direction(eval_fwd.swapped(), "bwd");

  write_manifest(out_dir, "eval",
                 {{"run", run_dir},
                  {"eval", eval_path},
                  {"vocab", vocab_path},
                  {"direction", direction},
                  {"checkpoint", checkpoint_sel},
                  {"exhaustive_random", exhaustive_random ? "1" : "0"},
                  {"out", out_dir}},
                 seed,
                 [&] {
                   std::vector<std::string> inputs = eval_input_files(eval_path);
                   inputs.push_back(vocab_path);
                   inputs.push_back(ckpt_path);
                   return inputs;
                 }(),
                 outputs);
  return kExitOk;
}

int cmd_dynamics(const std::string& run_dir, const std::string& eval_path,
                 const std::string& vocab_path, const std::string& direction, std::uint64_t seed,
                 const std::string& out_dir) {
  if (direction != "fwd" && direction != "bwd") {
    throw ValidationError("dynamics: direction must be fwd or bwd");
  }
  const RunConfig config = run_config_of(run_dir);
  const UnigramVocabulary vocab = UnigramVocabulary::load(vocab_path);
  ParallelEvalSet eval = load_eval_arg(eval_path);
  if (direction == "bwd") eval = eval.swapped();

  const std::string ckpt_dir = run_dir + "/checkpoints";
  if (!fs::is_directory(ckpt_dir)) throw IoError("no checkpoints directory in " + run_dir);
  std::vector<std::pair<std::int64_t, std::string>> found;
  for (const auto& entry : fs::directory_iterator(ckpt_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("step-", 0) != 0 || entry.path().extension() != ".ckpt") continue;
    found.emplace_back(std::stoll(name.substr(5, name.size() - 5 - 5)), entry.path().string());
  }
  std::sort(found.begin(), found.end());
  std::vector<CheckpointRecord> records;
  records.reserve(found.size());
  std::vector<std::pair<std::int64_t, const EncoderParameters<float>*>> series;
  for (const auto& [step, path] : found) {
    records.push_back(load_checkpoint(path, config.encoder));
    series.emplace_back(step, &records.back().params);
  }
  SimilarityOptions sim_options;
  sim_options.seed = seed;
  const std::vector<DynamicsRow> rows = dynamics(series, eval, config.encoder, vocab, sim_options);

  std::string csv = "step";
  for (int type = 0; type < kNumSimilarityTypes; ++type) {
    const std::string name = kSimilarityNames[type];
    csv += "," + name + "_matched," + name + "_random," + name + "_gap";
  }
  csv.push_back('\n');
  for (const DynamicsRow& row : rows) {
    csv += std::to_string(row.step);
    for (int type = 0; type < kNumSimilarityTypes; ++type) {
      csv += "," + format_double(row.matched_mean[static_cast<std::size_t>(type)]) + "," +
             format_double(row.random_mean[static_cast<std::size_t>(type)]) + "," +
             format_double(row.gap[static_cast<std::size_t>(type)]);
    }
    csv.push_back('\n');
  }
  fs::create_directories(out_dir);
  write_file(out_dir + "/dynamics.csv", csv);
  write_manifest(out_dir, "dynamics",
                 {{"run", run_dir},
                  {"eval", eval_path},
                  {"vocab", vocab_path},
                  {"direction", direction},
                  {"out", out_dir}},
                 seed,
                 [&] {
                   std::vector<std::string> inputs = eval_input_files(eval_path);
                   inputs.push_back(vocab_path);
                   return inputs;
                 }(),
                 {"dynamics.csv"});
  return kExitOk;
}

int cmd_probe(const std::string& run_dir, const std::string& probe_path,
              const std::string& vocab_path, const std::string& train_lang,
              const std::string& checkpoint_sel, const std::string& out_dir) {
  if (train_lang != "A" && train_lang != "B") {
    throw ValidationError("probe: train-lang must be A or B");
  }
  const RunConfig config = run_config_of(run_dir);
  const UnigramVocabulary vocab = UnigramVocabulary::load(vocab_path);
  const std::string ckpt_path = select_checkpoint(run_dir, checkpoint_sel, config.encoder);
  const CheckpointRecord record = load_checkpoint(ckpt_path, config.encoder);

  // probe.tsv: text <TAB> lang <TAB> label, with a header line.
  std::vector<std::string> texts_train_lang, texts_other;
  std::vector<int> labels_train_lang, labels_other;
  std::size_t line_no = 0;
  for (const std::string& raw : read_lines(probe_path)) {
    ++line_no;
    if (line_no == 1 && raw.rfind("text\t", 0) == 0) continue;
    if (trim(raw).empty()) continue;
    const std::size_t tab1 = raw.find('\t');
    const std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : raw.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw ValidationError("probe file line " + std::to_string(line_no) +
                            ": expected text<TAB>lang<TAB>label");
    }
    const std::string text = nfc_compose(trim(raw.substr(0, tab1)));
    const std::string lang(trim(raw.substr(tab1 + 1, tab2 - tab1 - 1)));
    int label;
    try {
      label = std::stoi(raw.substr(tab2 + 1));
    } catch (const std::exception&) {
      throw ValidationError("probe file line " + std::to_string(line_no) + ": bad label");
    }
    if (label < 0) {
      throw ValidationError("probe file line " + std::to_string(line_no) + ": bad label");
    }
    if (lang == train_lang) {
      texts_train_lang.push_back(text);
      labels_train_lang.push_back(label);
    } else {
      texts_other.push_back(text);
      labels_other.push_back(label);
    }
  }
  if (texts_train_lang.empty() || texts_other.empty()) {
    throw ValidationError("probe: need labeled sentences in both languages");
  }
  if (texts_train_lang.size() != texts_other.size()) {
    throw ValidationError("probe: the two languages must have equally many labeled sentences");
  }

  // Zero-shot split: fit on the first 80% of the training language, evaluate
  // in-language on its last 20% and crosslingually on the same held-out
  // indices of the other language.
  const std::size_t n = texts_train_lang.size();
  const std::size_t split = std::max<std::size_t>(1, (n * 8) / 10);
  if (split == n) throw ValidationError("probe: too few sentences to hold out an eval split");
  ProbeTask task;
  task.train_texts.assign(texts_train_lang.begin(),
                          texts_train_lang.begin() + static_cast<std::ptrdiff_t>(split));
  task.train_labels.assign(labels_train_lang.begin(),
                           labels_train_lang.begin() + static_cast<std::ptrdiff_t>(split));
  task.in_language_texts.assign(texts_train_lang.begin() + static_cast<std::ptrdiff_t>(split),
                                texts_train_lang.end());
  task.in_language_labels.assign(labels_train_lang.begin() + static_cast<std::ptrdiff_t>(split),
                                 labels_train_lang.end());
  task.crosslingual_texts.assign(texts_other.begin() + static_cast<std::ptrdiff_t>(split),
                                 texts_other.end());
  task.crosslingual_labels.assign(labels_other.begin() + static_cast<std::ptrdiff_t>(split),
                                  labels_other.end());

  const ProbeReport report = transfer_probe(record.params, config.encoder, vocab, task);
  nlohmann::ordered_json j;
  j["train_lang"] = train_lang;
  j["train_accuracy"] = report.train_accuracy;
  j["in_language_accuracy"] = report.in_language_accuracy;
  j["crosslingual_accuracy"] = report.crosslingual_accuracy;
  j["in_language_majority_baseline"] = report.in_language_majority;
  j["crosslingual_majority_baseline"] = report.crosslingual_majority;
  fs::create_directories(out_dir);
  write_file(out_dir + "/probe.json", j.dump(2) + "\n");
  write_manifest(out_dir, "probe",
                 {{"run", run_dir},
                  {"probe", probe_path},
                  {"vocab", vocab_path},
                  {"train_lang", train_lang},
                  {"checkpoint", checkpoint_sel},
                  {"out", out_dir}},
                 0, {probe_path, vocab_path, ckpt_path}, {"probe.json"});
  return kExitOk;
}

}  // namespace xlit
