// Command-line entry point for the transliteration alignment laboratory.
//
// Subcommands: gen-synth, transliterate, train-tokenizer, overlap, train,
// eval, dynamics, probe. Exit codes: 0 success, 2 validation error, 3 I/O
// error, 4 numerical abort.

#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xlit/cli_commands.hpp"
#include "xlit/errors.hpp"

namespace {

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const xlit::EncodingError& e) {
    std::cerr << "error [encoding]: " << e.what() << "\n";
    return xlit::kExitValidation;
  } catch (const xlit::ValidationError& e) {
    std::cerr << "error [validation]: " << e.what() << "\n";
    return xlit::kExitValidation;
  } catch (const xlit::IoError& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return xlit::kExitIo;
  } catch (const xlit::NumericalError& e) {
    std::cerr << "error [numerical]: " << e.what() << "\n";
    return xlit::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return xlit::kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale laboratory for transliteration-augmented pretraining and "
               "crosslingual sentence alignment analysis"};
  app.require_subcommand(1);

  int exit_code = xlit::kExitOk;

  // gen-synth
  std::string gs_spec, gs_out;
  auto* gen_synth = app.add_subcommand(
      "gen-synth",
      "Generate a synthetic related-language pair with held-out parallel sentences. The spec is "
      "a JSON file with fields lexicon_size, sentence_count, parallel_count, cognate_rate, "
      "perturbation_rate, seed. Outputs UTF-8 corpus files (one sentence per line, LF), "
      "eval.tsv (columns s, t, r_s, r_t), probe.tsv (text, lang, label), and the inverse-cipher "
      "rule table.");
  gen_synth->add_option("--spec", gs_spec, "synthetic pair spec JSON")->required();
  gen_synth->add_option("--out", gs_out, "output directory")->required();
  gen_synth->callback(
      [&] { exit_code = run_guarded([&] { return xlit::cmd_gen_synth(gs_spec, gs_out); }); });

  // transliterate
  std::string tr_in, tr_rules, tr_out, tr_fallback = "pass";
  auto* translit = app.add_subcommand(
      "transliterate",
      "Apply a rule table line-by-line. Rule files are UTF-8 TSV: source<TAB>target, '#' "
      "comments, LF endings; matching is longest-source-first.");
  translit->add_option("--in", tr_in, "input text file, one sentence per line")->required();
  translit->add_option("--rules", tr_rules, "rule table TSV")->required();
  translit->add_option("--out", tr_out, "output file")->required();
  translit->add_option("--fallback", tr_fallback, "unmapped characters: pass | drop");
  translit->callback([&] {
    exit_code =
        run_guarded([&] { return xlit::cmd_transliterate(tr_in, tr_rules, tr_out, tr_fallback); });
  });

  // train-tokenizer
  std::vector<std::string> tt_corpora;
  std::size_t tt_vocab_size = 2000;
  std::uint64_t tt_seed = 1;
  std::string tt_out;
  bool tt_raw = false;
  auto* train_tok = app.add_subcommand(
      "train-tokenizer",
      "Train the unigram subword vocabulary on original-script corpora. Writes a JSON "
      "vocabulary {pieces: [[piece, log_prob]...], specials: {...}}.");
  train_tok->add_option("--corpus", tt_corpora, "corpus file(s), one sentence per line")
      ->required()
      ->expected(-1);
  train_tok->add_option("--vocab-size", tt_vocab_size, "total size including special tokens");
  train_tok->add_option("--seed", tt_seed, "RNG seed (recorded; the trainer is deterministic)");
  train_tok->add_option("--out", tt_out, "output vocabulary JSON")->required();
  train_tok->add_flag("--raw", tt_raw, "treat each line as one unit (no word marker)");
  train_tok->callback([&] {
    exit_code = run_guarded([&] {
      return xlit::cmd_train_tokenizer(tt_corpora, tt_vocab_size, tt_seed, tt_out, !tt_raw);
    });
  });

  // overlap
  std::string ov_a, ov_b, ov_vocab, ov_out;
  std::size_t ov_sample = 10000;
  std::uint64_t ov_seed = 1;
  auto* overlap = app.add_subcommand(
      "overlap", "Lexical overlap (shared token types / total token types) between two corpora "
                 "under one vocabulary.");
  overlap->add_option("--corpus-a", ov_a)->required();
  overlap->add_option("--corpus-b", ov_b)->required();
  overlap->add_option("--vocab", ov_vocab, "vocabulary JSON")->required();
  overlap->add_option("--sample", ov_sample, "sentences sampled per side");
  overlap->add_option("--seed", ov_seed);
  overlap->add_option("--out", ov_out, "optional JSON report path");
  overlap->callback([&] {
    exit_code = run_guarded(
        [&] { return xlit::cmd_overlap(ov_a, ov_b, ov_vocab, ov_sample, ov_seed, ov_out); });
  });

  // train
  std::string t_config, t_data, t_vocab, t_out, t_resume;
  auto* train = app.add_subcommand(
      "train",
      "Train one model variant (1-5). --data expects a_orig.txt, a_latn.txt, b_orig.txt, "
      "b_latn.txt, eval.tsv as produced by gen-synth. Writes config.json, metrics.csv, and "
      "checkpoints/step-N.ckpt into --out.");
  train->add_option("--config", t_config, "run config JSON (see README)")->required();
  train->add_option("--data", t_data, "data directory")->required();
  train->add_option("--vocab", t_vocab, "vocabulary JSON")->required();
  train->add_option("--out", t_out, "run directory")->required();
  train->add_option("--resume", t_resume, "checkpoint file to resume from");
  train->callback([&] {
    exit_code =
        run_guarded([&] { return xlit::cmd_train(t_config, t_data, t_vocab, t_out, t_resume); });
  });

  // eval
  std::string e_run, e_eval, e_vocab, e_direction = "both", e_ckpt = "best", e_out;
  std::uint64_t e_seed = 1;
  bool e_exhaustive = false;
  auto* eval = app.add_subcommand(
      "eval", "Similarity and retrieval reports for one checkpoint: retrieval_*.json, "
              "similarity_*.json, pairs_*.csv, histogram_*.csv (bin_left, count_matched, "
              "count_random).");
  eval->add_option("--run", e_run, "run directory")->required();
  eval->add_option("--eval", e_eval, "eval TSV (s, t, r_s, r_t)")->required();
  eval->add_option("--vocab", e_vocab)->required();
  eval->add_option("--direction", e_direction, "fwd | bwd | both");
  eval->add_option("--checkpoint", e_ckpt, "best | last | <step>");
  eval->add_option("--seed", e_seed, "seed for the random-pair derangement");
  eval->add_flag("--exhaustive-random", e_exhaustive,
                 "average all non-matched pairs instead of a derangement");
  eval->add_option("--out", e_out, "output directory")->required();
  eval->callback([&] {
    exit_code = run_guarded([&] {
      return xlit::cmd_eval(e_run, e_eval, e_vocab, e_direction, e_ckpt, e_seed, e_exhaustive,
                            e_out);
    });
  });

  // dynamics
  std::string d_run, d_eval, d_vocab, d_direction = "fwd", d_out;
  std::uint64_t d_seed = 1;
  auto* dynamics = app.add_subcommand(
      "dynamics",
      "Similarity time series over every checkpoint of a run; writes dynamics.csv.");
  dynamics->add_option("--run", d_run, "run directory")->required();
  dynamics->add_option("--eval", d_eval, "eval TSV")->required();
  dynamics->add_option("--vocab", d_vocab)->required();
  dynamics->add_option("--direction", d_direction, "fwd | bwd");
  dynamics->add_option("--seed", d_seed);
  dynamics->add_option("--out", d_out, "output directory")->required();
  dynamics->callback([&] {
    exit_code = run_guarded([&] {
      return xlit::cmd_dynamics(d_run, d_eval, d_vocab, d_direction, d_seed, d_out);
    });
  });

  // probe
  std::string p_run, p_probe, p_vocab, p_lang = "A", p_ckpt = "best", p_out;
  auto* probe = app.add_subcommand(
      "probe", "Frozen-encoder linear transfer probe: fits a softmax head on one language's "
               "labeled sentences and reports in-language and crosslingual accuracy.");
  probe->add_option("--run", p_run, "run directory")->required();
  probe->add_option("--probe", p_probe, "probe TSV (text, lang, label)")->required();
  probe->add_option("--vocab", p_vocab)->required();
  probe->add_option("--train-lang", p_lang, "A | B");
  probe->add_option("--checkpoint", p_ckpt, "best | last | <step>");
  probe->add_option("--out", p_out, "output directory")->required();
  probe->callback([&] {
    exit_code = run_guarded(
        [&] { return xlit::cmd_probe(p_run, p_probe, p_vocab, p_lang, p_ckpt, p_out); });
  });

  CLI11_PARSE(app, argc, argv);
  return exit_code;
}
