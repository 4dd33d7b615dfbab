#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xlit/aligneval.hpp"
#include "xlit/corpus.hpp"
#include "xlit/encoder.hpp"
#include "xlit/objectives.hpp"
#include "xlit/tokenizer.hpp"

namespace xlit {

struct TrainConfig {
  int variant = 2;  // 1..5
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.01;
  int batch_pairs = 32;  // sentence pairs per micro-batch
  int grad_accum = 1;    // micro-batches per optimizer step
  std::int64_t max_steps = 10000;
  std::int64_t checkpoint_every = 500;
  int early_stop_patience = 0;  // checkpoints without improvement; 0 disables
  double mask_rate = 0.15;
  std::uint64_t seed = 1;

  double tcm_temperature = 0.1;
  bool tcm_symmetric = true;
  bool mask_bert_style = false;
  double max_grad_norm = 0.0;  // 0 disables clipping
  std::int64_t warmup_steps = 0;

  void validate() const;
};

/// Train + encoder configuration bundle; the on-disk config.json format.
struct RunConfig {
  TrainConfig train;
  EncoderConfig encoder;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

template <class S>
struct AdamWState {
  EncoderParameters<S> m;
  EncoderParameters<S> v;
  std::int64_t step = 0;
};

/// Decoupled-weight-decay AdamW with bias correction. Throws NumericalError
/// naming the tensor when a gradient is non-finite. lr_scale multiplies the
/// learning rate (warmup).
template <class S>
void adamw_step(EncoderParameters<S>& params, const EncoderParameters<S>& grads,
                AdamWState<S>& state, const TrainConfig& config, double lr_scale = 1.0);

struct TokenizedPair {
  std::vector<int> original;         // piece ids, no CLS/SEP
  std::vector<int> transliteration;  // piece ids, no CLS/SEP
};

struct TrainData {
  std::vector<TokenizedPair> pairs;  // both languages, index-aligned pairs
};

/// Segments both corpora; pair i holds original i and transliteration i.
TrainData tokenize_pairs(const PairedCorpus& corpus_a, const PairedCorpus& corpus_b,
                         const UnigramVocabulary& vocab);

/// Pair visit order for one epoch; a function of (n, seed, epoch) only, so
/// every variant sees the same order and executes the same step count.
std::vector<std::size_t> epoch_order(std::size_t n_pairs, std::uint64_t seed, std::int64_t epoch);

/// Training instances for one micro-batch. Variant 1 pairs each original
/// sentence with itself; variants 2-5 pair it with its transliteration.
std::vector<TokenizedPair> build_instances(const TrainData& data, int variant,
                                           const std::vector<std::size_t>& indices);

std::int64_t steps_per_epoch(std::size_t n_pairs, const TrainConfig& config);

struct CheckpointRecord {
  std::int64_t step = 0;
  EncoderParameters<float> params;
  AdamWState<float> opt;
  std::string rng_state;
  double val_metric = 0.0;  // mean of top-1/5/10 over both directions
  std::map<std::string, double> val_details;
  // Early-stopping state at this checkpoint, so a resumed run stops exactly
  // where the uninterrupted one would.
  double best_val_so_far = -1.0;
  int stale_checkpoints = 0;
};

void save_checkpoint(const std::string& path, const CheckpointRecord& record,
                     const EncoderConfig& config);
CheckpointRecord load_checkpoint(const std::string& path, const EncoderConfig& config);

struct StepMetrics {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double loss = 0.0;
  std::optional<double> loss_mlm, loss_tcm, loss_tlm;
  std::optional<double> val_metric;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);

struct TrainOutput {
  std::vector<CheckpointRecord> checkpoints;  // step 0 first
  std::size_t best_index = 0;                 // maximum validation metric
  std::vector<StepMetrics> metrics;
  std::int64_t steps_per_epoch = 0;
  std::int64_t total_steps = 0;
};

/// Runs the training loop for one model variant: paired-instance batches,
/// summed objective per variant, AdamW updates, a checkpoint with validation
/// retrieval every checkpoint_every steps (plus step 0 and the final step),
/// and optional early stopping on the validation metric. When run_dir is
/// non-empty, checkpoints/step-N.ckpt and metrics.csv are written there.
/// Resuming from a checkpoint reproduces the uninterrupted run bit-for-bit.
TrainOutput train(const RunConfig& config, const TrainData& data, const UnigramVocabulary& vocab,
                  const ParallelEvalSet& validation, const std::string& run_dir = "",
                  const std::string& resume_checkpoint = "");

}  // namespace xlit
