#include "xlit/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xlit/errors.hpp"
#include "xlit/io_util.hpp"
#include "xlit/rng.hpp"

namespace xlit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

void TrainConfig::validate() const {
  if (variant < 1 || variant > 5) throw ValidationError("train config: variant must be in 1..5");
  if (!(lr > 0.0)) throw ValidationError("train config: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ValidationError("train config: betas must be in [0,1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("train config: epsilon must be positive");
  if (batch_pairs < 2) throw ValidationError("train config: batch_pairs must be at least 2");
  if (grad_accum < 1) throw ValidationError("train config: grad_accum must be at least 1");
  if (max_steps < 0) throw ValidationError("train config: max_steps must be non-negative");
  if (checkpoint_every < 1) throw ValidationError("train config: checkpoint_every must be at least 1");
  if (mask_rate <= 0.0 || mask_rate >= 1.0) {
    throw ValidationError("train config: mask_rate must be in (0,1)");
  }
  if (!(tcm_temperature > 0.0)) throw ValidationError("train config: tcm_temperature must be positive");
}

namespace {

nlohmann::ordered_json encoder_to_json(const EncoderConfig& e) {
  return {{"num_layers", e.num_layers},     {"hidden_dim", e.hidden_dim},
          {"num_heads", e.num_heads},       {"ffn_dim", e.ffn_dim},
          {"max_seq_len", e.max_seq_len},   {"vocab_size", e.vocab_size},
          {"pooling_layer", e.pooling_layer}, {"dropout_rate", e.dropout_rate},
          {"tie_mlm_head", e.tie_mlm_head}};
}

EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig e;
  e.num_layers = j.at("num_layers").get<int>();
  e.hidden_dim = j.at("hidden_dim").get<int>();
  e.num_heads = j.at("num_heads").get<int>();
  e.ffn_dim = j.at("ffn_dim").get<int>();
  e.max_seq_len = j.at("max_seq_len").get<int>();
  e.vocab_size = j.at("vocab_size").get<int>();
  e.pooling_layer = j.at("pooling_layer").get<int>();
  e.dropout_rate = j.value("dropout_rate", 0.1);
  e.tie_mlm_head = j.value("tie_mlm_head", true);
  return e;
}

}  // namespace

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = train.variant;
  j["lr"] = train.lr;
  j["betas"] = {train.beta1, train.beta2};
  j["epsilon"] = train.epsilon;
  j["weight_decay"] = train.weight_decay;
  j["batch_pairs"] = train.batch_pairs;
  j["grad_accum"] = train.grad_accum;
  j["max_steps"] = train.max_steps;
  j["checkpoint_every"] = train.checkpoint_every;
  j["early_stop_patience"] = train.early_stop_patience;
  j["mask_rate"] = train.mask_rate;
  j["seed"] = train.seed;
  j["tcm_temperature"] = train.tcm_temperature;
  j["tcm_symmetric"] = train.tcm_symmetric;
  j["mask_bert_style"] = train.mask_bert_style;
  j["max_grad_norm"] = train.max_grad_norm;
  j["warmup_steps"] = train.warmup_steps;
  j["encoder"] = encoder_to_json(encoder);
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config JSON parse error: ") + e.what());
  }
  RunConfig config;
  try {
    config.train.variant = j.at("variant").get<int>();
    config.train.lr = j.value("lr", config.train.lr);
    if (j.contains("betas")) {
      config.train.beta1 = j["betas"].at(0).get<double>();
      config.train.beta2 = j["betas"].at(1).get<double>();
    }
    config.train.epsilon = j.value("epsilon", config.train.epsilon);
    config.train.weight_decay = j.value("weight_decay", config.train.weight_decay);
    config.train.batch_pairs = j.value("batch_pairs", config.train.batch_pairs);
    config.train.grad_accum = j.value("grad_accum", config.train.grad_accum);
    config.train.max_steps = j.value("max_steps", config.train.max_steps);
    config.train.checkpoint_every = j.value("checkpoint_every", config.train.checkpoint_every);
    config.train.early_stop_patience = j.value("early_stop_patience", config.train.early_stop_patience);
    config.train.mask_rate = j.value("mask_rate", config.train.mask_rate);
    config.train.seed = j.value("seed", config.train.seed);
    config.train.tcm_temperature = j.value("tcm_temperature", config.train.tcm_temperature);
    config.train.tcm_symmetric = j.value("tcm_symmetric", config.train.tcm_symmetric);
    config.train.mask_bert_style = j.value("mask_bert_style", config.train.mask_bert_style);
    config.train.max_grad_norm = j.value("max_grad_norm", config.train.max_grad_norm);
    config.train.warmup_steps = j.value("warmup_steps", config.train.warmup_steps);
    config.encoder = encoder_from_json(j.at("encoder"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config JSON: missing or malformed field: ") + e.what());
  }
  config.train.validate();
  config.encoder.validate();
  return config;
}

template <class S>
void adamw_step(EncoderParameters<S>& params, const EncoderParameters<S>& grads,
                AdamWState<S>& state, const TrainConfig& config, double lr_scale) {
  state.step += 1;
  const double lr = config.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const S beta1 = static_cast<S>(config.beta1);
  const S beta2 = static_cast<S>(config.beta2);
  const S one_minus_b1 = static_cast<S>(1.0 - config.beta1);
  const S one_minus_b2 = static_cast<S>(1.0 - config.beta2);
  const S eps = static_cast<S>(config.epsilon);
  const S step_size = static_cast<S>(lr / bc1);
  const S inv_sqrt_bc2 = static_cast<S>(1.0 / std::sqrt(bc2));
  const S decay = static_cast<S>(lr * config.weight_decay);

  std::vector<std::pair<std::string, const Matrix<S>*>> grad_list;
  for_each_tensor(grads, [&](const std::string& name, const Matrix<S>& g) {
    grad_list.emplace_back(name, &g);
  });
  std::vector<Matrix<S>*> m_list, v_list, p_list;
  for_each_tensor(state.m, [&](const std::string&, Matrix<S>& t) { m_list.push_back(&t); });
  for_each_tensor(state.v, [&](const std::string&, Matrix<S>& t) { v_list.push_back(&t); });
  for_each_tensor(params, [&](const std::string&, Matrix<S>& t) { p_list.push_back(&t); });

  for (std::size_t i = 0; i < grad_list.size(); ++i) {
    const Matrix<S>& g = *grad_list[i].second;
    if (g.size() == 0) continue;
    if (!g.allFinite()) {
      throw NumericalError("adamw_step: non-finite gradient in tensor '" + grad_list[i].first + "'");
    }
    Matrix<S>& m = *m_list[i];
    Matrix<S>& v = *v_list[i];
    Matrix<S>& p = *p_list[i];
    m = beta1 * m + one_minus_b1 * g;
    v = beta2 * v + one_minus_b2 * g.cwiseProduct(g);
    // p -= lr * mhat / (sqrt(vhat) + eps) + lr * weight_decay * p
    p.array() -= step_size * m.array() /
                 ((v.array().max(S(0)).sqrt() * inv_sqrt_bc2) + eps);
    if (config.weight_decay != 0.0) p -= decay * p;
  }
}

TrainData tokenize_pairs(const PairedCorpus& corpus_a, const PairedCorpus& corpus_b,
                         const UnigramVocabulary& vocab) {
  TrainData data;
  const auto add = [&](const PairedCorpus& corpus) {
    if (corpus.originals.size() != corpus.transliterations.size()) {
      throw ValidationError("tokenize_pairs: corpus lists must be index-aligned");
    }
    for (std::size_t i = 0; i < corpus.originals.size(); ++i) {
      TokenizedPair pair;
      pair.original = segment(corpus.originals[i].text, vocab);
      pair.transliteration = segment(corpus.transliterations[i].text, vocab);
      if (pair.original.empty() || pair.transliteration.empty()) continue;
      data.pairs.push_back(std::move(pair));
    }
  };
  add(corpus_a);
  add(corpus_b);
  if (data.pairs.empty()) throw ValidationError("tokenize_pairs: no usable sentence pairs");
  return data;
}

std::vector<std::size_t> epoch_order(std::size_t n_pairs, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0xE90C0 + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

std::vector<TokenizedPair> build_instances(const TrainData& data, int variant,
                                           const std::vector<std::size_t>& indices) {
  std::vector<TokenizedPair> instances;
  instances.reserve(indices.size());
  for (const std::size_t idx : indices) {
    const TokenizedPair& pair = data.pairs[idx];
    instances.push_back({pair.original, variant == 1 ? pair.original : pair.transliteration});
  }
  return instances;
}

std::int64_t steps_per_epoch(std::size_t n_pairs, const TrainConfig& config) {
  const auto micro = static_cast<std::int64_t>(
      (n_pairs + static_cast<std::size_t>(config.batch_pairs) - 1) /
      static_cast<std::size_t>(config.batch_pairs));
  return (micro + config.grad_accum - 1) / config.grad_accum;
}

namespace {

constexpr char kCheckpointMagic[] = "XLITCKPT1\n";

void append_tensor_meta(nlohmann::ordered_json& list, const std::string& name,
                        const MatrixF& tensor) {
  list.push_back({{"name", name}, {"rows", tensor.rows()}, {"cols", tensor.cols()}});
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointRecord& record,
                     const EncoderConfig& config) {
  nlohmann::ordered_json header;
  header["step"] = record.step;
  header["adam_step"] = record.opt.step;
  header["rng_state"] = record.rng_state;
  header["val_metric"] = record.val_metric;
  header["val_details"] = record.val_details;
  header["best_val_so_far"] = record.best_val_so_far;
  header["stale_checkpoints"] = record.stale_checkpoints;
  header["dtype"] = "f32";
  header["config"] = encoder_to_json(config);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for_each_tensor(record.params, [&](const std::string& name, const MatrixF& t) {
    append_tensor_meta(tensors, "param." + name, t);
  });
  for_each_tensor(record.opt.m, [&](const std::string& name, const MatrixF& t) {
    append_tensor_meta(tensors, "adam_m." + name, t);
  });
  for_each_tensor(record.opt.v, [&](const std::string& name, const MatrixF& t) {
    append_tensor_meta(tensors, "adam_v." + name, t);
  });
  header["tensors"] = tensors;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  const std::uint64_t len = header_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  const auto write_tensors = [&](const EncoderParameters<float>& p) {
    for_each_tensor(p, [&](const std::string&, const MatrixF& t) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.size())));
    });
  };
  write_tensors(record.params);
  write_tensors(record.opt.m);
  write_tensors(record.opt.v);
  if (!out) throw IoError("write failure on checkpoint: " + path);
}

CheckpointRecord load_checkpoint(const std::string& path, const EncoderConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ValidationError("checkpoint '" + path + "': bad magic");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint '" + path + "': truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint '" + path + "': bad header: " + e.what());
  }
  const EncoderConfig stored = encoder_from_json(header.at("config"));
  const auto mismatch = [&](const std::string& field) {
    throw ValidationError("checkpoint '" + path + "': config mismatch on " + field);
  };
  if (stored.num_layers != config.num_layers) mismatch("num_layers");
  if (stored.hidden_dim != config.hidden_dim) mismatch("hidden_dim");
  if (stored.num_heads != config.num_heads) mismatch("num_heads");
  if (stored.ffn_dim != config.ffn_dim) mismatch("ffn_dim");
  if (stored.max_seq_len != config.max_seq_len) mismatch("max_seq_len");
  if (stored.vocab_size != config.vocab_size) mismatch("vocab_size");
  if (stored.tie_mlm_head != config.tie_mlm_head) mismatch("tie_mlm_head");

  CheckpointRecord record;
  record.step = header.at("step").get<std::int64_t>();
  record.rng_state = header.at("rng_state").get<std::string>();
  record.val_metric = header.at("val_metric").get<double>();
  record.best_val_so_far = header.value("best_val_so_far", record.val_metric);
  record.stale_checkpoints = header.value("stale_checkpoints", 0);
  if (header.contains("val_details")) {
    for (const auto& [key, value] : header.at("val_details").items()) {
      record.val_details[key] = value.get<double>();
    }
  }
  record.params = init_params<float>(config, 0);
  record.opt.m = zeros_like(record.params);
  record.opt.v = zeros_like(record.params);
  record.opt.step = header.at("adam_step").get<std::int64_t>();

  // Validate declared shapes against the config-derived structure.
  std::vector<std::pair<std::string, MatrixF*>> expected;
  for_each_tensor(record.params, [&](const std::string& name, MatrixF& t) {
    expected.emplace_back("param." + name, &t);
  });
  for_each_tensor(record.opt.m, [&](const std::string& name, MatrixF& t) {
    expected.emplace_back("adam_m." + name, &t);
  });
  for_each_tensor(record.opt.v, [&](const std::string& name, MatrixF& t) {
    expected.emplace_back("adam_v." + name, &t);
  });
  const auto& tensors = header.at("tensors");
  if (tensors.size() != expected.size()) {
    throw ValidationError("checkpoint '" + path + "': tensor count mismatch");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& meta = tensors[i];
    if (meta.at("name").get<std::string>() != expected[i].first ||
        meta.at("rows").get<Eigen::Index>() != expected[i].second->rows() ||
        meta.at("cols").get<Eigen::Index>() != expected[i].second->cols()) {
      throw ValidationError("checkpoint '" + path + "': tensor mismatch at '" +
                            expected[i].first + "'");
    }
    in.read(reinterpret_cast<char*>(expected[i].second->data()),
            static_cast<std::streamsize>(sizeof(float) *
                                         static_cast<std::size_t>(expected[i].second->size())));
  }
  if (!in) throw IoError("checkpoint '" + path + "': truncated payload");
  return record;
}

std::string metrics_csv_header() {
  return "step,epoch,loss,loss_mlm,loss_tcm,loss_tlm,val_metric\n";
}

std::string metrics_csv_row(const StepMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return std::to_string(m.step) + "," + std::to_string(m.epoch) + "," + format_double(m.loss) +
         "," + opt(m.loss_mlm) + "," + opt(m.loss_tcm) + "," + opt(m.loss_tlm) + "," +
         opt(m.val_metric) + "\n";
}

namespace {

struct ValidationRows {
  std::vector<std::vector<int>> s_rows;
  std::vector<std::vector<int>> t_rows;
};

MatrixD encode_rows(const EncoderParameters<float>& params, const EncoderConfig& config,
                    const std::vector<std::vector<int>>& rows) {
  MatrixD out(static_cast<Eigen::Index>(rows.size()), config.hidden_dim);
  constexpr std::size_t kBatchRows = 64;
  std::size_t emitted = 0;
  for (std::size_t begin = 0; begin < rows.size(); begin += kBatchRows) {
    const std::size_t end = std::min(rows.size(), begin + kBatchRows);
    std::vector<std::vector<int>> chunk(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                        rows.begin() + static_cast<std::ptrdiff_t>(end));
    const TokenBatch batch = make_token_batch(chunk);
    const ForwardCache<float> cache =
        forward_cache(params, config, batch, LogitsMode::kNone, nullptr, false, nullptr);
    const MatrixF pooled = cache.pooled(config);
    for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
      out.row(static_cast<Eigen::Index>(emitted++)) = pooled.row(i).cast<double>();
    }
  }
  return out;
}

double validation_metric(const EncoderParameters<float>& params, const EncoderConfig& config,
                         const ValidationRows& rows, std::map<std::string, double>& details) {
  const MatrixD enc_s = encode_rows(params, config, rows.s_rows);
  const MatrixD enc_t = encode_rows(params, config, rows.t_rows);
  const RetrievalReport fwd = retrieval_topk(enc_s, enc_t);
  const RetrievalReport bwd = retrieval_topk(enc_t, enc_s);
  double total = 0.0;
  int count = 0;
  for (const auto& [k, acc] : fwd.accuracy) {
    details["top" + std::to_string(k) + "_fwd"] = acc;
    total += acc;
    ++count;
  }
  for (const auto& [k, acc] : bwd.accuracy) {
    details["top" + std::to_string(k) + "_bwd"] = acc;
    total += acc;
    ++count;
  }
  return total / static_cast<double>(count);
}

}  // namespace

TrainOutput train(const RunConfig& config, const TrainData& data, const UnigramVocabulary& vocab,
                  const ParallelEvalSet& validation, const std::string& run_dir,
                  const std::string& resume_checkpoint) {
  config.train.validate();
  config.encoder.validate();
  validation.validate();
  if (data.pairs.empty()) throw ValidationError("train: empty training data");
  const TrainConfig& tc = config.train;
  const EncoderConfig& ec = config.encoder;

  ValidationRows val_rows;
  for (const std::string& text : validation.s) {
    val_rows.s_rows.push_back(wrap_sentence(segment(text, vocab), ec.max_seq_len));
  }
  for (const std::string& text : validation.t) {
    val_rows.t_rows.push_back(wrap_sentence(segment(text, vocab), ec.max_seq_len));
  }

  TrainOutput out;
  out.steps_per_epoch = steps_per_epoch(data.pairs.size(), tc);

  EncoderParameters<float> params;
  AdamWState<float> opt;
  Rng rng;
  std::int64_t start_step = 0;
  double best_val = -1.0;
  int stale = 0;

  std::ofstream metrics_file;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir + "/checkpoints");
    metrics_file.open(run_dir + "/metrics.csv", std::ios::trunc);
    if (!metrics_file) throw IoError("cannot open metrics.csv in " + run_dir);
    metrics_file << metrics_csv_header();
  }

  const auto emit_checkpoint = [&](std::int64_t step) {
    CheckpointRecord record;
    record.step = step;
    record.params = params;
    record.opt = opt;
    record.rng_state = rng.save_state();
    record.val_metric = validation_metric(params, ec, val_rows, record.val_details);
    if (record.val_metric > best_val) {
      best_val = record.val_metric;
      out.best_index = out.checkpoints.size();
      stale = 0;
    } else {
      ++stale;
    }
    record.best_val_so_far = best_val;
    record.stale_checkpoints = stale;
    if (!run_dir.empty()) {
      save_checkpoint(run_dir + "/checkpoints/step-" + std::to_string(step) + ".ckpt", record, ec);
    }
    out.checkpoints.push_back(std::move(record));
    return out.checkpoints.back().val_metric;
  };

  if (!resume_checkpoint.empty()) {
    CheckpointRecord record = load_checkpoint(resume_checkpoint, ec);
    start_step = record.step;
    params = record.params;
    opt = record.opt;
    rng.restore_state(record.rng_state);
    best_val = record.best_val_so_far;
    stale = record.stale_checkpoints;
    out.checkpoints.push_back(std::move(record));
    out.best_index = 0;
  } else {
    params = init_params<float>(ec, derive_seed(tc.seed, 0x9A7A));
    opt.m = zeros_like(params);
    opt.v = zeros_like(params);
    rng = Rng(derive_seed(tc.seed, 0x57E9));
    StepMetrics m0;
    m0.step = 0;
    m0.epoch = 0;
    m0.loss = 0.0;
    m0.val_metric = emit_checkpoint(0);
    out.metrics.push_back(m0);
    if (metrics_file.is_open()) metrics_file << metrics_csv_row(out.metrics.back());
  }

  EncoderParameters<float> grads = zeros_like(params);
  const std::size_t n_pairs = data.pairs.size();
  const auto micro_per_epoch = static_cast<std::int64_t>(
      (n_pairs + static_cast<std::size_t>(tc.batch_pairs) - 1) /
      static_cast<std::size_t>(tc.batch_pairs));

  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> order;
  const auto micro_indices = [&](std::int64_t epoch, std::int64_t micro_in_epoch) {
    if (epoch != cached_epoch) {
      order = epoch_order(n_pairs, tc.seed, epoch);
      cached_epoch = epoch;
    }
    const std::size_t begin = static_cast<std::size_t>(micro_in_epoch) *
                              static_cast<std::size_t>(tc.batch_pairs);
    const std::size_t end = std::min(n_pairs, begin + static_cast<std::size_t>(tc.batch_pairs));
    return std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
  };

  bool stopped_early = false;
  for (std::int64_t step = start_step + 1; step <= tc.max_steps && !stopped_early; ++step) {
    const std::int64_t epoch = (step - 1) / out.steps_per_epoch;
    const std::int64_t step_in_epoch = (step - 1) % out.steps_per_epoch;

    for_each_tensor(grads, [](const std::string&, MatrixF& g) { g.setZero(); });
    double mlm_sum = 0.0;
    double tcm_sum = 0.0;
    double tlm_sum = 0.0;
    int micro_count = 0;

    const std::int64_t micro_begin = step_in_epoch * tc.grad_accum;
    const std::int64_t micro_end = std::min(micro_per_epoch, micro_begin + tc.grad_accum);
    for (std::int64_t micro = micro_begin; micro < micro_end; ++micro) {
      const std::vector<std::size_t> chunk = micro_indices(epoch, micro);
      if (chunk.empty()) continue;
      ++micro_count;

      const std::vector<TokenizedPair> instances = build_instances(data, tc.variant, chunk);
      std::vector<std::vector<int>> rows;
      rows.reserve(instances.size() * 2);
      for (const TokenizedPair& instance : instances) {
        rows.push_back(wrap_sentence(instance.original, ec.max_seq_len));
        rows.push_back(wrap_sentence(instance.transliteration, ec.max_seq_len));
      }
      MaskingOptions mask_options;
      mask_options.bert_style = tc.mask_bert_style;
      mask_options.vocab_size = ec.vocab_size;
      const MaskedBatch masked =
          apply_mlm_masking(make_token_batch(rows), tc.mask_rate, rng, mask_options);
      const ForwardCache<float> cache =
          forward_cache(params, ec, masked.batch, LogitsMode::kLabeled, &masked.labels, true, &rng);
      std::vector<int> gold;
      for (Eigen::Index b = 0; b < masked.labels.rows(); ++b) {
        for (Eigen::Index t = 0; t < masked.labels.cols(); ++t) {
          if (masked.labels(b, t) >= 0) gold.push_back(masked.labels(b, t));
        }
      }
      MatrixF dlogits;
      const double mlm = softmax_xent(cache.logits, gold, dlogits);
      mlm_sum += mlm;

      MatrixF dpooled;
      if (variant_uses_tcm(tc.variant)) {
        const MatrixF pooled = cache.pooled(ec);
        const auto b_pairs = static_cast<Eigen::Index>(chunk.size());
        ContrastiveBatch<float> cb;
        cb.temperature = tc.tcm_temperature;
        cb.pooled_original.resize(b_pairs, ec.hidden_dim);
        cb.pooled_transliteration.resize(b_pairs, ec.hidden_dim);
        for (Eigen::Index i = 0; i < b_pairs; ++i) {
          cb.pooled_original.row(i) = pooled.row(2 * i);
          cb.pooled_transliteration.row(i) = pooled.row(2 * i + 1);
        }
        const TcmResult<float> tcm = tcm_loss(cb, tc.tcm_symmetric);
        tcm_sum += tcm.loss;
        dpooled.setZero(pooled.rows(), pooled.cols());
        for (Eigen::Index i = 0; i < b_pairs; ++i) {
          dpooled.row(2 * i) = tcm.d_original.row(i);
          dpooled.row(2 * i + 1) = tcm.d_transliteration.row(i);
        }
      }
      backward(params, ec, cache, dlogits, dpooled, grads);

      if (variant_uses_tlm(tc.variant)) {
        std::vector<std::vector<int>> tlm_rows;
        tlm_rows.reserve(instances.size());
        for (const TokenizedPair& instance : instances) {
          tlm_rows.push_back(
              build_tlm_input(instance.original, instance.transliteration, ec.max_seq_len));
        }
        const MaskedBatch tlm_masked =
            apply_mlm_masking(make_token_batch(tlm_rows), tc.mask_rate, rng, mask_options);
        const ForwardCache<float> tlm_cache = forward_cache(
            params, ec, tlm_masked.batch, LogitsMode::kLabeled, &tlm_masked.labels, true, &rng);
        std::vector<int> tlm_gold;
        for (Eigen::Index b = 0; b < tlm_masked.labels.rows(); ++b) {
          for (Eigen::Index t = 0; t < tlm_masked.labels.cols(); ++t) {
            if (tlm_masked.labels(b, t) >= 0) tlm_gold.push_back(tlm_masked.labels(b, t));
          }
        }
        MatrixF tlm_dlogits;
        tlm_sum += softmax_xent(tlm_cache.logits, tlm_gold, tlm_dlogits);
        backward(params, ec, tlm_cache, tlm_dlogits, MatrixF(), grads);
      }
    }

    const double inv_micro = 1.0 / static_cast<double>(std::max(micro_count, 1));
    if (micro_count > 1) {
      for_each_tensor(grads, [&](const std::string&, MatrixF& g) {
        g *= static_cast<float>(inv_micro);
      });
    }
    if (tc.max_grad_norm > 0.0) {
      double sq = 0.0;
      for_each_tensor(grads, [&](const std::string&, const MatrixF& g) {
        sq += static_cast<double>(g.squaredNorm());
      });
      const double norm = std::sqrt(sq);
      if (norm > tc.max_grad_norm) {
        const auto scale = static_cast<float>(tc.max_grad_norm / norm);
        for_each_tensor(grads, [&](const std::string&, MatrixF& g) { g *= scale; });
      }
    }

    StepMetrics metrics;
    metrics.step = step;
    metrics.epoch = epoch;
    metrics.loss_mlm = mlm_sum * inv_micro;
    if (variant_uses_tcm(tc.variant)) metrics.loss_tcm = tcm_sum * inv_micro;
    if (variant_uses_tlm(tc.variant)) metrics.loss_tlm = tlm_sum * inv_micro;
    metrics.loss = variant_loss(tc.variant, metrics.loss_mlm, metrics.loss_tcm, metrics.loss_tlm);
    if (!std::isfinite(metrics.loss)) {
      throw NumericalError("train: non-finite loss at step " + std::to_string(step) +
                           "; last good checkpoint retained");
    }

    const double lr_scale =
        tc.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step) /
                                                static_cast<double>(tc.warmup_steps))
                            : 1.0;
    adamw_step(params, grads, opt, tc, lr_scale);

    const bool at_checkpoint = step % tc.checkpoint_every == 0 || step == tc.max_steps;
    if (at_checkpoint) {
      metrics.val_metric = emit_checkpoint(step);
      if (tc.early_stop_patience > 0 && stale >= tc.early_stop_patience) stopped_early = true;
    }
    out.metrics.push_back(metrics);
    if (metrics_file.is_open()) {
      metrics_file << metrics_csv_row(metrics);
      if (at_checkpoint) metrics_file.flush();
    }
    out.total_steps = step;
  }
  return out;
}

template void adamw_step<float>(EncoderParameters<float>&, const EncoderParameters<float>&,
                                AdamWState<float>&, const TrainConfig&, double);
template void adamw_step<double>(EncoderParameters<double>&, const EncoderParameters<double>&,
                                 AdamWState<double>&, const TrainConfig&, double);

}  // namespace xlit
