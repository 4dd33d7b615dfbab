#include "xlit/aligneval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

#include "xlit/errors.hpp"
#include "xlit/objectives.hpp"
#include "xlit/rng.hpp"

namespace xlit {

const char* const kSimilarityNames[kNumSimilarityTypes] = {
    "transliteration", "translation", "transliteration_translation",
    "transliteration_transliteration"};

MatrixD encode_sentences(const EncoderParameters<float>& params, const EncoderConfig& config,
                         const UnigramVocabulary& vocab, const std::vector<std::string>& sentences,
                         int batch_rows) {
  if (sentences.empty()) throw ValidationError("encode_sentences: no sentences");
  MatrixD out(static_cast<Eigen::Index>(sentences.size()), config.hidden_dim);
  std::vector<std::vector<int>> rows;
  rows.reserve(static_cast<std::size_t>(batch_rows));
  std::size_t emitted = 0;
  auto flush = [&]() {
    if (rows.empty()) return;
    const TokenBatch batch = make_token_batch(rows);
    const ForwardCache<float> cache =
        forward_cache(params, config, batch, LogitsMode::kNone, nullptr, false, nullptr);
    const MatrixF pooled = cache.pooled(config);
    for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
      out.row(static_cast<Eigen::Index>(emitted++)) = pooled.row(i).cast<double>();
    }
    rows.clear();
  };
  for (const std::string& sentence : sentences) {
    rows.push_back(wrap_sentence(segment(sentence, vocab), config.max_seq_len));
    if (rows.size() == static_cast<std::size_t>(batch_rows)) flush();
  }
  flush();
  return out;
}

EncodedSet encode_set(const EncoderParameters<float>& params, const EncoderConfig& config,
                      const UnigramVocabulary& vocab, const std::vector<std::string>& sentences,
                      std::string source, std::int64_t checkpoint_step) {
  EncodedSet set;
  set.vectors = encode_sentences(params, config, vocab, sentences);
  set.source = std::move(source);
  set.checkpoint_step = checkpoint_step;
  for (Eigen::Index i = 0; i < set.vectors.rows(); ++i) {
    if (set.vectors.row(i).norm() == 0.0) {
      std::cerr << "warning: zero-norm pooled vector for sentence " << i << " of set '"
                << set.source << "'; excluding it from similarity reports\n";
      set.excluded.push_back(static_cast<std::size_t>(i));
    }
  }
  return set;
}

double cosine(const VectorD& u, const VectorD& v) {
  if (u.size() != v.size()) throw ValidationError("cosine: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw ValidationError("cosine: zero vector");
  return u.dot(v) / (nu * nv);
}

std::vector<std::size_t> seeded_derangement(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ValidationError("seeded_derangement: need n >= 2");
  Rng rng(derive_seed(seed, 0xDE7A6E));
  std::vector<std::size_t> perm(n);
  while (true) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (perm[i] == i) {
        ok = false;
        break;
      }
    }
    if (ok) return perm;
  }
}

namespace {

MatrixD normalized_rows(const MatrixD& m, const char* what) {
  MatrixD out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm == 0.0) {
      throw ValidationError(std::string(what) + ": zero vector at row " + std::to_string(i));
    }
    out.row(i) /= norm;
  }
  return out;
}

int histogram_bin(double value) {
  int bin = static_cast<int>(std::floor((value + 1.0) / kHistogramBinWidth));
  return std::clamp(bin, 0, kHistogramBins - 1);
}

}  // namespace

SimilarityReport four_similarities(const EncodedSet& enc_s, const EncodedSet& enc_t,
                                   const EncodedSet& enc_rs, const EncodedSet& enc_rt,
                                   const SimilarityOptions& options) {
  const Eigen::Index n_all = enc_s.vectors.rows();
  if (enc_t.vectors.rows() != n_all || enc_rs.vectors.rows() != n_all ||
      enc_rt.vectors.rows() != n_all) {
    throw ValidationError("four_similarities: the four sets must be index-aligned");
  }
  std::set<std::size_t> excluded(enc_s.excluded.begin(), enc_s.excluded.end());
  excluded.insert(enc_t.excluded.begin(), enc_t.excluded.end());
  excluded.insert(enc_rs.excluded.begin(), enc_rs.excluded.end());
  excluded.insert(enc_rt.excluded.begin(), enc_rt.excluded.end());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n_all; ++i) {
    if (!excluded.count(static_cast<std::size_t>(i))) keep.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  if (n < 2) throw ValidationError("four_similarities: need at least 2 usable pairs");

  auto gather = [&](const MatrixD& m) {
    MatrixD out(n, m.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = m.row(keep[static_cast<std::size_t>(i)]);
    return normalized_rows(out, "four_similarities");
  };
  const MatrixD s_hat = gather(enc_s.vectors);
  const MatrixD t_hat = gather(enc_t.vectors);
  const MatrixD rs_hat = gather(enc_rs.vectors);
  const MatrixD rt_hat = gather(enc_rt.vectors);

  const std::array<std::pair<const MatrixD*, const MatrixD*>, kNumSimilarityTypes> lhs_rhs = {{
      {&s_hat, &rs_hat},   // transliteration
      {&s_hat, &t_hat},    // translation
      {&rs_hat, &t_hat},   // transliteration-translation
      {&rs_hat, &rt_hat},  // transliteration-transliteration
  }};

  SimilarityReport report;
  report.checkpoint_step = enc_s.checkpoint_step;
  report.direction = enc_s.source + "->" + enc_t.source;
  const std::vector<std::size_t> sigma = seeded_derangement(static_cast<std::size_t>(n), options.seed);

  for (int type = 0; type < kNumSimilarityTypes; ++type) {
    const MatrixD& a = *lhs_rhs[static_cast<std::size_t>(type)].first;
    const MatrixD& b = *lhs_rhs[static_cast<std::size_t>(type)].second;
    auto& matched = report.matched[static_cast<std::size_t>(type)];
    auto& random_vals = report.random_pairs[static_cast<std::size_t>(type)];
    matched.resize(static_cast<std::size_t>(n));
    random_vals.resize(static_cast<std::size_t>(n));
    double matched_sum = 0.0;
    double random_sum = 0.0;
    // Normalized dot products can round a hair outside [-1, 1]; clamp.
    const auto clamp1 = [](double v) { return std::clamp(v, -1.0, 1.0); };
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m_val = clamp1(a.row(i).dot(b.row(i)));
      matched[static_cast<std::size_t>(i)] = m_val;
      matched_sum += m_val;
      report.hist_matched[static_cast<std::size_t>(type)][static_cast<std::size_t>(histogram_bin(m_val))]++;
      double r_val;
      if (options.exhaustive_random) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j != i) acc += clamp1(a.row(i).dot(b.row(j)));
        }
        r_val = acc / static_cast<double>(n - 1);
      } else {
        r_val = clamp1(
            a.row(i).dot(b.row(static_cast<Eigen::Index>(sigma[static_cast<std::size_t>(i)]))));
      }
      random_vals[static_cast<std::size_t>(i)] = r_val;
      random_sum += r_val;
      report.hist_random[static_cast<std::size_t>(type)][static_cast<std::size_t>(histogram_bin(r_val))]++;
    }
    report.matched_mean[static_cast<std::size_t>(type)] = matched_sum / static_cast<double>(n);
    report.random_mean[static_cast<std::size_t>(type)] = random_sum / static_cast<double>(n);
    report.gap[static_cast<std::size_t>(type)] = (matched_sum - random_sum) / static_cast<double>(n);
  }
  return report;
}

RetrievalReport retrieval_topk(const MatrixD& queries, const MatrixD& targets,
                               const std::vector<int>& ks) {
  if (queries.rows() != targets.rows()) {
    throw ValidationError("retrieval_topk: query and target counts must match");
  }
  if (queries.rows() == 0) throw ValidationError("retrieval_topk: empty sets");
  const MatrixD q_hat = normalized_rows(queries, "retrieval_topk queries");
  const MatrixD t_hat = normalized_rows(targets, "retrieval_topk targets");
  const Eigen::Index n = q_hat.rows();

  RetrievalReport report;
  std::map<int, std::int64_t> hits;
  for (const int k : ks) hits[k] = 0;
  std::int64_t weak_hits = 0;
  VectorD sims(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sims.noalias() = t_hat * q_hat.row(i).transpose();
    const double gold = sims(i);
    // Rank of the gold target under (descending similarity, ascending index).
    Eigen::Index rank = 0;
    bool strictly_best = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (sims(j) > gold || (sims(j) == gold && j < i)) ++rank;
      if (sims(j) >= gold) strictly_best = false;
    }
    for (const int k : ks) {
      if (rank < k) ++hits[k];
    }
    if (strictly_best) ++weak_hits;
  }
  for (const int k : ks) {
    report.accuracy[k] = static_cast<double>(hits[k]) / static_cast<double>(n);
  }
  report.weak_alignment_rate = static_cast<double>(weak_hits) / static_cast<double>(n);
  return report;
}

double weak_alignment_rate(const MatrixD& queries, const MatrixD& targets) {
  return retrieval_topk(queries, targets, {1}).weak_alignment_rate;
}

std::vector<DynamicsRow> dynamics(
    const std::vector<std::pair<std::int64_t, const EncoderParameters<float>*>>& checkpoints,
    const ParallelEvalSet& eval, const EncoderConfig& config, const UnigramVocabulary& vocab,
    const SimilarityOptions& options) {
  if (checkpoints.size() < 2) throw ValidationError("dynamics: need at least 2 checkpoints");
  eval.validate();
  std::vector<DynamicsRow> rows;
  rows.reserve(checkpoints.size());
  for (const auto& [step, params] : checkpoints) {
    const EncodedSet enc_s = encode_set(*params, config, vocab, eval.s, "s", step);
    const EncodedSet enc_t = encode_set(*params, config, vocab, eval.t, "t", step);
    const EncodedSet enc_rs = encode_set(*params, config, vocab, eval.r_s, "r_s", step);
    const EncodedSet enc_rt = encode_set(*params, config, vocab, eval.r_t, "r_t", step);
    const SimilarityReport report = four_similarities(enc_s, enc_t, enc_rs, enc_rt, options);
    DynamicsRow row;
    row.step = step;
    row.matched_mean = report.matched_mean;
    row.random_mean = report.random_mean;
    row.gap = report.gap;
    rows.push_back(row);
  }
  return rows;
}

MatrixD train_linear_probe(const MatrixD& features, const std::vector<int>& labels,
                           int num_classes, int iterations, double lr) {
  if (num_classes < 2) throw ValidationError("train_linear_probe: need at least 2 classes");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ValidationError("train_linear_probe: features/labels size mismatch");
  }
  for (const int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw ValidationError("train_linear_probe: label out of range");
    }
  }
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  MatrixD x(n, d + 1);
  x.leftCols(d) = features;
  x.col(d).setOnes();
  MatrixD weights = MatrixD::Zero(num_classes, d + 1);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int it = 0; it < iterations; ++it) {
    MatrixD logits = x * weights.transpose();  // n x C
    MatrixD probs(n, num_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double row_max = logits.row(i).maxCoeff();
      probs.row(i) = (logits.row(i).array() - row_max).exp().matrix();
      probs.row(i) /= probs.row(i).sum();
      probs(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    weights.noalias() -= lr * inv_n * (probs.transpose() * x);
  }
  return weights;
}

double probe_accuracy(const MatrixD& weights, const MatrixD& features,
                      const std::vector<int>& labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size() || labels.empty()) {
    throw ValidationError("probe_accuracy: features/labels size mismatch");
  }
  const Eigen::Index d = features.cols();
  MatrixD x(features.rows(), d + 1);
  x.leftCols(d) = features;
  x.col(d).setOnes();
  const MatrixD logits = x * weights.transpose();
  std::int64_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

namespace {

double majority_accuracy(const std::vector<int>& train_labels, const std::vector<int>& eval_labels) {
  std::map<int, std::int64_t> counts;
  for (const int label : train_labels) counts[label]++;
  int majority = train_labels.empty() ? 0 : counts.begin()->first;
  std::int64_t best = -1;
  for (const auto& [label, count] : counts) {
    if (count > best) {
      best = count;
      majority = label;
    }
  }
  std::int64_t hits = 0;
  for (const int label : eval_labels) {
    if (label == majority) ++hits;
  }
  return eval_labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(eval_labels.size());
}

}  // namespace

ProbeReport transfer_probe(const EncoderParameters<float>& params, const EncoderConfig& config,
                           const UnigramVocabulary& vocab, const ProbeTask& task, int iterations,
                           double lr) {
  std::set<int> classes(task.train_labels.begin(), task.train_labels.end());
  if (classes.size() < 2) throw ValidationError("transfer_probe: need at least 2 classes");
  const int num_classes = *classes.rbegin() + 1;
  const MatrixD x_train = encode_sentences(params, config, vocab, task.train_texts);
  const MatrixD weights = train_linear_probe(x_train, task.train_labels, num_classes, iterations, lr);
  ProbeReport report;
  report.train_accuracy = probe_accuracy(weights, x_train, task.train_labels);
  const MatrixD x_in = encode_sentences(params, config, vocab, task.in_language_texts);
  report.in_language_accuracy = probe_accuracy(weights, x_in, task.in_language_labels);
  const MatrixD x_cross = encode_sentences(params, config, vocab, task.crosslingual_texts);
  report.crosslingual_accuracy = probe_accuracy(weights, x_cross, task.crosslingual_labels);
  report.in_language_majority = majority_accuracy(task.train_labels, task.in_language_labels);
  report.crosslingual_majority = majority_accuracy(task.train_labels, task.crosslingual_labels);
  return report;
}

}  // namespace xlit
