#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace xlit {

inline constexpr const char* kToolVersion = "0.1.0";

// exit codes
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;

/// Writes manifest.json into `out_dir`: command, version, seed, config digest,
/// input file digests, and output paths. The manifest pins everything needed
/// to re-run the command.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& args, std::uint64_t seed,
                    const std::vector<std::string>& input_files,
                    const std::vector<std::string>& output_files);

int cmd_gen_synth(const std::string& spec_path, const std::string& out_dir);

int cmd_transliterate(const std::string& in_path, const std::string& rules_path,
                      const std::string& out_path, const std::string& fallback);

int cmd_train_tokenizer(const std::vector<std::string>& corpus_paths, std::size_t vocab_size,
                        std::uint64_t seed, const std::string& out_path, bool word_marker);

int cmd_overlap(const std::string& corpus_a, const std::string& corpus_b,
                const std::string& vocab_path, std::size_t sample_size, std::uint64_t seed,
                const std::string& out_path);

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& vocab_path, const std::string& out_dir,
              const std::string& resume_checkpoint);

/// `eval_path` is either one TSV with columns s, t, r_s, r_t or four
/// comma-separated side-by-side files "s.txt,t.txt,rs.txt,rt.txt".
int cmd_eval(const std::string& run_dir, const std::string& eval_path,
             const std::string& vocab_path, const std::string& direction,
             const std::string& checkpoint_sel, std::uint64_t seed, bool exhaustive_random,
             const std::string& out_dir);

int cmd_dynamics(const std::string& run_dir, const std::string& eval_path,
                 const std::string& vocab_path, const std::string& direction, std::uint64_t seed,
                 const std::string& out_dir);

int cmd_probe(const std::string& run_dir, const std::string& probe_path,
              const std::string& vocab_path, const std::string& train_lang,
              const std::string& checkpoint_sel, const std::string& out_dir);

}  // namespace xlit
