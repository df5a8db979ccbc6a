#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ctcforge/decoder.hpp"

namespace ctcforge::cli {

/// Everything a subcommand needs; filled from flags and an optional config
/// file (flags win).
struct RunConfig {
  std::filesystem::path emissions;
  std::filesystem::path tokens;
  std::filesystem::path lexicon;
  std::filesystem::path lm;
  std::filesystem::path refs;
  std::filesystem::path hyps;
  std::filesystem::path transcripts;
  std::filesystem::path out;
  /// Per-utterance decode timing; defaults to "<out>.timing.jsonl".
  std::filesystem::path timing;
  std::string blank_token;
  std::string silence_token;
  DecoderOptions decoder;
  int workers = 1;
  bool strict_validation = true;
  bool json = false;
  bool attribute_blanks = false;
  bool ignore_case = false;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Emission files under `path` (or `path` itself) keyed by file stem,
/// sorted by key.
std::vector<std::pair<std::string, std::filesystem::path>> list_utterances(
    const std::filesystem::path& path);

/// Writes one JSON line per utterance with its N-best list.
int cmd_decode(const RunConfig& config);
/// Writes one JSON line per aligned token (and word, with a lexicon).
int cmd_align(const RunConfig& config);
/// Prints corpus WER, oracle WER and summed decode time.
int cmd_evaluate(const RunConfig& config);

/// Parses argv and dispatches to a subcommand; returns the exit code.
int run(int argc, char** argv);

}  // namespace ctcforge::cli
