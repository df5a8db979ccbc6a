#include "ctcforge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "ctcforge/align.hpp"
#include "ctcforge/emissions_io.hpp"
#include "ctcforge/error.hpp"
#include "ctcforge/lexicon.hpp"
#include "ctcforge/lm.hpp"
#include "ctcforge/metrics.hpp"
#include "json.hpp"

namespace ctcforge::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class LogLevel { kDebug, kInfo, kWarn, kError, kOff };

LogLevel log_threshold() {
  static const LogLevel level = [] {
    const char* env = std::getenv("CTCFORGE_LOG");
    std::string v = env ? env : "info";
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (v == "debug") return LogLevel::kDebug;
    if (v == "warn" || v == "warning") return LogLevel::kWarn;
    if (v == "error") return LogLevel::kError;
    if (v == "off" || v == "none") return LogLevel::kOff;
    return LogLevel::kInfo;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (level < log_threshold()) return;
  static std::mutex mu;
  static constexpr const char* kNames[] = {"DEBUG", "INFO", "WARN", "ERROR"};
  std::lock_guard lock(mu);
  std::cerr << "[ctcforge " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

void require_file(const fs::path& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::exists(path))
    throw ConfigError(std::string(flag) + ": file not found: " + path.string());
}

void optional_file(const fs::path& path, const char* flag) {
  if (!path.empty() && !fs::exists(path))
    throw ConfigError(std::string(flag) + ": file not found: " + path.string());
}

/// Runs fn(i) for i in [0, n) on `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const auto threads = std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(n, 1));
  if (threads <= 1) return work();
  std::vector<std::jthread> pool;
  for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(work);
}

/// "utt_id<TAB>text" lines keyed by id.
std::map<std::string, std::string> read_keyed_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    std::string id = line.substr(0, tab);
    std::string text = tab == std::string::npos ? "" : line.substr(tab + 1);
    if (!out.emplace(id, std::move(text)).second)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": duplicate utterance id '" + id + "'");
  }
  return out;
}

class Output {
 public:
  explicit Output(const fs::path& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw ConfigError("cannot write " + path.string());
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

json hypothesis_json(const Hypothesis& h, const TokenDictionary& tokens) {
  json token_strings = json::array();
  for (TokenId t : h.tokens) token_strings.push_back(tokens.token(t));
  return json{{"score", h.score},       {"am_score", h.am_score},
              {"lm_score", h.lm_score}, {"words", h.words},
              {"tokens", token_strings}, {"token_ids", h.tokens},
              {"timesteps", h.timesteps}};
}

TokenDictionary load_dictionary(const RunConfig& c) {
  require_file(c.tokens, "--tokens");
  try {
    return load_tokens(c.tokens, c.blank_token, c.silence_token);
  } catch (const Error& e) {
    throw ConfigError(std::string("--tokens: ") + e.what());
  }
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::vector<std::pair<std::string, fs::path>> list_utterances(const fs::path& path) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      const auto ext = entry.path().extension();
      if (ext == ".ctce" || ext == ".bin" || ext == ".tsv")
        out.emplace_back(entry.path().stem().string(), entry.path());
    }
  } else {
    out.emplace_back(path.stem().string(), path);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_decode(const RunConfig& config) {
  std::optional<TokenDictionary> tokens;
  std::optional<NGramLM> lm;
  std::optional<LexiconTrie> trie;
  std::optional<CtcDecoder> decoder;
  std::vector<std::pair<std::string, fs::path>> utterances;
  try {
    require_file(config.emissions, "--emissions");
    optional_file(config.lexicon, "--lexicon");
    optional_file(config.lm, "--lm");
    tokens.emplace(load_dictionary(config));
    if (!config.lm.empty()) {
      try {
        lm.emplace(parse_arpa(config.lm));
      } catch (const Error& e) {
        throw ConfigError(std::string("--lm: ") + e.what());
      }
      for (const auto& w : lm->warnings()) log(LogLevel::kWarn, "--lm: " + w);
    }
    if (!config.lexicon.empty()) {
      try {
        trie.emplace(build_trie(parse_lexicon(config.lexicon, *tokens), lm ? &*lm : nullptr));
      } catch (const Error& e) {
        throw ConfigError(std::string("--lexicon: ") + e.what());
      }
    }
    try {
      decoder.emplace(*tokens, config.decoder, trie ? &*trie : nullptr, lm ? &*lm : nullptr);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    utterances = list_utterances(config.emissions);
  } catch (const ConfigError& e) {
    log(LogLevel::kError, e.what());
    return kExitConfig;
  }

  const LoadOptions load{config.strict_validation};
  std::vector<std::string> records(utterances.size());
  std::vector<double> seconds(utterances.size(), 0.0);
  std::atomic<int> failures{0};
  parallel_for(utterances.size(), config.workers, [&](std::size_t i) {
    const auto& [id, path] = utterances[i];
    try {
      const EmissionMatrix e = load_emissions(path, *tokens, load);
      const auto t0 = std::chrono::steady_clock::now();
      const NBestList nbest = decoder->decode(e);
      seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      json rec{{"utt_id", id}, {"num_frames", e.num_frames()}, {"nbest", json::array()}};
      for (const auto& h : nbest) rec["nbest"].push_back(hypothesis_json(h, *tokens));
      records[i] = rec.dump();
    } catch (const std::exception& ex) {
      ++failures;
      log(LogLevel::kError, "utterance " + id + ": " + ex.what());
      records[i] = json{{"utt_id", id}, {"error", ex.what()}}.dump();
    }
  });

  try {
    Output out(config.out);
    for (const auto& r : records) out.stream() << r << '\n';
    fs::path timing = config.timing;
    if (timing.empty() && !config.out.empty()) timing = config.out.string() + ".timing.jsonl";
    if (!timing.empty()) {
      Output t(timing);
      for (std::size_t i = 0; i < utterances.size(); ++i)
        t.stream() << json{{"utt_id", utterances[i].first}, {"time_s", seconds[i]}}.dump()
                   << '\n';
    }
  } catch (const ConfigError& e) {
    log(LogLevel::kError, e.what());
    return kExitConfig;
  }
  log(LogLevel::kInfo, "decoded " + std::to_string(utterances.size() - failures) + "/" +
                           std::to_string(utterances.size()) + " utterances");
  return failures > 0 ? kExitFailure : kExitOk;
}

int cmd_align(const RunConfig& config) {
  std::optional<TokenDictionary> tokens;
  std::optional<Lexicon> lexicon;
  std::map<std::string, std::string> transcripts;
  std::vector<std::pair<std::string, fs::path>> utterances;
  try {
    require_file(config.emissions, "--emissions");
    require_file(config.transcripts, "--transcripts");
    optional_file(config.lexicon, "--lexicon");
    tokens.emplace(load_dictionary(config));
    if (!config.lexicon.empty()) {
      try {
        lexicon.emplace(parse_lexicon(config.lexicon, *tokens));
      } catch (const Error& e) {
        throw ConfigError(std::string("--lexicon: ") + e.what());
      }
    }
    transcripts = read_keyed_lines(config.transcripts);
    utterances = list_utterances(config.emissions);
  } catch (const ConfigError& e) {
    log(LogLevel::kError, e.what());
    return kExitConfig;
  }

  // transcripts without emissions are failures too
  std::map<std::string, fs::path> by_id(utterances.begin(), utterances.end());
  std::vector<std::string> ids;
  for (const auto& [id, path] : utterances) ids.push_back(id);
  for (const auto& [id, text] : transcripts)
    if (!by_id.contains(id)) ids.push_back(id);
  std::sort(ids.begin(), ids.end());

  const LoadOptions load{config.strict_validation};
  std::vector<std::string> blocks(ids.size());
  std::atomic<int> failures{0};
  parallel_for(ids.size(), config.workers, [&](std::size_t i) {
    const std::string& id = ids[i];
    try {
      auto p = by_id.find(id);
      if (p == by_id.end()) throw ValidationError("no emissions for utterance");
      auto tr = transcripts.find(id);
      if (tr == transcripts.end()) throw ValidationError("no transcript for utterance");
      const WordList words = split_words(tr->second);
      std::vector<TokenId> targets;
      if (lexicon) {
        targets = spell_transcript(words, *lexicon);
      } else {
        for (const auto& w : words) targets.push_back(tokens->index(w));
      }
      const EmissionMatrix e = load_emissions(p->second, *tokens, load);
      const AlignmentResult result = forced_align(e, targets, *tokens);
      const auto spans = config.attribute_blanks ? attribute_blanks(result) : result.spans;
      std::string block;
      for (const auto& s : spans) {
        block += json{{"utt_id", id},          {"token", tokens->token(s.token)},
                      {"start", s.start_frame}, {"end", s.end_frame},
                      {"score", s.score},       {"prob", std::exp(s.score)}}
                     .dump();
        block += '\n';
      }
      if (lexicon) {
        AlignmentResult tiled = result;
        tiled.spans = spans;
        for (const auto& w : align_words(tiled, *tokens, words, *lexicon)) {
          block += json{{"utt_id", id},          {"word", w.word},
                        {"start", w.start_frame}, {"end", w.end_frame},
                        {"score", w.score},       {"prob", std::exp(w.score)}}
                       .dump();
          block += '\n';
        }
      }
      blocks[i] = std::move(block);
    } catch (const std::exception& ex) {
      ++failures;
      log(LogLevel::kError, "utterance " + id + ": " + ex.what());
      blocks[i] = json{{"utt_id", id}, {"error", ex.what()}}.dump() + "\n";
    }
  });

  try {
    Output out(config.out);
    for (const auto& b : blocks) out.stream() << b;
  } catch (const ConfigError& e) {
    log(LogLevel::kError, e.what());
    return kExitConfig;
  }
  return failures > 0 ? kExitFailure : kExitOk;
}

int cmd_evaluate(const RunConfig& config) {
  try {
    require_file(config.hyps, "--hyps");
    require_file(config.refs, "--refs");
    const auto refs_by_id = read_keyed_lines(config.refs);

    std::map<std::string, std::vector<WordList>> nbest_by_id;
    {
      std::ifstream in(config.hyps);
      std::string line;
      int line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
          rec = json::parse(line);
        } catch (const json::exception& e) {
          throw ConfigError("--hyps line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string id = rec.at("utt_id").get<std::string>();
        std::vector<WordList> nbest;
        if (rec.contains("nbest")) {
          for (const auto& h : rec["nbest"]) {
            WordList words = h.at("words").get<WordList>();
            if (words.empty()) words = h.at("tokens").get<WordList>();
            nbest.push_back(std::move(words));
          }
        }
        // failed utterances count as empty output
        if (nbest.empty()) nbest.emplace_back();
        if (!nbest_by_id.emplace(id, std::move(nbest)).second)
          throw ConfigError("--hyps: duplicate utterance id '" + id + "'");
      }
    }

    std::vector<std::string> unmatched;
    for (const auto& [id, text] : refs_by_id)
      if (!nbest_by_id.contains(id)) unmatched.push_back(id);
    for (const auto& [id, nb] : nbest_by_id)
      if (!refs_by_id.contains(id)) unmatched.push_back(id);
    if (!unmatched.empty()) {
      std::string list;
      for (const auto& id : unmatched) list += " " + id;
      throw ConfigError("unmatched utterance ids:" + list);
    }

    std::vector<WordList> refs, top1;
    std::vector<std::vector<WordList>> nbests;
    for (const auto& [id, text] : refs_by_id) {
      WordList ref = split_words(config.ignore_case ? lowercase(text) : text);
      auto nbest = nbest_by_id.at(id);
      if (config.ignore_case)
        for (auto& words : nbest)
          for (auto& w : words) w = lowercase(w);
      refs.push_back(std::move(ref));
      top1.push_back(nbest.front());
      nbests.push_back(std::move(nbest));
    }
    const double w = wer(refs, top1);
    const double o = oracle_wer(refs, nbests);

    std::optional<double> seconds;
    fs::path timing = config.timing;
    if (timing.empty()) timing = config.hyps.string() + ".timing.jsonl";
    if (fs::exists(timing)) {
      std::ifstream in(timing);
      std::string line;
      double total = 0.0;
      while (std::getline(in, line))
        if (!line.empty()) total += json::parse(line).at("time_s").get<double>();
      seconds = total;
    }

    long ref_words = 0;
    for (const auto& r : refs) ref_words += static_cast<long>(r.size());
    if (config.json) {
      json summary{{"wer", w},
                   {"oracle_wer", o},
                   {"num_utterances", refs.size()},
                   {"ref_words", ref_words},
                   {"time_s", seconds ? json(*seconds) : json(nullptr)}};
      std::cout << summary.dump() << '\n';
    } else {
      std::ostringstream s;
      s.setf(std::ios::fixed);
      s.precision(2);
      s << "WER (%): " << w << "\nOracle WER (%): " << o << "\nTime (s): ";
      if (seconds) s << *seconds; else s << "n/a";
      s << "\nUtterances: " << refs.size() << "\n";
      std::cout << s.str();
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    log(LogLevel::kError, e.what());
    return kExitConfig;
  } catch (const Error& e) {
    log(LogLevel::kError, e.what());
    return kExitConfig;
  } catch (const json::exception& e) {
    log(LogLevel::kError, std::string("malformed decode output: ") + e.what());
    return kExitConfig;
  }
}

int run(int argc, char** argv) {
  CLI::App app{"CTC decoding, forced alignment and WER scoring"};
  app.set_config("--config", "", "TOML/INI configuration file");
  app.require_subcommand(1);

  RunConfig c;
  std::string merge = "logadd";
  int beam_size_token = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--emissions", c.emissions, "Emission file or directory");
    sub->add_option("--tokens", c.tokens, "Token list, one per line");
    sub->add_option("--blank", c.blank_token, "Blank token (default <blank>, then -)");
    sub->add_option("--silence", c.silence_token, "Silence / word-delimiter token");
    sub->add_option("--lexicon", c.lexicon, "Lexicon file");
    sub->add_option("--out", c.out, "Output path (default stdout)");
    sub->add_option("--workers", c.workers, "Parallel utterances")->check(CLI::PositiveNumber);
    sub->add_flag("--strict-validation,!--no-strict-validation", c.strict_validation,
                  "Require normalized emission rows");
  };

  auto* decode = app.add_subcommand("decode", "Beam-search decode emissions");
  add_common(decode);
  auto& opts = c.decoder;
  decode->add_option("--lm", c.lm, "ARPA language model");
  decode->add_option("--beam-size", opts.beam_size, "Hypotheses kept per frame");
  decode->add_option("--beam-size-token", beam_size_token,
                     "Tokens expanded per frame (default: all)");
  decode->add_option("--beam-threshold", opts.beam_threshold, "Score pruning width");
  decode->add_option("--lm-weight", opts.lm_weight, "LM weight");
  decode->add_option("--word-score", opts.word_score, "Bonus per emitted word");
  decode->add_option("--sil-score", opts.sil_score, "Bonus per silence token");
  decode->add_option("--blank-skip-threshold", opts.blank_skip_threshold,
                     "Skip frames with p(blank) at or above this (1.0 = off)");
  decode->add_option("--nbest", opts.n_best, "Hypotheses reported per utterance");
  decode->add_option("--merge", merge, "Hypothesis merging")
      ->check(CLI::IsMember({"max", "logadd"}));
  decode->add_option("--timing", c.timing, "Timing sidecar path");

  auto* align = app.add_subcommand("align", "Forced-align transcripts to emissions");
  add_common(align);
  align->add_option("--transcripts", c.transcripts, "utt_id<TAB>transcript lines");
  align->add_flag("--attribute-blanks", c.attribute_blanks,
                  "Extend spans over neighbouring blank frames");

  auto* evaluate = app.add_subcommand("evaluate", "Score decode output");
  evaluate->add_option("--hyps", c.hyps, "Decode output (JSON lines)");
  evaluate->add_option("--refs", c.refs, "utt_id<TAB>reference lines");
  evaluate->add_option("--timing", c.timing, "Timing sidecar path");
  evaluate->add_flag("--json", c.json, "Print a JSON summary");
  evaluate->add_flag("--ignore-case", c.ignore_case, "Lowercase before scoring");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  opts.merge_mode = merge == "max" ? MergeMode::kMax : MergeMode::kLogAdd;
  if (beam_size_token > 0) opts.beam_size_token = beam_size_token;

  if (decode->parsed()) return cmd_decode(c);
  if (align->parsed()) return cmd_align(c);
  return cmd_evaluate(c);
}

}  // namespace ctcforge::cli
