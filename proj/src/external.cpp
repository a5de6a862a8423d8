#include "bpe/external.hpp"

#include <openssl/evp.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "bpe/error.hpp"
#include "bpe/space_io.hpp"

extern char** environ;

namespace bpe {

namespace fs = std::filesystem;
using nlohmann::json;

void ExternalProtocol::validate() const {
  if (command.empty()) throw InvalidArgument("external evaluator needs a command");
  if (!(timeout_seconds > 0.0)) throw InvalidArgument("timeout must be positive");
  if (parallelism < 1) throw InvalidArgument("parallelism must be at least 1");
  if (result_file.empty()) throw InvalidArgument("result file name must not be empty");
}

json ExternalProtocol::to_json() const {
  return {{"command", command},
          {"work_root", work_root.string()},
          {"cache_dir", cache_dir.string()},
          {"timeout_seconds", timeout_seconds},
          {"parallelism", parallelism},
          {"result_file", result_file}};
}

ExternalProtocol ExternalProtocol::from_json(const json& j) {
  try {
    ExternalProtocol p;
    p.command = j.at("command").get<std::string>();
    p.work_root = j.at("work_root").get<std::string>();
    p.cache_dir = j.at("cache_dir").get<std::string>();
    p.timeout_seconds = j.at("timeout_seconds").get<double>();
    p.parallelism = j.at("parallelism").get<std::size_t>();
    p.result_file = j.value("result_file", std::string("result.txt"));
    return p;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed external protocol: ") + e.what());
  }
}

std::string content_key(const std::string& bpe_cfg, const std::string& genotype_text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const char sep = '\0';
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, bpe_cfg.data(), bpe_cfg.size()) == 1 &&
                  EVP_DigestUpdate(ctx, &sep, 1) == 1 &&
                  EVP_DigestUpdate(ctx, genotype_text.data(), genotype_text.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

namespace {

std::optional<double> parse_decimal(std::string text) {
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return std::nullopt;
  const auto e = text.find_last_not_of(" \t\r\n");
  text = text.substr(b, e - b + 1);
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& p, const std::string& content) {
  const fs::path tmp = p.string() + ".tmp." + std::to_string(::getpid()) + "." +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

struct ProcessOutcome {
  enum class Kind { exited, timed_out, launch_failed } kind = Kind::exited;
  int exit_code = 0;
};

ProcessOutcome run_command(const std::string& command, const fs::path& cwd, const std::string& arch_id,
                           double timeout_seconds) {
  // Build argv/envp before fork; the child only calls async-signal-safe functions.
  std::vector<std::string> env_strings;
  for (char** e = environ; *e; ++e) {
    std::string_view kv(*e);
    if (kv.starts_with("BPE_WORK_DIR=") || kv.starts_with("BPE_ARCH_ID=")) continue;
    env_strings.emplace_back(kv);
  }
  env_strings.push_back("BPE_WORK_DIR=" + cwd.string());
  env_strings.push_back("BPE_ARCH_ID=" + arch_id);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  const std::string dir = cwd.string();
  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};

  const pid_t pid = ::fork();
  if (pid < 0) return {ProcessOutcome::Kind::launch_failed, -1};
  if (pid == 0) {
    ::setpgid(0, 0);
    if (::chdir(dir.c_str()) != 0) ::_exit(126);
    ::execve("/bin/sh", const_cast<char* const*>(argv), envp.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) return {ProcessOutcome::Kind::launch_failed, -1};
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      return {ProcessOutcome::Kind::timed_out, -1};
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  if (WIFEXITED(status)) return {ProcessOutcome::Kind::exited, WEXITSTATUS(status)};
  return {ProcessOutcome::Kind::exited, 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0)};
}

std::string format_cache_entry(double score, double seconds) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "%.17g %.17g\n", score, seconds);
  return buf;
}

}  // namespace

ExternalEvaluator::ExternalEvaluator(HyperSpace space, ExternalProtocol protocol)
    : space_(std::move(space)), protocol_(std::move(protocol)) {
  protocol_.validate();
}

ExternalEvaluator::Outcome ExternalEvaluator::run_one(const std::string& cfg_text, const std::string& arch_id,
                                                      const Genotype& g) {
  const std::string geno_text = encode(g);
  const std::string key = content_key(cfg_text, geno_text);
  const fs::path cache_file = protocol_.cache_dir / key;

  if (fs::exists(cache_file)) {
    std::istringstream in(read_file(cache_file));
    std::string score_s, seconds_s;
    in >> score_s >> seconds_s;
    auto score = parse_decimal(score_s);
    auto seconds = parse_decimal(seconds_s);
    if (score && seconds) {
      ++cache_hits_;
      return {score, ArchStatus::ok, {}, *seconds};
    }
  }

  Outcome out;
  const fs::path dir = protocol_.work_root / key;
  try {
    fs::create_directories(dir);
    fs::remove(dir / protocol_.result_file);
    write_file_atomic(dir / "genotype.txt", geno_text);
    write_file_atomic(dir / "bpe.cfg", cfg_text);
  } catch (const std::exception& e) {
    out.status = ArchStatus::launch_error;
    out.message = arch_id + ": cannot prepare work directory: " + e.what();
    return out;
  }

  ++invocations_;
  const auto start = std::chrono::steady_clock::now();
  const ProcessOutcome proc = run_command(protocol_.command, fs::absolute(dir), arch_id, protocol_.timeout_seconds);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  switch (proc.kind) {
    case ProcessOutcome::Kind::launch_failed:
      out.status = ArchStatus::launch_error;
      out.message = arch_id + ": failed to launch command";
      return out;
    case ProcessOutcome::Kind::timed_out:
      out.status = ArchStatus::timeout;
      out.message = arch_id + ": command timed out after " + std::to_string(protocol_.timeout_seconds) + " s";
      return out;
    case ProcessOutcome::Kind::exited:
      break;
  }
  if (proc.exit_code != 0) {
    out.status = ArchStatus::nonzero_exit;
    out.message = arch_id + ": command exited with status " + std::to_string(proc.exit_code);
    return out;
  }
  const fs::path result = dir / protocol_.result_file;
  if (!fs::exists(result)) {
    out.status = ArchStatus::parse_error;
    out.message = arch_id + ": command did not write " + protocol_.result_file;
    return out;
  }
  auto score = parse_decimal(read_file(result));
  if (!score) {
    out.status = ArchStatus::parse_error;
    out.message = arch_id + ": " + protocol_.result_file + " does not hold a single decimal number";
    return out;
  }
  // Cached seconds are re-read on hits, so round-trip them through the text form now.
  const std::string entry = format_cache_entry(*score, out.seconds);
  out.seconds = *parse_decimal(entry.substr(entry.find(' ') + 1));
  out.score = score;
  try {
    fs::create_directories(protocol_.cache_dir);
    write_file_atomic(cache_file, entry);
  } catch (const std::exception&) {
    // an unwritable cache only costs a re-run later
  }
  return out;
}

EvalResult ExternalEvaluator::run(const BpeConfig& config, const ArchSet& archs) {
  archs.validate();
  const std::string cfg_text = format_bpe_cfg(space_, config);
  std::vector<Outcome> outcomes(archs.size());

  const std::size_t workers = std::min(protocol_.parallelism, archs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < archs.size(); ++i) outcomes[i] = run_one(cfg_text, archs.ids[i], archs.genotypes[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < archs.size(); i = next++)
          outcomes[i] = run_one(cfg_text, archs.ids[i], archs.genotypes[i]);
      });
  }

  EvalResult r;
  double total = 0.0;
  std::size_t ok = 0;
  for (auto& o : outcomes) {
    r.scores.push_back(o.score);
    r.status.push_back(o.status);
    r.messages.push_back(std::move(o.message));
    r.seconds.push_back(o.seconds);
    if (o.score) {
      total += o.seconds;
      ++ok;
    }
  }
  r.mean_cost = ok ? total / static_cast<double>(ok) : 0.0;
  return r;
}

EvalResult ExternalEvaluator::evaluate(const BpeConfig& config, const ArchSet& archs) {
  EvalResult r = run(config, archs);
  if (r.effective_n() == 0) {
    std::string first = r.messages.empty() ? std::string("no architectures") : r.messages.front();
    throw EvaluatorError("every architecture failed; first failure: " + first);
  }
  return r;
}

}  // namespace bpe
