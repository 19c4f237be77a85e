#include "chunkmix/runconfig.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace chunkmix::cli {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + value.size() || value.empty())
    fail(errc::config, "bad value '" + value + "' for " + key);
  return v;
}

template <typename T>
T parse_int(const std::string& key, const std::string& value) {
  T v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    fail(errc::config, "bad value '" + value + "' for " + key);
  return v;
}

}  // namespace

mixing::Toggles parse_toggles(const std::string& list) {
  mixing::Toggles t{false, false, false, false};
  std::stringstream ss(list);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    any = true;
    if (item == "mix_cycle")
      t.mix_cycle = true;
    else if (item == "plain_recon")
      t.plain_recon = true;
    else if (item == "gan")
      t.gan = true;
    else if (item == "cls")
      t.cls = true;
    else
      fail(errc::config, "unknown toggle '" + item + "'");
  }
  if (!any) fail(errc::config, "toggles list is empty");
  return t;
}

ad::Precision parse_precision(const std::string& s) {
  if (s == "f64") return ad::Precision::f64;
  if (s == "f32") return ad::Precision::f32;
  fail(errc::config, "unknown precision '" + s + "' (expected f64 or f32)");
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "lambda_m")
    cfg.train.lambda_m = parse_double(key, value);
  else if (key == "lambda_g")
    cfg.train.lambda_g = parse_double(key, value);
  else if (key == "lambda_c")
    cfg.train.lambda_c = parse_double(key, value);
  else if (key == "toggles")
    cfg.train.toggles = parse_toggles(value);
  else if (key == "chunks")
    cfg.train.n = parse_int<std::int64_t>(key, value);
  else if (key == "chunk_dim")
    cfg.train.d = parse_int<std::int64_t>(key, value);
  else if (key == "epochs")
    cfg.train.epochs = parse_int<std::int64_t>(key, value);
  else if (key == "batch")
    cfg.train.batch = parse_int<std::int64_t>(key, value);
  else if (key == "lr")
    cfg.train.lr = parse_double(key, value);
  else if (key == "beta1")
    cfg.train.beta1 = parse_double(key, value);
  else if (key == "seed")
    cfg.train.seed = parse_int<std::uint64_t>(key, value);
  else if (key == "precision")
    cfg.train.precision = parse_precision(value);
  else if (key == "data")
    cfg.data = value;
  else if (key == "out")
    cfg.out = value;
  else
    fail(errc::config, "unknown key '" + key + "'");
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();

  RunConfig cfg;
  cfg.raw = buf.str();
  std::istringstream lines(cfg.raw);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    const std::string where = path + " line " + std::to_string(lineno);
    if (eq == std::string::npos) fail(errc::config, where + ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) fail(errc::config, where + ": empty key");
    try {
      set_key(cfg, key, value);
    } catch (const Error& e) {
      fail(e.kind(), where + ": " + e.what());
    }
  }
  return cfg;
}

}  // namespace chunkmix::cli
