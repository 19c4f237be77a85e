#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef CHUNKMIX_BIN
#error "CHUNKMIX_BIN must point at the command line binary"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int rc = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(CHUNKMIX_BIN) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  while (size_t got = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, got);
  const int status = ::pclose(pipe);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "chunkmix_cli_XXXXXX").string();
    REQUIRE(mkdtemp(tmpl.data()) != nullptr);
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// train logs with the wall-clock column blanked, for determinism comparisons
std::string log_without_wall(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line, out;
  while (std::getline(in, line)) {
    const size_t tab = line.rfind('\t');
    REQUIRE(tab != std::string::npos);
    out += line.substr(0, tab);
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
  REQUIRE(out.good());
}

}  // namespace

TEST_CASE("help exits cleanly for the tool and every subcommand") {
  CHECK(run("--help").rc == 0);
  for (const char* sub : {"gen-data", "train", "eval", "grid", "ablate", "chunk-sweep",
                          "gradcheck"}) {
    const RunResult r = run(std::string(sub) + " --help");
    CHECK(r.rc == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
  CHECK(run("no-such-command").rc == 2);
  CHECK(run("").rc == 2);  // a subcommand is required
}

TEST_CASE("gradcheck subcommand passes and reports every operation") {
  const RunResult r = run("gradcheck --seeds 2");
  CHECK(r.rc == 0);
  CHECK(r.out.find("gradcheck PASS") != std::string::npos);
  CHECK(r.out.find("matmul") != std::string::npos);
  CHECK(r.out.find("conv2d") != std::string::npos);
}

TEST_CASE("gen-data writes a stratified, seed-reproducible corpus") {
  TempDir tmp;
  const RunResult a = run("gen-data --out " + tmp.sub("a") + " --seed 3 --copies 2");
  CHECK(a.rc == 0);
  CHECK(fs::exists(tmp.sub("a") + "/train.cmdata"));
  CHECK(fs::exists(tmp.sub("a") + "/test.cmdata"));
  CHECK(fs::exists(tmp.sub("a") + "/manifest.txt"));
  CHECK(a.out.find("72") != std::string::npos);  // 72 train / 72 test at two copies

  const RunResult b = run("gen-data --out " + tmp.sub("b") + " --seed 3 --copies 2");
  CHECK(b.rc == 0);
  CHECK(slurp(tmp.sub("a") + "/train.cmdata") == slurp(tmp.sub("b") + "/train.cmdata"));
  CHECK(slurp(tmp.sub("a") + "/test.cmdata") == slurp(tmp.sub("b") + "/test.cmdata"));

  const RunResult c = run("gen-data --out " + tmp.sub("c") + " --seed 4 --copies 2");
  CHECK(c.rc == 0);
  CHECK(slurp(tmp.sub("a") + "/train.cmdata") != slurp(tmp.sub("c") + "/train.cmdata"));
}

TEST_CASE("train runs from a config file and is bitwise reproducible") {
  TempDir tmp;
  REQUIRE(run("gen-data --out " + tmp.sub("data") + " --seed 1 --copies 1").rc == 0);

  const std::string cfg =
      "data = " + tmp.sub("data") + "\n" +
      "out = " + tmp.sub("run1") + "\n" +
      "seed = 5\n"
      "epochs = 1\n"
      "batch = 16\n"
      "chunks = 2\n"
      "chunk_dim = 2\n";
  write_file(tmp.sub("run.cfg"), cfg);
  const RunResult r1 = run("train --config " + tmp.sub("run.cfg"));
  CHECK(r1.rc == 0);
  REQUIRE(fs::exists(tmp.sub("run1") + "/checkpoint.bin"));
  REQUIRE(fs::exists(tmp.sub("run1") + "/train_log.tsv"));
  {
    std::ifstream log(tmp.sub("run1") + "/train_log.tsv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "step\tL_M\tg_loss\td_loss\tL_C\tcls_acc\twall_ms");
  }

  // same settings into a fresh directory (--out overrides the config file):
  // parameters and config echo match byte for byte
  const RunResult r2 =
      run("train --config " + tmp.sub("run.cfg") + " --out " + tmp.sub("run2"));
  CHECK(r2.rc == 0);
  REQUIRE(fs::exists(tmp.sub("run2") + "/checkpoint.bin"));
  CHECK(slurp(tmp.sub("run1") + "/checkpoint.bin") == slurp(tmp.sub("run2") + "/checkpoint.bin"));
  CHECK(log_without_wall(tmp.sub("run1") + "/train_log.tsv") ==
        log_without_wall(tmp.sub("run2") + "/train_log.tsv"));

  // a different seed produces a different model
  const RunResult r3 = run("train --config " + tmp.sub("run.cfg") + " --out " +
                           tmp.sub("run3") + " --seed 6");
  CHECK(r3.rc == 0);
  CHECK(slurp(tmp.sub("run1") + "/checkpoint.bin") != slurp(tmp.sub("run3") + "/checkpoint.bin"));
}

TEST_CASE("config errors carry the file name and line number") {
  TempDir tmp;
  write_file(tmp.sub("bad.cfg"), "data = x\nout = y\nsprocket = 7\n");
  const RunResult r = run("train --config " + tmp.sub("bad.cfg"));
  CHECK(r.rc == 2);
  CHECK(r.out.find("line 3") != std::string::npos);
  CHECK(r.out.find("sprocket") != std::string::npos);

  write_file(tmp.sub("badtoggle.cfg"), "toggles = mix_cycle,warp\n");
  const RunResult t = run("train --config " + tmp.sub("badtoggle.cfg") +
                          " --data " + tmp.sub("nowhere"));
  CHECK(t.rc == 2);
  CHECK(t.out.find("warp") != std::string::npos);
}

TEST_CASE("eval and grid report missing or malformed inputs as usage errors") {
  TempDir tmp;
  const RunResult r = run("eval --checkpoint " + tmp.sub("none.bin") + " --data " +
                          tmp.sub("nodata"));
  CHECK(r.rc == 2);
  CHECK(r.out.find("cannot open checkpoint") != std::string::npos);

  // a real checkpoint but an out-of-range chunk index
  REQUIRE(run("gen-data --out " + tmp.sub("data") + " --seed 1 --copies 2").rc == 0);
  const std::string cfg = "data = " + tmp.sub("data") + "\nout = " + tmp.sub("run") +
                          "\nseed = 2\nepochs = 1\nbatch = 16\nchunks = 2\nchunk_dim = 2\n";
  write_file(tmp.sub("run.cfg"), cfg);
  REQUIRE(run("train --config " + tmp.sub("run.cfg")).rc == 0);
  const RunResult g = run("grid --checkpoint " + tmp.sub("run") + "/checkpoint.bin --data " +
                          tmp.sub("data") + " --chunk 7 --out " + tmp.sub("grid.ppm"));
  CHECK(g.rc == 2);
  CHECK(g.out.find("out of range") != std::string::npos);

  const RunResult ok = run("grid --checkpoint " + tmp.sub("run") + "/checkpoint.bin --data " +
                           tmp.sub("data") + " --chunk 1 --rows 2 --cols 3 --out " +
                           tmp.sub("grid.ppm"));
  CHECK(ok.rc == 0);
  const std::string ppm = slurp(tmp.sub("grid.ppm"));
  CHECK(ppm.rfind("P6\n64 48\n255\n", 0) == 0);

  const RunResult ev = run("eval --checkpoint " + tmp.sub("run") + "/checkpoint.bin --data " +
                           tmp.sub("data") + " --out " + tmp.sub("reports"));
  CHECK(ev.rc == 0);
  CHECK(fs::exists(tmp.sub("reports") + "/retrieval.tsv"));
  CHECK(fs::exists(tmp.sub("reports") + "/probe.tsv"));
  CHECK(fs::exists(tmp.sub("reports") + "/shortcut.tsv"));
}
