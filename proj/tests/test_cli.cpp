// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "minpert/harness.hpp"

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout only
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(MINPERT_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult res;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, n);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::size_t count_lines(const std::string& text) {
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  return lines;
}

}  // namespace

TEST_CASE("cli solve prints the circle closed forms") {
  const RunResult res = run_cli("solve --builtin circle --x 1.21");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("mu_f = 0.1 ") != std::string::npos);
  CHECK(res.output.find("mu1  = 0.105 ") != std::string::npos);
  CHECK(res.output.find("y_star = (1.1,") != std::string::npos);
}

TEST_CASE("cli solve at the anchor is all zeros") {
  const RunResult res = run_cli("solve --builtin circle --x 1");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("mu_f = 0 ") != std::string::npos);
  CHECK(res.output.find("mu3  = 0 ") != std::string::npos);
}

TEST_CASE("cli solve error paths") {
  CHECK(run_cli("solve --builtin unknown --x 1").exit_code == 2);
  CHECK(run_cli("solve --builtin circle --x 1,2").exit_code == 2);   // wrong arity
  CHECK(run_cli("solve --builtin circle").exit_code == 64);          // missing --x
  CHECK(run_cli("solve --builtin circle --problem f --x 1").exit_code == 64);
  CHECK(run_cli("solve --x 1").exit_code == 64);
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("bogus-subcommand").exit_code == 64);
}

TEST_CASE("cli solve reports solver failures") {
  // no real roots near the anchor: the SQP runs out of iterations
  CHECK(run_cli("solve --builtin circle --x -0.1").exit_code == 3);
  // the iterate's Jacobian degenerates: outside the regular neighborhood
  CHECK(run_cli("solve --builtin circle --x -1").exit_code == 2);
}

TEST_CASE("cli solve rejects an anchor that is not a root") {
  write_file("/tmp/minpert_cli_bad_anchor.txt",
             "dims m=2 n=1 p=1\n"
             "anchor y0=(1,0) x0=(0.5)\n"
             "eq: y1^2 + y2^2 - x1\n");
  const RunResult res =
      run_cli("solve --problem /tmp/minpert_cli_bad_anchor.txt --x 0.6");
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("residual") != std::string::npos);
}

TEST_CASE("cli sweep produces 18 rows and passes all checks") {
  const std::string out = "/tmp/minpert_cli_sweep.csv";
  const RunResult res =
      run_cli("sweep --builtin circle --out " + out);
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("PASS duality") != std::string::npos);
  CHECK(res.output.find("PASS lipschitz") != std::string::npos);
  CHECK(res.output.find("FAIL") == std::string::npos);

  const std::string csv = read_file(out);
  const std::string header =
      "t,mu_f,mu1,mu2,mu3,r1,r2,r3,gap1,gap2,gap3,diff_quotient\n";
  CHECK(csv.find(header) != std::string::npos);
  // 7 meta lines + header + 18 rows + 7 verdict lines
  CHECK(count_lines(csv) == 7 + 1 + 18 + 7);
}

TEST_CASE("cli sweep usage errors") {
  CHECK(run_cli("sweep --builtin circle --t-start 1e-6 --t-stop 1e-1").exit_code == 64);
  CHECK(run_cli("sweep --builtin circle --per-decade 0").exit_code == 64);
  CHECK(run_cli("sweep --builtin circle --checks duality,bogus").exit_code == 64);
  CHECK(run_cli("sweep --builtin circle --format xml").exit_code == 64);
  CHECK(run_cli("sweep --builtin circle --no-mu-f --checks lipschitz").exit_code == 64);
}

TEST_CASE("cli sweep reports a verdict failure via exit code 1") {
  const RunResult res = run_cli(
      "sweep --builtin circle --eps-final 1e-12 --out /tmp/minpert_cli_fail.csv");
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("FAIL asymptotic") != std::string::npos);
}

TEST_CASE("cli sweep handles the dead-parameter system") {
  const RunResult res =
      run_cli("sweep --builtin parabola-underdet --direction 1,0 --out "
              "/tmp/minpert_cli_dead.csv");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("not-applicable") != std::string::npos);
  CHECK(res.output.find("regime=differential-only") != std::string::npos);
}

TEST_CASE("cli sweep emits parseable json") {
  const std::string out = "/tmp/minpert_cli_sweep.json";
  const RunResult res = run_cli(
      "sweep --builtin circle --direction random:7 --format json --out " + out);
  CHECK(res.exit_code == 0);
  const nlohmann::json parsed = nlohmann::json::parse(read_file(out));
  CHECK(parsed.at("rows").size() == 18);
  CHECK(parsed.at("meta").at("seed") == "7");
  CHECK(parsed.at("verdicts").size() == 7);
  for (const auto& row : parsed.at("rows"))
    CHECK(row.at("gap2").get<double>() <= 1e-9);
}

TEST_CASE("cli sweep accepts a problem file") {
  write_file("/tmp/minpert_cli_quad.txt",
             "dims m=2 n=1 p=1\n"
             "anchor y0=(1,0) x0=(1)\n"
             "eq: y1^2 + y2^2 - x1^2\n");
  const RunResult res =
      run_cli("sweep --problem /tmp/minpert_cli_quad.txt --out "
              "/tmp/minpert_cli_quad.csv");
  CHECK(res.exit_code == 0);
}

TEST_CASE("cli sweep without mu_f emits nan columns") {
  const std::string out = "/tmp/minpert_cli_nomuf.csv";
  const RunResult res =
      run_cli("sweep --builtin circle --no-mu-f --out " + out);
  CHECK(res.exit_code == 0);
  const std::string csv = read_file(out);
  CHECK(csv.find(",nan,") != std::string::npos);
  CHECK(res.output.find("lipschitz") == std::string::npos);  // silently skipped
}

TEST_CASE("cli lowerbound") {
  write_file("/tmp/minpert_cli_diag.txt", "3 0\n0 2\n");
  const RunResult two = run_cli("lowerbound --matrix /tmp/minpert_cli_diag.txt");
  CHECK(two.exit_code == 0);
  CHECK(two.output == "2\n");

  const RunResult inf =
      run_cli("lowerbound --matrix /tmp/minpert_cli_diag.txt --norm infinity");
  CHECK(inf.exit_code == 0);
  CHECK(inf.output.front() == '[');

  write_file("/tmp/minpert_cli_row.txt", "2 0\n");
  const RunResult row = run_cli("lowerbound --matrix /tmp/minpert_cli_row.txt");
  CHECK(row.output == "2\n");

  write_file("/tmp/minpert_cli_zero.txt", "0 0\n0 0\n");
  CHECK(run_cli("lowerbound --matrix /tmp/minpert_cli_zero.txt").exit_code == 2);
  CHECK(run_cli("lowerbound --matrix /tmp/does_not_exist.txt").exit_code == 2);
  write_file("/tmp/minpert_cli_ragged.txt", "1 2\n3\n");
  CHECK(run_cli("lowerbound --matrix /tmp/minpert_cli_ragged.txt").exit_code == 2);
  CHECK(run_cli("lowerbound --matrix /tmp/minpert_cli_diag.txt --norm seven")
            .exit_code == 64);
}

TEST_CASE("cli lowerbound sampling bracket straddles sigma_min") {
  write_file("/tmp/minpert_cli_wide.txt", "1 2 0 1\n0 1 -1 2\n");
  const RunResult res = run_cli(
      "lowerbound --matrix /tmp/minpert_cli_wide.txt --norm one --samples 4000");
  CHECK(res.exit_code == 0);
  double lo = 0.0, hi = 0.0;
  REQUIRE(std::sscanf(res.output.c_str(), "[%lf, %lf]", &lo, &hi) == 2);
  CHECK(lo > 0.0);
  CHECK(lo <= hi);
}
