// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "exploitbench/shim_protocol.hpp"

using namespace exploitbench;

namespace {

RunRecord sample() {
  RunRecord r;
  r.cve_id = "CVE-2022-24439";
  r.role = "patched";
  r.exit_code = 3;
  r.duration_ms = 1500;
  r.stdout_bytes = "hello\n";
  r.stderr_bytes = "Traceback...\n";
  r.dep_install_log = "Successfully installed six\n";
  r.started_at_utc = "2024-03-02T10:11:12Z";
  return r;
}

}  // namespace

TEST(ShimProtocol, RecordRoundTrip) {
  auto r = sample();
  auto line = encode_record_line(r);
  EXPECT_TRUE(line.starts_with(kRecordSentinel));
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(decode_record_line(line), r);
}

TEST(ShimProtocol, EmptyAndBinaryStreamsSurvive) {
  auto r = sample();
  r.stdout_bytes.clear();
  r.stderr_bytes = std::string("a\0b\xff\xfe\n", 6);
  EXPECT_EQ(decode_record_line(encode_record_line(r)), r);

  std::mt19937 rng(11);
  std::string big(10 << 20, '\0');
  for (auto& c : big) c = static_cast<char>(rng());
  r.stdout_bytes = big;
  EXPECT_EQ(decode_record_line(encode_record_line(r)).stdout_bytes, big);
}

TEST(ShimProtocol, TimeoutRecordHasNoExitCode) {
  auto r = sample();
  r.exit_code.reset();
  r.timed_out = true;
  auto back = decode_record_line(encode_record_line(r));
  EXPECT_TRUE(back.timed_out);
  EXPECT_FALSE(back.exit_code.has_value());
}

TEST(ShimProtocol, LastSentinelLineWins) {
  auto first = sample();
  auto second = sample();
  second.exit_code = 0;
  std::string out = "noise\n" + encode_record_line(first) + "\nmore noise\n" +
                    encode_record_line(second) + "\n";
  EXPECT_EQ(parse_shim_output(out).exit_code, 0);
}

TEST(ShimProtocol, RejectsBadRecords) {
  EXPECT_THROW(parse_shim_output("no record here\n"), ShimProtocolError);
  EXPECT_THROW(decode_record_line("##EXPLOITBENCH-RECORD## {not json"), ShimProtocolError);
  auto line = encode_record_line(sample());
  auto swap = [&](const std::string& from, const std::string& to) {
    auto s = line;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  EXPECT_THROW(decode_record_line(swap("\"schema_version\":1", "\"schema_version\":2")),
               ShimProtocolError);
  EXPECT_THROW(decode_record_line(swap("\"patched\"", "\"other\"")), ShimProtocolError);
  EXPECT_THROW(decode_record_line(swap("\"timed_out\":false", "\"timed_out\":true")),
               ShimProtocolError);
  EXPECT_THROW(decode_record_line(swap("2024-03-02T10:11:12Z", "yesterday")), ShimProtocolError);
}

TEST(ShimProtocol, ConfigRoundTrip) {
  ShimConfig c;
  c.entrypoint = "/opt/exploitbench/run/poc/exploit.py";
  c.args = {"--target", "x y"};
  c.timeout_s = 90;
  c.deps = {"requests==2.31.0"};
  c.role = "baseline";
  c.cve_id = "CVE-2023-2356";
  c.stdin_path = "/opt/exploitbench/run/poc/input.bin";
  c.fail_fast = true;
  EXPECT_EQ(parse_shim_config(serialize_shim_config(c)), c);
  EXPECT_THROW(parse_shim_config("[]"), ShimProtocolError);
}
