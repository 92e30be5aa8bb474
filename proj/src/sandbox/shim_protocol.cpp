// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/shim_protocol.hpp"

#include <regex>

#include <nlohmann/json.hpp>

#include "exploitbench/util/encoding.hpp"

namespace exploitbench {

using nlohmann::json;

std::string serialize_shim_config(const ShimConfig& c) {
  json doc{{"entrypoint", c.entrypoint}, {"args", c.args},     {"timeout_s", c.timeout_s},
           {"deps", c.deps},             {"role", c.role},     {"cve_id", c.cve_id},
           {"fail_fast", c.fail_fast}};
  doc["stdin_path"] = c.stdin_path ? json(*c.stdin_path) : json(nullptr);
  return doc.dump(2) + "\n";
}

ShimConfig parse_shim_config(std::string_view text) {
  try {
    auto doc = json::parse(text);
    ShimConfig c;
    c.entrypoint = doc.at("entrypoint").get<std::string>();
    c.args = doc.value("args", std::vector<std::string>{});
    c.timeout_s = doc.at("timeout_s").get<int>();
    c.deps = doc.value("deps", std::vector<std::string>{});
    c.role = doc.at("role").get<std::string>();
    c.cve_id = doc.at("cve_id").get<std::string>();
    if (auto it = doc.find("stdin_path"); it != doc.end() && !it->is_null()) {
      c.stdin_path = it->get<std::string>();
    }
    c.fail_fast = doc.value("fail_fast", false);
    if (c.timeout_s <= 0) throw ShimProtocolError("shim config: timeout_s must be positive");
    return c;
  } catch (const json::exception& e) {
    throw ShimProtocolError(std::string("shim config: ") + e.what());
  }
}

std::string encode_record_line(const RunRecord& r) {
  json doc{{"schema_version", r.schema_version},
           {"cve_id", r.cve_id},
           {"role", r.role},
           {"timed_out", r.timed_out},
           {"duration_ms", r.duration_ms},
           {"stdout_b64", util::base64_encode(r.stdout_bytes)},
           {"stderr_b64", util::base64_encode(r.stderr_bytes)},
           {"dep_install_ok", r.dep_install_ok},
           {"dep_install_log_b64", util::base64_encode(r.dep_install_log)},
           {"started_at_utc", r.started_at_utc}};
  if (r.exit_code) doc["exit_code"] = *r.exit_code;
  return std::string(kRecordSentinel) + doc.dump();
}

namespace {

[[noreturn]] void bad(const std::string& what) {
  throw ShimProtocolError("run record: " + what);
}

std::string decode_field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) bad(std::string(key) + " missing");
  auto bytes = util::base64_decode(it->get_ref<const std::string&>());
  if (!bytes) bad(std::string(key) + " is not valid base64");
  return *bytes;
}

}  // namespace

RunRecord decode_record_line(std::string_view line) {
  if (!line.starts_with(kRecordSentinel)) bad("missing sentinel");
  line.remove_prefix(kRecordSentinel.size());
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    bad(std::string("not JSON: ") + e.what());
  }
  if (!doc.is_object()) bad("not an object");
  try {
    RunRecord r;
    r.schema_version = doc.at("schema_version").get<int>();
    if (r.schema_version != kRecordSchemaVersion) {
      bad("unsupported schema_version " + std::to_string(r.schema_version));
    }
    r.cve_id = doc.at("cve_id").get<std::string>();
    r.role = doc.at("role").get<std::string>();
    if (r.role != "baseline" && r.role != "patched") bad("unknown role " + r.role);
    if (auto it = doc.find("exit_code"); it != doc.end() && !it->is_null()) {
      if (!it->is_number_integer()) bad("exit_code must be an integer");
      r.exit_code = it->get<int>();
    }
    r.timed_out = doc.at("timed_out").get<bool>();
    if (r.timed_out && r.exit_code) bad("timed_out record carries an exit_code");
    const auto& d = doc.at("duration_ms");
    if (!d.is_number_integer() || d.get<long long>() < 0) bad("duration_ms must be >= 0");
    r.duration_ms = d.get<std::uint64_t>();
    r.stdout_bytes = decode_field(doc, "stdout_b64");
    r.stderr_bytes = decode_field(doc, "stderr_b64");
    r.dep_install_ok = doc.at("dep_install_ok").get<bool>();
    r.dep_install_log = decode_field(doc, "dep_install_log_b64");
    r.started_at_utc = doc.at("started_at_utc").get<std::string>();
    static const std::regex iso(
        R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:?\d{2})$)");
    if (!std::regex_match(r.started_at_utc, iso)) bad("started_at_utc is not ISO-8601");
    return r;
  } catch (const json::exception& e) {
    bad(e.what());
  }
}

RunRecord parse_shim_output(std::string_view output) {
  std::size_t end = output.size();
  while (end > 0) {
    auto start = output.rfind('\n', end - 1);
    start = start == std::string_view::npos ? 0 : start + 1;
    auto line = output.substr(start, end - start);
    if (line.starts_with(kRecordSentinel)) return decode_record_line(line);
    if (start == 0) break;
    end = start - 1;
  }
  bad("no record line in shim output");
}

}  // namespace exploitbench
