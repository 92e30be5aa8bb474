// SPDX-License-Identifier: Apache-2.0
#include <future>
#include <random>

#include <spdlog/spdlog.h>

#include "exploitbench/sandbox.hpp"
#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::sandbox {

namespace {

constexpr std::string_view kProjectRoot = "/workspace/project";

std::string random_suffix() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (int i = 0; i < 12; ++i) out.push_back(hex[rng() % 16]);
  return out;
}

std::string strip_slash(std::string_view s) {
  while (!s.empty() && s.front() == '/') s.remove_prefix(1);
  return std::string(s);
}

}  // namespace

PocPayload make_poc_payload(const TaskBundle& bundle) {
  PocPayload p;
  p.cve_id = bundle.cve_id;
  p.network = bundle.runtime.network;
  auto add = [&](const std::string& rel) {
    auto path = bundle.bundle_dir / rel;
    if (std::filesystem::is_regular_file(path)) p.files[rel] = util::read_file(path);
  };
  if (!bundle.poc.in_repo) add(bundle.poc.entrypoint);
  for (const auto& aux : bundle.poc.aux_files) add(aux);

  auto& c = p.config_template;
  c.entrypoint = bundle.poc.in_repo
                     ? std::string(kProjectRoot) + "/" + bundle.poc.entrypoint
                     : std::string(kRunDir) + "/poc/" + bundle.poc.entrypoint;
  c.timeout_s = bundle.poc.timeout_s;
  c.deps = bundle.poc.deps;
  c.cve_id = bundle.cve_id;
  return p;
}

Sandbox::Sandbox(EngineEndpoint endpoint, SandboxOptions options)
    : engine_(std::move(endpoint)), options_(std::move(options)) {
  if (!engine_.ping()) {
    throw SandboxError(SandboxError::Kind::EngineUnreachable,
                       "container engine at " + engine_.endpoint().describe() +
                           " did not answer a ping");
  }
}

std::string Sandbox::build_image(const std::string& dockerfile, const FileTree& context,
                                 const std::string& tag) {
  std::vector<util::TarEntry> entries{{"Dockerfile", dockerfile, 0644, false}};
  for (const auto& [path, data] : context) entries.push_back({path, data, 0644, false});
  return build_image_tar(util::write_tar(entries), tag);
}

std::string Sandbox::build_image_tar(const std::string& context_tar, const std::string& tag) {
  if (!engine_.ping()) {
    throw SandboxError(SandboxError::Kind::EngineUnreachable,
                       "container engine at " + engine_.endpoint().describe() + " is offline");
  }
  std::string log;
  auto id = engine_.build(context_tar, tag, &log);
  spdlog::debug("built {} ({} bytes of build log)", tag, log.size());
  return id;
}

ContainerHandle Sandbox::start_container(const std::string& image, const std::string& role) {
  ContainerHandle h;
  h.role = role;
  h.id = engine_.create_container(
      image, "exploitbench-" + role + "-" + random_suffix(),
      {{std::string(kManagedLabel), "true"}, {std::string(kRoleLabel), role}}, options_.caps);
  engine_.start(h.id);
  h.started = true;
  return h;
}

ContainerPair Sandbox::provision_pair(const std::string& image,
                                      const std::optional<diffkit::ApplyOutcome>& patch) {
  if (patch && !patch->applied()) {
    throw SandboxError(SandboxError::Kind::ContractViolation,
                       "provision_pair needs a Clean or Fuzzy patch outcome");
  }
  ContainerPair pair;
  pair.image = image;
  pair.patch_applied = patch;
  try {
    pair.baseline = start_container(image, "baseline");
    pair.patched = start_container(image, "patched");
  } catch (...) {
    teardown(pair);
    throw;
  }
  if (!patch) return pair;

  try {
    if (!patch->result_files.empty()) {
      engine_.put_archive(pair.patched.id, "/",
                          util::write_tar(patch->result_files, strip_slash(kProjectRoot)));
    }
    if (!patch->deleted_files.empty()) {
      std::vector<std::string> cmd{"rm", "-f", "--"};
      for (const auto& f : patch->deleted_files) cmd.push_back(std::string(kProjectRoot) + "/" + f);
      auto r = engine_.exec(pair.patched.id, cmd, {});
      if (r.exit_code != 0) {
        throw SandboxError(SandboxError::Kind::PatchWriteFailed,
                           "removing deleted files failed: " + r.err);
      }
    }
  } catch (const SandboxError& e) {
    teardown(pair);
    if (e.kind() == SandboxError::Kind::PatchWriteFailed) throw;
    throw SandboxError(SandboxError::Kind::PatchWriteFailed,
                       std::string("writing patch into container failed: ") + e.what());
  }
  return pair;
}

RunRecord Sandbox::run_one(const ContainerHandle& c, const PocPayload& payload) {
  ShimConfig config = payload.config_template;
  config.role = c.role;
  const std::string run_dir = strip_slash(kRunDir);
  const std::string config_path = std::string(kRunDir) + "/config.json";

  std::vector<util::TarEntry> entries;
  entries.push_back({strip_slash(kShimPath), options_.shim_script, 0755, false});
  entries.push_back({run_dir + "/config.json", serialize_shim_config(config), 0644, false});
  for (const auto& [path, data] : payload.files) {
    entries.push_back({run_dir + "/poc/" + path, data, 0644, false});
  }
  engine_.put_archive(c.id, "/", util::write_tar(entries));

  std::map<std::string, std::string> env{{"PYTHONUNBUFFERED", "1"}};
  if (!payload.network) {
    // Fetch PoC dependencies while the network is still up, then cut it.
    if (!config.deps.empty()) {
      std::vector<std::string> cmd{options_.python, "-m", "pip", "download", "--quiet",
                                   "--dest", std::string(kWheelhouse)};
      cmd.insert(cmd.end(), config.deps.begin(), config.deps.end());
      auto r = engine_.exec(c.id, cmd, {}, std::chrono::seconds(600));
      if (r.exit_code != 0) {
        spdlog::warn("{} {}: dependency prefetch failed; the shim will record it", payload.cve_id,
                     c.role);
      }
      env["PIP_NO_INDEX"] = "1";
      env["PIP_FIND_LINKS"] = std::string(kWheelhouse);
    }
    for (const auto& net : engine_.networks(c.id)) engine_.disconnect(c.id, net);
  }

  auto budget = std::chrono::seconds(config.timeout_s) + options_.grace;
  auto r = engine_.exec(c.id, {options_.python, std::string(kShimPath), config_path}, env, budget);
  if (r.budget_exceeded) {
    throw ShimProtocolError(c.role + ": shim produced no record within " +
                            std::to_string(budget.count()) + " s");
  }
  RunRecord record;
  try {
    record = parse_shim_output(r.out);
  } catch (const ShimProtocolError& e) {
    throw ShimProtocolError(c.role + ": " + e.what());
  }
  if (record.role != c.role) {
    throw ShimProtocolError(c.role + ": record claims role " + record.role);
  }
  return record;
}

DifferentialRun Sandbox::run_differential(ContainerPair& pair, const PocPayload& payload) {
  auto base = std::async(std::launch::async, [&] { return run_one(pair.baseline, payload); });
  auto patched = std::async(std::launch::async, [&] { return run_one(pair.patched, payload); });
  std::exception_ptr failure;
  DifferentialRun run;
  try {
    run.baseline_record = base.get();
  } catch (...) {
    failure = std::current_exception();
  }
  try {
    run.patched_record = patched.get();
  } catch (...) {
    if (!failure) failure = std::current_exception();
  }
  for (auto* c : {&pair.baseline, &pair.patched}) {
    try {
      engine_.stop(c->id);
    } catch (const std::exception& e) {
      spdlog::warn("stopping {} container: {}", c->role, e.what());
    }
  }
  if (failure) std::rethrow_exception(failure);
  return run;
}

void Sandbox::teardown(ContainerPair& pair) noexcept {
  for (auto* c : {&pair.baseline, &pair.patched}) {
    if (c->id.empty() || c->removed) continue;
    try {
      engine_.remove(c->id);
      c->removed = true;
    } catch (const std::exception& e) {
      spdlog::warn("teardown of {} container {}: {}", c->role, c->id, e.what());
    }
  }
}

std::string Sandbox::tree_checksum(const ContainerHandle& c) const {
  auto archive = engine_.get_archive(c.id, std::string(kProjectRoot));
  FileTree tree;
  for (auto& e : util::read_tar(archive)) {
    if (e.directory) continue;
    auto slash = e.path.find('/');
    tree[slash == std::string::npos ? e.path : e.path.substr(slash + 1)] = std::move(e.data);
  }
  return util::tree_checksum(tree);
}

std::size_t Sandbox::sweep() noexcept {
  std::size_t removed = 0;
  try {
    for (const auto& id : engine_.list_by_label(std::string(kManagedLabel) + "=true")) {
      try {
        engine_.remove(id);
        ++removed;
      } catch (const std::exception& e) {
        spdlog::warn("sweep could not remove {}: {}", id, e.what());
      }
    }
  } catch (const std::exception& e) {
    spdlog::warn("sweep failed: {}", e.what());
  }
  return removed;
}

}  // namespace exploitbench::sandbox
