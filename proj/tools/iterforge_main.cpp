#include <signal.h>
#include <unistd.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "iterforge/assets/importers.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/service/api.hpp"
#include "iterforge/service/http_server.hpp"
#include "iterforge/service/platform.hpp"
#include "iterforge/toy/executors.hpp"
#include "iterforge/toy/synth.hpp"

namespace fs = std::filesystem;
using namespace iterforge;

namespace {

struct GlobalOptions {
  std::optional<fs::path> config;
  std::optional<fs::path> store;
};

ServiceConfig load_config(const GlobalOptions& g) {
  ServiceConfig c;
  if (auto path = resolve_config_path(g.config)) c = load_service_config(*path);
  if (g.store) c.store_root = fs::absolute(*g.store);
  c.validate();
  return c;
}

std::unique_ptr<Platform> open_local(const GlobalOptions& g) {
  OpenOptions o;
  o.start_background = false;
  return Platform::open(load_config(g), o);
}

TaskRecord run_task(Platform& p, TaskSpec spec) {
  std::string id = p.scheduler().submit(std::move(spec));
  auto done = p.scheduler().wait(id, std::chrono::hours(24));
  if (!done) throw Error(ErrorCode::kUnavailable, "task " + id + " did not finish");
  return *done;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    if (comma > pos) out.push_back(text.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

void print_round_trace(const IterationState& s) {
  for (const auto& h : s.history) {
    std::cout << "round " << h.round << "  |D|=" << h.training_size << "  acc=" << h.accuracy
              << "  model=" << h.model.value << "\n";
  }
  std::cout << "stage=" << to_string(s.stage)
            << "  output_model=" << (s.output_model ? s.output_model->value : "-") << "\n";
  if (!s.warning.empty()) std::cout << "warning: " << s.warning << "\n";
  if (s.stage_failed) std::cout << "stage failed: " << s.stage_error << "\n";
}

int serve(const GlobalOptions& g) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ServiceConfig config = load_config(g);
  auto platform = Platform::open(config);
  HttpServer server(*platform, config.bind_address, config.port);
  std::cout << "listening on http://" << config.bind_address << ":" << server.port()
            << " store=" << config.store_root.string() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  std::cout << "received signal " << sig << ", draining (" << to_string(config.drain) << ")"
            << std::endl;
  server.stop();
  platform->shutdown();
  std::cout << "stopped" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iterforge: model iteration platform"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Service config JSON (ITERFORGE_CONFIG takes precedence)");
  app.add_option("--store", g.store, "Store root, overrides the config");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP and push service");

  auto* import_cmd = app.add_subcommand("import", "Import a directory as a snapshot");
  std::string import_dir, import_format = "flat-unlabeled", import_policy = "ignore", import_classes;
  import_cmd->add_option("--dir", import_dir, "Source directory")->required();
  import_cmd->add_option("--format", import_format, "voc-xml-subset | yolo-txt | flat-unlabeled");
  import_cmd->add_option("--policy", import_policy, "Unknown label policy: ignore | abort | add");
  import_cmd->add_option("--class-names", import_classes, "Comma-separated class names");

  auto* executor_cmd = app.add_subcommand("executor", "Manage executor plugins");
  executor_cmd->require_subcommand(1);
  auto* exec_register = executor_cmd->add_subcommand("register", "Register an executor package");
  std::string package_path;
  exec_register->add_option("path", package_path, "Package directory with manifest.json")->required();
  auto* exec_list = executor_cmd->add_subcommand("list", "List registered executors");

  auto* project_cmd = app.add_subcommand("project", "Model iteration projects");
  project_cmd->require_subcommand(1);
  auto* project_create = project_cmd->add_subcommand("create", "Create a project");
  ProjectConfig pc;
  std::string pc_classes, pc_superset, pc_initial, pc_validation, pc_model, pc_train_params = "{}",
                          pc_mine_params = "{}";
  project_create->add_option("--name", pc.name);
  project_create->add_option("--classes", pc_classes, "Comma-separated class names")->required();
  project_create->add_option("--superset", pc_superset, "Snapshot with every candidate asset")->required();
  project_create->add_option("--initial", pc_initial, "Initial training snapshot");
  project_create->add_option("--validation", pc_validation, "Validation snapshot")->required();
  project_create->add_option("--target", pc.target_accuracy, "Target accuracy in (0, 1]");
  project_create->add_option("--batch", pc.mining_batch_size, "Mining batch size");
  project_create->add_option("--initial-model", pc_model, "Initial model id");
  project_create->add_option("--train-executor", pc.train_executor);
  project_create->add_option("--mine-executor", pc.mine_executor);
  project_create->add_option("--train-params", pc_train_params, "JSON object");
  project_create->add_option("--mine-params", pc_mine_params, "JSON object");
  project_create->add_option("--user", pc.user_id);
  project_create->add_flag("--auto", pc.auto_advance, "Advance stages automatically");

  auto* project_run = project_cmd->add_subcommand("run", "Advance a project");
  std::string run_id;
  bool run_auto = false;
  project_run->add_option("--id", run_id, "Project id")->required();
  project_run->add_flag("--auto", run_auto, "Run stages until the project is final");

  auto* project_show = project_cmd->add_subcommand("show", "Print a project");
  std::string show_id;
  project_show->add_option("--id", show_id)->required();

  auto* task_cmd = app.add_subcommand("task", "Tasks on a running service");
  task_cmd->require_subcommand(1);
  auto* task_stop = task_cmd->add_subcommand("stop", "Stop a task");
  std::string stop_id, server_url;
  task_stop->add_option("--id", stop_id)->required();
  task_stop->add_option("--server", server_url, "Service URL (default from config)");

  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic feature dataset");
  fs::path synth_out;
  toy::SynthSpec synth;
  bool synth_labels = false;
  std::string synth_prefix = "sample";
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--count", synth.count);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--prefix", synth_prefix);
  synth_cmd->add_flag("--labels", synth_labels, "Write yolo-txt labels beside each payload");

  auto* package_cmd = app.add_subcommand("toy-package", "Write the reference executor package");
  fs::path package_out, package_binary;
  package_cmd->add_option("--out", package_out)->required();
  package_cmd->add_option("--binary", package_binary, "Executor binary");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return serve(g);

    if (*import_cmd) {
      auto p = open_local(g);
      TaskSpec spec;
      spec.kind = TaskKind::kImport;
      spec.inputs = {{"dir", fs::absolute(import_dir).string()},
                     {"format", import_format},
                     {"policy", import_policy},
                     {"class_names", split_csv(import_classes)}};
      TaskRecord t = run_task(*p, spec);
      std::cout << t.to_json().dump(2) << std::endl;
      return t.state == TaskState::kDone ? 0 : 1;
    }

    if (*exec_register) {
      auto p = open_local(g);
      std::cout << p->executors().register_executor(fs::absolute(package_path)).to_json().dump(2)
                << std::endl;
      return 0;
    }
    if (*exec_list) {
      auto p = open_local(g);
      for (const auto& m : p->executors().list()) std::cout << m.to_json().dump() << "\n";
      return 0;
    }

    if (*project_create) {
      auto p = open_local(g);
      pc.class_names = split_csv(pc_classes);
      pc.data_superset = SnapshotId{pc_superset};
      if (!pc_initial.empty()) pc.initial_data = SnapshotId{pc_initial};
      pc.validation = SnapshotId{pc_validation};
      if (!pc_model.empty()) pc.initial_model = ModelId{pc_model};
      pc.train_params = nlohmann::json::parse(pc_train_params);
      pc.mine_params = nlohmann::json::parse(pc_mine_params);
      std::string id = p->engine().create_project(pc);
      std::cout << id << std::endl;
      return 0;
    }

    if (*project_run) {
      auto p = open_local(g);
      IterationEngine& engine = p->engine();
      auto settled = [](const IterationState& s) {
        return is_final(s.stage) || s.stage_failed || !s.stage_task_id;
      };
      if (run_auto) {
        engine.set_auto_advance(run_id, true);
        if (!engine.get(run_id).stage_task_id) engine.advance(run_id);
        auto s = engine.wait_until(
            run_id, [](const IterationState& s) { return is_final(s.stage) || s.stage_failed; },
            std::chrono::hours(24));
        print_round_trace(s ? *s : engine.get(run_id));
        return s && is_final(s->stage) ? 0 : 1;
      }
      IterationState before = engine.advance(run_id);
      std::cout << "advanced " << run_id << ": " << to_string(before.stage)
                << (before.stage_task_id ? " task " + *before.stage_task_id : std::string()) << "\n";
      auto s = engine.wait_until(run_id, settled, std::chrono::hours(24));
      std::cout << engine.next_action(run_id).to_json().dump(2) << std::endl;
      return s && !s->stage_failed ? 0 : 1;
    }
    if (*project_show) {
      auto p = open_local(g);
      auto s = p->engine().get(show_id);
      auto j = s.to_json();
      j["next_action"] = p->engine().next_action(show_id).to_json();
      std::cout << j.dump(2) << std::endl;
      return 0;
    }

    if (*task_stop) {
      if (server_url.empty()) {
        ServiceConfig c = load_config(g);
        server_url = "http://" + c.bind_address + ":" + std::to_string(c.port);
      }
      httplib::Client client(server_url);
      auto res = client.Post(("/api/tasks/" + stop_id + "/stop").c_str(), "", "application/json");
      if (!res) {
        std::cerr << "cannot reach " << server_url << std::endl;
        return 2;
      }
      std::cout << res->body << std::endl;
      return res->status / 100 == 2 ? 0 : 1;
    }

    if (*synth_cmd) {
      fs::create_directories(synth_out);
      toy::write_samples(synth_out, toy::generate_samples(synth), synth_labels, synth_prefix);
      std::cout << "wrote " << synth.count << " samples to " << synth_out.string() << std::endl;
      return 0;
    }

    if (*package_cmd) {
      if (package_binary.empty()) {
        package_binary = fs::canonical("/proc/self/exe").parent_path() / "iterforge-toy-executor";
      }
      toy::write_toy_package(package_out, fs::absolute(package_binary));
      std::cout << package_out.string() << std::endl;
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
