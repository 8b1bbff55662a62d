// robinmc: run one task from a configuration file (YAML or JSON).

#include "robinmc/parallel.hpp"
#include "robinmc/runner.hpp"

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using robinmc::json;

json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& e : n) a.push_back(yaml_to_json(e));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
    case YAML::NodeType::Scalar: {
      const std::string s = n.Scalar();
      if (n.Tag() == "!") return s;  // quoted
      if (s == "true" || s == "false") return s == "true";
      if (s == "null" || s == "~") return nullptr;
      try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos == s.size()) return v;
      } catch (...) {
      }
      try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
      } catch (...) {
      }
      return s;
    }
  }
  return nullptr;
}

json load_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw robinmc::ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const bool yaml = path.size() > 5 && (path.ends_with(".yaml") || path.ends_with(".yml"));
  if (!yaml) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      if (path.ends_with(".json")) throw robinmc::ConfigError(std::string("malformed JSON: ") + e.what());
    }
  }
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw robinmc::ConfigError(std::string("malformed YAML: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo and finite-difference solvers for parabolic Robin/Dirichlet problems"};
  std::string config_path;
  robinmc::Overrides ov;
  int workers = 0;
  app.add_option("--config", config_path, "configuration file (.yaml or .json)")->required();
  app.add_option("--seed", ov.seed, "master seed");
  app.add_option("--paths", ov.paths, "paths per point");
  app.add_option("--dt", ov.dt, "time step");
  app.add_option("--out-dir", ov.out_dir, "artifact directory");
  app.add_option("--task", ov.task, "solve-mc | solve-fd | compare | probe | invert | bayes");
  app.add_option("--workers", workers, "worker threads (default: ROBINMC_WORKERS or all cores)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << robinmc::error_json("usage", e.what(), 2).dump() << '\n';
    return 2;
  }
  if (workers <= 0) workers = robinmc::default_workers();

  robinmc::RunConfig cfg;
  try {
    cfg = robinmc::parse_config(load_document(config_path));
  } catch (const robinmc::Error& e) {
    std::cerr << robinmc::error_json(e.kind(), e.what(), 2).dump() << '\n';
    return 2;
  }
  const robinmc::RunOutcome out = robinmc::run(cfg, ov, workers);
  for (const auto& w : out.warnings) std::cerr << robinmc::json{{"warning", w}}.dump() << '\n';
  if (out.exit_code != 0) {
    std::cerr << out.error.dump() << '\n';
    return out.exit_code;
  }
  std::cout << out.summary.dump(2) << '\n';
  return 0;
}
