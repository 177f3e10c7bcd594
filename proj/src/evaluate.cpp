#include "tray/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "tray/errors.hpp"
#include "tray/io.hpp"

namespace tray {

using nlohmann::json;

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

EvalConfig eval_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    EvalConfig c;
    json request = j;
    request["friction"] = {{"type", "none"}};
    c.base = io::plan_request_from_json(request, base_dir);
    c.ground_truth =
        io::ground_truth_from_json(j.value("ground_truth", json::object()), base_dir);
    const json mu = j.value("mu_s", json("tilt"));
    if (mu.is_string()) {
      if (mu.get<std::string>() != "tilt") throw ConfigError("mu_s must be a number or \"tilt\"");
      c.plan_mu_s = virtual_tilt_test(c.ground_truth.mu_s_true, j.value("tilt_increment", 0.01));
    } else {
      c.plan_mu_s = mu.get<double>();
    }
    if (j.contains("scenarios")) {
      for (const auto& s : j["scenarios"]) {
        c.scenarios.push_back({s.value("name", "scenario" + std::to_string(c.scenarios.size())),
                               io::objects_from_json(s)});
      }
    } else {
      c.scenarios.push_back({"default", io::objects_from_json(j)});
    }
    for (const auto& l : j.value("learned", json::array())) {
      const std::string name = l.value("name", "learned");
      if (l.contains("model")) {
        c.learned.push_back({name, io::alpha_from_json({{"type", "model"}, {"path", l["model"]}}, base_dir)});
      } else {
        c.learned.push_back({name, io::alpha_from_json(l.at("alpha"), base_dir)});
      }
    }
    c.sim = io::sim_settings_from_json(j.value("sim", json::object()));
    c.sim.record_timeline = false;
    c.ablations = j.value("ablations", true);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed evaluation config: ") + e.what());
  }
}

namespace {

struct RowTask {
  std::size_t scenario;
  std::string model;
  FrictionSpec friction;
  std::optional<double> t_floor;
};

EvalRow run_row(const EvalConfig& config, const RowTask& task) {
  const EvalScenario& scenario = config.scenarios[task.scenario];
  EvalRow row;
  row.scenario = scenario.name;
  row.model = task.model;
  try {
    PlanRequest request = config.base;
    request.objects = scenario.objects;
    request.friction = task.friction;
    request.t_step_floor = task.t_floor;
    const auto start = std::chrono::steady_clock::now();
    PlanResult plan = plan_time_optimal(request);
    row.plan_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.plan_status = plan.status;
    if (plan.status == PlanStatus::Optimal) {
      row.duration = plan.duration;
      SimSettings sim = config.sim;
      sim.sim_dt = std::min(sim.sim_dt, plan.trajectory.t_step / 10.0);
      const SimResult result =
          simulate_transport(request.model, plan.trajectory, scenario.objects, config.ground_truth, sim);
      row.sim_status = result.status;
      row.mean_displacement_mm = result.mean_displacement_mm();
      row.fell_off = result.any_fell_off();
    } else {
      row.error = "plan infeasible";
    }
    row.plan = std::move(plan);
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

EvalReport run_evaluation(const EvalConfig& config, int jobs) {
  std::vector<RowTask> first;
  for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
    first.push_back({s, "unconstrained", FrictionSpec::none(), std::nullopt});
    first.push_back({s, "coulomb", FrictionSpec::coulomb(config.plan_mu_s), std::nullopt});
    for (const auto& l : config.learned) {
      first.push_back({s, l.name, FrictionSpec::learned(l.alpha, config.plan_mu_s), std::nullopt});
    }
  }
  std::vector<EvalRow> first_rows(first.size());
  parallel_for(static_cast<int>(first.size()), jobs, [&](int i) { first_rows[i] = run_row(config, first[i]); });

  std::vector<RowTask> second;
  if (config.ablations && !config.learned.empty()) {
    for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
      std::optional<double> slowest;
      for (std::size_t i = 0; i < first.size(); ++i) {
        const EvalRow& r = first_rows[i];
        const bool learned = first[i].friction.type == FrictionType::Learned;
        if (first[i].scenario == s && learned && r.plan_status == PlanStatus::Optimal) {
          slowest = std::max(slowest.value_or(0.0), r.plan->trajectory.t_step);
        }
      }
      if (!slowest) continue;
      second.push_back({s, "as-none", FrictionSpec::none(), slowest});
      second.push_back({s, "as-coulomb", FrictionSpec::coulomb(config.plan_mu_s), slowest});
    }
  }
  std::vector<EvalRow> second_rows(second.size());
  parallel_for(static_cast<int>(second.size()), jobs,
               [&](int i) { second_rows[i] = run_row(config, second[i]); });

  EvalReport report;
  for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (first[i].scenario == s) report.rows.push_back(std::move(first_rows[i]));
    }
    for (std::size_t i = 0; i < second.size(); ++i) {
      if (second[i].scenario == s) report.rows.push_back(std::move(second_rows[i]));
    }
  }
  return report;
}

const EvalRow* EvalReport::find(const std::string& scenario, const std::string& model) const {
  for (const auto& r : rows) {
    if (r.scenario == scenario && r.model == model) return &r;
  }
  return nullptr;
}

std::vector<Reduction> EvalReport::reductions() const {
  std::vector<Reduction> out;
  for (const auto& r : rows) {
    if (r.model == "coulomb" || !r.succeeded()) continue;
    const EvalRow* base = find(r.scenario, "coulomb");
    if (!base || !base->succeeded() || base->mean_displacement_mm <= 0.0) continue;
    out.push_back({r.scenario, r.model, 100.0 * (1.0 - r.mean_displacement_mm / base->mean_displacement_mm)});
  }
  return out;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "scenario,model,plan_status,duration_s,plan_seconds,sim_status,mean_displacement_mm,fell_off,"
         "reduction_pct,error\n";
  const auto red = reductions();
  for (const auto& r : rows) {
    std::string pct;
    for (const auto& x : red) {
      if (x.scenario == r.scenario && x.model == r.model) pct = fmt("%.17g", x.percent);
    }
    out << csv_field(r.scenario) << ',' << csv_field(r.model) << ','
        << (r.plan_status ? plan_status_name(*r.plan_status) : "") << ',' << fmt("%.17g", r.duration) << ','
        << fmt("%.3f", r.plan_seconds) << ',' << (r.sim_status ? sim_status_name(*r.sim_status) : "") << ','
        << fmt("%.17g", r.mean_displacement_mm) << ',' << (r.fell_off ? "true" : "false") << ',' << pct << ','
        << csv_field(r.error) << '\n';
  }
  return out.str();
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-14s %-10s %10s %16s %8s %-15s %s\n", "scenario", "model", "plan",
                "duration_s", "displacement_mm", "fell_off", "sim", "error");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %-14s %-10s %10.4f %16.3f %8s %-15s %s\n", r.scenario.c_str(),
                  r.model.c_str(), r.plan_status ? plan_status_name(*r.plan_status) : "-", r.duration,
                  r.mean_displacement_mm, r.fell_off ? "yes" : "no",
                  r.sim_status ? sim_status_name(*r.sim_status) : "-", r.error.c_str());
    out << line;
  }
  const auto red = reductions();
  if (!red.empty()) {
    out << "\ndisplacement reduction vs coulomb\n";
    for (const auto& x : red) {
      std::snprintf(line, sizeof line, "%-12s %-14s %8.1f %%\n", x.scenario.c_str(), x.model.c_str(), x.percent);
      out << line;
    }
  }
  return out.str();
}

}  // namespace tray
