// gsmr: generate GSM-Ranges datasets, run and grade models, build reports.

#include "gsmr/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace gsmr;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

struct EndpointFlags {
  std::string url, model, key_env;
  double timeout = 120;
  int retries = 5;

  ModelEndpoint endpoint() const { return {url, model, key_env, timeout, retries}; }
};

void add_endpoint(CLI::App* cmd, const std::string& role, EndpointFlags& f, std::string url, std::string model) {
  f.url = std::move(url);
  f.model = std::move(model);
  f.key_env = "GSMR_" + std::string(role == "target" ? "TARGET" : "JUDGE") + "_API_KEY";
  cmd->add_option("--" + role + "-url", f.url, "OpenAI-compatible base URL, or mock://target, mock://judge, mock://down")
      ->capture_default_str();
  cmd->add_option("--" + role + "-model", f.model, "model name sent to the endpoint")->capture_default_str();
  cmd->add_option("--" + role + "-key-env", f.key_env, "environment variable holding the API key")->capture_default_str();
  cmd->add_option("--" + role + "-timeout", f.timeout, "per-request timeout, seconds")->capture_default_str();
  cmd->add_option("--" + role + "-retries", f.retries, "retries on 429/5xx/timeouts")->capture_default_str();
}

// Values from --config fill options the command line left unset.
void apply_config(CLI::App& app, const std::string& config_path) {
  if (config_path.empty()) return;
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(read_file(config_path));
  } catch (const std::exception& e) {
    throw CommandError(kExitUsage, "config " + config_path + ": " + e.what());
  }
  if (!cfg.is_object()) throw CommandError(kExitUsage, "config " + config_path + " must hold a JSON object");
  for (auto* sub : app.get_subcommands()) {
    nlohmann::json scoped = cfg;
    if (cfg.contains(sub->get_name()) && cfg[sub->get_name()].is_object()) scoped.update(cfg[sub->get_name()]);
    for (auto* opt : sub->get_options()) {
      if (opt->count() > 0 || opt->get_lnames().empty()) continue;
      auto it = scoped.find(opt->get_lnames().front());
      if (it == scoped.end()) continue;
      auto as_text = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
      if (it->is_array()) {
        for (const auto& v : *it) opt->add_result(as_text(v));
      } else {
        opt->add_result(as_text(*it));
      }
      opt->run_callback();
    }
  }
}

void need(const std::string& value, const std::string& flag) {
  if (value.empty()) throw CommandError(kExitUsage, flag + " is required");
}

std::vector<Level> parse_levels(const std::string& text) {
  std::vector<Level> out;
  for (const auto& s : split(text, ',')) {
    auto l = parse_level(s);
    if (!l) throw CommandError(kExitUsage, "unknown level '" + s + "'");
    out.push_back(*l);
  }
  if (out.empty()) throw CommandError(kExitUsage, "--levels is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GSM-Ranges generator and logical/non-logical error grader"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of option defaults; flags win");

  // generate
  auto* gen = app.add_subcommand("generate", "instantiate templates into per-level dataset files");
  std::string gen_corpus, gen_run, gen_levels = "original,L1,L2,L3,L4,L5,L6", gen_templates;
  GenerationConfig gen_cfg;
  bool gen_skip = false, gen_force = false;
  gen->add_option("--corpus", gen_corpus, "directory of *.tmpl files");
  gen->add_option("--run", gen_run, "run directory");
  gen->add_option("--seed", gen_cfg.master_seed, "master seed")->capture_default_str();
  gen->add_option("--variants", gen_cfg.variants_per_level, "variants per template and level")->capture_default_str();
  gen->add_option("--max-attempts", gen_cfg.max_attempts, "rejection-sampling budget per instance")->capture_default_str();
  gen->add_option("--levels", gen_levels, "comma-separated levels")->capture_default_str();
  gen->add_option("--templates", gen_templates, "comma-separated template ids (default: all)");
  gen->add_option("--threads", gen_cfg.threads, "worker threads, 0 = all cores")->capture_default_str();
  gen->add_flag("--thousands-separator", gen_cfg.render.thousands_separator, "render 1,234,567");
  gen->add_flag("--skip-infeasible", gen_skip, "log and skip templates that cannot meet a level");
  gen->add_flag("--force", gen_force, "replace a dataset generated from other inputs");

  // run / recall share most flags
  RunOptions run_opts;
  std::string run_dir, executor = "builtin-then-guest", guest_cmd;
  EndpointFlags target, judge;
  long guest_timeout_ms = 5000;
  std::string recall_n_text = "1,8,32,48";
  auto add_run_flags = [&](CLI::App* cmd, bool sampling) {
    cmd->add_option("--run", run_dir, "run directory");
    add_endpoint(cmd, "target", target, "", "");
    add_endpoint(cmd, "judge", judge, "https://api.openai.com/v1", "gpt-4o");
    if (sampling) {
      cmd->add_option("--temperature", run_opts.sampling.temperature)->capture_default_str();
      cmd->add_option("--top-p", run_opts.sampling.top_p)->capture_default_str();
      cmd->add_option("--passes", run_opts.sampling.n_passes, "samples per question")->capture_default_str();
    }
    cmd->add_option("--max-tokens", run_opts.sampling.max_tokens)->capture_default_str();
    cmd->add_option("--executor", executor, "builtin, guest or builtin-then-guest")->capture_default_str();
    cmd->add_option("--guest-cmd", guest_cmd, "command line of the sandboxed solver executor");
    cmd->add_option("--guest-timeout-ms", guest_timeout_ms)->capture_default_str();
    cmd->add_option("--concurrency", run_opts.concurrency, "in-flight requests")->capture_default_str();
    cmd->add_option("--max-ungradable", run_opts.max_ungradable_fraction, "fraction that fails the run with exit 4")
        ->capture_default_str();
  };
  auto* run = app.add_subcommand("run", "query the target model and grade every response");
  add_run_flags(run, true);
  auto* recall = app.add_subcommand("recall", "sampled run (T=0.8, top-p 0.95) and recall@n report");
  add_run_flags(recall, false);
  recall->add_option("--recall-n", recall_n_text, "comma-separated n values")->capture_default_str();

  auto* report = app.add_subcommand("report", "error-rate, gap, recall, token and numeral tables");
  bool allow_partial = false;
  report->add_option("--run", run_dir, "run directory");
  report->add_flag("--allow-partial", allow_partial, "report an incomplete grade store");
  report->add_option("--recall-n", recall_n_text, "comma-separated n values")->capture_default_str();

  auto* retest = app.add_subcommand("retest-arith", "mine arithmetic mistakes and retest them standalone");
  std::size_t retest_concurrency = 8;
  retest->add_option("--run", run_dir, "run directory");
  add_endpoint(retest, "target", target, "", "");
  add_endpoint(retest, "judge", judge, "https://api.openai.com/v1", "gpt-4o");
  retest->add_option("--concurrency", retest_concurrency)->capture_default_str();

  auto* numdist = app.add_subcommand("numdist", "magnitude distribution of numerals in a question/answer JSONL file");
  std::string numdist_in, numdist_out;
  numdist->add_option("--input", numdist_in, "JSONL with question and answer fields");
  numdist->add_option("--out", numdist_out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    apply_config(app, config_path);

    auto recall_values = [&] {
      std::vector<int> ns;
      for (const auto& s : split(recall_n_text, ',')) {
        try {
          ns.push_back(std::stoi(s));
        } catch (const std::exception&) {
          throw CommandError(kExitUsage, "bad --recall-n value '" + s + "'");
        }
        if (ns.back() < 1) throw CommandError(kExitUsage, "--recall-n values must be >= 1");
      }
      if (ns.empty()) throw CommandError(kExitUsage, "--recall-n is empty");
      return ns;
    };

    if (*gen) {
      need(gen_corpus, "--corpus");
      need(gen_run, "--run");
      GenerateOptions o;
      o.corpus_dir = gen_corpus;
      o.run_dir = gen_run;
      o.config = gen_cfg;
      o.levels = parse_levels(gen_levels);
      o.template_ids = split(gen_templates, ',');
      o.skip_infeasible = gen_skip;
      o.force = gen_force;
      auto r = cmd_generate(o);
      if (r.up_to_date) {
        std::cout << "up-to-date: " << r.problems << " problems in " << (o.run_dir / "dataset").string() << "\n";
      } else {
        std::cout << "generated " << r.problems << " problems\n";
        for (const auto& f : r.files) std::cout << "  " << f.string() << "\n";
        for (const auto& s : r.skipped)
          std::cerr << "skipped " << s.template_id << " at " << to_string(s.level) << ": " << s.reason << "\n";
      }
      return kExitOk;
    }

    if (*run || *recall) {
      need(run_dir, "--run");
      need(target.url, "--target-url");
      if (target.model.empty()) target.model = target.url.starts_with("mock://") ? "mock-target" : "";
      need(target.model, "--target-model");
      run_opts.run_dir = run_dir;
      run_opts.target = target.endpoint();
      run_opts.judge = judge.endpoint();
      auto policy = parse_executor_policy(executor);
      if (!policy) throw CommandError(kExitUsage, "unknown executor policy '" + executor + "'");
      run_opts.policy = *policy;
      run_opts.guest_command = split(guest_cmd, ' ');
      run_opts.guest_timeout = std::chrono::milliseconds(guest_timeout_ms);
      std::vector<int> ns;
      if (*recall) {
        ns = recall_values();
        int max_tokens = run_opts.sampling.max_tokens;
        run_opts.sampling = SamplingParams::recall(*std::max_element(ns.begin(), ns.end()));
        run_opts.sampling.max_tokens = max_tokens;
      }
      auto r = cmd_run(run_opts);
      std::cout << "inference: " << r.inference.fetched << " fetched, " << r.inference.already_done
                << " already stored, " << r.inference.failed << " failed\n";
      std::cout << "grading: " << r.grading.graded << " graded, " << r.grading.already_done << " already stored, "
                << r.grading.missing_inference << " without inference\n";
      std::cout << "ungradable: " << r.ungradable_total << " of " << r.graded_total << "\n";
      if (*recall) {
        ReportOptions ro{run_opts.run_dir, false, ns};
        auto rep = cmd_report(ro);
        for (const auto& c : rep.recall)
          std::cout << c.model << " " << to_string(c.level) << " recall@" << c.n << " = " << format_fixed(c.recall)
                    << "%\n";
      }
      return kExitOk;
    }

    if (*report) {
      need(run_dir, "--run");
      auto r = cmd_report({run_dir, allow_partial, recall_values()});
      std::cout << r.summary;
      for (const auto& f : r.files) std::cout << "wrote " << f.string() << "\n";
      return kExitOk;
    }

    if (*retest) {
      need(run_dir, "--run");
      need(target.url, "--target-url");
      if (target.model.empty()) target.model = target.url.starts_with("mock://") ? "mock-target" : "";
      need(target.model, "--target-model");
      auto r = cmd_retest_arith({run_dir, target.endpoint(), judge.endpoint(), retest_concurrency});
      std::cout << "arithmetic instances: " << r.mined.instances.size() << " (" << r.mined.skipped.size()
                << " passes skipped)\n";
      for (const auto& c : r.cells)
        std::cout << c.model << " " << to_string(c.level) << ": " << format_fraction_cell(c.correct, c.total)
                  << " correct standalone, " << c.no_numeric << " without a number\n";
      return kExitOk;
    }

    if (*numdist) {
      need(numdist_in, "--input");
      if (!std::filesystem::exists(numdist_in)) throw CommandError(kExitData, "no such file " + numdist_in);
      std::vector<NumeralCorpusItem> items;
      try {
        items = read_question_answer_jsonl(numdist_in);
      } catch (const std::exception& e) {
        throw CommandError(kExitData, e.what());
      }
      auto d = numeral_distribution(items);
      auto csv = numdist_csv(d);
      if (!numdist_out.empty()) detail::write_text(numdist_out, csv);
      std::cout << csv;
      if (d.total) std::cout << "below 1000: " << format_fixed(100.0 * d.fraction_below(Integer(1000)), 2) << "%\n";
      return kExitOk;
    }
  } catch (const CommandError& e) {
    std::cerr << "gsmr: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "gsmr: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
