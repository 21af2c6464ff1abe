// kinn command-line tool: tag / train / eval / explain / synth.
//
// Exit codes: 0 success, 1 configuration/usage error, 2 data or input error,
// 3 backend (external service) error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kinn/kinn.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::int64_t seed = -1;  // -1: keep the config's seed
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
    cmd->add_option("--config", o.config_path, "path to run-config JSON")
        ->required(config_required);
    cmd->add_option("--seed", o.seed, "override the config seed");
    cmd->add_option("--out", o.out_dir, "override the output directory");
}

kinn::RunConfig resolve_config(const CommonOpts& o) {
    kinn::RunConfig rc = kinn::load_run_config(o.config_path);
    if (o.seed >= 0) rc.kinn.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.out_dir.empty()) rc.out_dir = o.out_dir;
    rc.validate();
    return rc;
}

// Every command echoes the fully resolved config + seed so a run can be
// reproduced from its own output.
void echo_config(const kinn::RunConfig& rc) {
    nlohmann::json j;
    j["resolved_config"] = kinn::to_json(rc);
    j["seed"] = rc.kinn.seed;
    std::cout << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kinn: knowledge-infused text classification pipeline"};
    app.require_subcommand(1);

    CommonOpts tag_o, train_o, eval_o, explain_o;

    CLI::App* tag_cmd = app.add_subcommand("tag", "tag a dataset with lexicon concepts");
    add_common(tag_cmd, tag_o);

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd, train_o);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common(eval_cmd, eval_o);
    std::string eval_split_name = "test";
    eval_cmd->add_option("--split", eval_split_name, "split to evaluate (train|dev|test)");

    CLI::App* explain_cmd =
        app.add_subcommand("explain", "produce explanation reports for documents");
    add_common(explain_cmd, explain_o);
    std::vector<std::string> explain_docs;
    explain_cmd->add_option("--doc", explain_docs, "document id (repeatable)")->required();

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_task = "binary";
    int synth_classes = 2;
    std::size_t synth_docs = 200;
    std::uint64_t synth_seed = 42;
    std::string synth_out = "synth";
    synth_cmd->add_option("--task", synth_task, "binary|multilabel|multiclass");
    synth_cmd->add_option("--classes", synth_classes, "number of classes/labels");
    synth_cmd->add_option("--docs", synth_docs, "number of documents");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--out", synth_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*tag_cmd) {
            kinn::RunConfig rc = resolve_config(tag_o);
            echo_config(rc);
            const std::string path = kinn::run_tag(rc);
            std::cout << "tagged corpus written to " << path << '\n';
        } else if (*train_cmd) {
            kinn::RunConfig rc = resolve_config(train_o);
            echo_config(rc);
            kinn::TrainOutput out = kinn::run_train(rc);
            std::cout << "checkpoint written to " << out.checkpoint_path << '\n'
                      << "training log written to " << out.log_path << '\n';
            if (out.result.converged) std::cout << "training converged\n";
            if (out.result.diverged) std::cout << "training diverged; kept last stable state\n";
        } else if (*eval_cmd) {
            kinn::RunConfig rc = resolve_config(eval_o);
            echo_config(rc);
            kinn::EvalOutput out = kinn::run_eval(rc, kinn::split_from(eval_split_name));
            std::cout << "metrics written to " << out.metrics_path << '\n';
            std::cout << kinn::to_json(out.metrics).dump(2) << '\n';
        } else if (*explain_cmd) {
            kinn::RunConfig rc = resolve_config(explain_o);
            echo_config(rc);
            std::vector<std::string> written = kinn::run_explain(rc, explain_docs);
            for (const std::string& p : written) {
                std::cout << "explanation written to " << p << '\n';
            }
        } else if (*synth_cmd) {
            kinn::SynthOutput out =
                kinn::run_synth(synth_out, kinn::task_from(synth_task), synth_classes,
                                synth_docs, synth_seed);
            std::cout << "dataset written to " << out.dataset_path << " (" << out.num_docs
                      << " docs)\n"
                      << "lexicon written to " << out.lexicon_path << '\n';
        }
    } catch (const kinn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const kinn::BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return 3;
    } catch (const kinn::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
