#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "ckd/errors.hpp"
#include "ckd/version.hpp"
#include "commands.hpp"
#include "log.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::string seed;
    std::string alpha;
    std::string rank;
    std::string strategy;
    std::vector<std::string> sets; // generic key=value overrides
};

void attach_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "Config file (key = value lines)");
    sub->add_option("--out", args.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", args.seed, "Seed override");
    sub->add_option("--alpha", args.alpha, "Hard-label loss weight override");
    sub->add_option("--rank", args.rank, "LoRA rank override");
    sub->add_option("--strategy", args.strategy,
                    "Soft-label strategy: mlaph|avg-prob|single-cls-prob");
    sub->add_option("--set", args.sets, "Extra key=value config overrides")
        ->expected(-1);
}

ckd::KeyValueConfig resolve_config(const CommonArgs& args) {
    ckd::KeyValueConfig config;
    if (!args.config_path.empty()) {
        config = ckd::KeyValueConfig::parse_file(args.config_path);
    }
    if (!args.seed.empty()) {
        config.set("seed", args.seed);
    }
    if (!args.alpha.empty()) {
        config.set("loss.alpha", args.alpha);
    }
    if (!args.rank.empty()) {
        config.set("lora.rank", args.rank);
    }
    if (!args.strategy.empty()) {
        config.set("strategy", args.strategy);
    }
    for (const auto& kv : args.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ckd::config_error("--set expects key=value, got: " + kv);
        }
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return config;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ckd::schema_error*>(&e) ||
        dynamic_cast<const ckd::config_error*>(&e) ||
        dynamic_cast<const ckd::template_error*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const ckd::missing_artifact_error*>(&e)) {
        return 3;
    }
    if (dynamic_cast<const ckd::divergence_error*>(&e)) {
        return 4;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EHR visit fusion, teacher fine-tuning, and student distillation pipeline"};
    app.set_version_flag("--version", std::string(ckd::kVersion));
    app.require_subcommand(1);

    struct SubcommandSpec {
        const char* name;
        const char* description;
    };
    const SubcommandSpec specs[] = {
        {"synth", "Generate a synthetic visit cohort with planted treatment efficacy"},
        {"fuse", "Ingest visits, rank efficacy, render fused training samples"},
        {"train-teacher", "Fine-tune the teacher adapters and projection head"},
        {"distill", "Train the student against hard labels and teacher soft labels"},
        {"eval", "Score a trained model on a fused evaluation corpus"},
        {"sweep-alpha", "Distill once per alpha and tabulate the metrics"},
        {"bench", "Single-sample inference benchmark of teacher vs student"},
        {"ablate", "Run the 2x2 fusion/distillation ablation grid"},
    };

    std::map<std::string, CommonArgs> args_by_name;
    for (const auto& spec : specs) {
        auto* sub = app.add_subcommand(spec.name, spec.description);
        attach_common(sub, args_by_name[spec.name]);
    }

    CommonArgs replay_args;
    std::string manifest_path;
    auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest and diff");
    replay->add_option("--manifest", manifest_path, "Manifest JSON from a previous run")
        ->required();
    replay->add_option("--out", replay_args.out_dir, "Replay output directory")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (replay->parsed()) {
            std::string report;
            const bool ok =
                ckd::tools::replay_manifest(manifest_path, replay_args.out_dir, &report);
            std::fputs(report.c_str(), stdout);
            if (!ok) {
                ckd::tools::log_error("replay diverged from the recorded outputs");
                return 1;
            }
            ckd::tools::log_info("replay reproduced every recorded output");
            return 0;
        }
        for (const auto& spec : specs) {
            auto* sub = app.get_subcommand(spec.name);
            if (sub->parsed()) {
                const auto config = resolve_config(args_by_name[spec.name]);
                ckd::tools::run_command(spec.name, config, args_by_name[spec.name].out_dir);
                return 0;
            }
        }
        ckd::tools::log_error("no subcommand given");
        return 1;
    } catch (const ckd::error& e) {
        ckd::tools::log_error(e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        ckd::tools::log_error(e.what());
        return 1;
    }
}
