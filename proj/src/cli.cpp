// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "corematch/criteria.hpp"
#include "corematch/engine.hpp"
#include "corematch/model.hpp"
#include "corematch/report.hpp"

namespace corematch::cli {

using report::json;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParam:
        case ErrorKind::VocabError:
        case ErrorKind::ShapeError:
        case ErrorKind::SequenceOverflow: return kExitInvalidParam;
        case ErrorKind::IoError:
        case ErrorKind::VersionError:
        case ErrorKind::ChecksumError:
        case ErrorKind::FormatError: return kExitIo;
        default: return kExitInternal;
    }
}

namespace {

struct ModelFlags {
    std::string path;
    model::ModelConfig config;
    model::SyntheticSpec spec;
    std::string activation = "relu";

    void add(CLI::App& app) {
        app.add_option("--model", path, "weight file; otherwise a synthetic model is built from the flags below");
        app.add_option("--layers", config.n_layers, "decoder layers")->capture_default_str();
        app.add_option("--dmodel", config.d_model, "hidden width")->capture_default_str();
        app.add_option("--dffn", config.d_ffn, "FFN width")->capture_default_str();
        app.add_option("--heads", config.n_heads, "attention heads")->capture_default_str();
        app.add_option("--vocab", config.vocab_size, "vocabulary size")->capture_default_str();
        app.add_option("--max-seq", config.max_seq_len, "maximum sequence length")->capture_default_str();
        app.add_option("--pos-scale", config.positional_scale, "positional encoding multiplier")
            ->capture_default_str();
        app.add_option("--activation", activation, "relu or silu")
            ->check(CLI::IsMember({"relu", "silu"}))
            ->capture_default_str();
        app.add_option("--ortho", spec.orthogonality_mix, "0 = Gaussian weights, 1 = scaled-orthogonal")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        app.add_option("--scale", spec.scale, "weight scale")->capture_default_str();
        app.add_option("--qk-gain", spec.qk_gain, "theta in W_q W_k^T = theta I")->capture_default_str();
        app.add_option("--seed", spec.seed, "model seed")->capture_default_str();
    }

    model::Weights load() const {
        if (!path.empty()) {
            return model::load_weights(path);
        }
        model::ModelConfig c = config;
        c.activation = activation == "silu" ? numerics::ActivationKind::Silu : numerics::ActivationKind::Relu;
        c.validate();
        return model::init_synthetic(c, spec);
    }
};

struct PromptFlags {
    engine::PromptRecipe recipe;
    std::string text_ids;

    void add(CLI::App& app) {
        app.add_option("--system-tokens", recipe.system_tokens, "text tokens before the image span")
            ->capture_default_str();
        app.add_option("--image-tokens", recipe.image_tokens, "image patch tokens (the prunable span)")
            ->capture_default_str();
        app.add_option("--text-tokens", recipe.text_tokens, "random text tokens after the image span")
            ->capture_default_str();
        app.add_option("--text-ids", text_ids, "comma-separated text ids after the image span");
        app.add_option("--prompt-seed", recipe.seed, "prompt seed")->capture_default_str();
        app.add_option("--query-align", recipe.query_alignment, "blend of the final token toward the image centre")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
    }

    engine::PromptSpec build(const model::Weights& w) const {
        engine::PromptRecipe r = recipe;
        if (!text_ids.empty()) {
            std::stringstream ss(text_ids);
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    r.text_ids.push_back(static_cast<model::TokenId>(std::stol(item)));
                } catch (const std::exception&) {
                    fail(ErrorKind::InvalidParam, "bad token id '" + item + "' in --text-ids");
                }
            }
        }
        return engine::make_prompt(w, r);
    }
};

struct SparsityFlags {
    engine::SparsityParams params;
    std::string span;
    bool no_token_prune = false;
    bool no_neuron_sparse = false;
    bool drop_early_kv = false;

    void add(CLI::App& app) {
        app.add_option("--rho", params.rho, "per-token core fraction")->capture_default_str();
        app.add_option("--beta", params.beta, "sentence core fraction")->capture_default_str();
        app.add_option("--prune-layer", params.prune_layer, "layer whose FFN selects core tokens")
            ->capture_default_str();
        app.add_option("--prunable-span", span, "start:end of prunable tokens (default: the image span)");
        app.add_flag("--no-token-prune", no_token_prune, "disable token pruning");
        app.add_flag("--no-neuron-sparse", no_neuron_sparse, "dense FFNs during decoding");
        app.add_flag("--drop-early-kv", drop_early_kv, "also drop pruned tokens from caches before prune_layer");
    }

    engine::SparsityParams resolve(const engine::PromptSpec& prompt) const {
        engine::SparsityParams p = params;
        p.enable_token_pruning = !no_token_prune;
        p.enable_neuron_sparsity = !no_neuron_sparse;
        p.retain_early_kv = !drop_early_kv;
        p.prunable_span = prompt.prunable_span;
        if (!span.empty()) {
            const auto colon = span.find(':');
            require(colon != std::string::npos, ErrorKind::InvalidParam, "--prunable-span expects start:end");
            try {
                p.prunable_span = engine::TokenSpan{std::stoul(span.substr(0, colon)), std::stoul(span.substr(colon + 1))};
            } catch (const std::exception&) {
                fail(ErrorKind::InvalidParam, "--prunable-span expects start:end");
            }
        }
        return p;
    }
};

struct Output {
    std::string dir;
    std::vector<std::string> files;

    void prepare() {
        if (dir.empty()) {
            return;
        }
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        require(!ec, ErrorKind::IoError, "cannot create output directory " + dir + ": " + ec.message());
    }

    void write(const std::string& name, const std::string& contents) {
        if (dir.empty()) {
            return;
        }
        report::write_file((std::filesystem::path(dir) / name).string(), contents);
        files.push_back(name);
    }

    // argv without the output directory, so reruns elsewhere reproduce the manifest
    void manifest(const std::vector<std::string>& args, const std::string& subcommand, std::uint64_t seed) {
        if (dir.empty()) {
            return;
        }
        std::vector<std::string> kept;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--out") {
                ++i;
                continue;
            }
            if (args[i].rfind("--out=", 0) == 0) {
                continue;
            }
            kept.push_back(args[i]);
        }
        json m;
        m["tool"] = "corematch";
        m["subcommand"] = subcommand;
        m["argv"] = kept;
        m["seed"] = seed;
        m["schema_version"] = report::kSchemaVersion;
        m["weight_format_version"] = model::kWeightFormatVersion;
        std::vector<std::string> sorted = files;
        std::sort(sorted.begin(), sorted.end());
        m["outputs"] = sorted;
        report::write_file((std::filesystem::path(dir) / "manifest.json").string(), m.dump(2) + "\n");
    }
};

std::string join_tokens(const std::vector<model::TokenId>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        s += (i ? " " : "") + std::to_string(tokens[i]);
    }
    return s;
}

std::size_t thread_cap() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CM_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) {
                n = static_cast<std::size_t>(v);
            }
        } catch (const std::exception&) {
        }
    }
    return n;
}

// Runs fn(i) for i in [0, n) over at most thread_cap() threads; the first
// exception is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::min(thread_cap(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

struct ValidateFlags {
    std::optional<std::size_t> layer;
    double rho = 0.2;
    double beta = 0.4;
    double obs1 = criteria::kObservation1Threshold;
    double obs2 = criteria::kObservation2Threshold;
    double insight1 = criteria::kInsight1Threshold;
    double insight2 = criteria::kInsight2Threshold;
    double matching = criteria::kMatchingThreshold;
    double overlap = 0.6;

    void add(CLI::App& app) {
        app.add_option("--layer", layer, "single layer to analyse (default: all)");
        app.add_option("--rho", rho, "per-token core fraction for the matching check")->capture_default_str();
        app.add_option("--beta", beta, "sentence core fraction for the matching check")->capture_default_str();
        app.add_option("--obs1-threshold", obs1, "max orthogonality deviation")->capture_default_str();
        app.add_option("--obs2-threshold", obs2, "min Pearson r, activation cosine vs overlap")
            ->capture_default_str();
        app.add_option("--insight1-threshold", insight1, "min Spearman, projection vs hidden cosine")
            ->capture_default_str();
        app.add_option("--insight2-threshold", insight2, "min Pearson r, output cosine vs overlap")
            ->capture_default_str();
        app.add_option("--matching-threshold", matching, "min Spearman, projection vs core overlap")
            ->capture_default_str();
        app.add_option("--overlap-threshold", overlap, "min top-16 overlap")->capture_default_str();
    }
};

struct ValidationRun {
    criteria::Observation1Report obs1;
    std::vector<criteria::ValidationSummary> summaries;
    std::vector<criteria::CriterionReport> scores;
};

ValidationRun run_validators(const model::Weights& w, const engine::PromptSpec& prompt, const ValidateFlags& f) {
    const model::ActivationTrace trace = model::forward_dense(w, prompt.embeddings).trace;
    const std::size_t n_layers = trace.layers.size();
    if (f.layer) {
        require(*f.layer < n_layers, ErrorKind::InvalidParam,
                "--layer " + std::to_string(*f.layer) + " out of range for " + std::to_string(n_layers) + " layers");
    }
    require(f.rho > 0.0 && f.rho <= 1.0 && f.beta > 0.0 && f.beta <= 1.0, ErrorKind::InvalidParam,
            "rho and beta must be in (0, 1]");
    std::vector<std::size_t> layers;
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (!f.layer || *f.layer == l) {
            layers.push_back(l);
        }
    }

    ValidationRun run;
    run.obs1 = criteria::validate_observation1(w, f.obs1);
    std::vector<std::vector<criteria::ValidationSummary>> per_layer(layers.size());
    run.scores.resize(layers.size());
    parallel_for(layers.size(), [&](std::size_t k) {
        const std::size_t l = layers[k];
        const auto& e = run.obs1.layers[l];
        const double premise = std::max({e.qk, e.v, e.o});
        criteria::ValidatorOptions o;
        o.threshold = f.obs2;
        per_layer[k].push_back(criteria::validate_observation2(trace, l, o));
        o.threshold = f.insight1;
        per_layer[k].push_back(criteria::validate_insight1(trace, l, o, premise));
        o.threshold = f.insight2;
        per_layer[k].push_back(criteria::validate_insight2(trace, l, o));
        const auto core = sparsity::sentence_core_neurons(trace.layers[l].activations, f.rho, f.beta, l).core;
        if (l + 1 < n_layers) {
            o.threshold = f.matching;
            o.overlap_threshold = f.overlap;
            per_layer[k].push_back(criteria::validate_matching(trace, l, core, o));
        }
        run.scores[k] = criteria::criterion_report(trace, l, std::nullopt, &core);
    });
    for (auto& v : per_layer) {
        for (auto& s : v) {
            run.summaries.push_back(std::move(s));
        }
    }
    return run;
}

int cmd_gen_model(ModelFlags& mf, const std::string& out_path, const std::string& dtype, std::ostream& out) {
    require(!out_path.empty(), ErrorKind::InvalidParam, "--out is required");
    const model::Weights w = mf.load();
    const model::WeightDType dt = dtype == "f32" ? model::WeightDType::F32 : model::WeightDType::F64;
    model::save_weights(w, out_path, dt);
    const auto rep = criteria::validate_observation1(dt == model::WeightDType::F32 ? model::quantize_f32(w) : w);
    out << "layer  qk          v           o           u           d\n";
    for (const auto& e : rep.layers) {
        out << e.layer << "      " << report::format_double(e.qk) << "  " << report::format_double(e.v) << "  "
            << report::format_double(e.o) << "  " << report::format_double(e.u) << "  "
            << report::format_double(e.d) << '\n';
    }
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(model::weights_checksum(w, dt)));
    out << "max deviation " << report::format_double(rep.max_deviation) << '\n';
    out << "checksum " << hex << '\n';
    out << "wrote " << out_path << '\n';

    json m;
    m["tool"] = "corematch";
    m["subcommand"] = "gen-model";
    m["config"] = {{"layers", w.config.n_layers},     {"dmodel", w.config.d_model}, {"dffn", w.config.d_ffn},
                   {"heads", w.config.n_heads},       {"vocab", w.config.vocab_size},
                   {"max_seq", w.config.max_seq_len}, {"pos_scale", w.config.positional_scale}};
    m["seed"] = w.provenance.seed;
    m["ortho"] = w.provenance.orthogonality_mix;
    m["dtype"] = dtype;
    m["checksum"] = hex;
    m["weight_format_version"] = model::kWeightFormatVersion;
    m["schema_version"] = report::kSchemaVersion;
    report::write_file(out_path + ".manifest.json", m.dump(2) + "\n");
    return kExitPass;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Co-adaptive token and neuron sparsity for toy transformer decoders", "corematch"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "expand every subcommand");

    // gen-model
    ModelFlags gen_model;
    std::string gen_out, gen_dtype = "f64";
    CLI::App* gen = app.add_subcommand("gen-model", "build a synthetic model and save it");
    gen_model.add(*gen);
    gen->add_option("--out", gen_out, "weight file path")->required();
    gen->add_option("--dtype", gen_dtype, "f64 or f32 tensors")
        ->check(CLI::IsMember({"f64", "f32"}))
        ->capture_default_str();

    // run
    ModelFlags run_model;
    PromptFlags run_prompt;
    SparsityFlags run_sparse;
    std::size_t run_max_new = 16;
    Output run_out;
    CLI::App* run_cmd = app.add_subcommand("run", "sparse generation with cost report");
    run_model.add(*run_cmd);
    run_prompt.add(*run_cmd);
    run_sparse.add(*run_cmd);
    run_cmd->add_option("--max-new", run_max_new, "tokens to generate")->capture_default_str();
    run_cmd->add_option("--out", run_out.dir, "output directory");

    // dense
    ModelFlags dense_model;
    PromptFlags dense_prompt;
    std::size_t dense_max_new = 16;
    Output dense_out;
    CLI::App* dense_cmd = app.add_subcommand("dense", "dense reference generation");
    dense_model.add(*dense_cmd);
    dense_prompt.add(*dense_cmd);
    dense_cmd->add_option("--max-new", dense_max_new, "tokens to generate")->capture_default_str();
    dense_cmd->add_option("--out", dense_out.dir, "output directory");

    // validate
    ModelFlags val_model;
    PromptFlags val_prompt;
    ValidateFlags val_flags;
    Output val_out;
    CLI::App* val_cmd = app.add_subcommand("validate", "run every validator over a fresh trace");
    val_model.add(*val_cmd);
    val_prompt.add(*val_cmd);
    val_flags.add(*val_cmd);
    val_cmd->add_option("--out", val_out.dir, "output directory");

    // plot-data
    ModelFlags plot_model;
    PromptFlags plot_prompt;
    ValidateFlags plot_flags;
    Output plot_out;
    CLI::App* plot_cmd = app.add_subcommand("plot-data", "binned CSV series for plotting");
    plot_model.add(*plot_cmd);
    plot_prompt.add(*plot_cmd);
    plot_flags.add(*plot_cmd);
    plot_cmd->add_option("--out", plot_out.dir, "output directory")->required();

    // flops
    std::string preset = "llava7b";
    std::size_t fl_prompt = 675, fl_kept = 64, fl_protected = 64, fl_prune = 2, fl_generated = 1, fl_bytes = 2;
    double fl_beta = 0.4;
    Output fl_out;
    CLI::App* fl_cmd = app.add_subcommand("flops", "closed-form prefill/decode cost");
    fl_cmd->add_option("--preset", preset, "llava7b or llava13b")
        ->check(CLI::IsMember({"llava7b", "llava13b"}))
        ->capture_default_str();
    fl_cmd->add_option("--prompt", fl_prompt, "prompt tokens")->capture_default_str();
    fl_cmd->add_option("--kept", fl_kept, "prunable tokens surviving pruning")->capture_default_str();
    fl_cmd->add_option("--protected", fl_protected, "text and system tokens that are never pruned")
        ->capture_default_str();
    fl_cmd->add_option("--prune-layer", fl_prune, "layers before this one see every prompt token")
        ->capture_default_str();
    fl_cmd->add_option("--beta", fl_beta, "decode FFN fraction")->capture_default_str();
    fl_cmd->add_option("--generated", fl_generated, "decode steps averaged over")->capture_default_str();
    fl_cmd->add_option("--bytes", fl_bytes, "bytes per cached value")->capture_default_str();
    fl_cmd->add_option("--out", fl_out.dir, "output directory");

    // token-stats
    ModelFlags ts_model;
    PromptFlags ts_prompt;
    SparsityFlags ts_sparse;
    std::size_t ts_prompts = 8;
    Output ts_out;
    CLI::App* ts_cmd = app.add_subcommand("token-stats", "kept prunable tokens over a batch of prompts");
    ts_model.add(*ts_cmd);
    ts_prompt.add(*ts_cmd);
    ts_sparse.add(*ts_cmd);
    ts_cmd->add_option("--prompts", ts_prompts, "prompts, seeded prompt-seed + i")->capture_default_str();
    ts_cmd->add_option("--out", ts_out.dir, "output directory");

    // replay
    std::string replay_manifest;
    std::string replay_dir;
    CLI::App* replay_cmd = app.add_subcommand("replay", "rerun the command recorded in a manifest");
    replay_cmd->add_option("--manifest", replay_manifest, "manifest.json of an earlier run")->required();
    replay_cmd->add_option("--out", replay_dir, "output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitPass;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitPass;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const CLI::App* sub = nullptr;
        for (const CLI::App* s : app.get_subcommands()) {
            sub = s;
        }
        err << (sub ? sub->help() : app.help());
        return kExitInvalidParam;
    }

    if (gen->parsed()) {
        return cmd_gen_model(gen_model, gen_out, gen_dtype, out);
    }

    if (run_cmd->parsed()) {
        const model::Weights w = run_model.load();
        const engine::PromptSpec prompt = run_prompt.build(w);
        const engine::SparsityParams params = run_sparse.resolve(prompt);
        const engine::GenerationResult g = engine::generate(w, prompt.embeddings, params, run_max_new);
        out << "tokens: " << join_tokens(g.tokens) << '\n';
        out << "kept prunable " << g.state.kept_prunable << "/" << g.state.prunable_total
            << (g.state.pruning_degenerate ? " (no pruning: " + g.state.pruning_note + ")" : "") << '\n';
        out << "prefill ratio " << report::format_double(g.cost.prefill_ratio()) << ", decode ratio "
            << report::format_double(g.cost.decode_ratio()) << '\n';
        run_out.prepare();
        run_out.write("generation.json", report::to_json(g).dump(2) + "\n");
        run_out.write("cost.json", report::to_json(g.cost).dump(2) + "\n");
        if (g.state.selection) {
            std::ostringstream sel;
            sparsity::write_selection_csv(sel, *g.state.selection);
            run_out.write("selection.csv", sel.str());
        }
        std::ostringstream freq;
        for (std::size_t l = 0; l < g.state.frequency.size(); ++l) {
            std::ostringstream one;
            sparsity::write_frequency_csv(one, g.state.frequency[l], g.state.core_sets[l]);
            std::string body = one.str();
            if (l > 0) {
                body = body.substr(body.find('\n') + 1);
            }
            freq << body;
        }
        run_out.write("frequency.csv", freq.str());
        run_out.manifest(args, "run", w.provenance.seed);
        return kExitPass;
    }

    if (dense_cmd->parsed()) {
        const model::Weights w = dense_model.load();
        const engine::PromptSpec prompt = dense_prompt.build(w);
        const auto tokens = model::generate_dense(w, prompt.embeddings, dense_max_new);
        out << "tokens: " << join_tokens(tokens) << '\n';
        dense_out.prepare();
        json j;
        j["schema_version"] = report::kSchemaVersion;
        j["tokens"] = tokens;
        dense_out.write("dense.json", j.dump(2) + "\n");
        dense_out.manifest(args, "dense", w.provenance.seed);
        return kExitPass;
    }

    if (val_cmd->parsed()) {
        const model::Weights w = val_model.load();
        const ValidationRun run = run_validators(w, val_prompt.build(w), val_flags);
        bool ok = run.obs1.verdict == criteria::Verdict::Pass;
        out << "observation1 max_deviation=" << report::format_double(run.obs1.max_deviation) << " "
            << criteria::to_string(run.obs1.verdict) << (run.obs1.note.empty() ? "" : " (" + run.obs1.note + ")")
            << '\n';
        json summaries = json::array();
        std::ostringstream bins;
        report::write_bins_csv_header(bins);
        for (const auto& s : run.summaries) {
            ok = ok && s.verdict == criteria::Verdict::Pass;
            out << s.name << " layer=" << s.layer << " " << s.metric << "="
                << report::format_double(s.statistic()) << " n=" << s.sample_count << " "
                << criteria::to_string(s.verdict) << (s.note.empty() ? "" : " (" + s.note + ")") << '\n';
            summaries.push_back(report::to_json(s));
            report::write_bins_csv_rows(bins, s);
        }
        std::ostringstream scores;
        for (std::size_t k = 0; k < run.scores.size(); ++k) {
            std::ostringstream one;
            report::write_scores_csv(one, run.scores[k]);
            std::string body = one.str();
            if (k > 0) {
                body = body.substr(body.find('\n') + 1);
            }
            scores << body;
        }
        val_out.prepare();
        json j;
        j["schema_version"] = report::kSchemaVersion;
        j["observation1"] = report::to_json(run.obs1);
        j["validators"] = summaries;
        j["pass"] = ok;
        val_out.write("validation.json", j.dump(2) + "\n");
        val_out.write("bins.csv", bins.str());
        val_out.write("scores.csv", scores.str());
        val_out.manifest(args, "validate", w.provenance.seed);
        out << (ok ? "all validators pass" : "validation failed") << '\n';
        return ok ? kExitPass : kExitValidationFail;
    }

    if (plot_cmd->parsed()) {
        const model::Weights w = plot_model.load();
        const ValidationRun run = run_validators(w, plot_prompt.build(w), plot_flags);
        const std::map<std::string, std::string> files = {
            {"insight1", "projection_vs_hidden_cosine.csv"},
            {"observation2", "activation_cosine_vs_overlap.csv"},
            {"insight2", "output_cosine_vs_overlap.csv"},
            {"matching", "projection_vs_core_overlap.csv"}};
        std::map<std::string, std::ostringstream> streams;
        for (const auto& [name, file] : files) {
            report::write_bins_csv_header(streams[name]);
        }
        for (const auto& s : run.summaries) {
            report::write_bins_csv_rows(streams[s.name], s);
        }
        plot_out.prepare();
        for (const auto& [name, file] : files) {
            plot_out.write(file, streams[name].str());
            out << "wrote " << file << '\n';
        }
        plot_out.manifest(args, "plot-data", w.provenance.seed);
        return kExitPass;
    }

    if (fl_cmd->parsed()) {
        const cost::CostModelConfig cfg = cost::CostModelConfig::preset(preset);
        require(fl_prompt > 0, ErrorKind::InvalidParam, "--prompt must be positive");
        require(fl_kept > 0, ErrorKind::InvalidParam, "--kept must be positive");
        const std::size_t n_kept = std::min(fl_prompt, fl_kept + fl_protected);
        const cost::CostReport r = cost::flops_model(cfg, fl_prompt, n_kept, fl_prune, fl_beta, fl_generated);
        const cost::MemoryReport mem = cost::memory_model(cfg, fl_prompt, n_kept, fl_beta, fl_bytes);
        json j;
        j["schema_version"] = report::kSchemaVersion;
        j["preset"] = preset;
        j["n_prompt"] = fl_prompt;
        j["n_kept_total"] = n_kept;
        j["cost"] = report::to_json(r);
        j["memory"] = report::to_json(mem);
        out << "prefill dense " << report::format_double(r.prefill_flops_dense / 1e12) << " TFLOPs, sparse "
            << report::format_double(r.prefill_flops_sparse / 1e12) << " TFLOPs, ratio "
            << report::format_double(r.prefill_ratio()) << '\n';
        out << "decode dense " << report::format_double(r.decode_flops_per_token_dense / 1e9)
            << " GFLOPs/token, sparse " << report::format_double(r.decode_flops_per_token_sparse / 1e9)
            << " GFLOPs/token, ratio " << report::format_double(r.decode_ratio()) << '\n';
        out << "kv ratio " << report::format_double(mem.kv_ratio()) << ", ffn resident ratio "
            << report::format_double(mem.ffn_ratio()) << '\n';
        fl_out.prepare();
        fl_out.write("flops.json", j.dump(2) + "\n");
        fl_out.manifest(args, "flops", 0);
        return kExitPass;
    }

    if (ts_cmd->parsed()) {
        const model::Weights w = ts_model.load();
        require(ts_prompts > 0, ErrorKind::InvalidParam, "--prompts must be positive");
        std::vector<engine::PromptSpec> prompts;
        for (std::size_t i = 0; i < ts_prompts; ++i) {
            PromptFlags pf = ts_prompt;
            pf.recipe.seed = ts_prompt.recipe.seed + i;
            prompts.push_back(pf.build(w));
        }
        const engine::SparsityParams params = ts_sparse.resolve(prompts.front());
        const engine::TokenCountStats s = engine::token_count_stats(w, prompts, params);
        for (std::size_t i = 0; i < s.kept.size(); ++i) {
            out << "prompt " << i << " kept " << s.kept[i] << "/" << s.prunable[i]
                << (s.degenerate[i] ? " degenerate" : "") << '\n';
        }
        out << "mean kept " << report::format_double(s.mean_kept) << ", degenerate rate "
            << report::format_double(s.degenerate_rate) << '\n';
        ts_out.prepare();
        ts_out.write("token_stats.json", report::to_json(s).dump(2) + "\n");
        ts_out.manifest(args, "token-stats", w.provenance.seed);
        return kExitPass;
    }

    if (replay_cmd->parsed()) {
        json m;
        try {
            m = json::parse(report::read_file(replay_manifest));
        } catch (const json::exception& e) {
            fail(ErrorKind::FormatError, "unreadable manifest " + replay_manifest + ": " + e.what());
        }
        require(m.contains("argv") && m["argv"].is_array(), ErrorKind::FormatError,
                "manifest has no argv (gen-model manifests cannot be replayed)");
        std::vector<std::string> next = m["argv"].get<std::vector<std::string>>();
        require(!next.empty() && next.front() != "replay", ErrorKind::FormatError, "manifest argv is not replayable");
        next.push_back("--out");
        next.push_back(replay_dir);
        return dispatch(next, out, err);
    }
    return kExitInternal;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(args, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

int run_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace corematch::cli
