// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "corematch/error.hpp"

namespace corematch::report {

std::string format_double(double x) {
    if (std::isnan(x)) {
        return "nan";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

// NaN and infinities have no JSON literal
json number(double x) {
    if (std::isfinite(x)) {
        return x;
    }
    return nullptr;
}

}  // namespace

json to_json(const cost::CostReport& r) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["convention"] = r.convention;
    j["prefill_flops_dense"] = r.prefill_flops_dense;
    j["prefill_flops_sparse"] = r.prefill_flops_sparse;
    j["prefill_ratio"] = r.prefill_ratio();
    j["decode_flops_per_token_dense"] = r.decode_flops_per_token_dense;
    j["decode_flops_per_token_sparse"] = r.decode_flops_per_token_sparse;
    j["decode_ratio"] = r.decode_ratio();
    j["kv_cache_entries_dense"] = r.kv_cache_entries_dense;
    j["kv_cache_entries_sparse"] = r.kv_cache_entries_sparse;
    j["ffn_weight_fraction_resident"] = r.ffn_weight_fraction_resident;
    j["token_counts"] = r.token_counts;
    j["n_generated"] = r.n_generated;
    return j;
}

json to_json(const cost::MemoryReport& r) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["kv_bytes_dense"] = r.kv_bytes_dense;
    j["kv_bytes_sparse"] = r.kv_bytes_sparse;
    j["kv_ratio"] = r.kv_ratio();
    j["ffn_weight_bytes_dense"] = r.ffn_weight_bytes_dense;
    j["ffn_weight_bytes_sparse"] = r.ffn_weight_bytes_sparse;
    j["ffn_ratio"] = r.ffn_ratio();
    return j;
}

json to_json(const criteria::ValidationSummary& s) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = s.name;
    j["layer"] = s.layer;
    j["pearson_r"] = number(s.pearson_r);
    j["spearman_r"] = number(s.spearman_r);
    j["sample_count"] = s.sample_count;
    j["metric"] = s.metric;
    j["threshold"] = s.threshold;
    j["verdict"] = std::string(criteria::to_string(s.verdict));
    json extras = json::object();
    for (const auto& [k, v] : s.extras) {
        extras[k] = number(v);
    }
    j["extras"] = extras;
    j["note"] = s.note;
    json bins = json::array();
    for (const criteria::Bin& b : s.bins) {
        bins.push_back({{"x_lo", number(b.x_lo)},
                        {"x_hi", number(b.x_hi)},
                        {"x_mean", number(b.x_mean)},
                        {"y_mean", number(b.y_mean)},
                        {"count", b.count}});
    }
    j["bins"] = bins;
    return j;
}

json to_json(const criteria::Observation1Report& r) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = "observation1";
    j["max_deviation"] = number(r.max_deviation);
    j["threshold"] = r.threshold;
    j["verdict"] = std::string(criteria::to_string(r.verdict));
    j["note"] = r.note;
    json layers = json::array();
    for (const criteria::OrthogonalityEntry& e : r.layers) {
        layers.push_back({{"layer", e.layer},
                          {"qk", number(e.qk)},
                          {"v", number(e.v)},
                          {"o", number(e.o)},
                          {"u", number(e.u)},
                          {"d", number(e.d)},
                          {"d_rows", number(e.d_rows)},
                          {"theta_hat", number(e.theta_hat)}});
    }
    j["layers"] = layers;
    return j;
}

json to_json(const sparsity::CoreTokenSelection& s) {
    json j;
    j["layer"] = s.layer;
    j["threshold"] = s.threshold;
    j["intersection_counts"] = s.intersection_counts;
    j["kept"] = s.kept;
    j["protected"] = s.protected_tokens;
    j["degenerate"] = s.degenerate;
    return j;
}

json to_json(const engine::GenerationResult& g) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tokens"] = g.tokens;
    j["cost"] = to_json(g.cost);
    const engine::PrefillState& st = g.state;
    j["prompt_length"] = st.prompt_length;
    j["kept_prunable"] = st.kept_prunable;
    j["prunable_total"] = st.prunable_total;
    j["pruning_degenerate"] = st.pruning_degenerate;
    j["pruning_note"] = st.pruning_note;
    j["selection"] = st.selection ? to_json(*st.selection) : json(nullptr);
    json cores = json::array();
    for (const sparsity::SentenceCoreSet& c : st.core_sets) {
        cores.push_back({{"layer", c.layer}, {"neurons", c.neuron_ids}});
    }
    j["core_neurons"] = cores;
    json caches = json::array();
    for (const engine::LayerCache& c : st.caches) {
        caches.push_back(c.positions.size());
    }
    j["kv_cache_lengths"] = caches;
    return j;
}

json to_json(const engine::TokenCountStats& s) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["kept"] = s.kept;
    j["prunable"] = s.prunable;
    j["degenerate"] = s.degenerate;
    j["mean_kept"] = s.mean_kept;
    j["degenerate_rate"] = s.degenerate_rate;
    return j;
}

void write_scores_csv(std::ostream& out, const criteria::CriterionReport& r) {
    out << "layer,position,attention,exact_projection,approx_projection,intersection\n";
    for (std::size_t i = 0; i < r.positions.size(); ++i) {
        out << r.layer << ',' << r.positions[i] << ',' << format_double(r.attention_score[i]) << ','
            << format_double(r.exact_projection[i]) << ',' << format_double(r.approx_projection[i]) << ',';
        if (!r.intersection_count.empty()) {
            out << format_double(r.intersection_count[i]);
        }
        out << '\n';
    }
}

void write_bins_csv_header(std::ostream& out) {
    out << "validator,layer,x_lo,x_hi,x_mean,y_mean,count\n";
}

void write_bins_csv_rows(std::ostream& out, const criteria::ValidationSummary& s) {
    for (const criteria::Bin& b : s.bins) {
        out << s.name << ',' << s.layer << ',' << format_double(b.x_lo) << ',' << format_double(b.x_hi) << ','
            << format_double(b.x_mean) << ',' << format_double(b.y_mean) << ',' << b.count << '\n';
    }
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorKind::IoError, "cannot open " + path + " for writing");
    f << contents;
    f.flush();
    require(static_cast<bool>(f), ErrorKind::IoError, "write failed for " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace corematch::report
