#include "hymirec/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <variant>

namespace hymirec {
namespace {

struct Entry {
    const char* key;
    std::variant<int RunConfig::*, std::int64_t RunConfig::*, std::uint64_t RunConfig::*,
                 double RunConfig::*, bool RunConfig::*, std::string RunConfig::*>
        field;
};

const std::vector<Entry>& schema() {
    static const std::vector<Entry> s = {
        {"seed", &RunConfig::seed},
        {"threads", &RunConfig::threads},
        {"dim", &RunConfig::dim},
        {"codebook.layers", &RunConfig::cb_layers},
        {"codebook.k", &RunConfig::cb_k},
        {"codebook.basepool", &RunConfig::cb_basepool},
        {"codebook.metric", &RunConfig::cb_metric},
        {"codebook.eps_zero", &RunConfig::cb_eps_zero},
        {"kmeans.max_iters", &RunConfig::kmeans_iters},
        {"model.layers_light", &RunConfig::layers_light},
        {"model.layers_refined", &RunConfig::layers_refined},
        {"model.heads", &RunConfig::heads},
        {"model.d_model", &RunConfig::d_model},
        {"model.d_ff", &RunConfig::d_ff},
        {"model.s", &RunConfig::s},
        {"model.s_c", &RunConfig::s_c},
        {"model.n_last", &RunConfig::n_last},
        {"model.l_max", &RunConfig::l_max},
        {"model.indicator", &RunConfig::indicator},
        {"train.lr", &RunConfig::lr},
        {"train.batch", &RunConfig::batch},
        {"train.steps", &RunConfig::steps},
        {"train.negatives_m", &RunConfig::negatives_m},
        {"train.tau", &RunConfig::tau},
        {"train.window", &RunConfig::window},
        {"train.loss_norm", &RunConfig::loss_norm},
        {"train.lr_schedule", &RunConfig::lr_schedule},
        {"train.warmup_ratio", &RunConfig::warmup_ratio},
        {"train.negatives", &RunConfig::negatives},
        {"variant", &RunConfig::variant},
        {"retrieval.k", &RunConfig::k},
        {"retrieval.refresh_period", &RunConfig::refresh_period},
        {"synthetic.clusters", &RunConfig::syn_clusters},
        {"synthetic.items_per_cluster", &RunConfig::syn_items_per_cluster},
        {"synthetic.spread", &RunConfig::syn_spread},
        {"synthetic.users", &RunConfig::syn_users},
        {"synthetic.interests_min", &RunConfig::syn_interests_min},
        {"synthetic.interests_max", &RunConfig::syn_interests_max},
        {"synthetic.seq_len", &RunConfig::syn_seq_len},
        {"synthetic.taste_spread", &RunConfig::syn_taste_spread},
        {"synthetic.taste_pool", &RunConfig::syn_taste_pool},
        {"eval.ks", &RunConfig::eval_ks},
        {"eval.window", &RunConfig::eval_window},
    };
    return s;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw config_error("config: " + key + " expects an integer, got '" + v + "'");
    return x;
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw config_error("config: " + key + " expects a number, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config: " + key + " expects a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const Entry& e : schema()) {
        if (key != e.key) continue;
        std::visit(
            [&](auto member) {
                using T = std::remove_reference_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, int>)
                    cfg.*member = static_cast<int>(parse_int(key, value));
                else if constexpr (std::is_same_v<T, std::int64_t>)
                    cfg.*member = parse_int(key, value);
                else if constexpr (std::is_same_v<T, std::uint64_t>)
                    cfg.*member = static_cast<std::uint64_t>(parse_int(key, value));
                else if constexpr (std::is_same_v<T, double>)
                    cfg.*member = parse_double(key, value);
                else if constexpr (std::is_same_v<T, bool>)
                    cfg.*member = parse_bool(key, value);
                else
                    cfg.*member = value;
            },
            e.field);
        return;
    }
    throw config_error("config: unknown key '" + key + "'");
}

void config_load_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config: " + path + ":" + std::to_string(lineno) +
                               ": expected key=value");
        config_set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string config_echo(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> rows;
    for (const Entry& e : schema()) {
        std::string value = std::visit(
            [&](auto member) -> std::string {
                using T = std::remove_reference_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, bool>)
                    return (cfg.*member) ? "true" : "false";
                else if constexpr (std::is_same_v<T, std::string>)
                    return cfg.*member;
                else if constexpr (std::is_same_v<T, double>) {
                    std::ostringstream os;
                    os << (cfg.*member);
                    return os.str();
                } else {
                    return std::to_string(cfg.*member);
                }
            },
            e.field);
        rows.emplace_back(e.key, std::move(value));
    }
    std::sort(rows.begin(), rows.end());
    std::string out;
    for (const auto& [k, v] : rows) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::vector<int> RunConfig::eval_k_list() const {
    std::vector<int> ks;
    std::string cur;
    for (const char c : eval_ks + ",") {
        if (c == ',') {
            if (!cur.empty()) {
                ks.push_back(static_cast<int>(parse_int("eval.ks", cur)));
                cur.clear();
            }
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (ks.empty()) throw config_error("config: eval.ks is empty");
    for (const int k : ks)
        if (k < 1) throw config_error("config: eval.ks entries must be >= 1");
    return ks;
}

void RunConfig::validate() const {
    if (dim < 1) throw config_error("config: dim must be >= 1");
    if (cb_layers < 1 || cb_k < 1) throw config_error("config: bad codebook geometry");
    if (cb_metric != "cosine" && cb_metric != "euclidean")
        throw config_error("config: codebook.metric must be cosine or euclidean");
    if (loss_norm != "window" && loss_norm != "count")
        throw config_error("config: train.loss_norm must be window or count");
    if (lr_schedule != "cosine" && lr_schedule != "constant")
        throw config_error("config: train.lr_schedule must be cosine or constant");
    if (negatives != "uniform" && negatives != "in_batch")
        throw config_error("config: train.negatives must be uniform or in_batch");
    if (tau <= 0.0) throw config_error("config: train.tau must be > 0");
    if (window < 1) throw config_error("config: train.window must be >= 1");
    if (batch < 1 || steps < 0) throw config_error("config: bad training sizes");
    if (negatives_m < 1) throw config_error("config: train.negatives_m must be >= 1");
    if (k < 1) throw config_error("config: retrieval.k must be >= 1");
    if (refresh_period < 1) throw config_error("config: retrieval.refresh_period must be >= 1");
    eval_k_list();
}

}  // namespace hymirec
