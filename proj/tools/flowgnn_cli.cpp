// Command-line pipeline driver: prepare -> train -> evaluate -> report.
// Every run directory is self-describing (it stores the exact resolved
// config), all randomness is hash-split from one seed, and exit codes
// separate config/schema problems (2), data problems (3), and numeric
// divergence (4).
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowgnn/dataio/bundle.hpp"
#include "flowgnn/dataio/encoder.hpp"
#include "flowgnn/dataio/flows.hpp"
#include "flowgnn/dataio/schema.hpp"
#include "flowgnn/dataio/split.hpp"
#include "flowgnn/errors.hpp"
#include "flowgnn/flowgraph/graph.hpp"
#include "flowgnn/models/model.hpp"
#include "flowgnn/rng.hpp"
#include "flowgnn/sampler/sampler.hpp"
#include "flowgnn/trainer/assemble.hpp"
#include "flowgnn/trainer/metrics.hpp"
#include "flowgnn/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace flowgnn;

namespace {

constexpr const char* kDataRootEnv = "FLOWGNN_DATA_ROOT";

// Everything a run needs, serialized into its directory as config.txt.
struct RunConfig {
  std::string dataset;       // raw CSV path (prepare)
  std::string dataset_name;  // bundle's dataset family (set by train)
  std::string schema;        // schema file path
  std::string bundle;        // prepared bundle directory
  std::string model = "gtcn_g";
  std::string task = "multi";
  std::size_t epochs = 10;
  std::size_t batch_size = 500;
  double lr = 0.007;
  std::size_t layers = 3;
  std::size_t heads = 6;
  std::size_t head_dim = 16;
  std::size_t hidden = 128;
  std::size_t sage_layers = 2;
  std::size_t diffusion_order = 2;
  std::size_t window = 8;
  std::size_t embed_rank = 8;
  double dropout = 0.5;
  std::string sample_sizes = "8";  // one entry replicates across hops
  std::uint64_t seed = 0;
  std::string out;
  bool use_class_weights = false;
  double clip_norm = 5.0;
  std::string split_ratios = "5,2,3";
  std::size_t adaptive_budget = 4096;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_config(const fs::path& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "dataset " << c.dataset << "\n"
      << "dataset_name " << c.dataset_name << "\n"
      << "schema " << c.schema << "\n"
      << "bundle " << c.bundle << "\n"
      << "model " << c.model << "\n"
      << "task " << c.task << "\n"
      << "epochs " << c.epochs << "\n"
      << "batch_size " << c.batch_size << "\n"
      << "lr " << fmt_double(c.lr) << "\n"
      << "layers " << c.layers << "\n"
      << "heads " << c.heads << "\n"
      << "head_dim " << c.head_dim << "\n"
      << "hidden " << c.hidden << "\n"
      << "sage_layers " << c.sage_layers << "\n"
      << "diffusion_order " << c.diffusion_order << "\n"
      << "window " << c.window << "\n"
      << "embed_rank " << c.embed_rank << "\n"
      << "dropout " << fmt_double(c.dropout) << "\n"
      << "sample_sizes " << c.sample_sizes << "\n"
      << "seed " << c.seed << "\n"
      << "use_class_weights " << (c.use_class_weights ? 1 : 0) << "\n"
      << "clip_norm " << fmt_double(c.clip_norm) << "\n"
      << "split_ratios " << c.split_ratios << "\n"
      << "adaptive_budget " << c.adaptive_budget << "\n";
  if (!out) throw DataError("write failed: " + path.string());
}

std::size_t to_size(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs an integer, got '" +
                      v + "'");
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a number, got '" + v +
                      "'");
  }
}

RunConfig read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  RunConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    std::string value =
        space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "dataset") c.dataset = value;
    else if (key == "dataset_name") c.dataset_name = value;
    else if (key == "schema") c.schema = value;
    else if (key == "bundle") c.bundle = value;
    else if (key == "model") c.model = value;
    else if (key == "task") c.task = value;
    else if (key == "epochs") c.epochs = to_size(value, key);
    else if (key == "batch_size") c.batch_size = to_size(value, key);
    else if (key == "lr") c.lr = to_double(value, key);
    else if (key == "layers") c.layers = to_size(value, key);
    else if (key == "heads") c.heads = to_size(value, key);
    else if (key == "head_dim") c.head_dim = to_size(value, key);
    else if (key == "hidden") c.hidden = to_size(value, key);
    else if (key == "sage_layers") c.sage_layers = to_size(value, key);
    else if (key == "diffusion_order") c.diffusion_order = to_size(value, key);
    else if (key == "window") c.window = to_size(value, key);
    else if (key == "embed_rank") c.embed_rank = to_size(value, key);
    else if (key == "dropout") c.dropout = to_double(value, key);
    else if (key == "sample_sizes") c.sample_sizes = value;
    else if (key == "seed") c.seed = to_size(value, key);
    else if (key == "use_class_weights")
      c.use_class_weights = to_size(value, key) != 0;
    else if (key == "clip_norm") c.clip_norm = to_double(value, key);
    else if (key == "split_ratios") c.split_ratios = value;
    else if (key == "adaptive_budget") c.adaptive_budget = to_size(value, key);
    else
      throw ConfigError(path.string() + " line " + std::to_string(line_no) +
                        ": unknown config key '" + key + "'");
  }
  return c;
}

std::vector<std::size_t> parse_size_list(const std::string& text,
                                         const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(to_size(item, what));
  }
  if (out.empty()) {
    throw ConfigError(std::string(what) + " must list at least one value");
  }
  return out;
}

// Paths are taken as given when they exist; otherwise the data-root env
// var provides a second base to try. The original spelling comes back
// when neither resolves, so open errors name what the user typed.
std::string resolve_input(const std::string& path) {
  if (path.empty() || fs::exists(path)) return path;
  if (const char* root = std::getenv(kDataRootEnv)) {
    fs::path joined = fs::path(root) / path;
    if (fs::exists(joined)) return joined.string();
  }
  return path;
}

trainer::TrainConfig to_train_config(const RunConfig& c) {
  trainer::TrainConfig tc;
  tc.epochs = c.epochs;
  tc.batch_size = c.batch_size;
  tc.lr = c.lr;
  tc.seed = c.seed;
  tc.task = trainer::task_from_name(c.task);
  tc.use_class_weights = c.use_class_weights;
  tc.sample_sizes = parse_size_list(c.sample_sizes, "sample sizes");
  tc.clip_norm = c.clip_norm;
  return tc;
}

models::Hyper to_hyper(const RunConfig& c, const trainer::GraphDataset& ds,
                       std::size_t num_classes) {
  models::Hyper h;
  h.feature_dim = ds.graph.feature_dim;
  h.num_classes = num_classes;
  h.hidden = c.hidden;
  h.layers = c.layers;
  h.heads = c.heads;
  h.head_dim = c.head_dim;
  h.sage_layers = c.sage_layers;
  h.diffusion_order = c.diffusion_order;
  h.window = c.window;
  h.embed_rank = c.embed_rank;
  h.num_nodes = ds.graph.node_count();
  h.adaptive_budget = c.adaptive_budget;
  h.dropout = c.dropout;
  return h;
}

std::vector<std::string> eval_class_names(const dataio::SplitBundle& bundle,
                                          trainer::Task task) {
  if (task == trainer::Task::kBinary) return {"normal", "attack"};
  return bundle.classes;
}

// ---- prepare ----

int cmd_prepare(const RunConfig& cfg, bool force) {
  if (cfg.dataset.empty()) throw ConfigError("prepare needs --dataset");
  if (cfg.schema.empty()) throw ConfigError("prepare needs --schema");
  if (cfg.out.empty()) throw ConfigError("prepare needs --out");
  const fs::path out = cfg.out;
  if (fs::exists(out / "bundle" / "meta.txt") && !force) {
    throw ConfigError(out.string() +
                      " already holds a prepared bundle; rerun with --force "
                      "to overwrite");
  }

  auto schema = dataio::DatasetSchema::load(resolve_input(cfg.schema));
  auto records = dataio::load_flows(resolve_input(cfg.dataset), schema);
  if (records.empty()) throw DataError("dataset has no flow rows");

  auto ratios = parse_size_list(cfg.split_ratios, "split ratios");
  if (ratios.size() != 3) {
    throw ConfigError("split ratios need exactly three values, got " +
                      std::to_string(ratios.size()));
  }
  dataio::SplitSpec spec;
  spec.ratios = {static_cast<std::uint32_t>(ratios[0]),
                 static_cast<std::uint32_t>(ratios[1]),
                 static_cast<std::uint32_t>(ratios[2])};
  spec.seed = rng::derive(cfg.seed, "split");
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.label_multiclass);
  auto parts = dataio::split(labels, spec);

  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<dataio::FlowRecord> v;
    v.reserve(idx.size());
    for (std::size_t i : idx) v.push_back(records[i]);
    return v;
  };
  auto train_records = pick(parts.train);
  auto encoder = dataio::fit_encoder(train_records, schema);

  dataio::SplitBundle bundle;
  bundle.dataset = schema.name;
  bundle.variant = schema.variant;
  bundle.classes = schema.classes;
  bundle.stratified = parts.stratified;
  bundle.seed = cfg.seed;
  bundle.train = dataio::encode(encoder, train_records, schema);
  bundle.val = dataio::encode(encoder, pick(parts.val), schema);
  bundle.test = dataio::encode(encoder, pick(parts.test), schema);

  fs::create_directories(out / "bundle");
  dataio::save_bundle((out / "bundle").string(), bundle);

  auto ds = trainer::assemble_dataset(bundle, cfg.seed);
  {
    std::ofstream edges(out / "edges.txt");
    if (!edges) throw DataError("cannot write " + (out / "edges.txt").string());
    flowgraph::write_edge_list(ds.graph, edges);
  }

  // Summary: structural counts, the closed-form line-graph prediction,
  // and the class distribution table.
  std::set<std::string> src_keys, dst_keys;
  for (const auto& r : records) {
    src_keys.insert(r.src_key());
    dst_keys.insert(r.dst_key());
  }
  std::vector<std::uint64_t> degrees;
  degrees.reserve(ds.flow_graph.nodes);
  for (std::size_t v = 0; v < ds.flow_graph.nodes; ++v) {
    degrees.push_back(ds.flow_graph.offsets[v + 1] - ds.flow_graph.offsets[v]);
  }
  const std::uint64_t predicted =
      flowgraph::line_graph_edge_count_from_degrees(degrees);

  std::vector<std::size_t> class_counts(schema.classes.size(), 0);
  for (int label : labels) class_counts[static_cast<std::size_t>(label)] += 1;
  std::size_t present = 0;
  for (std::size_t n : class_counts) present += n > 0 ? 1 : 0;

  std::ostringstream s;
  s << "dataset " << schema.name << " (" << schema.variant << ")\n"
    << "flows " << records.size() << "\n"
    << "split train " << bundle.train.rows() << " val " << bundle.val.rows()
    << " test " << bundle.test.rows() << " stratified "
    << (parts.stratified ? "yes" : "no") << "\n"
    << "encoded_feature_width " << bundle.train.feature_dim << "\n"
    << "endpoints sources " << src_keys.size() << " destinations "
    << dst_keys.size() << "\n"
    << "bipartite_side_padded " << std::max(src_keys.size(), dst_keys.size())
    << "\n"
    << "predicted_line_edges " << predicted << "\n"
    << "line_nodes " << ds.graph.node_count() << "\n"
    << "line_edges " << ds.graph.edge_count() << "\n"
    << "classes " << schema.classes.size() << "\n\n"
    << "class,count,share\n";
  for (std::size_t c = 0; c < schema.classes.size(); ++c) {
    const double share =
        static_cast<double>(class_counts[c]) / static_cast<double>(labels.size());
    s << schema.classes[c] << ',' << class_counts[c] << ','
      << fmt_double(share) << "\n";
  }
  if (present <= 1) {
    s << "\nwarning: single-class data; training cannot separate anything\n";
  }
  const std::string summary = s.str();
  {
    std::ofstream f(out / "summary.txt");
    if (!f) throw DataError("cannot write " + (out / "summary.txt").string());
    f << summary;
  }
  write_config(out / "config.txt", cfg);
  std::cout << summary;
  return 0;
}

// ---- train ----

int cmd_train(const RunConfig& base, bool force) {
  RunConfig cfg = base;
  if (cfg.bundle.empty()) throw ConfigError("train needs --bundle");
  if (cfg.out.empty()) throw ConfigError("train needs --out");
  const fs::path out = cfg.out;
  if (fs::exists(out / "checkpoint.fgck") && !force) {
    throw ConfigError(out.string() +
                      " already holds a checkpoint; rerun with --force to "
                      "overwrite");
  }

  auto bundle = dataio::load_bundle(resolve_input(cfg.bundle));
  cfg.dataset_name = bundle.dataset;
  auto ds = trainer::assemble_dataset(bundle, cfg.seed);
  const auto arch = models::arch_from_name(cfg.model);
  auto tc = to_train_config(cfg);
  const std::size_t num_classes = tc.task == trainer::Task::kBinary
                                      ? 2
                                      : bundle.classes.size();
  auto hyper = to_hyper(cfg, ds, num_classes);
  auto state = models::init_model(arch, hyper, rng::derive(cfg.seed, "init"));

  auto result = trainer::train(state, ds, tc);

  fs::create_directories(out);
  {
    std::ofstream f(out / "history.txt");
    if (!f) throw DataError("cannot write " + (out / "history.txt").string());
    trainer::write_history(f, result.history);
  }
  models::save_checkpoint((out / "checkpoint.fgck").string(), result.state);
  write_config(out / "config.txt", cfg);

  const auto& best = result.history[result.best_epoch - 1];
  std::cout << "trained " << cfg.model << " on " << bundle.dataset << " ("
            << cfg.task << " task) for " << cfg.epochs << " epochs\n"
            << "best epoch " << result.best_epoch << " val_weighted_f1 "
            << fmt_double(best.val_weighted_f1) << " train_loss "
            << fmt_double(best.train_loss) << "\n"
            << "run directory " << out.string() << "\n";
  return 0;
}

// ---- evaluate ----

int cmd_evaluate(const RunConfig& cfg, const std::string& run_dir,
                 const std::string& split) {
  if (run_dir.empty()) throw ConfigError("evaluate needs --run");
  const fs::path run = run_dir;

  auto bundle = dataio::load_bundle(resolve_input(cfg.bundle));
  auto ds = trainer::assemble_dataset(bundle, cfg.seed);
  const auto arch = models::arch_from_name(cfg.model);
  auto state =
      models::load_checkpoint((run / "checkpoint.fgck").string(), arch);
  auto tc = to_train_config(cfg);

  const std::vector<std::uint32_t>* ids = nullptr;
  if (split == "train") ids = &ds.train_ids;
  else if (split == "val") ids = &ds.val_ids;
  else if (split == "test") ids = &ds.test_ids;
  else
    throw ConfigError("unknown split '" + split +
                      "' (expected train, val, or test)");

  auto report = trainer::evaluate(state, ds, *ids, tc);
  const auto names = eval_class_names(bundle, tc.task);
  const fs::path report_path =
      run / ("report_" + split + "_" + trainer::task_name(tc.task) + ".txt");
  {
    std::ofstream f(report_path);
    if (!f) throw DataError("cannot write " + report_path.string());
    trainer::write_report(f, report, names);
  }
  std::cout << "split " << split << " (" << ids->size() << " flows)\n";
  trainer::write_report(std::cout, report, names);
  std::cout << "report written to " << report_path.string() << "\n";
  return 0;
}

// ---- report ----

// First value of a "key value" line in a generated report; empty when
// the file or the key is missing.
std::string extract_metric(const fs::path& file, const std::string& key) {
  std::ifstream in(file);
  if (!in) return "";
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  }
  return "";
}

int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& split, const std::string& out_path) {
  struct Row {
    std::string binary = "-";
    std::string multi = "-";
  };
  std::map<std::pair<std::string, std::string>, Row> rows;
  for (const auto& dir : run_dirs) {
    const fs::path run = dir;
    if (!fs::exists(run / "config.txt")) {
      std::cerr << "skipping " << dir << ": no config.txt\n";
      continue;
    }
    RunConfig cfg = read_config(run / "config.txt");
    const std::string dataset =
        cfg.dataset_name.empty() ? cfg.bundle : cfg.dataset_name;
    Row& row = rows[{dataset, cfg.model}];
    const std::string binary = extract_metric(
        run / ("report_" + split + "_binary.txt"), "binary_f1");
    if (!binary.empty()) row.binary = binary;
    const std::string multi = extract_metric(
        run / ("report_" + split + "_multi.txt"), "weighted_f1");
    if (!multi.empty()) row.multi = multi;
  }

  std::ostringstream csv;
  csv << "dataset,model,binary_f1,multi_weighted_f1\n";
  for (const auto& [key, row] : rows) {
    csv << key.first << ',' << key.second << ',' << row.binary << ','
        << row.multi << "\n";
  }
  std::cout << csv.str();
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw DataError("cannot write " + out_path);
    f << csv.str();
  }
  if (rows.empty()) {
    std::cerr << "no usable run directories\n";
    return 2;
  }
  return 0;
}

// ---- flag wiring ----

// Locals that flags bind to, so file values and flag overrides can merge
// after parsing (flags win over --config, which wins over defaults).
struct FlagValues {
  RunConfig v;
  std::string config_path;
  bool force = false;
  std::string run_dir;
  std::string split = "test";
  std::vector<std::string> run_dirs;
  std::map<std::string, CLI::Option*> opts;

  bool is_set(const std::string& flag) const {
    auto it = opts.find(flag);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_io_flags(CLI::App* cmd, FlagValues& f) {
  f.opts["--config"] = cmd->add_option(
      "--config", f.config_path, "config file; flags override its values");
  f.opts["--out"] = cmd->add_option("--out", f.v.out, "output directory");
  f.opts["--seed"] =
      cmd->add_option("--seed", f.v.seed, "master seed; every random stream "
                                          "is hash-split from it");
}

void add_model_flags(CLI::App* cmd, FlagValues& f) {
  f.opts["--model"] = cmd->add_option("--model", f.v.model,
                                      "egraphsage_m, gat, or gtcn_g");
  f.opts["--task"] =
      cmd->add_option("--task", f.v.task, "binary or multi");
  f.opts["--epochs"] = cmd->add_option("--epochs", f.v.epochs, "");
  f.opts["--batch-size"] = cmd->add_option("--batch-size", f.v.batch_size, "");
  f.opts["--lr"] = cmd->add_option("--lr", f.v.lr, "learning rate");
  f.opts["--layers"] =
      cmd->add_option("--layers", f.v.layers, "attention layers");
  f.opts["--heads"] = cmd->add_option("--heads", f.v.heads, "attention heads");
  f.opts["--head-dim"] = cmd->add_option("--head-dim", f.v.head_dim, "");
  f.opts["--hidden"] = cmd->add_option("--hidden", f.v.hidden, "");
  f.opts["--sage-layers"] =
      cmd->add_option("--sage-layers", f.v.sage_layers, "");
  f.opts["--diffusion-order"] =
      cmd->add_option("--diffusion-order", f.v.diffusion_order, "");
  f.opts["--window"] =
      cmd->add_option("--window", f.v.window, "temporal window length");
  f.opts["--embed-rank"] = cmd->add_option("--embed-rank", f.v.embed_rank, "");
  f.opts["--dropout"] = cmd->add_option("--dropout", f.v.dropout, "");
  f.opts["--sample-sizes"] = cmd->add_option(
      "--sample-sizes", f.v.sample_sizes,
      "comma-separated per-hop neighbor budgets; one value replicates");
  f.opts["--class-weights"] = cmd->add_flag(
      "--class-weights", f.v.use_class_weights,
      "weight the loss by inverse training-split class frequency");
  f.opts["--clip-norm"] = cmd->add_option("--clip-norm", f.v.clip_norm, "");
  f.opts["--budget"] = cmd->add_option(
      "--budget", f.v.adaptive_budget,
      "max node count for the dense adaptive adjacency");
}

// Overlays flag values onto `cfg` for exactly the flags the user passed.
void apply_overrides(const FlagValues& f, RunConfig& cfg) {
  auto maybe = [&](const char* flag, auto member) {
    if (f.is_set(flag)) cfg.*member = f.v.*member;
  };
  maybe("--dataset", &RunConfig::dataset);
  maybe("--schema", &RunConfig::schema);
  maybe("--bundle", &RunConfig::bundle);
  maybe("--model", &RunConfig::model);
  maybe("--task", &RunConfig::task);
  maybe("--epochs", &RunConfig::epochs);
  maybe("--batch-size", &RunConfig::batch_size);
  maybe("--lr", &RunConfig::lr);
  maybe("--layers", &RunConfig::layers);
  maybe("--heads", &RunConfig::heads);
  maybe("--head-dim", &RunConfig::head_dim);
  maybe("--hidden", &RunConfig::hidden);
  maybe("--sage-layers", &RunConfig::sage_layers);
  maybe("--diffusion-order", &RunConfig::diffusion_order);
  maybe("--window", &RunConfig::window);
  maybe("--embed-rank", &RunConfig::embed_rank);
  maybe("--dropout", &RunConfig::dropout);
  maybe("--sample-sizes", &RunConfig::sample_sizes);
  maybe("--seed", &RunConfig::seed);
  maybe("--out", &RunConfig::out);
  maybe("--class-weights", &RunConfig::use_class_weights);
  maybe("--clip-norm", &RunConfig::clip_norm);
  maybe("--split-ratios", &RunConfig::split_ratios);
  maybe("--budget", &RunConfig::adaptive_budget);
}

// Resolved config for a subcommand: defaults <- config file <- flags.
RunConfig resolve_config(const FlagValues& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = read_config(resolve_input(f.config_path));
  apply_overrides(f, cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Flow-graph intrusion-detection pipeline: prepare a flow CSV into an "
      "encoded split bundle, train a graph model on it, evaluate splits, "
      "and merge runs into a comparison table. Relative dataset/schema/"
      "bundle paths also resolve against $FLOWGNN_DATA_ROOT."};
  app.require_subcommand(1);
  int rc = 0;

  FlagValues prep;
  auto* prepare = app.add_subcommand(
      "prepare", "encode a flow CSV into a stratified split bundle");
  prep.opts["--dataset"] =
      prepare->add_option("--dataset", prep.v.dataset, "flow CSV path");
  prep.opts["--schema"] =
      prepare->add_option("--schema", prep.v.schema, "schema file path");
  prep.opts["--split-ratios"] = prepare->add_option(
      "--split-ratios", prep.v.split_ratios, "train,val,test ratio");
  add_io_flags(prepare, prep);
  prepare->add_flag("--force", prep.force, "overwrite an existing bundle");
  prepare->callback(
      [&] { rc = cmd_prepare(resolve_config(prep), prep.force); });

  FlagValues trn;
  auto* train_cmd = app.add_subcommand(
      "train", "train a model on a prepared bundle and save a checkpoint");
  trn.opts["--bundle"] = train_cmd->add_option(
      "--bundle", trn.v.bundle, "bundle directory written by prepare");
  add_model_flags(train_cmd, trn);
  add_io_flags(train_cmd, trn);
  train_cmd->add_flag("--force", trn.force, "overwrite an existing run");
  train_cmd->callback([&] { rc = cmd_train(resolve_config(trn), trn.force); });

  FlagValues ev;
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "score a trained run on one split and write a report");
  eval_cmd->add_option("--run", ev.run_dir,
                       "run directory written by train")->required();
  eval_cmd->add_option("--split", ev.split, "train, val, or test");
  ev.opts["--bundle"] = eval_cmd->add_option(
      "--bundle", ev.v.bundle, "override the bundle recorded in the run");
  ev.opts["--batch-size"] =
      eval_cmd->add_option("--batch-size", ev.v.batch_size, "");
  eval_cmd->callback([&] {
    // The run directory is self-describing: its stored config is the
    // base, flags are overrides.
    RunConfig cfg = read_config(fs::path(ev.run_dir) / "config.txt");
    apply_overrides(ev, cfg);
    rc = cmd_evaluate(cfg, ev.run_dir, ev.split);
  });

  FlagValues rep;
  auto* report_cmd = app.add_subcommand(
      "report", "merge evaluated runs into a dataset x model F1 table");
  report_cmd->add_option("runs", rep.run_dirs, "run directories")
      ->required()
      ->expected(-1);
  report_cmd->add_option("--split", rep.split, "split the reports were for");
  report_cmd->add_option("--out", rep.v.out, "also write the CSV here");
  report_cmd->callback(
      [&] { rc = cmd_report(rep.run_dirs, rep.split, rep.v.out); });

  try {
    app.parse(argc, argv);
    return rc;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return 4;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ResourceError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
