// Command-line front end: dataset generation, training, reconstruction,
// evaluation, and container inspection.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsbp/eval/eval.hpp"
#include "rsbp/io/config.hpp"
#include "rsbp/io/container.hpp"
#include "rsbp/io/export_image.hpp"
#include "rsbp/train/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rsbp;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------- arguments

struct Args {
  std::string command;
  std::map<std::string, std::string> flags;
  std::vector<std::pair<std::string, std::string>> ckpts;  // --ckpt name=path
  std::vector<std::string> positional;

  bool has(const std::string& k) const { return flags.count(k) > 0; }
  std::string need(const std::string& k) const {
    auto it = flags.find(k);
    if (it == flags.end()) throw ConfigError("missing required flag --" + k);
    return it->second;
  }
  std::string get(const std::string& k, const std::string& fallback) const {
    auto it = flags.find(k);
    return it == flags.end() ? fallback : it->second;
  }
};

const char* kUsage =
    "usage: rsbp <command> [flags]\n"
    "\n"
    "commands\n"
    "  gen          --config C --out DIR [--seed S]\n"
    "               generate a phantom dataset (truth/sinogram/backprojection\n"
    "               stacks) plus manifest.json\n"
    "  train        --config C --data DIR --out DIR [--seed S] [--verify]\n"
    "               train the configured variant; writes checkpoint.rsbp and\n"
    "               loss.csv (--verify: float64 arithmetic)\n"
    "  reconstruct  --method M --input SINO.rsbp --out IMG.rsbp\n"
    "               [--params CKPT.rsbp] [--pgm IMG.pgm] [--config C]\n"
    "               methods: fbp, iterative-baseline, fbp_cnn, sbp_cnn, rsbp_cnn\n"
    "  eval         --config C --data DIR --out DIR [--ckpt name=path ...]\n"
    "               score configured methods on the held-out split\n"
    "  inspect      FILE\n"
    "               print a container's header and metadata\n"
    "\n"
    "flags\n"
    "  --config PATH   experiment configuration (JSON)\n"
    "  --seed U64      override the command-relevant seed from the config\n"
    "  --out PATH      output directory (gen/train/eval) or file (reconstruct)\n"
    "  --verify        float64 deterministic mode\n";

Args parse_args(int argc, char** argv) {
  Args a;
  if (argc < 2) throw ConfigError(std::string("no command given\n") + kUsage);
  a.command = argv[1];
  const std::set<std::string> bool_flags = {"verify"};
  const std::set<std::string> value_flags = {"config", "seed",   "out",
                                             "data",   "method", "input",
                                             "params", "pgm",    "ckpt"};
  for (int i = 2; i < argc; ++i) {
    std::string s = argv[i];
    if (s.rfind("--", 0) == 0) {
      const std::string key = s.substr(2);
      if (bool_flags.count(key)) {
        a.flags[key] = "1";
      } else if (value_flags.count(key)) {
        if (i + 1 >= argc) throw ConfigError("flag --" + key + " needs a value");
        const std::string val = argv[++i];
        if (key == "ckpt") {
          const size_t eq = val.find('=');
          if (eq == std::string::npos)
            throw ConfigError("--ckpt expects name=path, got '" + val + "'");
          a.ckpts.emplace_back(val.substr(0, eq), val.substr(eq + 1));
        } else {
          a.flags[key] = val;
        }
      } else {
        throw ConfigError("unknown flag --" + key + "\n" + kUsage);
      }
    } else {
      a.positional.push_back(s);
    }
  }
  return a;
}

std::uint64_t parse_seed(const std::string& s) {
  try {
    size_t pos = 0;
    const std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("--seed must be an unsigned integer, got '" + s + "'");
  }
}

// ------------------------------------------------------------- file io

json load_json(const std::string& path, bool config_phase) {
  std::ifstream f(path);
  if (!f) {
    if (config_phase) throw ConfigError("cannot open config: " + path);
    throw DataError("cannot open: " + path);
  }
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    if (config_phase)
      throw ConfigError("bad JSON in " + path + ": " + e.what());
    throw DataError("bad JSON in " + path + ": " + e.what());
  }
}

io::ExperimentConfig load_config(const Args& args) {
  const json j = load_json(args.need("config"), /*config_phase=*/true);
  try {
    return io::parse_experiment_config(j);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<unsigned char> load_bytes(const std::string& path) {
  try {
    return io::read_file(path);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

void save_text(const std::string& path, const std::string& text) {
  io::write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
}

// ------------------------------------------------- tensor/image bridges

Tensor<double> image_to_tensor(const Image& img) {
  Tensor<double> t({img.n, img.n});
  t.v.assign(img.data.begin(), img.data.end());
  return t;
}

Image tensor_to_image(const Tensor<double>& t, Unit unit) {
  if (t.rank() != 2 || t.dim(0) != t.dim(1))
    throw DataError("container does not hold a square rank-2 image");
  Image img(t.dim(0), unit);
  img.data.assign(t.v.begin(), t.v.end());
  return img;
}

Tensor<double> sino_to_tensor(const Sinogram& s) {
  Tensor<double> t({s.n_views(), s.n_detectors()});
  for (int j = 0; j < s.n_views(); ++j)
    for (int k = 0; k < s.n_detectors(); ++k)
      t.v[static_cast<size_t>(j * s.n_detectors() + k)] =
          s.columns[static_cast<size_t>(j)].values[static_cast<size_t>(k)];
  return t;
}

Sinogram tensor_to_sino(const Tensor<double>& t) {
  if (t.rank() != 2) throw DataError("container does not hold a rank-2 sinogram");
  Sinogram s;
  s.columns.reserve(static_cast<size_t>(t.dim(0)));
  for (int j = 0; j < t.dim(0); ++j) {
    Projection p(j, t.dim(1));
    for (int k = 0; k < t.dim(1); ++k)
      p.values[static_cast<size_t>(k)] =
          t.v[static_cast<size_t>(j * t.dim(1) + k)];
    s.columns.push_back(std::move(p));
  }
  return s;
}

Tensor<double> sbp_to_tensor(const SbpTensor& sbp) {
  const int m = static_cast<int>(sbp.slices.size());
  const int n = sbp.slices.at(0).n;
  Tensor<double> t({m, n, n});
  for (int j = 0; j < m; ++j)
    std::copy(sbp.slices[static_cast<size_t>(j)].data.begin(),
              sbp.slices[static_cast<size_t>(j)].data.end(),
              t.v.begin() + static_cast<long>(j) * n * n);
  return t;
}

SbpTensor tensor_to_sbp(const Tensor<double>& t) {
  if (t.rank() != 3 || t.dim(1) != t.dim(2))
    throw DataError("container does not hold a rank-3 backprojection stack");
  SbpTensor sbp;
  const int n = t.dim(1);
  sbp.geom = ViewGeometry(n, t.dim(0));
  for (int j = 0; j < t.dim(0); ++j) {
    Image img(n, Unit::HU);
    std::copy(t.v.begin() + static_cast<long>(j) * n * n,
              t.v.begin() + static_cast<long>(j + 1) * n * n, img.data.begin());
    sbp.slices.push_back(std::move(img));
  }
  return sbp;
}

// ------------------------------------------------------------------ gen

std::string item_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return std::string("items/") + buf;
}

int cmd_gen(const Args& args) {
  io::ExperimentConfig cfg = load_config(args);
  if (args.has("seed")) cfg.dataset_seed = parse_seed(args.need("seed"));
  const std::string out = args.need("out");

  PhantomSpec master = cfg.phantom;
  master.seed = cfg.dataset_seed;
  auto [train_specs, test_specs] =
      generate_dataset(master, cfg.dataset_count, cfg.train_ratio);
  const ViewGeometry g = cfg.geometry();
  const CounterRng noise_root = CounterRng(cfg.dataset_seed).fork(0x4e4f4953ULL);

  fs::create_directories(fs::path(out) / "items");

  json items = json::array();
  int id = 0;
  auto emit = [&](const PhantomSpec& spec, const char* split) {
    const std::uint64_t noise_seed = noise_root.bits(static_cast<std::uint64_t>(id));
    const Image truth = generate_phantom(spec);
    const Sinogram sino =
        simulate_sinogram(truth, g, cfg.phys, NoiseSpec{cfg.noise, noise_seed});
    const SbpTensor sbp = build_sbp(sino, g, cfg.phys, cfg.filtered_sbp);
    const Image fbp = fbp_reconstruction_hu(sino, g, cfg.phys);

    const json base_meta = {{"image_index", id},
                            {"split", split},
                            {"phantom_seed", spec.seed},
                            {"noise_seed", noise_seed},
                            {"geometry", {{"n_pixels", g.n_pixels}, {"n_views", g.n_views}}},
                            {"filtered_sbp", cfg.filtered_sbp}};
    auto with = [&](const char* kind, const char* unit) {
      json m = base_meta;
      m["kind"] = kind;
      m["unit"] = unit;
      return m;
    };
    const std::string stem = item_stem(id);
    json files;
    struct Out {
      const char* tag;
      std::vector<unsigned char> bytes;
    };
    std::vector<Out> outs;
    outs.push_back({"truth", io::encode_container(image_to_tensor(truth),
                                                  with("truth", "hu"))});
    outs.push_back({"sino", io::encode_container(sino_to_tensor(sino),
                                                 with("sinogram", "line_integral"))});
    outs.push_back(
        {"sbp", io::encode_container(sbp_to_tensor(sbp), with("sbp", "hu"))});
    outs.push_back(
        {"fbp", io::encode_container(image_to_tensor(fbp), with("fbp", "hu"))});
    for (auto& o : outs) {
      const std::string rel = stem + "." + o.tag + ".rsbp";
      io::write_file((fs::path(out) / rel).string(), o.bytes);
      files[o.tag] = rel;
    }
    items.push_back({{"id", id},
                     {"split", split},
                     {"phantom_seed", spec.seed},
                     {"noise_seed", noise_seed},
                     {"files", files}});
    ++id;
  };
  for (const auto& s : train_specs) emit(s, "train");
  for (const auto& s : test_specs) emit(s, "test");

  const json manifest = {{"format_version", 1},
                         {"config", io::experiment_config_to_json(cfg)},
                         {"counts",
                          {{"train", train_specs.size()}, {"test", test_specs.size()}}},
                         {"items", items}};
  save_text((fs::path(out) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::printf("gen: wrote %zu train + %zu test items to %s\n",
              train_specs.size(), test_specs.size(), out.c_str());
  return 0;
}

// ---------------------------------------------------------------- train

struct LoadedDataset {
  json manifest;
  std::string dir;
};

LoadedDataset open_dataset(const std::string& dir,
                           const io::ExperimentConfig& cfg) {
  LoadedDataset d;
  d.dir = dir;
  d.manifest = load_json((fs::path(dir) / "manifest.json").string(),
                         /*config_phase=*/false);
  const auto& mg = d.manifest.at("config").at("geometry");
  const int mn = mg.at("n_pixels").get<int>();
  const int mv = mg.at("n_views").get<int>();
  if (mn != cfg.n_pixels || mv != cfg.n_views)
    throw std::invalid_argument(
        "dataset geometry (" + std::to_string(mn) + " px, " +
        std::to_string(mv) + " views) does not match config geometry (" +
        std::to_string(cfg.n_pixels) + " px, " + std::to_string(cfg.n_views) +
        " views)");
  return d;
}

std::vector<json> split_items(const LoadedDataset& d, const std::string& split) {
  std::vector<json> out;
  for (const auto& it : d.manifest.at("items"))
    if (it.at("split").get<std::string>() == split) out.push_back(it);
  return out;
}

Tensor<double> load_item_tensor(const LoadedDataset& d, const json& item,
                                const char* tag) {
  const std::string rel = item.at("files").at(tag).get<std::string>();
  return io::decode_container<double>(
      load_bytes((fs::path(d.dir) / rel).string()));
}

template <typename T>
int run_train(const Args& args, io::ExperimentConfig cfg) {
  const std::string out = args.need("out");
  LoadedDataset data;
  try {
    data = open_dataset(args.need("data"), cfg);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  std::vector<train::TrainItem> items;
  for (const json& it : split_items(data, "train")) {
    train::TrainItem ti;
    ti.truth = tensor_to_image(load_item_tensor(data, it, "truth"), Unit::HU);
    ti.sbp = tensor_to_sbp(load_item_tensor(data, it, "sbp"));
    ti.fbp = tensor_to_image(load_item_tensor(data, it, "fbp"), Unit::HU);
    items.push_back(std::move(ti));
  }
  if (items.empty()) throw DataError("dataset has no train split items");

  fs::create_directories(out);
  std::printf("train: %zu items, variant %s, %d epoch(s)\n", items.size(),
              nn::variant_name(cfg.model.variant), cfg.train_cfg.epochs);

  const auto checkpoint_cb = [&](int step, const nn::ParamStore<T>& ps) {
    char name[48];
    std::snprintf(name, sizeof(name), "ckpt_%06d.rsbp", step);
    io::write_file((fs::path(out) / name).string(),
                   io::encode_checkpoint(cfg.model, ps));
  };
  const auto progress_cb = [&](const train::StepRecord& r) {
    if (r.step % 50 == 0 || r.step == 1)
      std::printf("  step %d (epoch %d): loss %.6g\n", r.step, r.epoch,
                  r.loss_mean);
  };
  train::TrainResult<T> res =
      train::train_loop<T>(items, cfg.train_cfg, checkpoint_cb, progress_cb);

  io::write_file((fs::path(out) / "checkpoint.rsbp").string(),
                 io::encode_checkpoint(cfg.model, res.params,
                                       {{"train", io::experiment_config_to_json(cfg).at("train")}}));
  save_text((fs::path(out) / "loss.csv").string(), train::history_csv(res.history));
  std::printf("train: wrote %s/checkpoint.rsbp (%zu steps)\n", out.c_str(),
              res.history.size());
  return 0;
}

int cmd_train(const Args& args) {
  io::ExperimentConfig cfg = load_config(args);
  if (args.has("seed")) cfg.train_cfg.seed = parse_seed(args.need("seed"));
  if (args.has("verify")) return run_train<double>(args, cfg);
  return run_train<float>(args, cfg);
}

// ---------------------------------------------------------- reconstruct

struct SinoInput {
  Sinogram sino;
  ViewGeometry geom{2, 1};
  PhysicsConstants phys;
};

SinoInput load_sino(const std::string& path) {
  json meta;
  const Tensor<double> t = io::decode_container<double>(load_bytes(path), &meta);
  SinoInput in;
  in.sino = tensor_to_sino(t);
  in.geom = ViewGeometry(t.dim(1), t.dim(0));
  return in;
}

template <typename T>
Image reconstruct_with_checkpoint(const std::vector<unsigned char>& ckpt,
                                  const SinoInput& in, bool filtered_sbp) {
  nn::ParamStore<T> ps;
  const nn::ModelConfig mc = io::decode_checkpoint<T>(ckpt, ps);
  return eval::reconstruct_neural<T>(mc, ps, in.sino, in.geom, in.phys,
                                     filtered_sbp);
}

int cmd_reconstruct(const Args& args) {
  const std::string method_s = args.need("method");
  eval::Method method;
  try {
    method = eval::method_from_name(method_s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  io::ExperimentConfig cfg;
  if (args.has("config")) cfg = load_config(args);

  SinoInput in = load_sino(args.need("input"));
  in.phys = cfg.phys;

  Image recon(2, Unit::HU);
  switch (method) {
    case eval::Method::fbp:
      recon = fbp_reconstruction_hu(in.sino, in.geom, in.phys);
      break;
    case eval::Method::iterative:
      recon = eval::iterative_baseline(in.sino, in.geom, in.phys,
                                       cfg.iterative_iters, cfg.iterative_reg);
      break;
    default: {
      if (!args.has("params"))
        throw ConfigError("method '" + method_s + "' needs --params CKPT");
      const std::vector<unsigned char> ckpt = load_bytes(args.need("params"));
      const io::ContainerInfo info = io::peek_container(ckpt);
      recon = info.dtype == 1
                  ? reconstruct_with_checkpoint<float>(ckpt, in, cfg.filtered_sbp)
                  : reconstruct_with_checkpoint<double>(ckpt, in, cfg.filtered_sbp);
      break;
    }
  }

  const json meta = {{"kind", "reconstruction"},
                     {"unit", "hu"},
                     {"method", eval::method_name(method)}};
  io::write_file(args.need("out"),
                 io::encode_container(image_to_tensor(recon), meta));
  if (args.has("pgm"))
    io::write_file(args.need("pgm"), io::encode_pgm(recon));
  std::printf("reconstruct: %s -> %s (%dx%d)\n", eval::method_name(method),
              args.need("out").c_str(), recon.n, recon.n);
  return 0;
}

// ----------------------------------------------------------------- eval

int cmd_eval(const Args& args) {
  io::ExperimentConfig cfg = load_config(args);
  const std::string out = args.need("out");
  LoadedDataset data;
  try {
    data = open_dataset(args.need("data"), cfg);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  std::vector<eval::EvalItem> items;
  for (const json& it : split_items(data, "test")) {
    eval::EvalItem ei;
    ei.truth = tensor_to_image(load_item_tensor(data, it, "truth"), Unit::HU);
    ei.sino = tensor_to_sino(load_item_tensor(data, it, "sino"));
    items.push_back(std::move(ei));
  }
  if (items.empty()) throw DataError("dataset has no test split items");

  std::map<std::string, std::string> ckpt_paths(args.ckpts.begin(),
                                                args.ckpts.end());
  const ViewGeometry g = cfg.geometry();

  // Loaded checkpoints (float64 stores; float checkpoints are evaluated in
  // their own dtype via a separate store).
  struct LoadedNet {
    nn::ModelConfig mc;
    nn::ParamStore<float> ps32;
    nn::ParamStore<double> ps64;
    int dtype = 2;
  };
  std::map<std::string, LoadedNet> nets;
  std::vector<std::string> missing;
  int crop_margin = 0;
  for (const std::string& m : cfg.eval_methods) {
    eval::Method method;
    try {
      method = eval::method_from_name(m);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (!eval::method_is_neural(method)) continue;
    auto it = ckpt_paths.find(m);
    if (it == ckpt_paths.end() || !fs::exists(it->second)) {
      missing.push_back(m);
      continue;
    }
    const std::vector<unsigned char> bytes = load_bytes(it->second);
    LoadedNet net;
    net.dtype = io::peek_container(bytes).dtype;
    if (net.dtype == 1)
      net.mc = io::decode_checkpoint<float>(bytes, net.ps32);
    else
      net.mc = io::decode_checkpoint<double>(bytes, net.ps64);
    crop_margin = std::max(
        crop_margin, nn::output_margin(net.mc.unet.depth, net.mc.unet.block_convs));
    nets.emplace(m, std::move(net));
  }

  eval::EvalConfig ecfg;
  ecfg.crop_margin = crop_margin;
  ecfg.iterative_iters = cfg.iterative_iters;
  ecfg.iterative_reg = cfg.iterative_reg;
  ecfg.filtered_sbp = cfg.filtered_sbp;

  std::vector<MethodResult> results;
  for (const std::string& m : cfg.eval_methods) {
    const eval::Method method = eval::method_from_name(m);
    if (eval::method_is_neural(method)) {
      auto it = nets.find(m);
      if (it == nets.end()) continue;  // listed as missing
      if (it->second.dtype == 1) {
        eval::MethodParams<float> net{it->second.mc, &it->second.ps32};
        results.push_back(
            eval::evaluate_method<float>(method, items, g, cfg.phys, ecfg, &net));
      } else {
        eval::MethodParams<double> net{it->second.mc, &it->second.ps64};
        results.push_back(
            eval::evaluate_method<double>(method, items, g, cfg.phys, ecfg, &net));
      }
    } else {
      results.push_back(
          eval::evaluate_method<double>(method, items, g, cfg.phys, ecfg));
    }
  }

  fs::create_directories(out);
  const std::string table = render_table(results);
  save_text((fs::path(out) / "table.txt").string(), table);
  save_text((fs::path(out) / "summary.csv").string(), summary_csv(results));
  save_text((fs::path(out) / "per_image.csv").string(), per_image_csv(results));
  std::fputs(table.c_str(), stdout);

  if (!missing.empty()) {
    for (const std::string& m : missing)
      std::fprintf(stderr, "eval: skipped '%s': no checkpoint supplied\n",
                   m.c_str());
    return 3;
  }
  return 0;
}

// -------------------------------------------------------------- inspect

int cmd_inspect(const Args& args) {
  std::string path;
  if (!args.positional.empty())
    path = args.positional[0];
  else
    path = args.need("input");
  const std::vector<unsigned char> bytes = load_bytes(path);
  io::ContainerInfo info;
  try {
    info = io::peek_container(bytes);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  std::printf("file:    %s\n", path.c_str());
  std::printf("magic:   RSBP (version %u)\n", info.version);
  std::printf("dtype:   %s\n", info.dtype == 1 ? "float32" : "float64");
  std::string dims;
  for (size_t i = 0; i < info.dims.size(); ++i)
    dims += (i ? " x " : "") + std::to_string(info.dims[i]);
  std::printf("dims:    %s (%zu values)\n", dims.c_str(), info.payload_count);
  std::printf("meta:    %s\n", info.meta.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const Args args = parse_args(argc, argv);
    if (args.command == "gen") return cmd_gen(args);
    if (args.command == "train") return cmd_train(args);
    if (args.command == "reconstruct") return cmd_reconstruct(args);
    if (args.command == "eval") return cmd_eval(args);
    if (args.command == "inspect") return cmd_inspect(args);
    if (args.command == "help" || args.command == "--help") {
      std::fputs(kUsage, stdout);
      return 0;
    }
    throw ConfigError("unknown command '" + args.command + "'\n" + kUsage);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  }
}
