#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsbp/nn/model.hpp"
#include "rsbp/phantom.hpp"
#include "rsbp/physics.hpp"
#include "rsbp/train/train.hpp"

namespace rsbp::io {

// Experiment configuration. Every key is optional and defaulted (the
// defaults below are the documented desk-scale setup); unknown keys are
// rejected with a message naming the offending path.
struct ExperimentConfig {
  // geometry
  int n_pixels = 64;
  int n_views = 16;
  // physics
  PhysicsConstants phys;
  // phantom (seed comes from the dataset section)
  PhantomSpec phantom;
  // dataset
  int dataset_count = 250;
  double train_ratio = 0.8;
  std::uint64_t dataset_seed = 1;
  bool noise = true;
  // model
  nn::ModelConfig model;
  bool filtered_sbp = true;
  // train
  train::TrainConfig train_cfg;
  // eval
  std::vector<std::string> eval_methods = {"fbp", "rsbp_cnn"};
  int iterative_iters = 200;
  double iterative_reg = 1.0;

  ViewGeometry geometry() const { return ViewGeometry(n_pixels, n_views); }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj,
                           const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!obj.is_object())
    throw std::invalid_argument("config: '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + where + "." +
                                  it.key() + "'");
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("config: bad value for '" + key + "'");
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& root) {
  ExperimentConfig cfg;
  detail::reject_unknown(
      root, {"geometry", "physics", "phantom", "dataset", "model", "train", "eval"},
      "");

  if (root.contains("geometry")) {
    const auto& g = root.at("geometry");
    detail::reject_unknown(g, {"n_pixels", "n_views"}, "geometry");
    cfg.n_pixels = detail::get_or(g, "n_pixels", cfg.n_pixels);
    cfg.n_views = detail::get_or(g, "n_views", cfg.n_views);
  }
  if (root.contains("physics")) {
    const auto& p = root.at("physics");
    detail::reject_unknown(p, {"mu_per_cm", "pitch_cm", "lambda0"}, "physics");
    cfg.phys.mu = detail::get_or(p, "mu_per_cm", cfg.phys.mu);
    cfg.phys.pitch = detail::get_or(p, "pitch_cm", cfg.phys.pitch);
    cfg.phys.lambda0 = detail::get_or(p, "lambda0", cfg.phys.lambda0);
  }
  if (root.contains("phantom")) {
    const auto& p = root.at("phantom");
    detail::reject_unknown(p,
                           {"n_objects_min", "n_objects_max", "density_min_hu",
                            "density_max_hu", "container"},
                           "phantom");
    cfg.phantom.n_objects_min =
        detail::get_or(p, "n_objects_min", cfg.phantom.n_objects_min);
    cfg.phantom.n_objects_max =
        detail::get_or(p, "n_objects_max", cfg.phantom.n_objects_max);
    cfg.phantom.density_min_hu =
        detail::get_or(p, "density_min_hu", cfg.phantom.density_min_hu);
    cfg.phantom.density_max_hu =
        detail::get_or(p, "density_max_hu", cfg.phantom.density_max_hu);
    cfg.phantom.container = detail::get_or(p, "container", cfg.phantom.container);
  }
  if (root.contains("dataset")) {
    const auto& d = root.at("dataset");
    detail::reject_unknown(d, {"count", "train_ratio", "seed", "noise"}, "dataset");
    cfg.dataset_count = detail::get_or(d, "count", cfg.dataset_count);
    cfg.train_ratio = detail::get_or(d, "train_ratio", cfg.train_ratio);
    cfg.dataset_seed = detail::get_or(d, "seed", cfg.dataset_seed);
    cfg.noise = detail::get_or(d, "noise", cfg.noise);
  }
  if (root.contains("model")) {
    const auto& m = root.at("model");
    detail::reject_unknown(m,
                           {"variant", "depth", "hidden", "width0", "block_convs",
                            "peephole", "filtered_sbp"},
                           "model");
    if (m.contains("variant"))
      cfg.model.variant =
          nn::variant_from_name(m.at("variant").get<std::string>());
    cfg.model.unet.depth = detail::get_or(m, "depth", cfg.model.unet.depth);
    cfg.model.hidden = detail::get_or(m, "hidden", cfg.model.hidden);
    cfg.model.unet.width0 = detail::get_or(m, "width0", cfg.model.unet.width0);
    cfg.model.unet.block_convs =
        detail::get_or(m, "block_convs", cfg.model.unet.block_convs);
    cfg.model.peephole = detail::get_or(m, "peephole", cfg.model.peephole);
    cfg.filtered_sbp = detail::get_or(m, "filtered_sbp", cfg.filtered_sbp);
  }
  if (root.contains("train")) {
    const auto& t = root.at("train");
    detail::reject_unknown(t,
                           {"lr", "batch", "epochs", "patch_in", "patch_out",
                            "seed", "max_steps", "checkpoint_interval"},
                           "train");
    cfg.train_cfg.lr = detail::get_or(t, "lr", cfg.train_cfg.lr);
    cfg.train_cfg.batch_size = detail::get_or(t, "batch", cfg.train_cfg.batch_size);
    cfg.train_cfg.epochs = detail::get_or(t, "epochs", cfg.train_cfg.epochs);
    cfg.train_cfg.patch_in = detail::get_or(t, "patch_in", cfg.train_cfg.patch_in);
    cfg.train_cfg.patch_out =
        detail::get_or(t, "patch_out", cfg.train_cfg.patch_out);
    cfg.train_cfg.seed = detail::get_or(t, "seed", cfg.train_cfg.seed);
    cfg.train_cfg.max_steps = detail::get_or(t, "max_steps", cfg.train_cfg.max_steps);
    cfg.train_cfg.checkpoint_interval =
        detail::get_or(t, "checkpoint_interval", cfg.train_cfg.checkpoint_interval);
  }
  if (root.contains("eval")) {
    const auto& e = root.at("eval");
    detail::reject_unknown(e, {"methods", "iterative_iters", "iterative_reg"},
                           "eval");
    cfg.eval_methods = detail::get_or(e, "methods", cfg.eval_methods);
    cfg.iterative_iters =
        detail::get_or(e, "iterative_iters", cfg.iterative_iters);
    cfg.iterative_reg = detail::get_or(e, "iterative_reg", cfg.iterative_reg);
  }

  cfg.model.n_views = cfg.n_views;
  cfg.model.unet.in_channels = cfg.model.hidden;
  cfg.train_cfg.model = cfg.model;
  cfg.train_cfg.filtered_sbp = cfg.filtered_sbp;
  cfg.phantom.n_pixels = cfg.n_pixels;

  // Fail fast on structurally inconsistent settings.
  cfg.phys.validate();
  cfg.phantom.validate();
  cfg.model.validate();
  cfg.train_cfg.validate();
  if (cfg.n_pixels < 2 || cfg.n_views < 1)
    throw std::invalid_argument("config: geometry must have n_pixels >= 2, n_views >= 1");
  if (cfg.dataset_count < 2)
    throw std::invalid_argument("config: dataset.count must be >= 2");
  if (!(cfg.train_ratio > 0.0 && cfg.train_ratio < 1.0))
    throw std::invalid_argument("config: dataset.train_ratio must be in (0,1)");
  return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {
      {"geometry", {{"n_pixels", cfg.n_pixels}, {"n_views", cfg.n_views}}},
      {"physics",
       {{"mu_per_cm", cfg.phys.mu},
        {"pitch_cm", cfg.phys.pitch},
        {"lambda0", cfg.phys.lambda0}}},
      {"phantom",
       {{"n_objects_min", cfg.phantom.n_objects_min},
        {"n_objects_max", cfg.phantom.n_objects_max},
        {"density_min_hu", cfg.phantom.density_min_hu},
        {"density_max_hu", cfg.phantom.density_max_hu},
        {"container", cfg.phantom.container}}},
      {"dataset",
       {{"count", cfg.dataset_count},
        {"train_ratio", cfg.train_ratio},
        {"seed", cfg.dataset_seed},
        {"noise", cfg.noise}}},
      {"model",
       {{"variant", nn::variant_name(cfg.model.variant)},
        {"depth", cfg.model.unet.depth},
        {"hidden", cfg.model.hidden},
        {"width0", cfg.model.unet.width0},
        {"block_convs", cfg.model.unet.block_convs},
        {"peephole", cfg.model.peephole},
        {"filtered_sbp", cfg.filtered_sbp}}},
      {"train",
       {{"lr", cfg.train_cfg.lr},
        {"batch", cfg.train_cfg.batch_size},
        {"epochs", cfg.train_cfg.epochs},
        {"patch_in", cfg.train_cfg.patch_in},
        {"patch_out", cfg.train_cfg.patch_out},
        {"seed", cfg.train_cfg.seed},
        {"max_steps", cfg.train_cfg.max_steps},
        {"checkpoint_interval", cfg.train_cfg.checkpoint_interval}}},
      {"eval",
       {{"methods", cfg.eval_methods},
        {"iterative_iters", cfg.iterative_iters},
        {"iterative_reg", cfg.iterative_reg}}}};
}

}  // namespace rsbp::io
