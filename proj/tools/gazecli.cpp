// Command-line front end: synthesize data, normalize faces, train and
// evaluate gaze models, run leave-one-person-out studies and analyses.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "aresgaze/analysis.hpp"
#include "aresgaze/checkpoint.hpp"
#include "aresgaze/runconfig.hpp"

namespace fs = std::filesystem;
using namespace ag;

namespace {

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string stem_of(const std::string& file) { return fs::path(file).stem().string(); }

constexpr const char* kReportHeader =
    "sample_id,subject,pred_pitch,pred_yaw,gt_pitch,gt_yaw,head_pitch,head_yaw,light,"
    "angular_error_deg";

void write_report(const std::vector<EvalRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open report '" + path + "' for writing");
  out << kReportHeader << "\n";
  for (const auto& r : records) {
    out << r.sample_id << "," << r.subject << "," << fmt_real(r.pred.pitch) << ","
        << fmt_real(r.pred.yaw) << "," << fmt_real(r.gt.pitch) << "," << fmt_real(r.gt.yaw) << ","
        << fmt_real(r.head.pitch) << "," << fmt_real(r.head.yaw) << "," << fmt_real(r.light) << ","
        << fmt_real(r.error_deg) << "\n";
  }
  if (!out) throw IoError("failed writing report '" + path + "'");
}

std::vector<EvalRecord> read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader)
    throw ParseError(path + ": missing or wrong report header");
  std::vector<EvalRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10)
      throw ParseError(path + ": line " + std::to_string(lineno) + ": expected 10 columns");
    EvalRecord r;
    r.sample_id = cells[0];
    r.subject = std::stoi(cells[1]);
    r.pred = {std::stod(cells[2]), std::stod(cells[3])};
    r.gt = {std::stod(cells[4]), std::stod(cells[5])};
    r.head = {std::stod(cells[6]), std::stod(cells[7])};
    r.light = std::stod(cells[8]);
    r.error_deg = std::stod(cells[9]);
    out.push_back(std::move(r));
  }
  return out;
}

/// Loads a normalized dataset: the manifest's face_path names the
/// normalized face image, and the stacked-eye image sits next to it as
/// <face stem>_eyes.pgm.
TrainingSet load_normalized_set(const std::string& manifest, const GazeNetConfig& cfg) {
  const std::string dir = fs::path(manifest).parent_path().string();
  TrainingSet set;
  for (const auto& rec : read_manifest(manifest)) {
    const std::string face_file = dir.empty() ? rec.face_path : dir + "/" + rec.face_path;
    const std::string eyes_file =
        (dir.empty() ? std::string() : dir + "/") + stem_of(rec.face_path) + "_eyes.pgm";
    set.push_back(make_training_sample(cfg, read_pnm(face_file), read_pnm(eyes_file), rec));
  }
  return set;
}

RunConfig run_config_from(const std::string& path, uint64_t seed, bool seed_set) {
  RunConfig rc = path.empty() ? RunConfig{} : load_run_config(path);
  if (seed_set) rc.train.seed = seed;
  return rc;
}

GazeNet load_model(const std::string& ckpt) {
  GazeNetConfig cfg = read_checkpoint_config(ckpt);
  std::mt19937_64 rng(0);
  GazeNet net(cfg, rng);
  load_checkpoint(net, ckpt);
  return net;
}

int cmd_synth(const std::string& out_dir, const SyntheticConfig& cfg) {
  const auto records = generate_dataset(cfg, out_dir);
  std::cout << "wrote " << records.size() << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_normalize(const std::string& manifest, const std::string& out_dir, int size) {
  const std::string dir = fs::path(manifest).parent_path().string();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());

  std::vector<SampleRecord> out_records;
  for (SampleRecord rec : read_manifest(manifest)) {
    const ImageBuffer raw = read_pnm(dir.empty() ? rec.face_path : dir + "/" + rec.face_path);
    const AffineNormalization norm = build_normalization(rec.landmarks, size);
    const ImageBuffer face = warp_affine(raw, norm);
    const StackedEyes eyes = extract_stacked_eyes(face);

    const std::string face_name = rec.sample_id + "_face" + (face.channels == 3 ? ".ppm" : ".pgm");
    write_pnm(face, out_dir + "/" + face_name);
    write_pnm(eyes.image, out_dir + "/" + rec.sample_id + "_face_eyes.pgm");

    rec.face_path = face_name;
    rec.light = mean_intensity(face);
    EyeLandmarks lm;
    norm.apply(rec.landmarks.left_x, rec.landmarks.left_y, lm.left_x, lm.left_y);
    norm.apply(rec.landmarks.right_x, rec.landmarks.right_y, lm.right_x, lm.right_y);
    rec.landmarks = lm;
    out_records.push_back(std::move(rec));
  }
  write_manifest(out_records, out_dir + "/manifest.csv");
  std::cout << "normalized " << out_records.size() << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& manifest, const std::string& ckpt_out,
              bool save_optimizer, const std::string& loss_out) {
  const GazeNetConfig net_cfg = rc.net_config();
  TrainingSet data = load_normalized_set(manifest, net_cfg);
  std::mt19937_64 rng(rc.train.seed);
  GazeNet net(net_cfg, rng);

  std::vector<TensorPtr> params;
  net.visit_params([&](const std::string&, const TensorPtr& t) { params.push_back(t); });

  const TrainResult result = train(net, data, rc.train);
  save_checkpoint(net, ckpt_out, save_optimizer ? &result.optimizer_state : nullptr);
  if (!loss_out.empty()) {
    std::ofstream out(loss_out);
    if (!out) throw IoError("cannot open '" + loss_out + "' for writing");
    out << "epoch,loss\n";
    for (size_t e = 0; e < result.epoch_loss.size(); ++e)
      out << e << "," << fmt_real(result.epoch_loss[e]) << "\n";
  }
  std::cout << "trained " << result.steps << " steps, final epoch loss "
            << fmt_real(result.epoch_loss.back()) << ", saved " << ckpt_out << "\n";
  return 0;
}

int cmd_eval(const std::string& manifest, const std::string& ckpt, const std::string& report) {
  GazeNet net = load_model(ckpt);
  TrainingSet data = load_normalized_set(manifest, net.cfg);
  const EvalResult result = evaluate(net, data);
  if (!report.empty()) write_report(result.records, report);
  std::cout << "mean angular error: " << fmt_real(result.mean_error_deg) << " deg over "
            << result.records.size() << " samples\n";
  return 0;
}

int cmd_loocv(const RunConfig& rc, const std::string& manifest, const std::string& report,
              const std::string& summary, int parallel_folds) {
  const GazeNetConfig net_cfg = rc.net_config();
  TrainingSet data = load_normalized_set(manifest, net_cfg);
  const LoocvResult result = loocv(net_cfg, data, rc.train, parallel_folds);

  if (!report.empty()) {
    std::vector<EvalRecord> all;
    for (const auto& f : result.folds)
      all.insert(all.end(), f.eval.records.begin(), f.eval.records.end());
    write_report(all, report);
  }
  if (!summary.empty()) {
    std::ofstream out(summary);
    if (!out) throw IoError("cannot open '" + summary + "' for writing");
    out << "subject,mean_error_deg\n";
    for (const auto& f : result.folds)
      out << f.subject << "," << fmt_real(f.eval.mean_error_deg) << "\n";
    out << "overall," << fmt_real(result.overall_mean_deg) << "\n";
  }
  for (const auto& f : result.folds)
    std::cout << "subject " << f.subject << ": " << fmt_real(f.eval.mean_error_deg) << " deg\n";
  std::cout << "overall: " << fmt_real(result.overall_mean_deg) << " deg\n";
  return 0;
}

int cmd_ablate_nh(RunConfig rc, const std::string& manifest, const std::string& heads_csv,
                  const std::string& out_csv, int parallel_folds) {
  std::vector<int> heads;
  {
    std::stringstream ss(heads_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) heads.push_back(std::stoi(tok));
  }
  if (heads.empty()) throw ValueError("--nh needs at least one head count");

  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot open '" + out_csv + "' for writing");
  out << "nh,mean_error_deg\n";
  for (int nh : heads) {
    rc.nh = nh;
    const GazeNetConfig net_cfg = rc.net_config();
    TrainingSet data = load_normalized_set(manifest, net_cfg);
    const LoocvResult result = loocv(net_cfg, data, rc.train, parallel_folds);
    out << nh << "," << fmt_real(result.overall_mean_deg) << "\n";
    std::cout << "nh=" << nh << ": " << fmt_real(result.overall_mean_deg) << " deg\n";
  }
  return 0;
}

int cmd_analyze_pose(const std::string& report, double bin, const std::string& baseline,
                     const std::string& out_csv) {
  const PoseBinGrid grid = pose_bin_analysis(read_report(report), bin);
  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot open '" + out_csv + "' for writing");
  if (baseline.empty()) {
    out << "pitch_idx,yaw_idx,pitch_lo,yaw_lo,count,mean_error_deg\n";
    for (const auto& c : grid.cells)
      out << c.pitch_idx << "," << c.yaw_idx << "," << fmt_real(c.pitch_idx * bin) << ","
          << fmt_real(c.yaw_idx * bin) << "," << c.count << "," << fmt_real(c.mean_error_deg)
          << "\n";
  } else {
    const PoseBinGrid base = pose_bin_analysis(read_report(baseline), bin);
    out << "pitch_idx,yaw_idx,diff_deg\n";
    for (const auto& c : pose_bin_difference(grid, base))
      out << c.pitch_idx << "," << c.yaw_idx << "," << fmt_real(c.diff_deg) << "\n";
  }
  std::cout << "wrote " << out_csv << "\n";
  return 0;
}

int cmd_analyze_light(const std::string& report, const std::string& out_csv) {
  const LightBins bins = light_bin_analysis(read_report(report));
  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot open '" + out_csv + "' for writing");
  out << "# ols_slope_deg_per_unit=" << fmt_real(bins.slope) << "\n";
  out << "light_bin,light_lo,light_hi,count,mean_error_deg\n";
  for (int b = 0; b < LightBins::kBins; ++b)
    out << b << "," << fmt_real(b * 25.6) << "," << fmt_real((b + 1) * 25.6) << ","
        << bins.count[static_cast<size_t>(b)] << ","
        << fmt_real(bins.mean_error_deg[static_cast<size_t>(b)]) << "\n";
  std::cout << "slope: " << fmt_real(bins.slope) << " deg per light unit\n";
  return 0;
}

int cmd_export_attn(const std::string& ckpt, const std::string& image_path, int layer_idx,
                    const std::string& query, bool do_threshold, double threshold_pct,
                    bool do_smooth, int smooth_radius, const std::string& prefix) {
  GazeNet net = load_model(ckpt);
  const ImageBuffer img = read_pnm(image_path);
  const BackboneConfig& bc = net.cfg.face;
  if (img.width != bc.input_w || img.height != bc.input_h || img.channels != bc.input_channels)
    throw ShapeError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     "x" + std::to_string(img.channels) + ", face branch expects " +
                     std::to_string(bc.input_w) + "x" + std::to_string(bc.input_h) + "x" +
                     std::to_string(bc.input_channels));

  auto x = Tensor::zeros(Shape{1, bc.input_channels, bc.input_h, bc.input_w});
  size_t i = 0;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int xx = 0; xx < img.width; ++xx) x->v[i++] = img.at(xx, y, c) / 255.0;
  net.face.forward(nullptr, x, /*train=*/false, /*capture_maps=*/true);

  auto layers = net.face.attention_layers();
  if (layers.empty())
    throw ValueError("face branch has no attention-augmented layers (baseline checkpoint)");
  if (layer_idx < 0 || layer_idx >= static_cast<int>(layers.size())) {
    std::string listing;
    for (size_t l = 0; l < layers.size(); ++l)
      listing += (l ? ", " : "") + std::to_string(l) + " (" + std::to_string(layers[l]->in_h) +
                 "x" + std::to_string(layers[l]->in_w) + ")";
    throw ValueError("layer index " + std::to_string(layer_idx) +
                     " has no attention; augmented layers: " + listing);
  }
  AAConvLayer* layer = layers[static_cast<size_t>(layer_idx)];
  const int H = layer->in_h, W = layer->in_w, nh = layer->cfg.nh;

  int qx = W / 2, qy = H / 2;
  if (!query.empty() && std::sscanf(query.c_str(), "%d,%d", &qx, &qy) != 2)
    throw ParseError("--query expects x,y");
  if (qx < 0 || qx >= W || qy < 0 || qy >= H)
    throw ValueError("query pixel outside the " + std::to_string(W) + "x" + std::to_string(H) +
                     " attention extent");
  const int qi = qy * W + qx;
  const int hw = H * W;

  for (int h = 0; h < nh; ++h) {
    std::vector<double> row(layer->last_attention->v.begin() + (h * hw + qi) * hw,
                            layer->last_attention->v.begin() + (h * hw + qi + 1) * hw);
    if (do_threshold) {
      std::vector<double> sorted = row;
      std::sort(sorted.begin(), sorted.end());
      const double cut =
          sorted[static_cast<size_t>(std::min<double>(hw - 1, threshold_pct / 100.0 * hw))];
      for (double& v : row)
        if (v < cut) v = 0.0;
    }
    if (do_smooth) {
      std::vector<double> blurred(row.size(), 0.0);
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double acc = 0.0;
          int n = 0;
          for (int dy = -smooth_radius; dy <= smooth_radius; ++dy)
            for (int dx = -smooth_radius; dx <= smooth_radius; ++dx) {
              const int sy = y + dy, sx = xx + dx;
              if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              acc += row[static_cast<size_t>(sy * W + sx)];
              ++n;
            }
          blurred[static_cast<size_t>(y * W + xx)] = acc / n;
        }
      row = std::move(blurred);
    }
    const auto [mn_it, mx_it] = std::minmax_element(row.begin(), row.end());
    const double mn = *mn_it, mx = *mx_it;
    ImageBuffer map(W, H, 1);
    for (int p = 0; p < hw; ++p)
      map.px[static_cast<size_t>(p)] =
          mx > mn ? static_cast<uint8_t>(std::lround((row[static_cast<size_t>(p)] - mn) /
                                                     (mx - mn) * 255.0))
                  : 128;
    write_pnm(map, prefix + "_h" + std::to_string(h) + ".pgm");
  }

  std::ofstream meta(prefix + "_meta.txt");
  meta << "layer=" << layer_idx << "\nextent=" << W << "x" << H << "\nquery=" << qx << "," << qy
       << "\nheads=" << nh << "\nthreshold="
       << (do_threshold ? fmt_real(threshold_pct) : std::string("off")) << "\nsmooth="
       << (do_smooth ? std::to_string(smooth_radius) : std::string("off")) << "\n";
  std::cout << "wrote " << nh << " attention maps with prefix " << prefix << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ARes-gaze pipeline: synthesize, normalize, train, evaluate, analyze"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out;
  SyntheticConfig scfg;
  bool static_head = false;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--subjects", scfg.subjects, "Subject count");
  synth->add_option("--samples", scfg.samples_per_subject, "Samples per subject");
  synth->add_option("--extent", scfg.extent, "Frame size in pixels");
  synth->add_option("--seed", scfg.seed, "Generator seed");
  synth->add_flag("--static-head", static_head, "Static-head regime (narrow pose/roll)");

  // normalize
  auto* norm = app.add_subcommand("normalize", "Warp raw frames to normalized faces and eyes");
  std::string norm_manifest, norm_out;
  int norm_size = 112;
  norm->add_option("--manifest", norm_manifest, "Raw manifest.csv")->required();
  norm->add_option("--out", norm_out, "Output directory")->required();
  norm->add_option("--size", norm_size, "Normalized face extent Z");

  uint64_t seed = 0;
  std::string config_path, manifest, report, ckpt;
  int parallel_folds = 1;

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a normalized dataset");
  std::string loss_out;
  bool save_opt = false;
  tr->add_option("--data", manifest, "Normalized manifest.csv")->required();
  tr->add_option("--config", config_path, "Run config file (key=value)");
  tr->add_option("--out", ckpt, "Checkpoint output path")->required();
  tr->add_option("--loss-out", loss_out, "Per-epoch loss CSV");
  auto* tr_seed = tr->add_option("--seed", seed, "Seed override");
  tr->add_flag("--save-optimizer", save_opt, "Keep optimizer state in the checkpoint");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--data", manifest, "Normalized manifest.csv")->required();
  ev->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  ev->add_option("--report", report, "Per-sample report CSV");

  // loocv
  auto* lo = app.add_subcommand("loocv", "Leave-one-person-out cross-validation");
  std::string summary;
  lo->add_option("--data", manifest, "Normalized manifest.csv")->required();
  lo->add_option("--config", config_path, "Run config file");
  lo->add_option("--report", report, "Per-sample report CSV");
  lo->add_option("--summary", summary, "Per-subject summary CSV");
  lo->add_option("--parallel-folds", parallel_folds, "Worker threads over folds");
  auto* lo_seed = lo->add_option("--seed", seed, "Seed override");

  // ablate-nh
  auto* ab = app.add_subcommand("ablate-nh", "Compare attention head counts by LOOCV");
  std::string heads_csv = "2,4,8", ablate_out;
  ab->add_option("--data", manifest, "Normalized manifest.csv")->required();
  ab->add_option("--config", config_path, "Run config file");
  ab->add_option("--nh", heads_csv, "Comma list of head counts");
  ab->add_option("--out", ablate_out, "Comparison CSV")->required();
  ab->add_option("--parallel-folds", parallel_folds, "Worker threads over folds");
  auto* ab_seed = ab->add_option("--seed", seed, "Seed override");

  // analyze
  auto* an = app.add_subcommand("analyze", "Bin evaluation reports by pose or light");
  an->require_subcommand(1);
  auto* an_pose = an->add_subcommand("pose", "Head-pose grid of mean errors");
  double bin = 0.20;
  std::string baseline, analyze_out;
  an_pose->add_option("--report", report, "Report CSV")->required();
  an_pose->add_option("--bin", bin, "Bin width in radians");
  an_pose->add_option("--baseline", baseline, "Second report; emit per-cell differences");
  an_pose->add_option("--out", analyze_out, "Output CSV")->required();
  auto* an_light = an->add_subcommand("light", "Light-level bins and error trend");
  an_light->add_option("--report", report, "Report CSV")->required();
  an_light->add_option("--out", analyze_out, "Output CSV")->required();

  // export-attn
  auto* ex = app.add_subcommand("export-attn", "Write per-head attention maps as PGM");
  std::string image_path, query, prefix;
  int layer_idx = 0, smooth_radius = 2;
  double threshold_pct = 80.0;
  ex->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  ex->add_option("--image", image_path, "Normalized face image")->required();
  ex->add_option("--layer", layer_idx, "Attention layer index (forward order)");
  ex->add_option("--query", query, "Query pixel x,y (default center)");
  auto* ex_thr = ex->add_option("--threshold", threshold_pct, "Zero below this percentile");
  auto* ex_smo = ex->add_option("--smooth", smooth_radius, "Box-blur radius");
  ex->add_option("--out", prefix, "Output file prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      scfg.mobile_head = !static_head;
      if (!scfg.mobile_head) scfg.head_roll_range = 0.35;  // scaled down by the generator
      return cmd_synth(synth_out, scfg);
    }
    if (*norm) return cmd_normalize(norm_manifest, norm_out, norm_size);
    if (*tr)
      return cmd_train(run_config_from(config_path, seed, tr_seed->count() > 0), manifest, ckpt,
                       save_opt, loss_out);
    if (*ev) return cmd_eval(manifest, ckpt, report);
    if (*lo)
      return cmd_loocv(run_config_from(config_path, seed, lo_seed->count() > 0), manifest, report,
                       summary, parallel_folds);
    if (*ab)
      return cmd_ablate_nh(run_config_from(config_path, seed, ab_seed->count() > 0), manifest,
                           heads_csv, ablate_out, parallel_folds);
    if (*an_pose) return cmd_analyze_pose(report, bin, baseline, analyze_out);
    if (*an_light) return cmd_analyze_light(report, analyze_out);
    if (*ex)
      return cmd_export_attn(ckpt, image_path, layer_idx, query, ex_thr->count() > 0,
                             threshold_pct, ex_smo->count() > 0, smooth_radius, prefix);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
