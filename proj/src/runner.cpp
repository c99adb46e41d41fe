#include "vidcorr/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vidcorr/archive.hpp"
#include "vidcorr/propagation.hpp"
#include "vidcorr/spatial.hpp"
#include "vidcorr/temporal.hpp"

namespace vidcorr {

namespace fs = std::filesystem;

std::string format_csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_checkpoint(const Encoder& encoder, const RunConfig& config, const std::string& path) {
  ArchiveWriter writer;
  save_encoder_weights(encoder, writer);
  writer.add_bytes("manifest", config.serialize());
  writer.write(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  ArchiveReader reader(path);
  RunConfig config = RunConfig::parse(reader.bytes("manifest"));
  Encoder encoder = load_encoder_weights(config.encoder, reader);
  return Checkpoint{std::move(encoder), std::move(config)};
}

std::vector<SynthClip> build_corpus(const RunConfig& config) {
  std::vector<SynthClip> corpus;
  corpus.reserve(static_cast<std::size_t>(config.train_clips));
  for (int i = 0; i < config.train_clips; ++i) {
    corpus.push_back(synth_clip(config.data, config.data_seed + static_cast<std::uint64_t>(i)));
  }
  return corpus;
}

TrainArtifacts run_train_spatial(const RunConfig& config, const std::string& outdir) {
  fs::create_directories(outdir);
  config.save(outdir + "/config.resolved");

  Encoder student(config.encoder);
  SpatialTrainer trainer(student, config.spatial);

  std::ofstream csv(outdir + "/loss.csv");
  csv << "step,loss\n";
  double last = 0.0;
  for (int step = 0; step < config.spatial.steps; ++step) {
    last = trainer.train_step();
    csv << step << "," << format_csv_double(last) << "\n";
  }
  csv.close();

  TrainArtifacts out;
  out.checkpoint = outdir + "/checkpoint.vta";
  out.loss_csv = outdir + "/loss.csv";
  out.final_loss = last;
  save_checkpoint(student, config, out.checkpoint);
  return out;
}

TrainArtifacts run_train_temporal(const RunConfig& config, const std::string& outdir,
                                  const std::string& init_checkpoint) {
  fs::create_directories(outdir);
  config.save(outdir + "/config.resolved");

  std::optional<Encoder> student;
  std::optional<Encoder> teacher;
  if (init_checkpoint.empty()) {
    student.emplace(config.encoder);
  } else {
    Checkpoint ckpt = load_checkpoint(init_checkpoint);
    if (ckpt.config.encoder.stage_channels != config.encoder.stage_channels ||
        ckpt.config.encoder.stage_total_strides != config.encoder.stage_total_strides) {
      throw ConfigError("train-temporal: checkpoint encoder does not match the config");
    }
    // The step-1 weights both initialize the student and, frozen, anchor the
    // global correlation distillation.
    teacher = ckpt.encoder.clone_detached();
    teacher->freeze();
    student.emplace(std::move(ckpt.encoder));
  }

  std::vector<SynthClip> corpus = build_corpus(config);
  TemporalTrainer trainer(*student, teacher ? &*teacher : nullptr, corpus, config.temporal);

  std::ofstream csv(outdir + "/temporal_loss.csv");
  csv << "step,rec,lc,gc,total,masked_fraction\n";
  LossBreakdown last;
  for (int step = 0; step < config.temporal.steps; ++step) {
    last = trainer.train_step();
    csv << step << "," << format_csv_double(last.rec) << "," << format_csv_double(last.lc) << ","
        << format_csv_double(last.gc) << "," << format_csv_double(last.total) << ","
        << format_csv_double(last.masked_fraction) << "\n";
  }
  csv.close();

  TrainArtifacts out;
  out.checkpoint = outdir + "/checkpoint.vta";
  out.loss_csv = outdir + "/temporal_loss.csv";
  out.final_loss = last.total;
  save_checkpoint(*student, config, out.checkpoint);
  return out;
}

namespace {

SynthConfig eval_synth_config(const RunConfig& config) {
  SynthConfig c = config.eval_data;
  c.length = config.eval_clip_length;
  return c;
}

}  // namespace

EvalArtifacts run_eval_synth(const RunConfig& config, const std::string& checkpoint,
                             const std::string& outdir, int train_iters,
                             const std::string& export_clips_dir) {
  fs::create_directories(outdir);
  config.save(outdir + "/config.resolved");

  std::optional<Encoder> encoder;
  RunConfig effective = config;
  if (!checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    effective = ckpt.config;
    // Evaluation settings come from the caller, normalization from training.
    effective.eval_clips = config.eval_clips;
    effective.eval_clip_length = config.eval_clip_length;
    effective.eval_seed = config.eval_seed;
    effective.eval_data = config.eval_data;
    effective.propagation = config.propagation;
    effective.propagation.lab = ckpt.config.temporal.lab;
    effective.propagation.tau = config.propagation.tau;
    encoder.emplace(std::move(ckpt.encoder));
  } else {
    encoder.emplace(config.encoder);
    if (train_iters > 0) {
      RunConfig train_cfg = config;
      train_cfg.temporal.steps = train_iters;
      train_cfg.finalize();
      std::vector<SynthClip> corpus = build_corpus(train_cfg);
      TemporalTrainer trainer(*encoder, nullptr, corpus, train_cfg.temporal);
      for (int i = 0; i < train_iters; ++i) trainer.train_step();
    }
  }

  const SynthConfig synth_cfg = eval_synth_config(effective);
  std::ofstream csv(outdir + "/scores.csv");
  csv << "sequence,frame,J,F\n";

  EvalArtifacts out;
  double jsum = 0.0, fsum = 0.0;
  for (int s = 0; s < effective.eval_clips; ++s) {
    SynthClip clip = synth_clip(synth_cfg, effective.eval_seed + static_cast<std::uint64_t>(s));
    if (!export_clips_dir.empty()) {
      char sub[32];
      std::snprintf(sub, sizeof(sub), "/clip_%03d", s);
      export_clip(clip, export_clips_dir + sub);
    }
    std::vector<IntGrid> pred = run_sequence(*encoder, clip.frames, clip.gt_masks[0],
                                             clip.num_labels, effective.propagation);
    std::vector<FrameScore> frames;
    SegScore score = score_sequence(pred, clip.gt_masks, clip.num_labels, &frames, s);
    for (const FrameScore& f : frames) {
      csv << f.sequence << "," << f.frame << "," << format_csv_double(f.j) << ","
          << format_csv_double(f.f) << "\n";
    }
    out.per_sequence.push_back(score);
    jsum += score.j_mean;
    fsum += score.f_mean;
  }
  csv.close();

  const double n = static_cast<double>(std::max(1, effective.eval_clips));
  out.aggregate.j_mean = jsum / n;
  out.aggregate.f_mean = fsum / n;
  out.aggregate.jf_mean = 0.5 * (out.aggregate.j_mean + out.aggregate.f_mean);
  out.scores_csv = outdir + "/scores.csv";
  out.summary = outdir + "/summary.txt";

  std::ofstream summary(out.summary);
  summary << "clips " << effective.eval_clips << "\n";
  for (std::size_t s = 0; s < out.per_sequence.size(); ++s) {
    summary << "sequence " << s << " J " << format_csv_double(out.per_sequence[s].j_mean) << " F "
            << format_csv_double(out.per_sequence[s].f_mean) << " J&F "
            << format_csv_double(out.per_sequence[s].jf_mean) << "\n";
  }
  summary << "aggregate J " << format_csv_double(out.aggregate.j_mean) << " F "
          << format_csv_double(out.aggregate.f_mean) << " J&F "
          << format_csv_double(out.aggregate.jf_mean) << "\n";
  return out;
}

void run_propagate(const std::string& checkpoint, const std::string& clip_dir,
                   const std::string& outdir) {
  fs::create_directories(outdir);
  Checkpoint ckpt = load_checkpoint(checkpoint);
  ckpt.config.save(outdir + "/config.resolved");
  SynthClip clip = import_clip(clip_dir);
  if (clip.num_labels <= 0) {
    int max_label = 0;
    for (const auto v : clip.gt_masks[0].v) max_label = std::max(max_label, static_cast<int>(v));
    clip.num_labels = max_label + 1;
  }
  PropagationParams params = ckpt.config.propagation;
  params.lab = ckpt.config.temporal.lab;
  std::vector<IntGrid> pred =
      run_sequence(ckpt.encoder, clip.frames, clip.gt_masks[0], clip.num_labels, params);
  char name[64];
  for (std::size_t t = 0; t < pred.size(); ++t) {
    ArchiveWriter w;
    w.add_ints("labels", {pred[t].h, pred[t].w}, pred[t].v);
    std::snprintf(name, sizeof(name), "%s/labels_%04zu.vta", outdir.c_str(), t);
    w.write(name);
    std::snprintf(name, sizeof(name), "%s/overlay_%04zu.ppm", outdir.c_str(), t);
    write_overlay_ppm(clip.frames[t], pred[t], name);
  }
}

void write_overlay_ppm(const Tensor& frame, const IntGrid& labels, const std::string& path) {
  const std::int64_t H = frame.shape()[0], W = frame.shape()[1];
  if (labels.h != H || labels.w != W) {
    throw ShapeError("write_overlay_ppm: label extents do not match the frame");
  }
  static const double palette[8][3] = {{0, 0, 0},       {0.9, 0.2, 0.2}, {0.2, 0.9, 0.2},
                                       {0.25, 0.4, 1.0}, {0.9, 0.9, 0.2}, {0.9, 0.2, 0.9},
                                       {0.2, 0.9, 0.9}, {1.0, 0.6, 0.2}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_overlay_ppm: cannot open " + path);
  out << "P6\n" << W << " " << H << "\n255\n";
  const auto fd = frame.data();
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      const int label = labels.at(y, x);
      const double* tint = palette[label % 8];
      const double blend = label == 0 ? 0.0 : 0.55;
      for (int c = 0; c < 3; ++c) {
        const double v = fd[(y * W + x) * 3 + c] * (1.0 - blend) + tint[c] * blend;
        out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
      }
    }
  }
}

// ---- plotting -------------------------------------------------------------------

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("plot: cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError("plot: empty csv " + path);
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);
  table.columns.resize(table.header.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::size_t i = 0;
    while (std::getline(ls, cell, ',') && i < table.columns.size()) {
      table.columns[i++].push_back(std::stod(cell));
    }
  }
  return table;
}

}  // namespace

void run_plot(const std::string& csv_path, const std::string& svg_path) {
  const CsvTable table = read_csv(csv_path);
  if (table.header.size() < 2 || table.columns[0].empty()) {
    throw IoError("plot: need at least two columns and one row");
  }
  const int width = 860, height = 480, margin = 56;
  const auto& xs = table.columns[0];
  double xmin = xs.front(), xmax = xs.back();
  if (xmax == xmin) xmax = xmin + 1.0;
  double ymin = 1e300, ymax = -1e300;
  for (std::size_t c = 1; c < table.columns.size(); ++c) {
    for (double v : table.columns[c]) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (ymax == ymin) {
    ymax = ymin + 1.0;
    ymin -= 1.0;
  }
  static const char* colors[] = {"#c03030", "#308030", "#3050c0", "#a0a030", "#a030a0", "#30a0a0"};

  auto px = [&](double x) {
    return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
  };
  auto py = [&](double y) {
    return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
  };

  std::ofstream out(svg_path);
  if (!out) throw IoError("plot: cannot write " + svg_path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
      << "' y2='" << height - margin << "' stroke='black'/>\n";
  out << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
      << height - margin << "' stroke='black'/>\n";
  out << "<text x='" << width / 2 << "' y='" << height - 12 << "' font-size='13'>"
      << table.header[0] << "</text>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", ymin);
  out << "<text x='4' y='" << height - margin << "' font-size='12'>" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.4g", ymax);
  out << "<text x='4' y='" << margin << "' font-size='12'>" << buf << "</text>\n";

  for (std::size_t c = 1; c < table.columns.size(); ++c) {
    const auto& ys = table.columns[c];
    out << "<polyline fill='none' stroke='" << colors[(c - 1) % 6] << "' stroke-width='1.2' points='";
    for (std::size_t i = 0; i < ys.size() && i < xs.size(); ++i) {
      out << px(xs[i]) << "," << py(ys[i]) << " ";
    }
    out << "'/>\n";
    out << "<text x='" << width - margin + 4 << "' y='" << margin + 16 * static_cast<int>(c)
        << "' font-size='12' fill='" << colors[(c - 1) % 6] << "'>" << table.header[c]
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace vidcorr
