#include "hcnf/pipeline/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "hcnf/core/error.hpp"
#include "hcnf/core/parallel.hpp"
#include "hcnf/data/video.hpp"
#include "hcnf/detect/cascade.hpp"
#include "hcnf/detect/detector.hpp"
#include "hcnf/image/ppm.hpp"
#include "hcnf/nets/checkpoint.hpp"
#include "hcnf/pipeline/pipeline.hpp"
#include "hcnf/pipeline/training.hpp"

namespace hcnf::pipeline {

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  CLI::Option* strict = nullptr;
  CLI::Option* lenient = nullptr;
};

struct PathOverrides {
  std::string cascade, checkpoint, init, data, kdef, manifest;
};

PipelineConfig build_config(const GlobalOptions& g, const PathOverrides& p) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  if (g.strict->count()) cfg.strict = true;
  if (g.lenient->count()) cfg.strict = false;
  auto set = [](std::filesystem::path& dst, const std::string& src) {
    if (!src.empty()) dst = src;
  };
  set(cfg.paths.cascade, p.cascade);
  set(cfg.paths.checkpoint, p.checkpoint);
  set(cfg.paths.init_checkpoint, p.init);
  set(cfg.paths.data, p.data);
  set(cfg.paths.kdef, p.kdef);
  set(cfg.paths.manifest, p.manifest);
  cfg.validate();
  set_num_threads(cfg.threads);
  return cfg;
}

// A checkpoint fixes the crop size, group size and backbone layout it was
// trained with.
void adopt_arch(PipelineConfig& cfg, const nets::ArchConfig& arch) {
  cfg.crop_size = arch.input_size;
  cfg.group_size = arch.group_size;
  cfg.width = arch.width;
  cfg.swap_backbones = arch.swap_backbones;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  return f;
}

data::Split parse_split(const std::string& s) {
  if (s == "train") return data::Split::train;
  if (s == "val") return data::Split::val;
  return data::Split::test;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Facial-emotion recognition over video: two-stream CNN features fused by an LSTM.", "hcnf"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);

  GlobalOptions g;
  app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads (1 is the deterministic reference)");
  g.strict = app.add_flag("--strict", "Abort on the first malformed dataset row");
  g.lenient = app.add_flag("--lenient", "Skip and count malformed dataset rows");
  g.strict->excludes(g.lenient);

  PathOverrides paths;

  auto* train = app.add_subcommand("train", "Train one stage and keep the best-validation checkpoint");
  std::string stage_str;
  std::optional<int> epochs, batch;
  std::optional<double> lr;
  std::string dataset;
  train->add_option("--stage", stage_str, "pretrain-rgb, pretrain-flow or train-fusion")
      ->required()
      ->check(CLI::IsMember({"pretrain-rgb", "pretrain-flow", "train-fusion"}));
  train->add_option("--dataset", dataset, "fer2013 or synthetic")->check(CLI::IsMember({"fer2013", "synthetic"}));
  train->add_option("--epochs", epochs, "Epoch count");
  train->add_option("--batch-size", batch, "Batch size");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--data", paths.data, "FER-2013 CSV");
  train->add_option("--kdef", paths.kdef, "KDEF image directory");
  train->add_option("--checkpoint", paths.checkpoint, "Checkpoint to write");
  train->add_option("--init", paths.init, "Checkpoint to start from");
  train->add_option("--manifest", paths.manifest, "Run manifest path");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on one split");
  std::string eval_stage = "pretrain-rgb", split = "test", metrics_out;
  eval->add_option("--stage", eval_stage, "Network to score: pretrain-rgb, pretrain-flow or train-fusion")
      ->check(CLI::IsMember({"pretrain-rgb", "pretrain-flow", "train-fusion"}));
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--dataset", dataset, "fer2013 or synthetic")->check(CLI::IsMember({"fer2013", "synthetic"}));
  eval->add_option("--out", metrics_out, "Metrics JSON path (stdout when absent)");
  eval->add_option("--data", paths.data, "FER-2013 CSV");
  eval->add_option("--checkpoint", paths.checkpoint, "Checkpoint to score");

  auto* predict = app.add_subcommand("predict", "Emit one JSON line per window of a frame directory");
  std::string frames_dir, predict_out;
  predict->add_option("--frames", frames_dir, "Directory of P6 PPM frames")->required();
  predict->add_option("--out", predict_out, "JSONL path (stdout when absent)");
  predict->add_option("--cascade", paths.cascade, "Face cascade (OpenCV XML or native JSON)");
  predict->add_option("--checkpoint", paths.checkpoint, "Model checkpoint");

  auto* flow_debug = app.add_subcommand("flow-debug", "Write the colour-coded flow between consecutive frames");
  std::string flow_out;
  flow_debug->add_option("--frames", frames_dir, "Directory of P6 PPM frames")->required();
  flow_debug->add_option("--out", flow_out, "Output directory")->required();
  flow_debug->add_option("--cascade", paths.cascade, "Compute flow on face crops found with this cascade");

  auto* detect_cmd = app.add_subcommand("detect", "Print face detections as JSON lines");
  std::vector<std::string> images;
  detect_cmd->add_option("images", images, "P6 PPM images")->required();
  detect_cmd->add_option("--cascade", paths.cascade, "Face cascade (OpenCV XML or native JSON)");

  auto* convert = app.add_subcommand("convert-cascade", "Convert an OpenCV cascade XML to the native JSON format");
  std::string convert_in, convert_out;
  convert->add_option("input", convert_in, "OpenCV XML")->required();
  convert->add_option("output", convert_out, "Native JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      auto cfg = build_config(g, paths);
      if (epochs) cfg.train.epochs = *epochs;
      if (batch) cfg.train.batch_size = *batch;
      if (lr) cfg.train.optimizer.lr = *lr;
      if (!dataset.empty()) cfg.train.dataset = dataset == "synthetic" ? DatasetKind::synthetic : DatasetKind::fer2013;
      cfg.validate();
      const auto report = run_train(cfg, *parse_stage(stage_str), err);
      if (report.fit.best)
        err << "best epoch " << report.fit.best->epoch << ", checkpoint " << cfg.paths.checkpoint.string() << '\n';
    } else if (eval->parsed()) {
      auto cfg = build_config(g, paths);
      if (!dataset.empty()) cfg.train.dataset = dataset == "synthetic" ? DatasetKind::synthetic : DatasetKind::fer2013;
      const auto m = run_eval(cfg, *parse_stage(eval_stage), parse_split(split));
      const auto j = metrics_to_json(m);
      if (metrics_out.empty())
        out << j.dump(2) << '\n';
      else
        write_json_atomically(j, metrics_out);
      err << "accuracy " << m.accuracy << " over " << m.total << " samples\n";
    } else if (predict->parsed()) {
      auto cfg = build_config(g, paths);
      require_existing(cfg.paths.cascade, "cascade");
      require_existing(cfg.paths.checkpoint, "checkpoint");
      require_existing(frames_dir, "frame directory");
      const auto cascade = detect::load_cascade(cfg.paths.cascade);
      auto model = nets::checkpoint_load(cfg.paths.checkpoint);
      adopt_arch(cfg, model.arch);
      const auto seq = data::load_frame_sequence(frames_dir);
      const auto preds = process_video(seq, model, cascade, cfg);
      if (predict_out.empty()) {
        emit_predictions(preds, out);
      } else {
        auto f = open_output(predict_out);
        emit_predictions(preds, f);
      }
    } else if (flow_debug->parsed()) {
      auto cfg = build_config(g, paths);
      require_existing(frames_dir, "frame directory");
      const auto seq = data::load_frame_sequence(frames_dir);
      std::filesystem::create_directories(flow_out);
      std::vector<ImageF> hsv;
      if (!cfg.paths.cascade.empty()) {
        require_existing(cfg.paths.cascade, "cascade");
        hsv = prepare_frames(seq, detect::load_cascade(cfg.paths.cascade), cfg).hsv;
      } else {
        for (std::size_t i = 0; i < seq.size(); ++i) {
          const auto frame = to_float(seq.frames[i]);
          hsv.push_back(i == 0 ? flow::flow_to_hsv(flow::FlowField(frame.width(), frame.height()),
                                                   cfg.flow.magnitude_clip)
                               : flow_hsv(to_float(seq.frames[i - 1]), frame, cfg.flow));
        }
      }
      char name[32];
      for (std::size_t i = 0; i < hsv.size(); ++i) {
        std::snprintf(name, sizeof name, "flow_%05zu.ppm", i);
        write_ppm(to_u8(hsv_to_rgb(hsv[i])), std::filesystem::path(flow_out) / name);
      }
      err << "wrote " << hsv.size() << " flow images to " << flow_out << '\n';
    } else if (detect_cmd->parsed()) {
      auto cfg = build_config(g, paths);
      require_existing(cfg.paths.cascade, "cascade");
      const auto cascade = detect::load_cascade(cfg.paths.cascade);
      for (const auto& path : images) {
        const auto dets = detect::detect_faces(to_gray(read_ppm(path)), cascade, cfg.detector);
        for (const auto& d : dets)
          out << nlohmann::json{{"image", path}, {"x", d.x}, {"y", d.y}, {"side", d.side}, {"neighbors", d.neighbors}}
                     .dump()
              << '\n';
      }
    } else if (convert->parsed()) {
      build_config(g, paths);
      require_existing(convert_in, "cascade");
      const auto cascade = detect::load_cascade(convert_in, detect::CascadeFormat::opencv_xml);
      detect::save_cascade(cascade, convert_out);
      err << "converted " << cascade.stages.size() << " stages\n";
    }
    out.flush();
    return 0;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace hcnf::pipeline
