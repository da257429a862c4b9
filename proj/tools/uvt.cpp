// uvt: corpus generation, two-stage training, evaluation and single-image
// decoding for the unified vision-text model.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "uvt/checkpoint.hpp"
#include "uvt/config.hpp"
#include "uvt/datagen.hpp"
#include "uvt/evalsuite.hpp"
#include "uvt/model.hpp"
#include "uvt/trainer.hpp"

namespace fs = std::filesystem;
using namespace uvt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) apply_config_file(cfg, args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  std::string out = args.out_dir.empty() ? "corpus" : args.out_dir;
  fs::create_directories(out);
  CorpusManifest manifest = build_corpus(cfg.corpus, cfg.seed, out);
  int n_train = 0, n_val = 0;
  for (const auto& r : manifest.records) (r.split == Split::kTrain ? n_train : n_val) += 1;
  std::cout << "corpus written to " << out << "\n"
            << "records\t" << manifest.records.size() << "\n"
            << "train\t" << n_train << "\n"
            << "val\t" << n_val << "\n"
            << "r\t" << manifest.r << "\n"
            << "seed\t" << manifest.seed << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonArgs& args, const std::string& stage_name_str,
              const std::string& corpus_dir, const std::string& teacher_path,
              bool pretrain_teacher_flag, const std::string& resume_path) {
  RunConfig cfg = load_run_config(args);
  Stage stage = stage_from_name(stage_name_str);
  std::string out = args.out_dir.empty() ? "runs" : args.out_dir;
  fs::create_directories(out);

  CorpusManifest manifest = load_manifest(corpus_dir);
  Vocabulary vocab = load_vocab((fs::path(corpus_dir) / "vocab.txt").string());
  CorpusData data = load_corpus_data(manifest, corpus_dir, vocab);

  // Teacher: pretrain (intra only) or load.
  TeacherModel<real> teacher;
  if (pretrain_teacher_flag) {
    if (stage == Stage::kInter)
      throw CLI::ValidationError("--pretrain-teacher is only valid for --stage intra; "
                                 "inter-scale finetuning must reuse the intra-stage teacher");
    TeacherTrainConfig tc;
    tc.steps = cfg.teacher_steps;
    tc.lr = cfg.teacher_lr;
    teacher = pretrain_teacher<real>(manifest, data, cfg.encoder_config(), tc,
                                     seed_combine(cfg.seed, 0x7EAC11EE));
    save_teacher_checkpoint((fs::path(out) / "teacher.ckpt").string(), teacher);
    std::cout << "teacher pretrained (" << tc.steps << " steps), hash " << hex64(teacher.hash)
              << ", saved to " << (fs::path(out) / "teacher.ckpt").string() << "\n";
  } else {
    if (teacher_path.empty())
      throw CLI::ValidationError("--stage " + stage_name_str +
                                 " requires --teacher CKPT (or --pretrain-teacher for intra)");
    teacher = load_teacher_checkpoint(teacher_path);
    std::cout << "teacher loaded, hash " << hex64(teacher.hash) << "\n";
  }

  // Student: fresh for intra, or resumed from a checkpoint. Inter requires an
  // intra checkpoint.
  Model<real> model;
  if (!resume_path.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(resume_path);
    if (stage == Stage::kInter && loaded.meta.stage != "intra")
      throw CLI::ValidationError("inter-scale finetuning requires an intra-stage checkpoint; got '" +
                                 loaded.meta.stage + "'");
    model = std::move(loaded.model);
    std::cout << "resumed from " << resume_path << " (stage '" << loaded.meta.stage << "', step "
              << loaded.meta.step << ")\n";
  } else {
    if (stage == Stage::kInter)
      throw CLI::ValidationError("--stage inter requires --resume INTRA_CKPT");
    model.setup(cfg.model_config(vocab.size()));
    model.init(seed_combine(cfg.seed, 0x110DE1));
  }

  TrainMix mix = build_stage_mix(stage, manifest, cfg.seed);
  std::cout << "stage " << stage_name(stage) << ": " << mix.entries.size() << " mix samples, "
            << mix.count_vis_flagged() << " with reconstruction loss\n";

  StageResult result = train_stage<real>(model, teacher, data, manifest, mix, vocab, cfg.hp,
                                         cfg.lowres_spatial_tokens());
  std::string metrics_path = (fs::path(out) / ("metrics_" + stage_name_str + ".tsv")).string();
  write_metric_lines(result.metric_lines, metrics_path);

  CheckpointMeta meta;
  meta.kind = "student";
  meta.step = cfg.hp.total_steps;
  meta.stage = stage_name_str;
  meta.teacher_hash = teacher.hash;
  meta.vocab = vocab.id_to_token;
  meta.metrics["l_lan"] = result.final_losses.l_lan;
  meta.metrics["l_vis"] = result.final_losses.l_vis;
  meta.metrics["total"] = result.final_losses.total;
  std::string ckpt_path = (fs::path(out) / ("student_" + stage_name_str + ".ckpt")).string();
  save_checkpoint(ckpt_path, model, meta);
  std::cout << "checkpoint saved to " << ckpt_path << "\nmetrics log: " << metrics_path << "\n";

  // Final eval summary at the stage's native resolutions.
  const int r = manifest.r;
  OcrReport ocr = evaluate_ocr(model, manifest, data, vocab, 4, 4 * r);
  KnnReport knn = evaluate_knn(model, manifest, data, 1, r, cfg.knn_k);
  ReconReport recon = reconstruction_report(model, teacher, manifest, data, 1, r);
  std::cout << "val OCR x4@" << 4 * r << "\tP=" << ocr.mean.precision << "\tR=" << ocr.mean.recall
            << "\tF1=" << ocr.mean.f1 << "\n"
            << "val kNN x1@" << r << "\tacc=" << knn.accuracy << "\n"
            << "val recon x1@" << r << "\tcos=" << recon.mean_cos << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_eval(const CommonArgs& args, const std::string& ckpt_path, const std::string& task,
             const std::string& corpus_dir, int resolution, const std::string& teacher_path,
             int k_override) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  Vocabulary vocab = vocab_from_meta(loaded.meta);
  CorpusManifest manifest = load_manifest(corpus_dir);
  CorpusData data = load_corpus_data(manifest, corpus_dir, vocab);
  const int r = manifest.r;
  const int k = k_override > 0 ? k_override : 5;
  if (resolution == 0) resolution = task == "ocr" ? 4 * r : r;

  std::string out = args.out_dir.empty() ? "reports" : args.out_dir;
  fs::create_directories(out);

  // Sub-corpus choice: resolutions that are multiples of the x4 side use the
  // x4 sets, multiples of the x1 side use the x1 sets (integer upscaling).
  auto source_scale = [&](int res) {
    if (res >= 4 * r && res % (4 * r) == 0) return 4;
    if (res >= r && res % r == 0) return 1;
    throw CLI::ValidationError("resolution " + std::to_string(res) +
                               " must be a positive multiple of " + std::to_string(r));
    return 0;
  };

  if (task == "ocr") {
    OcrReport report = evaluate_ocr(loaded.model, manifest, data, vocab, source_scale(resolution),
                                    resolution);
    std::cout << "task\tresolution\tsource\tn\tprecision\trecall\tf1\tned\n";
    std::cout << "ocr\t" << report.resolution << "\tx" << report.source_scale << "\t"
              << report.samples.size() << "\t" << report.mean.precision << "\t"
              << report.mean.recall << "\t" << report.mean.f1 << "\t" << report.mean.ned << "\n";
    write_ocr_report(report, (fs::path(out) / "ocr.jsonl").string());
  } else if (task == "knn") {
    KnnReport report =
        evaluate_knn(loaded.model, manifest, data, source_scale(resolution), resolution, k);
    std::cout << "task\tresolution\tsource\tk\tn_train\tn_queries\taccuracy\n";
    std::cout << "knn\t" << report.resolution << "\tx" << report.source_scale << "\t" << report.k
              << "\t" << report.n_train << "\t" << report.n_queries << "\t" << report.accuracy
              << "\n";
    write_knn_report(report, (fs::path(out) / "knn.jsonl").string());
  } else if (task == "recon") {
    if (teacher_path.empty())
      throw CLI::ValidationError("--task recon requires --teacher CKPT");
    TeacherModel<real> teacher = load_teacher_checkpoint(teacher_path);
    ReconReport report = reconstruction_report(loaded.model, teacher, manifest, data,
                                               source_scale(resolution), resolution);
    std::cout << "task\tresolution\tn_images\tmean_cos\n";
    std::cout << "recon\t" << report.resolution << "\t" << report.n_images << "\t"
              << report.mean_cos << "\n";
    write_recon_report(report, (fs::path(out) / "recon.jsonl").string());
  } else if (task == "sweep") {
    std::vector<int> resolutions = {r, 2 * r, 3 * r, 4 * r};
    auto rows = resolution_sweep(loaded.model, manifest, data, vocab, resolutions, k);
    std::cout << "resolution\tknn_accuracy\tocr_f1\n";
    for (const auto& row : rows)
      std::cout << row.resolution << "\t" << row.knn_accuracy << "\t" << row.ocr_f1 << "\n";
    write_sweep_report(rows, (fs::path(out) / "sweep.jsonl").string());
  } else {
    throw CLI::ValidationError("unknown eval task: " + task);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_decode(const std::string& ckpt_path, const std::string& image_path,
               const std::string& task, int resolution) {
  if (!fs::exists(image_path))
    throw CLI::ValidationError("image file not found: " + image_path);
  LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  Vocabulary vocab = vocab_from_meta(loaded.meta);
  ImageU8 img = read_ppm(image_path);
  if (resolution > 0) img = scale_to_side(img, resolution);
  TaskKind kind = task_from_name(task);
  PromptSpec prompt = build_prompt(kind, loaded.model.cfg.qf.n_queries, vocab);
  int max_len = loaded.model.cfg.dec.t_max - prompt.length();
  std::cout << generate_text(loaded.model, img, kind, vocab, max_len) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unified vision-text model: corpus generation, training, evaluation"};
  app.require_subcommand(1);

  CommonArgs common;

  auto add_common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--config", common.config_path, "key = value configuration file");
    sub->add_option("--seed", common.seed, "master seed (overrides the config file)")
        ->each([&](const std::string&) { common.seed_set = true; });
    if (with_out) sub->add_option("--out", common.out_dir, "output directory");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen);

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  add_common(train);
  std::string stage_str, corpus_dir = "corpus", teacher_path, resume_path;
  bool pretrain_flag = false;
  train->add_option("--stage", stage_str, "intra | inter")->required();
  train->add_option("--corpus", corpus_dir, "corpus directory");
  train->add_option("--teacher", teacher_path, "teacher checkpoint");
  train->add_flag("--pretrain-teacher", pretrain_flag, "pretrain and save a fresh teacher (intra only)");
  train->add_option("--resume", resume_path, "student checkpoint to initialize from");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  std::string eval_ckpt, eval_task, eval_corpus = "corpus", eval_teacher;
  int eval_resolution = 0, eval_k = 0;
  eval->add_option("checkpoint", eval_ckpt, "student checkpoint")->required();
  eval->add_option("--task", eval_task, "ocr | knn | recon | sweep")->required();
  eval->add_option("--corpus", eval_corpus, "corpus directory");
  eval->add_option("--resolution", eval_resolution, "input side in pixels");
  eval->add_option("--teacher", eval_teacher, "teacher checkpoint (recon task)");
  eval->add_option("--k", eval_k, "kNN neighbour count");

  // decode
  auto* dec = app.add_subcommand("decode", "run one image through the model");
  add_common(dec, false);
  std::string dec_ckpt, dec_image, dec_task = "ocr";
  int dec_resolution = 0;
  dec->add_option("checkpoint", dec_ckpt, "student checkpoint")->required();
  dec->add_option("--image", dec_image, "PPM image path")->required();
  dec->add_option("--task", dec_task, "ocr | caption");
  dec->add_option("--resolution", dec_resolution, "upscale the input to this side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (train->parsed())
      return cmd_train(common, stage_str, corpus_dir, teacher_path, pretrain_flag, resume_path);
    if (eval->parsed())
      return cmd_eval(common, eval_ckpt, eval_task, eval_corpus, eval_resolution, eval_teacher,
                      eval_k);
    if (dec->parsed()) return cmd_decode(dec_ckpt, dec_image, dec_task, dec_resolution);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
