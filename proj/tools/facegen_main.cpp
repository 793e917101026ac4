// facegen: dataset preparation, conditional GAN training, evaluation,
// model export, and the generation server, behind one binary.
//
// Exit codes: 0 success, 2 validation/config error, 3 runtime or numerical
// error. Every command takes --seed, --config and --out; with fixed seeds a
// command reproduces its artifacts from the config alone.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "facegen/dataset.hpp"
#include "facegen/evaluation.hpp"
#include "facegen/export_bundle.hpp"
#include "facegen/manifest_set.hpp"
#include "facegen/nets.hpp"
#include "facegen/server.hpp"
#include "facegen/training.hpp"

using nlohmann::json;
namespace fg = facegen;
namespace fs = std::filesystem;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw fg::IoError("cannot open " + path);
  json j;
  f >> j;
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  if (!fs::path(path).parent_path().empty()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw fg::IoError("cannot open " + path);
  f << text;
}

// Config-file fallback: JSON keys named after long flags fill in options the
// command line left untouched.
template <class T>
void config_default(const CLI::App* cmd, const json& cfg, const std::string& flag, T& value) {
  if (!cfg.contains(flag)) return;
  const auto* opt = cmd->get_option_no_throw("--" + flag);
  if (opt && opt->count() > 0) return;
  value = cfg.at(flag).get<T>();
}

std::unique_ptr<fg::dataset::FaceDetector> make_detector(const std::string& spec) {
  if (spec == "stub") return std::make_unique<fg::dataset::StubDetector>();
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<fg::dataset::CommandDetector>(spec.substr(4));
  throw fg::ValidationError("unknown detector '" + spec + "' (use stub or cmd:<command>)");
}

std::unique_ptr<fg::dataset::TagEstimator> make_estimator(const std::string& spec) {
  if (spec == "stub") return std::make_unique<fg::dataset::StubEstimator>();
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<fg::dataset::CommandEstimator>(spec.substr(4));
  throw fg::ValidationError("unknown estimator '" + spec + "' (use stub or cmd:<command>)");
}

std::unique_ptr<fg::evaluation::FeatureExtractor> make_extractor(const std::string& spec, int cmd_dim) {
  if (spec == "grid") return std::make_unique<fg::evaluation::GridColorExtractor>(3);
  if (spec == "grid5") return std::make_unique<fg::evaluation::GridColorExtractor>(5);
  if (spec.rfind("cmd:", 0) == 0)
    return std::make_unique<fg::evaluation::CommandExtractor>(spec.substr(4), cmd_dim);
  throw fg::ValidationError("unknown extractor '" + spec + "' (use grid, grid5 or cmd:<command>)");
}

// Bundle-backed generator adapters for the evaluation protocols.
fg::evaluation::ConditionalGenerator bundle_generator(fg::bundle::LoadedBundle& b) {
  return [&b](const fg::tagspace::TagVector& cond, fg::Rng& rng) {
    Eigen::MatrixXd z(b.generator->noise_dim(), 1);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i, 0) = rng.normal();
    Eigen::MatrixXd c(fg::tagspace::kTagDim, 1);
    c.col(0) = cond;
    const Eigen::MatrixXd out = fg::nets::generate_images<double>(*b.generator, z, c, 1);
    return fg::img::from_column<double>(out.col(0), b.output_size, b.output_size);
  };
}

fg::evaluation::SeededGenerator bundle_seeded_generator(fg::bundle::LoadedBundle& b) {
  return [&b](const Eigen::VectorXd& z, const fg::tagspace::TagVector& cond) {
    Eigen::MatrixXd zz(z.size(), 1);
    zz.col(0) = z;
    Eigen::MatrixXd c(fg::tagspace::kTagDim, 1);
    c.col(0) = cond;
    const Eigen::MatrixXd out = fg::nets::generate_images<double>(*b.generator, zz, c, 1);
    return fg::img::from_column<double>(out.col(0), b.output_size, b.output_size);
  };
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

template <class S>
int run_train(const json& cfg, const std::string& manifest_path, const std::string& images_dir,
              const std::string& out_dir, long steps, long checkpoint_every,
              const std::string& resume_path) {
  fg::training::TrainConfig tc = fg::training::TrainConfig::from_json(cfg);
  fg::training::LossWeights weights;
  weights.lambda_adv = cfg.value("lambda_adv", 34.0);
  weights.lambda_gp = cfg.value("lambda_gp", 0.5);
  weights.validate();

  fg::nets::GeneratorSpec gspec =
      cfg.contains("generator") ? fg::nets::GeneratorSpec::from_json(cfg["generator"]) : fg::nets::GeneratorSpec{};
  fg::nets::DiscriminatorSpec dspec = cfg.contains("discriminator")
                                          ? fg::nets::DiscriminatorSpec::from_json(cfg["discriminator"])
                                          : fg::nets::DiscriminatorSpec{};

  const auto manifest = fg::dataset::load_manifest(manifest_path);
  gspec.validate();
  if (gspec.output_size != manifest.image_size)
    throw fg::ValidationError("train: generator output_size " + std::to_string(gspec.output_size) +
                              " != manifest image_size " + std::to_string(manifest.image_size));
  dspec.input_size = manifest.image_size;
  dspec.validate();

  fg::dataset::ManifestTrainingSet<S> data(manifest, images_dir);
  auto gen = fg::nets::build_generator<S>(gspec);
  fg::nets::ResnetDiscriminator<S> disc(dspec);
  fg::nets::init_weights<S>(*gen, tc.seed);
  fg::nets::init_weights<S>(disc, fg::detail::mix64(tc.seed ^ 0xd15c));

  auto prior = fg::dataset::empirical_prior(manifest);
  fg::training::Trainer<S> trainer(*gen, disc, tc, weights, prior);
  if (!resume_path.empty()) trainer.load_checkpoint(resume_path);

  fs::create_directories(out_dir);
  std::ofstream metrics(out_dir + "/metrics.ndjson", std::ios::app);
  const auto wall_start = std::chrono::steady_clock::now();

  fg::training::TrainHooks hooks;
  hooks.max_steps = steps;
  hooks.checkpoint_every = checkpoint_every;
  hooks.checkpoint_dir = out_dir;
  hooks.on_step = [&](long step, const fg::training::LossBundle& l, double lr) {
    json m;
    m["step"] = step;
    m["adv_d"] = l.adv_d;
    m["cls_d"] = l.cls_d;
    m["gp_d"] = l.gp_d;
    m["adv_g"] = l.adv_g;
    m["cls_g"] = l.cls_g;
    m["lr"] = lr;
    m["wallclock"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    metrics << m.dump() << "\n";
    metrics.flush();
    if (step % 50 == 0 || step == steps - 1)
      std::cout << "step " << step << "  total_d=" << l.total_d << "  total_g=" << l.total_g
                << "  lr=" << lr << std::endl;
  };

  trainer.train(data, hooks);
  trainer.save_checkpoint(out_dir + "/ckpt_final.fgt");
  std::cout << "trained " << trainer.step_count() << " steps; final checkpoint at " << out_dir
            << "/ckpt_final.fgt" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional anime-face GAN toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::uint64_t seed = 1;

  // ---- dataset ------------------------------------------------------------
  auto* ds = app.add_subcommand("dataset", "manifest construction and statistics");
  ds->require_subcommand(1);

  auto* ingest = ds->add_subcommand("ingest", "detect faces, crop, estimate tags");
  std::string ing_listing, ing_images, ing_out = "dataset_out", ing_detector = "stub", ing_estimator = "stub";
  double ing_scale = 1.5;
  int ing_size = 128;
  ingest->add_option("--listing", ing_listing, "CSV listing: id,name,sell_day,url")->required();
  ingest->add_option("--images-dir", ing_images, "directory of source images keyed by id")->required();
  ingest->add_option("--out", ing_out, "output directory (manifest + crops)");
  ingest->add_option("--detector", ing_detector, "stub | cmd:<command>");
  ingest->add_option("--estimator", ing_estimator, "stub | cmd:<command>");
  ingest->add_option("--box-scale", ing_scale, "bounding-box zoom factor");
  ingest->add_option("--image-size", ing_size, "crop resize target");

  auto* filter = ds->add_subcommand("filter", "apply year filter and rejection list");
  std::string flt_manifest, flt_out, flt_rejections;
  int flt_min_year = 2005;
  filter->add_option("--manifest", flt_manifest)->required();
  filter->add_option("--min-year", flt_min_year, "keep records released in or after this year");
  filter->add_option("--rejections", flt_rejections, "file with one image_ref per line");
  filter->add_option("--out", flt_out, "output manifest (defaults to in-place)");

  auto* st = ds->add_subcommand("stats", "distribution report");
  std::string st_manifest, st_out = "report.json", st_text;
  st->add_option("--manifest", st_manifest)->required();
  st->add_option("--out", st_out, "JSON report path");
  st->add_option("--text", st_text, "also render text histograms to this file");

  auto* tax = ds->add_subcommand("taxonomy", "write the versioned taxonomy manifest");
  std::string tax_out = "taxonomy.json";
  tax->add_option("--out", tax_out);

  // ---- train ----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "DRAGAN training on a manifest");
  std::string tr_manifest, tr_images, tr_out = "ckpt", tr_resume, tr_precision = "f64";
  long tr_steps = 1000, tr_ckpt_every = 0;
  train->add_option("--manifest", tr_manifest)->required();
  train->add_option("--images-dir", tr_images, "defaults to the manifest's directory/images");
  train->add_option("--out", tr_out, "checkpoint + metrics directory");
  train->add_option("--steps", tr_steps, "total steps to reach");
  train->add_option("--checkpoint-every", tr_ckpt_every);
  train->add_option("--resume", tr_resume, "checkpoint to continue from");
  train->add_option("--precision", tr_precision, "f32 | f64");

  // ---- eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "model evaluation");
  ev->require_subcommand(1);

  auto* fid = ev->add_subcommand("fid", "repeated-trial feature distance");
  std::string fid_manifest, fid_images, fid_bundle, fid_out = "fid.json", fid_extractor = "grid";
  int fid_n = 12800, fid_trials = 5, fid_cmd_dim = 4096;
  fid->add_option("--manifest", fid_manifest)->required();
  fid->add_option("--images-dir", fid_images)->required();
  fid->add_option("--bundle", fid_bundle)->required();
  fid->add_option("--out", fid_out);
  fid->add_option("--extractor", fid_extractor, "grid | grid5 | cmd:<command>");
  fid->add_option("--extractor-dim", fid_cmd_dim, "feature size for cmd extractors");
  fid->add_option("--n", fid_n, "images per trial");
  fid->add_option("--trials", fid_trials);

  auto* prec = ev->add_subcommand("precision", "per-label precision with an automated judge");
  std::string pr_bundle, pr_judge = "stub", pr_out = "precision.json", pr_export_dir;
  int pr_samples = 20;
  prec->add_option("--bundle", pr_bundle)->required();
  prec->add_option("--judge", pr_judge, "stub | cmd:<command>");
  prec->add_option("--samples", pr_samples, "images per label");
  prec->add_option("--out", pr_out);
  prec->add_option("--export-for-review", pr_export_dir,
                   "also write every judged image for manual checking");

  auto* grid = ev->add_subcommand("grid", "sample sheets");
  std::string gr_bundle, gr_mode = "fixed-noise", gr_cond, gr_cond_to, gr_out = "grid.png";
  int gr_rows = 2, gr_cols = 8;
  grid->add_option("--bundle", gr_bundle)->required();
  grid->add_option("--mode", gr_mode, "fixed-noise | fixed-cond | interpolation");
  grid->add_option("--cond", gr_cond, "comma-separated attribute names");
  grid->add_option("--cond-to", gr_cond_to, "interpolation target attributes");
  grid->add_option("--rows", gr_rows);
  grid->add_option("--cols", gr_cols);
  grid->add_option("--out", gr_out);

  auto* feats = ev->add_subcommand("features", "export feature vectors (+ optional 2D projection)");
  std::string ft_manifest, ft_images, ft_out = "features.fgt", ft_extractor = "grid", ft_projector;
  int ft_sample = 1500, ft_cmd_dim = 4096;
  feats->add_option("--manifest", ft_manifest)->required();
  feats->add_option("--images-dir", ft_images)->required();
  feats->add_option("--out", ft_out);
  feats->add_option("--extractor", ft_extractor);
  feats->add_option("--extractor-dim", ft_cmd_dim);
  feats->add_option("--sample-n", ft_sample);
  feats->add_option("--projector", ft_projector, "identity | cmd:<command>");

  // ---- export / serve --------------------------------------------------------
  auto* exp = app.add_subcommand("export", "pack a generator checkpoint for serving");
  std::string ex_ckpt, ex_manifest, ex_prior, ex_out = "bundle";
  bool ex_compare_dcgan = false;
  exp->add_option("--checkpoint", ex_ckpt)->required();
  exp->add_option("--manifest", ex_manifest, "derive the empirical prior from this manifest");
  exp->add_option("--prior", ex_prior, "or load the prior from JSON");
  exp->add_option("--out", ex_out);
  exp->add_flag("--compare-dcgan", ex_compare_dcgan,
                "also report the size ratio against the DCGAN generator preset");

  auto* serve = app.add_subcommand("serve", "HTTP generation service");
  std::string sv_model;
  int sv_port = 8080, sv_concurrency = 4;
  serve->add_option("--model", sv_model, "bundle directory")->required();
  serve->add_option("--port", sv_port);
  serve->add_option("--max-concurrency", sv_concurrency);

  for (auto* cmd : {ingest, filter, st, tax, train, fid, prec, grid, feats, exp, serve}) {
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--config", config_path, "JSON config; keys mirror the long flags");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad arguments are validation errors
  }

  try {
    json cfg = json::object();
    if (!config_path.empty()) cfg = load_json_file(config_path);

    // ---- dataset ------------------------------------------------------------
    if (*ingest) {
      config_default(ingest, cfg, "box-scale", ing_scale);
      config_default(ingest, cfg, "image-size", ing_size);
      auto detector = make_detector(ing_detector);
      auto estimator = make_estimator(ing_estimator);
      auto rows = fg::dataset::read_listing(ing_listing, ing_images);
      fg::dataset::IngestOptions opt;
      opt.box_scale = ing_scale;
      opt.image_size = ing_size;
      opt.out_image_dir = ing_out + "/images";
      opt.log = [](const std::string& m) { std::cerr << m << std::endl; };
      auto manifest = fg::dataset::ingest(rows, *detector, *estimator, opt);
      fg::dataset::save_manifest(manifest, ing_out + "/manifest.ndjson");
      std::cout << "ingested " << manifest.records.size() << " faces from " << rows.size()
                << " listed images -> " << ing_out << std::endl;
    } else if (*filter) {
      auto manifest = fg::dataset::load_manifest(flt_manifest);
      std::set<std::string> rejections;
      if (!flt_rejections.empty()) {
        std::ifstream f(flt_rejections);
        if (!f) throw fg::IoError("cannot open " + flt_rejections);
        std::string line;
        while (std::getline(f, line))
          if (!line.empty()) rejections.insert(line);
      }
      manifest = fg::dataset::filter(std::move(manifest), flt_min_year, rejections);
      fg::dataset::save_manifest(manifest, flt_out.empty() ? flt_manifest : flt_out);
      std::cout << "active records: " << manifest.active_count() << " of " << manifest.records.size()
                << std::endl;
    } else if (*st) {
      const auto manifest = fg::dataset::load_manifest(st_manifest);
      const auto rep = fg::dataset::stats(manifest);
      write_text_file(st_out, rep.to_json());
      if (!st_text.empty()) write_text_file(st_text, rep.render_text());
      std::cout << rep.render_text();
    } else if (*tax) {
      write_text_file(tax_out, fg::tagspace::taxonomy_manifest_json());
      std::cout << "taxonomy manifest -> " << tax_out << std::endl;

      // ---- train ----------------------------------------------------------------
    } else if (*train) {
      if (train->get_option("--seed")->count() > 0) cfg["seed"] = seed;
      if (tr_images.empty()) tr_images = fs::path(tr_manifest).parent_path() / "images";
      config_default(train, cfg, "steps", tr_steps);
      config_default(train, cfg, "checkpoint-every", tr_ckpt_every);
      config_default(train, cfg, "precision", tr_precision);
      if (tr_precision == "f32")
        return run_train<float>(cfg, tr_manifest, tr_images, tr_out, tr_steps, tr_ckpt_every, tr_resume);
      if (tr_precision == "f64")
        return run_train<double>(cfg, tr_manifest, tr_images, tr_out, tr_steps, tr_ckpt_every, tr_resume);
      throw fg::ValidationError("train: precision must be f32 or f64");

      // ---- eval ----------------------------------------------------------------
    } else if (*fid) {
      auto bundle = fg::bundle::load_bundle(fid_bundle);
      const auto manifest = fg::dataset::load_manifest(fid_manifest);
      auto [images, tags] = fg::dataset::load_active_images(manifest, fid_images);
      auto extractor = make_extractor(fid_extractor, fid_cmd_dim);
      auto report = fg::evaluation::fid_protocol(
          images, tags, bundle_generator(bundle), *extractor, fid_n, fid_trials, seed,
          [](const std::string& m) { std::cerr << m << std::endl; });
      write_text_file(fid_out, report.to_json());
      std::cout << report.render_text();
    } else if (*prec) {
      auto bundle = fg::bundle::load_bundle(pr_bundle);
      auto judge = make_estimator(pr_judge);
      auto generator = bundle_generator(bundle);
      fg::evaluation::ConditionalGenerator wrapped = generator;
      int review_index = 0;
      if (!pr_export_dir.empty()) {
        fs::create_directories(pr_export_dir);
        wrapped = [&](const fg::tagspace::TagVector& c, fg::Rng& rng) {
          auto image = generator(c, rng);
          fg::img::write_image(image, pr_export_dir + "/" + std::to_string(review_index++) + ".png");
          return image;
        };
      }
      const auto precision =
          fg::evaluation::label_precision(wrapped, *judge, bundle.prior, pr_samples, seed);
      write_text_file(pr_out, fg::evaluation::precision_to_json(precision));
      std::cout << fg::evaluation::precision_render_text(precision);
    } else if (*grid) {
      auto bundle = fg::bundle::load_bundle(gr_bundle);
      fg::evaluation::GridParams params;
      params.rows = gr_rows;
      params.cols = gr_cols;
      if (gr_mode == "fixed-noise")
        params.mode = fg::evaluation::GridMode::fixed_noise_random_cond;
      else if (gr_mode == "fixed-cond")
        params.mode = fg::evaluation::GridMode::fixed_cond_random_noise;
      else if (gr_mode == "interpolation")
        params.mode = fg::evaluation::GridMode::interpolation;
      else
        throw fg::ValidationError("grid: unknown mode '" + gr_mode + "'");
      // Partial attribute lists are allowed; unassigned groups complete
      // from the bundle's empirical prior, like the generation API.
      fg::Rng cond_rng = fg::Rng::stream(seed, 0xc01d);
      auto parse_cond = [&bundle, &cond_rng](const std::string& text) {
        std::vector<std::string> names;
        std::string cur;
        for (char ch : text) {
          if (ch == ',') {
            if (!cur.empty()) names.push_back(cur);
            cur.clear();
          } else if (!(cur.empty() && ch == ' ')) {
            cur.push_back(ch);
          }
        }
        if (!cur.empty()) names.push_back(cur);
        fg::tagspace::from_names(names, false);  // validates names and group conflicts
        fg::server::GenerationRequest req;
        req.count = 1;
        for (const auto& name : names) req.assigned[name] = true;
        return fg::server::resolve_conditions(req, bundle.prior, cond_rng)[0];
      };
      if (!gr_cond.empty()) {
        if (params.mode == fg::evaluation::GridMode::interpolation)
          params.cond_from = parse_cond(gr_cond);
        else
          params.condition = parse_cond(gr_cond);
      }
      if (!gr_cond_to.empty()) params.cond_to = parse_cond(gr_cond_to);
      auto result = fg::evaluation::sample_grid(bundle_seeded_generator(bundle),
                                                bundle.generator->noise_dim(), params, bundle.prior, seed);
      fg::img::write_image(result.sheet, gr_out);
      std::cout << "grid sheet (" << result.cells.size() << " cells) -> " << gr_out << std::endl;
    } else if (*feats) {
      const auto manifest = fg::dataset::load_manifest(ft_manifest);
      auto [images, tags] = fg::dataset::load_active_images(manifest, ft_images);
      auto extractor = make_extractor(ft_extractor, ft_cmd_dim);
      std::unique_ptr<fg::evaluation::Projector> projector;
      if (ft_projector == "identity")
        projector = std::make_unique<fg::evaluation::IdentityProjector>();
      else if (ft_projector.rfind("cmd:", 0) == 0)
        projector = std::make_unique<fg::evaluation::CommandProjector>(ft_projector.substr(4));
      else if (!ft_projector.empty())
        throw fg::ValidationError("features: unknown projector '" + ft_projector + "'");
      auto exported =
          fg::evaluation::export_features(images, *extractor, ft_sample, seed, projector.get());
      fg::evaluation::save_features(exported, ft_out);
      std::cout << "exported " << exported.features.vectors.rows() << " feature vectors -> " << ft_out
                << std::endl;

      // ---- export / serve ---------------------------------------------------------
    } else if (*exp) {
      std::string prior_json;
      if (!ex_prior.empty()) {
        std::ifstream f(ex_prior);
        if (!f) throw fg::IoError("cannot open " + ex_prior);
        std::ostringstream os;
        os << f.rdbuf();
        prior_json = os.str();
      } else if (!ex_manifest.empty()) {
        prior_json = fg::tagspace::prior_to_json(fg::dataset::empirical_prior(fg::dataset::load_manifest(ex_manifest)));
      } else {
        throw fg::ValidationError("export: provide --manifest or --prior for the empirical prior");
      }
      auto result = fg::bundle::export_bundle(ex_ckpt, prior_json, ex_out);
      write_text_file(ex_out + "/size_report.json", result.size.to_json());
      std::cout << result.size.render_text();
      std::cout << "model_version: " << result.model_version << std::endl;
      if (ex_compare_dcgan) {
        // Parameter-count ratio against the DCGAN preset at the same output size.
        auto meta = fg::ckpt::TensorStore<double>::load(ex_ckpt);
        const auto spec = fg::nets::GeneratorSpec::from_json(meta.meta.at("generator_arch").at("spec"));
        fg::nets::GeneratorSpec dc = spec;
        dc.backbone = "dcgan";
        dc.base_spatial = 4;
        dc.n_upscales = 0;
        int size = dc.base_spatial;
        while (size < dc.output_size) {
          size *= 2;
          ++dc.n_upscales;
        }
        auto dcgan = fg::nets::build_generator<double>(dc);
        std::uint64_t dcgan_bytes = 0;
        for (const auto& [name, p] : dcgan->named_params())
          dcgan_bytes += static_cast<std::uint64_t>(p->value.size()) * sizeof(double);
        std::cout << "dcgan preset size: " << dcgan_bytes << " bytes; ratio "
                  << static_cast<double>(dcgan_bytes) / static_cast<double>(result.size.total_bytes)
                  << "x" << std::endl;
      }
    } else if (*serve) {
      auto bundle = fg::bundle::load_bundle(sv_model);
      fg::server::ServerOptions opt;
      opt.port = sv_port;
      opt.max_concurrency = sv_concurrency;
      fg::server::ModelServer srv(std::move(bundle), opt);
      std::cout << "serving model " << srv.model_version() << " on port " << sv_port << std::endl;
      if (!srv.run()) throw fg::IoError("serve: cannot bind port " + std::to_string(sv_port));
    }
    return 0;
  } catch (const fg::ValidationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
}
