// hseg: weight init, interactive steps, click simulation and scaling benches.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hseg/config.hpp"
#include "hseg/error.hpp"
#include "hseg/image_io.hpp"
#include "hseg/interaction.hpp"
#include "hseg/pipeline.hpp"
#include "hseg/profiling.hpp"
#include "hseg/prompt.hpp"
#include "hseg/weights.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hseg;

namespace {

std::vector<prompt::Click> parse_clicks(const std::string& text) {
  std::vector<prompt::Click> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    long y = -1, x = -1;
    int z = -1;
    char tail = 0;
    if (std::sscanf(item.c_str(), " %ld , %ld , %d %c", &y, &x, &z, &tail) != 3 || y < 0 ||
        x < 0 || (z != 0 && z != 1))
      throw InputError("bad click '" + item + "', expected y,x,z with z in {0,1}");
    out.push_back({std::size_t(y), std::size_t(x),
                   z ? prompt::ClickLabel::Positive : prompt::ClickLabel::Negative});
  }
  return out;
}

json clicks_json(const std::vector<prompt::Click>& clicks) {
  json a = json::array();
  for (const auto& c : clicks) a.push_back({c.y, c.x, c.positive() ? 1 : 0});
  return a;
}

json timing_json(const StepTiming& t) {
  return {{"reference_ms", t.reference_ms}, {"dpe_ms", t.dpe_ms},
          {"routing_ms", t.routing_ms},     {"attention_ms", t.attention_ms},
          {"moe_ms", t.moe_ms},             {"dlu_ms", t.dlu_ms},
          {"total_ms", t.total_ms}};
}

json bbox_json(const prompt::PromptBBox& b) { return {b.x1, b.y1, b.x2, b.y2}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Model {
  DecoderConfig cfg;
  DecoderWeights weights;
};

Model load_model(const fs::path& weights, const Tensor& image, std::size_t threads) {
  const WeightStore ws = load_weights(weights);
  DecoderConfig base;
  base.height = image.dim(1);
  base.width = image.dim(2);
  base.threads = threads;
  Model m;
  m.cfg = infer_config(ws, base);
  m.cfg.validate();
  m.weights = bind_weights(ws, m.cfg);
  return m;
}

std::vector<double> parse_ratios(const std::string& text) {
  const auto dots = text.find("..");
  if (dots != std::string::npos)
    return profiling::area_ratio_range(std::stod(text.substr(0, dots)),
                                       std::stod(text.substr(dots + 2)));
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

void write_crop_csv(const fs::path& path, const std::vector<profiling::CropSample>& rows) {
  std::ostringstream os;
  os << "area_ratio,crop_px,dynamic_ms,full_ms,speedup\n";
  for (const auto& r : rows)
    os << r.area_ratio << ',' << r.crop_px << ',' << r.dynamic_ms << ',' << r.full_ms << ','
       << r.full_ms / r.dynamic_ms << '\n';
  write_text(path, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid interactive-segmentation decoder"};
  app.require_subcommand(1);

  // init-weights
  std::string cfg_path, out_path;
  std::uint64_t seed = 0;
  auto* init = app.add_subcommand("init-weights", "seeded weights for a config");
  init->add_option("--config", cfg_path, "key=value config file")->required()->check(CLI::ExistingFile);
  init->add_option("--seed", seed, "weight seed");
  init->add_option("--out", out_path, "weight file")->required();

  // run-step
  std::string weights_path, image_path, clicks_text, state_dir;
  std::size_t threads = 1;
  auto* step = app.add_subcommand("run-step", "one decoder step, state kept in a directory");
  step->add_option("--weights", weights_path)->required()->check(CLI::ExistingFile);
  step->add_option("--image", image_path, "P6 image")->required()->check(CLI::ExistingFile);
  step->add_option("--clicks", clicks_text, "new clicks as \"y,x,z;...\"");
  step->add_option("--state", state_dir, "session directory")->required();
  step->add_option("--threads", threads);

  // simulate
  std::string gt_path, report_path;
  std::size_t max_clicks = 20;
  auto* sim = app.add_subcommand("simulate", "simulated click session against a gt mask");
  sim->add_option("--weights", weights_path)->required()->check(CLI::ExistingFile);
  sim->add_option("--image", image_path)->required()->check(CLI::ExistingFile);
  sim->add_option("--gt", gt_path, "P5 mask")->required()->check(CLI::ExistingFile);
  sim->add_option("--max-clicks", max_clicks);
  sim->add_option("--report", report_path, "JSON report")->required();
  sim->add_option("--threads", threads);

  // bench-attn
  std::size_t n_min = 256, n_max = 16384, repeats = 5, c = 32, s = 8;
  std::string mode = "bsqa", csv_path, counters_path;
  auto* battn = app.add_subcommand("bench-attn", "attention latency vs token count");
  battn->add_option("--n-min", n_min);
  battn->add_option("--n-max", n_max);
  battn->add_option("--mode", mode)->check(CLI::IsMember({"fa", "bsqa"}));
  battn->add_option("--repeats", repeats);
  battn->add_option("--dim", c, "channels");
  battn->add_option("--bits", s, "code bits");
  battn->add_option("--seed", seed);
  battn->add_option("--csv", csv_path)->required();
  battn->add_option("--counters", counters_path, "JSON FLOP counters and fit");

  // bench-moe
  std::vector<std::size_t> experts{1, 4, 16, 64};
  std::size_t tokens = 4096, dim = 256;
  std::string impl = "par", profile_path;
  auto* bmoe = app.add_subcommand("bench-moe", "HMoE latency vs expert count");
  bmoe->add_option("--experts", experts)->delimiter(',');
  bmoe->add_option("--tokens", tokens);
  bmoe->add_option("--impl", impl)->check(CLI::IsMember({"seq", "par"}));
  bmoe->add_option("--threads", threads);
  bmoe->add_option("--repeats", repeats);
  bmoe->add_option("--dim", dim);
  bmoe->add_option("--seed", seed);
  bmoe->add_option("--csv", csv_path)->required();
  bmoe->add_option("--profile", profile_path, "JSON phase profile");

  // bench-dpe / bench-dlu
  std::string ratios = "0.01..0.64";
  std::size_t image_px = 512;
  CLI::App* bcrop[2];
  const char* crop_names[2] = {"bench-dpe", "bench-dlu"};
  for (int i = 0; i < 2; ++i) {
    bcrop[i] = app.add_subcommand(crop_names[i], "cropped vs whole-image latency");
    bcrop[i]->add_option("--area-ratios", ratios, "lo..hi or a,b,c");
    bcrop[i]->add_option("--image", image_px, "square image side");
    bcrop[i]->add_option("--repeats", repeats);
    bcrop[i]->add_option("--dim", dim);
    bcrop[i]->add_option("--seed", seed);
    bcrop[i]->add_option("--csv", csv_path)->required();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) {
      DecoderConfig cfg = load_config(cfg_path);
      cfg.seed = seed;
      cfg.validate();
      save_weights(out_path, init_weights(cfg, seed));
      std::cout << "wrote " << weight_manifest(cfg).size() << " tensors to " << out_path << '\n';
    } else if (*step) {
      const Tensor image = io::read_ppm(image_path);
      const Model m = load_model(weights_path, image, threads);
      const fs::path dir(state_dir);
      fs::create_directories(dir);
      Session sess = start_session(image, m.weights, m.cfg);
      if (fs::exists(dir / "session.json")) {
        const json st = json::parse(read_text(dir / "session.json"));
        sess.step = st.at("step").get<std::size_t>();
        for (const auto& c : st.at("clicks"))
          sess.clicks.push_back({c[0].get<std::size_t>(), c[1].get<std::size_t>(),
                                 c[2].get<int>() ? prompt::ClickLabel::Positive
                                                 : prompt::ClickLabel::Negative});
        sess.reference = prompt::load_reference_mask(dir / "reference.pgm");
        sess.prev_mask = io::read_mask_pgm(dir / "mask.pgm");
      }
      const auto clicks = parse_clicks(clicks_text);
      const StepResult r = decoder_step(sess, clicks, m.weights, m.cfg);
      prompt::save_reference_mask(dir / "reference.pgm", sess.reference);
      io::write_mask_pgm(dir / "mask.pgm", r.mask);
      io::write_logits_pgm(dir / "prob.pgm", r.logits);
      const json st = {{"step", sess.step},
                       {"clicks", clicks_json(sess.clicks)},
                       {"edge_tokens", r.edge_tokens},
                       {"nonedge_tokens", r.nonedge_tokens},
                       {"prompt_bbox", bbox_json(r.prompt_bbox)},
                       {"refine_bbox", bbox_json(r.refine_bbox)},
                       {"threads", m.cfg.threads},
                       {"timing", timing_json(r.timing)}};
      write_text(dir / "session.json", st.dump(2) + "\n");
      std::cout << "step " << sess.step << ": " << r.edge_tokens << " edge tokens, "
                << r.timing.total_ms << " ms\n";
    } else if (*sim) {
      const Tensor image = io::read_ppm(image_path);
      const Tensor gt = io::read_mask_pgm(gt_path);
      const Model m = load_model(weights_path, image, threads);
      interaction::DecoderBackend backend(m.weights, m.cfg);
      const double targets[] = {0.90, 0.95};
      const auto rep = interaction::run_interaction(gt, image, backend, max_clicks, targets);
      json noc = json::object();
      for (const auto& n : rep.noc) noc[std::to_string(int(n.target * 100 + 0.5))] = n.clicks;
      json timings = json::array();
      for (const auto& t : rep.timings) timings.push_back(timing_json(t));
      const json out = {{"ious", rep.ious},          {"clicks", clicks_json(rep.clicks)},
                        {"noc", noc},                {"iou_at_5", rep.iou_at_5},
                        {"converged", rep.converged}, {"timings", timings},
                        {"total_ms", rep.total_ms},  {"threads", m.cfg.threads}};
      write_text(report_path, out.dump(2) + "\n");
      std::cout << "5-click IoU " << rep.iou_at_5 << ", NoC@90 " << noc["90"] << '\n';
    } else if (*battn) {
      const auto ns = profiling::doubling_range(n_min, n_max);
      const auto am = mode == "fa" ? profiling::AttnMode::Full : profiling::AttnMode::BsqaLinear;
      const auto rows = profiling::bench_attention(ns, am, repeats, seed, c, s);
      std::ostringstream os;
      os << "mode,n,median_ms,min_ms,flops\n";
      std::vector<double> xs, ys, fs_;
      for (const auto& r : rows) {
        os << mode << ',' << r.n << ',' << r.median_ms << ',' << r.min_ms << ',' << r.flops << '\n';
        xs.push_back(double(r.n));
        ys.push_back(r.median_ms);
        fs_.push_back(double(r.flops));
      }
      write_text(csv_path, os.str());
      const auto fit = profiling::fit_loglog(xs, ys);
      std::cout << mode << " log-log slope " << fit.slope << " (r2 " << fit.r2 << ")\n";
      if (!counters_path.empty()) {
        json pts = json::array();
        for (const auto& r : rows) pts.push_back({{"n", r.n}, {"flops", r.flops}});
        const auto ffit = profiling::fit_loglog(xs, fs_);
        const json out = {{"mode", mode},         {"dim", c},
                          {"bits", s},            {"points", pts},
                          {"time_slope", fit.slope}, {"time_r2", fit.r2},
                          {"flop_slope", ffit.slope}};
        write_text(counters_path, out.dump(2) + "\n");
      }
    } else if (*bmoe) {
      const auto mi = impl == "seq" ? profiling::MoeImpl::Sequential : profiling::MoeImpl::Parallel;
      std::ostringstream os;
      os << "impl,experts,tokens,threads,median_ms\n";
      json profiles = json::array();
      for (std::size_t e : experts) {
        const auto r = profiling::bench_moe(e, tokens, mi, threads, repeats, seed, dim);
        os << impl << ',' << r.experts << ',' << r.tokens << ',' << r.threads << ','
           << r.median_ms << '\n';
        const auto& p = r.profile;
        profiles.push_back({{"experts", e},           {"threads", p.threads},
                            {"group_sizes", p.group_sizes}, {"route_ms", p.route_ms},
                            {"sort_ms", p.sort_ms},   {"gather_ms", p.gather_ms},
                            {"matmul_ms", p.matmul_ms}, {"scatter_ms", p.scatter_ms},
                            {"total_ms", p.total_ms}});
        std::cout << impl << " experts " << e << ": " << r.median_ms << " ms\n";
      }
      write_text(csv_path, os.str());
      if (!profile_path.empty()) write_text(profile_path, profiles.dump(2) + "\n");
    } else {
      const bool dpe = bcrop[0]->parsed();
      const auto rs = parse_ratios(ratios);
      const auto rows = dpe ? profiling::bench_dpe(rs, image_px, repeats, seed, dim)
                            : profiling::bench_dlu(rs, image_px, repeats, seed, dim);
      write_crop_csv(csv_path, rows);
      for (const auto& r : rows)
        std::cout << (dpe ? "dpe" : "dlu") << " ratio " << r.area_ratio << ": " << r.dynamic_ms
                  << " / " << r.full_ms << " ms\n";
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
