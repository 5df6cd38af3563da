// ledit: command-line surface over the library. Every command is deterministic
// given its flags and seed; artifacts (CSV, PPM/PGM, checkpoints) land under
// --out, which defaults to $LEDIT_OUT_ROOT/<command> (root defaults to ./out).
// Each subcommand accepts --config <file> with flat key=value lines (keys are
// the long option names); flags given on the command line override the file.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ledit/checkpoint.hpp"
#include "ledit/dataset.hpp"
#include "ledit/diffusion.hpp"
#include "ledit/gradcheck_suite.hpp"
#include "ledit/image_io.hpp"
#include "ledit/masks.hpp"
#include "ledit/model.hpp"
#include "ledit/variance_lab.hpp"

namespace fs = std::filesystem;
using namespace ledit;

namespace {

std::string out_root() {
  const char* env = std::getenv("LEDIT_OUT_ROOT");
  return (env && *env) ? std::string(env) : std::string("out");
}

// Pick the output directory (explicit flag wins) and make sure it exists.
std::string resolve_out(const std::string& flag, const std::string& command) {
  std::string dir = flag.empty() ? out_root() + "/" + command : flag;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

// Full-precision, locale-independent float formatting: CSV bytes must not
// depend on anything but the values themselves.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(content.data(), std::streamsize(content.size()));
  f.flush();
  if (!f) throw IoError("write failed for '" + path + "'");
}

// Every subcommand takes --config <file> with flat key=value lines. CLI11's
// own set_config only honors files at the dispatching app (with sectioned
// keys), so the flat file is expanded into argv before the real parse: each
// key not already given on the command line becomes --key=value, which keeps
// "explicit flags beat the file" semantics for free.
std::string g_config_path;  // bound to every subcommand's --config

void attach_config(CLI::App* cmd) {
  cmd->add_option("--config", g_config_path,
                  "Flat key=value config file (keys = long option names); "
                  "command-line flags override file values");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> expand_config_args(CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);

  // locate --config and the subcommand (the first non-flag token)
  std::string path, subname;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    else if (subname.empty() && !args[i].empty() && args[i][0] != '-') subname = args[i];
  }
  if (path.empty() || subname.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(subname);
  if (sub == nullptr) return args;  // let the real parse report the bad command

  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file '" + path + "' line " + std::to_string(lineno) +
                        ": expected key=value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("config file '" + path + "' line " +
                                       std::to_string(lineno) + ": empty key");
    if (key == "config") continue;  // no recursion
    std::string flag = "--" + key;
    bool given = false;
    for (const std::string& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    if (given) continue;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt != nullptr && (opt->get_expected_max() > 1 || opt->get_expected_max() < 0)) {
      // multi-value option: split the value on spaces/commas into real tokens
      args.push_back(flag);
      std::string piece;
      for (char ch : value + ",") {
        if (ch == ' ' || ch == '\t' || ch == ',') {
          if (!piece.empty()) args.push_back(piece);
          piece.clear();
        } else {
          piece.push_back(ch);
        }
      }
    } else {
      // single-value options and flags both accept --key=value; unknown keys
      // pass through so the parser reports them like any other typo
      args.push_back(flag + "=" + value);
    }
  }
  return args;
}

// ---- schedule flags shared by train / sample / extrapolate / layer-var --------

struct ScheduleFlags {
  int timesteps = 1000;
  double beta_min = 1e-4;
  double beta_max = 2e-2;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--timesteps", timesteps, "Diffusion steps T in the schedule")
        ->capture_default_str();
    cmd->add_option("--beta-min", beta_min, "First beta of the linear schedule")
        ->capture_default_str();
    cmd->add_option("--beta-max", beta_max, "Last beta of the linear schedule")
        ->capture_default_str();
  }
  DiffusionSchedule build() const { return linear_schedule(timesteps, beta_min, beta_max); }
};

int last_causal_block(const ModelConfig& cfg) {
  std::vector<BlockMode> modes = make_schedule(cfg, 0).modes;
  for (int i = cfg.depth - 1; i >= 0; --i)
    if (modes[size_t(i)] == BlockMode::CA) return i;
  throw InputError("layer-var: model has no causal blocks (use_causal=false)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ledit - diffusion transformer without positional encoding, at toy scale.\n"
      "2D-causal attention + a locality conv supply position implicitly; a\n"
      "Monte-Carlo lab verifies the per-position variance decay that results.\n"
      "Artifacts default to $LEDIT_OUT_ROOT/<command> (root defaults to ./out)."};
  app.require_subcommand(1);

  // ---- variance-sim ------------------------------------------------------------
  struct {
    int64_t n = 64;
    int64_t trials = 100000;
    std::string law = "exp";
    double mu = 0.0, sigma = 1.0;
    uint64_t seed = 0;
    std::string out;
  } vs;
  auto* c_vs = app.add_subcommand(
      "variance-sim",
      "Monte-Carlo check of causal attention's per-position variance decay.\n"
      "Writes variance_sim.csv: one '# key=value ...' metadata row, then\n"
      "columns position,empirical_var,theoretical_var,rel_error.");
  c_vs->add_option("--n", vs.n, "Positions 1..n")->capture_default_str();
  c_vs->add_option("--trials", vs.trials, "Monte-Carlo trials")->capture_default_str();
  c_vs->add_option("--law", vs.law, "Logit law: exp (exact Dirichlet) | gauss")
      ->capture_default_str();
  c_vs->add_option("--mu", vs.mu, "Mean of the value distribution")->capture_default_str();
  c_vs->add_option("--sigma", vs.sigma, "Stddev of the value distribution")->capture_default_str();
  c_vs->add_option("--seed", vs.seed, "RNG seed")->capture_default_str();
  c_vs->add_option("--out", vs.out, "Output directory")->capture_default_str();
  attach_config(c_vs);
  c_vs->callback([&] {
    SimConfig sc;
    sc.n = vs.n;
    sc.trials = vs.trials;
    sc.law = logit_law_from_string(vs.law);
    sc.mu_v = vs.mu;
    sc.sigma_v = vs.sigma;
    sc.seed = vs.seed;
    VarianceReport rep = simulate_causal_variance(sc);

    std::string dir = resolve_out(vs.out, "variance-sim");
    std::string csv = dir + "/variance_sim.csv";
    std::ostringstream os;
    os << "# command=variance-sim law=" << to_string(sc.law) << " n=" << sc.n
       << " trials=" << sc.trials << " mu=" << fmt(sc.mu_v) << " sigma=" << fmt(sc.sigma_v)
       << " seed=" << sc.seed << "\n";
    os << "position,empirical_var,theoretical_var,rel_error\n";
    for (size_t k = 0; k < rep.empirical_var.size(); ++k)
      os << (k + 1) << "," << fmt(rep.empirical_var[k]) << "," << fmt(rep.theoretical_var[k])
         << "," << fmt(rep.rel_error[k]) << "\n";
    write_text(csv, os.str());
    std::cout << "variance-sim: law=" << to_string(sc.law) << " n=" << sc.n
              << " trials=" << sc.trials << " max_rel_error=" << fmt6(rep.max_rel_error)
              << " csv=" << csv << "\n";
  });

  // ---- mask-dump -----------------------------------------------------------------
  struct {
    std::string scan = "d";
    int height = 4, width = 4;
    std::string out;
  } md;
  auto* c_md = app.add_subcommand("mask-dump",
                                  "Write one scan variant's attention mask as an ASCII 0/1 grid\n"
                                  "(mask.txt, one query per line) and a PGM image (mask.pgm,\n"
                                  "white = visible).");
  c_md->add_option("--scan", md.scan, "Scan variant: a|b|c|d or full names")->capture_default_str();
  c_md->add_option("--height", md.height, "Token grid height")->capture_default_str();
  c_md->add_option("--width", md.width, "Token grid width")->capture_default_str();
  c_md->add_option("--out", md.out, "Output directory")->capture_default_str();
  attach_config(c_md);
  c_md->callback([&] {
    AttentionMask m = build_mask(scan_variant_from_string(md.scan), md.height, md.width);
    int64_t n = m.tokens();
    std::string txt;
    txt.reserve(size_t(n * (n + 1)));
    std::vector<uint8_t> pixels(size_t(n * n), 0);
    for (int64_t q = 0; q < n; ++q) {
      for (int64_t k = 0; k < n; ++k) {
        bool v = m.at(q, k);
        txt.push_back(v ? '1' : '0');
        pixels[size_t(q * n + k)] = v ? 255 : 0;
      }
      txt.push_back('\n');
    }
    std::string dir = resolve_out(md.out, "mask-dump");
    write_text(dir + "/mask.txt", txt);
    write_pgm(dir + "/mask.pgm", pixels, int(n), int(n));
    std::cout << "mask-dump: scan=" << to_string(m.variant) << " grid=" << md.height << "x"
              << md.width << " tokens=" << n << " visible=" << visible_count(m)
              << " txt=" << dir + "/mask.txt" << " pgm=" << dir + "/mask.pgm" << "\n";
  });

  // ---- gen-data ------------------------------------------------------------------
  struct {
    int classes = 4;
    int per_class = 64;
    int height = 16, width = 16;
    uint64_t seed = 0;
    std::string out;
  } gd;
  auto* c_gd = app.add_subcommand("gen-data",
                                  "Generate the synthetic class-conditioned dataset (blob /\n"
                                  "stripes / checkerboard / radial patterns) as PPM files plus\n"
                                  "index.txt with '<relpath> <class>' lines.");
  c_gd->add_option("--classes", gd.classes, "Number of classes")->capture_default_str();
  c_gd->add_option("--per-class", gd.per_class, "Images per class")->capture_default_str();
  c_gd->add_option("--height", gd.height, "Image height")->capture_default_str();
  c_gd->add_option("--width", gd.width, "Image width")->capture_default_str();
  c_gd->add_option("--seed", gd.seed, "RNG seed")->capture_default_str();
  c_gd->add_option("--out", gd.out, "Output directory")->capture_default_str();
  attach_config(c_gd);
  c_gd->callback([&] {
    Dataset ds = generate_dataset(gd.classes, gd.per_class, gd.height, gd.width, gd.seed);
    std::string dir = resolve_out(gd.out, "gen-data");
    write_dataset(ds, dir);
    std::cout << "gen-data: classes=" << gd.classes << " per_class=" << gd.per_class
              << " images=" << ds.size() << " res=" << gd.height << "x" << gd.width
              << " dir=" << dir << "\n";
  });

  // ---- train ----------------------------------------------------------------------
  struct {
    std::string data;
    int steps = 500;
    int batch = 8;
    double lr = 1e-3;
    double label_dropout = 0.1;
    uint64_t seed = 0;
    int depth = 8, hidden = 192, heads = 6, patch = 2;
    std::string scan = "d", order = "alt_sa_ca";
    bool no_causal = false, no_conv = false;
    double dilation_prob = 0.1;
    std::vector<int> dilation_rates = {2};
    ScheduleFlags sched;
    std::string out;
  } tr;
  auto* c_tr = app.add_subcommand("train",
                                  "Train on a gen-data directory; writes checkpoint.bin and\n"
                                  "train_log.csv (metadata row, then step,loss,conv_dilation).");
  c_tr->add_option("--data", tr.data, "Dataset directory (from gen-data)")->required();
  c_tr->add_option("--steps", tr.steps, "Optimizer steps")->capture_default_str();
  c_tr->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  c_tr->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  c_tr->add_option("--label-dropout", tr.label_dropout, "Null-label probability (for guidance)")
      ->capture_default_str();
  c_tr->add_option("--seed", tr.seed, "RNG seed (init + training draws)")->capture_default_str();
  c_tr->add_option("--depth", tr.depth, "Transformer blocks (even)")->capture_default_str();
  c_tr->add_option("--hidden", tr.hidden, "Hidden width")->capture_default_str();
  c_tr->add_option("--heads", tr.heads, "Attention heads")->capture_default_str();
  c_tr->add_option("--patch", tr.patch, "Patch size")->capture_default_str();
  c_tr->add_option("--scan", tr.scan, "Causal scan variant a|b|c|d")->capture_default_str();
  c_tr->add_option("--order", tr.order, "Block order: ca_then_sa|sa_then_ca|alt_ca_sa|alt_sa_ca")
      ->capture_default_str();
  c_tr->add_flag("--no-causal", tr.no_causal, "Ablate causal masks (every block self-attends)");
  c_tr->add_flag("--no-conv", tr.no_conv, "Ablate the locality conv");
  c_tr->add_option("--dilation-prob", tr.dilation_prob,
                   "Per-step probability of a dilated locality conv")
      ->capture_default_str();
  c_tr->add_option("--dilation-rates", tr.dilation_rates, "Candidate dilation rates")
      ->capture_default_str();
  tr.sched.add_to(c_tr);
  c_tr->add_option("--out", tr.out, "Output directory")->capture_default_str();
  attach_config(c_tr);
  c_tr->callback([&] {
    Dataset ds = load_dataset(tr.data);
    ModelConfig mc;
    mc.depth = tr.depth;
    mc.hidden = tr.hidden;
    mc.heads = tr.heads;
    mc.patch = tr.patch;
    mc.channels = 3;
    mc.num_classes = ds.num_classes;
    mc.train_h = ds.height;
    mc.train_w = ds.width;
    mc.scan = scan_variant_from_string(tr.scan);
    mc.order = block_order_from_string(tr.order);
    mc.use_causal = !tr.no_causal;
    mc.use_conv = !tr.no_conv;
    mc.dilation.probability = tr.dilation_prob;
    mc.dilation.rates = tr.dilation_rates;
    mc.validate();

    DiffusionSchedule sched = tr.sched.build();
    TrainConfig tc;
    tc.steps = tr.steps;
    tc.batch = tr.batch;
    tc.lr = tr.lr;
    tc.label_dropout = tr.label_dropout;
    tc.seed = tr.seed;
    tc.dilation = mc.dilation;
    tc.validate();

    RngStream init_rng(tr.seed, 0);
    Model model = init_model(mc, init_rng);
    TrainerState st;
    st.rng = RngStream(tr.seed, 1);

    std::ostringstream os;
    os << "# command=train data=" << tr.data << " steps=" << tr.steps << " batch=" << tr.batch
       << " lr=" << fmt(tr.lr) << " label_dropout=" << fmt(tr.label_dropout)
       << " seed=" << tr.seed << " depth=" << mc.depth << " hidden=" << mc.hidden
       << " heads=" << mc.heads << " patch=" << mc.patch << " scan=" << to_string(mc.scan)
       << " order=" << to_string(mc.order) << " causal=" << (mc.use_causal ? 1 : 0)
       << " conv=" << (mc.use_conv ? 1 : 0) << " dilation_prob=" << fmt(tr.dilation_prob)
       << " timesteps=" << tr.sched.timesteps << "\n";
    os << "step,loss,conv_dilation\n";

    std::vector<double> losses;
    losses.reserve(size_t(tr.steps));
    for (int i = 0; i < tr.steps; ++i) {
      TrainStepResult r = training_step(model, st.adam, ds, sched, tc, st.rng);
      st.step += 1;
      losses.push_back(r.loss);
      os << i << "," << fmt(r.loss) << "," << r.conv_spec.dilation << "\n";
    }

    std::string dir = resolve_out(tr.out, "train");
    std::string ck = dir + "/checkpoint.bin";
    std::string log = dir + "/train_log.csv";
    save_checkpoint(model, st, ck);
    write_text(log, os.str());

    int win = std::min(50, tr.steps);
    double head = 0, tail = 0;
    for (int i = 0; i < win; ++i) {
      head += losses[size_t(i)];
      tail += losses[size_t(tr.steps - win + i)];
    }
    head /= win;
    tail /= win;
    std::cout << "train: steps=" << tr.steps << " loss_first" << win << "=" << fmt6(head)
              << " loss_last" << win << "=" << fmt6(tail) << " checkpoint=" << ck
              << " log=" << log << "\n";
  });

  // ---- sample / extrapolate --------------------------------------------------------
  struct SampleFlags {
    std::string checkpoint;
    int height = 0, width = 0;  // 0 = command default
    int steps = 50;
    double cfg_scale = 1.0;
    int label = 0;
    int t_prime = 0;
    int count = 1;
    uint64_t seed = 0;
    ScheduleFlags sched;
    std::string out;

    void add_to(CLI::App* cmd, const char* res_help) {
      cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (from train)")->required();
      cmd->add_option("--height", height, res_help)->capture_default_str();
      cmd->add_option("--width", width, res_help)->capture_default_str();
      cmd->add_option("--steps", steps, "Sampling steps (strided subsequence of T)")
          ->capture_default_str();
      cmd->add_option("--cfg-scale", cfg_scale, "Guidance scale; > 1 enables guidance")
          ->capture_default_str();
      cmd->add_option("--label", label, "Class id, or -1 for unconditional")
          ->capture_default_str();
      cmd->add_option("--t-prime", t_prime, "Causal blocks run unmasked for t < this")
          ->capture_default_str();
      cmd->add_option("--count", count, "Number of images")->capture_default_str();
      cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
      sched.add_to(cmd);
      cmd->add_option("--out", out, "Output directory")->capture_default_str();
    }
  };

  auto run_sampling = [](const SampleFlags& sf, const std::string& command, bool extrapolating) {
    LoadedCheckpoint lc = load_checkpoint(sf.checkpoint);
    const ModelConfig& mc = lc.model.cfg;
    int scale_default = extrapolating ? 2 : 1;
    int H = sf.height > 0 ? sf.height : mc.train_h * scale_default;
    int W = sf.width > 0 ? sf.width : mc.train_w * scale_default;
    if (extrapolating && H == mc.train_h && W == mc.train_w)
      throw ConfigError("extrapolate: resolution equals the training resolution; use `sample`");
    if (sf.count < 1) throw ConfigError(command + ": count must be >= 1");

    DiffusionSchedule sched = sf.sched.build();
    SampleConfig sc;
    sc.height = H;
    sc.width = W;
    sc.steps = sf.steps;
    sc.cfg_scale = sf.cfg_scale;
    sc.label = sf.label;
    sc.t_prime = sf.t_prime;

    std::string dir = resolve_out(sf.out, command);
    for (int k = 0; k < sf.count; ++k) {
      RngStream rng(sf.seed, 100 + uint64_t(k));
      Tensor img = ddpm_sample(lc.model, sched, sc, rng);
      write_ppm(dir + "/sample_" + std::to_string(k) + ".ppm", img);
    }
    int64_t tokens = (int64_t(H) / mc.patch) * (W / mc.patch);
    double logit_scale =
        attention_logit_scale({mc.train_tokens(), LogitScaleMode::LOG_RATIO}, tokens);
    std::cout << command << ": count=" << sf.count << " res=" << H << "x" << W
              << " steps=" << sf.steps << " cfg_scale=" << fmt6(sf.cfg_scale)
              << " label=" << sf.label << " t_prime=" << sf.t_prime
              << " logit_scale=" << fmt6(logit_scale) << " out=" << dir << "\n";
  };

  SampleFlags smp;
  auto* c_smp = app.add_subcommand("sample",
                                   "Draw images from a trained checkpoint; writes sample_<k>.ppm.");
  smp.add_to(c_smp, "Output resolution (0 = training resolution)");
  attach_config(c_smp);
  c_smp->callback([&] { run_sampling(smp, "sample", false); });

  SampleFlags ext;
  auto* c_ext = app.add_subcommand(
      "extrapolate",
      "Sample at a resolution the model never trained on (default 2x per side),\n"
      "with length-dependent attention logit scaling; writes sample_<k>.ppm.");
  ext.add_to(c_ext, "Output resolution (0 = 2x training resolution)");
  attach_config(c_ext);
  c_ext->callback([&] { run_sampling(ext, "extrapolate", true); });

  // ---- layer-var --------------------------------------------------------------------
  struct {
    std::string checkpoint;
    int t = 750;
    int layer = -1;
    int height = 0, width = 0;
    int batch = 8;
    uint64_t seed = 0;
    ScheduleFlags sched;
    std::string out;
  } lv;
  auto* c_lv = app.add_subcommand(
      "layer-var",
      "Per-token variance profile of one causal block's output on noised\n"
      "synthetic images. Writes layer_var.csv: one '# key=value ...' metadata\n"
      "row, then columns position,variance. Prints Spearman(position, variance).");
  c_lv->add_option("--checkpoint", lv.checkpoint, "Checkpoint file (from train)")->required();
  c_lv->add_option("--t", lv.t, "Diffusion timestep of the probe")->capture_default_str();
  c_lv->add_option("--layer", lv.layer, "Block index; -1 = last causal block")
      ->capture_default_str();
  c_lv->add_option("--height", lv.height, "Probe resolution (0 = training resolution)")
      ->capture_default_str();
  c_lv->add_option("--width", lv.width, "Probe resolution (0 = training resolution)")
      ->capture_default_str();
  c_lv->add_option("--batch", lv.batch, "Images averaged over")->capture_default_str();
  c_lv->add_option("--seed", lv.seed, "RNG seed")->capture_default_str();
  lv.sched.add_to(c_lv);
  c_lv->add_option("--out", lv.out, "Output directory")->capture_default_str();
  attach_config(c_lv);
  c_lv->callback([&] {
    LoadedCheckpoint lc = load_checkpoint(lv.checkpoint);
    const ModelConfig& mc = lc.model.cfg;
    int H = lv.height > 0 ? lv.height : mc.train_h;
    int W = lv.width > 0 ? lv.width : mc.train_w;
    int layer = lv.layer >= 0 ? lv.layer : last_causal_block(mc);
    DiffusionSchedule sched = lv.sched.build();

    std::vector<double> prof =
        model_layer_variance(lc.model, sched, lv.t, layer, H, W, lv.batch, lv.seed);
    std::vector<double> pos(prof.size());
    for (size_t i = 0; i < pos.size(); ++i) pos[i] = double(i + 1);
    double rho = spearman(pos, prof);

    std::string dir = resolve_out(lv.out, "layer-var");
    std::string csv = dir + "/layer_var.csv";
    std::ostringstream os;
    os << "# command=layer-var checkpoint=" << lv.checkpoint << " t=" << lv.t
       << " layer=" << layer << " res=" << H << "x" << W << " batch=" << lv.batch
       << " seed=" << lv.seed << " spearman=" << fmt(rho) << "\n";
    os << "position,variance\n";
    for (size_t i = 0; i < prof.size(); ++i) os << (i + 1) << "," << fmt(prof[i]) << "\n";
    write_text(csv, os.str());
    std::cout << "layer-var: layer=" << layer << " t=" << lv.t << " res=" << H << "x" << W
              << " tokens=" << prof.size() << " spearman=" << fmt6(rho) << " csv=" << csv
              << "\n";
  });

  // ---- gradcheck ---------------------------------------------------------------------
  struct {
    uint64_t seed = 0;
    double tolerance = 1e-4;
  } gc;
  auto* c_gc = app.add_subcommand("gradcheck",
                                  "Finite-difference check of every differentiable kernel\n"
                                  "(matmul, softmax masked/unmasked, conv2d dilation 1/2,\n"
                                  "layer_norm, modulation, full block). Nonzero exit if any\n"
                                  "op exceeds the tolerance.");
  c_gc->add_option("--seed", gc.seed, "RNG seed for the probe tensors")->capture_default_str();
  c_gc->add_option("--tolerance", gc.tolerance, "Max relative error allowed")
      ->capture_default_str();
  attach_config(c_gc);
  c_gc->callback([&] {
    std::vector<GradCheckResult> res = run_gradcheck_suite(gc.seed);
    double worst = 0.0;
    for (const GradCheckResult& r : res) {
      if (r.max_rel > gc.tolerance)
        throw NumericError("gradcheck: " + r.name + " relative error " + fmt6(r.max_rel) +
                           " exceeds tolerance " + fmt6(gc.tolerance));
      worst = std::max(worst, r.max_rel);
    }
    std::cout << "gradcheck: seed=" << gc.seed << " checks=" << res.size()
              << " max_rel=" << fmt6(worst) << " tolerance=" << fmt6(gc.tolerance) << "\n";
  });

  // ---- flops -------------------------------------------------------------------------
  struct {
    int64_t len = 0;
  } fl;
  auto* c_fl = app.add_subcommand("flops",
                                  "Print attention score-term counts for a sequence length:\n"
                                  "full=L^2 causal=L(L+1)/2.");
  c_fl->add_option("--len", fl.len, "Sequence length L")->required();
  attach_config(c_fl);
  c_fl->callback([&] {
    std::cout << "full=" << score_op_count(fl.len, false)
              << " causal=" << score_op_count(fl.len, true) << "\n";
  });

  try {
    std::vector<std::string> args = expand_config_args(app, argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 consumes args back-to-front
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
