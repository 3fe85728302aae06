// flowinv: train/sample/invert/reconstruct/edit/converge/ablate/report
// command line for the flow-matching inversion and editing laboratory.
//
// Exit codes: 0 success, 1 usage/config error, 2 numeric failure (NaN),
// 3 acceptance-gate failure (convergence or monotonicity gate).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowinv/flowinv.hpp"

using namespace flowinv;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitGate = 3;

// Resolved configuration echoed verbatim into every artifact.
struct RunMeta {
    std::string command;
    std::vector<std::pair<std::string, std::string>> kv;

    void add(const std::string& k, const std::string& v) { kv.emplace_back(k, v); }
    void add(const std::string& k, double v) { kv.emplace_back(k, format_double(v)); }
    void add(const std::string& k, int v) { kv.emplace_back(k, std::to_string(v)); }
    void add(const std::string& k, std::uint64_t v) { kv.emplace_back(k, std::to_string(v)); }

    std::string line() const {
        std::string s = "cmd=" + command;
        for (const auto& [k, v] : kv) s += " " + k + "=" + v;
        return s;
    }

    void write_json(const fs::path& dir) const {
        nlohmann::json j;
        j["command"] = command;
        for (const auto& [k, v] : kv) j["config"][k] = v;
        std::ofstream os(dir / "run_config.json");
        os << j.dump(2) << "\n";
    }
};

fs::path ensure_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + out);
    auto probe = dir / ".write_probe";
    std::ofstream os(probe);
    if (!os) throw std::runtime_error("output directory not writable: " + out);
    os.close();
    fs::remove(probe, ec);
    return dir;
}

double parse_dt(const std::string& s) {
    auto caret = s.find('^');
    if (caret != std::string::npos) {
        double base = std::stod(s.substr(0, caret));
        double expo = std::stod(s.substr(caret + 1));
        return std::pow(base, expo);
    }
    return std::stod(s);
}

StepKind parse_rule(const std::string& s) {
    if (s == "euler") return StepKind::Euler;
    if (s == "heun") return StepKind::Heun;
    if (s == "ddim") return StepKind::Ddim;
    throw CLI::ValidationError("--rule must be euler, heun, or ddim");
}

NeuralFieldArch toy2d_arch() {
    NeuralFieldArch arch;
    arch.channels = 2;
    arch.height = 1;
    arch.width = 1;
    arch.time_dim = 8;
    arch.cond_dim = 8;
    arch.hidden = {64, 64};
    arch.vocab = 2;
    return arch;
}

double nan_mean(const std::vector<double>& xs) {
    double acc = 0.0;
    std::size_t n = 0;
    for (double x : xs)
        if (std::isfinite(x)) {
            acc += x;
            ++n;
        }
    return n ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    std::string dataset = "shapes";
    int n = 600;
    int steps = 10000;
    int batch = 32;
    double lr = 1e-3;
    double dropout = 0.1;
    std::uint64_t seed = 7;
    std::string out = "out/train";
};

int cmd_train(const TrainArgs& a) {
    fs::path dir = ensure_out_dir(a.out);
    RunMeta meta;
    meta.command = "train";
    meta.add("dataset", a.dataset);
    meta.add("n", a.n);
    meta.add("steps", a.steps);
    meta.add("batch", a.batch);
    meta.add("lr", a.lr);
    meta.add("dropout", a.dropout);
    meta.add("seed", a.seed);

    TrainConfig cfg;
    cfg.batch_size = a.batch;
    cfg.total_steps = a.steps;
    cfg.lr = a.lr;
    cfg.cond_dropout = a.dropout;
    cfg.seed = a.seed;

    std::vector<TrainItem> items;
    if (a.dataset == "shapes") {
        items = train_items(gen_shapes_dataset(a.n, a.seed));
    } else if (a.dataset == "toy2d") {
        cfg.arch = toy2d_arch();
        items = train_items(gen_toy2d_dataset(a.n, a.seed));
    } else {
        throw CLI::ValidationError("--dataset must be shapes or toy2d");
    }

    TrainResult res = train(items, cfg);

    {
        CsvWriter csv((dir / "loss.csv").string(), {"step", "loss"}, meta.line());
        for (std::size_t i = 0; i < res.losses.size(); ++i)
            csv.row({std::to_string(i + 1), format_double(res.losses[i])});
    }
    nlohmann::json ckmeta;
    ckmeta["train_config"] = {{"lr", cfg.lr},
                              {"batch_size", cfg.batch_size},
                              {"total_steps", cfg.total_steps},
                              {"seed", cfg.seed},
                              {"cond_dropout", cfg.cond_dropout},
                              {"dataset", a.dataset},
                              {"dataset_size", a.n}};
    save_checkpoint((dir / "checkpoint.fiv").string(), res.field, ckmeta);
    meta.write_json(dir);

    if (res.divergence_step) {
        std::cerr << "training diverged (NaN loss) at step " << *res.divergence_step << "\n";
        return kExitNumeric;
    }
    std::printf("trained %d steps; final loss %s; wrote %s\n", a.steps,
                res.losses.empty() ? "n/a" : format_double(res.losses.back()).c_str(),
                (dir / "checkpoint.fiv").string().c_str());
    return kExitOk;
}

// --------------------------------------------------------------- sample ----

struct SampleArgs {
    std::string ckpt;
    std::string cond = "null";
    std::string rule = "euler";
    int steps = 50;
    int count = 1;
    std::uint64_t seed = 1;
    std::string out = "out/sample";
};

int cmd_sample(const SampleArgs& a) {
    fs::path dir = ensure_out_dir(a.out);
    RunMeta meta;
    meta.command = "sample";
    meta.add("ckpt", a.ckpt);
    meta.add("cond", a.cond);
    meta.add("rule", a.rule);
    meta.add("steps", a.steps);
    meta.add("count", a.count);
    meta.add("seed", a.seed);

    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    Condition c = condition_from_name(a.cond);
    StepKind kind = parse_rule(a.rule);
    if (kind == StepKind::Ddim) throw CLI::ValidationError("sample: ddim needs an eps-predictor, not a checkpoint");
    StepRule rule(kind, ck.field, uniform_grid(a.steps));

    nlohmann::json info;
    for (int i = 0; i < a.count; ++i) {
        Rng rng = Rng(a.seed).child(static_cast<std::uint64_t>(i));
        Latent z1 = rng.normal_latent(ck.field.arch().channels, ck.field.arch().height, ck.field.arch().width);
        ck.field.reset_nfe();
        Trajectory traj = sample(rule, z1, c);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%02d.ppm", i);
        write_ppm((dir / name).string(), traj.endpoint(), meta.line());
        info["samples"].push_back({{"file", name}, {"nfe", ck.field.nfe()}});
    }
    std::ofstream(dir / "meta.json") << info.dump(2) << "\n";
    meta.write_json(dir);
    std::printf("wrote %d sample(s) to %s\n", a.count, dir.string().c_str());
    return kExitOk;
}

// --------------------------------------------------------------- invert ----

struct InvertArgs {
    std::string ckpt;
    std::string input;
    int index = 0;
    std::uint64_t data_seed = 1007;
    std::string cond = "null";
    std::string rule = "euler";
    std::string method = "uni_inv";
    int steps = 50;
    std::string out = "out/invert";
};

Inverter inverter_by_name(const std::string& name) {
    if (name == "uni_inv") return uni_inv_inverter();
    if (name == "at_prev") return vanilla_inverter(VanillaMode::AtPrev);
    if (name == "at_target") return vanilla_inverter(VanillaMode::AtTarget);
    throw CLI::ValidationError("--method must be uni_inv, at_prev, or at_target");
}

int cmd_invert(const InvertArgs& a) {
    fs::path dir = ensure_out_dir(a.out);
    RunMeta meta;
    meta.command = "invert";
    meta.add("ckpt", a.ckpt);
    meta.add("input", a.input.empty() ? ("index:" + std::to_string(a.index)) : a.input);
    meta.add("cond", a.cond);
    meta.add("rule", a.rule);
    meta.add("method", a.method);
    meta.add("steps", a.steps);

    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    Latent z0;
    if (!a.input.empty()) {
        z0 = read_ppm(a.input);
    } else {
        auto ds = gen_shapes_dataset(a.index + 1, a.data_seed);
        z0 = ds.back().image;
    }
    Condition c = condition_from_name(a.cond);
    StepKind kind = parse_rule(a.rule);
    if (kind == StepKind::Ddim) throw CLI::ValidationError("invert: ddim needs an eps-predictor, not a checkpoint");
    StepRule rule(kind, ck.field, uniform_grid(a.steps));

    ck.field.reset_nfe();
    Trajectory inv = inverter_by_name(a.method)(rule, z0, c);
    std::uint64_t nfe = ck.field.nfe();

    // raw latent dump (little-endian doubles) plus a clamped preview
    {
        std::ofstream os(dir / "inverted.f64", std::ios::binary);
        for (double d : inv.endpoint().v) os.write(reinterpret_cast<const char*>(&d), 8);
    }
    Latent preview = inv.endpoint();
    for (double& x : preview.v) x = 0.5 + 0.25 * x;  // map N(0,1)-ish range into view
    write_ppm((dir / "inverted_preview.ppm").string(), preview, meta.line());

    nlohmann::json info;
    info["nfe"] = nfe;
    info["shape"] = {inv.endpoint().c, inv.endpoint().h, inv.endpoint().w};
    info["endpoint_time"] = inv.times.back();
    std::ofstream(dir / "meta.json") << info.dump(2) << "\n";
    meta.write_json(dir);
    std::printf("inverted with %s in %llu NFE; wrote %s\n", a.method.c_str(), static_cast<unsigned long long>(nfe),
                (dir / "inverted.f64").string().c_str());
    return kExitOk;
}

// ---------------------------------------------------------- reconstruct ----

struct ReconstructArgs {
    std::string ckpt;
    int images = 50;
    int steps = 50;
    std::uint64_t data_seed = 1007;
    std::string out = "out/reconstruct";
};

int cmd_reconstruct(const ReconstructArgs& a) {
    fs::path dir = ensure_out_dir(a.out);
    RunMeta meta;
    meta.command = "reconstruct";
    meta.add("ckpt", a.ckpt);
    meta.add("images", a.images);
    meta.add("steps", a.steps);
    meta.add("data_seed", a.data_seed);

    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    auto held_out = gen_shapes_dataset(a.images, a.data_seed);
    AnalyticEpsField eps_field(1.0);

    const int n = a.steps;
    const int n_half = n / 2;

    // matched NFE budgets: once-forward methods run N steps, twice-forward
    // methods N/2; the DDIM rows use the analytic eps-predictor so both DDIM
    // directions see the same forward map
    struct Method {
        std::string name;
        StepKind kind;
        const VelocityField* field;
        int steps;
        Inverter inverter;
        std::uint64_t expected_nfe;
    };
    std::vector<Method> methods = {
        {"at_prev", StepKind::Euler, &ck.field, n, vanilla_inverter(VanillaMode::AtPrev),
         static_cast<std::uint64_t>(2 * n)},
        {"at_target", StepKind::Euler, &ck.field, n, vanilla_inverter(VanillaMode::AtTarget),
         static_cast<std::uint64_t>(2 * n)},
        {"uni_inv", StepKind::Euler, &ck.field, n, uni_inv_inverter(), static_cast<std::uint64_t>(2 * n + 1)},
        {"heun", StepKind::Heun, &ck.field, n_half, vanilla_inverter(VanillaMode::AtPrev),
         static_cast<std::uint64_t>(4 * n_half)},
        {"uni_inv_heun", StepKind::Heun, &ck.field, n_half, uni_inv_inverter(),
         static_cast<std::uint64_t>(4 * n_half + 2)},
        {"uni_inv_ddim", StepKind::Ddim, &eps_field, n, uni_inv_inverter(), static_cast<std::uint64_t>(2 * n + 1)},
    };

    CsvWriter per_image((dir / "per_image.csv").string(),
                        {"method", "cond_mode", "image", "mse", "psnr", "ssim", "nfe"}, meta.line());
    std::map<std::string, std::array<double, 3>> sums;
    std::map<std::string, std::uint64_t> nfes;

    for (const auto& m : methods) {
        StepRule rule(m.kind, *m.field, uniform_grid(m.steps));
        for (int mode = 0; mode < 2; ++mode) {
            std::string mode_name = mode == 0 ? "conditional" : "unconditional";
            for (int i = 0; i < a.images; ++i) {
                const ShapesSample& s = held_out[static_cast<std::size_t>(i)];
                Condition c;
                if (m.kind == StepKind::Ddim)
                    c = Condition::null();  // the analytic predictor is unconditional
                else
                    c = mode == 0 ? Condition::of(s.token) : Condition::null();
                Reconstruction rec = reconstruct_with(rule, s.image, c, m.inverter);
                if (rec.nfe != m.expected_nfe) throw std::runtime_error("NFE accounting mismatch for " + m.name);
                per_image.row({m.name, mode_name, std::to_string(i), format_double(rec.mse_val),
                               format_double(rec.psnr_db), format_double(rec.ssim_val), std::to_string(rec.nfe)});
                auto& acc = sums[m.name + "|" + mode_name];
                acc[0] += rec.mse_val;
                acc[1] += rec.psnr_db;
                acc[2] += rec.ssim_val;
                nfes[m.name] = rec.nfe;
            }
        }
    }

    CsvWriter summary((dir / "summary.csv").string(),
                      {"method", "cond_mode", "mean_mse", "mean_psnr", "mean_ssim", "nfe"}, meta.line());
    std::printf("%-14s %-14s %-12s %-8s %-8s %s\n", "method", "mode", "mse", "psnr", "ssim", "nfe");
    for (const auto& m : methods)
        for (const std::string& mode_name : {std::string("conditional"), std::string("unconditional")}) {
            const auto& acc = sums[m.name + "|" + mode_name];
            double k = a.images;
            summary.row({m.name, mode_name, format_double(acc[0] / k), format_double(acc[1] / k),
                         format_double(acc[2] / k), std::to_string(nfes[m.name])});
            std::printf("%-14s %-14s %-12.3e %-8.2f %-8.4f %llu\n", m.name.c_str(), mode_name.c_str(), acc[0] / k,
                        acc[1] / k, acc[2] / k, static_cast<unsigned long long>(nfes[m.name]));
        }
    meta.write_json(dir);
    return kExitOk;
}

// ----------------------------------------------------------------- edit ----

struct EditArgs {
    std::string ckpt;
    int index = 0;
    std::uint64_t data_seed = 1007;
    std::string source = "auto";
    std::string target;
    double alpha = 0.6;
    double omega = 5.0;
    int steps = 15;
    std::string baseline = "uni_edit";
    bool mask_signed = false;
    double force_mask = -1.0;  // < 0 means unset
    std::string out = "out/edit";
};

int cmd_edit(const EditArgs& a) {
    fs::path dir = ensure_out_dir(a.out);
    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    auto ds = gen_shapes_dataset(a.index + 1, a.data_seed);
    const ShapesSample& s = ds.back();

    Condition source = a.source == "auto" ? Condition::of(s.token) : condition_from_name(a.source);
    if (a.target.empty()) throw CLI::ValidationError("edit: --target is required");
    Condition target = condition_from_name(a.target);

    RunMeta meta;
    meta.command = "edit";
    meta.add("ckpt", a.ckpt);
    meta.add("index", a.index);
    meta.add("source", condition_name(source));
    meta.add("target", condition_name(target));
    meta.add("alpha", a.alpha);
    meta.add("omega", a.omega);
    meta.add("steps", a.steps);
    meta.add("baseline", a.baseline);
    meta.add("mask_mode", a.mask_signed ? "signed" : "abs");
    if (a.force_mask >= 0.0) meta.add("force_mask", a.force_mask);

    EditConfig cfg;
    cfg.omega = a.omega;
    cfg.alpha = a.alpha;
    cfg.n_steps = a.steps;
    cfg.source = source;
    cfg.target = target;
    cfg.mask_mode = a.mask_signed ? MaskMode::Signed : MaskMode::Abs;
    if (a.force_mask >= 0.0) cfg.force_mask = a.force_mask;

    write_ppm((dir / "original.ppm").string(), s.image, meta.line());

    Latent edited;
    std::uint64_t nfe = 0;
    if (a.baseline == "uni_edit") {
        EditTrace trace = uni_edit(ck.field, s.image, cfg);
        edited = trace.output;
        nfe = trace.nfe;
        fs::create_directories(dir / "masks");
        nlohmann::json jt;
        jt["grid_times"] = trace.grid_times;
        jt["nfe"] = trace.nfe;
        for (const auto& st : trace.steps) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%02d.pgm", st.i);
            write_pgm((dir / "masks" / name).string(), st.mask, meta.line());
            jt["steps"].push_back({{"i", st.i},
                                   {"t", st.t},
                                   {"t_prev", st.t_prev},
                                   {"mask_mean", st.mask_mean},
                                   {"mask_min", st.mask_min},
                                   {"mask_max", st.mask_max},
                                   {"v_src_norm", st.v_src_norm},
                                   {"v_tgt_norm", st.v_tgt_norm},
                                   {"stride_norm", st.stride_norm}});
        }
        std::ofstream(dir / "trace.json") << jt.dump(2) << "\n";
    } else if (a.baseline == "delayed") {
        ck.field.reset_nfe();
        edited = baseline_delayed_injection(ck.field, s.image, cfg);
        nfe = ck.field.nfe();
    } else if (a.baseline == "direct") {
        ck.field.reset_nfe();
        edited = baseline_direct_edit(ck.field, s.image, a.steps, source, target);
        nfe = ck.field.nfe();
    } else if (a.baseline == "latent_fusion") {
        LatentFusionResult fus = baseline_latent_fusion(ck.field, s.image, cfg);
        edited = fus.output;
        nfe = fus.nfe;
    } else {
        throw CLI::ValidationError("--baseline must be uni_edit, delayed, direct, or latent_fusion");
    }

    write_ppm((dir / "edited.ppm").string(), edited, meta.line());
    RegionReport rep = region_report(s.image, edited, s.region_mask,
                                     source.is_null() ? condition_color(s.token) : condition_color(*source.token),
                                     condition_color(*target.token));
    {
        CsvWriter csv((dir / "region_report.csv").string(),
                      {"baseline", "bg_mse", "bg_psnr", "bg_ssim", "edit_score", "nfe"}, meta.line());
        csv.row({a.baseline, format_double(rep.bg_mse), format_double(rep.bg_psnr), format_double(rep.bg_ssim),
                 format_double(rep.edit_score), std::to_string(nfe)});
    }
    meta.write_json(dir);
    std::printf("edit %s -> %s (%s): nfe=%llu bg_psnr=%.2f edit_score=%.4f\n", condition_name(source).c_str(),
                condition_name(target).c_str(), a.baseline.c_str(), static_cast<unsigned long long>(nfe), rep.bg_psnr,
                rep.edit_score);
    return kExitOk;
}

// ------------------------------------------------------------- converge ----

struct ConvergeArgs {
    std::string rule = "euler";
    double t = 0.75;
    std::string dt_min = "2^-8";
    std::string dt_max = "2^-3";
    double sigma0 = 1.0;
    std::uint64_t seed = 7;
    std::string out = "out/converge";
};

int cmd_converge(const ConvergeArgs& a) {
    fs::path dir = ensure_out_dir(a.out);
    RunMeta meta;
    meta.command = "converge";
    meta.add("rule", a.rule);
    meta.add("t", a.t);
    meta.add("dt_min", a.dt_min);
    meta.add("dt_max", a.dt_max);
    meta.add("sigma0", a.sigma0);
    meta.add("seed", a.seed);

    StepKind kind = parse_rule(a.rule);
    if (kind == StepKind::Ddim) throw CLI::ValidationError("converge: the flow-map oracle covers euler and heun only");

    double lo = parse_dt(a.dt_min), hi = parse_dt(a.dt_max);
    if (!(lo > 0.0) || !(hi > lo)) throw CLI::ValidationError("converge: need 0 < dt_min < dt_max");
    std::vector<double> dts;
    for (double dt = hi; dt >= lo * (1.0 - 1e-12); dt /= 2.0) dts.push_back(dt);

    AnalyticGaussianField field(0.0, a.sigma0);
    Rng rng(a.seed);
    Latent z_start = rng.normal_latent(1, 2, 2);

    struct Row {
        std::string name;
        OneStepMethod method;
        LocalErrorStudy study;
    };
    std::vector<Row> rows = {{"uni_inv", OneStepMethod::UniInv, {}},
                             {"at_prev", OneStepMethod::VanillaAtPrev, {}},
                             {"at_target", OneStepMethod::VanillaAtTarget, {}}};
    for (auto& r : rows) r.study = local_error_study(kind, field, z_start, dts, r.method, a.t);

    {
        CsvWriter csv((dir / "converge.csv").string(), {"method", "dt", "error"}, meta.line());
        for (const auto& r : rows)
            for (std::size_t i = 0; i < r.study.dts.size(); ++i)
                csv.row({r.name, format_double(r.study.dts[i]), format_double(r.study.errors[i])});
    }
    {
        CsvWriter csv((dir / "slopes.csv").string(), {"method", "slope", "exact"}, meta.line());
        for (const auto& r : rows) csv.row({r.name, format_double(r.study.slope), r.study.exact ? "1" : "0"});
    }
    SvgPlot plot("one-step inversion error (" + a.rule + ")", "dt", "error", true, true);
    for (const auto& r : rows) plot.add_series(r.name, r.study.dts, r.study.errors);
    plot.write((dir / "converge.svg").string(), meta.line());
    meta.write_json(dir);

    for (const auto& r : rows)
        std::printf("%-10s slope %.4f%s\n", r.name.c_str(), r.study.slope, r.study.exact ? " (exact)" : "");

    double uni_slope = rows[0].study.slope;
    if (!(uni_slope >= 2.5)) {
        std::cerr << "gate: uni_inv slope " << uni_slope << " < 2.5\n";
        return kExitGate;
    }
    return kExitOk;
}

// --------------------------------------------------------------- ablate ----

struct AblateArgs {
    std::string ckpt;
    int cases = 50;
    int steps = 15;
    std::uint64_t data_seed = 1007;
    std::uint64_t case_seed = 2025;
    std::string out = "out/ablate";
};

int cmd_ablate(const AblateArgs& a) {
    fs::path dir = ensure_out_dir(a.out);
    RunMeta meta;
    meta.command = "ablate";
    meta.add("ckpt", a.ckpt);
    meta.add("cases", a.cases);
    meta.add("steps", a.steps);
    meta.add("data_seed", a.data_seed);
    meta.add("case_seed", a.case_seed);

    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    auto held_out = gen_shapes_dataset(std::max(a.cases, 50), a.data_seed);
    auto cases = make_edit_cases(held_out, a.cases, a.case_seed);

    const std::vector<double> alphas = {0.2, 0.4, 0.6, 0.8, 1.0};
    const std::vector<double> omegas = {0.0, 1.0, 3.0, 5.0, 8.0};  // omega 0 = delayed-injection corner

    CsvWriter csv((dir / "ablate.csv").string(), {"alpha", "omega", "bg_psnr", "bg_ssim", "edit_score", "nfe"},
                  meta.line());

    std::map<double, std::pair<double, double>> at_omega5;  // alpha -> (bg_psnr, score)
    std::vector<double> omega_psnr, omega_score;

    for (double omega : omegas)
        for (double alpha : alphas) {
            std::vector<double> psnrs, ssims, scores;
            std::uint64_t nfe = 0;
            for (const auto& ec : cases) {
                const ShapesSample& s = held_out[static_cast<std::size_t>(ec.sample_index)];
                EditConfig cfg;
                cfg.omega = omega;
                cfg.alpha = alpha;
                cfg.n_steps = a.steps;
                cfg.source = Condition::of(ec.source_token);
                cfg.target = Condition::of(ec.target_token);
                cfg.record_masks = false;
                if (omega == 0.0) cfg.force_mask = 1.0;  // pure delayed injection
                EditTrace tr = uni_edit(ck.field, s.image, cfg);
                nfe = tr.nfe;
                RegionReport rep = region_report(s.image, tr.output, s.region_mask,
                                                 condition_color(ec.source_token), condition_color(ec.target_token));
                psnrs.push_back(rep.bg_psnr);
                ssims.push_back(rep.bg_ssim);
                scores.push_back(rep.edit_score);
            }
            double mean_psnr = nan_mean(psnrs), mean_ssim = nan_mean(ssims), mean_score = nan_mean(scores);
            csv.row({format_double(alpha), format_double(omega), format_double(mean_psnr), format_double(mean_ssim),
                     format_double(mean_score), std::to_string(nfe)});
            if (omega == 5.0) at_omega5[alpha] = {mean_psnr, mean_score};
            if (alpha == 0.6) {
                omega_psnr.push_back(mean_psnr);
                omega_score.push_back(mean_score);
            }
        }

    std::vector<double> xs, bg, sc;
    for (const auto& [alpha, v] : at_omega5) {
        xs.push_back(alpha);
        bg.push_back(v.first);
        sc.push_back(v.second);
    }
    {
        SvgPlot plot("delay-rate trade-off (omega = 5)", "alpha", "metric", false, false);
        plot.add_series("bg_psnr_db", xs, bg);
        std::vector<double> sc_scaled;
        for (double v : sc) sc_scaled.push_back(20.0 * v);
        plot.add_series("edit_score_x20", xs, sc_scaled);
        plot.write((dir / "tradeoff_alpha.svg").string(), meta.line());
    }
    {
        SvgPlot plot("guidance-strength trade-off (alpha = 0.6)", "omega", "metric", false, false);
        plot.add_series("bg_psnr_db", omegas, omega_psnr);
        std::vector<double> sc_scaled;
        for (double v : omega_score) sc_scaled.push_back(20.0 * v);
        plot.add_series("edit_score_x20", omegas, sc_scaled);
        plot.write((dir / "tradeoff_omega.svg").string(), meta.line());
    }
    meta.write_json(dir);

    // alpha-monotonicity gate at omega = 5 (Spearman sign test, p < 0.05)
    double p_psnr = spearman_exact_pvalue(xs, bg, -1);
    double p_score = spearman_exact_pvalue(xs, sc, +1);
    std::printf("alpha sweep at omega=5: bg_psnr trend p=%.4f (down), edit_score trend p=%.4f (up)\n", p_psnr,
                p_score);
    if (p_psnr >= 0.05 || p_score >= 0.05) {
        std::cerr << "gate: alpha-monotonicity sign test failed\n";
        return kExitGate;
    }
    return kExitOk;
}

// --------------------------------------------------------------- report ----

struct ReportArgs {
    std::string dir = "out";
    std::string out;
};

int cmd_report(const ReportArgs& a) {
    fs::path src(a.dir);
    if (!fs::is_directory(src)) throw std::runtime_error("report: no such directory " + a.dir);
    fs::path dir = ensure_out_dir(a.out.empty() ? a.dir : a.out);

    std::ostringstream md;
    md << "# flowinv report\n\nsource directory: `" << a.dir << "`\n";

    auto table_md = [&](const fs::path& p, const std::string& title, std::size_t max_rows) {
        CsvTable t = read_csv(p.string());
        md << "\n## " << title << "\n\n|";
        for (const auto& c : t.columns) md << " " << c << " |";
        md << "\n|";
        for (std::size_t i = 0; i < t.columns.size(); ++i) md << "---|";
        md << "\n";
        for (std::size_t r = 0; r < t.rows.size() && r < max_rows; ++r) {
            md << "|";
            for (const auto& cell : t.rows[r]) md << " " << cell << " |";
            md << "\n";
        }
        if (t.rows.size() > max_rows) md << "\n(" << t.rows.size() - max_rows << " more rows)\n";
    };

    bool found = false;
    for (const auto& entry : fs::recursive_directory_iterator(src)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name == "loss.csv") {
            found = true;
            CsvTable t = read_csv(entry.path().string());
            int step_col = t.column("step"), loss_col = t.column("loss");
            std::vector<double> xs, ys;
            for (const auto& row : t.rows) {
                xs.push_back(std::stod(row[static_cast<std::size_t>(step_col)]));
                ys.push_back(std::stod(row[static_cast<std::size_t>(loss_col)]));
            }
            if (!xs.empty()) {
                SvgPlot plot("training loss", "step", "loss", false, true);
                plot.add_series("loss", xs, ys);
                plot.write((dir / "loss.svg").string(), "report of " + entry.path().string());
                md << "\n## training loss\n\nsteps: " << xs.size() << ", final loss: " << ys.back()
                   << " (plot: loss.svg)\n";
            }
        } else if (name == "slopes.csv") {
            found = true;
            table_md(entry.path(), "convergence slopes", 10);
        } else if (name == "summary.csv") {
            found = true;
            table_md(entry.path(), "reconstruction summary", 20);
        } else if (name == "ablate.csv") {
            found = true;
            table_md(entry.path(), "ablation sweep", 40);
        } else if (name == "region_report.csv") {
            found = true;
            table_md(entry.path(), "edit region report", 10);
        }
    }
    if (!found) md << "\n(no known CSV artifacts found)\n";
    std::ofstream(dir / "report.md") << md.str();
    std::printf("wrote %s\n", (dir / "report.md").string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowinv: flow-matching inversion and editing laboratory"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (default: FLOWINV_THREADS or hardware)");

    TrainArgs train_args;
    auto* sub_train = app.add_subcommand("train", "train a conditional velocity field");
    sub_train->set_config("--config");
    sub_train->add_option("--dataset", train_args.dataset, "shapes|toy2d");
    sub_train->add_option("--n", train_args.n, "dataset size");
    sub_train->add_option("--steps", train_args.steps, "optimizer steps");
    sub_train->add_option("--batch", train_args.batch, "batch size");
    sub_train->add_option("--lr", train_args.lr, "learning rate");
    sub_train->add_option("--dropout", train_args.dropout, "condition dropout");
    sub_train->add_option("--seed", train_args.seed, "seed");
    sub_train->add_option("--out", train_args.out, "output directory");

    SampleArgs sample_args;
    auto* sub_sample = app.add_subcommand("sample", "generate images from noise");
    sub_sample->set_config("--config");
    sub_sample->add_option("--ckpt", sample_args.ckpt, "checkpoint")->required();
    sub_sample->add_option("--cond", sample_args.cond, "condition name or null");
    sub_sample->add_option("--rule", sample_args.rule, "euler|heun");
    sub_sample->add_option("--steps", sample_args.steps, "solver steps");
    sub_sample->add_option("--count", sample_args.count, "number of samples");
    sub_sample->add_option("--seed", sample_args.seed, "seed");
    sub_sample->add_option("--out", sample_args.out, "output directory");

    InvertArgs invert_args;
    auto* sub_invert = app.add_subcommand("invert", "invert an image to noise");
    sub_invert->set_config("--config");
    sub_invert->add_option("--ckpt", invert_args.ckpt, "checkpoint")->required();
    sub_invert->add_option("--input", invert_args.input, "input PPM (default: held-out sample)");
    sub_invert->add_option("--index", invert_args.index, "held-out sample index");
    sub_invert->add_option("--data-seed", invert_args.data_seed, "held-out dataset seed");
    sub_invert->add_option("--cond", invert_args.cond, "condition name or null");
    sub_invert->add_option("--rule", invert_args.rule, "euler|heun");
    sub_invert->add_option("--method", invert_args.method, "uni_inv|at_prev|at_target");
    sub_invert->add_option("--steps", invert_args.steps, "solver steps");
    sub_invert->add_option("--out", invert_args.out, "output directory");

    ReconstructArgs rec_args;
    auto* sub_rec = app.add_subcommand("reconstruct", "inversion + reconstruction benchmark");
    sub_rec->set_config("--config");
    sub_rec->add_option("--ckpt", rec_args.ckpt, "checkpoint")->required();
    sub_rec->add_option("--images", rec_args.images, "held-out image count");
    sub_rec->add_option("--steps", rec_args.steps, "budget N (once-forward methods)");
    sub_rec->add_option("--data-seed", rec_args.data_seed, "held-out dataset seed");
    sub_rec->add_option("--out", rec_args.out, "output directory");

    EditArgs edit_args;
    auto* sub_edit = app.add_subcommand("edit", "region-adaptive editing");
    sub_edit->set_config("--config");
    sub_edit->add_option("--ckpt", edit_args.ckpt, "checkpoint")->required();
    sub_edit->add_option("--index", edit_args.index, "held-out sample index");
    sub_edit->add_option("--data-seed", edit_args.data_seed, "held-out dataset seed");
    sub_edit->add_option("--source", edit_args.source, "source condition (auto = sample token)");
    sub_edit->add_option("--target", edit_args.target, "target condition");
    sub_edit->add_option("--alpha", edit_args.alpha, "delay rate in (0,1]");
    sub_edit->add_option("--omega", edit_args.omega, "guidance strength");
    sub_edit->add_option("--steps", edit_args.steps, "full-grid step count N");
    sub_edit->add_option("--baseline", edit_args.baseline, "uni_edit|delayed|direct|latent_fusion");
    sub_edit->add_flag("--mask-signed", edit_args.mask_signed, "use the signed channel-mean mask");
    sub_edit->add_option("--force-mask", edit_args.force_mask, "pin the mask to a constant in [0,1]");
    sub_edit->add_option("--out", edit_args.out, "output directory");

    ConvergeArgs conv_args;
    auto* sub_conv = app.add_subcommand("converge", "local-error order study");
    sub_conv->set_config("--config");
    sub_conv->add_option("--rule", conv_args.rule, "euler|heun");
    sub_conv->add_option("--t", conv_args.t, "anchor time t_i");
    sub_conv->add_option("--dt-min", conv_args.dt_min, "smallest dt (accepts 2^-k)");
    sub_conv->add_option("--dt-max", conv_args.dt_max, "largest dt (accepts 2^-k)");
    sub_conv->add_option("--sigma0", conv_args.sigma0, "data std of the analytic field");
    sub_conv->add_option("--seed", conv_args.seed, "seed");
    sub_conv->add_option("--out", conv_args.out, "output directory");

    AblateArgs abl_args;
    auto* sub_abl = app.add_subcommand("ablate", "sweep (alpha, omega) on the edit benchmark");
    sub_abl->set_config("--config");
    sub_abl->add_option("--ckpt", abl_args.ckpt, "checkpoint")->required();
    sub_abl->add_option("--cases", abl_args.cases, "edit cases");
    sub_abl->add_option("--steps", abl_args.steps, "full-grid step count N");
    sub_abl->add_option("--data-seed", abl_args.data_seed, "held-out dataset seed");
    sub_abl->add_option("--case-seed", abl_args.case_seed, "edit-case seed");
    sub_abl->add_option("--out", abl_args.out, "output directory");

    ReportArgs rep_args;
    auto* sub_rep = app.add_subcommand("report", "aggregate CSV artifacts into a report");
    sub_rep->set_config("--config");
    sub_rep->add_option("--dir", rep_args.dir, "directory with artifacts");
    sub_rep->add_option("--out", rep_args.out, "output directory (default: --dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (threads > 0) set_thread_cap(threads);

    try {
        if (sub_train->parsed()) return cmd_train(train_args);
        if (sub_sample->parsed()) return cmd_sample(sample_args);
        if (sub_invert->parsed()) return cmd_invert(invert_args);
        if (sub_rec->parsed()) return cmd_reconstruct(rec_args);
        if (sub_edit->parsed()) return cmd_edit(edit_args);
        if (sub_conv->parsed()) return cmd_converge(conv_args);
        if (sub_abl->parsed()) return cmd_ablate(abl_args);
        if (sub_rep->parsed()) return cmd_report(rep_args);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure at step " << e.step_index << ": " << e.what() << "\n";
        return kExitNumeric;
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
