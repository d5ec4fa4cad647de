"""Experiment orchestration: config parsing, runs, persistence, CSV and
plot-data emission.

Configs are YAML (key-nested, '#' comments); the exact grammar is documented
in the README.  Every emitted file carries the config hash, floats are
written with 17 significant digits, and identical config + seed reproduces
byte-identical CSVs on one machine.

Exit codes: 0 success, 1 config error, 2 assertion failure, 3 solver error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__, dispersion, expansion, fronts, kernels
from .grids import ReactionLaw, SpaceTimeGrid, ThetaDomain, WindowPolicy, sample_profile
from .solver import (
    InitSpec,
    ModelSpec,
    NegativeDensity,
    OmegaSpec,
    StabilityBlowup,
    Stepper,
    run,
)


class ConfigParseError(ValueError):
    pass


class MissingColumn(KeyError):
    pass


class ChecksumMismatch(RuntimeError):
    pass


FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# config -> model objects

def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigParseError(f"missing key {key!r} in {where}")
    return cfg[key]


def parse_domain(cfg: dict) -> ThetaDomain:
    th = _require(cfg, "theta", "model")
    return ThetaDomain(float(th["min"]), float(th["max"]), int(th["n"]))


def parse_profile(cfg: dict):
    dom = parse_domain(cfg)
    return sample_profile(str(_require(cfg, "profile", "model")), dom,
                          drift=str(cfg.get("drift", "const 0")))


def parse_grid(cfg: dict) -> SpaceTimeGrid:
    g = _require(cfg, "grid", "model")
    w = cfg.get("window", {"kind": "fixed"})
    if w.get("kind", "fixed") == "follow_front":
        window = WindowPolicy.follow_front(float(w.get("margin_left", 45.0)),
                                           float(w.get("margin_right", 80.0)))
    else:
        window = WindowPolicy.fixed()
    return SpaceTimeGrid(float(g["x_min"]), float(g["x_max"]), float(g["dx"]),
                         float(g["dt"]), float(g["t_end"]), window=window)


def parse_init(cfg: dict) -> InitSpec:
    i = _require(cfg, "init", "model")
    kind = i.get("kind", "block")
    if kind == "block":
        return InitSpec.block(float(i["x_left"]), float(i["x_right"]),
                              float(i.get("amplitude", 1.0)))
    if kind == "left_filled":
        return InitSpec.left_filled(float(i.get("amplitude", 1.0)),
                                    float(i.get("cutoff_x", 0.0)))
    if kind == "delta_approx":
        return InitSpec.delta_approx(float(i["x0"]), float(i["width"]))
    if kind == "product":
        return InitSpec.product(np.asarray(i["theta_profile"], dtype=float),
                                float(i["x_left"]), float(i["x_right"]),
                                float(i.get("amplitude", 1.0)))
    raise ConfigParseError(f"unknown init kind {kind!r}")


def parse_reaction(cfg: dict) -> ReactionLaw | None:
    r = cfg.get("reaction")
    if r is None:
        return ReactionLaw()
    if r == "off":
        return None
    return ReactionLaw(kind=r.get("kind", "kpp_quadratic"),
                       C=float(r.get("C", 1.0)), p=float(r.get("p", 1.25)),
                       M_delta=float(r.get("M_delta", 1.0)),
                       delta=float(r.get("delta", 1.0)),
                       m_bar=float(r.get("m_bar", 0.75)))


def parse_model(cfg: dict) -> ModelSpec:
    m = _require(cfg, "model", "config")
    kind = _require(m, "kind", "model")
    prof = parse_profile(m)
    grid = parse_grid(m)
    init = parse_init(m)
    if kind == "nonlocal_toads":
        return ModelSpec.nonlocal_toads(prof, grid, init, float(m.get("r_rate", 1.0)))
    if kind == "local_toads":
        return ModelSpec.local_toads(prof, grid, init, parse_reaction(m))
    if kind == "local_general":
        return ModelSpec.local_general(prof, grid, init, parse_reaction(m))
    if kind == "linearized_dirichlet":
        return ModelSpec.linearized_dirichlet(prof, grid, init,
                                              r_shift=float(m.get("r_shift", 0.0)),
                                              T_big=float(m.get("T_big", 10.0)))
    if kind == "p_equation":
        om = m.get("omega", {"kind": "zero"})
        sp = dispersion.spectral_data(prof)
        if om.get("kind", "zero") == "rational":
            omega = OmegaSpec.rational(float(om["r_shift"]), sp.c_star,
                                       float(om.get("T_big", 10.0)))
        else:
            omega = OmegaSpec.zero()
        return ModelSpec.p_equation(prof, grid, init, spectral=sp, omega=omega)
    if kind == "wave_relaxation":
        return ModelSpec.wave_relaxation(prof, grid, init, float(m["c"]),
                                         parse_reaction(m))
    raise ConfigParseError(f"unknown model kind {kind!r}")


def parse_coefficient(spec):
    """1-D diffusion coefficient for probes: const c | sinusoid b a f."""
    words = str(spec).split()
    if words[0] == "const":
        return float(words[1])
    if words[0] == "sinusoid":
        base, amp, freq = (float(w) for w in words[1:4])
        return lambda x: base + amp * np.sin(freq * np.asarray(x))
    raise ConfigParseError(f"unknown coefficient {spec!r}")


# ---------------------------------------------------------------------------
# persistence

def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def write_csv(path: Path, columns: dict, header_lines=(), cfg_hash=""):
    """Comma-separated table with '#' comment headers and 17-digit floats."""
    names = list(columns)
    rows = len(next(iter(columns.values()))) if columns else 0
    with open(path, "w") as fh:
        fh.write(f"# toadfront {__version__} config={cfg_hash}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("# columns: " + ",".join(names) + "\n")
        for i in range(rows):
            fh.write(",".join(
                FLOAT_FMT % columns[n][i]
                if isinstance(columns[n][i], (float, np.floating))
                else str(columns[n][i])
                for n in names) + "\n")


def read_csv(path: Path):
    names, data = None, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                maybe = line[1:].strip()
                if maybe.startswith("columns:"):
                    names = maybe[len("columns:"):].strip().split(",")
                continue
            if line.strip():
                data.append(line.strip().split(","))
    if names is None:
        raise MissingColumn(f"no column header in {path}")
    out = {}
    for i, n in enumerate(names):
        col = [row[i] for row in data]
        try:
            out[n] = np.asarray([float(v) for v in col])
        except ValueError:
            out[n] = np.asarray(col)
    return out


def dump_snapshot(path: Path, fld, model_tag: str):
    """Textual header followed by raw row-major float64 values."""
    with open(path, "wb") as fh:
        head = (f"# toadfront-snapshot v1\n"
                f"# model={model_tag} t={FLOAT_FMT % fld.t} "
                f"x_offset={FLOAT_FMT % fld.x_offset} dx={FLOAT_FMT % fld.dx} "
                f"dtheta={FLOAT_FMT % fld.domain.dtheta} "
                f"theta_min={FLOAT_FMT % fld.domain.theta_min} "
                f"theta_max={FLOAT_FMT % fld.domain.theta_max} "
                f"n_x={fld.n_x} n_theta={fld.domain.n_theta}\n")
        fh.write(head.encode())
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_snapshot(path: Path):
    from .grids import Field
    with open(path, "rb") as fh:
        fh.readline()
        head = fh.readline().decode().lstrip("# ").strip()
        meta = dict(kv.split("=") for kv in head.split())
        raw = fh.read()
    n_x, n_th = int(meta["n_x"]), int(meta["n_theta"])
    vals = np.frombuffer(raw, dtype="<f8").reshape(n_x, n_th).copy()
    dom = ThetaDomain(float(meta["theta_min"]), float(meta["theta_max"]), n_th)
    return Field(float(meta["t"]), float(meta["x_offset"]), float(meta["dx"]),
                 dom, vals), meta["model"]


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# subcommand drivers

def _out_dir(args, cfg):
    out = args.out or cfg.get("output_dir") or os.environ.get("TOADFRONT_OUT", "toadfront_out")
    path = Path(out) / cfg.get("name", "experiment")
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_dispersion(cfg, args):
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    m = cfg["model"] if "model" in cfg else cfg
    prof = parse_profile(m)
    lr = tuple(cfg.get("lambda_range", (0.05, 20.0)))
    rep = dispersion.dispersion_report(prof, lr, int(cfg.get("n_lambda", 64)))
    write_csv(out / "c_lambda.csv",
              {"lambda": rep["lambdas"], "mu": rep["mus"], "c": rep["speeds"]},
              [f"c_star={rep['c_star']!r} lambda_star={rep['lambda_star']!r}"], h)
    write_csv(out / "spectral_profiles.csv",
              {"theta": prof.domain.centers.tolist(), "Q_star": rep["Q_star"],
               "chi": rep["chi"], "beta": rep["beta"]},
              [f"D_bar={rep['D_bar']!r}"], h)
    (out / "dispersion.json").write_text(json.dumps(rep, indent=1))
    idn = rep["identities"]
    failures = []
    if idn["rel3_residual"] > 1e-6:
        failures.append(f"rel3 residual {idn['rel3_residual']:.2e}")
    if max(idn["rel4_residuals"]) > 5e-4:
        failures.append(f"rel4 residual {max(idn['rel4_residuals']):.2e}")
    if idn["dbar_identity_gap"] > 1e-3:
        failures.append(f"D_bar identity gap {idn['dbar_identity_gap']:.2e}")
    if idn["ddc"] <= 0:
        failures.append("c''(lambda*) not positive")
    for f in failures:
        print(f"ASSERTION FAILED: {f}", file=sys.stderr)
    return 2 if failures and args.strict else 0


def _trace_times(cfg, t_end):
    tt = cfg.get("trace_times")
    if tt is None:
        return np.arange(1.0, t_end + 1e-9, max(1.0, t_end / 400))
    return np.arange(float(tt["start"]), float(tt["stop"]) + 1e-9, float(tt["step"]))


def cmd_simulate(cfg, args):
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    model = parse_model(cfg)
    tag = cfg["model"]["kind"]
    snap_times = [float(t) for t in cfg.get("snapshots", [model.grid.t_end])]
    levels = cfg.get("levels", [0.5])
    quantity = cfg.get("quantity", "rho" if tag == "nonlocal_toads" else "max_theta")
    times = _trace_times(cfg, model.grid.t_end)

    manifest = {"config_hash": h, "code_version": __version__,
                "start_time": time.time(), "snapshots": [], "exit_status": None}
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)

    st = Stepper(model)
    t_resume = model.t_start
    if args.resume:
        prior = sorted(snap_dir.glob("snap_*.bin"))
        man_path = out / "manifest.json"
        if prior and man_path.exists():
            old = json.loads(man_path.read_text())
            entry = old["snapshots"][-1]
            if file_sha256(snap_dir / entry["file"]) != entry["sha256"]:
                raise ChecksumMismatch(f"snapshot {entry['file']} corrupted")
            fld, _ = load_snapshot(snap_dir / entry["file"])
            st.field = fld
            t_resume = fld.t
            manifest["snapshots"] = [e for e in old["snapshots"]]

    collectors = [fronts.LevelTraceCollector(m, quantity) for m in levels]

    def snap_hook(fld):
        name = f"snap_{fld.t:012.4f}.bin"
        dump_snapshot(snap_dir / name, fld, tag)
        manifest["snapshots"].append({"t": fld.t, "file": name,
                                      "sha256": file_sha256(snap_dir / name)})

    observers = [(times[times > t_resume + 0.25 * model.grid.dt], c) for c in collectors]
    observers.append((np.asarray([t for t in snap_times if t > t_resume + 0.25 * model.grid.dt]),
                      snap_hook))
    status = 0
    try:
        st.advance_to(model.grid.t_end, observers=observers)
    except (StabilityBlowup, NegativeDensity) as exc:
        print(f"SOLVER ERROR: {exc}", file=sys.stderr)
        status = 3

    for c in collectors:
        tr = c.trace()
        t_rows = list(tr.times)
        x_rows = list(tr.positions)
        path = out / f"trace_m{c.m:g}.csv"
        if args.resume and path.exists():
            old = read_csv(path)
            keep = old["t"] <= t_resume + 0.25 * model.grid.dt
            t_rows = list(old["t"][keep]) + t_rows
            x_rows = list(old["X_m"][keep]) + x_rows
        write_csv(path,
                  {"t": t_rows, "X_m": x_rows,
                   "quantity": [tr.quantity] * len(t_rows),
                   "m": [float(c.m)] * len(t_rows)}, [], h)
    manifest["end_time"] = time.time()
    manifest["exit_status"] = status
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return status


def cmd_front(cfg, args):
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    trace_path = Path(cfg.get("trace", out / f"trace_m{cfg.get('level', 0.5):g}.csv"))
    data = read_csv(trace_path)
    if "t" not in data or "X_m" not in data:
        raise MissingColumn("trace file needs columns t, X_m")
    tr = fronts.FrontTrace(float(cfg.get("level", 0.5)), "file",
                           data["t"], data["X_m"])
    mode = cfg.get("mode", "fixed_c")
    c_star = cfg.get("c_star")
    if mode == "fixed_c" and c_star is None:
        prof = parse_profile(cfg["model"])
        c_star = dispersion.spectral_data(prof).c_star
    window = cfg.get("fit_window")
    fit = fronts.fit_bramson(tr, mode=mode,
                             c_star=None if c_star is None else float(c_star),
                             fit_window=None if window is None else tuple(window))
    write_csv(out / "fit.csv",
              {"c_hat": [fit.c_hat], "r_hat": [fit.r_hat], "x_hat": [fit.x_hat],
               "t0": [fit.fit_window[0]], "t1": [fit.fit_window[1]],
               "residual_sup": [fit.residual_sup]},
              [f"mode={fit.mode}"], h)
    print(f"fit: c={fit.c_hat:.6f} r={fit.r_hat:.6f} x={fit.x_hat:.6f} "
          f"sup-residual={fit.residual_sup:.4f}")
    return 0


def cmd_probe(cfg, args):
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    probe = _require(cfg, "probe", "config")
    a = parse_coefficient(cfg.get("a", "const 1"))
    if probe == "varadhan":
        tab = kernels.varadhan_check(
            a, [float(t) for t in cfg.get("t_list", (0.1, 0.05, 0.025))],
            tuple(cfg.get("pair_range", (1.0, 3.0))),
            kernel_kwargs=cfg.get("kernel", {}))
        write_csv(out / "probe_varadhan.csv",
                  {"t": tab.t_list.tolist(), "max_rel_err": tab.max_rel_err.tolist()},
                  [f"decreasing={tab.decreasing}"], h)
        return 0 if (tab.decreasing or not args.strict) else 2
    if probe == "harnack":
        w = float(cfg.get("width", 0.25))
        C, wit = kernels.harnack_constant(
            lambda x: np.exp(-x * x / (2 * w * w)), a,
            float(cfg.get("t0", 0.5)), float(cfg.get("R", 1.0)),
            float(cfg.get("p", 1.5)))
        write_csv(out / "probe_harnack.csv",
                  {"C_emp": [C], "t_witness": [wit[0]], "x_witness": [wit[1]],
                   "y_witness": [wit[2]]}, [], h)
        (out / "probe_harnack_witness.txt").write_text(repr(wit) + "\n")
        return 0
    if probe == "kernel-power":
        C, drift = kernels.kernel_power_bound_check(
            a, float(cfg.get("t0", 0.5)), float(cfg.get("R", 1.0)),
            float(cfg.get("s", 0.8)), float(cfg.get("p", 1.5)))
        write_csv(out / "probe_kernel_power.csv",
                  {"C_emp": [C], "doubling_drift": [drift]}, [], h)
        return 0 if (drift < 0.1 or not args.strict) else 2
    if probe == "nash":
        reports = []
        pairs = cfg.get("kd_pairs", [[1, 1], [3, 1], [2, 2]])
        trials = int(cfg.get("trials", 10000))
        seed = int(cfg.get("seed", 20240501))

        def one(kd):
            k, d = int(kd[0]), int(kd[1])
            return kernels.nash_check(k, d, trials, seed + 7 * k + d)

        with ThreadPoolExecutor(max_workers=max(1, args.workers)) as ex:
            reports = list(ex.map(one, pairs))
        write_csv(out / "probe_nash.csv",
                  {"k": [r.k for r in reports], "d": [r.d for r in reports],
                   "trials": [r.trials for r in reports],
                   "C_emp": [r.c_emp for r in reports],
                   "drift": [r.drift for r in reports]},
                  [f"seed={seed}"], h)
        bad = [r for r in reports if not (r.c_emp > 0 and r.drift < 0.1)]
        return 2 if bad and args.strict else 0
    raise ConfigParseError(f"unknown probe {probe!r}")


def cmd_asym(cfg, args):
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    prof = parse_profile(cfg["model"] if "model" in cfg else cfg)
    sd = dispersion.spectral_data(prof)
    exp = expansion.build_expansion(
        sd, chi_bar=cfg.get("chi_bar"),
        omega_bar=float(cfg.get("omega_bar", 0.0)),
        sigma=float(cfg.get("sigma", 3.0)))
    taus = [float(t) for t in cfg.get("tau_list", (100.0, 200.0, 400.0, 800.0))]
    rep = expansion.residual_of_S(exp, taus)
    rep_t = expansion.residual_of_S(exp, taus, truncate=True)
    write_csv(out / "residual.csv",
              {"tau": rep.taus.tolist(), "sup_residual": rep.sup_residual.tolist(),
               "sup_residual_S0": rep_t.sup_residual.tolist(),
               "gaussian_gap": rep.gaussian_gap.tolist()},
              [f"full_ratios={rep.ratios.tolist()}",
               f"trunc_ratios={rep_t.ratios.tolist()}"], h)
    write_csv(out / "expansion_theta.csv",
              {"theta": prof.domain.centers.tolist(), "chi0": exp.chi0.tolist(),
               "S2_hat": exp.S2_hat.tolist()},
              [f"beta1={exp.beta1!r} beta2={exp.beta2!r} d_bar={exp.d_bar!r} "
               f"chi_bar={exp.chi_bar!r}"], h)
    stride = max(1, exp.z.size // 400)
    write_csv(out / "expansion_z.csv",
              {"z": exp.z[::stride].tolist(), "phi1": exp.phi1[::stride].tolist(),
               "phi1_z": exp.phi1_z[::stride].tolist()}, [], h)
    return 0


def cmd_criticality(cfg, args):
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    prof = parse_profile(cfg["model"] if "model" in cfg else cfg)
    sd = dispersion.spectral_data(prof)
    r_c = 3.0 / (2.0 * sd.lambda_star)
    r_list = [float(r) for r in cfg.get("r_shift_list", (0.0, r_c, 2 * r_c))]
    T = float(cfg.get("T_big", 10.0))
    kw = dict(t_end=float(cfg.get("t_end", 400.0)), dx=float(cfg.get("dx", 0.1)),
              dt=float(cfg.get("dt", 0.025)))

    def sweep(tb):
        return expansion.moving_boundary_criticality(prof, r_list, tb, spectral=sd, **kw)

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as ex:
        v1, v2 = list(ex.map(sweep, [T, 2 * T]))
    write_csv(out / "criticality.csv",
              {"r_shift": [v.r_shift for v in v1],
               "ratio_T": [v.ratio for v in v1],
               "verdict_T": [v.verdict for v in v1],
               "ratio_2T": [v.ratio for v in v2],
               "verdict_2T": [v.verdict for v in v2]},
              [f"T_big={T}"], h)
    stable = all(a.verdict == b.verdict for a, b in zip(v1, v2))
    return 0 if (stable or not args.strict) else 2


def emit_plotdata(inputs: dict, recipe: str, out_path: Path, cfg_hash=""):
    """Columnar plot-ready files from existing CSV outputs."""
    if recipe == "delay_plot":
        tr = read_csv(Path(inputs["trace"]))
        fit = read_csv(Path(inputs["fit"]))
        for col in ("t", "X_m"):
            if col not in tr:
                raise MissingColumn(col)
        c_star = float(inputs["c_star"])
        t = tr["t"]
        delay = tr["X_m"] - c_star * t
        model = -fit["r_hat"][0] * np.log(t) + fit["x_hat"][0]
        write_csv(out_path, {"t": t.tolist(), "delay": delay.tolist(),
                             "fit": model.tolist()},
                  [f"recipe={recipe} c_star={FLOAT_FMT % c_star}"], cfg_hash)
        return
    if recipe == "c_lambda":
        d = read_csv(Path(inputs["dispersion"]))
        if "lambda" not in d or "c" not in d:
            raise MissingColumn("lambda/c")
        write_csv(out_path, {"lambda": d["lambda"].tolist(), "c": d["c"].tolist()},
                  [f"recipe={recipe}"], cfg_hash)
        return
    if recipe == "residual_loglog":
        d = read_csv(Path(inputs["residual"]))
        if "tau" not in d or "sup_residual" not in d:
            raise MissingColumn("tau/sup_residual")
        lt, lr = np.log(d["tau"]), np.log(d["sup_residual"])
        slope = float(np.polyfit(lt, lr, 1)[0])
        write_csv(out_path, {"log_tau": lt.tolist(), "log_residual": lr.tolist()},
                  [f"recipe={recipe} fitted_slope={FLOAT_FMT % slope}"], cfg_hash)
        return
    raise ConfigParseError(f"unknown recipe {recipe!r}")


def cmd_report(cfg, args):
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    for item in cfg.get("plots", []):
        emit_plotdata(item["inputs"], item["recipe"], out / item["file"], h)
    return 0


COMMANDS = {
    "dispersion": cmd_dispersion,
    "simulate": cmd_simulate,
    "front": cmd_front,
    "probe": cmd_probe,
    "asym": cmd_asym,
    "criticality": cmd_criticality,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="toadfront",
                                     description="trait-structured front laboratory")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--out", default=None, help="output directory "
                        "(default $TOADFRONT_OUT or ./toadfront_out)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--resume", action="store_true")
    parser.add_argument("--strict", action="store_true",
                        help="assertion failures abort with exit code 2")
    args = parser.parse_args(argv)
    try:
        cfg = yaml.safe_load(Path(args.config).read_text())
        if not isinstance(cfg, dict):
            raise ConfigParseError("config must be a mapping")
    except (OSError, yaml.YAMLError, ConfigParseError) as exc:
        print(f"CONFIG ERROR: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigParseError as exc:
        print(f"CONFIG ERROR: {exc}", file=sys.stderr)
        return 1
    except (StabilityBlowup, NegativeDensity) as exc:
        print(f"SOLVER ERROR: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
