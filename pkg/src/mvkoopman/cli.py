"""``mvk`` command-line interface.

Exit codes: 0 ok, 1 sweep slope outside its window, 2 configuration error,
3 numerical blow-up in a model, 4 singular Gram matrix.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import benchmarks
from .core import MeasurePath, PairDataSet, TimeGrid, read_mvmp, read_pairs_csv
from .dictionary import Indicator1D, fibonacci_sphere, from_config
from .edmd import SingularGramError, eval_eigenfunction, run_edmd, shift_augment
from .simulate import (ModelError, PathTooShortError, pairs_from_path, sample_initial,
                       simulate_decoupled, simulate_ips)

log = logging.getLogger("mvk")

EXIT_OK, EXIT_SLOPE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_LINALG = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    name: str = "cormier"
    params: dict = field(default_factory=dict)


@dataclass
class IpsConfig:
    particles: int = 50000
    step: float = 0.1
    horizon: float = 5.0


@dataclass
class DecoupledConfig:
    trajectories: int = 50000
    step: float = 0.1
    lag: float = 0.5
    initial: str = "model"


@dataclass
class EdmdConfig:
    n_eig: int = 4
    reg: float = 0.0
    symmetry_augment: bool = False
    grid_points: int = 200
    interpolate: bool = False


@dataclass
class SweepConfig:
    kind: str = "gram"
    values: list = field(default_factory=list)
    n_seeds: int = 20
    window: list = field(default_factory=list)
    horizon: float = 1.0
    metric: str = "w2_squared"


@dataclass
class RunConfig:
    """Fully resolved settings of one run; round-trips through JSON."""

    model: ModelConfig = field(default_factory=ModelConfig)
    ips: IpsConfig = field(default_factory=IpsConfig)
    decoupled: DecoupledConfig = field(default_factory=DecoupledConfig)
    dictionary: dict = field(default_factory=lambda: {"kind": "indicator1d", "n": 100})
    edmd: EdmdConfig = field(default_factory=EdmdConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0
    output: str = "out"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        sections = {"model": ModelConfig, "ips": IpsConfig, "decoupled": DecoupledConfig,
                    "edmd": EdmdConfig, "sweep": SweepConfig}
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"config section {key!r} must be an object")
                try:
                    kwargs[key] = sections[key](**value)
                except TypeError as err:
                    raise ConfigError(f"bad config section {key!r}: {err}") from None
            else:
                kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if self.model.name not in benchmarks.MODELS:
            raise ConfigError(f"unknown model {self.model.name!r}")
        for label, v in [("ips.particles", self.ips.particles),
                         ("decoupled.trajectories", self.decoupled.trajectories),
                         ("edmd.n_eig", self.edmd.n_eig)]:
            if int(v) != v or v < 1:
                raise ConfigError(f"{label} must be a positive integer")
        for label, v in [("ips.step", self.ips.step), ("ips.horizon", self.ips.horizon),
                         ("decoupled.step", self.decoupled.step),
                         ("decoupled.lag", self.decoupled.lag)]:
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"{label} must be positive")
        if self.decoupled.initial not in ("model", "ips_initial"):
            raise ConfigError("decoupled.initial must be 'model' or 'ips_initial'")
        if self.edmd.reg < 0:
            raise ConfigError("edmd.reg must be nonnegative")
        if self.sweep.metric not in ("w2_squared", "w2"):
            raise ConfigError("sweep.metric must be 'w2_squared' or 'w2'")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(raw: dict, dotted: str, value):
    node = raw
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def load_config(args) -> RunConfig:
    """Defaults, then the bench recipe, then ``--config``, then flags."""
    raw = RunConfig().to_dict()
    bench = getattr(args, "bench_name", None)
    if bench:
        _deep_update(raw, benchmarks.recipe(bench))
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                _deep_update(raw, json.load(fh))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from None
    if getattr(args, "model", None):
        if args.model != raw["model"]["name"]:
            raw["model"] = {"name": args.model, "params": {}}
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw["model"]["params"][k] = _parse_value(v)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        k, v = item.split("=", 1)
        _set_path(raw, k, _parse_value(v))
    flag_map = {"particles": "ips.particles", "ips_step": "ips.step", "horizon": "ips.horizon",
                "trajectories": "decoupled.trajectories", "step": "decoupled.step",
                "lag": "decoupled.lag", "n_eig": "edmd.n_eig", "reg": "edmd.reg",
                "seed": "seed", "out": "output"}
    for attr, dotted in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            _set_path(raw, dotted, v)
    if getattr(args, "symmetry_augment", None):
        raw["edmd"]["symmetry_augment"] = True
    return RunConfig.from_dict(raw)


def _deep_update(base: dict, upd: dict):
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict) and k != "dictionary":
            _deep_update(base[k], v)
        else:
            base[k] = copy.deepcopy(v)


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model(cfg: RunConfig):
    try:
        return benchmarks.make_model(cfg.model.name, cfg.model.params)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad model parameters: {err}") from None


def _summary(x: np.ndarray) -> dict:
    return {"mean": x.mean(axis=0).tolist(), "var": x.var(axis=0).tolist(),
            "min": x.min(axis=0).tolist(), "max": x.max(axis=0).tolist()}


# --- stages ------------------------------------------------------------------

def run_ips(cfg: RunConfig, out: Path, threads=None, progress=True) -> Path:
    model = _model(cfg)
    try:
        grid = TimeGrid.from_step(cfg.ips.step, cfg.ips.horizon)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    t0 = time.perf_counter()
    path = simulate_ips(model, int(cfg.ips.particles), grid, cfg.seed, threads=threads,
                        progress=progress)
    elapsed = time.perf_counter() - t0
    target = out / "measure_path.mvmp"
    path.save(target)
    _write_json(out / "ips_meta.json", {
        "model": model.name, "model_params": model.params, "seed": cfg.seed,
        "particles": path.n_particles, "dim": path.dim, "snapshots": len(path),
        "step": grid.h, "horizon": grid.t_end, "final_ensemble": _summary(path.snapshots[-1]),
    })
    # wall-clock time kept apart so every other file is reproducible byte for byte
    _write_json(out / "run_timing.json", {"ips_seconds": elapsed})
    return target


def run_decoupled(cfg: RunConfig, path: MeasurePath, out: Path, threads=None,
                  progress=True) -> PairDataSet:
    model = _model(cfg)
    if path.dim != model.dim:
        raise ConfigError(f"measure path has dimension {path.dim}, model {model.name} has {model.dim}")
    try:
        grid = TimeGrid.from_step(cfg.decoupled.step, cfg.decoupled.lag)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    m = int(cfg.decoupled.trajectories)
    if cfg.decoupled.initial == "model":
        xi = sample_initial(model, m, cfg.seed)
    else:
        if m > path.n_particles:
            raise ConfigError("ips_initial needs trajectories <= IPS particles")
        xi = path.snapshots[0, :m]
    data = simulate_decoupled(model, path, xi, grid, cfg.seed, threads=threads, progress=progress)
    data.save_csv(out / "pairs.csv")
    return data


def _resolve_dictionary(cfg: RunConfig, data: PairDataSet):
    dcfg = dict(cfg.dictionary)
    if dcfg.get("kind") == "indicator1d" and ("a" not in dcfg or "b" not in dcfg):
        both = np.concatenate([data.xi[:, 0], data.x_T[:, 0]])
        dcfg.setdefault("a", float(both.min()))
        dcfg.setdefault("b", float(both.max()))
    try:
        return from_config(dcfg, data.dim), dcfg
    except (KeyError, ValueError, TypeError) as err:
        raise ConfigError(f"bad dictionary config: {err}") from None


def _eval_grid(dictionary, data: PairDataSet, n: int) -> np.ndarray:
    base = getattr(dictionary, "parent", dictionary)
    if data.dim == 1:
        if isinstance(base, Indicator1D):
            lo, hi = base.a, base.b
        else:
            lo, hi = float(data.xi.min()), float(data.xi.max())
        return np.linspace(lo, hi, n).reshape(-1, 1)
    if data.dim == 3 and base.kind == "voronoi_sphere":
        return fibonacci_sphere(n)
    return data.xi[:n]


def _write_eigenfunctions(path: Path, xs, dictionary, spectral, interpolate):
    d = xs.shape[1]
    cols = [xs[:, j] for j in range(d)]
    header = [f"x_{j + 1}" for j in range(d)]
    for l in range(spectral.n_eig):
        f = eval_eigenfunction(dictionary, spectral.eigenvectors[:, l], xs, interpolate=interpolate)
        f = np.asarray(f, dtype=complex)
        cols += [f.real, f.imag]
        header += [f"f{l + 1}_re", f"f{l + 1}_im"]
    table = np.column_stack(cols)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def run_edmd_stage(cfg: RunConfig, data: PairDataSet, out: Path, save_matrices=False):
    if cfg.edmd.symmetry_augment:
        data = shift_augment(data, math.pi, 2 * math.pi)
    dictionary, resolved = _resolve_dictionary(cfg, data)
    result = run_edmd(dictionary, data, reg=cfg.edmd.reg, n_eig=cfg.edmd.n_eig)
    mats = result.matrices
    N = result.dictionary.size
    _write_json(out / "spectrum.json", result.koopman.to_json(mats.cond_G, N, mats.M))
    _write_json(out / "spectrum_pf.json", result.perron.to_json(mats.cond_G, N, mats.M))
    xs = _eval_grid(result.dictionary, data, cfg.edmd.grid_points)
    _write_eigenfunctions(out / "eigenfunctions.csv", xs, result.dictionary, result.koopman,
                          cfg.edmd.interpolate)
    _write_eigenfunctions(out / "eigenfunctions_pf.csv", xs, result.dictionary, result.perron,
                          cfg.edmd.interpolate)
    if save_matrices:
        for name in ("G", "C", "K", "P"):
            np.save(out / f"matrix_{name}.npy", getattr(mats, name))
    return result, resolved


# --- commands ----------------------------------------------------------------

def cmd_ips(args) -> int:
    cfg = load_config(args)
    out = _outdir(cfg)
    _write_json(out / "config.json", cfg.to_dict())
    target = run_ips(cfg, out, args.threads, not args.quiet)
    print(target)
    return EXIT_OK


def cmd_decoupled(args) -> int:
    cfg = load_config(args)
    try:
        path = read_mvmp(args.path)
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read measure path {args.path}: {err}") from None
    out = _outdir(cfg)
    _write_json(out / "config.json", cfg.to_dict())
    run_decoupled(cfg, path, out, args.threads, not args.quiet)
    print(out / "pairs.csv")
    return EXIT_OK


def cmd_edmd(args) -> int:
    cfg = load_config(args)
    if args.from_path:
        try:
            data = pairs_from_path(read_mvmp(args.from_path), cfg.decoupled.lag)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot build IPS pairs: {err}") from None
        log.warning("using interacting-particle pairs: samples are dependent, "
                    "no almost-sure convergence guarantee")
    elif args.data:
        try:
            data = read_pairs_csv(args.data, cfg.decoupled.lag)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot read pair data {args.data}: {err}") from None
    else:
        raise ConfigError("edmd needs --data or --from-path")
    out = _outdir(cfg)
    result, resolved = run_edmd_stage(cfg, data, out, args.save_matrices)
    cfg.dictionary = resolved
    _write_json(out / "config.json", cfg.to_dict())
    print(json.dumps([[z.real, z.imag] for z in result.koopman.eigenvalues]))
    return EXIT_OK


SWEEP_DEFAULTS = {
    "gram": {"values": [100, 1000, 10000, 100000], "window": [-0.65, -0.35]},
    "strong": {"values": [0.2, 0.1, 0.05, 0.025], "window": [0.85, math.inf]},
    "particles": {"values": [100, 200, 400, 800, 1600], "window": [-0.75, -0.3]},
}


def run_sweep(cfg: RunConfig, kind: str):
    from .core import EmpiricalMeasure
    from .dictionary import monomial
    from .metrics import gram_error_sweep, measure_error_sweep, strong_error_sweep

    sc = cfg.sweep
    values = sc.values or SWEEP_DEFAULTS[kind]["values"]
    if kind == "gram":
        return gram_error_sweep(monomial(1, 1), lambda g, n: g.uniform(-1.0, 1.0, (n, 1)),
                                np.diag([1.0, 1.0 / 3.0]), values, sc.n_seeds, cfg.seed)
    model = _model(cfg)
    if kind == "strong":
        if model.dim != 1:
            raise ConfigError("strong sweep is set up for 1-D models")
        x0 = np.linspace(-2.0, 2.0, 200)
        return strong_error_sweep(model, x0, sc.horizon, values, sc.n_seeds,
                                  measure=EmpiricalMeasure([0.0]), seed=cfg.seed)
    if kind == "particles":
        return measure_error_sweep(model, values, cfg.ips.step, cfg.ips.horizon, sc.n_seeds,
                                   seed=cfg.seed, squared=sc.metric == "w2_squared")
    raise ConfigError(f"unknown sweep kind {kind!r}")


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    cfg.sweep.kind = args.kind
    if not cfg.sweep.window:
        cfg.sweep.window = [float(w) for w in SWEEP_DEFAULTS[args.kind]["window"]]
    if not cfg.sweep.values:
        cfg.sweep.values = list(SWEEP_DEFAULTS[args.kind]["values"])
    out = _outdir(cfg)
    report = run_sweep(cfg, args.kind)
    report.write(out)
    _write_json(out / "config.json", _json_safe(cfg.to_dict()))
    lo, hi = cfg.sweep.window
    ok = report.slope_in(lo, hi)
    print(f"slope {report.slope:.4f} +- {report.half_width:.4f}; window [{lo}, {hi}]: "
          f"{'inside' if ok else 'OUTSIDE'}")
    return EXIT_OK if ok else EXIT_SLOPE


def _json_safe(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def cmd_bench(args) -> int:
    args.bench_name = args.name
    cfg = load_config(args)
    out = _outdir(cfg)
    progress = not args.quiet
    run_ips(cfg, out, args.threads, progress)
    path = read_mvmp(out / "measure_path.mvmp")
    data = run_decoupled(cfg, path, out, args.threads, progress)
    result, resolved = run_edmd_stage(cfg, data, out, args.save_matrices)
    cfg.dictionary = resolved
    _write_json(out / "config.json", cfg.to_dict())
    lam = result.koopman.eigenvalues
    _write_json(out / "bench.json", {
        "benchmark": args.name,
        "koopman_eigenvalues": [{"re": float(z.real), "im": float(z.imag)} for z in lam],
        "final_ensemble": _summary(path.snapshots[-1]),
    })
    for i, z in enumerate(lam):
        print(f"lambda_{i + 1} = {z.real:.6f}{z.imag:+.6f}i")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, sim=True):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $MVK_THREADS or 1); never changes results")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override any config entry")
    p.add_argument("--quiet", action="store_true", help="no progress on stderr")
    if sim:
        p.add_argument("--model", choices=sorted(benchmarks.MODELS))
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="model parameter override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ips", help="simulate the interacting particle system")
    _common(p)
    p.add_argument("--particles", type=int)
    p.add_argument("--step", dest="ips_step", type=float)
    p.add_argument("--horizon", type=float)
    p.set_defaults(func=cmd_ips)

    p = sub.add_parser("decoupled", help="simulate decoupled trajectories on a measure path")
    _common(p)
    p.add_argument("--path", required=True, help=".mvmp measure path")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--lag", type=float)
    p.set_defaults(func=cmd_decoupled)

    p = sub.add_parser("edmd", help="estimate Koopman / Perron-Frobenius spectra")
    _common(p)
    p.add_argument("--data", help="pair CSV from 'mvk decoupled'")
    p.add_argument("--from-path", help="EXPERIMENTAL: use IPS particles from an .mvmp file")
    p.add_argument("--lag", type=float)
    p.add_argument("--n-eig", dest="n_eig", type=int)
    p.add_argument("--reg", type=float, help="ridge added to the Gram matrix")
    p.add_argument("--symmetry-augment", action="store_true",
                   help="append a copy of the data shifted by pi (circle)")
    p.add_argument("--save-matrices", action="store_true")
    p.set_defaults(func=cmd_edmd)

    p = sub.add_parser("sweep", help="empirical convergence-rate sweep")
    _common(p)
    p.add_argument("kind", choices=["strong", "particles", "gram"])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="run a full benchmark recipe")
    _common(p, sim=False)
    p.add_argument("name", choices=sorted(benchmarks.RECIPES))
    p.add_argument("--save-matrices", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"mvk: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except PathTooShortError as err:
        print(f"mvk: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as err:
        print(f"mvk: numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except SingularGramError as err:
        print(f"mvk: linear algebra error: {err}", file=sys.stderr)
        return EXIT_LINALG


if __name__ == "__main__":
    sys.exit(main())
