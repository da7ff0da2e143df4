"""Monte Carlo experiment runner.

Each repetition draws one sample from the sampling distribution and runs
every configured test on it. Random streams are derived from
``(seed, repetition, slot)`` with ``numpy.random.SeedSequence``, so results
do not depend on the number of worker processes or on completion order.
"""

from __future__ import annotations

import logging
import math
import os
import re
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .distributions import (FDist, GammaParams, GpdParams, LogNormal,
                            SamplingDistribution, Weibull, alt_sample)
from .errors import ConfigError, EstimationError, ResultParseError
from .gof import DEFAULT_N, DEFAULT_N_OUTER, Method, ModelFamily, run_method
from .posterior import MhConfig
from .statistics import ks_distance

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.01, 0.05, 0.10)
KS_CRIT_1PCT = 1.628
RESULT_HEADER = ["rep", "method", "p_value", "observed_stat", "n_failed"]
SUMMARY_HEADER = ["method", "level", "rejection_rate", "ks_distance", "n_missing"]


# ---------------------------------------------------------------------------
# configuration

_DIST_ALIASES = {
    "gamma": GammaParams, "g": GammaParams,
    "gpd": GpdParams,
    "lognormal": LogNormal, "ln": LogNormal,
    "f": FDist,
    "weibull": Weibull, "w": Weibull,
}
_DIST_RE = re.compile(r"^\s*([A-Za-z]+)\s*\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$")


def parse_distribution(text: str) -> SamplingDistribution:
    """Parse e.g. ``"gamma(4, 8)"``, ``"GPD(-0.1,1)"``, ``"LN(0,0.4)"``, ``"W(40,1)"``."""
    m = _DIST_RE.match(text)
    if not m or m.group(1).lower() not in _DIST_ALIASES:
        raise ConfigError(f"cannot parse distribution {text!r}")
    cls = _DIST_ALIASES[m.group(1).lower()]
    try:
        return cls(float(m.group(2)), float(m.group(3)))
    except ValueError as exc:
        raise ConfigError(f"invalid distribution {text!r}: {exc}") from exc


def format_distribution(d: SamplingDistribution) -> str:
    names = {GammaParams: "gamma", GpdParams: "gpd", LogNormal: "lognormal",
             FDist: "f", Weibull: "weibull"}
    a, b = (getattr(d, f) for f in d.__dataclass_fields__)
    return f"{names[type(d)]}({a!r}, {b!r})"


@dataclass(frozen=True)
class MethodSpec:
    """One test to run on every repetition, with its settings."""

    method: Method
    N: int = DEFAULT_N
    mode: str = "approximate"
    inner_n: int | None = None
    n_outer: int = DEFAULT_N_OUTER
    mh: MhConfig = field(default_factory=MhConfig)
    theta0: GammaParams | GpdParams | None = None

    @property
    def name(self) -> str:
        return self.method.value


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelFamily
    sampling: SamplingDistribution
    sample_size: int
    repetitions: int
    methods: tuple[MethodSpec, ...]
    seed: int = 0
    levels: tuple[float, ...] = DEFAULT_LEVELS
    output_path: str = "results.csv"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.sample_size < 2:
            raise ConfigError("sample_size must be at least 2")
        if not self.methods:
            raise ConfigError("methods must name at least one test")
        if any(not 0 < lv < 1 for lv in self.levels):
            raise ConfigError("levels must lie strictly inside (0, 1)")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError("methods: each method may appear only once")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for spec in self.methods:
            if spec.N < 1 or (spec.inner_n is not None and spec.inner_n < 1) or spec.n_outer < 1:
                raise ConfigError(f"{spec.name}: N, inner_n and n_outer must be positive")
            if spec.mode not in ("approximate", "exact"):
                raise ConfigError(f"{spec.name}.mode must be approximate or exact")
            if spec.method is Method.EXACT and spec.theta0 is None:
                raise ConfigError("exact.theta0 is required (or a sampling "
                                  "distribution from the model family)")

    def method_names(self) -> list[str]:
        return [m.name for m in self.methods]


_INT_KEYS = {"sample_size", "repetitions", "seed"}
_METHOD_KEYS = {"N", "mode", "inner_n", "n_outer", "theta0"}
_MH_KEYS = {"sd_gamma": float, "sd_log_sigma": float, "burn_in": int, "thin": int}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse ``key = value`` lines into an :class:`ExperimentConfig`.

    Recognized keys: ``model``, ``sampling``, ``sample_size``,
    ``repetitions``, ``seed``, ``levels``, ``methods``, ``output_path``, a
    default ``N``, per-method overrides ``<method>.<N|mode|inner_n|n_outer|theta0>``
    and MH settings ``mh.<sd_gamma|sd_log_sigma|burn_in|thin>``. ``#``
    starts a comment.
    """
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in kv:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        kv[key] = value

    def need(key):
        if key not in kv:
            raise ConfigError(f"{source}: missing required key {key!r}")
        return kv.pop(key)

    try:
        model = ModelFamily.parse(need("model"))
    except ValueError as exc:
        raise ConfigError(f"{source}: model: {exc}") from None
    sampling = parse_distribution(need("sampling"))
    ints = {}
    for key in ("sample_size", "repetitions"):
        ints[key] = _parse_int(need(key), key, source)
    seed = _parse_int(kv.pop("seed", "0"), "seed", source)
    levels = DEFAULT_LEVELS
    if "levels" in kv:
        levels = tuple(_parse_float(v, "levels", source) for v in kv.pop("levels").split(","))
    output_path = kv.pop("output_path", "results.csv")
    names = [m.strip().lower() for m in need("methods").split(",") if m.strip()]
    default_N = _parse_int(kv.pop("N", str(DEFAULT_N)), "N", source)

    mh_kwargs = {}
    for key, conv in _MH_KEYS.items():
        if f"mh.{key}" in kv:
            raw = kv.pop(f"mh.{key}")
            mh_kwargs[key] = (_parse_int if conv is int else _parse_float)(raw, f"mh.{key}", source)
    try:
        mh = MhConfig(**mh_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: mh: {exc}") from None

    specs = []
    for name in names:
        try:
            method = Method(name)
        except ValueError:
            raise ConfigError(f"{source}: methods: unknown method {name!r}") from None
        opts = {k.split(".", 1)[1]: kv.pop(k) for k in list(kv) if k.startswith(name + ".")}
        unknown = set(opts) - _METHOD_KEYS
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) {', '.join(name + '.' + u for u in sorted(unknown))}")
        theta0 = None
        if "theta0" in opts:
            theta0 = _parse_theta(opts["theta0"], model, f"{name}.theta0", source)
        elif method is Method.EXACT and _family_of(sampling) is model:
            theta0 = sampling
        specs.append(MethodSpec(
            method=method,
            N=_parse_int(opts.get("N", str(default_N)), f"{name}.N", source),
            mode=opts.get("mode", "approximate").lower(),
            inner_n=(_parse_int(opts["inner_n"], f"{name}.inner_n", source) if "inner_n" in opts else None),
            n_outer=_parse_int(opts.get("n_outer", str(DEFAULT_N_OUTER)), f"{name}.n_outer", source),
            mh=mh,
            theta0=theta0,
        ))
    if kv:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(sorted(kv))}")
    try:
        return ExperimentConfig(model=model, sampling=sampling, methods=tuple(specs),
                                seed=seed, levels=levels, output_path=output_path, **ints)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text, str(path))


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialize a config back to ``key = value`` lines (the config echo)."""
    lines = [
        f"model = {cfg.model.value}",
        f"sampling = {format_distribution(cfg.sampling)}",
        f"sample_size = {cfg.sample_size}",
        f"repetitions = {cfg.repetitions}",
        f"seed = {cfg.seed}",
        "levels = " + ", ".join(repr(lv) for lv in cfg.levels),
        "methods = " + ", ".join(cfg.method_names()),
        f"output_path = {cfg.output_path}",
    ]
    mh = cfg.methods[0].mh
    for key in _MH_KEYS:
        lines.append(f"mh.{key} = {getattr(mh, key)!r}")
    for spec in cfg.methods:
        lines.append(f"{spec.name}.N = {spec.N}")
        if spec.method is Method.BAYES:
            lines.append(f"{spec.name}.mode = {spec.mode}")
            if spec.inner_n is not None:
                lines.append(f"{spec.name}.inner_n = {spec.inner_n}")
        if spec.method is Method.PPP:
            lines.append(f"{spec.name}.n_outer = {spec.n_outer}")
        if spec.theta0 is not None:
            a, b = (getattr(spec.theta0, f) for f in spec.theta0.__dataclass_fields__)
            lines.append(f"{spec.name}.theta0 = {a!r}, {b!r}")
    return "\n".join(lines) + "\n"


def _parse_int(value, key, source):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{source}: {key}: expected an integer, got {value!r}") from None


def _parse_float(value, key, source):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{source}: {key}: expected a number, got {value!r}") from None


def _parse_theta(value, model, key, source):
    parts = [p for p in value.replace("(", " ").replace(")", " ").split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{source}: {key}: expected two numbers, got {value!r}")
    a, b = (_parse_float(p.strip(), key, source) for p in parts)
    try:
        return GammaParams(a, b) if model is ModelFamily.GAMMA else GpdParams(a, b)
    except ValueError as exc:
        raise ConfigError(f"{source}: {key}: {exc}") from None


def _family_of(d):
    if isinstance(d, GammaParams):
        return ModelFamily.GAMMA
    if isinstance(d, GpdParams):
        return ModelFamily.GPD
    return None


# ---------------------------------------------------------------------------
# results

@dataclass
class ExperimentResult:
    """Per-repetition outcomes and their summaries.

    ``p_values[m]``, ``observed_stats[m]`` and ``n_failed[m]`` have one entry
    per repetition; a missing test outcome is nan (and -1 in ``n_failed``).
    """

    config: ExperimentConfig
    p_values: dict[str, np.ndarray]
    observed_stats: dict[str, np.ndarray]
    n_failed: dict[str, np.ndarray]
    duration: float = 0.0

    def methods(self) -> list[str]:
        return list(self.p_values)

    def rejection_rates(self) -> dict[str, dict[float, float]]:
        out = {}
        for m, p in self.p_values.items():
            out[m] = {lv: _rate_or_nan(p, lv) for lv in self.config.levels}
        return out

    def ks_distances(self) -> dict[str, float]:
        out = {}
        for m, p in self.p_values.items():
            ok = p[~np.isnan(p)]
            out[m] = ks_distance(ok) if ok.size else math.nan
        return out

    def n_missing(self) -> dict[str, int]:
        return {m: int(np.isnan(p).sum()) for m, p in self.p_values.items()}


def _rate_or_nan(p, level):
    try:
        return rejection_rate(p, level)
    except ValueError:
        return math.nan


def rejection_rate(p_values, level: float) -> float:
    """Share of non-missing p-values that are <= ``level``.

    Missing values may be given as None or nan.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie strictly inside (0, 1)")
    p = _as_pvalues(p_values)
    p = p[~np.isnan(p)]
    if p.size == 0:
        raise ValueError("rejection rate undefined: every p-value is missing")
    return float(np.mean(p <= level))


def coverage_curve(p_values, grid) -> list[tuple[float, float]]:
    """Empirical CDF of the non-missing p-values at each grid level."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("coverage grid is empty")
    if np.any((grid <= 0) | (grid >= 1)) or np.any(np.diff(grid) <= 0):
        raise ConfigError("coverage grid must be strictly increasing inside (0, 1)")
    p = _as_pvalues(p_values)
    p = np.sort(p[~np.isnan(p)])
    if p.size == 0:
        raise ValueError("coverage undefined: every p-value is missing")
    cov = np.searchsorted(p, grid, side="right") / p.size
    return [(float(g), float(c)) for g, c in zip(grid, cov)]


def uniformity_check(p_values) -> tuple[float, bool]:
    """KS distance of the p-values from Uniform(0, 1) and whether it is
    below the asymptotic 1% critical value 1.628/sqrt(m)."""
    p = _as_pvalues(p_values)
    p = p[~np.isnan(p)]
    if p.size < 10:
        raise ValueError(f"uniformity check needs at least 10 p-values, got {p.size}")
    d = ks_distance(p)
    return d, bool(d < KS_CRIT_1PCT / math.sqrt(p.size))


def _as_pvalues(p_values) -> np.ndarray:
    return np.array([math.nan if v is None else v for v in p_values], dtype=float)


# ---------------------------------------------------------------------------
# running

def stream(seed: int, rep: int, slot: int) -> np.random.Generator:
    """Independent generator for repetition ``rep``; slot 0 draws the sample,
    slot j >= 1 serves the j-th configured method."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(rep, slot))))


def _run_reps(cfg: ExperimentConfig, reps) -> list[list[tuple[float, float, int]]]:
    out = []
    for rep in reps:
        x = alt_sample(cfg.sampling, cfg.sample_size, stream(cfg.seed, rep, 0))
        row = []
        for j, spec in enumerate(cfg.methods, 1):
            try:
                res = run_method(spec.method, x, cfg.model, stream(cfg.seed, rep, j),
                                 N=spec.N, mode=spec.mode, inner_n=spec.inner_n,
                                 n_outer=spec.n_outer, mh=spec.mh, theta0=spec.theta0)
                row.append((res.p_value, res.observed_stat, res.n_failed))
            except EstimationError as exc:
                logger.debug("rep %d %s missing: %s", rep, spec.name, exc)
                row.append((math.nan, math.nan, -1))
        out.append(row)
    return out


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run every repetition of ``cfg``; ``workers`` processes (default: all cores).

    The result is identical for any worker count.
    """
    workers = workers or os.cpu_count() or 1
    start = time.perf_counter()
    reps = list(range(cfg.repetitions))
    if workers == 1 or cfg.repetitions == 1:
        rows = _run_reps(cfg, reps)
    else:
        n_chunks = min(cfg.repetitions, workers * 8)
        chunks = [c.tolist() for c in np.array_split(np.arange(cfg.repetitions), n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_reps, [cfg] * len(chunks), chunks)
            rows = [row for part in parts for row in part]
    duration = time.perf_counter() - start

    arr = np.array(rows, dtype=float).reshape(cfg.repetitions, len(cfg.methods), 3)
    names = cfg.method_names()
    result = ExperimentResult(
        config=cfg,
        p_values={m: arr[:, j, 0].copy() for j, m in enumerate(names)},
        observed_stats={m: arr[:, j, 1].copy() for j, m in enumerate(names)},
        n_failed={m: arr[:, j, 2].astype(int) for j, m in enumerate(names)},
        duration=duration,
    )
    logger.info("%s n=%d: %d reps in %.1fs", format_distribution(cfg.sampling),
                cfg.sample_size, cfg.repetitions, duration)
    return result


# ---------------------------------------------------------------------------
# persistence

def sibling_paths(path) -> tuple[Path, Path]:
    """Summary CSV and config-echo paths next to a result CSV."""
    path = Path(path)
    stem = path.name[:-4] if path.name.endswith(".csv") else path.name
    return path.with_name(stem + ".summary.csv"), path.with_name(stem + ".config.txt")


def _fmt_p(v):
    return "NA" if math.isnan(v) else f"{v:.6f}"


def _fmt_stat(v):
    if math.isnan(v):
        return "NA"
    return "inf" if math.isinf(v) else f"{v:.10g}"


def format_result_line(rep: int, method: str, p_value: float, observed_stat: float,
                       n_failed: int) -> str:
    """One result CSV row (no trailing newline)."""
    nf = "NA" if n_failed < 0 else str(n_failed)
    return f"{rep},{method},{_fmt_p(p_value)},{_fmt_stat(observed_stat)},{nf}"


def parse_result_line(line: str, lineno: int | None = None, path=None):
    """Parse one result CSV row into (rep, method, p_value, observed_stat, n_failed)."""
    cells = line.rstrip("\r\n").split(",")
    if len(cells) != len(RESULT_HEADER):
        raise ResultParseError(f"expected {len(RESULT_HEADER)} fields, got {len(cells)}", path, lineno)
    rep_s, method, p_s, stat_s, nf_s = (c.strip() for c in cells)

    def num(text, name):
        if text == "NA":
            return math.nan
        try:
            return float(text)
        except ValueError:
            raise ResultParseError(f"non-numeric {name} {text!r}", path, lineno) from None

    try:
        rep = int(rep_s)
    except ValueError:
        raise ResultParseError(f"non-integer rep {rep_s!r}", path, lineno) from None
    p = num(p_s, "p_value")
    if not math.isnan(p) and not 0 <= p <= 1:
        raise ResultParseError(f"p_value {p_s} outside [0, 1]", path, lineno)
    stat = num(stat_s, "observed_stat")
    nf = -1 if nf_s == "NA" else num(nf_s, "n_failed")
    if nf != int(nf):
        raise ResultParseError(f"non-integer n_failed {nf_s!r}", path, lineno)
    return rep, method, p, stat, int(nf)


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_rows(result: ExperimentResult) -> list[tuple[str, float, float, float, int]]:
    rates = result.rejection_rates()
    ks = result.ks_distances()
    missing = result.n_missing()
    return [(m, lv, rates[m][lv], ks[m], missing[m])
            for m in result.methods() for lv in result.config.levels]


def write_result(result: ExperimentResult, path=None) -> Path:
    """Write the result CSV plus its ``.summary.csv`` and ``.config.txt`` siblings.

    All three files are rendered in memory first, so a failure leaves no
    partial output.
    """
    path = Path(path if path is not None else result.config.output_path)
    lines = [",".join(RESULT_HEADER)]
    for rep in range(result.config.repetitions):
        for m in result.methods():
            lines.append(format_result_line(rep, m, result.p_values[m][rep],
                                            result.observed_stats[m][rep],
                                            int(result.n_failed[m][rep])))
    summary = [",".join(SUMMARY_HEADER)]
    for m, lv, rate, ks, miss in summary_rows(result):
        summary.append(f"{m},{lv!r},{rate:.6f},{ks:.6f},{miss}")
    echo = config_to_text(result.config) + f"# duration_seconds = {result.duration:.3f}\n"
    summary_path, config_path = sibling_paths(path)
    try:
        _atomic_write(path, "\n".join(lines) + "\n")
        _atomic_write(summary_path, "\n".join(summary) + "\n")
        _atomic_write(config_path, echo)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc
    return path


def read_result_table(path):
    """Read a result CSV into {method: (p_values, observed_stats, n_failed)},
    each array indexed by repetition."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read results {path}: {exc.strerror or exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != ",".join(RESULT_HEADER):
        raise ResultParseError("missing or wrong header, expected " + ",".join(RESULT_HEADER), path, 1)
    rows: dict[str, dict[int, tuple]] = {}
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        rep, method, p, stat, nf = parse_result_line(line, lineno, path)
        by_rep = rows.setdefault(method, {})
        if rep in by_rep:
            raise ResultParseError(f"duplicate row for rep {rep}, method {method}", path, lineno)
        by_rep[rep] = (p, stat, nf)
    if not rows:
        raise ResultParseError("no result rows", path, len(lines))
    table = {}
    for method, by_rep in rows.items():
        n = max(by_rep) + 1
        gaps = sorted(set(range(n)) - set(by_rep))
        if gaps or min(by_rep) < 0:
            bad = gaps[0] if gaps else min(by_rep)
            raise ResultParseError(f"{method}: no row for rep {bad} (missing results are written as NA)", path)
        p = np.full(n, math.nan)
        s = np.full(n, math.nan)
        f = np.full(n, -1, dtype=int)
        for rep, (pv, sv, nv) in by_rep.items():
            p[rep], s[rep], f[rep] = pv, sv, nv
        table[method] = (p, s, f)
    return table


def read_result(path) -> ExperimentResult:
    """Read back a result written by :func:`write_result`."""
    path = Path(path)
    table = read_result_table(path)
    _, config_path = sibling_paths(path)
    if not config_path.exists():
        raise ResultParseError("config echo not found", config_path)
    text = config_path.read_text()
    cfg = parse_config_text(text, str(config_path))
    m = re.search(r"^# duration_seconds = ([0-9.eE+-]+)$", text, re.M)
    duration = float(m.group(1)) if m else 0.0
    if set(table) != set(cfg.method_names()):
        raise ResultParseError(f"methods {sorted(table)} do not match the config echo", path)
    for method, (p, _, _) in table.items():
        if p.size != cfg.repetitions:
            raise ResultParseError(f"{method}: {p.size} repetitions, config says {cfg.repetitions}", path)
    names = cfg.method_names()
    return ExperimentResult(
        config=cfg,
        p_values={m: table[m][0] for m in names},
        observed_stats={m: table[m][1] for m in names},
        n_failed={m: table[m][2] for m in names},
        duration=duration,
    )


def with_output(cfg: ExperimentConfig, output_path) -> ExperimentConfig:
    return replace(cfg, output_path=str(output_path))
