"""Command line, IBM1 containers, run configuration and validation reports.

Container layout: b"IBM1", header length (u32 little-endian), UTF-8 JSON
header {kind, shape, dtype, order, meta}, then the raw little-endian payload
(complex numbers interleaved re, im).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import struct
import sys
import time
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (ConfigurationError, ContainerError, IbmError, MagicError, ShapeError,
                     TruncationError, ValidationError)

MAGIC = b"IBM1"
DTYPES = {"f64": np.dtype("<f8"), "c128": np.dtype("<c16")}


# ---------------------------------------------------------- containers

@dataclass
class Container:
    kind: str
    data: np.ndarray
    meta: dict = field(default_factory=dict)


def _dump_header(d: dict) -> bytes:
    return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def save_container(path, kind: str, data: np.ndarray, meta: dict | None = None) -> None:
    arr = np.asarray(data)
    code = "c128" if np.iscomplexobj(arr) else "f64"
    arr = np.ascontiguousarray(arr, dtype=DTYPES[code])
    header = _dump_header({"kind": kind, "shape": list(arr.shape), "dtype": code, "order": "row-major",
                           "meta": meta or {}})
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise ContainerError(f"cannot write {path}: {exc}") from exc


def load_container(path) -> Container:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise MagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise TruncationError(f"{path}: missing header length")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise TruncationError(f"{path}: header truncated")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
        kind, shape, code = header["kind"], tuple(int(s) for s in header["shape"]), header["dtype"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ShapeError(f"{path}: malformed header ({exc})") from exc
    if code not in DTYPES or header.get("order", "row-major") != "row-major":
        raise ShapeError(f"{path}: unsupported dtype/order")
    if any(s < 0 for s in shape):
        raise ShapeError(f"{path}: negative shape")
    payload = raw[8 + hlen:]
    need = int(np.prod(shape, dtype=np.int64)) * DTYPES[code].itemsize
    if len(payload) < need:
        raise TruncationError(f"{path}: payload has {len(payload)} bytes, shape needs {need}")
    if len(payload) > need:
        raise ShapeError(f"{path}: payload has {len(payload) - need} bytes beyond the declared shape")
    data = np.frombuffer(payload, dtype=DTYPES[code]).reshape(shape).copy()
    return Container(kind, data, header.get("meta", {}))


# ------------------------------------------------- object <-> container

def operator_to_container(op) -> Container:
    meta = {"alpha": op.alpha, "energy": op.energy,
            "domain": {"type": "disk", "radius": op.grid.radius},
            "grid": {"kind": "boundary", "n": op.grid.n},
            "delta": [float(np.real(op.delta_coeff)), float(np.imag(op.delta_coeff))],
            "op_kind": op.kind, "potential_id": op.potential_id}
    return Container("impedance_map", np.asarray(op.kernel, dtype=complex), meta)


def operator_from_container(c: Container):
    from .boundary_ops import BoundaryOperator
    from .domain_model import Domain, build_boundary_grid
    if c.kind != "impedance_map":
        raise ValidationError(f"expected an impedance_map container, got {c.kind!r}")
    m = c.meta
    grid = build_boundary_grid(Domain(float(m["domain"]["radius"])), int(m["grid"]["n"]))
    if c.data.shape != (grid.n, grid.n):
        raise ShapeError("operator payload does not match its grid")
    delta = complex(*m["delta"])
    return BoundaryOperator(delta, c.data, grid, m.get("op_kind", "impedance"), m["alpha"], m["energy"],
                            m.get("potential_id"), {})


def dataset_to_container(ds, meta_extra: dict | None = None) -> Container:
    meta = {"energy": ds.energy, "alpha": ds.alpha, "provenance": ds.provenance,
            "columns": ["k_re_x", "k_re_y", "k_im_x", "k_im_y", "l_re_x", "l_re_y", "l_im_x", "l_im_y",
                        "path", "value_re", "value_im", "condition"],
            "path_tags": {"0": "classical", "1": "faddeev", "2": "directional"},
            "sampling": ds.sampling.to_dict() if ds.sampling is not None else None}
    oracle = [e["oracle"] for e in ds.entries]
    if any(o is not None for o in oracle):
        meta["oracle"] = [[o.real, o.imag] if o is not None else None for o in oracle]
    meta.update(meta_extra or {})
    return Container("scattering_dataset", ds.to_array(), meta)


def dataset_from_container(c: Container):
    from .inversion import PolarSampling
    from .scattering import ScatteringDataset
    if c.kind != "scattering_dataset":
        raise ValidationError(f"expected a scattering_dataset container, got {c.kind!r}")
    s = c.meta.get("sampling")
    sampling = PolarSampling(**s) if s else None
    ds = ScatteringDataset.from_array(c.data, c.meta["energy"], c.meta["alpha"], c.meta.get("provenance", "boundary"),
                                      sampling)
    for e, o in zip(ds.entries, c.meta.get("oracle") or []):
        e["oracle"] = complex(*o) if o is not None else None
    return ds


def potential_to_container(rec) -> Container:
    data = np.column_stack([rec.grid.points, rec.values])
    meta = {"grid": rec.grid.descriptor(), "p_max": rec.p_max, "provenance": rec.provenance,
            "regularization": rec.regularization, "columns": ["x", "y", "value"]}
    return Container("potential", data, meta)


def save(path, obj) -> None:
    """Save a Container, BoundaryOperator, ScatteringDataset or ReconstructedPotential."""
    from .boundary_ops import BoundaryOperator
    from .inversion import ReconstructedPotential
    from .scattering import ScatteringDataset
    if isinstance(obj, BoundaryOperator):
        obj = operator_to_container(obj)
    elif isinstance(obj, ScatteringDataset):
        obj = dataset_to_container(obj)
    elif isinstance(obj, ReconstructedPotential):
        obj = potential_to_container(obj)
    elif isinstance(obj, np.ndarray):
        obj = Container("array", obj)
    save_container(path, obj.kind, obj.data, obj.meta)


# ------------------------------------------------------------ config

SCHEMA: dict[str, Any] = {
    "domain": {"type": str, "radius": float},
    "potential": dict,
    "background": dict,
    "energy": float,
    "alpha": float,
    "grid": {"n": int, "n_r": int, "n_theta": int},
    "path": str,
    "route": (str, type(None)),
    "eps_schedule": (list, type(None)),
    "reg_schedule": (list, type(None)),
    "lam": (float, type(None)),
    "momenta": {"n_dirs": int, "n_radii": int, "p_max": (float, type(None)), "allow_faddeev": bool,
                "p_list": (list, type(None))},
    "thresholds": {"cond_limit": float, "oracle_rtol": float},
    "outputs": {"dir": str},
    "seed": int,
}

DEFAULTS: dict[str, Any] = {
    "domain": {"type": "disk", "radius": 1.0},
    "potential": {"kind": "gaussian_mixture", "amplitudes": [0.1], "centers": [[0.0, 0.0]], "widths": [0.2]},
    "background": {"kind": "zero"},
    "energy": 25.0,
    "alpha": math.pi / 2,
    "grid": {"n": 128, "n_r": 24, "n_theta": 96},
    "path": "classical",
    "route": None,
    "eps_schedule": None,
    "reg_schedule": None,
    "lam": None,
    "momenta": {"n_dirs": 16, "n_radii": 8, "p_max": None, "allow_faddeev": False, "p_list": None},
    "thresholds": {"cond_limit": 1e12, "oracle_rtol": 1e-3},
    "outputs": {"dir": "."},
    "seed": 0,
}


def _check(value, expected, where: str):
    if isinstance(expected, dict):
        if not isinstance(value, dict):
            raise ConfigurationError(f"{where} must be an object")
        unknown = sorted(set(value) - set(expected))
        if unknown:
            raise ConfigurationError(f"unknown config keys at {where}: {unknown}")
        for k, v in value.items():
            _check(v, expected[k], f"{where}.{k}")
        return
    types = expected if isinstance(expected, tuple) else (expected,)
    if float in types and isinstance(value, int) and not isinstance(value, bool):
        return
    if isinstance(value, bool) and bool not in types:
        raise ConfigurationError(f"{where} has the wrong type")
    if not isinstance(value, types):
        raise ConfigurationError(f"{where} has type {type(value).__name__}")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) \
            and k not in ("potential", "background") else v
    return out


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check(d, SCHEMA, "config")
        cfg = _merge(DEFAULTS, d)
        if cfg["domain"]["type"] != "disk":
            raise ConfigurationError("only disk domains are supported")
        if cfg["path"] not in ("classical", "faddeev", "directional"):
            raise ConfigurationError(f"unknown path {cfg['path']!r}")
        if cfg["route"] not in (None, "prop34", "offset_limit"):
            raise ConfigurationError(f"unknown route {cfg['route']!r}")
        return cls(cfg)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ContainerError(f"cannot read config {path}: {exc}") from exc
        try:
            d = json.loads(text)
        except ValueError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def __getitem__(self, k):
        return self.data[k]

    @property
    def domain(self):
        from .domain_model import Domain
        return Domain(float(self["domain"]["radius"]))

    def specs(self):
        from .domain_model import PotentialSpec
        try:
            return PotentialSpec.from_json(self["potential"]), PotentialSpec.from_json(self["background"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad potential spec: {exc}") from exc

    def discretization(self):
        from .domain_model import make_discretization
        g = self["grid"]
        return make_discretization(self.domain, g["n"], g["n_r"], g["n_theta"], *self.specs())

    def eps(self, grid):
        e = self["eps_schedule"]
        return None if e is None else np.asarray(e, dtype=float) * grid.spacing


# ------------------------------------------------------------ reports

@dataclass
class ReportDoc:
    checks: list = field(default_factory=list)
    timing: bool = False

    def add(self, name: str, measured: float, tolerance: float, passed: bool | None = None,
            runtime: float | None = None, cmp: str = "<=", **extra):
        if passed is None:
            passed = bool(measured <= tolerance) if cmp == "<=" else bool(measured > tolerance)
        entry = {"name": name, "measured": _fmt(measured), "tolerance": _fmt(tolerance),
                 "comparison": cmp, "passed": bool(passed)}
        if extra:
            entry["details"] = {k: _fmt(v) if isinstance(v, float) else v for k, v in sorted(extra.items())}
        if self.timing and runtime is not None:
            entry["runtime_s"] = round(runtime, 3)
        self.checks.append(entry)

    @property
    def verdict(self) -> str:
        return "pass" if self.checks and all(c["passed"] for c in self.checks) else "fail"

    def to_json(self) -> str:
        return json.dumps({"checks": self.checks, "verdict": self.verdict}, indent=2, sort_keys=False) + "\n"


def _fmt(x):
    """Three significant digits: reports stay byte-stable across BLAS thread counts."""
    if isinstance(x, (bool, int, str)) or x is None:
        return x
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    return float(f"{x:.2e}")


# ------------------------------------------------------------ threads

def thread_limit():
    n = os.environ.get("IBM_THREADS")
    if not n:
        return nullcontext()
    try:
        k = int(n)
        if k < 1:
            raise ValueError
    except ValueError as exc:
        raise ConfigurationError(f"IBM_THREADS must be a positive integer, got {n!r}") from exc
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=k)


# ------------------------------------------------------------ commands

def _out_dir(cfg: RunConfig, override):
    d = Path(override or cfg["outputs"]["dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _fields(cfg: RunConfig, disc):
    from .domain_model import sample_potential
    s, s0 = cfg.specs()
    return sample_potential(s, disc.volume), sample_potential(s0, disc.volume)


def cmd_simulate(cfg: RunConfig, out=None, log=print) -> dict:
    from . import boundary_ops as bo
    from . import greens
    disc = cfg.discretization()
    v, v0 = _fields(cfg, disc)
    E, alpha = float(cfg["energy"]), float(cfg["alpha"])
    paths = {}
    outd = _out_dir(cfg, out)
    for tag, w in (("v", v), ("v0", v0)):
        probe = bo.wellposedness_probe(w, E, alpha, disc=disc)
        if not probe.passed:
            log(json.dumps(probe.to_dict(), sort_keys=True))
        probe.require()
        if w.is_zero:
            M = bo.free_impedance_operator(E, alpha, disc.boundary)
        else:
            G, _ = greens.domain_green(disc, w, E, alpha)
            M = bo.impedance_from_green(G)
        p = outd / f"M_{tag}.ibm"
        save(p, M)
        paths[tag] = str(p)
        if w.spec.is_radial and not w.is_zero and w.spec.kind != "grid_samples":
            Mo = bo.radial_impedance_oracle(w.spec, E, alpha, disc.boundary, domain=disc.domain)
            p = outd / f"M_{tag}_oracle.ibm"
            save(p, Mo)
            paths[tag + "_oracle"] = str(p)
    return paths


def _pairs(cfg: RunConfig):
    from .inversion import sample_momentum_set
    from .scattering import momentum_pair_complex, momentum_pair_directional, momentum_pair_real
    E = float(cfg["energy"])
    mom = cfg["momenta"]
    path = cfg["path"]
    sampling = None
    if mom["p_list"] is not None:
        ps = [np.asarray(p, dtype=float) for p in mom["p_list"]]
        pairs = [momentum_pair_complex(p, E) if path == "faddeev" else momentum_pair_real(p, E) for p in ps]
    else:
        p_max = mom["p_max"] if mom["p_max"] is not None else 2.0 * math.sqrt(E)
        pairs, sampling = sample_momentum_set(E, mom["n_dirs"], mom["n_radii"], p_max, mom["allow_faddeev"])
    if path == "directional":
        pairs = [momentum_pair_directional(p.k.re, p.l.re, p.k.re) if p.path == "classical" else p
                 for p in pairs]
    return pairs, sampling


def _oracle_value(pair, v, disc, reg):
    from . import volume_oracle as vo
    if pair.path == "classical":
        sol = vo.lippmann_schwinger_classical(v, pair.k.re, disc)
    elif pair.path == "faddeev":
        sol = vo.faddeev_solve(v, pair.k, disc)
    else:
        sol = vo.psi_gamma_two_momentum(v, pair.gamma, pair.k.re, pair.k.re, reg, disc)
    return vo.amplitude_volume(v, sol, pair.l)


def cmd_scatter(cfg: RunConfig, m_path, m0_path, out=None, oracle=False, log=print) -> dict:
    from .boundary_ops import operator_sub
    from .scattering import ScatteringDataset, boundary_datum, default_reg_schedule, kernel_A, Background
    from .errors import ExceptionalPointError
    M = operator_from_container(load_container(m_path))
    M0 = operator_from_container(load_container(m0_path))
    disc = cfg.discretization()
    for m in (M, M0):
        if not m.grid.same_as(disc.boundary):
            raise ValidationError("impedance map grid differs from the configured grid")
        if abs(m.alpha - cfg["alpha"]) > 1e-14 or abs(m.energy - cfg["energy"]) > 1e-12 * max(1, abs(cfg["energy"])):
            raise ValidationError("impedance maps were computed for another (α, E)")
    if abs(M.alpha - M0.alpha) > 1e-14 or M.energy != M0.energy:
        raise ValidationError("impedance maps disagree in α or E")
    Md = operator_sub(M, M0)
    v, v0 = _fields(cfg, disc)
    pairs, sampling = _pairs(cfg)
    E, alpha = float(cfg["energy"]), float(cfg["alpha"])
    reg = np.asarray(cfg["reg_schedule"]) if cfg["reg_schedule"] is not None else default_reg_schedule(E)
    eps = cfg.eps(disc.boundary)
    ds = ScatteringDataset(E, alpha, sampling=sampling)
    shared = None
    limit = float(cfg["thresholds"]["cond_limit"])
    for pr in pairs:
        kern = None
        if pr.path == "classical":
            if shared is None:
                bg = Background(disc, E, None, v0=v0)
                shared = kernel_A(bg, Md, None, alpha, cfg["route"], cfg["lam"], eps)
            kern = shared
        try:
            r = boundary_datum(Md, pr, alpha, disc, cfg["route"], cfg["lam"], eps, reg, kernel=kern, v0=v0)
            val, cond, status = r.value, r.condition, "ok"
            if not cond < limit:
                val, status = None, "refused"
        except ExceptionalPointError as exc:
            val, cond, status = None, float(exc.details.get("condition", float("inf"))), "refused"
        orc = _oracle_value(pr, v, disc, reg) if oracle else None
        ds.add(pr, val, cond, status, orc)
    p = _out_dir(cfg, out) / "dataset.ibm"
    save(p, ds)
    summary = {"dataset": str(p), "entries": len(ds), "refused": sum(e["status"] != "ok" for e in ds.entries)}
    if oracle:
        rel = [abs(e["value"] - e["oracle"]) / max(abs(e["oracle"]), 1e-300)
               for e in ds.entries if e["value"] is not None]
        summary["oracle_max_rel"] = max(rel) if rel else None
        summary["oracle_pass"] = bool(rel) and max(rel) <= cfg["thresholds"]["oracle_rtol"]
    return summary


def cmd_reconstruct(cfg: RunConfig, dataset_path, out=None, truth=True) -> tuple[dict, ReportDoc]:
    from . import inversion as inv
    ds = dataset_from_container(load_container(dataset_path))
    if ds.sampling is None:
        raise ValidationError("dataset has no polar sampling description")
    grid = inv.ReconstructionGrid.for_band(cfg.domain, ds.sampling.p_max)
    rec = inv.born_invert(ds, grid)
    outd = _out_dir(cfg, out)
    p = outd / "potential.ibm"
    save(p, rec)
    rep = ReportDoc()
    if truth:
        spec, _ = cfg.specs()
        ref = inv.lowpass_reference(spec, ds.sampling.p_max, grid, cfg.domain)
        m = inv.error_metrics(rec, ref, support_radius=spec.resolved_support(cfg.domain))
        rep.add("rel_l2", m["rel_l2"], 0.15)
        rep.add("support_localization", m["support_localization"], 0.5, cmp=">")
    (outd / "report.json").write_text(rep.to_json())
    return {"potential": str(p)}, rep


def cmd_greens(kind: str, energy: float, r_max: float, n_points: int, out=None) -> np.ndarray:
    """Table of r, Re G, Im G along the x axis: free outgoing G⁺, or Faddeev G at k = (√(E + b²), 0) + i(0, b)."""
    from . import greens
    r = np.linspace(r_max / n_points, r_max, n_points)
    x = np.column_stack([r, np.zeros_like(r)])
    if kind == "free":
        vals = np.array([greens.free_green_plus(xi, math.sqrt(energy), 2) for xi in x])
    else:
        b = math.sqrt(max(0.0, -energy)) + 1.0
        k = greens.ComplexMomentum(np.array([math.sqrt(energy + b * b), 0.0]), np.array([0.0, b]), energy)
        vals = np.array([greens.faddeev_green(xi, k) for xi in x])
    table = np.column_stack([r, np.real(vals), np.imag(vals)])
    if out:
        save_container(out, "green_table", table, {"kind": kind, "energy": energy,
                                                   "columns": ["r", "re", "im"]})
    return table


SUITES = ("identity", "symmetry", "routes", "oracle", "remark311", "exceptional")


def cmd_validate(suite: str, timing: bool = False) -> ReportDoc:
    from . import validation
    if suite not in SUITES:
        raise ConfigurationError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    rep = ReportDoc(timing=timing)
    getattr(validation, f"suite_{suite}")(rep)
    return rep


# ------------------------------------------------------------ entry

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ibmap", description="Impedance boundary map scattering toolkit")
    ap.add_argument("--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="compute impedance maps for v and v⁰")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s = sub.add_parser("scatter", help="scattering data from two impedance maps")
    s.add_argument("--config", required=True)
    s.add_argument("--maps", nargs=2, required=True, metavar=("M_V", "M_V0"))
    s.add_argument("--out")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--path", choices=("classical", "faddeev", "directional"))
    s = sub.add_parser("reconstruct", help="Born reconstruction from a dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out")
    s = sub.add_parser("validate", help="run a validation suite")
    s.add_argument("--suite", required=True)
    s.add_argument("--out")
    s.add_argument("--timing", action="store_true")
    s = sub.add_parser("greens", help="tabulate a Green function")
    s.add_argument("--kind", choices=("free", "faddeev"), default="free")
    s.add_argument("--energy", type=float, default=1.0)
    s.add_argument("--r-max", type=float, default=2.0)
    s.add_argument("--points", type=int, default=64)
    s.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    log = (lambda *a, **k: None) if args.quiet else (lambda *a, **k: print(*a, file=sys.stderr, **k))
    try:
        with thread_limit():
            return _dispatch(args, log)
    except IbmError as exc:
        print(f"ibmap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def _dispatch(args, log) -> int:
    if args.command == "validate":
        rep = cmd_validate(args.suite, args.timing)
        text = rep.to_json()
        if args.out:
            Path(args.out).write_text(text)
        sys.stdout.write(text)
        return 0 if rep.verdict == "pass" else 4
    if args.command == "greens":
        table = cmd_greens(args.kind, args.energy, args.r_max, args.points, args.out)
        if not args.out:
            for row in table:
                print(f"{row[0]:.6f} {row[1]:.16e} {row[2]:.16e}")
        return 0
    cfg = RunConfig.load(args.config)
    t = time.perf_counter()
    if args.command == "simulate":
        res = cmd_simulate(cfg, args.out, log)
    elif args.command == "scatter":
        if args.path:
            cfg.data["path"] = args.path
        res = cmd_scatter(cfg, args.maps[0], args.maps[1], args.out, args.oracle, log)
        if args.oracle and not res.get("oracle_pass"):
            print(json.dumps(res, indent=2))
            return 4
    else:
        res, rep = cmd_reconstruct(cfg, args.dataset, args.out)
        res["verdict"] = rep.verdict
        print(json.dumps(res, indent=2))
        return 0 if rep.verdict == "pass" else 4
    log(f"done in {time.perf_counter() - t:.1f} s")
    print(json.dumps(res, indent=2))
    return 0
