"""Command-line front end: ``qie metrics | sweep | verify``.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 numerical
non-convergence (or a failed internal consistency check).
"""

from __future__ import annotations

import argparse
import io
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import __version__, engine, trotter, verify
from .engine import K_B, K_THETA, EngineParams, IdentityViolation
from .metrics import CycleMetrics, eta_max_limit, evaluate_cycle
from .numerics import InvalidInput, NonConvergence, QuadratureConfig, grid

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

COLUMNS = (
    "overlay_id", "tau", "I_nats", "W_meas_meV", "W_erg_meV", "W_th_meV",
    "W_tot_meV", "TS_I_meV", "Y", "eta_erg", "eta_max", "Pi_tilde",
)
METRIC_COLUMNS = COLUMNS[2:]
_FIELD_OF = {
    "I_nats": "I_nats", "W_meas_meV": "W_meas", "W_erg_meV": "W_erg", "W_th_meV": "W_th",
    "W_tot_meV": "W_tot", "TS_I_meV": "TS_I", "Y": "Y", "eta_erg": "eta_erg",
    "eta_max": "eta_max", "Pi_tilde": "Pi_tilde",
}
NA = "NA"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

_FLOAT_KEYS = {
    "T_S_K", "T_M_K", "delta_E_meV", "delta_E_rel", "tau", "tau_start", "tau_stop",
    "tol_rel", "tol_abs", "window_sigmas", "g", "p_halfwidth",
}
_INT_KEYS = {"tau_count", "max_subdivisions", "n_steps", "n_grid"}
_STR_KEYS = {"tau_spacing", "splitting", "overlays", "outputs", "taus"}
CONFIG_KEYS = _FLOAT_KEYS | _INT_KEYS | _STR_KEYS
OVERLAY_KEYS = {"T_S_K", "T_M_K", "delta_E_meV", "delta_E_rel", "g"}


def _convert(key: str, raw: str):
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _INT_KEYS:
        return int(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; '#' starts a comment. Unknown or repeated keys are errors."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {raw!r}") from None
    return out


def read_config(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    return parse_config_text(text, path)


def parse_overlay(text: str) -> dict:
    """``T_M_K=100,delta_E_rel=2`` -> {'T_M_K': 100.0, 'delta_E_rel': 2.0}."""
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"overlay item {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        if k not in OVERLAY_KEYS:
            raise ConfigError(f"unknown overlay key {k!r} (allowed: {', '.join(sorted(OVERLAY_KEYS))})")
        if k in out:
            raise ConfigError(f"overlay key {k!r} repeated in {text!r}")
        try:
            out[k] = float(v)
        except ValueError:
            raise ConfigError(f"overlay {k}: bad value {v!r}") from None
    if not out:
        raise ConfigError(f"empty overlay {text!r}")
    return out


@dataclass(frozen=True)
class TauGrid:
    start: float
    stop: float
    count: int
    spacing: str = "log"

    def values(self):
        return [float(t) for t in grid(self.start, self.stop, self.count, self.spacing)]


@dataclass(frozen=True)
class SweepSpec:
    base: dict  # T_S_K, T_M_K and exactly one of delta_E_meV / delta_E_rel
    tau_grid: TauGrid
    overlays: tuple = ()
    outputs: tuple = METRIC_COLUMNS
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)

    def overlay_settings(self) -> list[dict]:
        return [_apply_overlay(self.base, ov) for ov in (self.overlays or ({},))]

    def overlay_params(self) -> list[EngineParams]:
        return [params_from(s) for s in self.overlay_settings()]


def _apply_overlay(base: dict, ov: dict) -> dict:
    s = dict(base)
    if "delta_E_rel" in ov:
        s.pop("delta_E_meV", None)
    if "delta_E_meV" in ov:
        s.pop("delta_E_rel", None)
    s.update(ov)
    return s


def params_from(s: dict) -> EngineParams:
    T_S, T_M = s["T_S_K"], s["T_M_K"]
    for name, v in (("T_S_K", T_S), ("T_M_K", T_M)):
        if not v > 0:
            raise InvalidInput(f"{name} must be > 0, got {v:g}")
    if "delta_E_meV" in s:
        if not s["delta_E_meV"] > 0:
            raise InvalidInput(f"delta_E_meV must be > 0, got {s['delta_E_meV']:g}")
        return EngineParams(delta_E=s["delta_E_meV"], T_S=T_S, T_M=T_M)
    if not s["delta_E_rel"] > 0:
        raise InvalidInput(f"delta_E_rel must be > 0, got {s['delta_E_rel']:g}")
    return EngineParams.relative(s["delta_E_rel"], T_S, T_M)


# ---------------------------------------------------------------- settings merge

_FLAG_TO_KEY = {
    "T_S": "T_S_K", "T_M": "T_M_K", "delta_E": "delta_E_meV", "delta_E_rel": "delta_E_rel",
    "tau": "tau", "tau_start": "tau_start", "tau_stop": "tau_stop", "tau_count": "tau_count",
    "tol_rel": "tol_rel", "tol_abs": "tol_abs", "n_steps": "n_steps", "n_grid": "n_grid",
    "splitting": "splitting", "outputs": "outputs", "taus": "taus",
}


def merged_settings(args) -> dict:
    s = read_config(args.config) if args.config else {}
    if "delta_E_meV" in s and "delta_E_rel" in s:
        raise ConfigError(f"{args.config}: give only one of delta_E_meV / delta_E_rel")
    for flag, key in _FLAG_TO_KEY.items():
        v = getattr(args, flag, None)
        if v is not None:
            if key == "delta_E_meV":
                s.pop("delta_E_rel", None)
            if key == "delta_E_rel":
                s.pop("delta_E_meV", None)
            s[key] = v
    if getattr(args, "tau_log", None):
        s["tau_spacing"] = "log"
    if getattr(args, "overlay", None):
        s["overlays"] = ";".join(args.overlay)
    if "delta_E_meV" not in s and "delta_E_rel" not in s:
        s["delta_E_rel"] = 1.0
    s.setdefault("T_S_K", 300.0)
    s.setdefault("T_M_K", 300.0)
    return s


def quadrature_from(s: dict) -> QuadratureConfig:
    d = QuadratureConfig()
    return QuadratureConfig(
        abs_tol=s.get("tol_abs", d.abs_tol),
        rel_tol=s.get("tol_rel", d.rel_tol),
        max_subdivisions=s.get("max_subdivisions", d.max_subdivisions),
        window_sigmas=s.get("window_sigmas", d.window_sigmas),
    )


def _base(s: dict) -> dict:
    return {k: s[k] for k in ("T_S_K", "T_M_K", "delta_E_meV", "delta_E_rel") if k in s}


def _overlays(s: dict) -> tuple:
    raw = s.get("overlays", "")
    return tuple(parse_overlay(part) for part in raw.split(";") if part.strip())


def _outputs(s: dict) -> tuple:
    raw = s.get("outputs")
    if not raw:
        return METRIC_COLUMNS
    names = [n.strip() for n in raw.split(",") if n.strip()]
    bad = [n for n in names if n not in METRIC_COLUMNS]
    if bad:
        raise ConfigError(f"unknown output column(s): {', '.join(bad)}")
    return tuple(c for c in METRIC_COLUMNS if c in names)


def sweep_spec_from(s: dict) -> SweepSpec:
    missing = [k for k in ("tau_start", "tau_stop", "tau_count") if k not in s]
    if missing:
        raise ConfigError(f"sweep needs {', '.join(missing)}")
    spacing = s.get("tau_spacing", "linear")
    if spacing not in ("linear", "log"):
        raise ConfigError(f"tau_spacing must be linear or log, got {spacing!r}")
    tg = TauGrid(s["tau_start"], s["tau_stop"], s["tau_count"], spacing)
    if tg.count < 2 or not tg.start < tg.stop or tg.start < 0 or (spacing == "log" and tg.start <= 0):
        raise InvalidInput(f"bad tau grid: start={tg.start:g} stop={tg.stop:g} count={tg.count} spacing={spacing}")
    if "g" in s or any("g" in ov for ov in _overlays(s)):
        raise ConfigError("key 'g' only applies to verify; sweep metrics are g-independent")
    spec = SweepSpec(
        base=_base(s), tau_grid=tg, overlays=_overlays(s), outputs=_outputs(s), quadrature=quadrature_from(s)
    )
    spec.overlay_params()  # validate every overlay up front
    return spec


def parse_config(path: str, args=None) -> SweepSpec:
    """Read a sweep config file; flags in ``args`` (if given) override file values."""
    if args is None:
        args = argparse.Namespace(config=path)
    else:
        args = argparse.Namespace(**{**vars(args), "config": path})
    return sweep_spec_from(merged_settings(args))


# ---------------------------------------------------------------- output

def fmt(x) -> str:
    if x is None:
        return NA
    if isinstance(x, int):
        return str(x)
    return f"{x:.12g}"


def row_values(overlay_id: int, m: CycleMetrics, outputs=METRIC_COLUMNS) -> list[str]:
    d = m.as_dict()
    return [str(overlay_id), fmt(m.tau)] + [fmt(d[_FIELD_OF[c]]) for c in outputs]


def preamble(command: str, settings_lines: list[str], overlay_params: list[EngineParams], qcfg: QuadratureConfig) -> list[str]:
    lines = [
        f"# qiengine {__version__} {command}",
        "# units: energies meV, temperatures K, information nats (I/k_B), momentum sqrt(meV)",
        f"# k_B_meV_per_K = {K_B!r}",
        f"# k_B_Theta_meV = {K_THETA!r}",
        "# tau = g*t_m/sqrt(k_B*Theta); the figure abscissa t_m is read as tau",
        "# W_meas = b*tau^2*k_B_Theta/2; Pi_tilde = (W_erg - W_meas)/(tau*1 meV); physical Pi = Pi_tilde*g*sqrt(k_B_Theta)",
        "# eta = (W_out - W_meas)/(W_out + W_meas); eta_erg uses W_erg, eta_max uses k_B*T_S*I",
        f"# identity check: |W_tot - TS_I| <= {engine.IDENTITY_RTOL:g}*max(TS_I, {engine.IDENTITY_FLOOR:g} meV)",
        f"# quadrature: abs_tol={qcfg.abs_tol!r} rel_tol={qcfg.rel_tol!r} max_subdivisions={qcfg.max_subdivisions} window_sigmas={qcfg.window_sigmas!r}",
        f"# undefined entries: {NA}",
        "# inputs (config format):",
    ]
    lines += [f"#   {ln}" for ln in settings_lines]
    for i, p in enumerate(overlay_params):
        tls = engine.thermal_populations(p)
        lines.append(
            f"# overlay {i}: T_S_K={p.T_S!r} T_M_K={p.T_M!r} delta_E_meV={p.delta_E!r} "
            f"a={tls.a!r} b={tls.b!r} eta_max_tau0_extrapolated={eta_max_limit(p)!r}"
        )
    return lines


def _settings_lines(s: dict, keys) -> list[str]:
    out = []
    for k in keys:
        if k in s:
            v = s[k]
            out.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
    return out


_SWEEP_KEYS = (
    "T_S_K", "T_M_K", "delta_E_meV", "delta_E_rel", "tau_start", "tau_stop", "tau_count",
    "tau_spacing", "overlays", "outputs", "tol_abs", "tol_rel", "max_subdivisions", "window_sigmas",
)


def _spec_settings(spec: SweepSpec) -> dict:
    s = dict(spec.base)
    tg = spec.tau_grid
    s.update(tau_start=float(tg.start), tau_stop=float(tg.stop), tau_count=tg.count, tau_spacing=tg.spacing)
    if spec.overlays:
        s["overlays"] = "; ".join(",".join(f"{k}={v!r}" for k, v in ov.items()) for ov in spec.overlays)
    s["outputs"] = ",".join(spec.outputs)
    q = spec.quadrature
    s.update(tol_abs=q.abs_tol, tol_rel=q.rel_tol, max_subdivisions=q.max_subdivisions, window_sigmas=q.window_sigmas)
    return s


def _eval_point(job):
    params, tau, qcfg = job
    return evaluate_cycle(params, tau, qcfg)


def _workers(n_jobs: int) -> int:
    env = os.environ.get("QIE_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"QIE_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_jobs))


def run_sweep(spec: SweepSpec) -> str:
    """Evaluate every (overlay, tau) point and return the full table text."""
    taus = spec.tau_grid.values()
    params_list = spec.overlay_params()
    jobs = [(p, t, spec.quadrature) for p in params_list for t in taus]
    ids = [i for i in range(len(params_list)) for _ in taus]
    n = _workers(len(jobs))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(_eval_point, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    else:
        results = [_eval_point(j) for j in jobs]

    buf = io.StringIO()
    s = _spec_settings(spec)
    for line in preamble("sweep", _settings_lines(s, _SWEEP_KEYS), params_list, spec.quadrature):
        buf.write(line + "\n")
    cols = ("overlay_id", "tau") + tuple(spec.outputs)
    buf.write(",".join(cols) + "\n")
    for i, m in zip(ids, results):
        buf.write(",".join(row_values(i, m, spec.outputs)) + "\n")
    return buf.getvalue()


def write_atomic(text: str, out_path: str) -> None:
    d = os.path.dirname(os.path.abspath(out_path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".qie-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        # mkstemp creates 0600; give the result the usual umask-derived mode
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


# ---------------------------------------------------------------- commands

def cmd_metrics(args) -> int:
    s = merged_settings(args)
    params = params_from(s)
    tau = s.get("tau", 0.0)
    if not tau >= 0:
        raise InvalidInput(f"tau must be >= 0, got {tau:g}")
    qcfg = quadrature_from(s)
    m = evaluate_cycle(params, tau, qcfg)
    inputs = {**_base(s), "tau": float(tau)}
    lines = preamble("metrics", _settings_lines(inputs, list(inputs)), [params], qcfg)
    text = "\n".join(lines) + "\n" + ",".join(COLUMNS) + "\n" + ",".join(row_values(0, m)) + "\n"
    if args.out:
        write_atomic(text, args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = sweep_spec_from(merged_settings(args))
    text = run_sweep(spec)
    if args.out:
        write_atomic(text, args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    s = merged_settings(args)
    base = _base(s)
    overlays = _overlays(s)
    taus = [float(t) for t in s.get("taus", "1,5,10").split(",") if t.strip()]
    if not taus or any(t <= 0 for t in taus):
        raise InvalidInput(f"taus must be positive, got {s.get('taus')!r}")
    explicit_T_M = args.T_M is not None or (args.config and "T_M_K" in read_config(args.config))
    if overlays:
        settings = [_apply_overlay(base, ov) for ov in overlays]
    elif explicit_T_M:
        settings = [base]
    else:
        settings = [{**base, "T_M_K": T_M} for T_M in (100.0, 300.0)]

    d = trotter.TrotterConfig()
    qcfg = quadrature_from(s)
    failures = 0
    print(f"# qiengine {__version__} verify")
    for st in settings:
        g = st.pop("g", s.get("g", 1.0))
        params = params_from(st)
        tcfg = trotter.TrotterConfig(
            n_steps=s.get("n_steps", d.n_steps),
            n_grid=s.get("n_grid", d.n_grid),
            p_halfwidth=s.get("p_halfwidth", d.p_halfwidth),
            tau_max=max(taus),
            g=g,
            splitting=s.get("splitting", d.splitting),
        )
        print(f"# params: T_S={params.T_S!r} K T_M={params.T_M!r} K delta_E={params.delta_E!r} meV g={g!r} "
              f"n_steps={tcfg.n_steps} n_grid={tcfg.grid_size(params.sigma)} splitting={tcfg.splitting}")
        for check in verify.run_suite([(params, t) for t in taus], tcfg, qcfg):
            print(check.line(), flush=True)
            failures += not check.passed
    print(f"# {'ALL PASS' if failures == 0 else f'{failures} FAILED'}")
    return EXIT_OK if failures == 0 else EXIT_VERIFY


# ---------------------------------------------------------------- argparse

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--T-S", dest="T_S", type=float, help="system bath temperature [K] (default 300)")
    p.add_argument("--T-M", dest="T_M", type=float, help="meter temperature [K] (default 300)")
    gap = p.add_mutually_exclusive_group()
    gap.add_argument("--delta-E", dest="delta_E", type=float, help="level spacing [meV]")
    gap.add_argument("--delta-E-rel", dest="delta_E_rel", type=float, help="level spacing in units of k_B T_S (default 1)")
    p.add_argument("--overlay", action="append", metavar="KEY=VALUE,...",
                   help="parameter override set; repeat for several curves")
    p.add_argument("--tol-rel", dest="tol_rel", type=float)
    p.add_argument("--tol-abs", dest="tol_abs", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qie", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qiengine {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("metrics", help="all cycle metrics at one tau")
    _common(m)
    m.add_argument("--tau", type=float, help="dimensionless measurement time g t_m / sqrt(k_B Theta) (default 0)")

    s = sub.add_parser("sweep", help="metrics over a tau grid, one block per overlay")
    _common(s)
    s.add_argument("--tau-start", dest="tau_start", type=float)
    s.add_argument("--tau-stop", dest="tau_stop", type=float)
    s.add_argument("--tau-count", dest="tau_count", type=int)
    s.add_argument("--tau-log", dest="tau_log", action="store_true", help="log-spaced tau grid")
    s.add_argument("--outputs", help="comma-separated metric columns (default: all)")

    v = sub.add_parser("verify", help="Trotter oracle and closed-form cross-checks")
    _common(v)
    v.add_argument("--taus", help="comma-separated tau values (default 1,5,10)")
    v.add_argument("--n-steps", dest="n_steps", type=int)
    v.add_argument("--n-grid", dest="n_grid", type=int)
    v.add_argument("--splitting", choices=("strang", "lie"))
    return ap


COMMANDS = {"metrics": cmd_metrics, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidInput) as e:
        print(f"qie: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (NonConvergence, IdentityViolation, trotter.AliasingDetected, trotter.GridTooNarrow) as e:
        print(f"qie: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
