"""Command-line front end.

Every subcommand reads one JSON run configuration (``--config``), validates it
against :data:`CONFIG_SCHEMA` before computing anything, and writes its
outputs under ``--out``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical event during a simulation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, analysis, controllers, energy, sim, transcription, verify
from .controllers import PdGains
from .errors import IdaError, IntegrationError, NotFoundError, SingularityError
from .model import PhysicalParams, equilibrium_for, normalize

log = logging.getLogger("ida_buckboost")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_range = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONTROLLER_SCHEMA = _obj({
    "kind": {"enum": ["ida", "adaptive_ida", "pd", "open_loop"]},
    "k1": {"type": "number"},
    "kp": {"type": "number"},
    "kd": {"type": "number"},
    "u": {"type": "number", "minimum": 0, "maximum": 1},
}, required=["kind"])

SCENARIO_SCHEMA = _obj({
    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "controller": CONTROLLER_SCHEMA,
    "initial_state": _pair,
    "duration": {"type": "number", "minimum": 0},
    "step": _pos,
    "d_schedule": {"type": "array", "items": _pair, "minItems": 1},
    "gamma": _pos,
    "d_hat_init": {"type": "number"},
}, required=["name", "controller", "initial_state", "duration"])

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    **_obj({
        "plant": _obj({"L": _pos, "C": _pos, "E": _pos, "P": _pos}, required=["L", "C", "E", "P"]),
        "D": _pos,
        "x2_star": _pos,
        "k1": {"type": "number"},
        "k2": {"type": "number"},
        "pd_gains": _obj({"kp": {"type": "number"}, "kd": {"type": "number"}}, required=["kp", "kd"]),
        "scenarios": {"type": "array", "items": SCENARIO_SCHEMA},
        "phase": _obj({
            "controller": CONTROLLER_SCHEMA,
            "grid": _obj({"x1": _range, "x2": _range, "n": {
                "type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 2}},
                required=["x1", "x2", "n"]),
            "initial_states": {"type": "array", "items": _pair},
            "duration": {"type": "number", "minimum": 0},
            "step": _pos,
            "level_fractions": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                           "maximum": 1}},
            "levels": {"type": "array", "items": {"type": "number"}},
            "grid_resolution": {"type": "integer", "minimum": 10},
        }, required=["grid"]),
        "zerodyn": _obj({"x1": _range, "x2": _range, "samples": {"type": "integer", "minimum": 2}}),
        "region": _obj({"grid_resolution": {"type": "integer", "minimum": 10}}),
        "verify": _obj({"samples": {"type": "integer", "minimum": 1}, "box": _range,
                        "seed": {"type": "integer", "minimum": 0}}),
        "out_dir": {"type": "string"},
    }, required=["x2_star"]),
    "oneOf": [{"required": ["plant"]}, {"required": ["D"]}],
}


class ConfigError(Exception):
    pass


# --- configuration --------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(doc)
    return doc


def validate_config(doc) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  at /{'/'.join(map(str, e.absolute_path))}: {e.message}" for e in errors]
        raise ConfigError("config failed schema validation:\n" + "\n".join(lines))


class Run:
    """Quantities derived from a validated configuration."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.plant = PhysicalParams(**cfg["plant"]) if "plant" in cfg else None
        self.D = normalize(self.plant).D if self.plant else float(cfg["D"])
        self.x2_star = float(cfg["x2_star"])
        self.eq = equilibrium_for(self.x2_star, self.D)
        self.k1 = cfg.get("k1")
        self.pd_gains = PdGains(**cfg["pd_gains"]) if "pd_gains" in cfg else None

    def k2(self, k1=None, D=None) -> float:
        k1 = self.k1 if k1 is None else k1
        D = self.D if D is None else D
        if "k2" in self.cfg and D == self.D and k1 == self.k1:
            return float(self.cfg["k2"])
        return energy.compute_k2(equilibrium_for(self.x2_star, D), D, k1)

    def controller(self, spec: dict | None) -> sim.ControllerSpec:
        spec = spec or {"kind": "ida"}
        kind = spec["kind"]
        if kind in ("ida", "adaptive_ida"):
            k1 = spec.get("k1", self.k1)
            if k1 is None:
                raise ConfigError(f"{kind} controller needs k1")
            return sim.ControllerSpec(kind, self.x2_star, k1=k1)
        if kind == "pd":
            if "kp" in spec or "kd" in spec:
                gains = PdGains(spec.get("kp", 0.0), spec.get("kd", 0.0))
            elif self.pd_gains is not None:
                gains = self.pd_gains
            else:
                raise ConfigError("pd controller needs kp/kd or top-level pd_gains")
            return sim.ControllerSpec(kind, self.x2_star, pd_gains=gains)
        if "u" not in spec:
            raise ConfigError("open_loop controller needs u")
        u = float(spec["u"])
        return sim.ControllerSpec(kind, self.x2_star, u_signal=lambda tau: u)

    def check_gains(self, ctrl: sim.ControllerSpec, D_values) -> None:
        if ctrl.kind not in ("ida", "adaptive_ida"):
            return
        for D in D_values:
            energy.design_gains(equilibrium_for(self.x2_star, D), D, ctrl.k1, validate=True)


def _dump(obj) -> str:
    return json.dumps(_plain(obj), indent=2) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _fmt(v) -> str:
    return "" if v is None or not math.isfinite(v) else f"{float(v):.12g}"


def _write_rows(out: Path, name: str, header, rows) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


# --- subcommands ----------------------------------------------------------------------

def gains_report(run: Run) -> dict:
    eq, D = run.eq, run.D
    kp = energy.k1_prime(eq, D)
    slope = energy.det_slope(eq)
    threshold = energy.k1_det_threshold(eq, D)
    kpp = threshold if slope > 0 else None
    cone = controllers.pd_stability_cone(eq, D)
    doc = {
        "D": D,
        "x1_star": eq.x1_star,
        "x2_star": eq.x2_star,
        "u_star": eq.u_star,
        "k1_prime": kp,
        "k1_double_prime": kpp,
        "k1_min": max(kp, kpp) if kpp is not None else None,
        "det_slope": slope,
        "det_threshold": threshold,
        "k1_prime_printed": transcription.k1_prime(eq.x1_star, eq.x2_star, D),
        "k1_double_prime_printed": transcription.k1_double_prime(eq.x1_star, eq.x2_star, D),
    }
    if run.k1 is not None:
        doc["k1"] = run.k1
        doc["k2"] = run.k2()
        doc["k1_admissible"] = kpp is not None and run.k1 > max(kp, kpp)
    doc["pd_cone"] = {"m1": cone.m1, "b1": cone.b1, "m2": cone.m2, "b2": cone.b2}
    if run.pd_gains is not None:
        J = controllers.pd_jacobian(eq, D, run.pd_gains)
        doc["pd_gains"] = {
            "kp": run.pd_gains.kp, "kd": run.pd_gains.kd,
            "hurwitz_cone": controllers.pd_is_hurwitz(run.pd_gains, cone),
            "hurwitz_eigen": bool(np.all(np.linalg.eigvals(J).real < 0)),
        }
    notes = [
        f"PD cone intercept b1 = 1/(x2*(1+x2*)) = {cone.b1:.6g}; "
        f"the published value {transcription.PD_CONE_B1_PRINTED} does not follow from that formula.",
    ]
    if slope <= 0:
        notes.append("det(Hessian at x*) decreases with k1 here; k1'' is an upper bound, not a lower one.")
    doc["notes"] = notes
    return doc


def cmd_gains(run: Run, args) -> int:
    doc = gains_report(run)
    text = _dump(doc)
    _write(args.out, "gains.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _scenario(run: Run, sc: dict) -> sim.Scenario:
    ctrl = run.controller(sc["controller"])
    sched = [tuple(map(float, p)) for p in sc.get("d_schedule", [[0.0, run.D]])]
    gamma = sc.get("gamma")
    if ctrl.kind == "adaptive_ida" and gamma is None:
        raise ConfigError(f"scenario {sc['name']}: adaptive_ida needs gamma")
    run.check_gains(ctrl, [d for _, d in sched])
    return sim.Scenario(ctrl, tuple(sc["initial_state"]), sched, float(sc["duration"]),
                        step=float(sc.get("step", 1e-3)), gamma=gamma, d_hat_init=sc.get("d_hat_init"))


def cmd_simulate(run: Run, args) -> int:
    scenarios = run.cfg.get("scenarios") or []
    if not scenarios:
        raise ConfigError("no scenarios to simulate")
    if args.physical and run.plant is None:
        raise ConfigError("--physical needs plant parameters in the config")
    built = [(sc["name"], _scenario(run, sc)) for sc in scenarios]
    summary, code = [], EXIT_OK
    for name, s in built:
        tr = sim.simulate(s)
        _write(args.out, f"{name}.csv", tr.to_csv())
        if args.physical:
            _write(args.out, f"{name}_physical.csv", tr.to_csv(physical=run.plant))
        entry = {"name": name, "samples": len(tr), "event": tr.event, "event_tau": tr.event_tau,
                 "saturated_samples": tr.saturation_count}
        if len(tr):
            D_end = float(tr.d_true[-1])
            xs = equilibrium_for(run.x2_star, D_end)
            entry["final_state"] = tr.final_state.tolist()
            entry["final_error"] = float(np.hypot(*(tr.final_state - [xs.x1_star, xs.x2_star])))
        summary.append(entry)
        if tr.event:
            log.error("scenario %s: %s at tau=%s (%s)", name, tr.event, tr.event_tau, tr.event_message)
            code = EXIT_NUMERIC
    _write(args.out, "simulate_summary.json", _dump(summary))
    sys.stdout.write(_dump(summary))
    return code


def cmd_phase(run: Run, args) -> int:
    ph = run.cfg.get("phase")
    if ph is None:
        raise ConfigError("config has no phase section")
    ctrl = run.controller(ph.get("controller"))
    run.check_gains(ctrl, [run.D])
    (a1, b1), (a2, b2), (n1, n2) = ph["grid"]["x1"], ph["grid"]["x2"], ph["grid"]["n"]
    X1, X2 = np.meshgrid(np.linspace(a1, b1, n1), np.linspace(a2, b2, n2), indexing="ij")
    u_raw = ctrl.raw_array((X1, X2), run.D)
    F = sim.closed_loop_field((X1, X2), ctrl, run.D)
    rows = [(X1.flat[k], X2.flat[k], F[0].flat[k], F[1].flat[k], float(np.clip(u_raw.flat[k], 0, 1)),
             u_raw.flat[k]) for k in range(X1.size)]
    _write_rows(args.out, "phase_grid.csv", ("x1", "x2", "dx1", "dx2", "u_applied", "u_raw"), rows)

    code = EXIT_OK
    summary = {"equilibrium": [run.eq.x1_star, run.eq.x2_star], "controller": ctrl.kind}
    inits = ph.get("initial_states", [])
    if inits:
        tau, S, alive = sim.simulate_bundle(inits, ctrl, run.D, float(ph.get("duration", 60.0)),
                                            float(ph.get("step", 1e-2)))
        rows = [(j, tau[k], S[k, j, 0], S[k, j, 1]) for j in range(len(inits)) for k in range(len(tau))]
        _write_rows(args.out, "phase_trajectories.csv", ("trajectory", "tau", "x1", "x2"), rows)
        summary["trajectories_alive"] = alive.tolist()
        if not alive.all():
            code = EXIT_NUMERIC

    k1 = ctrl.k1 if ctrl.kind == "ida" else run.k1
    if k1 is not None:
        k2 = run.k2(k1)
        est = analysis.estimate_domain(run.eq, run.D, k1, k2, ph.get("grid_resolution", 400))
        h_star = est.h_star
        levels = [h_star + f * (est.c_star - h_star) for f in ph.get("level_fractions", [])]
        levels += list(ph.get("levels", []))
        levels.append(est.c_star)
        rows, lv = [], []
        for idx, c in enumerate(levels):
            try:
                poly = analysis.sublevel_contour(c, run.eq, run.D, k1, k2, est.box, est.resolution)
            except NotFoundError as exc:
                log.warning("%s", exc)
                lv.append({"index": idx, "c": c, "closed": False})
                continue
            lv.append({"index": idx, "c": c, "closed": True, "vertices": len(poly),
                       "inside_quadrant": bool(np.all(poly > 0))})
            rows.extend((idx, c, v, p[0], p[1]) for v, p in enumerate(poly))
        _write_rows(args.out, "phase_contours.csv", ("level", "c", "vertex", "x1", "x2"), rows)
        summary["c_star"] = est.c_star
        summary["levels"] = lv
        summary["saddle"] = None if est.saddle is None else list(est.saddle.x)
    _write(args.out, "phase_summary.json", _dump(summary))
    sys.stdout.write(_dump(summary))
    return code


def zerodyn_report(run: Run, samples=50, x1_range=None, x2_range=None, out: Path | None = None) -> dict:
    from . import numdiff

    eq, D = run.eq, run.D
    s_slope = analysis.zd_current_fixed_slope(eq, D)
    s_fd = numdiff.derivative(lambda v: float(analysis.zd_current_fixed(v, eq, D)), eq.x2_star)
    w_slope = analysis.zd_voltage_fixed_slope(eq, D)
    w_fd = numdiff.derivative(lambda v: float(analysis.zd_voltage_fixed(v, eq, D)), eq.x1_star)
    w_printed_at_eq = float(transcription.voltage_zero_dynamics(eq.x1_star, eq.x1_star, D))
    doc = {
        "current_fixed": {"slope": s_slope, "slope_fd": s_fd,
                          "slope_rel_error": abs(s_fd - s_slope) / abs(s_slope), "unstable": s_slope > 0},
        "voltage_fixed": {"slope": w_slope, "slope_fd": w_fd, "unstable": w_slope > 0,
                          "value_at_equilibrium": float(analysis.zd_voltage_fixed(eq.x1_star, eq, D))},
        "voltage_fixed_printed": {
            "value_at_equilibrium": w_printed_at_eq,
            "slope": transcription.voltage_zero_dynamics_slope(eq.x1_star, D),
            "matches_derivation": abs(w_printed_at_eq) < 1e-12,
            "note": "the published closed form 1 - (x1* - D)/x1 omits the D/x1 term and "
                    "does not vanish at x1*; the derived form 1 - x1*/x1 is used",
        },
    }
    if out is not None:
        x2 = np.linspace(*(x2_range or (0.5 * eq.x2_star, 1.5 * eq.x2_star)), samples)
        x1 = np.linspace(*(x1_range or (0.5 * eq.x1_star, 1.5 * eq.x1_star)), samples)
        _write_rows(out, "zerodyn_current.csv", ("x2", "s", "u"),
                    zip(x2, analysis.zd_current_fixed(x2, eq, D), analysis.zd_current_fixed_input(x2)))
        _write_rows(out, "zerodyn_voltage.csv", ("x1", "w", "w_printed", "u"),
                    zip(x1, analysis.zd_voltage_fixed(x1, eq, D), transcription.voltage_zero_dynamics(x1, eq.x1_star, D),
                        analysis.zd_voltage_fixed_input(x1, eq, D)))
    return doc


def cmd_zerodyn(run: Run, args) -> int:
    zc = run.cfg.get("zerodyn", {})
    doc = zerodyn_report(run, zc.get("samples", args.samples or 50), zc.get("x1"), zc.get("x2"), args.out)
    text = _dump(doc)
    _write(args.out, "zerodyn.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_region(run: Run, args) -> int:
    if run.k1 is None:
        raise ConfigError("region needs k1")
    run.check_gains(run.controller({"kind": "ida"}), [run.D])
    res = run.cfg.get("region", {}).get("grid_resolution", 400)
    k2 = run.k2()
    est = analysis.estimate_domain(run.eq, run.D, run.k1, k2, res)
    doc = est.to_dict()
    try:
        poly = analysis.sublevel_contour(est.c_star, run.eq, run.D, run.k1, k2, est.box, res)
        _write_rows(args.out, "region_contour.csv", ("vertex", "x1", "x2"),
                    ((k, p[0], p[1]) for k, p in enumerate(poly)))
        doc["contour_vertices"] = len(poly)
        doc["contour_inside_quadrant"] = bool(np.all(poly > 0))
    except NotFoundError as exc:
        log.warning("%s", exc)
    text = _dump(doc)
    _write(args.out, "region.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(run: Run, args) -> int:
    vc = run.cfg.get("verify", {})
    samples = args.samples or vc.get("samples", 1000)
    seed = args.seed if args.seed is not None else vc.get("seed", 0)
    box = tuple(vc.get("box", (0.1, 10.0)))
    k1 = run.k1 if run.k1 is not None else 0.01
    report = verify.run_all(run.eq, run.D, k1, run.k2(k1), samples=samples, seed=seed, box=box,
                            pd_gains=run.pd_gains)
    text = _dump(report)
    _write(args.out, "verify.json", text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


COMMANDS = {
    "gains": cmd_gains,
    "simulate": cmd_simulate,
    "phase": cmd_phase,
    "verify": cmd_verify,
    "zerodyn": cmd_zerodyn,
    "region": cmd_region,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ida-buckboost", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=None, help="output directory (default ./out)")
    p.add_argument("--physical", action="store_true", help="also write physical-unit trajectories")
    p.add_argument("--seed", type=int, default=None, help="seed for verification sample points")
    p.add_argument("--samples", type=int, default=None, help="number of verification sample points")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    if args.samples is not None and args.samples < 1:
        print("error: --samples must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.out is None:
            args.out = Path(cfg.get("out_dir", "out"))
        run = Run(cfg)
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularityError, IntegrationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IdaError as exc:
        # Bad parameter values surface as domain or precondition errors.
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
