"""JSON run configuration with unit-suffixed keys and line-precise validation.

Minimal document::

    {"drying": {"T_inf_C": 60, "RH_inf": 0.1},
     "droplet": {"volume_ul": 1.0},
     "flow": {"kind": "stokes", "V_inf_m_per_s": 0.4}}

Everything else has defaults. A ``run_meta.json`` written by ``simulate`` can
be loaded directly; its ``config`` block is used.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .flowfields import model_from_dict
from .geometry import GRID_PRESETS, build_grid
from .physics import DryingState, MaterialParams
from .timeloop import SolverConfig, volume_to_radius


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        loc = f"{source}:{line}" if line is not None else source
        super().__init__(f"{loc}: {message}")


MATERIAL_KEYS = {
    "rho_d_kg_m3": "rho_d",
    "rho_g_kg_m3": "rho_g",
    "cp_g_J_per_kg_K": "cp_g",
    "k_g_W_per_m_K": "k_g",
    "D_v_m2_per_s": "D_v",
    "Lambda_J_per_kg": "Lambda",
    "M_w_kg_per_mol": "M_w",
    "R_gas_J_per_mol_K": "R_gas",
    "beta": "beta",
    "C_hk_m_per_s": "C_hk",
}

SOLVER_KEYS = {
    "dt_s": "dt",
    "t_end_s": "t_end",
    "R_min_frac": "R_min_frac",
    "nonlinear_mode": "nonlinear_mode",
    "newton_tol": "newton_tol",
    "newton_max": "newton_max",
    "picard_max": "picard_max",
    "scheme": "scheme",
    "initial_fields": "initial_fields",
    "max_steps": "max_steps",
    "check_invariants": "check_invariants",
    "audit_m_matrix": "audit_m_matrix",
}

GRID_KEYS = ("preset", "n_theta", "n_r", "r_out", "stretch")
FLOW_KEYS = ("kind", "V_inf_m_per_s", "SPL_dB", "A_Pa", "omega_rad_s", "c0_m_s")
DRYING_KEYS = ("T_inf_C", "RH_inf", "T_ref_C")
NONDIM_DRYING_KEYS = ("T_inf", "RH_inf", "rho_star", "slope")
DROPLET_KEYS = ("volume_ul", "R0_m", "R0")
OUTPUT_KEYS = ("dir", "snapshots_every")
TOP_KEYS = ("mode", "label", "material", "drying", "droplet", "flow", "grid", "solver", "output")

DEFAULT_GRID = dict(GRID_PRESETS["desk"])


class _Locator:
    """Maps dotted key paths to source lines by scanning the raw text."""

    def __init__(self, text: str):
        self.text = text

    def line(self, *path: str) -> int | None:
        pos = 0
        found = None
        for key in path:
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(self.text, pos)
            if m is None:
                break
            pos = m.end()
            found = m.start()
        if found is None:
            return None
        return self.text.count("\n", 0, found) + 1


def _number(v, where, err, positive=False, integer=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise err(f"{where} must be a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise err(f"{where} must be an integer, got {v!r}")
    if not math.isfinite(v):
        raise err(f"{where} must be finite")
    if positive and not v > 0:
        raise err(f"{where} must be positive, got {v!r}")
    return int(v) if integer else float(v)


@dataclass
class RunConfig:
    mode: str = "dimensional"
    label: str = "run"
    material: MaterialParams = field(default_factory=MaterialParams)
    drying: dict = field(default_factory=lambda: {"T_inf_C": 60.0, "RH_inf": 0.1})
    droplet: dict = field(default_factory=lambda: {"volume_ul": 1.0})
    flow: dict = field(default_factory=lambda: {"kind": "stagnant"})
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "out"
    snapshots_every: int = 0

    @property
    def nondimensional(self) -> bool:
        return self.mode == "nondimensional"

    @property
    def R0(self) -> float:
        d = self.droplet
        if "volume_ul" in d:
            return volume_to_radius(d["volume_ul"])
        return float(d.get("R0_m", d.get("R0")))

    def build_drying(self) -> DryingState:
        if self.nondimensional:
            return DryingState.nondimensional(**self.drying)
        return DryingState.from_conditions(self.material, self.drying["T_inf_C"],
                                           self.drying["RH_inf"],
                                           T_ref=self.drying.get("T_ref_C"))

    def build_model(self):
        return model_from_dict(self.flow, self.material.rho_g)

    def build_grid(self):
        return build_grid(**self.grid)

    def to_dict(self) -> dict:
        sol = self.solver.to_dict()
        solver = {k: sol[v] for k, v in SOLVER_KEYS.items()}
        out = {"mode": self.mode, "label": self.label}
        if not self.nondimensional:
            m = self.material.to_dict()
            out["material"] = {k: m[v] for k, v in MATERIAL_KEYS.items()}
        out.update({"drying": dict(self.drying), "droplet": dict(self.droplet),
                    "flow": dict(self.flow), "grid": dict(self.grid), "solver": solver,
                    "output": {"dir": self.output_dir, "snapshots_every": self.snapshots_every}})
        return out


def parse_config(doc: dict, text: str | None = None, source: str = "<config>",
                 prefix: tuple = ()) -> RunConfig:
    """Validate a decoded config document; errors carry the source line when known.

    ``prefix`` is the key path of ``doc`` inside the larger document ``text``.
    """
    text = json.dumps(doc, indent=2) if text is None else text
    loc = _Locator(text)
    if isinstance(doc, dict) and "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]  # run_meta.json
        prefix = (*prefix, "config")

    def err_at(*path):
        def make(msg):
            return ConfigError(msg, loc.line(*prefix, *path), source)
        return make

    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object", 1, source)
    for k in doc:
        if k not in TOP_KEYS:
            raise err_at(k)(f"unknown key {k!r}")

    def section(name, allowed):
        sec = doc.get(name, {})
        if sec is None:
            sec = {}
        if not isinstance(sec, dict):
            raise err_at(name)(f"{name} must be an object")
        for k in sec:
            if k not in allowed:
                raise err_at(name, k)(f"unknown key {name}.{k}")
        return sec

    cfg = RunConfig()
    mode = doc.get("mode", "dimensional")
    if mode not in ("dimensional", "nondimensional"):
        raise err_at("mode")(f"mode must be 'dimensional' or 'nondimensional', got {mode!r}")
    cfg.mode = mode
    cfg.label = str(doc.get("label", "run"))

    # material
    mat = section("material", MATERIAL_KEYS)
    if mode == "nondimensional":
        if mat:
            raise err_at("material")("nondimensional mode fixes every coefficient to 1; drop 'material'")
        cfg.material = MaterialParams.unit()
    else:
        kw = {}
        for k, v in mat.items():
            kw[MATERIAL_KEYS[k]] = _number(v, f"material.{k}", err_at("material", k),
                                           positive=True, allow_none=(k == "C_hk_m_per_s"))
        if "beta" in kw and not kw["beta"] <= 1.0:
            raise err_at("material", "beta")("material.beta must lie in (0, 1]")
        try:
            cfg.material = MaterialParams(**kw)
        except ValueError as exc:
            raise err_at("material")(str(exc)) from exc

    # drying
    if mode == "nondimensional":
        dry = section("drying", NONDIM_DRYING_KEYS)
        cfg.drying = {k: _number(v, f"drying.{k}", err_at("drying", k)) for k, v in dry.items()}
    else:
        dry = section("drying", DRYING_KEYS) or dict(cfg.drying)
        out = {}
        for k in ("T_inf_C", "RH_inf"):
            if k not in dry:
                raise err_at("drying")(f"drying.{k} is required")
            out[k] = _number(dry[k], f"drying.{k}", err_at("drying", k))
        if not 0.0 < out["RH_inf"] <= 1.0:
            raise err_at("drying", "RH_inf")("drying.RH_inf must lie in (0, 1]")
        if dry.get("T_ref_C") is not None:
            out["T_ref_C"] = _number(dry["T_ref_C"], "drying.T_ref_C", err_at("drying", "T_ref_C"))
        cfg.drying = out
    try:
        drying_state = cfg.build_drying()
    except ValueError as exc:
        raise err_at("drying")(str(exc)) from exc

    # droplet
    drop = section("droplet", DROPLET_KEYS)
    if not drop:
        drop = {"volume_ul": 1.0} if mode == "dimensional" else {"R0": 1.0}
    if len(drop) != 1:
        raise err_at("droplet")("give exactly one of droplet.volume_ul, droplet.R0_m, droplet.R0")
    (k, v), = drop.items()
    if k == "R0" and mode == "dimensional":
        raise err_at("droplet", k)("droplet.R0 (unitless) is for nondimensional mode; use R0_m")
    cfg.droplet = {k: _number(v, f"droplet.{k}", err_at("droplet", k), positive=True)}

    # flow
    flow = section("flow", FLOW_KEYS)
    flow = dict(flow) or {"kind": "stagnant"}
    kind = flow.get("kind", "stagnant")
    if kind not in ("stagnant", "stokes", "acoustic"):
        raise err_at("flow", "kind")(f"unknown flow kind {kind!r}")
    flow["kind"] = kind
    for k, v in flow.items():
        if k != "kind":
            _number(v, f"flow.{k}", err_at("flow", k), positive=(k != "V_inf_m_per_s"))
    allowed = {"stagnant": set(), "stokes": {"V_inf_m_per_s"},
               "acoustic": {"SPL_dB", "A_Pa", "omega_rad_s", "c0_m_s"}}[kind]
    for k in flow:
        if k != "kind" and k not in allowed:
            raise err_at("flow", k)(f"flow.{k} does not apply to {kind} flow")
    if kind == "stokes" and "V_inf_m_per_s" not in flow:
        raise err_at("flow")("stokes flow needs flow.V_inf_m_per_s")
    if kind == "acoustic" and ("SPL_dB" in flow) == ("A_Pa" in flow):
        raise err_at("flow")("acoustic flow needs exactly one of flow.SPL_dB or flow.A_Pa")
    cfg.flow = flow
    try:
        cfg.build_model()
    except ValueError as exc:
        raise err_at("flow")(str(exc)) from exc

    # grid
    grid = section("grid", GRID_KEYS)
    g = dict(DEFAULT_GRID)
    if "preset" in grid:
        if grid["preset"] not in GRID_PRESETS:
            raise err_at("grid", "preset")(f"unknown grid preset {grid['preset']!r}; "
                                           f"choose from {sorted(GRID_PRESETS)}")
        g = dict(GRID_PRESETS[grid["preset"]])
    for k, v in grid.items():
        if k == "preset":
            continue
        g[k] = _number(v, f"grid.{k}", err_at("grid", k), positive=True,
                       integer=k in ("n_theta", "n_r"))
    cfg.grid = g
    try:
        cfg.build_grid()
    except ValueError as exc:
        raise err_at("grid")(str(exc)) from exc

    # solver
    sol = section("solver", SOLVER_KEYS)
    kw = {}
    for k, v in sol.items():
        name = SOLVER_KEYS[k]
        e = err_at("solver", k)
        if name in ("nonlinear_mode", "scheme", "initial_fields"):
            if not isinstance(v, str):
                raise e(f"solver.{k} must be a string")
            kw[name] = v
        elif name in ("check_invariants", "audit_m_matrix"):
            if not isinstance(v, bool):
                raise e(f"solver.{k} must be true or false")
            kw[name] = v
        elif name == "t_end":
            kw[name] = math.inf if v is None else _number(v, f"solver.{k}", e, positive=True)
        else:
            kw[name] = _number(v, f"solver.{k}", e, positive=True,
                               integer=name in ("newton_max", "picard_max", "max_steps"))
    try:
        cfg.solver = SolverConfig(**kw)
    except ValueError as exc:
        bad = next((k for k in sol if SOLVER_KEYS[k] in str(exc)), None)
        raise (err_at("solver", bad) if bad else err_at("solver"))(str(exc)) from exc

    out = section("output", OUTPUT_KEYS)
    cfg.output_dir = str(out.get("dir", "out"))
    cfg.snapshots_every = _number(out.get("snapshots_every", 0), "output.snapshots_every",
                                  err_at("output", "snapshots_every"), integer=True)
    if cfg.snapshots_every < 0:
        raise err_at("output", "snapshots_every")("output.snapshots_every must be >= 0")

    # cross checks against the derived drying state
    if mode == "dimensional" and drying_state.rho_inf > drying_state.rho_star:
        raise err_at("drying", "RH_inf")("far-field vapor density exceeds saturation")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from exc
    return parse_config(doc, text, str(path))


def load_sweep(path) -> tuple[RunConfig, list[dict]]:
    """Sweep file: ``{"base": <run config>, "members": [{"label", "flow"}, ...]}``.

    A plain run config is accepted too and paired with the default members.
    """
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from exc
    loc = _Locator(text)
    if isinstance(doc, dict) and "base" in doc:
        extra = set(doc) - {"base", "members"}
        if extra:
            k = sorted(extra)[0]
            raise ConfigError(f"unknown key {k!r}", loc.line(k), str(path))
        base = parse_config(doc["base"], text, str(path), prefix=("base",))
    else:
        base = parse_config(doc, text, str(path))
        doc = {}
    members = sweep_members(doc)
    for i, m in enumerate(members):
        if not isinstance(m, dict) or "flow" not in m:
            raise ConfigError(f"sweep member {i} needs a 'flow' object", loc.line("members"), str(path))
        trial = base.to_dict()
        trial["flow"] = m["flow"]
        try:
            parse_config(trial)
        except ConfigError as exc:
            raise ConfigError(f"sweep member {i}: {exc}", loc.line("members"), str(path)) from exc
        m.setdefault("label", f"member_{i}")
    return base, members


def sweep_members(doc: dict | None = None) -> list[dict]:
    """Flow variants for a sweep; the default reproduces the stagnant/Stokes/acoustic set."""
    if doc and "members" in doc:
        return list(doc["members"])
    return [
        {"label": "stagnant", "flow": {"kind": "stagnant"}},
        {"label": "stokes_40", "flow": {"kind": "stokes", "V_inf_m_per_s": 0.4}},
        {"label": "stokes_80", "flow": {"kind": "stokes", "V_inf_m_per_s": 0.8}},
        {"label": "acoustic_164", "flow": {"kind": "acoustic", "SPL_dB": 164.0}},
        {"label": "acoustic_166", "flow": {"kind": "acoustic", "SPL_dB": 166.0}},
    ]


def flow_param(flow: dict) -> tuple[str, float]:
    kind = flow.get("kind", "stagnant")
    if kind == "stokes":
        return kind, float(flow["V_inf_m_per_s"])
    if kind == "acoustic":
        return kind, float(flow["SPL_dB"]) if "SPL_dB" in flow else float(flow["A_Pa"])
    return kind, 0.0


__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "load_sweep", "sweep_members",
           "flow_param"]
