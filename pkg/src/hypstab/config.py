"""Run configuration: one JSON file with system, grid, controller, run blocks.

Parsing either returns a fully validated RunConfig or raises ConfigError
with a line-anchored message (JSON syntax) or a key-path-anchored message
(schema or validation).  `render` emits the normalized form; a rendered
config re-parses to equal objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .system import GridSpec, HyperbolicSystem, validate

__all__ = ["ConfigError", "ControllerConfig", "RunBlock", "RunConfig", "parse_config", "render_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ControllerConfig:
    mode: str = "full_state"
    delta: float | None = None
    l: float | None = None
    ic_preset: str = "sin_pi"
    ic_amplitudes: tuple | None = None


@dataclass(frozen=True)
class RunBlock:
    t_end: float = 3.0
    snapshot_times: tuple = ()
    out_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    system: HyperbolicSystem
    grid: GridSpec
    controller: ControllerConfig
    run: RunBlock


def _need(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"config error at {where}: missing key '{key}'")
    return block[key]


def _matrix(block: dict, key: str, where: str):
    val = _need(block, key, where)
    try:
        return np.array(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config error at {where}.{key}: {exc}") from exc


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config error: top level must be an object")

    sysblock = _need(raw, "system", "top level")
    system = HyperbolicSystem(
        lam=_matrix(sysblock, "lambda", "system").ravel(),
        mu=_matrix(sysblock, "mu", "system").ravel(),
        sigma_pp=_matrix(sysblock, "sigma_pp", "system"),
        sigma_pm=_matrix(sysblock, "sigma_pm", "system"),
        sigma_mp=_matrix(sysblock, "sigma_mp", "system"),
        sigma_mm=_matrix(sysblock, "sigma_mm", "system"),
        q0=_matrix(sysblock, "q0", "system"),
        r1=_matrix(sysblock, "r1", "system"),
    )
    report = validate(system)
    if not report.ok:
        raise ConfigError("; ".join(report.violations))

    gridblock = raw.get("grid", {})
    try:
        grid = GridSpec(
            nx=int(gridblock.get("nx", 400)),
            cfl=float(gridblock.get("cfl", 0.9)),
            kernel_nx=int(gridblock.get("kernel_nx", 129)),
            picard_tol=float(gridblock.get("picard_tol", 1e-10)),
            picard_max_iter=int(gridblock.get("picard_max_iter", 200)),
        )
    except ValueError as exc:
        raise ConfigError(f"config error at grid: {exc}") from exc

    cblock = raw.get("controller", {})
    mode = cblock.get("mode", "full_state")
    if mode not in ("open_loop", "full_state", "output_feedback"):
        raise ConfigError(f"config error at controller.mode: unknown mode {mode!r}")
    icblock = cblock.get("ic", {"preset": "sin_pi"})
    preset = icblock.get("preset", "sin_pi")
    amplitudes = icblock.get("amplitudes")
    if preset not in ("sin_pi", "zero"):
        raise ConfigError(f"config error at controller.ic.preset: unknown preset {preset!r}")
    if amplitudes is not None:
        amplitudes = tuple(float(a) for a in amplitudes)
        if len(amplitudes) != system.n + system.m:
            raise ConfigError(
                "config error at controller.ic.amplitudes: "
                f"need {system.n + system.m} entries, got {len(amplitudes)}"
            )
    controller = ControllerConfig(
        mode=mode,
        delta=None if cblock.get("delta") is None else float(cblock["delta"]),
        l=None if cblock.get("l") is None else float(cblock["l"]),
        ic_preset=preset,
        ic_amplitudes=amplitudes,
    )

    rblock = raw.get("run", {})
    run = RunBlock(
        t_end=float(rblock.get("t_end", 3.0)),
        snapshot_times=tuple(float(t) for t in rblock.get("snapshot_times", ())),
        out_dir=str(rblock.get("out_dir", "out")),
    )
    if run.t_end < 0:
        raise ConfigError("config error at run.t_end: must be >= 0")
    return RunConfig(system=system, grid=grid, controller=controller, run=run)


def render_config(cfg: RunConfig) -> str:
    """Normalized JSON echo; re-parses to the same validated objects."""
    s = cfg.system
    doc = {
        "system": {
            "lambda": s.lam.tolist(),
            "mu": s.mu.tolist(),
            "sigma_pp": s.sigma_pp.tolist(),
            "sigma_pm": s.sigma_pm.tolist(),
            "sigma_mp": s.sigma_mp.tolist(),
            "sigma_mm": s.sigma_mm.tolist(),
            "q0": s.q0.tolist(),
            "r1": s.r1.tolist(),
        },
        "grid": {
            "nx": cfg.grid.nx,
            "cfl": cfg.grid.cfl,
            "kernel_nx": cfg.grid.kernel_nx,
            "picard_tol": cfg.grid.picard_tol,
            "picard_max_iter": cfg.grid.picard_max_iter,
        },
        "controller": {
            "mode": cfg.controller.mode,
            "delta": cfg.controller.delta,
            "l": cfg.controller.l,
            "ic": (
                {"preset": cfg.controller.ic_preset}
                if cfg.controller.ic_amplitudes is None
                else {"preset": cfg.controller.ic_preset, "amplitudes": list(cfg.controller.ic_amplitudes)}
            ),
        },
        "run": {
            "t_end": cfg.run.t_end,
            "snapshot_times": list(cfg.run.snapshot_times),
            "out_dir": cfg.run.out_dir,
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def initial_condition_from(cfg: RunConfig):
    from .sim import default_initial_condition

    if cfg.controller.ic_preset == "zero" and cfg.controller.ic_amplitudes is None:
        amps = np.zeros(cfg.system.n + cfg.system.m)
        return default_initial_condition(cfg.system, amps)
    return default_initial_condition(cfg.system, cfg.controller.ic_amplitudes)
