"""Flat key-value configuration for the pipeline.

Every tunable number in the package appears here exactly once, grouped by a
stage prefix (``plant.``, ``pid.``, ``recovery.``, ``sample.``, ``train.``,
``dist.``, ``embed.``, ``map.``, ``grid.``, ``prior.``, ``adapt.``,
``episode.``).  Config files are plain text, one ``key = value`` per line,
``#`` starts a comment.  Values are parsed with the type of the default.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


DEFAULTS: dict[str, float | int | str] = {
    # nominal plant
    "plant.mass": 1.0,                  # kg
    "plant.max_lift_force": 200.0,      # N
    "plant.inertia_xx": 4.856e-3,       # kg m^2
    "plant.inertia_yy": 4.856e-3,
    "plant.inertia_zz": 8.801e-3,
    "plant.arm_length": 0.225,          # m
    "plant.thrust_coeff": 2.980e-6,
    "plant.drag_coeff": 1.140e-7,
    "plant.linear_drag": 0.25,          # N s/m, isotropic
    "plant.gravity": 9.81,              # m/s^2
    # real plant differs only in mass and lift ceiling
    "plant.real_mass": 0.8,
    "plant.real_max_lift_force": 145.0,
    # corrective PID
    "pid.height_p": 1.5,
    "pid.height_i": 0.0,
    "pid.height_d": 2.5,
    "pid.attitude_p": 6.0,
    "pid.attitude_i": 0.0,
    "pid.attitude_d": 1.75,
    # recovery simulation
    "recovery.dt": 0.01,                # s
    "recovery.horizon": 10.0,           # s
    "recovery.hover_target_z": 2.0,     # m
    "recovery.tol_pos_z": 0.1,          # m
    "recovery.tol_vel": 0.1,            # m/s
    "recovery.tol_rate": 0.1,           # rad/s
    "recovery.tol_tilt": 0.05,          # rad
    "recovery.divergence_norm": 1000.0,
    # initial-state sampling box
    "sample.pos_xy": 0.0,               # p_x = p_y fixed
    "sample.pos_z": 2.0,                # m, fixed
    "sample.angle_min": 0.0,            # rad
    "sample.angle_max": 6.283185307179586,
    "sample.vel_min": -3.0,             # m/s
    "sample.vel_max": 3.0,
    "sample.rate_min": -10.0,           # rad/s
    "sample.rate_max": 10.0,
    # training dataset
    "train.k_t": 10000,
    "train.seed": 0,
    # trajectory distances
    "dist.downsample_len": 50,
    "dist.band_fraction": 0.1,          # Sakoe-Chiba band, fraction of longer length; 0 disables
    "dist.delta": 0.01,                 # label mismatch distance bump
    "dist.weights": "raw",              # per-dimension scaling: "raw" = all ones
    # embedding
    "embed.perplexity": 40.0,
    "embed.search_tol": 1e-4,
    "embed.out_dim": 2,
    "embed.iters": 1000,
    "embed.learning_rate": 200.0,
    "embed.early_exaggeration": 12.0,
    "embed.early_exaggeration_iters": 250,
    "embed.momentum_initial": 0.5,
    "embed.momentum_final": 0.8,
    "embed.momentum_switch_iter": 250,
    "embed.init_std": 1e-4,
    "embed.seed": 1,
    "embed.record_kl_every": 0,         # 0 = only final KL
    # state mapping network
    "map.hidden": 128,
    "map.epochs": 500,
    "map.batch_size": 128,
    "map.learning_rate": 1e-3,
    "map.angle_sincos": 0,              # 1 expands each angle to (sin, cos)
    "map.seed": 2,
    # simplified-state grid
    "grid.y_min": -30.0,
    "grid.y_max": 30.0,
    "grid.step": 1.0,
    "grid.p_t": 0.6,
    # physical-feature baseline grid
    "grid.baseline_min": -3.0,
    "grid.baseline_max": 3.0,
    "grid.baseline_step": 0.25,
    "grid.baseline_safe_box": 0.5,      # conservative init inside |v| <= box
    "grid.baseline_safe_value": 0.6,
    # prior construction
    "prior.mu_ini": 0.4,
    "prior.k_min": 3,
    "prior.b_ini_safe": 0.05,
    "prior.b_ini_unsafe": 0.55,
    "prior.b_ini_mu": 0.4,
    # online adaptation
    "adapt.mu_min": 0.1,
    "adapt.p_th": 0.3,
    "adapt.alpha": 3e5,
    "adapt.beta": 0.3,
    "adapt.gamma": 0.4,
    "adapt.k_u": 20,
    "adapt.iterations": 100,
    "adapt.seed": 3,
    "adapt.gpr_prior_mean": 0.5,
    "adapt.gpr_signal_var": 0.25,
    "adapt.gpr_lengthscale": 2.0,
    "adapt.gpr_noise_var": 0.01,
    # supervised episodes
    "episode.max_time": 10.0,           # s
    "episode.policy_scale": 0.2,        # motor perturbation, fraction of hover trim
    "episode.count": 20,
    "episode.seed": 4,
}


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return dict(DEFAULTS)


def _parse_value(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc
    return raw


def parse_config_text(text: str, base: dict | None = None) -> dict:
    """Parse ``key = value`` lines on top of the defaults (or ``base``)."""
    cfg = dict(DEFAULTS) if base is None else dict(base)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        cfg[key] = _parse_value(key, raw)
    return cfg


def load_config(path: str | Path | None = None) -> dict:
    if path is None:
        return default_config()
    return parse_config_text(Path(path).read_text())


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` strings (CLI ``--set``) on top of ``cfg``."""
    out = dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def config_fingerprint(cfg: dict) -> str:
    """Stable hash of a resolved configuration."""
    canon = json.dumps({k: cfg[k] for k in sorted(cfg)}, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_config(cfg: dict, path: str | Path) -> None:
    lines = [f"{key} = {cfg[key]}" for key in sorted(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")
