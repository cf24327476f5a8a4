"""Flat key = value run configuration.

The file format is plain text, one ``section.key = value`` per line, with
``#`` comments.  Every key can be overridden from the command line.  The
same canonical dump that seeds the manifest hash is also what two identical
runs compare equal on.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .evolution import IntegratorConfig
from .noise import NoiseConfig
from .pipeline import ProtocolConfig
from .recovery import RecoveryConfig
from .spin_model import ModelParams

__all__ = [
    "parse_config_text",
    "build_protocol_config",
    "canonical_dump",
    "config_hash",
    "DEFAULTS",
    "TABLE_FIELDS",
]

# The ten stopping fields of the reference statistics run.
TABLE_FIELDS = (
    0.5004, 0.4482, 0.3976, 0.3561, 0.3065,
    0.2560, 0.2055, 0.1545, 0.1046, 0.0625,
)

# Ramp time constant calibrated so the hold-window signal carries the
# intended excitation structure; see the README calibration notes.
DEFAULT_TAU_RAMP = 275.0

DEFAULTS: dict[str, str] = {
    "model.n_part": "400",
    "model.j0": "1.0",
    "model.b0": "2.0",
    "model.tau_ramp": str(DEFAULT_TAU_RAMP),
    "integrator.dt": "0.25",
    "integrator.method": "cfet4",
    "noise.enabled": "true",
    "noise.tau_d": "25.0",
    "noise.n_meas": "10000",
    "recovery.n_step": "2048",
    "recovery.m_step": "200",
    "recovery.tau_rel_min": "0.05",
    "recovery.tau_rel_max": "1.0",
    "recovery.tau_points": "20",
    "recovery.epsilon": "1e-6",
    "recovery.max_iter": "1000",
    "recovery.debias": "false",
    "recovery.peak_floor_rel": "0.01",
    "recovery.refine": "true",
    "recovery.sampling": "consecutive",
    "protocol.b_stops": ", ".join(f"{b:.4f}" for b in TABLE_FIELDS),
    "protocol.n_realizations": "100",
    "protocol.dt_meas": "0.5",
    "protocol.n_lines": "6",
    "protocol.match_window": "0.05",
    "protocol.high_margin": "0.2",
    "protocol.seed": "12345",
    "protocol.threads": "0",
    "protocol.output_dir": "out",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; later keys win, comments ignored."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ValueError(f"line {ln}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _as_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def build_protocol_config(overrides: dict[str, str] | None = None) -> ProtocolConfig:
    """Merge DEFAULTS with overrides and build the typed config."""
    kv = dict(DEFAULTS)
    if overrides:
        for key in overrides:
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
        kv.update(overrides)

    seed = int(kv["protocol.seed"])
    model = ModelParams(
        n_part=int(kv["model.n_part"]),
        j0=float(kv["model.j0"]),
        b0=float(kv["model.b0"]),
        tau_ramp=float(kv["model.tau_ramp"]),
    )
    integrator = IntegratorConfig(
        dt=float(kv["integrator.dt"]), method=kv["integrator.method"]
    )
    noise = None
    if _as_bool(kv["noise.enabled"]):
        noise = NoiseConfig(
            tau_d=float(kv["noise.tau_d"]),
            n_meas=int(kv["noise.n_meas"]),
            seed=seed,
        )
    recovery = RecoveryConfig(
        n_step=int(kv["recovery.n_step"]),
        m_step=int(kv["recovery.m_step"]),
        tau_grid=np.geomspace(
            float(kv["recovery.tau_rel_min"]),
            float(kv["recovery.tau_rel_max"]),
            int(kv["recovery.tau_points"]),
        ),
        epsilon=float(kv["recovery.epsilon"]),
        max_iter=int(kv["recovery.max_iter"]),
        seed=seed,
        debias=_as_bool(kv["recovery.debias"]),
        peak_floor_rel=float(kv["recovery.peak_floor_rel"]),
        refine=_as_bool(kv["recovery.refine"]),
    )
    b_stops = tuple(
        float(tok) for tok in kv["protocol.b_stops"].replace(",", " ").split()
    )
    return ProtocolConfig(
        model=model,
        integrator=integrator,
        noise=noise,
        recovery=recovery,
        b_stops=b_stops,
        n_realizations=int(kv["protocol.n_realizations"]),
        output_dir=kv["protocol.output_dir"],
        seed=seed,
        dt_meas=float(kv["protocol.dt_meas"]),
        n_lines=int(kv["protocol.n_lines"]),
        match_window=float(kv["protocol.match_window"]),
        high_margin=float(kv["protocol.high_margin"]),
        threads=int(kv["protocol.threads"]),
        sampling=kv["recovery.sampling"],
    )


def canonical_dump(overrides: dict[str, str] | None = None) -> str:
    """Full effective configuration, sorted, one key = value per line."""
    kv = dict(DEFAULTS)
    if overrides:
        kv.update(overrides)
    return "\n".join(f"{k} = {kv[k]}" for k in sorted(kv)) + "\n"


def config_hash(dump: str) -> str:
    return hashlib.sha256(dump.encode()).hexdigest()
